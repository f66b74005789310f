"""Embedding specifications, the built-in catalog, and per-point jet frames."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence
from urllib.parse import unquote

import numpy as np

from . import exprlang
from .exprlang import Expr, ParseError
from .jets import Jet, compose, jet_det, jet_einsum, jet_matinv, variables

MAX_N = 3
MAX_M = 6
DEGENERATE_SQRT_G = 1e-8
DEFAULT_MARGIN = 1e-3
FRAME_ORDER = 3


class SpecError(ValueError):
    """Invalid embedding configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DegeneratePointError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingSpec:
    name: str
    n: int
    m: int
    coords: tuple[Expr, ...]
    density: Expr | None  # None means the canonical density sqrt(g)
    ambient: tuple[tuple[Expr, ...], ...] | None  # None means euclidean
    constants: Mapping[str, float]
    domain: tuple[tuple[float, float], ...]
    margin: float = DEFAULT_MARGIN

    @property
    def p(self) -> int:
        return self.m - self.n

    @property
    def euclidean(self) -> bool:
        return self.ambient is None

    def to_config(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "m": self.m,
            "coords": [exprlang.to_text(c) for c in self.coords],
            "density": "sqrt_g" if self.density is None else exprlang.to_text(self.density),
            "ambient": "euclidean" if self.ambient is None else
            [[exprlang.to_text(e) for e in row] for row in self.ambient],
            "constants": dict(self.constants),
            "domain": [list(d) for d in self.domain],
        }


_KEYS = {"name", "n", "m", "coords", "density", "ambient", "constants", "domain"}
_REQUIRED = ("n", "m", "coords", "domain")


def _parse_field(text, path: str) -> Expr:
    if not isinstance(text, str):
        raise SpecError(path, "expected an expression string")
    try:
        return exprlang.parse(text)
    except ParseError as exc:
        raise SpecError(path, str(exc)) from exc


def spec_from_dict(cfg: Mapping) -> EmbeddingSpec:
    if not isinstance(cfg, Mapping):
        raise SpecError("", "config must be a JSON object")
    unknown = sorted(set(cfg) - _KEYS)
    if unknown:
        raise SpecError(unknown[0], "unknown key")
    for k in _REQUIRED:
        if k not in cfg:
            raise SpecError(k, "missing required key")
    n, m = cfg["n"], cfg["m"]
    if not isinstance(n, int) or not isinstance(m, int):
        raise SpecError("n" if not isinstance(n, int) else "m", "must be an integer")
    if m - n < 1:
        raise SpecError("m", "codimension must be ≥ 1")
    if not 2 <= n <= MAX_N:
        raise SpecError("n", f"parameter dimension must be in 2..{MAX_N}")
    if m > MAX_M:
        raise SpecError("m", f"ambient dimension must be ≤ {MAX_M}")

    constants = cfg.get("constants", {})
    if not isinstance(constants, Mapping) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in constants.values()):
        raise SpecError("constants", "must map names to numbers")
    constants = {str(k): float(v) for k, v in constants.items()}

    known_consts = set(constants) | set(exprlang.BUILTIN_CONSTANTS)
    u_names = {f"u{a + 1}" for a in range(n)}
    x_names = {f"x{i + 1}" for i in range(m)}

    def check(e: Expr, path: str, allowed: set[str]) -> Expr:
        bad = exprlang.params_used(e) - allowed
        if bad:
            raise SpecError(path, f"parameter {sorted(bad)[0]} not allowed here")
        missing = exprlang.consts_used(e) - known_consts
        if missing:
            raise SpecError(path, f"unknown constant {sorted(missing)[0]!r}")
        return e

    coords = cfg["coords"]
    if not isinstance(coords, list) or len(coords) != m:
        raise SpecError("coords", f"expected a list of {m} expressions")
    coord_exprs = tuple(check(_parse_field(c, f"coords[{i}]"), f"coords[{i}]", u_names)
                        for i, c in enumerate(coords))

    density = cfg.get("density", "sqrt_g")
    dens_expr = None if density == "sqrt_g" else check(_parse_field(density, "density"), "density", u_names)

    ambient = cfg.get("ambient", "euclidean")
    amb = None
    if ambient != "euclidean":
        if not isinstance(ambient, list) or len(ambient) != m or any(
                not isinstance(r, list) or len(r) != m for r in ambient):
            raise SpecError("ambient", f"expected 'euclidean' or an {m}x{m} matrix of expressions")
        rows = [[check(_parse_field(ambient[i][j], f"ambient[{i}][{j}]"), f"ambient[{i}][{j}]", x_names)
                 for j in range(m)] for i in range(m)]
        for i in range(m):
            for j in range(i):
                if rows[i][j] != rows[j][i]:
                    raise SpecError(f"ambient[{i}][{j}]", "ambient metric must be symmetric")
        amb = tuple(tuple(rows[min(i, j)][max(i, j)] for j in range(m)) for i in range(m))

    domain = cfg["domain"]
    if not isinstance(domain, list) or len(domain) != n:
        raise SpecError("domain", f"expected {n} intervals")
    dom = []
    for a, iv in enumerate(domain):
        if not isinstance(iv, list) or len(iv) != 2 or not all(isinstance(v, (int, float)) for v in iv):
            raise SpecError(f"domain[{a}]", "expected [lo, hi]")
        lo, hi = float(iv[0]), float(iv[1])
        if not lo < hi:
            raise SpecError(f"domain[{a}]", "empty interval")
        dom.append((lo, hi))

    name = cfg.get("name", "custom")
    if not isinstance(name, str):
        raise SpecError("name", "must be a string")
    return EmbeddingSpec(name, n, m, coord_exprs, dens_expr, amb, constants, tuple(dom))


def load_spec(config_text: str) -> EmbeddingSpec:
    """Parse a JSON embedding config (see README for the schema)."""
    try:
        cfg = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise SpecError("", f"invalid JSON: {exc}") from exc
    return spec_from_dict(cfg)


# -- catalog ------------------------------------------------------------------

TWO_PI = 2 * math.pi

_CATALOG: dict[str, dict] = {
    "plane": dict(n=2, m=3, coords=["u1", "u2", "0"], params={},
                  domain=[[-1, 1], [-1, 1]]),
    "sphere": dict(n=2, m=3, params={"r": 1.0},
                   coords=["r*sin(u1)*cos(u2)", "r*sin(u1)*sin(u2)", "r*cos(u1)"],
                   domain=[[0, math.pi], [0, TWO_PI]]),
    "torus": dict(n=2, m=3, params={"R": 2.0, "r": 1.0},
                  coords=["(R+r*cos(u1))*cos(u2)", "(R+r*cos(u1))*sin(u2)", "r*sin(u1)"],
                  domain=[[0, TWO_PI], [0, TWO_PI]]),
    "graph2": dict(n=2, m=3, params={"f": "u1^2-u2^2"},
                   coords=["u1", "u2", "{f}"], domain=[[-1, 1], [-1, 1]]),
    "clifford": dict(n=2, m=4, params={},
                     coords=["cos(u1)/sqrt(2)", "sin(u1)/sqrt(2)", "cos(u2)/sqrt(2)", "sin(u2)/sqrt(2)"],
                     domain=[[0, TWO_PI], [0, TWO_PI]]),
    "s3": dict(n=3, m=4, params={"r": 1.0},
               coords=["r*sin(u1)*sin(u2)*cos(u3)", "r*sin(u1)*sin(u2)*sin(u3)",
                       "r*sin(u1)*cos(u2)", "r*cos(u1)"],
               domain=[[0, math.pi], [0, math.pi], [0, TWO_PI]]),
    "graph3": dict(n=3, m=4, params={"f": "(u1^2+u2^2+u3^2)/2"},
                   coords=["u1", "u2", "u3", "{f}"], domain=[[-1, 1], [-1, 1], [-1, 1]]),
}

CATALOG_NAMES = tuple(_CATALOG)


def catalog_entries() -> list[dict]:
    """Stable-ordered listing of the built-in embeddings."""
    return [{"name": k, "n": v["n"], "m": v["m"], "p": v["m"] - v["n"], "params": dict(v["params"])}
            for k, v in _CATALOG.items()]


def catalog_spec(name: str, **params) -> EmbeddingSpec:
    if name not in _CATALOG:
        raise SpecError("catalog", f"unknown catalog entry {name!r}")
    entry = _CATALOG[name]
    unknown = sorted(set(params) - set(entry["params"]))
    if unknown:
        raise SpecError(f"catalog:{name}", f"unknown parameter {unknown[0]!r}")
    vals = {**entry["params"], **params}
    exprs = {k: v for k, v in vals.items() if isinstance(entry["params"][k], str)}
    consts = {k: float(v) for k, v in vals.items() if not isinstance(entry["params"][k], str)}
    coords = [c.format(**{k: f"({v})" for k, v in exprs.items()}) if "{" in c else c
              for c in entry["coords"]]
    qual = ",".join(f"{k}={vals[k]}" for k in entry["params"])
    cfg = dict(name=f"{name}?{qual}" if qual else name, n=entry["n"], m=entry["m"],
               coords=coords, constants=consts, domain=entry["domain"])
    return spec_from_dict(cfg)


def resolve(ref: str) -> EmbeddingSpec:
    """``catalog:name?k=v,...`` or a path to a JSON config."""
    if ref.startswith("catalog:"):
        body = ref[len("catalog:"):]
        name, _, query = body.partition("?")
        params: dict = {}
        if query:
            for part in query.split(","):
                k, eq, v = part.partition("=")
                if not eq:
                    raise SpecError(ref, f"malformed parameter {part!r}")
                k, v = k.strip(), unquote(v.strip())
                kind = _CATALOG.get(name, {}).get("params", {}).get(k)
                if isinstance(kind, str):
                    params[k] = v
                else:
                    try:
                        params[k] = float(v)
                    except ValueError as exc:
                        raise SpecError(ref, f"parameter {k} must be a number") from exc
        return catalog_spec(name, **params)
    try:
        with open(ref, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SpecError(ref, f"cannot read config: {exc.strerror}") from exc
    return load_spec(text)


# -- frames -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PointFrame:
    """All jets needed downstream, evaluated at one parameter point."""

    spec: EmbeddingSpec
    u: tuple[float, ...]
    order: int
    density_mode: str
    x_jets: Jet                 # shape (m,), order 3
    rho_jet: Jet                # scalar, order >= 2
    sqrt_g_jet: Jet             # scalar, order 2
    gbar_jets: Jet              # shape (m, m) u-jets, order 3
    gamma_bar_jets: Jet         # shape (m, m, m) u-jets, order 2; [i, j, k] = Gamma^i_jk
    ambient_value: np.ndarray   # gbar_ij at x(u)
    gamma_bar: np.ndarray       # Gamma^i_jk at x(u)
    riemann_bar: np.ndarray     # R^i_jkl at x(u); R(d_k, d_l) d_j = R^i_jkl d_i
    e_jets: Jet = field(repr=False)  # shape (n, m), order 2; e_a^i = d_a x^i

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def p(self) -> int:
        return self.spec.p

    @property
    def tangent_basis(self) -> np.ndarray:
        return self.e_jets.value

    @property
    def x(self) -> np.ndarray:
        return self.x_jets.value

    @property
    def euclidean(self) -> bool:
        return self.spec.euclidean


def _ambient_jets(spec: EmbeddingSpec, x0: np.ndarray):
    """gbar and Gamma^i_jk as jets in the ambient coordinates around x0."""
    m = spec.m
    xs = variables(x0, FRAME_ORDER)
    env = {f"x{i + 1}": xs[i] for i in range(m)}
    g = Jet.stack([Jet.stack([exprlang.evaluate(spec.ambient[i][j], env, spec.constants)
                              for j in range(m)]) for i in range(m)])
    try:
        np.linalg.cholesky(g.value)
    except np.linalg.LinAlgError as exc:
        raise DegeneratePointError("ambient metric is not positive-definite at x(u)") from exc
    dg = g.gradient_jets()                 # [i, j, l] = d_l g_ij, order 2
    ginv = jet_matinv(g.truncate(2))
    # Gamma_ljk = (d_j g_lk + d_k g_lj - d_l g_jk) / 2
    lower = Jet(m, 2, 0.5 * (np.einsum("lkjc->ljkc", dg.c) + dg.c - np.einsum("jklc->ljkc", dg.c)))
    gamma = jet_einsum("il,ljk->ijk", ginv, lower)
    return g, gamma


def _riemann_from_gamma(gamma: Jet) -> np.ndarray:
    """R^i_jkl = d_k G^i_lj - d_l G^i_kj + G^i_ks G^s_lj - G^i_ls G^s_kj."""
    G = gamma.value
    dG = gamma.grad()  # [i, j, k, d] = d_d G^i_jk
    r = (np.einsum("iljk->ijkl", dG) - np.einsum("ikjl->ijkl", dG)
         + np.einsum("iks,slj->ijkl", G, G) - np.einsum("ils,skj->ijkl", G, G))
    return r


def frame_at(spec: EmbeddingSpec, u: Sequence[float], order: int = FRAME_ORDER,
             density: str | Expr | None = None) -> PointFrame:
    """Evaluate all jets at ``u``.

    ``density`` overrides the spec's density: ``"sqrt_g"``, ``"one"``, or an
    expression in the parameters.
    """
    if order != FRAME_ORDER:
        raise ValueError(f"frames are always built at order {FRAME_ORDER}")
    u = tuple(float(v) for v in u)
    if len(u) != spec.n:
        raise ValueError(f"point has {len(u)} coordinates, expected {spec.n}")
    for a, (v, (lo, hi)) in enumerate(zip(u, spec.domain)):
        if not lo <= v <= hi:
            raise ValueError(f"u{a + 1}={v} outside domain [{lo}, {hi}]")
    n, m = spec.n, spec.m
    us = variables(u, order)
    env = {f"u{a + 1}": us[a] for a in range(n)}
    x = Jet.stack([exprlang.evaluate(c, env, spec.constants) for c in spec.coords])

    if spec.euclidean:
        gbar = Jet.constant(np.eye(m), n, order)
        gamma_u = Jet.constant(np.zeros((m, m, m)), n, 2)
        gbar0, gamma0, riem0 = np.eye(m), np.zeros((m, m, m)), np.zeros((m,) * 4)
    else:
        gx, gamma_x = _ambient_jets(spec, x.value)
        gbar = compose(gx, x)
        gamma_u = compose(gamma_x, x.truncate(2))
        gbar0, gamma0 = gx.value, gamma_x.value
        riem0 = _riemann_from_gamma(gamma_x)

    e = x.gradient_jets().moveaxis(-1, 0)  # (n, m), order 2
    g = jet_einsum("ai,ib->ab", e, jet_einsum("ij,bj->ib", gbar.truncate(2), e))
    detg = jet_det(g)
    if detg.value <= DEGENERATE_SQRT_G ** 2:
        raise DegeneratePointError(f"degenerate point u={u}: sqrt(g) <= {DEGENERATE_SQRT_G}")
    sqrt_g = detg.sqrt()

    mode = density if density is not None else ("sqrt_g" if spec.density is None else spec.density)
    if mode == "sqrt_g":
        rho, mode_name = sqrt_g, "sqrt_g"
    elif mode == "one":
        rho, mode_name = Jet.constant(1.0, n, 2), "one"
    else:
        expr = exprlang.parse(mode) if isinstance(mode, str) else mode
        rho, mode_name = exprlang.evaluate(expr, env, spec.constants).truncate(2), "custom"
    if abs(rho.value) < 1e-300 or not math.isfinite(rho.value):
        raise DegeneratePointError(f"density vanishes at u={u}")

    return PointFrame(spec=spec, u=u, order=order, density_mode=mode_name, x_jets=x, rho_jet=rho,
                      sqrt_g_jet=sqrt_g, gbar_jets=gbar, gamma_bar_jets=gamma_u,
                      ambient_value=gbar0, gamma_bar=gamma0, riemann_bar=riem0, e_jets=e)
