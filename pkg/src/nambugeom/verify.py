"""Identity suites over sampled points, with JSON-serializable reports.

Every check compares a bracket-side quantity with its classical counterpart
(or with zero, for identities that vanish).  Residuals are normalized as
``|lhs - rhs| / max(1, |rhs|)`` and compared with a tolerance chosen by the
check's kind.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import nambu as nb
from .classical import (Curvature, MetricData, NormalFrame, RankDeficiencyError, ShapeData,
                        gram_schmidt_normals, induced_metric, shape_data,
                        sigma_connection_curvature)
from .embedding import DegeneratePointError, EmbeddingSpec, PointFrame, frame_at
from .jets import Jet
from .levi_civita import levi_civita
from .linalg import adjugate, charpoly

SCHEMA_VERSION = 1
DENSITY_MODES = ("sqrt_g", "one")


@dataclass(frozen=True)
class Tolerances:
    mixed: float = 1e-8        # bracket side against oracle side
    algebraic: float = 1e-10   # purely algebraic identities
    trace: float = 1e-9        # trace identities and the Z family
    orthogonal: float = 1e-12  # Z perpendicular to the tangent space

    def of(self, kind: str) -> float:
        return getattr(self, kind)

    @classmethod
    def uniform(cls, tol: float) -> "Tolerances":
        return cls(tol, tol, tol, tol)

    def as_dict(self) -> dict:
        return {"mixed": self.mixed, "algebraic": self.algebraic, "trace": self.trace,
                "orthogonal": self.orthogonal}


# -- per-point analysis -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PointAnalysis:
    frame: PointFrame
    metric: MetricData
    curvature: Curvature
    normals: NormalFrame
    shape: ShapeData
    ctx: nb.BracketContext
    tensors: nb.BracketTensors


class GammaTooSmall(DegeneratePointError):
    pass


def analyze(spec: EmbeddingSpec, u: Sequence[float], density: str | None = None) -> PointAnalysis:
    """Build frame, oracle data and bracket tensors at one point.

    Raises ``DegeneratePointError`` for coordinate singularities, vanishing
    densities and gamma below the suite threshold.
    """
    frame = frame_at(spec, u, density=density)
    ctx = nb.make_context(frame)
    if ctx.gamma < nb.GAMMA_MIN:
        raise GammaTooSmall(f"gamma = {ctx.gamma!r} below {nb.GAMMA_MIN}")
    metric = induced_metric(frame)
    curv = sigma_connection_curvature(metric)
    try:
        normals = gram_schmidt_normals(frame)
    except RankDeficiencyError as exc:
        raise DegeneratePointError(str(exc)) from exc
    if frame.p == 1:
        # sign-sensitive quantities are compared against the bracket normal
        normals = normals.aligned_to(nb.hypersurface_normal(ctx), frame.ambient_value)
    shape = shape_data(frame, metric, normals, curv)
    tensors = nb.build_tensors(ctx, normals)
    return PointAnalysis(frame, metric, curv, normals, shape, ctx, tensors)


def cm_test_functions(frame: PointFrame) -> list[list[Jet]]:
    """f-tuples for the Codazzi-Mainardi checks: coordinate jets and sin(u1)."""
    n = frame.n
    if n == 2:
        return [[]]
    us = [Jet.variable(a, frame.u[a], n, frame.order) for a in range(n)]
    singles = us + [us[0].sin()]
    return [[f] * (n - 2) for f in singles]


# -- check registry -----------------------------------------------------------

Gate = Callable[[EmbeddingSpec], bool]


def _always(spec):
    return True


def _surface(spec):
    return spec.n == 2


def _hyper(spec):
    return spec.p == 1


def _euclid(spec):
    return spec.euclidean


def _euclid_hyper(spec):
    return spec.euclidean and spec.p == 1


def _r3(spec):
    return spec.n == 2 and spec.m == 3 and spec.euclidean


def _surface_euclid(spec):
    return spec.n == 2 and spec.euclidean


@dataclass(frozen=True)
class CheckDef:
    id: str
    kind: str
    ref: str
    gate: Gate = _always


CHECKS: tuple[CheckDef, ...] = (
    CheckDef("h-symmetric", "algebraic", "second fundamental forms h_A are symmetric"),
    CheckDef("normal-frame", "algebraic", "gbar(N_A, N_B) = delta_AB, gbar(N_A, e_a) = 0"),
    CheckDef("dcoef-antisym", "algebraic", "(D_X)_AB = -(D_X)_BA for the oracle frame"),
    CheckDef("gauss-consistency", "mixed", "intrinsic scalar curvature equals the Gauss-equation trace"),
    CheckDef("bracket-antisymmetry", "algebraic", "transposing two bracket arguments flips the sign"),
    CheckDef("bracket-leibniz", "algebraic", "{fg, h, ...} = f{g, h, ...} + g{f, h, ...}"),
    CheckDef("gamma2", "algebraic", "gamma^2 = (1/n!) |{x^i, x^I}|^2 contracted with gbar"),
    CheckDef("cofactor", "algebraic", "g g^ba = eps eps g..g / (n-1)!"),
    CheckDef("P2-symmetric", "algebraic", "P^2 is symmetric and annihilates normal vectors"),
    CheckDef("projector", "algebraic", "n P^2 / Tr P^2 is the orthogonal projection onto the tangent space"),
    CheckDef("pbst-P2X", "mixed", "P^2(X) = gamma^2 gbar(X, e_a) g^ab e_b"),
    CheckDef("pbst-BX", "mixed", "B_A(X) = -gamma^2 gbar(X, nabla_a N_A) g^ab e_b"),
    CheckDef("pbst-STX", "mixed", "S_A T_A(X) = gamma^2 det W_A gbar(X, nabla_a N_A) h_A^ab e_b"),
    CheckDef("pbst-P2Y", "mixed", "P^2(Y) = gamma^2 Y for tangent Y"),
    CheckDef("pbst-BY", "mixed", "B_A(Y) = gamma^2 W_A(Y) for tangent Y"),
    CheckDef("pbst-STY", "mixed", "S_A T_A(Y) = -gamma^2 det W_A Y for tangent Y"),
    CheckDef("trace-P2", "trace", "(1/n) Tr P^2 = gamma^2"),
    CheckDef("trace-B", "trace", "Tr B_A = gamma^2 tr W_A"),
    CheckDef("trace-ST", "trace", "(1/n) Tr S_A T_A = -gamma^2 det W_A"),
    CheckDef("mean-curvature", "mixed", "H = sum_A Tr B_A N_A / Tr P^2"),
    CheckDef("normal-connection", "mixed", "gbar(B_B(N_A), X) = gamma^2 (D_X)_AB"),
    CheckDef("normal-connection-antisym", "algebraic", "bracket-side D coefficients are antisymmetric"),
    CheckDef("ricci", "mixed", "Ricci map from gamma^-4 sum_A [Tr B_A B_A - B_A^2] plus the ambient term"),
    CheckDef("z-normal", "orthogonal", "gbar(Z_alpha, e_a) = 0"),
    CheckDef("z-idempotent", "trace", "Z-matrix squares to itself"),
    CheckDef("z-trace", "trace", "trace of the Z-matrix equals p"),
    CheckDef("z-orthonormal", "trace", "kept N-hat vectors are orthonormal and number p"),
    CheckDef("z-span", "mixed", "kept N-hat vectors span the oracle normal space"),
    CheckDef("barm-TrBB", "mixed", "normal-free sum for sum_A Tr B_A B_A(X)", _euclid),
    CheckDef("barm-B2", "mixed", "normal-free sum for sum_A B_A^2(X)", _euclid),
    CheckDef("barm-TrBN", "mixed", "normal-free sum for sum_A Tr B_A N_A", _euclid),
    CheckDef("detW", "mixed", "det W of a hypersurface from nested brackets", _euclid_hyper),
    CheckDef("symmetric-functions", "mixed", "elementary symmetric functions from det(B - t gamma^2)", _hyper),
    CheckDef("cm-W", "mixed", "gamma^2 W_A(X, Y) = -P^2(R(X, Y) N_A)"),
    CheckDef("cm-tangent", "mixed", "C_A is tangent"),
    CheckDef("cm-bracket", "mixed", "bracket expression for C_A equals its definition"),
    CheckDef("cm-compact", "mixed", "compact surface form of the C_A normal sum", _surface),
    CheckDef("cm-thm", "mixed", "gamma^2 C_A equals the projected ambient-curvature bracket term"),
    CheckDef("gauss-K-S", "mixed", "K = ambient term - sum_A Tr S_A^2 / (2 gamma^2)", _surface),
    CheckDef("gauss-K-Z", "mixed", "K from brackets of the bracket normals", _surface_euclid),
    CheckDef("complex-structure", "algebraic", "P / gamma squares to -1 on tangent vectors and kills normals", _surface),
    CheckDef("cm-surface-r3", "mixed", "sum_k {gamma^-2 (P^2)^ik, n^k} = 0", _r3),
    CheckDef("cm-swap", "mixed", "bracket-swap identity for surfaces in R^3", _r3),
    CheckDef("poisson-r3", "mixed", "R^3 Codazzi-Mainardi expression for arbitrary Poisson structures", _r3),
    CheckDef("cm-hyper-swap", "mixed", "f-bracket swap identity for hypersurfaces", _euclid_hyper),
    CheckDef("cm-hyper-nabla-h", "mixed", "f-bracket reproduces eps nabla_a h_bc", _euclid_hyper),
    CheckDef("cm-hyper-eps", "mixed", "eps-contracted hypersurface identity", _euclid_hyper),
)
CHECK_IDS = tuple(c.id for c in CHECKS)
_BY_ID = {c.id: c for c in CHECKS}


def _probe_vectors(pa: PointAnalysis) -> list[np.ndarray]:
    """Deterministic ambient test vectors: coordinate axes and the normals."""
    m = pa.frame.m
    return list(np.eye(m)) + list(pa.normals.normals)


def _bracket_algebra(pa: PointAnalysis) -> tuple[float, float]:
    ctx, fr = pa.ctx, pa.frame
    n = fr.n
    x = fr.x_jets
    fs = [x[i % fr.m] for i in range(n)]
    s = fr.x_jets[0].sin() + x[n % fr.m] * x[(n + 1) % fr.m]
    args = [s] + fs[1:]
    v = nb.bracket(ctx, args)
    anti = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            sw = list(args)
            sw[i], sw[j] = sw[j], sw[i]
            anti = max(anti, nb.rel(nb.bracket(ctx, sw) + v, v))
    f, g = fs[0], s
    rest = fs[1:]
    lhs = nb.bracket(ctx, [f * g] + rest)
    rhs = f.value * nb.bracket(ctx, [g] + rest) + g.value * nb.bracket(ctx, [f] + rest)
    return anti, nb.rel(lhs - rhs, rhs)


def compute_residuals(pa: PointAnalysis, which: Iterable[str],
                      values: dict[str, float] | None = None) -> dict[str, float]:
    """Residual per applicable check id at one analysed point.

    If ``values`` is given it receives the headline bracket-side quantity of
    some checks (curvature, traces) for reporting.
    """
    values = {} if values is None else values
    which = set(which)
    ctx, t, fr, md, sd, nf = pa.ctx, pa.tensors, pa.frame, pa.metric, pa.shape, pa.normals
    n, m, p = fr.n, fr.m, fr.p
    G, e = ctx.gbar, fr.tangent_basis
    g2 = ctx.gamma ** 2
    out: dict[str, float] = {}

    def want(*ids):
        return any(i in which for i in ids)

    if want("h-symmetric"):
        out["h-symmetric"] = float(np.abs(sd.h - sd.h.transpose(0, 2, 1)).max())
    if want("normal-frame"):
        N = nf.normals
        out["normal-frame"] = float(max(np.abs(N @ G @ N.T - np.eye(p)).max(), np.abs(N @ G @ e.T).max()))
    if want("dcoef-antisym"):
        out["dcoef-antisym"] = float(np.abs(sd.Dcoef + sd.Dcoef.transpose(0, 2, 1)).max())
    if want("gauss-consistency"):
        out["gauss-consistency"] = nb.rel(pa.curvature.ricci_map - sd.ricci, pa.curvature.ricci_map)
    if want("bracket-antisymmetry", "bracket-leibniz"):
        anti, leib = _bracket_algebra(pa)
        out["bracket-antisymmetry"], out["bracket-leibniz"] = anti, leib
    if want("gamma2"):
        Q = nb.coordinate_brackets(ctx, order=0).value.reshape(m, -1)
        gam2 = np.einsum("iI,ik,IJ,kJ->", Q, G, t.gbar_I, Q) / math.factorial(n)
        out["gamma2"] = nb.rel(gam2 - g2, g2)
    if want("cofactor"):
        g = md.g
        out["cofactor"] = nb.rel(adjugate(g) - np.linalg.det(g) * md.g_inv, adjugate(g))
    if want("P2-symmetric"):
        r = float(np.abs(t.P2 - t.P2.T).max())
        r = max(r, float(np.abs(t.P2_map @ nf.normals.T).max()))
        out["P2-symmetric"] = r
    if want("projector", "mean-curvature"):
        proj, H = nb.projection_and_H(t, n)
        r = nb.rel(proj @ proj - proj, proj)
        r = max(r, nb.rel(proj @ e.T - e.T, e), nb.rel(proj @ nf.normals.T))
        out["projector"] = r
        out["mean-curvature"] = nb.rel(H - sd.H, sd.H)
    if want(*(c for c in which if c.startswith("pbst-"))):
        res = {}
        for X in _probe_vectors(pa):
            for k, v in nb.check_pbst(ctx, t, md, sd, X).items():
                res[k] = max(res.get(k, 0.0), v)
        for k, v in res.items():
            out[f"pbst-{k}"] = v
    if want("trace-P2", "trace-B", "trace-ST"):
        tr = nb.traces(ctx, t)
        out["trace-P2"] = nb.rel(tr["P2"] - g2, g2)
        values["trace-P2"] = float(tr["P2"])
        ref_b = g2 * np.trace(sd.W, axis1=1, axis2=2)
        out["trace-B"] = nb.rel(tr["B"] - ref_b, ref_b)
        ref_st = -g2 * sd.det_W
        out["trace-ST"] = nb.rel(tr["ST"] - ref_st, ref_st)
    if want("normal-connection", "normal-connection-antisym"):
        D = nb.normal_connection(ctx, t)
        out["normal-connection"] = nb.rel(D - sd.Dcoef, sd.Dcoef)
        out["normal-connection-antisym"] = float(np.abs(D + D.transpose(0, 2, 1)).max())
    if want("ricci"):
        r = 0.0
        for a in range(n):
            ref = sd.ricci[:, a] @ e
            r = max(r, nb.rel(nb.ricci_bracket(ctx, t, e[a]) - ref, ref))
        out["ricci"] = r
    if want("z-normal", "z-idempotent", "z-trace", "z-orthonormal", "z-span"):
        zf = nb.z_normals(ctx)
        scale = max(1.0, float(np.sqrt(np.max(np.einsum("ai,ij,aj->a", e, G, e)))))
        out["z-normal"] = float(np.abs(zf.Z @ G @ e.T).max()) / scale
        out["z-idempotent"] = float(np.abs(zf.Zmat @ zf.Zmat - zf.Zmat).max())
        values["z-trace"] = float(np.trace(zf.Zmat))
        out["z-trace"] = abs(values["z-trace"] - p)
        kept = zf.Nhat[list(zf.kept)]
        if len(kept) != p:
            out["z-orthonormal"] = math.inf
            out["z-span"] = math.inf
        else:
            out["z-orthonormal"] = float(np.abs(kept @ G @ kept.T - np.eye(p)).max())
            pz = kept.T @ kept @ G
            po = nf.normals.T @ nf.normals @ G
            out["z-span"] = nb.rel(pz - po, po)
    if fr.euclidean and want("barm-TrBB", "barm-B2", "barm-TrBN"):
        res = {}
        for a in range(n):
            bs, ns = nb.barm_sums(ctx, e[a]), nb.barm_normal_side(t, e[a])
            for k in bs:
                res[k] = max(res.get(k, 0.0), nb.rel(bs[k] - ns[k], ns[k]))
        for k, v in res.items():
            out[f"barm-{k}"] = v
    if p == 1 and fr.euclidean and want("detW"):
        values["detW"] = nb.detW_bracket(ctx)
        out["detW"] = nb.rel(values["detW"] - sd.det_W[0], sd.det_W[0])
    if p == 1 and want("symmetric-functions"):
        sig = nb.symmetric_functions(ctx, t)
        c = charpoly(sd.W[0])
        ref = np.array([(-1) ** k * c[k] for k in range(1, n + 1)])
        out["symmetric-functions"] = nb.rel(sig - ref, ref)
    if want("cm-W", "cm-tangent", "cm-bracket", "cm-compact", "cm-thm"):
        res = {"cm-W": 0.0, "cm-tangent": 0.0, "cm-bracket": 0.0, "cm-thm": 0.0}
        if n == 2:
            res["cm-compact"] = 0.0
        for fs in cm_test_functions(fr):
            cm = nb.cm_residual(ctx, t, sd, fs)
            res["cm-W"] = max(res["cm-W"], float(np.abs(cm.cmW).max()))
            res["cm-tangent"] = max(res["cm-tangent"], cm.tangency)
            res["cm-bracket"] = max(res["cm-bracket"], nb.rel(cm.C_bracket - cm.C_oracle, cm.C_oracle))
            res["cm-thm"] = max(res["cm-thm"], nb.rel(g2 * cm.C_bracket - cm.rhs, cm.rhs))
            if cm.C_compact is not None:
                res["cm-compact"] = max(res["cm-compact"], nb.rel(cm.C_compact - cm.C_bracket, cm.C_bracket))
        out.update(res)
    if n == 2 and want("gauss-K-S", "gauss-K-Z"):
        ks, kz = nb.surface_K(ctx, t)
        out["gauss-K-S"] = nb.rel(ks - sd.K, sd.K)
        values["gauss-K-S"] = ks
        if kz is not None:
            values["gauss-K-Z"] = kz
            out["gauss-K-Z"] = nb.rel(kz - sd.K, sd.K)
    if n == 2 and want("complex-structure"):
        J = nb.complex_structure(ctx, t)
        r = 0.0
        for a in range(n):
            Y = e[a]
            r = max(r, nb.rel(J @ (J @ Y) + Y, Y), abs(float((J @ Y) @ G @ Y)) / max(1.0, float(Y @ G @ Y)))
        r = max(r, float(np.abs(J @ nf.normals.T).max()))
        out["complex-structure"] = r
    if n == 2 and m == 3 and fr.euclidean and want("cm-surface-r3", "cm-swap", "poisson-r3"):
        c3, sw = nb.cm_surface_r3(ctx, t)
        out["cm-surface-r3"] = nb.rel(c3)
        out["cm-swap"] = sw
        out["poisson-r3"] = nb.rel(nb.poisson_identity(ctx.rho_jet, fr.x_jets))
    if p == 1 and fr.euclidean and want("cm-hyper-swap", "cm-hyper-nabla-h", "cm-hyper-eps"):
        res = {"swap": 0.0, "nabla_h": 0.0, "eps": 0.0}
        for fs in cm_test_functions(fr):
            for k, v in nb.cm_hypersurface_identities(ctx, t, sd, fs).items():
                res[k] = max(res[k], v)
        out["cm-hyper-swap"], out["cm-hyper-nabla-h"], out["cm-hyper-eps"] = (
            res["swap"], res["nabla_h"], res["eps"])
    return {k: v for k, v in out.items() if k in which}


# -- sampling -----------------------------------------------------------------

def interior_box(spec: EmbeddingSpec) -> list[tuple[float, float]]:
    box = []
    for lo, hi in spec.domain:
        if not hi > lo:
            raise ValueError("empty sampling domain")
        d = spec.margin * (hi - lo)
        box.append((lo + d, hi - d))
    return box


def grid_points(spec: EmbeddingSpec, k: int) -> list[tuple[float, ...]]:
    """``k`` cell-centred points per axis, row-major with u1 slowest.

    Cell centres never coincide across a periodic seam and stay well away from
    coordinate singularities on the domain boundary; they are clamped into the
    margin box for very large ``k``.
    """
    if k < 2:
        raise ValueError("grid needs k >= 2 points per axis")
    axes = []
    for (lo, hi), (blo, bhi) in zip(spec.domain, interior_box(spec)):
        centres = lo + (np.arange(k) + 0.5) * (hi - lo) / k
        axes.append(np.clip(centres, blo, bhi))
    mesh = np.meshgrid(*axes, indexing="ij")
    return [tuple(float(c) for c in pt) for pt in np.stack([g.ravel() for g in mesh], axis=1)]


def random_points(spec: EmbeddingSpec, count: int, seed: int) -> list[tuple[float, ...]]:
    """Uniform points in the interior box from numpy's PCG64 generator."""
    if count < 1:
        raise ValueError("random sampling needs count >= 1")
    box = interior_box(spec)
    rng = np.random.Generator(np.random.PCG64(seed))
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    pts = lo + (hi - lo) * rng.random((count, spec.n))
    return [tuple(float(c) for c in pt) for pt in pts]


def sample_points(spec: EmbeddingSpec, mode: str, k: int | None = None, count: int | None = None,
                  seed: int = 0) -> list[tuple[float, ...]]:
    if mode == "grid":
        return grid_points(spec, k if k is not None else 4)
    if mode == "random":
        return random_points(spec, count if count is not None else 8, seed)
    raise ValueError(f"unknown sampling mode {mode!r}")


# -- reports ------------------------------------------------------------------

@dataclass(frozen=True)
class IdentityCheck:
    id: str
    paper_ref: str
    point: tuple[float, ...]
    density_mode: str
    residual: float | None
    tol: float
    status: str  # pass | fail | n/a | skipped-degenerate
    value: float | None = None
    detail: str | None = None

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def as_dict(self) -> dict:
        return {"id": self.id, "paper_ref": self.paper_ref, "point": list(self.point),
                "density_mode": self.density_mode, "residual": self.residual, "tol": self.tol,
                "status": self.status, "pass": self.passed, "value": self.value,
                "detail": self.detail}


@dataclass
class IdentityReport:
    spec_name: str
    sampling: dict
    tolerances: Tolerances
    density_modes: tuple[str, ...]
    points: list[tuple[float, ...]]
    checks: list[IdentityCheck] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        c = {"pass": 0, "fail": 0, "n/a": 0, "skipped-degenerate": 0}
        for ch in self.checks:
            c[ch.status] += 1
        return c

    @property
    def all_passed(self) -> bool:
        return self.counts["fail"] == 0

    def failures(self) -> list[IdentityCheck]:
        return [c for c in self.checks if c.status == "fail"]

    def max_residual(self, check_id: str) -> float | None:
        vals = [c.residual for c in self.checks if c.id == check_id and c.residual is not None]
        return max(vals) if vals else None

    def as_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "spec": self.spec_name,
            "run": {"sampling": self.sampling, "tolerances": self.tolerances.as_dict(),
                    "density_modes": list(self.density_modes), "point_count": len(self.points)},
            "summary": self.counts,
            "skipped": self.skipped,
            "checks": [c.as_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return dumps(self.as_dict())

    def summary_line(self) -> str:
        c = self.counts
        verdict = "PASS" if self.all_passed else "FAIL"
        return (f"{verdict} {self.spec_name}: {c['pass']} pass, {c['fail']} fail, {c['n/a']} n/a, "
                f"{c['skipped-degenerate']} skipped-degenerate over {len(self.points)} points")


def _clean(obj):
    if isinstance(obj, float):
        return obj + 0.0 if math.isfinite(obj) else None  # + 0.0 folds -0.0
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def dumps(obj) -> str:
    """Deterministic JSON with fixed key order and shortest round-trip floats."""
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def density_modes_for(spec: EmbeddingSpec) -> tuple[str, ...]:
    return DENSITY_MODES + (("custom",) if spec.density is not None else ())


def _density_arg(spec: EmbeddingSpec, mode: str):
    return spec.density if mode == "custom" else mode


def run_suite(spec: EmbeddingSpec, points: Sequence[Sequence[float]], tolerances: Tolerances | None = None,
              which: Sequence[str] | str = "all", density_modes: Sequence[str] | None = None,
              sampling: dict | None = None) -> IdentityReport:
    """Run every selected check at every point and density mode."""
    tolerances = tolerances or Tolerances()
    ids = list(CHECK_IDS) if which == "all" else list(which)
    unknown = [i for i in ids if i not in _BY_ID]
    if unknown:
        raise ValueError(f"unknown check id {unknown[0]!r}")
    modes = tuple(density_modes) if density_modes else density_modes_for(spec)
    pts = [tuple(float(v) for v in pt) for pt in points]
    report = IdentityReport(spec_name=spec.name, sampling=sampling or {"mode": "explicit"},
                            tolerances=tolerances, density_modes=modes, points=pts)
    gated = {i: _BY_ID[i].gate(spec) for i in ids}
    for pt in pts:
        for mode in modes:
            base = dict(point=pt, density_mode=mode)
            try:
                pa = analyze(spec, pt, _density_arg(spec, mode))
            except DegeneratePointError as exc:
                report.skipped.append({"point": list(pt), "density_mode": mode, "reason": str(exc)})
                for i in ids:
                    d = _BY_ID[i]
                    report.checks.append(IdentityCheck(i, d.ref, residual=None, tol=tolerances.of(d.kind),
                                                       status="skipped-degenerate" if gated[i] else "n/a",
                                                       **base))
                continue
            active = [i for i in ids if gated[i]]
            error = None
            vals: dict[str, float] = {}
            try:
                res = compute_residuals(pa, active, vals)
            except Exception as exc:  # a broken identity is a report entry, not a crash
                res, error = {}, f"{type(exc).__name__}: {exc}"
            for i in ids:
                d = _BY_ID[i]
                tol = tolerances.of(d.kind)
                if not gated[i]:
                    report.checks.append(IdentityCheck(i, d.ref, residual=None, tol=tol, status="n/a", **base))
                    continue
                r = res.get(i)
                if r is None:
                    report.checks.append(IdentityCheck(i, d.ref, residual=None, tol=tol, status="fail",
                                                       detail=error or "not computed", **base))
                    continue
                r = float(r)
                ok = math.isfinite(r) and r <= tol
                report.checks.append(IdentityCheck(i, d.ref, residual=r, tol=tol,
                                                   status="pass" if ok else "fail",
                                                   value=vals.get(i), **base))
    return report
