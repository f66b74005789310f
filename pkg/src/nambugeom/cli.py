"""``nambugeom`` command line: eval, verify, grid, catalog.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 degenerate point.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import nambu as nb
from . import verify as vf
from .embedding import DegeneratePointError, EmbeddingSpec, SpecError, catalog_entries, resolve
from .exprlang import EvalError, ParseError, parse

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DEGENERATE = 0, 1, 2, 3


class ConfigError(Exception):
    pass


@dataclass
class CliConfig:
    command: str
    embedding: str | None = None
    point: tuple[float, ...] | None = None
    grid: int | None = None
    random: int | None = None
    seed: int = 0
    suite: tuple[str, ...] | str = "all"
    tolerances: vf.Tolerances = field(default_factory=vf.Tolerances)
    density: str | None = None
    fmt: str = "json"
    output: str | None = None


# -- argument handling --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nambugeom", description="Nambu-bracket geometry of embedded manifolds.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, fmt_choices, default_fmt):
        p.add_argument("embedding", help="catalog:name?k=v,... or a JSON config path")
        p.add_argument("--density", help="sqrt_g, one, or a density expression in u1..un")
        p.add_argument("--format", dest="fmt", choices=fmt_choices, default=default_fmt)
        p.add_argument("-o", "--output", help="output file (default: stdout)")

    pe = sub.add_parser("eval", help="all quantities at one point")
    common(pe, ["json"], "json")
    pe.add_argument("--point", required=True, help="comma-separated parameter values")

    pv = sub.add_parser("verify", help="run the identity suite")
    common(pv, ["json"], "json")
    mode = pv.add_mutually_exclusive_group()
    mode.add_argument("--grid", type=int, help="k cell-centred points per axis (default 4)")
    mode.add_argument("--random", type=int, metavar="COUNT", help="COUNT seeded random points")
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--suite", default="all", help="'all' or comma-separated check ids")
    pv.add_argument("--tol", type=float, help="one tolerance for every check kind")
    for kind in ("mixed", "algebraic", "trace", "orthogonal"):
        pv.add_argument(f"--tol-{kind}", type=float, dest=f"tol_{kind}")

    pg = sub.add_parser("grid", help="export curvature fields over a grid")
    common(pg, ["csv", "json"], "csv")
    pg.add_argument("--grid", type=int, default=16, help="k cell-centred points per axis")

    pc = sub.add_parser("catalog", help="list built-in embeddings")
    pc.add_argument("--format", dest="fmt", choices=["text", "json"], default="text")
    pc.add_argument("-o", "--output")
    return ap


def _parse_point(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"malformed --point {text!r}") from exc
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError("--point values must be finite")
    return vals


def parse_config(argv: Sequence[str]) -> CliConfig:
    ns = build_parser().parse_args(list(argv))
    cfg = CliConfig(command=ns.command, fmt=ns.fmt, output=ns.output)
    if ns.command == "catalog":
        return cfg
    cfg.embedding, cfg.density = ns.embedding, ns.density
    if ns.command == "eval":
        cfg.point = _parse_point(ns.point)
    elif ns.command == "grid":
        cfg.grid = ns.grid
    else:
        cfg.grid, cfg.random, cfg.seed = ns.grid, ns.random, ns.seed
        if cfg.grid is None and cfg.random is None:
            cfg.grid = 4
        if ns.suite != "all":
            cfg.suite = tuple(s.strip() for s in ns.suite.split(",") if s.strip())
            bad = [s for s in cfg.suite if s not in vf.CHECK_IDS]
            if bad:
                raise ConfigError(f"unknown check id {bad[0]!r}")
        tol = vf.Tolerances.uniform(ns.tol) if ns.tol is not None else vf.Tolerances()
        over = {k: getattr(ns, f"tol_{k}") for k in ("mixed", "algebraic", "trace", "orthogonal")}
        tol = replace(tol, **{k: v for k, v in over.items() if v is not None})
        if any(not (v >= 0) for v in tol.as_dict().values()):
            raise ConfigError("tolerances must be non-negative")
        cfg.tolerances = tol
    if cfg.grid is not None and cfg.grid < 2:
        raise ConfigError("--grid needs k >= 2")
    if cfg.random is not None and cfg.random < 1:
        raise ConfigError("--random needs COUNT >= 1")
    return cfg


# -- commands -----------------------------------------------------------------

def _floats(a) -> list | float:
    return np.asarray(a, float).tolist()


def eval_record(spec: EmbeddingSpec, u: Sequence[float], density: str | None = None) -> dict:
    """Quantities at one point, each keyed by name and tagged with a check id."""
    pa = vf.analyze(spec, u, density)
    ctx, t, sd = pa.ctx, pa.tensors, pa.shape
    n, p = ctx.n, ctx.p
    G = ctx.gbar
    q: dict[str, dict] = {}

    def put(name, check_id, value, **extra):
        q[name] = {"id": check_id, "value": value, **extra}

    put("g", "gauss-consistency", _floats(pa.metric.g))
    put("gamma", "gamma2", ctx.gamma)
    put("TrP2", "trace-P2", float(np.trace(t.P2_map)))
    _, H = nb.projection_and_H(t, n)
    put("H", "mean-curvature", _floats(H), norm=float(np.sqrt(H @ G @ H)), oracle=_floats(sd.H))
    if n == 2:
        ks, kz = nb.surface_K(ctx, t)
        put("K", "gauss-K-S", ks, via_Z=kz, oracle=sd.K)
    if p == 1:
        det_w = nb.detW_bracket(ctx) if ctx.euclidean else None
        put("detW", "detW", det_w, oracle=float(sd.det_W[0]))
    e = pa.frame.tangent_basis
    ric = np.array([np.linalg.lstsq(e.T, nb.ricci_bracket(ctx, t, e[a]), rcond=None)[0]
                    for a in range(n)]).T
    put("ricci", "ricci", _floats(ric), eigenvalues=_floats(np.sort(np.linalg.eigvals(ric).real)),
        oracle=_floats(sd.ricci))
    zf = nb.z_normals(ctx)
    put("Z", "z-trace", float(np.trace(zf.Zmat)), eigenvalues=_floats(zf.eigvals), kept=len(zf.kept))
    cm_ids = [c.id for c in vf.CHECKS if c.id.startswith(("cm-", "poisson-")) and c.gate(spec)]
    res = vf.compute_residuals(pa, cm_ids)
    put("cm_residuals", "cm-thm", {k: res[k] for k in cm_ids if k in res})
    return {"schema_version": vf.SCHEMA_VERSION, "command": "eval", "spec": spec.name,
            "point": list(pa.frame.u), "density_mode": pa.frame.density_mode, "quantities": q}


GRID_FIELDS_TAIL = ("K_bracket", "K_oracle", "gamma", "Hnorm", "TrP2", "reason")


def grid_rows(spec: EmbeddingSpec, k: int, density: str | None = None) -> list[dict]:
    """Row-major curvature fields; skipped points carry empty values and a reason."""
    rows = []
    for u in vf.grid_points(spec, k):
        row: dict = {f"u{a + 1}": v for a, v in enumerate(u)}
        row.update({f: None for f in GRID_FIELDS_TAIL})
        try:
            pa = vf.analyze(spec, u, density)
        except DegeneratePointError as exc:
            row["reason"] = str(exc)
            rows.append(row)
            continue
        ctx, t = pa.ctx, pa.tensors
        _, H = nb.projection_and_H(t, ctx.n)
        if ctx.n == 2:
            row["K_bracket"] = nb.surface_K(ctx, t)[0]
            row["K_oracle"] = pa.shape.K
        row["gamma"] = ctx.gamma
        row["Hnorm"] = float(np.sqrt(H @ ctx.gbar @ H))
        row["TrP2"] = float(np.trace(t.P2_map))
        rows.append(row)
    return rows


def _csv_text(rows: list[dict], fields: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow(["" if r[f] is None else (repr(float(r[f])) if isinstance(r[f], float) else r[f])
                    for f in fields])
    return buf.getvalue()


def _emit(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _density_modes(cfg: CliConfig):
    if cfg.density is None:
        return None, None
    if cfg.density in ("sqrt_g", "one"):
        return (cfg.density,), cfg.density
    return ("custom",), cfg.density


def run(cfg: CliConfig) -> int:
    if cfg.command == "catalog":
        entries = catalog_entries()
        if cfg.fmt == "json":
            _emit(vf.dumps({"schema_version": vf.SCHEMA_VERSION, "catalog": entries}), cfg.output)
        else:
            lines = [f"{e['name']:<10} n={e['n']} m={e['m']} p={e['p']} "
                     + ",".join(f"{k}={v}" for k, v in e["params"].items()) for e in entries]
            _emit("\n".join(line.rstrip() for line in lines) + "\n", cfg.output)
        return EXIT_OK

    spec = resolve(cfg.embedding)
    modes, dens = _density_modes(cfg)
    if dens not in (None, "sqrt_g", "one"):
        spec = replace(spec, density=parse(dens))

    if cfg.command == "eval":
        _emit(vf.dumps(eval_record(spec, cfg.point, dens)), cfg.output)
        return EXIT_OK

    if cfg.command == "grid":
        rows = grid_rows(spec, cfg.grid, dens)
        fields = [f"u{a + 1}" for a in range(spec.n)] + list(GRID_FIELDS_TAIL)
        if cfg.fmt == "csv":
            _emit(_csv_text(rows, fields), cfg.output)
        else:
            _emit(vf.dumps({"schema_version": vf.SCHEMA_VERSION, "spec": spec.name, "grid": cfg.grid,
                            "columns": fields, "rows": rows}), cfg.output)
        return EXIT_OK

    if cfg.random is not None:
        points = vf.random_points(spec, cfg.random, cfg.seed)
        sampling = {"mode": "random", "count": cfg.random, "seed": cfg.seed, "generator": "PCG64"}
    else:
        points = vf.grid_points(spec, cfg.grid)
        sampling = {"mode": "grid", "k": cfg.grid}
    report = vf.run_suite(spec, points, cfg.tolerances, cfg.suite, modes, sampling)
    _emit(report.to_json(), cfg.output)
    print(report.summary_line(), file=sys.stdout if cfg.output else sys.stderr)
    return EXIT_OK if report.all_passed else EXIT_FAIL


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(parse_config(argv))
    except ConfigError as exc:
        print(f"nambugeom: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegeneratePointError as exc:
        print(f"nambugeom: degenerate point: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (SpecError, ParseError, EvalError, ValueError, nb.CodimensionError) as exc:
        print(f"nambugeom: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
