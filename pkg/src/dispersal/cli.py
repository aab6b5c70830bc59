"""Batch front-end: config-driven runs with JSON/CSV/SVG artifacts.

One JSON config file describes the domain, grid, kernel, weight, and run
parameters; subcommands reuse it and allow a few scalar overrides.  All
outputs are deterministic for a fixed config and seed: floats are
written with 17 significant digits, JSON keys are sorted, and the SVG
plot is assembled by hand.

Exit codes: 0 success, 2 a quantitative bound or hypothesis failed,
1 usage, config, solver, or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .continuation import (
    ContinuationConfig,
    ContinuationError,
    solve_at_lambda,
    trace_branch,
)
from .geometry import Domain, GeometryError, build_grid
from .logistic import ReactionError
from .model import (
    KernelSpec,
    ModelError,
    WeightSpec,
    certify,
)
from .operator import OperatorError, assemble, principal_eigenpair
from .regularized import (
    EXTRAPOLATION_METHODS,
    RegularizedError,
    limit_procedure,
)
from .verification import VerificationError, verify_branch

__all__ = ["main"]

OUTPUT_ENV = "DISPERSAL_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage problems must exit 1; argparse's default status is 2, which
    # this tool reserves for bound violations
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    path.write_text(text + "\n")


def _write_lines(path: Path, lines) -> None:
    path.write_text("\n".join(lines) + "\n")


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must be a JSON object")
    return cfg


def _build_domain(cfg: dict) -> Domain:
    spec = cfg.get("domain")
    if not spec:
        raise UsageError("config needs a 'domain' section")
    try:
        return Domain(tuple(spec["lower"]), tuple(spec["upper"]))
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed domain section: {exc}") from exc


def _build_kernel(cfg: dict) -> KernelSpec:
    spec = cfg.get("kernel")
    if not spec or "form" not in spec:
        raise UsageError("config needs a 'kernel' section with a form")
    form = spec["form"]
    try:
        if form == "constant":
            return KernelSpec.constant(spec.get("value", 1.0))
        if form == "rank_one":
            return KernelSpec.rank_one(spec["coeffs"])
        if form == "gaussian":
            return KernelSpec.gaussian(spec.get("length_scale", 1.0))
        if form == "tabulated":
            return KernelSpec.tabulated(np.array(spec["matrix"], dtype=float))
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed kernel section: {exc}") from exc
    raise UsageError(f"unknown kernel form {form!r}")


def _build_weight(cfg: dict) -> WeightSpec:
    spec = cfg.get("weight")
    if not spec or "form" not in spec:
        raise UsageError("config needs a 'weight' section with a form")
    form = spec["form"]
    p = spec.get("p", 1.0)
    try:
        if form == "constant":
            return WeightSpec.constant(spec.get("value", 1.0), p=p)
        if form == "separable":
            return WeightSpec.separable(spec["g"], spec["h"], p=p)
        if form == "polynomial_dip":
            return WeightSpec.polynomial_dip(
                h=spec.get("h", (1.0,)),
                g=spec.get("g", (0.0,)),
                points=spec["points"],
                exponents=spec["exponents"],
                level=spec["level"],
                p=p,
            )
        if form == "tabulated":
            return WeightSpec.tabulated(
                np.array(spec["matrix"], dtype=float), p=p
            )
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed weight section: {exc}") from exc
    raise UsageError(f"unknown weight form {form!r}")


class RunContext:
    def __init__(self, args):
        self.cfg = _load_config(args.config)
        self.domain = _build_domain(self.cfg)
        grid_spec = self.cfg.get("grid", {})
        rule = args.rule or grid_spec.get("rule", "midpoint")
        resolution = args.resolution or grid_spec.get("resolution", 64)
        self.grid = build_grid(self.domain, rule, int(resolution))
        self.kernel = _build_kernel(self.cfg)
        self.weight = _build_weight(self.cfg)
        self.run = dict(self.cfg.get("run", {}))
        for key in ("lam", "lambda_max", "trials", "seed", "method", "r"):
            val = getattr(args, key, None)
            if val is not None:
                self.run["lambda" if key == "lam" else key] = val

        out = (
            getattr(args, "output_dir", None)
            or os.environ.get(OUTPUT_ENV)
            or self.cfg.get("output_dir", "out")
        )
        self.out_dir = Path(out)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def continuation_config(self) -> ContinuationConfig:
        run = self.run
        kwargs = {}
        for key in (
            "lambda_max", "ds", "ds_min", "ds_max", "s0",
            "newton_tol", "newton_max_iters", "max_points",
        ):
            if key in run and run[key] is not None:
                kwargs[key] = run[key]
        try:
            return ContinuationConfig(**kwargs)
        except ContinuationError as exc:
            raise UsageError(str(exc)) from exc

    def require_lambda(self) -> float:
        lam = self.run.get("lambda")
        if lam is None:
            raise UsageError("this subcommand needs 'lambda' (config or flag)")
        return float(lam)

    def operator(self):
        return assemble(self.kernel, self.grid)


def _branch_csv_lines(branch) -> list[str]:
    lines = [
        f"# seed_lambda1={_fmt(branch.seed_lambda1)}",
        f"# sigma={_fmt(branch.sigma)}",
        f"# r={_fmt(branch.r)}",
        f"# m={branch.m}",
        f"# p={_fmt(branch.p)}",
        f"# termination={branch.termination}",
        "lambda,sup_norm,p_norm,min_u,gamma_phi_sup,lp_bound_margin,"
        "newton_iters,residual_norm",
    ]
    for pt in branch.points:
        lines.append(
            ",".join(
                [
                    _fmt(pt.lam),
                    _fmt(pt.sup_norm),
                    _fmt(pt.p_norm),
                    _fmt(pt.min_u),
                    _fmt(pt.gamma_phi_sup),
                    _fmt(pt.lp_bound_margin),
                    str(pt.newton_iters),
                    _fmt(pt.residual_norm),
                ]
            )
        )
    return lines


def _states_csv_lines(points) -> list[str]:
    lines = ["# one row of node values per accepted point, branch.csv order"]
    for pt in points:
        lines.append(",".join(_fmt(v) for v in pt.u))
    return lines


def _parse_csv(path: Path):
    if not path.exists():
        raise UsageError(f"missing csv file {path}")
    meta, header, rows = {}, None, []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, val = body.split("=", 1)
                meta[key.strip()] = val.strip()
            continue
        if header is None and any(c.isalpha() for c in line.split(",")[0]):
            header = line.split(",")
            continue
        rows.append([float(tok) for tok in line.split(",")])
    return meta, header, rows


def _cmd_eig(args) -> int:
    ctx = RunContext(args)
    eigen = principal_eigenpair(ctx.operator())
    out = ctx.out_dir / "eig.json"
    _write_json(
        out,
        {
            "lambda1": eigen.lambda1,
            "gap": eigen.gap,
            "residual": eigen.residual,
            "min_phi1": float(eigen.phi1.min()),
            "rule": ctx.grid.rule,
            "resolution": ctx.grid.resolution,
            "n": ctx.grid.n,
        },
    )
    coords = ctx.grid.nodes
    head = ",".join(f"x{i}" for i in range(coords.shape[1])) + ",phi1"
    lines = [head]
    for row, val in zip(coords, eigen.phi1):
        lines.append(",".join(_fmt(c) for c in row) + "," + _fmt(val))
    _write_lines(ctx.out_dir / "phi1.csv", lines)
    print(f"lambda1={_fmt(eigen.lambda1)} gap={_fmt(eigen.gap)} -> {out}")
    return 0


def _cmd_check_hyp(args) -> int:
    ctx = RunContext(args)
    r = float(ctx.run.get("r") or ctx.domain.diameter)
    delta = ctx.run.get("delta")
    report = certify(
        ctx.kernel, ctx.weight, ctx.grid, r=r,
        delta=float(delta) if delta is not None else None,
    )
    floor = report.floor
    payload = {
        "k1": report.k1,
        "max_asymmetry": report.max_asymmetry,
        "k2": report.k2,
        "delta": report.delta,
        "q2": floor.q2,
        "sigma": floor.sigma,
        "r": floor.r,
        "q2pp": floor.q2pp,
        "sigma_global": floor.sigma_global,
        "q4": floor.q4,
        "q4_defect": floor.q4_defect,
        "x0": floor.x0,
        "x0_index": floor.x0_index,
        "oscillation": report.oscillation,
        "q3": report.q3,
        "q3_x0_index": report.q3_x0_index,
        "q3_integrals": report.q3_integrals,
    }
    out = ctx.out_dir / "hypotheses.json"
    _write_json(out, payload)
    required_ok = report.k1 and report.k2 and floor.q2
    print(
        f"k1={report.k1} k2={report.k2} q2={floor.q2} q2pp={floor.q2pp} "
        f"q4={floor.q4} oscillation={_fmt(report.oscillation)} -> {out}"
    )
    return 0 if required_ok else 2


def _cmd_solve(args) -> int:
    ctx = RunContext(args)
    lam = ctx.require_lambda()
    op = ctx.operator()
    eigen = principal_eigenpair(op)
    cfg = ctx.continuation_config()
    pt = solve_at_lambda(op, ctx.weight, eigen, lam, cfg)
    _write_json(
        ctx.out_dir / "solve.json",
        {
            "lambda": pt.lam,
            "lambda1": eigen.lambda1,
            "sup_norm": pt.sup_norm,
            "p_norm": pt.p_norm,
            "min_u": pt.min_u,
            "gamma_phi_sup": pt.gamma_phi_sup,
            "newton_iters": pt.newton_iters,
            "residual_norm": pt.residual_norm,
        },
    )
    coords = ctx.grid.nodes
    head = ",".join(f"x{i}" for i in range(coords.shape[1])) + ",u"
    lines = [head]
    for row, val in zip(coords, pt.u):
        lines.append(",".join(_fmt(c) for c in row) + "," + _fmt(val))
    _write_lines(ctx.out_dir / "solution.csv", lines)
    print(
        f"lambda={_fmt(pt.lam)} sup={_fmt(pt.sup_norm)} "
        f"-> {ctx.out_dir / 'solve.json'}"
    )
    return 0


def _cmd_trace(args) -> int:
    ctx = RunContext(args)
    op = ctx.operator()
    eigen = principal_eigenpair(op)
    cfg = ctx.continuation_config()
    branch = trace_branch(op, ctx.weight, eigen, cfg)
    _write_lines(ctx.out_dir / "branch.csv", _branch_csv_lines(branch))
    _write_lines(
        ctx.out_dir / "states.csv", _states_csv_lines(branch.points)
    )
    _write_json(
        ctx.out_dir / "trace.json",
        {
            "seed_lambda1": branch.seed_lambda1,
            "termination": branch.termination,
            "points": len(branch.points),
            "fold_indices": list(branch.fold_indices),
            "sigma": branch.sigma,
            "r": branch.r,
            "m": branch.m,
            "p": branch.p,
            "lambda_max": cfg.lambda_max,
        },
    )
    print(
        f"traced {len(branch.points)} points, termination="
        f"{branch.termination} -> {ctx.out_dir / 'branch.csv'}"
    )
    return 0


def _cmd_sweep_eps(args) -> int:
    ctx = RunContext(args)
    lam = ctx.require_lambda()
    n_values = ctx.run.get("n_values")
    if n_values is None:
        lo, hi = ctx.run.get("n_range", (4, 64))
        n_values, n = [], int(lo)
        while n <= int(hi):
            n_values.append(n)
            n *= 2
    method = ctx.run.get("method", "richardson")
    if method not in EXTRAPOLATION_METHODS:
        raise UsageError(
            f"unknown extrapolation method {method!r}; "
            f"expected one of {EXTRAPOLATION_METHODS}"
        )
    op = ctx.operator()
    cfg = ctx.continuation_config()
    run = limit_procedure(
        op, ctx.weight, lam, n_values, cfg, method=method
    )
    lines = [
        f"# lambda={_fmt(run.lam)}",
        f"# theta={_fmt(run.theta)}",
        f"# x0_index={run.x0_index}",
        f"# method={run.method}",
        "n,eps,sup_norm,dip_min_margin,cauchy_gap",
    ]
    for i, n in enumerate(run.n_values):
        gap = run.cauchy_gaps[i - 1] if i > 0 else math.nan
        lines.append(
            ",".join(
                [
                    str(n),
                    _fmt(run.eps_sequence[i]),
                    _fmt(run.solutions[i].sup_norm),
                    _fmt(run.margins[i]),
                    _fmt(gap),
                ]
            )
        )
    _write_lines(ctx.out_dir / "sweep.csv", lines)
    coords = ctx.grid.nodes
    head = ",".join(f"x{i}" for i in range(coords.shape[1])) + ",u_limit"
    limit_lines = [head]
    for row, val in zip(coords, run.limit):
        limit_lines.append(",".join(_fmt(c) for c in row) + "," + _fmt(val))
    _write_lines(ctx.out_dir / "limit.csv", limit_lines)
    _write_json(
        ctx.out_dir / "sweep.json",
        {
            "lambda": run.lam,
            "theta": run.theta,
            "x0_index": run.x0_index,
            "n_values": list(run.n_values),
            "method": run.method,
            "limit_residual": run.limit_residual,
            "margins_ok": run.margins_ok,
            "gaps_contracting": run.gaps_contracting,
            "modulus_ok": run.modulus_ok,
            "near_mass_ok": run.near_mass_ok,
            "modulus_paper_margin": run.modulus_paper_margin,
            "cauchy_gaps": list(run.cauchy_gaps),
            "near_mass": [list(pair) for pair in run.near_mass],
        },
    )
    print(
        f"swept n={list(run.n_values)} limit_residual="
        f"{_fmt(run.limit_residual)} -> {ctx.out_dir / 'sweep.csv'}"
    )
    return 0


def _load_branch(ctx: RunContext, args):
    from .continuation import Branch, BranchPoint

    branch_path = Path(getattr(args, "branch", None) or
                       ctx.out_dir / "branch.csv")
    states_path = branch_path.with_name("states.csv")
    meta, header, rows = _parse_csv(branch_path)
    _, _, urows = _parse_csv(states_path)
    if len(rows) != len(urows):
        raise UsageError(
            f"{branch_path} and {states_path} have mismatched row counts"
        )
    points = []
    for row, uvals in zip(rows, urows):
        rec = dict(zip(header, row))
        points.append(
            BranchPoint(
                lam=rec["lambda"],
                u=np.array(uvals),
                sup_norm=rec["sup_norm"],
                p_norm=rec["p_norm"],
                min_u=rec["min_u"],
                gamma_phi_sup=rec["gamma_phi_sup"],
                lp_bound_margin=rec["lp_bound_margin"],
                newton_iters=int(rec["newton_iters"]),
                residual_norm=rec["residual_norm"],
            )
        )
    return Branch(
        points=tuple(points),
        seed_lambda1=float(meta["seed_lambda1"]),
        termination=meta.get("termination", "unknown"),
        fold_indices=(),
        sigma=float(meta["sigma"]),
        r=float(meta["r"]),
        m=int(meta["m"]),
        p=float(meta["p"]),
    )


def _cmd_verify(args) -> int:
    ctx = RunContext(args)
    branch = _load_branch(ctx, args)
    if not branch.points:
        raise UsageError("branch csv has no rows to verify")
    op = ctx.operator()
    reports = verify_branch(op, ctx.weight, branch.seed_lambda1, branch)
    payload = [
        {
            "name": r.name,
            "holds": r.holds,
            "margin": r.margin,
            "applicable": r.applicable,
            "context": r.context,
        }
        for r in reports
    ]
    out = ctx.out_dir / "verify.json"
    _write_json(out, payload)
    violated = False
    for r in reports:
        status = "ok" if r.holds else "VIOLATED"
        if not r.applicable:
            status = "n/a"
        elif not r.holds:
            violated = True
        print(f"{r.name}: {status} margin={_fmt(r.margin)}")
    print(f"-> {out}")
    return 2 if violated else 0


def _cmd_export_plot(args) -> int:
    ctx = RunContext(args)
    branch_path = Path(getattr(args, "branch", None) or
                       ctx.out_dir / "branch.csv")
    meta, header, rows = _parse_csv(branch_path)
    if not rows:
        raise UsageError(f"{branch_path} has no data rows to plot")
    idx_l = header.index("lambda")
    idx_s = header.index("sup_norm")
    lams = [row[idx_l] for row in rows]
    sups = [row[idx_s] for row in rows]
    lambda1 = float(meta.get("seed_lambda1", lams[0]))
    svg = _render_svg(lams, sups, lambda1)
    out = ctx.out_dir / "branch.svg"
    out.write_text(svg)
    print(f"plotted {len(rows)} points -> {out}")
    return 0


def _render_svg(lams, sups, lambda1) -> str:
    width, height = 640, 480
    ml, mr, mt, mb = 64, 20, 20, 44
    x_all = lams + [lambda1]
    y_all = sups + [0.0]
    x_lo, x_hi = min(x_all), max(x_all)
    y_lo, y_hi = 0.0, max(max(y_all), 1e-9)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0
    x_lo -= 0.04 * x_span
    x_hi += 0.04 * x_span
    y_hi += 0.06 * y_span
    x_span = x_hi - x_lo
    y_span = y_hi - y_lo

    def sx(x):
        return ml + (x - x_lo) / x_span * (width - ml - mr)

    def sy(y):
        return height - mb - (y - y_lo) / y_span * (height - mt - mb)

    pts = " ".join(f"{sx(x):.3f},{sy(y):.3f}" for x, y in zip(lams, sups))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" '
        f'y2="{height - mb}" stroke="black" stroke-width="1"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" '
        f'stroke="black" stroke-width="1"/>',
        f'<polyline points="{pts}" fill="none" stroke="#1f77b4" '
        f'stroke-width="1.5"/>',
        f'<circle cx="{sx(lambda1):.3f}" cy="{sy(0.0):.3f}" r="4" '
        f'fill="#d62728"/>',
        f'<text x="{(ml + width - mr) / 2:.1f}" y="{height - 10}" '
        f'text-anchor="middle" font-size="14">lambda</text>',
        f'<text x="16" y="{(mt + height - mb) / 2:.1f}" font-size="14" '
        f'transform="rotate(-90 16 {(mt + height - mb) / 2:.1f})" '
        f'text-anchor="middle">sup|u|</text>',
        f'<text x="{sx(min(lams)):.1f}" y="{height - mb + 16}" '
        f'text-anchor="middle" font-size="12">{min(lams):.6g}</text>',
        f'<text x="{sx(max(lams)):.1f}" y="{height - mb + 16}" '
        f'text-anchor="middle" font-size="12">{max(lams):.6g}</text>',
        f'<text x="{ml - 6}" y="{sy(max(sups)) + 4:.1f}" '
        f'text-anchor="end" font-size="12">{max(sups):.6g}</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="dispersal",
        description=(
            "Nonlocal dispersal logistic solver: eigenpairs, branch "
            "continuation, regularized sweeps, and bound verification."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = (
        ("eig", _cmd_eig, "principal eigenpair of the dispersal operator"),
        ("check-hyp", _cmd_check_hyp, "certify kernel/weight hypotheses"),
        ("solve", _cmd_solve, "solve at one fixed lambda"),
        ("trace", _cmd_trace, "trace the positive branch from lambda1"),
        ("sweep-eps", _cmd_sweep_eps, "regularized family and its limit"),
        ("verify", _cmd_verify, "check every bound over a stored branch"),
        ("export-plot", _cmd_export_plot, "render a branch diagram SVG"),
    )
    for name, func, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to the run-configuration JSON")
        p.add_argument("--output-dir", default=None)
        p.add_argument("--rule", default=None)
        p.add_argument("--resolution", type=int, default=None)
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--lambda-max", dest="lambda_max", type=float,
                       default=None)
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--method", default=None)
        p.add_argument("--r", type=float, default=None)
        if name in ("verify", "export-plot"):
            p.add_argument("--branch", default=None,
                           help="branch csv path (default: out dir)")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RegularizedError as exc:
        # quantitative failure inside a regularized run
        print(f"bound failure: {exc}", file=sys.stderr)
        return 2
    except (
        GeometryError,
        ModelError,
        OperatorError,
        ReactionError,
        ContinuationError,
        VerificationError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
