"""Command-line experiment runner.

Every output carries the full configuration and the library version, and a
re-run with the same arguments produces identical bytes.

Exit codes: 0 success, 1 statistical failure under --strict, 2 usage or
domain error.
"""

from __future__ import annotations

import argparse
import cmath
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, HeatGafError
from .funcs import ComplexPoly, ExpQuadPoly, ExpQuadSum, TaylorFunction
from .gaf import (
    covariance_pred,
    covariance_Q_pred,
    flowed_values,
    gaf_batch,
    residual_experiment,
    sample_gaf,
)
from .heatflow import (
    admissible_radius,
    exp_sine_function,
    heat,
    sinpisq_function,
    theta_coeffs,
)
from .metaplectic import (
    GroupElement,
    apply_VA,
    atau_matrix,
    compose_check,
    hyperbolic_phi_psi,
    random_element,
)
from .stats import CovarianceAccumulator, two_sample_energy
from .zeros import track_zeros, weyl_roots

BUILTINS = ("z2", "sin_pi_z2", "theta", "exp_sine", "gaf")
EXIT_OK, EXIT_STAT, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    command: str
    seed: int
    n_max: int
    trials: int
    tau_path: list
    output_dir: str | None
    format: str
    options: dict = field(default_factory=dict)
    version: str = __version__


def parse_complex(text: str) -> complex:
    s = text.strip().replace(" ", "").replace("i", "j")
    if s.endswith("j") and (s == "j" or s[-2] in "+-"):
        s = s[:-1] + "1j"
    try:
        return complex(s)
    except ValueError as exc:
        raise UsageError(f"cannot parse complex number {text!r}") from exc


def parse_complex_list(text: str) -> list[complex]:
    return [parse_complex(t) for t in text.split(",") if t.strip()]


def parse_tau_path(text: str) -> list[complex]:
    """'a:b:steps' gives steps+1 equally spaced values from a to b."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError("--tau-path must look like a:b:steps")
    a, b = parse_complex(parts[0]), parse_complex(parts[1])
    try:
        steps = int(parts[2])
    except ValueError as exc:
        raise UsageError("steps in --tau-path must be an integer") from exc
    if steps < 1:
        raise UsageError("steps in --tau-path must be positive")
    return [a + (b - a) * k / steps for k in range(steps + 1)]


def jsonable(x):
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, np.complexfloating):
        return jsonable(complex(x))
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [jsonable(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


# ------------------------------------------------------------------ functions


def build_function(args, seed: int):
    """The function named by --builtin / --poly / --expquadpoly / --taylor-file."""
    if args.poly:
        return ComplexPoly(parse_complex_list(args.poly))
    if args.expquadpoly:
        head, _, tail = args.expquadpoly.partition(";")
        vals = parse_complex_list(head)
        if len(vals) != 3 or not tail:
            raise UsageError("--expquadpoly must look like 'quad,lin,const;p0,p1,...'")
        return ExpQuadPoly(vals[0], vals[1], vals[2], ComplexPoly(parse_complex_list(tail)))
    if args.taylor_file:
        data = np.loadtxt(args.taylor_file, ndmin=2)
        coeffs = data[:, 0] + 1j * data[:, 1] if data.shape[1] > 1 else data[:, 0]
        return TaylorFunction.from_weyl(coeffs)
    name = args.builtin or "z2"
    if name == "z2":
        return ComplexPoly([0, 0, 1])
    if name == "sin_pi_z2":
        return sinpisq_function()
    if name == "theta":
        return theta_coeffs(parse_complex(args.sigma), args.nmax)
    if name == "exp_sine":
        return exp_sine_function(parse_complex(args.a1))
    if name == "gaf":
        return sample_gaf(args.nmax, seed).taylor
    raise UsageError(f"unknown builtin {name!r}")


def describe(F) -> dict:
    if isinstance(F, ComplexPoly):
        return {"kind": "poly", "basis": "monomial", "coefficients": list(F.coeffs)}
    if isinstance(F, ExpQuadPoly):
        return {"kind": "expquadpoly", "quad": F.quad, "lin": F.lin, "const": F.const,
                "basis": "monomial", "coefficients": list(F.poly.coeffs)}
    if isinstance(F, ExpQuadSum):
        return {"kind": "expquadsum", "terms": [describe(t) for t in F.terms]}
    if isinstance(F, TaylorFunction):
        return {"kind": "taylor", "basis": "weyl", "coefficients": list(F.weyl_coeffs),
                "est_order": F.est_order, "est_type": F.est_type}
    raise TypeError(type(F).__name__)


def initial_zeros(F, args) -> np.ndarray:
    if args.starts:
        return np.array(parse_complex_list(args.starts))
    if isinstance(F, ComplexPoly):
        zs = weyl_roots(TaylorFunction.from_poly(F).weyl_coeffs).expanded()
    elif isinstance(F, TaylorFunction):
        zs = weyl_roots(F.weyl_coeffs).expanded()
    else:
        raise UsageError("give --starts for this function")
    zs = zs[np.argsort(np.abs(zs), kind="stable")]
    return zs[: args.count] if args.count else zs


# ------------------------------------------------------------------ commands


def cmd_flow(args, cfg: ExperimentConfig):
    F = build_function(args, cfg.seed)
    tau = parse_complex(args.tau)
    try:
        G = heat(F, tau)
    except DomainError as exc:
        radius = exc.radius if exc.radius is not None else admissible_radius(F)
        raise DomainError(f"{exc} (admissible radius {radius:.6g})", radius=radius) from exc
    pts = [complex(x, y) for x in (-1.0, -0.5, 0.0, 0.5, 1.0) for y in (-0.5, 0.0, 0.5)]
    values = np.atleast_1d(G(np.array(pts)))
    desc = describe(G)
    rows = []
    coeffs = desc.get("coefficients")
    if coeffs is None:
        for t, term in enumerate(desc["terms"]):
            for k, c in enumerate(term["coefficients"]):
                rows.append({"kind": f"coef_term{t}", "k": k, "z_re": "", "z_im": "",
                             "re": c.real, "im": c.imag})
    else:
        for k, c in enumerate(coeffs):
            rows.append({"kind": "coef", "k": k, "z_re": "", "z_im": "", "re": c.real, "im": c.imag})
    for z, v in zip(pts, values):
        rows.append({"kind": "eval", "k": "", "z_re": z.real, "z_im": z.imag,
                     "re": complex(v).real, "im": complex(v).imag})
    results = [{"tau": tau, "function": desc,
                "evaluations": [{"z": z, "value": complex(v)} for z, v in zip(pts, values)]}]
    return results, rows, True


def cmd_trajectories(args, cfg: ExperimentConfig):
    F = build_function(args, cfg.seed)
    path = cfg.tau_path
    starts = initial_zeros(F, args)
    trajs = track_zeros(F, starts, path)
    rows, results = [], []
    for i, tr in enumerate(trajs):
        a = tr.start
        for tau, z in tr.samples:
            ref = a + tau * a.conjugate()
            fl = z - tau * a.conjugate()
            rows.append({"traj_id": i, "tau": tau.real, "re": z.real, "im": z.imag,
                         "status": tr.status, "ref_re": ref.real, "ref_im": ref.imag,
                         "fluct_re": fl.real, "fluct_im": fl.imag})
        results.append({"traj_id": i, "start": a, "status": tr.status, "message": tr.message,
                        "samples": [{"tau": t, "z": z} for t, z in tr.samples]})
    return results, rows, True


def cmd_residuals(args, cfg: ExperimentConfig):
    anchors = parse_complex_list(args.anchors)
    tau = parse_complex(args.tau)
    tau = tau.real if tau.imag == 0 else tau
    reports = [residual_experiment(a, tau, cfg.trials, cfg.n_max, cfg.seed) for a in anchors]
    base = next((r for r in reports if r.anchor == 0), None)
    comparisons = [r for r in reports if r.anchor != 0] if base is not None else []
    alpha = 0.01 / max(len(comparisons), 1)
    results, rows, ok = [], [], True
    for r in reports:
        entry = {"anchor": r.anchor, "tau": r.tau, "method": r.method, "trials": r.trials,
                 "aborted": r.aborted, "abort_rate": r.abort_rate,
                 "median_abs_residual": float(np.median(np.abs(r.residuals))) if len(r.residuals) else None,
                 "residuals": list(r.residuals)}
        if base is not None and r in comparisons:
            try:
                test = two_sample_energy(r.residuals, base.residuals, seed=cfg.seed)
                entry["test"] = asdict(test)
                entry["alpha"] = alpha
                entry["passed"] = test.p_value >= alpha
                ok &= entry["passed"]
            except ValueError as exc:
                entry["test"] = None
                entry["passed"] = False
                entry["message"] = str(exc)
                ok = False
        results.append(entry)
        for i, z in enumerate(r.residuals):
            rows.append({"anchor_re": r.anchor.real, "anchor_im": r.anchor.imag, "index": i,
                         "re": z.real, "im": z.imag, "method": r.method})
    return results, rows, ok


def cmd_metaplectic_check(args, cfg: ExperimentConfig):
    rng = np.random.default_rng(cfg.seed)
    F = ExpQuadPoly(0.1, 0, 0, ComplexPoly([0, 0, 1]))
    checks = [compose_check(GroupElement.identity(), GroupElement.identity(), F)]
    for _ in range(cfg.trials):
        checks.append(compose_check(random_element(rng), random_element(rng), F))
    done = [c for c in checks if not c.skipped]
    signs = {"+1": sum(c.sign == 1 for c in done), "-1": sum(c.sign == -1 for c in done)}
    rot = compose_check(GroupElement.rotation(2 * math.pi), GroupElement.identity(), F)
    from .gaf import apply_Vtau
    from .metaplectic import _distance
    vtau_err = 0.0
    for _ in range(20):
        t = 0.8 * math.sqrt(rng.uniform()) * cmath.exp(2j * math.pi * rng.uniform())
        vtau_err = max(vtau_err, _distance(apply_VA(F, atau_matrix(t)), apply_Vtau(F, t), 1))
    hyp_err = 0.0
    for _ in range(100):
        g = random_element(rng, 0.9)
        tau, sigma = (0.7 * math.sqrt(rng.uniform()) * cmath.exp(2j * math.pi * rng.uniform())
                      for _ in range(2))
        z, w = (complex(*rng.uniform(-1, 1, 2)) for _ in range(2))
        hyp_err = max(hyp_err, hyperbolic_residual(g.p, g.q, tau, sigma, z, w))
    ok = all(c.match for c in done) and rot.match and rot.sign == -1 and vtau_err < 1e-12 and hyp_err < 1e-10
    rows = [{"check": f"compose_{i}", "match": c.match, "sign": c.sign, "rel_error": c.rel_error,
             "skipped": c.skipped} for i, c in enumerate(checks)]
    rows.append({"check": "rotation_2pi", "match": rot.match, "sign": rot.sign,
                 "rel_error": rot.rel_error, "skipped": rot.skipped})
    results = [{"pairs": len(checks), "skipped": len(checks) - len(done),
                "all_match": all(c.match for c in done),
                "max_rel_error": max((c.rel_error for c in done), default=0.0),
                "sign_table": signs, "identity_pair": asdict(checks[0]),
                "rotation_2pi": asdict(rot), "vtau_equals_va_max_error": vtau_err,
                "hyperbolic_identity_max_rel_error": hyp_err}]
    return results, rows, ok


def hyperbolic_residual(p, q, tau, sigma, z, w) -> float:
    """Relative failure of Q-covariance invariance under the isometry (p, q)."""
    pt, st = hyperbolic_phi_psi(p, q, tau)
    ps, ss = hyperbolic_phi_psi(p, q, sigma)
    lhs = covariance_Q_pred(st * z, ss * w, pt, ps)
    rhs = cmath.sqrt(ss / st) * covariance_Q_pred(z, w, tau, sigma)
    # the identity holds up to the branch of the square root
    return min(abs(lhs - rhs), abs(lhs + rhs)) / abs(rhs)


def probe_points(n: int, radius: float = 1.0) -> np.ndarray:
    """n points on a spiral from 0 out to ``radius``."""
    k = np.arange(n)
    r = radius * k / max(n - 1, 1)
    return r * np.exp(2j * np.pi * k / n)


def cmd_covariance(args, cfg: ExperimentConfig):
    tau, sigma = parse_complex(args.tau), parse_complex(args.sigma)
    if abs(tau) >= 1 or abs(sigma) >= 1:
        raise DomainError("|tau| and |sigma| must be < 1", radius=1.0)
    pts = probe_points(args.grid, args.radius)
    X = gaf_batch(cfg.n_max, cfg.seed, cfg.trials)
    fz = flowed_values(X, pts, tau, args.process)
    fw = fz if sigma == tau else flowed_values(X, pts, sigma, args.process)
    acc = CovarianceAccumulator(len(pts), len(pts))
    acc.add_batch(fz, fw)
    Z, W = np.meshgrid(pts, pts, indexing="ij")
    pred_fn = covariance_pred if args.process == "flow" else covariance_Q_pred
    pred = pred_fn(Z, W, tau, sigma)
    grid = acc.result([(complex(z), complex(w)) for z, w in zip(Z.ravel(), W.ravel())])
    within = grid.z_scores(pred) < 5
    rows = []
    for (z, w), est, pr, se in zip(grid.points, grid.estimates.ravel(), pred.ravel(), grid.std_errors.ravel()):
        rows.append({"z_re": z.real, "z_im": z.imag, "w_re": w.real, "w_im": w.imag,
                     "est_re": est.real, "est_im": est.imag, "pred_re": pr.real, "pred_im": pr.imag,
                     "se": se})
    frac = float(np.mean(within))
    results = [{"process": args.process, "tau": tau, "sigma": sigma, "trials": grid.trials,
                "fraction_within_5se": frac, "points": rows}]
    return results, rows, frac >= 0.95


COMMANDS = {
    "flow": cmd_flow,
    "trajectories": cmd_trajectories,
    "residuals": cmd_residuals,
    "metaplectic-check": cmd_metaplectic_check,
    "covariance": cmd_covariance,
}


# ------------------------------------------------------------------ output


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def render(cfg: ExperimentConfig, results, rows) -> str:
    config = jsonable(asdict(cfg))
    if cfg.format == "json":
        return json.dumps({"config": config, "results": jsonable(results)}, sort_keys=True, indent=1) + "\n"
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--nmax", type=int, default=120)
    common.add_argument("--trials", type=int, default=200)
    common.add_argument("--tau", default="0.3")
    common.add_argument("--tau-path", default=None, help="a:b:steps")
    common.add_argument("--out", default=None, help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="json")
    common.add_argument("--strict", action="store_true",
                        help="exit nonzero when a statistical check fails")

    fn = argparse.ArgumentParser(add_help=False)
    fn.add_argument("--builtin", choices=BUILTINS, default=None)
    fn.add_argument("--poly", default=None, help="ascending coefficients c0,c1,...")
    fn.add_argument("--expquadpoly", default=None, help="quad,lin,const;p0,p1,...")
    fn.add_argument("--taylor-file", default=None, help="Weyl coefficients, columns re [im]")
    fn.add_argument("--sigma", default="1j", help="theta parameter")
    fn.add_argument("--a1", default="0.5", help="exp_sine parameter")

    parser = argparse.ArgumentParser(prog="heatgaf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"heatgaf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("flow", parents=[common, fn], help="flow a function to time tau")
    p = sub.add_parser("trajectories", parents=[common, fn], help="track zeros along a tau path")
    p.add_argument("--starts", default=None, help="comma-separated starting zeros")
    p.add_argument("--count", type=int, default=None, help="track the COUNT smallest zeros")
    p = sub.add_parser("residuals", parents=[common], help="anchored-zero residual laws")
    p.add_argument("--anchors", default="0,2,2j,3+1j")
    sub.add_parser("metaplectic-check", parents=[common], help="composition and invariance checks")
    p = sub.add_parser("covariance", parents=[common], help="empirical vs predicted covariance")
    p.add_argument("--sigma", default=None, help="second time (default: tau)")
    p.add_argument("--grid", type=int, default=5)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--process", choices=("flow", "vtau"), default="vtau")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "sigma", None) is None:
        args.sigma = args.tau
    try:
        path = parse_tau_path(args.tau_path) if args.tau_path else [0j, parse_complex(args.tau)]
        options = {k: v for k, v in sorted(vars(args).items())
                   if k not in ("command", "seed", "nmax", "trials", "tau_path", "out", "format")}
        cfg = ExperimentConfig(args.command, args.seed, args.nmax, args.trials, path,
                               args.out, args.format, options)
        results, rows, ok = COMMANDS[args.command](args, cfg)
    except (UsageError, HeatGafError, ValueError, OSError) as exc:
        print(f"heatgaf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    text = render(cfg, results, rows)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{args.command}.{args.format}").write_text(text)
    else:
        sys.stdout.write(text)
    if args.strict and not ok:
        print(f"heatgaf {args.command}: statistical check failed", file=sys.stderr)
        return EXIT_STAT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
