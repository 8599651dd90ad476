"""Command-line front door.

Subcommands:

* ``constants``  structural constants of one link (text row or JSON).
* ``verify``     deterministic checks: the published constants table
  (``verify table2``) or the Gaussian integration-by-parts identities
  (``verify stein``). Exit code 1 when any check fails.
* ``simulate``   generate a dataset from a scenario file.
* ``recover``    one robust recovery run on synthetic data.
* ``sweep``      full error-vs-contamination sweep with paired baseline.

Data goes to stdout (or ``--out``); logs go to stderr. Exit codes: 0 on
success, 1 on verification/assertion failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bench import Scenario, emit, fit_loglog_slope, run_single_trial, sweep_epsilon, verify_table2
from .data import corrupt, sample_clean, stream_rng, GroundTruth
from .gaussian import stein_check_multivariate, stein_check_univariate
from .links import ConstantsReport, builtin_link, builtin_names, constants_report, k4_for_noise

_STEIN_TOL_UNIVARIATE = 1e-8
_STEIN_MC_SAMPLES = 200_000
# Monte-Carlo residual scale: operator norms of d x d fourth-moment averages
# concentrate at ~ sqrt(d / samples) times the moment scale; factor 40 keeps
# the test a smoke alarm, not a coin flip.
_STEIN_TOL_MULTIVARIATE = 40.0 / _STEIN_MC_SAMPLES ** 0.5


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _cmd_constants(args: argparse.Namespace) -> int:
    link = builtin_link(args.link)
    k4 = args.k4 if args.k4 is not None else k4_for_noise("gaussian", args.sigma)
    rep = constants_report(link, sigma=args.sigma, k4=k4)
    if args.json:
        print(rep.to_json(indent=2))
    else:
        print(ConstantsReport.text_header())
        print(rep.text_row())
    return 0


def _cmd_verify_table2(args: argparse.Namespace) -> int:
    cells = verify_table2(tolerance_rel=args.tol)
    failures = 0
    for cell in cells:
        status = "ok" if cell.passed else "FAIL"
        failures += not cell.passed
        print(
            f"{cell.link:<10} {cell.constant:<6} ref={cell.reference:<11.4g} "
            f"got={cell.computed:<11.6g} rel={cell.rel_error:.2e}  {status}"
        )
    print(f"{len(cells) - failures}/{len(cells)} cells within {args.tol:g} relative")
    return 1 if failures else 0


def _cmd_verify_stein(args: argparse.Namespace) -> int:
    link = builtin_link(args.link)
    failures = 0

    def report(name: str, residual: float, tol: float) -> None:
        nonlocal failures
        ok = residual <= tol
        failures += not ok
        print(f"{name:<28} residual={residual:.3e}  tol={tol:.1e}  {'ok' if ok else 'FAIL'}")

    report(
        "univariate z^2",
        stein_check_univariate(lambda z: z ** 2, lambda z: np.full_like(z, 2.0)),
        _STEIN_TOL_UNIVARIATE,
    )
    report(
        "univariate z^4",
        stein_check_univariate(lambda z: z ** 4, lambda z: 12.0 * z ** 2),
        _STEIN_TOL_UNIVARIATE,
    )
    report(
        f"univariate {args.link}(z)^2",
        stein_check_univariate(
            lambda z: link.f(z) ** 2,
            lambda z: 2.0 * (link.d1(z) ** 2 + link.f(z) * link.d2(z)),
        ),
        _STEIN_TOL_UNIVARIATE,
    )

    d = 3

    def g(x: np.ndarray) -> np.ndarray:
        return link.f(x[:, 0]) ** 2

    def hess(x: np.ndarray) -> np.ndarray:
        h = np.zeros((x.shape[0], d, d))
        z = x[:, 0]
        h[:, 0, 0] = 2.0 * (link.d1(z) ** 2 + link.f(z) * link.d2(z))
        return h

    report(
        f"multivariate {args.link}(x.e1)^2",
        stein_check_multivariate(g, hess, d=d, mc_samples=_STEIN_MC_SAMPLES, seed=args.seed),
        _STEIN_TOL_MULTIVARIATE * max(1.0, abs(float(link.f(2.0))) ** 2),
    )
    return 1 if failures else 0


def _truth_from_scenario(scenario: Scenario, seed: int) -> GroundTruth:
    rng = stream_rng(seed, 0xBE7A)
    beta = rng.standard_normal(scenario.d)
    beta /= np.linalg.norm(beta)
    return GroundTruth(beta_star=beta, link=builtin_link(scenario.link), noise=scenario.noise())


def _cmd_simulate(args: argparse.Namespace) -> int:
    scenario = Scenario.from_json(args.config)
    seed = args.seed if args.seed is not None else scenario.seed
    eps = args.eps if args.eps is not None else scenario.eps_grid[-1]
    truth = _truth_from_scenario(scenario, seed)
    ds = sample_clean(scenario.n, scenario.d, truth, seed=seed)
    if eps > 0.0 and scenario.adversary_kind != "none":
        ds = corrupt(ds, eps, scenario.adversary(direction_seed=seed + 1), seed=seed + 2)
    if args.out.endswith(".npz"):
        ds.to_npz(args.out)
    else:
        ds.to_csv(args.out)
    _log(f"wrote {ds.n} x {ds.d} dataset ({ds.corrupted_count()} corrupted) to {args.out}")
    return 0


def _cmd_recover(args: argparse.Namespace) -> int:
    scenario = Scenario.from_json(args.config)
    seed = args.seed if args.seed is not None else scenario.seed
    eps = args.eps if args.eps is not None else scenario.eps_grid[-1]
    record = run_single_trial(scenario, eps, seed, with_baseline=args.baseline)
    if "robust_error" in record:
        _log(f"recovery failed: {record['robust_error']}")
        return 1
    if args.json:
        print(json.dumps(record, indent=2))
    else:
        print(f"eps={eps:g} dist_init={record['dist_init']:.6f} dist_final={record['dist_final']:.6f}")
        if "baseline_dist_final" in record:
            print(f"baseline_dist_final={record['baseline_dist_final']:.6f}")
        elif "baseline_error" in record:
            print(f"baseline failed: {record['baseline_error']}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    scenario = Scenario.from_json(args.config)
    if args.trials is not None:
        scenario = Scenario.from_dict({**scenario.to_dict(), "trials": args.trials})
    if args.seed is not None:
        scenario = Scenario.from_dict({**scenario.to_dict(), "seed": args.seed})
    _log(f"sweep: {scenario.link}, eps grid {scenario.eps_grid}, {scenario.trials} trials")
    rows, slope = sweep_epsilon(scenario, workers=args.workers)
    fmt = "json" if args.out.endswith(".json") else "csv"
    emit(rows, fmt, args.out)
    for row in rows:
        _log(
            f"  eps={row.eps:g}: robust {row.mean_dist_final:.4f} +- {row.std_dist_final:.4f}, "
            f"baseline {row.baseline_mean_dist_final:.4f}, init {row.mean_dist_init:.4f}"
        )
    _log(f"log-log slope {slope:.3f}; rows written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simrobust",
        description="Robust single-index-model recovery toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="structural constants for one link")
    p.add_argument("--link", required=True, choices=builtin_names())
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--k4", type=float, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_constants)

    p = sub.add_parser("verify", help="deterministic verification suites")
    vsub = p.add_subparsers(dest="verify_what", required=True)
    pt = vsub.add_parser("table2", help="compare computed constants to the reference table")
    pt.add_argument("--tol", type=float, default=0.02)
    pt.set_defaults(func=_cmd_verify_table2)
    ps = vsub.add_parser("stein", help="integration-by-parts identity residuals")
    ps.add_argument("--link", required=True, choices=builtin_names())
    ps.add_argument("--seed", type=int, default=0)
    ps.set_defaults(func=_cmd_verify_stein)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("recover", help="one robust recovery run")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--json", action="store_true")
    p.add_argument("--baseline", action="store_true", help="also run the non-robust baseline")
    p.set_defaults(func=_cmd_recover)

    p = sub.add_parser("sweep", help="error-vs-contamination sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
