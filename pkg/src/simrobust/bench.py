"""Experiment harness: reference-table verification, error-vs-eps sweeps
with a paired non-robust baseline, Hessian band checks, and CSV/JSON output.

Sweeps fan trials out over a process pool (capped by SIMROBUST_THREADS) and
reduce deterministically, ordered by (eps, trial index). Robust and baseline
runs inside one trial share the dataset bit-for-bit, so their comparison
isolates the estimator.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .data import AdversaryModel, GroundTruth, NoiseModel, corrupt, sample_clean, stream_rng
from .links import ConstantsReport, builtin_link, constants_report
from .recover import RecoveryConfig, baseline_erm, recover

__all__ = [
    "Scenario",
    "SweepRow",
    "Table2Cell",
    "verify_table2",
    "sweep_epsilon",
    "fit_loglog_slope",
    "hessian_spectrum_check",
    "emit",
    "read_rows",
    "run_single_trial",
]

_REFERENCE_FILE = "reference_constants.json"


# ---------------------------------------------------------------------------
# Reference-table verification


@dataclass(frozen=True)
class Table2Cell:
    link: str
    constant: str
    reference: float
    computed: float
    rel_error: float
    passed: bool


def load_reference_table() -> tuple[list[str], dict[str, list[float]]]:
    text = resources.files("simrobust").joinpath(_REFERENCE_FILE).read_text()
    blob = json.loads(text)
    return blob["columns"], blob["rows"]


def verify_table2(tolerance_rel: float = 0.02) -> list[Table2Cell]:
    """Recompute every tabulated constant and compare at relative tolerance.

    Returns one cell per (link, constant); failures are entries, not errors.
    """
    columns, rows = load_reference_table()
    cells: list[Table2Cell] = []
    for name, refs in rows.items():
        rep = constants_report(builtin_link(name), sigma=1.0)
        computed = {
            "esc": rep.esc,
            "mu": rep.mu,
            "mu1": rep.mu1,
            "R": rep.basin_radius,
            "c_lip": rep.c_lip,
            "phi1": rep.phi1,
            "phi2": rep.phi2,
        }
        for col, ref in zip(columns, refs):
            got = computed[col]
            rel = abs(got - ref) / abs(ref)
            cells.append(Table2Cell(name, col, ref, got, rel, rel <= tolerance_rel))
    return cells


# ---------------------------------------------------------------------------
# Epsilon sweeps


@dataclass(frozen=True)
class Scenario:
    """One benchmark configuration, JSON-serializable.

    ``eps_grid`` drives sweeps; ``eps`` (single value) is derived for
    simulate/recover-style single runs. ``noise`` and ``adversary`` mirror
    the data-module models.
    """

    link: str = "gelu"
    d: int = 10
    n: int = 1_300_000
    sigma: float = 0.5
    noise_kind: str = "student_t"
    noise_nu: float = 6.0
    noise_a: float = 5.0
    eps_grid: tuple[float, ...] = (0.01, 0.02, 0.05)
    adversary_kind: str = "point_mass"
    adversary_magnitude: float = 5.0
    adversary_eps_power: float = 0.25
    adversary_direction_seed: int = 0
    trials: int = 50
    seed: int = 0
    P: int | None = 25

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        grid = tuple(float(e) for e in self.eps_grid)
        if any(e >= 0.5 for e in grid):
            raise ValueError("every eps must be < 1/2")
        if list(grid) != sorted(grid):
            raise ValueError("eps_grid must be sorted ascending")
        object.__setattr__(self, "eps_grid", grid)

    def noise(self) -> NoiseModel:
        return NoiseModel(self.noise_kind, self.sigma, nu=self.noise_nu, a=self.noise_a)

    def adversary(self, direction_seed: int | None = None) -> AdversaryModel:
        return AdversaryModel(
            kind=self.adversary_kind,
            magnitude=self.adversary_magnitude,
            direction_seed=self.adversary_direction_seed
            if direction_seed is None
            else direction_seed,
            magnitude_eps_power=self.adversary_eps_power,
        )

    def constants(self) -> ConstantsReport:
        return constants_report(
            builtin_link(self.link), sigma=self.sigma, k4=self.noise().k4
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, blob: dict) -> "Scenario":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(blob) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        if "eps_grid" in blob:
            blob = dict(blob)
            blob["eps_grid"] = tuple(blob["eps_grid"])
        return cls(**blob)

    @classmethod
    def from_json(cls, path: str) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class SweepRow:
    eps: float
    trials: int
    mean_dist_final: float
    std_dist_final: float
    mean_dist_init: float
    baseline_mean_dist_final: float
    wall_time: float
    robust_failures: int = 0
    baseline_failures: int = 0

    _FIELDS = (
        "eps", "trials", "mean_dist_final", "std_dist_final", "mean_dist_init",
        "baseline_mean_dist_final", "wall_time", "robust_failures",
        "baseline_failures",
    )


def _trial_seed(base_seed: int, eps_index: int, trial: int) -> int:
    # One Philox draw per (eps, trial) cell keeps trial seeds independent of
    # grid layout changes elsewhere.
    g = stream_rng(base_seed ^ (eps_index * 0x9E3779B9 + trial), 0x7A1A)
    return int(g.integers(0, 2 ** 62))


def run_single_trial(
    scenario: Scenario, eps: float, seed: int, with_baseline: bool = True
) -> dict:
    """One paired robust/baseline run; returns per-trial distances.

    Failures (filter collapse, non-finite iterates) are recorded, not
    raised: a divergent baseline is an expected outcome under attack.
    """
    link = builtin_link(scenario.link)
    rng = stream_rng(seed, 0xBE7A)
    beta_star = rng.standard_normal(scenario.d)
    beta_star /= np.linalg.norm(beta_star)
    truth = GroundTruth(beta_star=beta_star, link=link, noise=scenario.noise())
    ds = sample_clean(scenario.n, scenario.d, truth, seed=seed)
    if eps > 0.0 and scenario.adversary_kind != "none":
        ds = corrupt(ds, eps, scenario.adversary(direction_seed=seed + 1), seed=seed + 2)
    cfg = RecoveryConfig(constants=scenario.constants(), eps=eps, P=scenario.P)
    out: dict = {"seed": seed, "eps": eps}
    try:
        res = recover(ds, cfg)
        out["dist_final"] = res.dist_final
        out["dist_init"] = res.dist_init
    except Exception as exc:  # noqa: BLE001 - failures are data
        out["robust_error"] = f"{type(exc).__name__}: {exc}"
    if with_baseline:
        try:
            out["baseline_dist_final"] = baseline_erm(ds, cfg).dist_final
        except Exception as exc:  # noqa: BLE001
            out["baseline_error"] = f"{type(exc).__name__}: {exc}"
    return out


def _pool_size() -> int:
    env = os.environ.get("SIMROBUST_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _run_cell(args: tuple) -> tuple[int, int, dict]:
    scenario_blob, eps_index, trial, seed = args
    scenario = Scenario.from_dict(scenario_blob)
    eps = scenario.eps_grid[eps_index]
    return eps_index, trial, run_single_trial(scenario, eps, seed)


def sweep_epsilon(
    scenario: Scenario, workers: int | None = None
) -> tuple[list[SweepRow], float]:
    """Run the full grid; returns (rows, log-log slope of mean final error).

    The slope is fit by least squares over the grid points with eps >= 0.01;
    below that the statistical floor dominates and would bias it.
    """
    workers = workers if workers is not None else _pool_size()
    jobs = []
    blob = scenario.to_dict()
    for i, _ in enumerate(scenario.eps_grid):
        for t in range(scenario.trials):
            jobs.append((blob, i, t, _trial_seed(scenario.seed, i, t)))

    results: dict[tuple[int, int], dict] = {}
    t0 = time.monotonic()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for eps_index, trial, rec in pool.map(_run_cell, jobs, chunksize=1):
                results[(eps_index, trial)] = rec
    else:
        for job in jobs:
            eps_index, trial, rec = _run_cell(job)
            results[(eps_index, trial)] = rec
    total_wall = time.monotonic() - t0

    rows: list[SweepRow] = []
    for i, eps in enumerate(scenario.eps_grid):
        recs = [results[(i, t)] for t in range(scenario.trials)]
        finals = [r["dist_final"] for r in recs if "dist_final" in r]
        inits = [r["dist_init"] for r in recs if "dist_init" in r]
        base = [r["baseline_dist_final"] for r in recs if "baseline_dist_final" in r]
        rows.append(
            SweepRow(
                eps=eps,
                trials=scenario.trials,
                mean_dist_final=float(np.mean(finals)) if finals else math.nan,
                std_dist_final=float(np.std(finals)) if finals else math.nan,
                mean_dist_init=float(np.mean(inits)) if inits else math.nan,
                baseline_mean_dist_final=float(np.mean(base)) if base else math.nan,
                wall_time=total_wall / len(scenario.eps_grid),
                robust_failures=sum("robust_error" in r for r in recs),
                baseline_failures=sum("baseline_error" in r for r in recs),
            )
        )
    return rows, fit_loglog_slope(rows)


def fit_loglog_slope(rows: list[SweepRow], eps_min: float = 0.01) -> float:
    pts = [
        (math.log(r.eps), math.log(r.mean_dist_final))
        for r in rows
        if r.eps >= eps_min and r.mean_dist_final > 0 and math.isfinite(r.mean_dist_final)
    ]
    if len(pts) < 2:
        return math.nan
    xm = sum(p[0] for p in pts) / len(pts)
    ym = sum(p[1] for p in pts) / len(pts)
    num = sum((x - xm) * (y - ym) for x, y in pts)
    den = sum((x - xm) ** 2 for x, _ in pts)
    return num / den


# ---------------------------------------------------------------------------
# Hessian band check


@dataclass(frozen=True)
class HessianBandRow:
    radius: float
    lam_min: float
    lam_max: float
    band_lo: float
    band_hi: float
    stderr: float
    within: bool


def hessian_spectrum_check(
    link_name: str,
    radii: list[float] | None = None,
    mc_samples: int = 1_000_000,
    seed: int = 0,
    d: int = 5,
    sigma: float = 0.5,
    directions: int = 20,
) -> list[HessianBandRow]:
    """Monte-Carlo eigenvalue band check of the population loss curvature.

    For each radius, samples random parameters at that distance from the
    truth, estimates E[(f'(x.b)^2 + (f(x.b) - y) f''(x.b)) x x'] and reports
    its spectrum against [mu/2 - 3 se, mu/2 + mu1 + 3 se]. The stderr is the
    largest sampling error of the quadratic form over the extreme
    eigendirections.
    """
    link = builtin_link(link_name)
    rep = constants_report(link, sigma=max(sigma, 1e-6))
    if radii is None:
        radii = [rep.basin_radius * f for f in (0.25, 0.5, 0.75, 1.0)]
    rng = stream_rng(seed, 0x4E55)
    noise = NoiseModel("gaussian", sigma)
    rows: list[HessianBandRow] = []
    per_radius = max(1, directions // len(radii))
    for radius in radii:
        for _ in range(per_radius):
            beta_star = rng.standard_normal(d)
            beta_star /= np.linalg.norm(beta_star)
            step = rng.standard_normal(d)
            step /= np.linalg.norm(step)
            beta = beta_star + radius * step
            x = rng.standard_normal((mc_samples, d))
            z = x @ beta
            y = link.f(x @ beta_star) + noise.draw(rng, mc_samples)
            w = link.d1(z) ** 2 + (link.f(z) - y) * link.d2(z)
            h = (x.T * w) @ x / mc_samples
            evals, evecs = np.linalg.eigh(h)
            # Sampling error of v' H v for the extreme eigendirections.
            se = 0.0
            for idx in (0, d - 1):
                quad = w * (x @ evecs[:, idx]) ** 2
                se = max(se, float(quad.std() / math.sqrt(mc_samples)))
            band_lo = rep.gamma - 3.0 * se
            band_hi = rep.alpha + 3.0 * se
            rows.append(
                HessianBandRow(
                    radius=radius,
                    lam_min=float(evals[0]),
                    lam_max=float(evals[-1]),
                    band_lo=band_lo,
                    band_hi=band_hi,
                    stderr=se,
                    within=bool(band_lo <= evals[0] and evals[-1] <= band_hi),
                )
            )
    return rows


# ---------------------------------------------------------------------------
# Serialization


def emit(rows: list[SweepRow], fmt: str, path: str) -> None:
    """Write sweep rows losslessly as CSV (fixed column order) or JSON."""
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SweepRow._FIELDS)
            for row in rows:
                writer.writerow([repr(getattr(row, f)) for f in SweepRow._FIELDS])
    elif fmt == "json":
        with open(path, "w") as fh:
            json.dump([dataclasses.asdict(r) for r in rows], fh, indent=2)
            fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_rows(path: str) -> list[SweepRow]:
    """Inverse of ``emit`` (dispatches on file extension)."""
    if path.endswith(".json"):
        with open(path) as fh:
            return [SweepRow(**blob) for blob in json.load(fh)]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            kwargs = {
                f: (int(rec[f]) if f in ("trials", "robust_failures", "baseline_failures")
                    else float(rec[f]))
                for f in SweepRow._FIELDS
            }
            rows.append(SweepRow(**kwargs))
        return rows
