"""Synthetic data generation: Gaussian designs, heavy-tailed noise, and
strong-adversary corruption strategies.

Randomness discipline: every operation draws from a counter-based Philox
generator keyed by (seed, stream id), so sampling, noise, corruption and
bucket splitting are independently reproducible; regenerating a dataset
from the same arguments is bit-identical.

The adversary strategies instantiate the full-knowledge corruption power
(the adversary may inspect covariates, responses and the ground truth):

* ``label_flip``   negate the responses of the corrupted rows;
* ``point_mass``   replace corrupted rows by identical high-leverage rows
  (y = m, x = m * v) for a fixed unit direction v orthogonal to the true
  index (the classic stress test for spectral initialization);
* ``leverage``     rescale corrupted covariates by m and pin responses at m
  (stress test for gradient steps);
* ``mixed``        half point_mass, half label_flip.

``magnitude_eps_power`` lets a sweep scale the planted magnitude with the
contamination level (effective magnitude m = magnitude * eps**-power); an
adversary that knows the algorithm's filtering thresholds tunes its
magnitude to the contamination budget, and this knob reproduces that.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .links import LinkFunction, k4_for_noise

__all__ = [
    "EpsOutOfRange",
    "TooFewSamples",
    "NoiseModel",
    "GroundTruth",
    "AdversaryModel",
    "Dataset",
    "sample_clean",
    "corrupt",
    "split_buckets",
]

# Stream ids for the (seed, stream) Philox keying.
_STREAM_COVARIATES = 0x11
_STREAM_NOISE = 0x22
_STREAM_CORRUPT = 0x33
_STREAM_SPLIT = 0x44
_STREAM_DIRECTION = 0x55

_NOISE_KINDS = ("gaussian", "student_t", "scaled_pareto_symmetrized")
_ADVERSARY_KINDS = ("none", "label_flip", "point_mass", "leverage", "mixed")


class EpsOutOfRange(ValueError):
    """Contamination fraction outside [0, 1/2)."""


class TooFewSamples(ValueError):
    """Dataset too small for the requested bucket split."""


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator for an (operation seed, stream id) pair."""
    return np.random.Generator(
        np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF, stream], dtype=np.uint64))
    )


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean response noise with std ``sigma`` and a finite 4th moment.

    ``student_t`` requires nu > 4 and ``scaled_pareto_symmetrized`` a > 4 so
    that K4 is finite; both families are rescaled to variance sigma^2.
    """

    kind: str
    sigma: float
    nu: float = 6.0
    a: float = 5.0

    def __post_init__(self) -> None:
        if self.kind not in _NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")
        if self.kind == "student_t" and self.nu <= 4.0:
            raise ValueError("student_t noise needs nu > 4")
        if self.kind == "scaled_pareto_symmetrized" and self.a <= 4.0:
            raise ValueError("symmetrized pareto noise needs a > 4")

    @property
    def k4(self) -> float:
        if self.sigma == 0.0:
            return 0.0
        return k4_for_noise(self.kind, self.sigma, nu=self.nu, a=self.a)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.sigma == 0.0:
            return np.zeros(n)
        if self.kind == "gaussian":
            return self.sigma * rng.standard_normal(n)
        if self.kind == "student_t":
            scale = self.sigma / math.sqrt(self.nu / (self.nu - 2.0))
            return scale * rng.standard_t(self.nu, size=n)
        # Symmetrized standard Pareto: +-(1 + Lomax(a)), centred by symmetry,
        # rescaled from raw second moment a/(a-2) to variance sigma^2.
        v = 1.0 + rng.pareto(self.a, size=n)
        signs = rng.integers(0, 2, size=n) * 2.0 - 1.0
        scale = self.sigma / math.sqrt(self.a / (self.a - 2.0))
        return scale * signs * v


@dataclass(frozen=True)
class GroundTruth:
    """The planted model: unit index vector, link, and noise law."""

    beta_star: np.ndarray
    link: LinkFunction
    noise: NoiseModel

    def __post_init__(self) -> None:
        beta = np.asarray(self.beta_star, dtype=float)
        object.__setattr__(self, "beta_star", beta)
        beta.setflags(write=False)
        if abs(float(np.linalg.norm(beta)) - 1.0) > 1e-12:
            raise ValueError("beta_star must be unit norm")

    @property
    def sigma(self) -> float:
        return self.noise.sigma


@dataclass(frozen=True)
class AdversaryModel:
    """Corruption strategy; ``none`` leaves the data untouched."""

    kind: str = "none"
    magnitude: float = 0.0
    direction_seed: int = 0
    magnitude_eps_power: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _ADVERSARY_KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}")

    def effective_magnitude(self, eps: float) -> float:
        if self.magnitude_eps_power == 0.0 or eps <= 0.0:
            return self.magnitude
        return self.magnitude * eps ** (-self.magnitude_eps_power)


@dataclass(frozen=True)
class Dataset:
    """n observations in d dimensions plus diagnostic-only provenance.

    ``corrupted_mask`` and ``truth`` exist for diagnostics and scoring only;
    estimators consume the ``xy()`` view, which exposes nothing else.
    """

    covariates: np.ndarray
    responses: np.ndarray
    corrupted_mask: np.ndarray
    truth: GroundTruth | None
    seed: int

    def __post_init__(self) -> None:
        x = np.asarray(self.covariates, dtype=float)
        y = np.asarray(self.responses, dtype=float)
        m = np.asarray(self.corrupted_mask, dtype=bool)
        for arr, name in ((x, "covariates"), (y, "responses"), (m, "corrupted_mask")):
            object.__setattr__(self, name, arr)
            arr.setflags(write=False)
        if x.ndim != 2 or y.shape != (x.shape[0],) or m.shape != y.shape:
            raise ValueError("inconsistent covariate/response/mask shapes")

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Estimator-facing view: covariates and responses only."""
        return self.covariates, self.responses

    def corrupted_count(self) -> int:
        return int(self.corrupted_mask.sum())

    def to_npz(self, path: str) -> None:
        np.savez_compressed(
            path,
            covariates=self.covariates,
            responses=self.responses,
            corrupted=self.corrupted_mask,
            seed=np.int64(self.seed),
        )

    @classmethod
    def from_npz(cls, path: str) -> "Dataset":
        with np.load(path) as z:
            return cls(
                covariates=z["covariates"],
                responses=z["responses"],
                corrupted_mask=z["corrupted"],
                truth=None,
                seed=int(z["seed"]),
            )

    def to_csv(self, path: str) -> None:
        header = [f"x_{j}" for j in range(self.d)] + ["y", "corrupted"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.n):
                row = [repr(float(v)) for v in self.covariates[i]]
                row.append(repr(float(self.responses[i])))
                row.append(int(self.corrupted_mask[i]))
                writer.writerow(row)


def sample_clean(n: int, d: int, truth: GroundTruth, seed: int) -> Dataset:
    """Draw n clean observations: x ~ N(0, I_d), y = f(x . beta*) + noise."""
    if n < 1 or d < 2:
        raise ValueError("need n >= 1 and d >= 2")
    if truth.beta_star.shape != (d,):
        raise ValueError("beta_star dimension does not match d")
    x = stream_rng(seed, _STREAM_COVARIATES).standard_normal((n, d))
    zeta = truth.noise.draw(stream_rng(seed, _STREAM_NOISE), n)
    y = truth.link.f(x @ truth.beta_star) + zeta
    return Dataset(
        covariates=x,
        responses=y,
        corrupted_mask=np.zeros(n, dtype=bool),
        truth=truth,
        seed=seed,
    )


def orthogonal_direction(truth: GroundTruth, direction_seed: int) -> np.ndarray:
    """A fixed unit vector orthogonal to the true index, seeded separately."""
    beta = truth.beta_star
    rng = stream_rng(direction_seed, _STREAM_DIRECTION)
    while True:
        v = rng.standard_normal(beta.shape[0])
        v -= (v @ beta) * beta
        norm = float(np.linalg.norm(v))
        if norm > 1e-8:
            return v / norm


def corrupt(
    ds: Dataset, eps: float, adversary: AdversaryModel, seed: int
) -> Dataset:
    """Replace exactly floor(eps * n) rows according to the strategy.

    The adversary inspects everything, including the ground truth, so the
    dataset must carry ``truth``. Row count is preserved and the corruption
    mask records exactly which rows were altered.
    """
    if not (0.0 <= eps < 0.5):
        raise EpsOutOfRange(f"eps must lie in [0, 1/2), got {eps}")
    if ds.truth is None:
        raise ValueError("corrupt() needs a dataset with ground truth attached")
    k = int(math.floor(eps * ds.n))
    if k == 0 or adversary.kind == "none":
        return ds

    rng = stream_rng(seed, _STREAM_CORRUPT)
    rows = np.sort(rng.choice(ds.n, size=k, replace=False))
    x = ds.covariates.copy()
    y = ds.responses.copy()
    mask = ds.corrupted_mask.copy()
    mask[rows] = True
    m = adversary.effective_magnitude(eps)

    def plant_point_mass(idx: np.ndarray) -> None:
        v = orthogonal_direction(ds.truth, adversary.direction_seed)
        x[idx] = m * v
        y[idx] = m

    if adversary.kind == "label_flip":
        y[rows] = -y[rows]
    elif adversary.kind == "point_mass":
        plant_point_mass(rows)
    elif adversary.kind == "leverage":
        x[rows] *= m
        y[rows] = m
    elif adversary.kind == "mixed":
        half = k // 2
        plant_point_mass(rows[:half])
        y[rows[half:]] = -y[rows[half:]]

    return dataclasses.replace(ds, covariates=x, responses=y, corrupted_mask=mask)


def split_buckets(ds: Dataset, buckets: int, seed: int) -> list[Dataset]:
    """Uniformly random partition into equal-size buckets.

    The remainder rows (at most buckets - 1) are dropped so bucket sizes
    match exactly.
    """
    if buckets < 2:
        raise ValueError("need at least 2 buckets")
    if ds.n < buckets:
        raise TooFewSamples(f"cannot split {ds.n} rows into {buckets} buckets")
    perm = stream_rng(seed, _STREAM_SPLIT).permutation(ds.n)
    size = ds.n // buckets
    out = []
    for b in range(buckets):
        idx = np.sort(perm[b * size : (b + 1) * size])
        out.append(
            Dataset(
                covariates=ds.covariates[idx],
                responses=ds.responses[idx],
                corrupted_mask=ds.corrupted_mask[idx],
                truth=ds.truth,
                seed=ds.seed,
            )
        )
    return out
