"""Built-in link functions and their structural constants.

Each link carries hand-coded derivatives up to third order so that every
constant (expected squared convexity, curvature proxies, basin radius,
curvature-Lipschitz constant, gradient-moment constants, hypercontractivity
constant) reduces to deterministic one-dimensional Gaussian quadrature.

Conventions baked into the computations:

* The curvature-Lipschitz value ``c_lip`` is the supremum over scales of
  E[18 f'(Z)^2 f''(Z)^2 + 2 f'''(Z)^2 f(Z)^2] itself (no square root); this
  is the convention under which the published reference table and the basin
  radius fixed-point R = mu / (2 * 315^(1/4) * c_lip(R)) are mutually
  consistent for all built-in links.
* Scale windows are [max(0.001, 1 - R), 1 + R]: the lower clamp keeps the
  window inside the domain where quadrature at scale s is meaningful.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, ndtr

from .gaussian import (
    NonFiniteIntegrand,
    QuadratureRule,
    default_rule,
    gauss_expect,
    sup_expect_over_scale,
)

__all__ = [
    "LinkFunction",
    "ConstantsReport",
    "UnknownLink",
    "DegenerateLink",
    "SolverFailure",
    "builtin_link",
    "builtin_names",
    "esc",
    "curvature_proxies",
    "c_lip",
    "basin_radius",
    "phi_constants",
    "c4_hypercontractivity",
    "constants_report",
    "k4_for_noise",
    "score_kurtosis",
]

_RADIUS_CONSTANT = 2.0 * 315.0 ** 0.25
_SCALE_FLOOR = 0.001


class UnknownLink(KeyError):
    """Requested link name is not in the registry."""


class DegenerateLink(ValueError):
    """Link has (numerically) vanishing curvature proxies; no convex basin."""


class SolverFailure(RuntimeError):
    """Basin-radius root finding could not bracket a sign change."""


@dataclass(frozen=True)
class LinkFunction:
    """A scalar link with analytic derivatives up to order three.

    ``even_symmetric`` is True iff f(-z) = f(z) identically, in which case
    the index vector is identifiable only up to sign.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    d3: Callable[[np.ndarray], np.ndarray]
    even_symmetric: bool = False

    def derivative(self, order: int) -> Callable[[np.ndarray], np.ndarray]:
        return (self.f, self.d1, self.d2, self.d3)[order]


def _phi(z: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _logistic() -> LinkFunction:
    def f(z):
        return expit(z)

    def d1(z):
        s = expit(z)
        return s * (1.0 - s)

    def d2(z):
        s = expit(z)
        return s * (1.0 - s) * (1.0 - 2.0 * s)

    def d3(z):
        s = expit(z)
        return s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s)

    return LinkFunction("logistic", f, d1, d2, d3)


def _tanh() -> LinkFunction:
    def f(z):
        return np.tanh(z)

    def d1(z):
        t = np.tanh(z)
        return 1.0 - t * t

    def d2(z):
        t = np.tanh(z)
        return -2.0 * t * (1.0 - t * t)

    def d3(z):
        t = np.tanh(z)
        return (1.0 - t * t) * (6.0 * t * t - 2.0)

    return LinkFunction("tanh", f, d1, d2, d3)


def _probit() -> LinkFunction:
    def f(z):
        return ndtr(z)

    def d2(z):
        return -z * _phi(z)

    def d3(z):
        return (z * z - 1.0) * _phi(z)

    return LinkFunction("probit", f, _phi, d2, d3)


def _square() -> LinkFunction:
    def f(z):
        return z * z

    def d1(z):
        return 2.0 * z

    def d2(z):
        return np.full_like(np.asarray(z, dtype=float), 2.0)

    def d3(z):
        return np.zeros_like(np.asarray(z, dtype=float))

    return LinkFunction("square", f, d1, d2, d3, even_symmetric=True)


def _gelu() -> LinkFunction:
    def f(z):
        return z * ndtr(z)

    def d1(z):
        return ndtr(z) + z * _phi(z)

    def d2(z):
        return (2.0 - z * z) * _phi(z)

    def d3(z):
        return (z ** 3 - 4.0 * z) * _phi(z)

    return LinkFunction("gelu", f, d1, d2, d3)


def _swish() -> LinkFunction:
    def f(z):
        return z * expit(z)

    def d1(z):
        s = expit(z)
        return s + z * s * (1.0 - s)

    def d2(z):
        s = expit(z)
        s1 = s * (1.0 - s)
        s2 = s1 * (1.0 - 2.0 * s)
        return 2.0 * s1 + z * s2

    def d3(z):
        s = expit(z)
        s1 = s * (1.0 - s)
        s2 = s1 * (1.0 - 2.0 * s)
        s3 = s1 * (1.0 - 6.0 * s + 6.0 * s * s)
        return 3.0 * s2 + z * s3

    return LinkFunction("swish", f, d1, d2, d3)


def _geglu() -> LinkFunction:
    def f(z):
        return z * z * ndtr(z)

    def d1(z):
        return 2.0 * z * ndtr(z) + z * z * _phi(z)

    def d2(z):
        return 2.0 * ndtr(z) + (4.0 * z - z ** 3) * _phi(z)

    def d3(z):
        return (6.0 - 7.0 * z * z + z ** 4) * _phi(z)

    return LinkFunction("geglu", f, d1, d2, d3)


def _swiglu() -> LinkFunction:
    def f(z):
        return z * z * expit(z)

    def d1(z):
        s = expit(z)
        return 2.0 * z * s + z * z * s * (1.0 - s)

    def d2(z):
        s = expit(z)
        s1 = s * (1.0 - s)
        s2 = s1 * (1.0 - 2.0 * s)
        return 2.0 * s + 4.0 * z * s1 + z * z * s2

    def d3(z):
        s = expit(z)
        s1 = s * (1.0 - s)
        s2 = s1 * (1.0 - 2.0 * s)
        s3 = s1 * (1.0 - 6.0 * s + 6.0 * s * s)
        return 6.0 * s1 + 6.0 * z * s2 + z * z * s3

    return LinkFunction("swiglu", f, d1, d2, d3)


_REGISTRY: dict[str, Callable[[], LinkFunction]] = {
    "logistic": _logistic,
    "tanh": _tanh,
    "probit": _probit,
    "square": _square,
    "gelu": _gelu,
    "swish": _swish,
    "geglu": _geglu,
    "swiglu": _swiglu,
}


def builtin_names() -> tuple[str, ...]:
    return tuple(_REGISTRY)


def builtin_link(name: str) -> LinkFunction:
    """Look up a built-in link by name; raises UnknownLink otherwise."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnknownLink(
            f"unknown link {name!r}; available: {', '.join(_REGISTRY)}"
        ) from None
    return factory()


def esc(link: LinkFunction, rule: QuadratureRule | None = None) -> float:
    """Expected squared convexity E[f'(Z)^2 + f(Z) f''(Z)], Z ~ N(0,1).

    By the product rule this is E[(f^2)''(Z)] / 2: a second-order analogue
    of average monotonicity. Strict positivity is what makes the index
    direction the top eigenvector of the response-weighted second moment.
    """
    return gauss_expect(lambda z: link.d1(z) ** 2 + link.f(z) * link.d2(z), 1.0, rule)


def curvature_proxies(
    link: LinkFunction, rule: QuadratureRule | None = None
) -> tuple[float, float]:
    """(mu, mu1) = (min, max) of E[f'(Z)^2] and E[Z^2 f'(Z)^2]."""
    a = gauss_expect(lambda z: link.d1(z) ** 2, 1.0, rule)
    b = gauss_expect(lambda z: z * z * link.d1(z) ** 2, 1.0, rule)
    mu, mu1 = min(a, b), max(a, b)
    if mu <= 1e-12:
        raise DegenerateLink(
            f"link {link.name!r} has vanishing curvature proxy (mu={mu:.3e})"
        )
    return mu, mu1


def _curvature_growth(link: LinkFunction) -> Callable[[np.ndarray], np.ndarray]:
    def g(z: np.ndarray) -> np.ndarray:
        return 18.0 * link.d1(z) ** 2 * link.d2(z) ** 2 + 2.0 * link.d3(z) ** 2 * link.f(z) ** 2

    return g


def _scale_window(radius: float) -> tuple[float, float]:
    return max(_SCALE_FLOOR, 1.0 - radius), 1.0 + radius


def c_lip(
    link: LinkFunction, radius: float, rule: QuadratureRule | None = None
) -> float:
    """Curvature-Lipschitz constant over the radius-``radius`` ball.

    sup over s in [max(0.001, 1-radius), 1+radius] of
    E[18 f'(Z)^2 f''(Z)^2 + 2 f'''(Z)^2 f(Z)^2] with Z ~ N(0, s^2).
    """
    if radius < 0.0:
        raise ValueError("radius must be nonnegative")
    g = _curvature_growth(link)
    if radius == 0.0:
        return gauss_expect(g, 1.0, rule)
    s_lo, s_hi = _scale_window(radius)
    _, value = sup_expect_over_scale(g, s_lo, s_hi, rule)
    return value


def basin_radius(
    link: LinkFunction,
    solver_tol: float = 1e-10,
    rule: QuadratureRule | None = None,
) -> float:
    """Radius R solving R = mu / (2 * 315^(1/4) * c_lip(link, R)).

    Bracketing starts at [1e-6, 5]; when both endpoints share a sign the
    bracket is pushed to [1e-9, 1e-6] (tiny basins) or [5, 100] (links so
    flat the basin is effectively global), and the result is clamped to
    [1e-9, 100].
    """
    rule = rule or default_rule()
    mu, _ = curvature_proxies(link, rule)

    def residual(r: float) -> float:
        if r <= 0.0:
            return -1.0
        c_val = max(c_lip(link, r, rule), 1e-9)
        return r - mu / (_RADIUS_CONSTANT * c_val)

    # Relative tolerance: basin radii span five orders of magnitude across
    # links, so an absolute xtol alone would leave tiny radii imprecise.
    rtol = max(solver_tol, 4.0 * np.finfo(float).eps)
    xtol = min(solver_tol, 1e-12)

    low, high = 1e-6, 5.0
    f_low, f_high = residual(low), residual(high)
    if math.copysign(1.0, f_low) == math.copysign(1.0, f_high):
        if f_low > 0.0:
            try:
                root = brentq(residual, 1e-9, low, xtol=xtol, rtol=rtol)
            except ValueError:
                root = 1e-9
        else:
            try:
                root = brentq(residual, high, 100.0, xtol=xtol, rtol=rtol)
            except ValueError as exc:
                raise SolverFailure(
                    f"no sign change for {link.name!r} in [1e-9, 100]; "
                    "clamping would return 100.0"
                ) from exc
    else:
        root = brentq(residual, low, high, xtol=xtol, rtol=rtol)
    return float(min(max(root, 1e-9), 100.0))


def phi_constants(
    link: LinkFunction, radius: float, rule: QuadratureRule | None = None
) -> tuple[float, float]:
    """Gradient-moment constants (phi1, phi2) over the radius ball.

    phi1 = sup_s E[f'(sZ)^16]^(1/4), phi2 = sup_s E[f'(sZ)^4]^(1/2),
    with s ranging over [max(0.001, 1-radius), 1+radius].
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    s_lo, s_hi = _scale_window(radius)
    _, m16 = sup_expect_over_scale(lambda z: link.d1(z) ** 16, s_lo, s_hi, rule)
    _, m4 = sup_expect_over_scale(lambda z: link.d1(z) ** 4, s_lo, s_hi, rule)
    return m16 ** 0.25, m4 ** 0.5


def c4_hypercontractivity(
    link: LinkFunction,
    sigma: float,
    k4: float,
    rule: QuadratureRule | None = None,
) -> float:
    """Hypercontractivity constant 4 * (E[f(Z)^8]^(1/8) + K4) / sigma."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if k4 < sigma:
        raise ValueError(
            "k4 must be at least sigma (fourth-moment root dominates the "
            "standard deviation for every distribution)"
        )
    m8 = gauss_expect(lambda z: link.f(z) ** 8, 1.0, rule)
    return 4.0 * (m8 ** 0.125 + k4) / sigma


def score_kurtosis(
    link: LinkFunction,
    sigma: float,
    k4: float,
    rule: QuadratureRule | None = None,
) -> float:
    """Fourth-moment envelope of projections of YX under the clean model.

    Returns max over the index direction and its orthogonal complement of
    E[<u, YX>^4] / E[<u, YX>^2]^2, assuming sign-symmetric noise. This is
    the exact clean-data counterpart of the worst-case hypercontractivity
    constant: a filtering certificate run at this envelope (times a slack)
    accepts clean data while rejecting planted spikes, whereas the
    worst-case constant is orders of magnitude too loose to reject
    anything at moderate contamination.
    """
    rule = rule or default_rule()
    s2, k44 = sigma ** 2, k4 ** 4
    ef2 = gauss_expect(lambda z: link.f(z) ** 2, 1.0, rule)
    ef4 = gauss_expect(lambda z: link.f(z) ** 4, 1.0, rule)
    ef2z2 = gauss_expect(lambda z: link.f(z) ** 2 * z * z, 1.0, rule)
    ef2z4 = gauss_expect(lambda z: link.f(z) ** 2 * z ** 4, 1.0, rule)
    ef4z4 = gauss_expect(lambda z: link.f(z) ** 4 * z ** 4, 1.0, rule)
    along = (ef4z4 + 6.0 * s2 * ef2z4 + 3.0 * k44) / (ef2z2 + s2) ** 2
    ortho = 3.0 * (ef4 + 6.0 * s2 * ef2 + k44) / (ef2 + s2) ** 2
    return max(along, ortho)


def k4_for_noise(kind: str, sigma: float, nu: float = 6.0, a: float = 5.0) -> float:
    """Fourth-moment root K4 for the built-in noise families at std sigma."""
    if kind == "gaussian":
        return 3.0 ** 0.25 * sigma
    if kind == "student_t":
        if nu <= 4.0:
            raise ValueError("student_t needs nu > 4 for a finite fourth moment")
        return sigma * (3.0 * (nu - 2.0) / (nu - 4.0)) ** 0.25
    if kind == "scaled_pareto_symmetrized":
        if a <= 4.0:
            raise ValueError("pareto needs shape a > 4 for a finite fourth moment")
        return sigma * ((a - 2.0) ** 2 / (a * (a - 4.0))) ** 0.25
    raise ValueError(f"unknown noise kind {kind!r}")


@dataclass(frozen=True)
class ConstantsReport:
    """All structural constants of one link at a given noise scale.

    ``alpha`` and ``gamma`` are the smoothness / strong-convexity parameters
    of the basin (mu/2 + mu1 and mu/2), ``eta`` the matched step size
    2 / (mu + mu1) = 2 / (alpha + gamma), and ``ef2`` = E[f(Z)^2] which sets
    the isotropic level of the response-weighted second moment.
    """

    link: str
    esc: float
    mu: float
    mu1: float
    basin_radius: float
    c_lip: float
    phi1: float
    phi2: float
    c4: float
    sigma: float
    k4: float
    ef2: float
    score_kurtosis: float

    def __post_init__(self) -> None:
        if not (0.0 < self.mu <= self.mu1):
            raise ValueError("need 0 < mu <= mu1")
        if self.basin_radius <= 0.0 or self.c_lip < 0.0:
            raise ValueError("need basin_radius > 0 and c_lip >= 0")
        if self.phi1 <= 0.0 or self.phi2 <= 0.0:
            raise ValueError("phi constants must be positive")

    @property
    def alpha(self) -> float:
        return 0.5 * self.mu + self.mu1

    @property
    def gamma(self) -> float:
        return 0.5 * self.mu

    @property
    def eta(self) -> float:
        return 2.0 / (self.alpha + self.gamma)

    @property
    def lambda_max(self) -> float:
        """Top eigenvalue of E[(YX)(YX)'] under the clean model."""
        return self.sigma ** 2 + self.ef2 + 2.0 * self.esc

    def to_dict(self) -> dict:
        return {
            "link": self.link,
            "esc": self.esc,
            "mu": self.mu,
            "mu1": self.mu1,
            "R": self.basin_radius,
            "c_lip": self.c_lip,
            "phi1": self.phi1,
            "phi2": self.phi2,
            "c4": self.c4,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "eta": self.eta,
            "sigma": self.sigma,
            "k4": self.k4,
            "ef2": self.ef2,
            "score_kurtosis": self.score_kurtosis,
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def text_row(self) -> str:
        cells = [f"{self.link:<10}"]
        for v in (self.esc, self.mu, self.mu1, self.basin_radius,
                  self.c_lip, self.phi1, self.phi2):
            cells.append(f"{v:>10.2e}")
        return "  ".join(cells)

    @staticmethod
    def text_header() -> str:
        names = ["ESC", "mu", "mu1", "R", "C_lip(R)", "phi1", "phi2"]
        return "  ".join([f"{'link':<10}"] + [f"{n:>10}" for n in names])


def constants_report(
    link: LinkFunction,
    sigma: float = 1.0,
    k4: float | None = None,
    rule: QuadratureRule | None = None,
    solver_tol: float = 1e-10,
) -> ConstantsReport:
    """Assemble every constant for one link into a single record.

    ``k4`` defaults to the Gaussian-noise value 3^(1/4) * sigma.
    """
    rule = rule or default_rule()
    if k4 is None:
        k4 = k4_for_noise("gaussian", sigma)
    mu, mu1 = curvature_proxies(link, rule)
    radius = basin_radius(link, solver_tol=solver_tol, rule=rule)
    phi1, phi2 = phi_constants(link, radius, rule)
    return ConstantsReport(
        link=link.name,
        esc=esc(link, rule),
        mu=mu,
        mu1=mu1,
        basin_radius=radius,
        c_lip=c_lip(link, radius, rule),
        phi1=phi1,
        phi2=phi2,
        c4=c4_hypercontractivity(link, sigma, k4, rule),
        sigma=sigma,
        k4=k4,
        ef2=gauss_expect(lambda z: link.f(z) ** 2, 1.0, rule),
        score_kurtosis=score_kurtosis(link, sigma, k4, rule),
    )
