"""Single-site disorder distributions and reproducible realizations."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .lattice import BoxSpec

FAMILIES = ("uniform", "gaussian", "cauchy", "piecewise")

# Any finite q is admissible for the gaussian; this is the value reported
# to the Hoelder exponents unless the caller overrides it.
GAUSSIAN_DEFAULT_Q = 8.0


class DisorderError(ValueError):
    pass


@dataclass(frozen=True)
class DisorderModel:
    """A single-site density rho.

    ``params`` per family: uniform ``(a, b)``, gaussian ``(sigma,)``,
    cauchy ``(scale,)``, piecewise ``(edges, heights)`` with heights
    normalized so the density integrates to one.
    """

    family: str
    params: tuple
    q: float | None = None
    standardized: bool = False

    @classmethod
    def uniform(cls, a: float = -0.5, b: float = 0.5) -> "DisorderModel":
        if not b > a:
            raise DisorderError("uniform needs a < b")
        return cls("uniform", (float(a), float(b)), math.inf)

    @classmethod
    def gaussian(cls, sigma: float = 1.0, q: float = GAUSSIAN_DEFAULT_Q) -> "DisorderModel":
        if not sigma > 0:
            raise DisorderError("gaussian needs sigma > 0")
        if not (2 < q < math.inf):
            raise DisorderError("gaussian moment order must be finite and > 2")
        return cls("gaussian", (float(sigma),), float(q))

    @classmethod
    def cauchy(cls, scale: float = 1.0) -> "DisorderModel":
        if not scale > 0:
            raise DisorderError("cauchy needs scale > 0")
        return cls("cauchy", (float(scale),), None)

    @classmethod
    def piecewise(cls, edges, weights) -> "DisorderModel":
        """Piecewise-constant density; ``weights`` are the bin probabilities."""
        edges = tuple(float(e) for e in edges)
        weights = np.asarray(weights, dtype=float)
        widths = np.diff(edges)
        if len(edges) < 2 or len(weights) != len(edges) - 1:
            raise DisorderError("piecewise needs len(weights) == len(edges) - 1 >= 1")
        if np.any(widths <= 0) or np.any(weights < 0) or weights.sum() <= 0:
            raise DisorderError("edges must increase and weights be non-negative")
        heights = tuple(float(h) for h in weights / weights.sum() / widths)
        return cls("piecewise", (edges, heights), math.inf)

    # -- analytic data -----------------------------------------------------

    @property
    def is_compact(self) -> bool:
        return self.family in ("uniform", "piecewise")

    @property
    def has_all_moments(self) -> bool:
        return self.family != "cauchy"

    @property
    def mean(self) -> float:
        if self.family == "uniform":
            a, b = self.params
            return 0.5 * (a + b)
        if self.family == "gaussian":
            return 0.0
        if self.family == "piecewise":
            e, h = map(np.asarray, self.params)
            return float(np.sum(h * (e[1:] ** 2 - e[:-1] ** 2) / 2))
        raise DisorderError("cauchy distribution has no mean")

    @property
    def variance(self) -> float:
        if self.family == "uniform":
            a, b = self.params
            return (b - a) ** 2 / 12
        if self.family == "gaussian":
            return self.params[0] ** 2
        if self.family == "piecewise":
            e, h = map(np.asarray, self.params)
            second = float(np.sum(h * (e[1:] ** 3 - e[:-1] ** 3) / 3))
            return second - self.mean**2
        raise DisorderError("cauchy distribution has no variance")

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "uniform":
            a, b = self.params
            return np.where((x >= a) & (x <= b), 1.0 / (b - a), 0.0)
        if self.family == "gaussian":
            (s,) = self.params
            return np.exp(-0.5 * (x / s) ** 2) / (s * math.sqrt(2 * math.pi))
        if self.family == "cauchy":
            (g,) = self.params
            return g / (math.pi * (x**2 + g**2))
        e, h = map(np.asarray, self.params)
        i = np.searchsorted(e, x, side="right") - 1
        inside = (i >= 0) & (i < len(h))
        return np.where(inside, h[np.clip(i, 0, len(h) - 1)], 0.0)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "uniform":
            a, b = self.params
            return np.clip((x - a) / (b - a), 0.0, 1.0)
        if self.family == "gaussian":
            (s,) = self.params
            return 0.5 * special.erfc(-x / (s * math.sqrt(2)))
        if self.family == "cauchy":
            (g,) = self.params
            return 0.5 + np.arctan(x / g) / math.pi
        e, h = map(np.asarray, self.params)
        cum = np.concatenate([[0.0], np.cumsum(h * np.diff(e))])
        return np.interp(x, e, cum / cum[-1])

    def ppf(self, u) -> np.ndarray:
        """Inverse CDF on (0, 1)."""
        u = np.asarray(u, dtype=float)
        if self.family == "uniform":
            a, b = self.params
            return a + (b - a) * u
        if self.family == "gaussian":
            (s,) = self.params
            return -s * math.sqrt(2) * special.erfcinv(2 * u)
        if self.family == "cauchy":
            (g,) = self.params
            return g * np.tan(math.pi * (u - 0.5))
        e, h = map(np.asarray, self.params)
        cum = np.concatenate([[0.0], np.cumsum(h * np.diff(e))])
        cum /= cum[-1]
        # bins of zero weight have zero width in u; searchsorted skips them
        i = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(h) - 1)
        return e[i] + (u - cum[i]) / h[i]

    def support(self) -> tuple[float, float]:
        if self.family == "uniform":
            return self.params
        if self.family == "piecewise":
            e, h = self.params
            nz = [i for i, v in enumerate(h) if v > 0]
            return e[nz[0]], e[nz[-1] + 1]
        return -math.inf, math.inf


def density_bound(model: DisorderModel) -> float:
    """Analytic sup of the density."""
    if model.family == "uniform":
        a, b = model.params
        return 1.0 / (b - a)
    if model.family == "gaussian":
        return 1.0 / (model.params[0] * math.sqrt(2 * math.pi))
    if model.family == "cauchy":
        return 1.0 / (math.pi * model.params[0])
    return float(max(model.params[1]))


def _power_integral(lo: float, hi: float, q: float) -> float:
    """int_lo^hi |x|^q dx."""

    def prim(x):
        return math.copysign(abs(x) ** (q + 1) / (q + 1), x)

    return prim(hi) - prim(lo)


def moment(model: DisorderModel, q: float) -> float:
    """Absolute moment int |w|^q rho(w) dw; ``q = inf`` gives the essential sup.

    Returns ``math.inf`` when the moment diverges.
    """
    if q < 1:
        raise DisorderError("moment order must be >= 1")
    if math.isinf(q):
        lo, hi = model.support()
        return max(abs(lo), abs(hi))
    if model.family == "cauchy":
        return math.inf
    if model.family == "gaussian":
        (s,) = model.params
        return s**q * 2 ** (q / 2) * math.gamma((q + 1) / 2) / math.sqrt(math.pi)
    if model.family == "uniform":
        a, b = model.params
        return _power_integral(a, b, q) / (b - a)
    e, h = model.params
    return sum(hk * _power_integral(e[k], e[k + 1], q) for k, hk in enumerate(h))


def lq_norm(model: DisorderModel, q: float) -> float:
    """||omega(0)||_q = moment(q)^(1/q); ess sup for q = inf."""
    m = moment(model, q)
    return m if math.isinf(q) else m ** (1.0 / q)


def standardize(model: DisorderModel) -> DisorderModel:
    """Affine rescaling to mean 0 and variance 1."""
    if model.family == "cauchy":
        raise DisorderError("cauchy disorder has no mean and cannot be standardized")
    mu, sd = model.mean, math.sqrt(model.variance)
    if model.family == "uniform":
        a, b = model.params
        out = DisorderModel.uniform((a - mu) / sd, (b - mu) / sd)
    elif model.family == "gaussian":
        out = DisorderModel("gaussian", (1.0,), model.q)
    else:
        e, h = model.params
        out = DisorderModel(
            "piecewise", (tuple((x - mu) / sd for x in e), tuple(v * sd for v in h)), math.inf
        )
    return DisorderModel(out.family, out.params, out.q, standardized=True)


@dataclass(frozen=True, eq=False)
class Realization:
    box: BoxSpec
    values: np.ndarray = field(repr=False)
    master_seed: int
    index: int


def realization_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for realization ``index`` under ``master_seed``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


def sample_values(model: DisorderModel, n: int, rng: np.random.Generator) -> np.ndarray:
    if model.family == "gaussian":
        return model.params[0] * rng.standard_normal(n)
    # inversion keeps every family exact; random() is in [0, 1)
    u = rng.random(n)
    if model.family == "cauchy":
        u = np.where(u == 0.0, 0.5, u)
    return model.ppf(u)


def sample_realization(model: DisorderModel, box: BoxSpec, master_seed: int, index: int) -> Realization:
    values = sample_values(model, box.n_sites, realization_rng(master_seed, index))
    values.setflags(write=False)
    return Realization(box, values, int(master_seed), int(index))
