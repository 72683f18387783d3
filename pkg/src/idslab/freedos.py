"""Background IDS N0(E) by torus quadrature, and classification of energies.

N0(E) is the torus measure of {eps(q) < E}.  For d <= 3 the symbol is
interpolated linearly on a Kuhn triangulation of the half-cell-offset
tensor grid and the sublevel-set volume of every simplex is taken in
closed form (the linear tetrahedron method and its 1-d/2-d analogues).
Plain node counting on the same grid is available for any d.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .lattice import HoppingKernel, symbol_eval

SAFETY_FACTOR = 1.05
# the difference quotient doubling across a decade of delta means divergence
DIVERGENCE_SLOPE = -math.log10(2.0)
_CHUNK = 1 << 20


class ResolutionError(ValueError):
    pass


def default_resolution(dimension: int) -> int:
    return {1: 2**20, 2: 2**11, 3: 2**7}.get(dimension, 2**4)


def resolution_limit(kernel: HoppingKernel, resolution: int) -> float:
    """Smallest half-width the grid resolves: symbol variation over two cells."""
    return 2.0 * kernel.lipschitz_bound * 2 * math.pi / resolution


# -- sublevel-set volume of linear simplices ----------------------------------


def _fraction_below(v: np.ndarray, E: float) -> np.ndarray:
    """Volume fraction of each simplex where the linear interpolant is < E.

    ``v`` holds vertex values sorted along the last axis, shape (m, d+1),
    and only rows with v[:, 0] < E <= v[:, -1] should be passed.
    """
    d = v.shape[1] - 1
    if d == 1:
        return (E - v[:, 0]) / (v[:, 1] - v[:, 0])
    if d == 2:
        v0, v1, v2 = v.T
        with np.errstate(divide="ignore", invalid="ignore"):
            lower = (E - v0) ** 2 / ((v1 - v0) * (v2 - v0))
            upper = 1.0 - (v2 - E) ** 2 / ((v2 - v0) * (v2 - v1))
        return np.where(E <= v1, lower, upper)
    if d == 3:
        v0, v1, v2, v3 = v.T
        with np.errstate(divide="ignore", invalid="ignore"):
            a = (E - v0) ** 3 / ((v1 - v0) * (v2 - v0) * (v3 - v0))
            x = E - v1
            b = (
                (v1 - v0) ** 2
                + 3 * (v1 - v0) * x
                + 3 * x**2
                - ((v2 - v0) + (v3 - v1)) / ((v2 - v1) * (v3 - v1)) * x**3
            ) / ((v2 - v0) * (v3 - v0))
            c = 1.0 - (v3 - E) ** 3 / ((v3 - v0) * (v3 - v1) * (v3 - v2))
        return np.where(E <= v1, a, np.where(E <= v2, b, c))
    raise ValueError("closed-form simplex volumes are implemented for d <= 3")


def _kuhn_paths(d: int) -> list[list[tuple[int, ...]]]:
    paths = []
    for perm in itertools.permutations(range(d)):
        corner = [0] * d
        path = [tuple(corner)]
        for axis in perm:
            corner[axis] = 1
            path.append(tuple(corner))
        paths.append(path)
    return paths


def _grid_axis(n: int) -> np.ndarray:
    return 2 * np.pi * (np.arange(n) + 0.5) / n


def _simplex_chunks(kernel: HoppingKernel, n: int):
    """Yield sorted simplex vertex values, shape (m, d+1), slab by slab."""
    d = kernel.dimension
    if d == 1:
        f = symbol_eval(kernel, _grid_axis(n))
        yield np.sort(np.stack([f, np.roll(f, -1)], axis=-1), axis=-1)
        return
    paths = _kuhn_paths(d)
    rows_per_chunk = max(1, _CHUNK // (n ** (d - 1) * len(paths)))
    for start in range(0, n, rows_per_chunk):
        stop = min(n, start + rows_per_chunk)
        # symbol values on rows start..stop inclusive, periodic in axis 0
        idx = np.arange(start, stop + 1) % n
        f = _symbol_rows(kernel, n, idx)
        simplices = []
        for path in paths:
            corners = []
            for c in path:
                g = f[c[0] : c[0] + stop - start]
                for axis in range(1, d):
                    if c[axis]:
                        g = np.roll(g, -1, axis=axis)
                corners.append(g.reshape(-1))
            simplices.append(np.stack(corners, axis=-1))
        yield np.sort(np.concatenate(simplices), axis=-1)


def _symbol_rows(kernel: HoppingKernel, n: int, idx: np.ndarray) -> np.ndarray:
    axes = [_grid_axis(n)] * kernel.dimension
    axes[0] = axes[0][idx]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return symbol_eval(kernel, mesh)


def _measure_below_simplex(kernel: HoppingKernel, energies: np.ndarray, n: int) -> np.ndarray:
    total = np.zeros(energies.size)
    count = 0
    for V in _simplex_chunks(kernel, n):
        count += V.shape[0]
        order = np.argsort(V[:, 0], kind="stable")
        V = V[order]
        lo, hi = V[:, 0], V[:, -1]
        hi_sorted = np.sort(hi)
        spread = float(np.max(hi - lo))
        for i, E in enumerate(energies):
            full = np.searchsorted(hi_sorted, E, side="left")
            a = np.searchsorted(lo, E - spread, side="left")
            b = np.searchsorted(lo, E, side="left")
            cand = V[a:b]
            cand = cand[cand[:, -1] >= E]
            total[i] += full + float(np.sum(_fraction_below(cand, E)))
    return total / count


def _measure_below_nodes(kernel: HoppingKernel, energies: np.ndarray, n: int) -> np.ndarray:
    d = kernel.dimension
    counts = np.zeros(energies.size)
    rows_per_chunk = max(1, _CHUNK // n ** (d - 1))
    for start in range(0, n, rows_per_chunk):
        f = np.sort(_symbol_rows(kernel, n, np.arange(start, min(n, start + rows_per_chunk))).ravel())
        counts += np.searchsorted(f, energies, side="left")
    return counts / n**d


def _ids_values(kernel: HoppingKernel, energies: np.ndarray, n: int, method: str) -> np.ndarray:
    if kernel.is_zero:
        return (energies > 0.0).astype(float)
    if method == "simplex":
        return _measure_below_simplex(kernel, energies, n)
    return _measure_below_nodes(kernel, energies, n)


def _resolve_method(kernel: HoppingKernel, method: str) -> str:
    if method == "auto":
        return "simplex" if kernel.dimension <= 3 else "nodes"
    if method not in ("simplex", "nodes"):
        raise ValueError(f"unknown quadrature method {method!r}")
    if method == "simplex" and kernel.dimension > 3:
        raise ValueError("simplex quadrature is available for d <= 3 only")
    return method


@dataclass
class FreeIDSCurve:
    kernel: HoppingKernel
    energies: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    resolution: int
    method: str

    def rows(self):
        return [(float(E), float(v), float(e)) for E, v, e in zip(self.energies, self.values, self.errors)]


def free_ids_curve(
    kernel: HoppingKernel, energies, resolution: int | None = None, method: str = "auto"
) -> FreeIDSCurve:
    """N0 on an energy grid with a two-grid (n vs n/2) error estimate."""
    n = resolution or default_resolution(kernel.dimension)
    if n < 16:
        raise ResolutionError("resolution must be >= 16 points per axis")
    method = _resolve_method(kernel, method)
    E = np.atleast_1d(np.asarray(energies, dtype=float))
    fine = _ids_values(kernel, E, n, method)
    coarse = _ids_values(kernel, E, n // 2, method)
    return FreeIDSCurve(kernel, E, fine, np.abs(fine - coarse), n, method)


@dataclass(frozen=True)
class IDSValue:
    value: float
    error: float


def free_ids(kernel: HoppingKernel, E: float, resolution: int | None = None, method: str = "auto") -> IDSValue:
    c = free_ids_curve(kernel, [E], resolution, method)
    return IDSValue(float(c.values[0]), float(c.errors[0]))


def free_window(kernel, E, deltas, resolution=None, method="auto") -> tuple[np.ndarray, np.ndarray]:
    """N0(E + delta) - N0(E - delta) and its two-grid error, per delta."""
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    c = free_ids_curve(kernel, np.concatenate([E + deltas, E - deltas]), resolution, method)
    k = deltas.size
    return c.values[:k] - c.values[k:], c.errors[:k] + c.errors[k:]


# -- regular points and points of order alpha ---------------------------------


@dataclass
class RegularPointEstimate:
    energy: float
    gamma: float | None
    deltas: np.ndarray
    quotients: np.ndarray
    raw_sup: float
    log_slope: float
    safety_factor: float = SAFETY_FACTOR
    resolution: int = 0

    alpha = 1.0

    @property
    def regular(self) -> bool:
        return self.gamma is not None

    def to_dict(self):
        return {
            "energy": self.energy,
            "regular": self.regular,
            "gamma": self.gamma,
            "raw_sup": self.raw_sup,
            "log_slope": self.log_slope,
            "safety_factor": self.safety_factor,
            "deltas": self.deltas.tolist(),
            "quotients": self.quotients.tolist(),
            "resolution": self.resolution,
        }


def _check_resolution(kernel, delta_min, n):
    limit = resolution_limit(kernel, n)
    if delta_min < limit:
        needed = int(2 ** math.ceil(math.log2(n * limit / delta_min)))
        raise ResolutionError(
            f"delta={delta_min:g} is below the quadrature resolution limit {limit:.3g}; "
            f"use resolution >= {needed}"
        )


def regular_constant(
    kernel: HoppingKernel, E: float, deltas, resolution: int | None = None
) -> RegularPointEstimate:
    """Estimate Gamma(E) with N0(E+d) - N0(E-d) <= Gamma(E) d over ``deltas``.

    Gamma is the largest difference quotient on the grid times
    ``SAFETY_FACTOR``.  E is declared not regular (gamma None) when the
    quotient grows by a factor 2 or more per decade of shrinking delta.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 1 or deltas.size < 2 or np.any(np.diff(deltas) >= 0) or deltas[-1] <= 0:
        raise ValueError("deltas must be a decreasing sequence of positive reals")
    n = resolution or default_resolution(kernel.dimension)
    _check_resolution(kernel, deltas[-1], n)
    mass, _ = free_window(kernel, E, deltas, n)
    quot = mass / deltas
    raw = float(quot.max())
    if raw == 0.0:
        return RegularPointEstimate(float(E), 0.0, deltas, quot, 0.0, 0.0, resolution=n)
    pos = quot > 0
    slope = float(np.polyfit(np.log10(deltas[pos]), np.log10(quot[pos]), 1)[0]) if pos.sum() >= 2 else 0.0
    diverges = slope <= DIVERGENCE_SLOPE
    # also look at every pair spanning at least a decade
    for i, j in itertools.combinations(range(deltas.size), 2):
        if deltas[i] >= 10 * deltas[j] and quot[j] >= 2 * quot[i] > 0:
            diverges = True
    gamma = None if diverges else SAFETY_FACTOR * raw
    return RegularPointEstimate(float(E), gamma, deltas, quot, raw, slope, resolution=n)


@dataclass
class OrderAlphaFit:
    energy: float
    alpha: float
    gamma: float
    residual: float
    delta_range: tuple[float, float]
    deltas: np.ndarray
    masses: np.ndarray
    partial: bool = False
    gamma_bound: float = math.nan

    @property
    def regular(self) -> bool:
        return False

    def to_dict(self):
        return {
            "energy": self.energy,
            "alpha": None if math.isinf(self.alpha) else self.alpha,
            "alpha_infinite": math.isinf(self.alpha),
            "gamma": self.gamma,
            "gamma_bound": self.gamma_bound,
            "residual": self.residual,
            "delta_range": list(self.delta_range),
            "partial": self.partial,
            "deltas": self.deltas.tolist(),
            "masses": self.masses.tolist(),
        }


def order_alpha_fit(
    kernel: HoppingKernel,
    E: float,
    delta_range: tuple[float, float],
    samples: int = 9,
    resolution: int | None = None,
    bound_deltas=(),
) -> OrderAlphaFit:
    """Least-squares slope of log(N0(E+d) - N0(E-d)) against log d.

    ``gamma`` is the fitted prefactor.  ``gamma_bound`` is SAFETY_FACTOR
    times the largest mass / d^alpha over the fit grid and ``bound_deltas``,
    a constant usable as an upper bound on those windows.
    """
    lo, hi = map(float, delta_range)
    if not 0 < lo < hi:
        raise ValueError("need 0 < delta_min < delta_max")
    if samples < 5:
        raise ValueError("need at least 5 samples")
    n = resolution or default_resolution(kernel.dimension)
    _check_resolution(kernel, lo, n)
    deltas = np.geomspace(lo, hi, samples)
    mass, _ = free_window(kernel, E, deltas, n)
    nz = mass > 0
    if not nz.any():
        return OrderAlphaFit(float(E), math.inf, 0.0, 0.0, (lo, hi), deltas, mass)
    if nz.sum() < 2:
        return OrderAlphaFit(float(E), math.nan, math.nan, math.nan, (lo, hi), deltas, mass, True)
    x, y = np.log(deltas[nz]), np.log(mass[nz])
    (alpha, icpt), res, *_ = np.polyfit(x, y, 1, full=True)
    resid = float(np.sqrt(res[0] / nz.sum())) if res.size else 0.0
    extra = np.asarray(bound_deltas, dtype=float)
    if extra.size:
        extra_mass, _ = free_window(kernel, E, extra, n)
        bd, bm = np.concatenate([deltas, extra]), np.concatenate([mass, extra_mass])
    else:
        bd, bm = deltas, mass
    bound = SAFETY_FACTOR * float(np.max(bm / bd**alpha))
    return OrderAlphaFit(
        float(E), float(alpha), float(np.exp(icpt)), resid, (lo, hi), deltas, mass, bool((~nz).any()), bound
    )
