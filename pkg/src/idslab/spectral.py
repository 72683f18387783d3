"""Finite-volume spectral engine: eigencounts, KPM moments, averaged resolvents."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import ordered_map
from .disorder import DisorderModel, sample_realization
from .lattice import BoxSpec, HoppingKernel, LatticeHamiltonian, assemble_hamiltonian

DENSE_MAX_SITES = 4096
EXACT_TRACE_MAX_SITES = 1024
MIN_MOMENTS = 64
KPM_PADDING = 0.01
MIN_IMAG_Z = 0.1


class ResourceCapError(RuntimeError):
    pass


class MethodError(ValueError):
    pass


class WindowResolutionError(ValueError):
    pass


@dataclass(eq=False)
class SpectrumSample:
    """Spectral data of one realization.

    Dense samples carry sorted eigenvalues; KPM samples carry normalized
    Chebyshev moments of the rescaled operator (H - center) / half_width.
    """

    method: str
    n_sites: int
    lam: float
    norm_bound: float
    index: int | None = None
    eigenvalues: np.ndarray | None = field(default=None, repr=False)
    moments: np.ndarray | None = field(default=None, repr=False)
    moment_probes: np.ndarray | None = field(default=None, repr=False)
    center: float = 0.0
    half_width: float = 1.0

    @property
    def interval(self) -> tuple[float, float]:
        return self.center - self.half_width, self.center + self.half_width


def dense_spectrum(ham: LatticeHamiltonian, index: int | None = None) -> SpectrumSample:
    n = ham.n_sites
    if n > DENSE_MAX_SITES:
        raise ResourceCapError(f"dense eigensolver capped at {DENSE_MAX_SITES} sites (got {n}); use method='kpm'")
    if ham.kernel.is_zero or all(not any(xi) for xi in ham.kernel.coefficients):
        ev = np.sort(ham.diagonal)
    else:
        ev = np.linalg.eigvalsh(ham.to_dense())
    return SpectrumSample("dense", n, ham.lam, ham.norm_bound, index, eigenvalues=ev)


def jackson_kernel(n_moments: int) -> np.ndarray:
    M = n_moments
    n = np.arange(M)
    a = math.pi / (M + 1)
    return ((M - n + 1) * np.cos(a * n) + np.sin(a * n) / math.tan(a)) / (M + 1)


def _probe_rng(seed: int, index: int) -> np.random.Generator:
    # spawn key (index, 1) keeps probes independent of the disorder stream (index,)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index), 1))
    return np.random.Generator(np.random.PCG64(ss))


def _chebyshev_block(Hs, V: np.ndarray, n_moments: int) -> np.ndarray:
    """Per-column moments <v|T_n(Hs)|v>, n < n_moments, by the doubling trick."""
    half = (n_moments + 1) // 2
    mu = np.zeros((n_moments, V.shape[1]))
    a0 = V
    a1 = Hs @ V
    mu0 = np.einsum("ij,ij->j", V, V)
    mu1 = np.einsum("ij,ij->j", V, a1)
    mu[0] = mu0
    if n_moments > 1:
        mu[1] = mu1
    for n in range(1, half + 1):
        if 2 * n < n_moments:
            mu[2 * n] = 2 * np.einsum("ij,ij->j", a1, a1) - mu0
        a2 = 2 * (Hs @ a1) - a0
        if 2 * n + 1 < n_moments:
            mu[2 * n + 1] = 2 * np.einsum("ij,ij->j", a2, a1) - mu1
        a0, a1 = a1, a2
    return mu


def kpm_spectrum(
    ham: LatticeHamiltonian,
    n_moments: int = 1024,
    index: int | None = None,
    seed: int = 0,
    n_random: int = 32,
    exact_trace_max: int = EXACT_TRACE_MAX_SITES,
    block: int = 256,
) -> SpectrumSample:
    """Chebyshev moments of the normalized DOS of one realization.

    Up to ``exact_trace_max`` sites the trace is exact (unit start vectors at
    every site); above it ``n_random`` Rademacher probes are used and their
    spread is kept for a statistical error.
    """
    if n_moments < MIN_MOMENTS:
        raise ValueError(f"KPM needs at least {MIN_MOMENTS} moments")
    n = ham.n_sites
    bound = ham.norm_bound
    half = bound / (1 - KPM_PADDING) if bound > 0 else 1.0
    Hs = ham.to_sparse() / half
    probes = None
    if n <= exact_trace_max:
        total = np.zeros(n_moments)
        for start in range(0, n, block):
            cols = np.arange(start, min(n, start + block))
            V = np.zeros((n, cols.size))
            V[cols, np.arange(cols.size)] = 1.0
            total += _chebyshev_block(Hs, V, n_moments).sum(axis=1)
        mu = total / n
    else:
        rng = _probe_rng(seed, 0 if index is None else index)
        V = rng.choice(np.array([-1.0, 1.0]), size=(n, n_random))
        probes = _chebyshev_block(Hs, V, n_moments).T / n
        mu = probes.mean(axis=0)
    return SpectrumSample(
        "kpm", n, ham.lam, bound, index, moments=mu, moment_probes=probes, center=0.0, half_width=half
    )


def _kpm_mass(moments: np.ndarray, xa: float, xb: float) -> float:
    M = moments.size
    g = jackson_kernel(M)
    ta, tb = math.acos(xa), math.acos(xb)
    n = np.arange(1, M)
    terms = g[1:] * moments[1:] * (np.sin(n * ta) - np.sin(n * tb)) / n
    return (g[0] * moments[0] * (ta - tb) + 2 * float(np.sum(terms))) / math.pi


@dataclass(frozen=True)
class KPMWindow:
    mass: float
    bias: float
    stat_error: float
    n_moments: int


def kpm_window(sample: SpectrumSample, E: float, delta: float, n_moments: int | None = None) -> KPMWindow:
    """Jackson-damped Chebyshev window mass over [E - delta, E + delta].

    ``bias`` is the change when only half the moments are used.
    """
    if sample.method != "kpm":
        raise MethodError("kpm_window needs a KPM sample; use window_count for dense samples")
    mu = sample.moments if n_moments is None else sample.moments[:n_moments]
    M = mu.size
    if M < MIN_MOMENTS:
        raise ValueError(f"KPM needs at least {MIN_MOMENTS} moments")
    a, b = sample.interval
    resolution = (b - a) * math.pi / M
    if delta < resolution:
        need = int(math.ceil((b - a) * math.pi / delta))
        raise WindowResolutionError(
            f"window half-width {delta:g} is below the kernel resolution {resolution:.3g}; "
            f"use at least {need} moments"
        )
    xa = float(np.clip((E - delta - sample.center) / sample.half_width, -1, 1))
    xb = float(np.clip((E + delta - sample.center) / sample.half_width, -1, 1))
    mass = _kpm_mass(mu, xa, xb)
    bias = abs(mass - _kpm_mass(mu[: M // 2], xa, xb))
    stat = 0.0
    if sample.moment_probes is not None:
        per = np.array([_kpm_mass(p[:M], xa, xb) for p in sample.moment_probes])
        stat = float(per.std(ddof=1) / math.sqrt(per.size)) if per.size > 1 else 0.0
    return KPMWindow(mass, bias, stat, M)


def tie_tolerance(sample: SpectrumSample) -> float:
    scale = max(1.0, float(np.max(np.abs(sample.eigenvalues), initial=0.0)))
    return 1e-10 * scale


def window_count(sample: SpectrumSample, E: float, delta: float, tie_tol: float | None = None) -> float:
    """Normalized count of eigenvalues in (E - delta, E + delta), endpoints weighted 1/2.

    Eigenvalues within ``tie_tol`` of an endpoint count as hitting it; the
    default is 1e-10 relative to the spectral radius so that the exact ties of
    a translation-invariant spectrum survive eigensolver roundoff.
    """
    if sample.method != "dense":
        raise MethodError("window_count needs a dense sample; use kpm_window for KPM samples")
    ev = sample.eigenvalues
    tol = tie_tolerance(sample) if tie_tol is None else tie_tol
    lo, hi = E - delta, E + delta

    def closed(a, b):
        return int(np.searchsorted(ev, b, side="right") - np.searchsorted(ev, a, side="left"))

    at_lo = closed(lo - tol, lo + tol)
    # a degenerate window has a single endpoint
    at_hi = closed(hi - tol, hi + tol) if delta > tol else 0
    inside = int(np.searchsorted(ev, hi - tol, side="left") - np.searchsorted(ev, lo + tol, side="right"))
    inside = max(inside, 0)
    return float(inside + 0.5 * (at_lo + at_hi)) / sample.n_sites


def ids_count(sample: SpectrumSample, E: float) -> float:
    """Fraction of eigenvalues strictly below E."""
    return float(np.searchsorted(sample.eigenvalues, E, side="left")) / sample.n_sites


def choose_method(box: BoxSpec, method: str = "auto") -> str:
    if method == "auto":
        return "dense" if box.n_sites <= DENSE_MAX_SITES else "kpm"
    if method == "dense" and box.n_sites > DENSE_MAX_SITES:
        raise ResourceCapError(
            f"dense eigensolver capped at {DENSE_MAX_SITES} sites (box has {box.n_sites}); use method='kpm'"
        )
    if method not in ("dense", "kpm"):
        raise MethodError(f"unknown spectral method {method!r}")
    return method


def ensemble_spectra(
    kernel: HoppingKernel,
    model: DisorderModel,
    box: BoxSpec,
    lam: float,
    ensemble: int,
    seed: int,
    method: str = "auto",
    n_moments: int = 1024,
    threads: int | None = None,
) -> list[SpectrumSample]:
    """Spectra of realizations 0..ensemble-1, in index order."""
    method = choose_method(box, method)

    def one(i):
        ham = assemble_hamiltonian(kernel, box, lam, sample_realization(model, box, seed, i))
        if method == "dense":
            return dense_spectrum(ham, i)
        return kpm_spectrum(ham, n_moments, index=i, seed=seed)

    return ordered_map(one, range(ensemble), threads)


# -- resolvents ----------------------------------------------------------------


def _check_z(z: complex):
    if not complex(z).imag >= MIN_IMAG_Z:
        raise ValueError(f"spectral parameter must have Im z >= {MIN_IMAG_Z} (no eta -> 0 limits)")


def resolvent(ham: LatticeHamiltonian, z: complex) -> np.ndarray:
    _check_z(z)
    if ham.n_sites > DENSE_MAX_SITES:
        raise ResourceCapError(f"direct resolvent capped at {DENSE_MAX_SITES} sites")
    H = ham.to_dense().astype(complex)
    H[np.diag_indices_from(H)] -= z
    return np.linalg.inv(H)


def displacement_average(G: np.ndarray, box: BoxSpec) -> np.ndarray:
    """g(xi) = (1/N) sum_x G[x + xi, x] for every box displacement xi (site order)."""
    coords = box.coordinates()
    n = box.n_sites
    cols = np.arange(n)
    out = np.empty(n, dtype=G.dtype)
    step = max(1, (1 << 22) // n)
    for start in range(0, n, step):
        xi = coords[start : start + step]
        rows = box.index(coords[None, :, :] + xi[:, None, :])
        out[start : start + step] = G[rows, cols[None, :]].mean(axis=1)
    return out


@dataclass(eq=False)
class ResolventProfiles:
    """Per-realization displacement profiles of (H - z)^-1."""

    z: complex
    box: BoxSpec
    lam: float
    profiles: np.ndarray  # (ensemble, N), translation averaged
    origin_columns: np.ndarray  # (ensemble, N), G[xi, 0]
    min_imag_diagonal: np.ndarray  # (ensemble,)
    seed: int

    @property
    def ensemble(self) -> int:
        return self.profiles.shape[0]


def resolvent_profiles(
    kernel: HoppingKernel,
    model: DisorderModel,
    box: BoxSpec,
    lam: float,
    z: complex,
    ensemble: int,
    seed: int,
    threads: int | None = None,
) -> ResolventProfiles:
    _check_z(z)
    if ensemble < 1:
        raise ValueError("ensemble must be >= 1")
    if box.n_sites > DENSE_MAX_SITES:
        raise ResourceCapError(f"direct resolvent capped at {DENSE_MAX_SITES} sites")

    def one(i):
        ham = assemble_hamiltonian(kernel, box, lam, sample_realization(model, box, seed, i))
        G = resolvent(ham, z)
        return displacement_average(G, box), G[:, 0].copy(), float(np.min(np.diagonal(G).imag))

    res = ordered_map(one, range(ensemble), threads)
    return ResolventProfiles(
        complex(z),
        box,
        float(lam),
        np.array([r[0] for r in res]),
        np.array([r[1] for r in res]),
        np.array([r[2] for r in res]),
        int(seed),
    )


@dataclass(frozen=True)
class ResolventEstimate:
    z: complex
    displacement: tuple[int, ...]
    mean: complex
    stderr: float
    ensemble: int
    translation_averaged: bool
    min_imag_diagonal: float


def _mean_and_stderr(x: np.ndarray) -> tuple[complex, float]:
    m = x.mean()
    if x.size < 2:
        return m, math.nan
    return m, float(np.sqrt(np.sum(np.abs(x - m) ** 2) / (x.size - 1) / x.size))


def averaged_resolvent_element(
    kernel: HoppingKernel,
    model: DisorderModel,
    box: BoxSpec,
    lam: float,
    z: complex,
    displacement,
    ensemble: int,
    seed: int,
    translation_average: bool = True,
    threads: int | None = None,
    profiles: ResolventProfiles | None = None,
) -> ResolventEstimate:
    """Ensemble mean of <delta_xi, (H - z)^-1 delta_0> with its standard error."""
    _check_z(z)
    xi = (displacement,) if np.isscalar(displacement) else tuple(displacement)
    if profiles is None:
        profiles = resolvent_profiles(kernel, model, box, lam, z, ensemble, seed, threads)
    j = int(box.index(np.asarray(xi)))
    data = profiles.profiles[:, j] if translation_average else profiles.origin_columns[:, j]
    m, se = _mean_and_stderr(data)
    return ResolventEstimate(
        complex(z), xi, complex(m), se, profiles.ensemble, translation_average,
        float(profiles.min_imag_diagonal.min()),
    )


def second_order_expansion(H0: np.ndarray, V: np.ndarray, lam: float, z: complex):
    """Terms of (H - z)^-1 = R0 - lam R0 V R0 + lam^2 R0 V R V R0, H = H0 + lam V.

    Returns ``(R0, first, second, R)`` with the exact resolvent ``R`` last.
    """
    n = H0.shape[0]
    eye = np.eye(n)
    R0 = np.linalg.solve(H0 - z * eye, eye.astype(complex))
    R = np.linalg.solve(H0 + lam * V - z * eye, eye.astype(complex))
    first = -lam * R0 @ V @ R0
    second = lam**2 * R0 @ V @ R @ V @ R0
    return R0, first, second, R


def expansion_residual(H0: np.ndarray, V: np.ndarray, lam: float, z: complex) -> float:
    R0, first, second, R = second_order_expansion(H0, V, lam, z)
    return float(np.max(np.abs(R0 + first + second - R)))
