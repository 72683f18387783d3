"""Window masses, Wegner and Hoelder-bound checks, Cauchy closed form, self-energy."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .disorder import DisorderModel, density_bound, standardize
from .freedos import OrderAlphaFit, RegularPointEstimate, free_window
from .lattice import BoxSpec, HoppingKernel, symbol_eval
from .spectral import (
    ResolventProfiles,
    SpectrumSample,
    ensemble_spectra,
    kpm_window,
    resolvent_profiles,
    window_count,
)

N_SIGMA = 3.0


class UnclassifiedEnergyError(ValueError):
    pass


# -- window masses ---------------------------------------------------------------


@dataclass(frozen=True)
class WindowMass:
    E: float
    delta: float
    lam: float
    mass: float
    stderr: float
    ensemble: int
    L: int
    method: str
    bias: float = 0.0

    def to_dict(self):
        return dict(self.__dict__)


def _sample_mass(s: SpectrumSample, E: float, delta: float) -> tuple[float, float]:
    if s.method == "dense":
        return window_count(s, E, delta), 0.0
    w = kpm_window(s, E, delta)
    return w.mass, w.bias


def mass_from_samples(samples: Sequence[SpectrumSample], E: float, delta: float, L: int) -> WindowMass:
    """Ensemble mean window mass and standard error of the mean."""
    per = np.array([_sample_mass(s, E, delta) for s in samples])
    m = per[:, 0]
    se = float(m.std(ddof=1) / math.sqrt(m.size)) if m.size > 1 else math.nan
    return WindowMass(
        float(E), float(delta), float(samples[0].lam), float(m.mean()), se, m.size, L,
        samples[0].method, float(per[:, 1].max()),
    )


def window_mass(
    kernel: HoppingKernel,
    model: DisorderModel,
    box: BoxSpec,
    lam: float,
    E: float,
    delta: float,
    ensemble: int,
    seed: int,
    method: str = "auto",
    n_moments: int = 1024,
    threads: int | None = None,
) -> WindowMass:
    if delta < 0:
        raise ValueError("window half-width must be >= 0")
    samples = ensemble_spectra(kernel, model, box, lam, ensemble, seed, method, n_moments, threads)
    return mass_from_samples(samples, E, delta, box.L)


@dataclass(frozen=True)
class WegnerCheck:
    passed: bool
    bound: float
    margin: float
    tolerance: float


def wegner_bound(model: DisorderModel, lam: float, delta: float) -> float:
    if not lam > 0:
        raise ValueError("Wegner bound needs lam > 0 (it is vacuous at lam = 0)")
    return 2 * delta * density_bound(model) / lam


def wegner_check(w: WindowMass, model: DisorderModel) -> WegnerCheck:
    """Pass iff mass <= 2 delta ||rho||_inf / lam + 3 stderr."""
    bound = wegner_bound(model, w.lam, w.delta)
    tol = N_SIGMA * (w.stderr if math.isfinite(w.stderr) else 0.0)
    return WegnerCheck(w.mass <= bound + tol, bound, bound - w.mass, tol)


# -- Hoelder bounds ----------------------------------------------------------------


def holder_exponents(alpha: float, q: float) -> tuple[float, float]:
    """Powers of lam and delta in the cross term of the order-alpha bound."""
    r = 1.0 if math.isinf(alpha) else alpha / (2 + alpha)
    s = 0.0 if math.isinf(q) else 2.0 / q
    return r * (1 + s), r * (1 - s)


def uniform_exponent(alpha: float, q: float) -> float:
    """lam-uniform Hoelder exponent obtained by combining with the Wegner bound."""
    a = 1.0 if math.isinf(alpha) else alpha / (alpha + 1)
    if math.isinf(q):
        return a
    return a * (1 - 1 / (q / a + 1))


@dataclass
class HolderBoundReport:
    energy: float
    lambdas: list[float]
    deltas: list[float]
    masses: np.ndarray  # (n_lambda, n_delta)
    stderrs: np.ndarray
    alpha: float
    gamma: float
    q: float
    lam_exponent: float
    delta_exponent: float
    constant: float
    background: np.ndarray  # (n_delta,)
    bounds: np.ndarray  # background + C lam^p delta^r
    passed: np.ndarray
    wegner: np.ndarray
    uniform_exponent: float
    uniform_constant: float
    fitted_delta_slope: float
    ensemble: int
    L: int
    finite_size_allowance: float

    @property
    def all_passed(self) -> bool:
        return bool(np.all(self.passed))

    def consistent(self) -> bool:
        tol = N_SIGMA * np.nan_to_num(self.stderrs)
        ok = self.masses <= self.bounds + tol
        return bool(np.all(ok == self.passed))

    def to_dict(self):
        def clean(x):
            return None if isinstance(x, float) and math.isinf(x) else x

        return {
            "energy": self.energy,
            "lambdas": list(self.lambdas),
            "deltas": list(self.deltas),
            "masses": self.masses.tolist(),
            "stderrs": self.stderrs.tolist(),
            "alpha": clean(self.alpha),
            "gamma": self.gamma,
            "q": clean(self.q),
            "lam_exponent": self.lam_exponent,
            "delta_exponent": self.delta_exponent,
            "constant": self.constant,
            "background": self.background.tolist(),
            "bounds": self.bounds.tolist(),
            "passed": self.passed.tolist(),
            "all_passed": self.all_passed,
            "wegner": self.wegner.tolist(),
            "uniform_exponent": self.uniform_exponent,
            "uniform_constant": self.uniform_constant,
            "fitted_delta_slope": self.fitted_delta_slope,
            "ensemble": self.ensemble,
            "L": self.L,
            "finite_size_allowance": self.finite_size_allowance,
        }


def holder_report_from_masses(
    E: float,
    lambdas: Sequence[float],
    deltas: Sequence[float],
    masses: np.ndarray,
    stderrs: np.ndarray,
    classification: RegularPointEstimate | OrderAlphaFit | None,
    model: DisorderModel,
    ensemble: int = 0,
    L: int = 0,
) -> HolderBoundReport:
    """Build the report from a (lam x delta) mass table.

    The cross-term constant is fitted on the largest-lam row (the smallest
    value making every cell of that row hold without noise allowance) and
    reused for every other row.
    """
    if classification is None:
        raise UnclassifiedEnergyError(
            f"energy {E} has not been classified; run free-dos (regular_constant or order_alpha_fit) first"
        )
    if isinstance(classification, RegularPointEstimate):
        if not classification.regular:
            raise UnclassifiedEnergyError(f"energy {E} is not a regular point; classify it with order_alpha_fit")
        alpha, gamma = 1.0, float(classification.gamma)
    else:
        alpha = float(classification.alpha)
        gamma = float(classification.gamma_bound if math.isfinite(classification.gamma_bound) else classification.gamma)
        if math.isnan(alpha):
            raise UnclassifiedEnergyError(f"order-alpha fit at {E} is unusable")
    q = model.q if model.q is not None else math.nan
    if not q > 2:
        raise ValueError("the Hoelder bounds need a moment order q > 2")
    lambdas = [float(x) for x in lambdas]
    deltas = [float(x) for x in deltas]
    lam = np.asarray(lambdas)
    dl = np.asarray(deltas)
    masses = np.asarray(masses, dtype=float)
    stderrs = np.nan_to_num(np.asarray(stderrs, dtype=float))
    p_lam, p_delta = holder_exponents(alpha, q)
    background = np.zeros_like(dl) if math.isinf(alpha) else gamma * dl**alpha
    top = int(np.argmax(lam))
    scale = lam[top] ** p_lam * dl**p_delta
    C = float(max(0.0, np.max((masses[top] - background) / scale)))
    bounds = background[None, :] + C * lam[:, None] ** p_lam * dl[None, :] ** p_delta
    passed = masses <= bounds + N_SIGMA * stderrs
    with np.errstate(divide="ignore"):
        wegner = 2 * dl[None, :] * density_bound(model) / lam[:, None]
    e_c = uniform_exponent(alpha, q)
    C_cor = float(np.max(masses / dl[None, :] ** e_c))
    envelope = masses.max(axis=0)
    pos = envelope > 0
    slope = float(np.polyfit(np.log(dl[pos]), np.log(envelope[pos]), 1)[0]) if pos.sum() >= 2 else math.nan
    return HolderBoundReport(
        float(E), lambdas, deltas, masses, stderrs, alpha, gamma, q, p_lam, p_delta, C, background,
        bounds, passed, wegner, e_c, C_cor, slope, ensemble, L, 2.0 / L if L else 0.0,
    )


def holder_bound_report(
    kernel: HoppingKernel,
    model: DisorderModel,
    box: BoxSpec,
    E: float,
    lambdas: Sequence[float],
    deltas: Sequence[float],
    ensemble: int,
    seed: int,
    classification: RegularPointEstimate | OrderAlphaFit | None,
    method: str = "auto",
    n_moments: int = 1024,
    threads: int | None = None,
) -> HolderBoundReport:
    if classification is None:
        raise UnclassifiedEnergyError(
            f"energy {E} has not been classified; run free-dos (regular_constant or order_alpha_fit) first"
        )
    masses = np.zeros((len(lambdas), len(deltas)))
    errs = np.zeros_like(masses)
    for i, lam in enumerate(lambdas):
        samples = ensemble_spectra(kernel, model, box, lam, ensemble, seed, method, n_moments, threads)
        for j, d in enumerate(deltas):
            w = mass_from_samples(samples, E, d, box.L)
            masses[i, j], errs[i, j] = w.mass, w.stderr
    return holder_report_from_masses(E, lambdas, deltas, masses, errs, classification, model, ensemble, box.L)


# -- Cauchy disorder --------------------------------------------------------------


def _torus_grid(d: int, n: int) -> np.ndarray:
    axis = 2 * np.pi * np.arange(n) / n
    return np.stack(np.meshgrid(*[axis] * d, indexing="ij"), axis=-1)


@dataclass(frozen=True)
class QuadratureValue:
    value: float
    error: float


def _torus_average(kernel: HoppingKernel, fn, resolution: int) -> QuadratureValue:
    def avg(n):
        eps = symbol_eval(kernel, _torus_grid(kernel.dimension, n))
        return float(np.mean(fn(np.asarray(eps))))

    fine, coarse = avg(resolution), avg(resolution // 2)
    return QuadratureValue(fine, abs(fine - coarse))


def cauchy_density(kernel: HoppingKernel, lam: float, E: float, resolution: int = 4096) -> QuadratureValue:
    """DOS density for Cauchy(1) disorder: (1/pi) < lam / ((eps - E)^2 + lam^2) >."""
    if not lam > 0:
        raise ValueError("lam must be > 0")
    return _torus_average(kernel, lambda e: lam / ((e - E) ** 2 + lam**2) / math.pi, resolution)


def cauchy_closed_form(
    kernel: HoppingKernel, lam: float, E: float, delta: float, resolution: int = 4096
) -> QuadratureValue:
    """Window mass for Cauchy(1) disorder.

    The energy integral of the Lorentzian is done analytically, leaving a
    torus average evaluated by the periodic trapezoid rule.
    """
    if not lam > 0:
        raise ValueError("lam must be > 0")

    def f(e):
        return (np.arctan((E + delta - e) / lam) - np.arctan((E - delta - e) / lam)) / math.pi

    return _torus_average(kernel, f, resolution)


# -- self-energy --------------------------------------------------------------------


@dataclass
class SelfEnergyEstimate:
    z: complex
    lam: float
    momenta: np.ndarray  # (N, d) dual grid
    gamma: np.ndarray  # complex, per momentum
    gamma_err: np.ndarray
    resolvent_symbol: np.ndarray
    resolvent_symbol_err: np.ndarray
    symbol: np.ndarray
    unreliable: np.ndarray
    limit_value: complex
    ensemble: int
    min_imag_diagonal: float

    @property
    def min_imag(self) -> float:
        return float(self.gamma.imag.min())

    @property
    def mean_gamma(self) -> complex:
        return complex(self.gamma.mean())

    @property
    def limit_deviation(self) -> float:
        return abs(self.mean_gamma - self.limit_value)

    def reconstructed_symbol(self) -> np.ndarray:
        return 1.0 / (self.symbol - self.z - self.lam**2 * self.gamma)

    def roundtrip_error(self) -> float:
        return float(np.max(np.abs(self.reconstructed_symbol() - self.resolvent_symbol)))

    def summary(self):
        return {
            "z": [self.z.real, self.z.imag],
            "lam": self.lam,
            "ensemble": self.ensemble,
            "min_imag_gamma": self.min_imag,
            "mean_gamma": [self.mean_gamma.real, self.mean_gamma.imag],
            "limit_value": [self.limit_value.real, self.limit_value.imag],
            "limit_deviation": self.limit_deviation,
            "roundtrip_error": self.roundtrip_error(),
            "unreliable_cells": int(self.unreliable.sum()),
            "min_imag_resolvent_diagonal": self.min_imag_diagonal,
        }


def free_local_resolvent(kernel: HoppingKernel, z: complex, resolution: int = 4096) -> complex:
    """(2 pi)^-d int (eps(q) - z)^-1 dq by the periodic trapezoid rule."""
    eps = symbol_eval(kernel, _torus_grid(kernel.dimension, resolution))
    return complex(np.mean(1.0 / (np.asarray(eps) - z)))


def self_energy_from_profiles(
    kernel: HoppingKernel, profiles: ResolventProfiles, noise_sigmas: float = 5.0
) -> SelfEnergyEstimate:
    box, z, lam = profiles.box, profiles.z, profiles.lam
    if not lam > 0:
        raise ValueError("self-energy extraction divides by lam^2; lam must be > 0")
    shape = (profiles.ensemble,) + box.shape
    axes = tuple(range(1, box.dimension + 1))
    # r(z;k) = sum_xi e^{-i k.xi} g(xi): a forward FFT over the box
    per = np.fft.fftn(profiles.profiles.reshape(shape), axes=axes).reshape(profiles.ensemble, -1)
    r = per.mean(axis=0)
    n = per.shape[0]
    r_err = np.sqrt(np.sum(np.abs(per - r) ** 2, axis=0) / max(n - 1, 1) / n) if n > 1 else np.zeros(r.shape)
    k = box.dual_grid()
    eps = np.asarray(symbol_eval(kernel, k))
    gamma = (eps - z - 1.0 / r) / lam**2
    gamma_err = r_err / np.abs(r) ** 2 / lam**2
    unreliable = np.abs(r) < noise_sigmas * r_err
    limit = free_local_resolvent(kernel, z)
    return SelfEnergyEstimate(
        z, lam, k, gamma, gamma_err, r, r_err, eps, unreliable, limit, n,
        float(profiles.min_imag_diagonal.min()),
    )


def extract_self_energy(
    kernel: HoppingKernel,
    model: DisorderModel,
    box: BoxSpec,
    lam: float,
    z: complex,
    ensemble: int,
    seed: int,
    threads: int | None = None,
) -> SelfEnergyEstimate:
    """Gamma_lam(z;k) on the box's dual grid from the averaged resolvent."""
    if not lam > 0:
        raise ValueError("self-energy extraction divides by lam^2; lam must be > 0")
    if not model.standardized:
        raise ValueError("self-energy extraction needs a standardized model (mean 0, variance 1)")
    profiles = resolvent_profiles(kernel, model, box, lam, z, ensemble, seed, threads)
    return self_energy_from_profiles(kernel, profiles)


# -- conjecture probe ---------------------------------------------------------------


@dataclass
class ConjectureProbe:
    E0: float
    half_width: float
    h: float
    lambdas: list[float]
    energies: np.ndarray
    densities: np.ndarray  # (n_lambda, n_E) window mass / 2h
    stderrs: np.ndarray
    max_density: np.ndarray
    ratios: np.ndarray
    log_slope: float
    smooth_level_sets: bool

    def to_dict(self):
        return {
            "E0": self.E0,
            "half_width": self.half_width,
            "h": self.h,
            "lambdas": self.lambdas,
            "energies": self.energies.tolist(),
            "densities": self.densities.tolist(),
            "stderrs": self.stderrs.tolist(),
            "max_density": self.max_density.tolist(),
            "successive_ratios": self.ratios.tolist(),
            "log_slope_vs_lambda": self.log_slope,
            "smooth_level_sets_asserted": self.smooth_level_sets,
        }


def conjecture_probe(
    kernel: HoppingKernel,
    model: DisorderModel,
    box: BoxSpec,
    E0: float,
    half_width: float,
    lambdas: Sequence[float],
    ensemble: int,
    seed: int,
    h: float = 0.05,
    n_energies: int = 11,
    smooth_level_sets: bool = True,
    method: str = "auto",
    n_moments: int = 1024,
    threads: int | None = None,
    resolution: int | None = None,
) -> ConjectureProbe:
    """Max of window mass / 2h over E in [E0 - w/2, E0 + w/2], per lam.

    A lam = 0 entry uses the infinite-volume free IDS.  ``log_slope`` is the
    slope of log(max density) against log(lam) over the positive lam; about
    zero for a bounded sequence, about -1 for the 1/lam Wegner scaling.
    """
    if not model.has_all_moments:
        raise ValueError("the probe needs a density with moments of all orders")
    energies = probe_energies(E0, half_width, n_energies)
    dens = np.zeros((len(lambdas), n_energies))
    errs = np.zeros_like(dens)
    for i, lam in enumerate(lambdas):
        if lam == 0:
            for j, E in enumerate(energies):
                m, e = free_window(kernel, E, [h], resolution)
                dens[i, j], errs[i, j] = m[0] / (2 * h), e[0] / (2 * h)
            continue
        samples = ensemble_spectra(kernel, model, box, lam, ensemble, seed, method, n_moments, threads)
        for j, E in enumerate(energies):
            w = mass_from_samples(samples, E, h, box.L)
            dens[i, j], errs[i, j] = w.mass / (2 * h), w.stderr / (2 * h)
    return summarize_probe(E0, half_width, h, lambdas, energies, dens, errs, smooth_level_sets)


def probe_energies(E0: float, half_width: float, n_energies: int) -> np.ndarray:
    return np.linspace(E0 - half_width / 2, E0 + half_width / 2, n_energies)


def summarize_probe(E0, half_width, h, lambdas, energies, dens, errs, smooth_level_sets=True) -> ConjectureProbe:
    dens = np.asarray(dens, dtype=float)
    errs = np.asarray(errs, dtype=float)
    mx = dens.max(axis=1)
    ratios = mx[1:] / mx[:-1] if mx.size > 1 else np.zeros(0)
    lam = np.asarray(lambdas, dtype=float)
    pos = (lam > 0) & (mx > 0)
    slope = float(np.polyfit(np.log(lam[pos]), np.log(mx[pos]), 1)[0]) if pos.sum() >= 2 else math.nan
    return ConjectureProbe(
        float(E0), float(half_width), float(h), [float(x) for x in lambdas], np.asarray(energies), dens,
        errs, mx, ratios, slope, smooth_level_sets,
    )
