import math

import numpy as np
import pytest

from idslab.analysis import (
    UnclassifiedEnergyError,
    WindowMass,
    cauchy_closed_form,
    cauchy_density,
    conjecture_probe,
    uniform_exponent,
    extract_self_energy,
    free_local_resolvent,
    holder_bound_report,
    holder_exponents,
    holder_report_from_masses,
    wegner_bound,
    wegner_check,
    window_mass,
)
from idslab.disorder import DisorderModel, standardize
from idslab.freedos import order_alpha_fit, regular_constant
from idslab.lattice import BoxSpec, free_spectrum, kernel_from_symbol, laplacian

LAP = laplacian(1)
ZERO = kernel_from_symbol("zero")
UNIFORM = DisorderModel.uniform()
STD_UNIFORM = standardize(UNIFORM)


def _mass(m, lam=1.0, delta=0.1, se=0.0):
    return WindowMass(0.0, delta, lam, m, se, 10, 64, "dense")


def test_window_mass_at_zero_coupling_is_free_grid_window():
    box = BoxSpec(1, 64)
    w = window_mass(LAP, UNIFORM, box, 0.0, 0.3, 0.5, 3, 0)
    ev = free_spectrum(LAP, box)
    assert w.mass == np.sum(np.abs(ev - 0.3) < 0.5) / 64
    assert w.stderr == 0.0


def test_zero_kernel_single_site_law():
    w = window_mass(ZERO, UNIFORM, BoxSpec(1, 1000), 1.0, 0.0, 0.25, 50, 1)
    assert abs(w.mass - 0.5) < 3 * w.stderr + 1e-12


def test_wegner_bound_examples():
    assert wegner_bound(UNIFORM, 1.0, 0.1) == pytest.approx(0.2)
    c = wegner_check(_mass(0.9, lam=0.01), UNIFORM)
    assert c.bound == pytest.approx(20.0) and c.passed
    bad = wegner_check(_mass(0.3), UNIFORM)
    assert not bad.passed and bad.margin == pytest.approx(-0.1)


def test_wegner_rejects_zero_coupling():
    with pytest.raises(ValueError):
        wegner_bound(UNIFORM, 0.0, 0.1)


def test_holder_exponents():
    assert holder_exponents(1.0, math.inf) == pytest.approx((1 / 3, 1 / 3))
    assert holder_exponents(math.inf, 4.0) == pytest.approx((1.5, 0.5))
    assert uniform_exponent(1.0, math.inf) == pytest.approx(0.5)
    q = 6.0
    assert uniform_exponent(1.0, q) == pytest.approx(0.5 * (1 - 1 / (2 * q + 1)))


def test_holder_report_fits_constant_on_largest_lambda():
    cls = regular_constant(LAP, 0.0, np.geomspace(0.1, 1e-4, 13))
    lams, deltas = [0.25, 0.5, 1.0], [0.05, 0.1]
    masses = np.array([[0.02, 0.04], [0.03, 0.05], [0.05, 0.09]])
    rep = holder_report_from_masses(0.0, lams, deltas, masses, np.zeros_like(masses), cls, UNIFORM)
    assert rep.lam_exponent == pytest.approx(1 / 3)
    top = rep.bounds[-1]
    assert np.all(masses[-1] <= top + 1e-15) and np.any(np.isclose(masses[-1], top))
    assert rep.consistent()


def test_holder_report_flags_violation():
    cls = regular_constant(LAP, 0.0, np.geomspace(0.1, 1e-4, 13))
    masses = np.array([[0.5], [0.05]])
    rep = holder_report_from_masses(0.0, [0.1, 1.0], [0.05], masses, np.zeros_like(masses), cls, UNIFORM)
    assert not rep.all_passed and rep.passed[-1, 0]


def test_holder_report_needs_classification():
    with pytest.raises(UnclassifiedEnergyError):
        holder_report_from_masses(0.0, [1.0], [0.1], np.ones((1, 1)), np.zeros((1, 1)), None, UNIFORM)
    edge = regular_constant(LAP, 2.0, np.geomspace(0.1, 1e-4, 13))
    with pytest.raises(UnclassifiedEnergyError, match="order_alpha_fit"):
        holder_report_from_masses(2.0, [1.0], [0.1], np.ones((1, 1)), np.zeros((1, 1)), edge, UNIFORM)


def test_holder_report_at_band_edge_runs():
    fit = order_alpha_fit(LAP, 2.0, (1e-4, 1e-2))
    rep = holder_bound_report(LAP, STD_UNIFORM, BoxSpec(1, 64), 2.0, [0.5, 1.0], [0.1, 0.2], 4, 3, fit)
    assert rep.alpha == pytest.approx(0.5, abs=0.01)
    assert rep.consistent()


def test_cauchy_central_density():
    v = cauchy_density(LAP, 1.0, 0.0)
    assert v.value == pytest.approx(1 / (math.pi * math.sqrt(5)), abs=1e-6)


def test_cauchy_density_zero_kernel_is_lorentzian():
    for lam, E in [(0.5, 0.0), (1.0, 0.7), (2.0, -1.0)]:
        want = lam / (E**2 + lam**2) / math.pi
        assert cauchy_density(ZERO, lam, E).value == pytest.approx(want, rel=1e-14)


def test_cauchy_large_lambda_asymptote():
    m = cauchy_closed_form(LAP, 100.0, 0.0, 0.2).value
    assert m == pytest.approx(2 * 0.2 / (math.pi * 100.0), rel=1e-3)


def test_cauchy_closed_form_integrates_density():
    E, d = 0.3, 0.05
    x = np.linspace(E - d, E + d, 2001)
    dens = np.array([cauchy_density(LAP, 1.0, e, 512).value for e in x])
    integral = np.sum((dens[1:] + dens[:-1]) / 2 * np.diff(x))
    assert cauchy_closed_form(LAP, 1.0, E, d, 512).value == pytest.approx(integral, rel=1e-6)


def test_free_local_resolvent_closed_form():
    assert free_local_resolvent(LAP, 1j) == pytest.approx(1j / math.sqrt(5), abs=1e-12)


def test_self_energy_guards():
    box = BoxSpec(1, 16)
    with pytest.raises(ValueError):
        extract_self_energy(LAP, STD_UNIFORM, box, 0.0, 1j, 4, 0)
    with pytest.raises(ValueError, match="standardized"):
        extract_self_energy(LAP, UNIFORM, box, 0.5, 1j, 4, 0)


def test_self_energy_roundtrip_and_herglotz():
    est = extract_self_energy(LAP, STD_UNIFORM, BoxSpec(1, 64), 0.3, 0.2 + 1j, 40, 2)
    assert est.roundtrip_error() <= 1e-12
    assert est.min_imag > -0.05
    assert est.gamma.shape == (64,)


def test_conjecture_probe_free_column():
    probe = conjecture_probe(LAP, STD_UNIFORM, BoxSpec(1, 32), 0.0, 0.4, [0.0], 1, 0, h=0.01, n_energies=5)
    E = probe.energies
    np.testing.assert_allclose(probe.densities[0], 1 / (math.pi * np.sqrt(4 - E**2)), rtol=1e-4)


def test_conjecture_probe_bounded_for_laplacian():
    probe = conjecture_probe(LAP, DisorderModel.gaussian(1.0), BoxSpec(1, 128), 0.0, 0.5,
                             [0.125, 0.25, 0.5, 1.0], 20, 4, h=0.1, n_energies=5)
    assert probe.max_density.max() < 0.4
    assert abs(probe.log_slope) < 0.2


def test_conjecture_probe_detects_zero_kernel_divergence():
    g = DisorderModel.gaussian(1.0)
    probe = conjecture_probe(ZERO, g, BoxSpec(1, 1000), 0.0, 0.1, [0.125, 0.25, 0.5, 1.0], 20, 5, h=0.02, n_energies=3)
    assert probe.log_slope == pytest.approx(-1.0, abs=0.1)


def test_conjecture_probe_needs_all_moments():
    with pytest.raises(ValueError):
        conjecture_probe(LAP, DisorderModel.cauchy(), BoxSpec(1, 16), 0.0, 0.2, [1.0], 2, 0)
