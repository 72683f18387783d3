import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from idslab.disorder import DisorderModel, sample_realization, standardize
from idslab.lattice import BoxSpec, assemble_hamiltonian, kernel_from_symbol, laplacian
from idslab.spectral import (
    MethodError,
    ResourceCapError,
    SpectrumSample,
    WindowResolutionError,
    averaged_resolvent_element,
    choose_method,
    dense_spectrum,
    ensemble_spectra,
    expansion_residual,
    jackson_kernel,
    kpm_spectrum,
    kpm_window,
    resolvent_profiles,
    second_order_expansion,
    window_count,
)

LAP = laplacian(1)
UNIFORM = DisorderModel.uniform()


def negative_inertia(A):
    """Number of negative eigenvalues from the LDL^T inertia (Sylvester)."""
    _, D, _ = sla.ldl(A)
    return int(np.sum(np.linalg.eigvalsh(D) < 0))  # D is block diagonal with 1x1 / 2x2 blocks


def sample_for(H):
    return SpectrumSample("dense", H.shape[0], 1.0, float(np.abs(H).sum(axis=1).max()), eigenvalues=np.linalg.eigvalsh(H))


def test_free_box_window_example():
    box = BoxSpec(1, 8)
    s = dense_spectrum(assemble_hamiltonian(LAP, box, 0.0, np.zeros(8)))
    ev = 2 * np.cos(2 * np.pi * np.arange(8) / 8)  # 2, r2, 0, -r2, -2, -r2, 0, r2
    inside = np.sum(np.abs(ev) < 1.5)
    assert inside == 6
    assert window_count(s, 0.0, 1.5) == inside / 8


def test_tied_endpoints_count_half():
    box = BoxSpec(1, 8)
    s = dense_spectrum(assemble_hamiltonian(LAP, box, 0.0, np.zeros(8)))
    # eigenvalues +-sqrt2 sit on the endpoints (twice each), 0 twice inside
    assert window_count(s, 0.0, math.sqrt(2)) == (2 + 0.5 * 4) / 8


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(-2, 2), st.floats(0.01, 3))
def test_window_count_matches_inertia(seed, E, delta):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(8, 8))
    H = (A + A.T) / 2
    n = 8
    want = negative_inertia(H - (E + delta) * np.eye(n)) - negative_inertia(H - (E - delta) * np.eye(n))
    assert window_count(sample_for(H), E, delta, tie_tol=0.0) * n == want


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.floats(-3, 3), st.lists(st.floats(0, 4), min_size=2, max_size=6))
def test_mass_monotone_in_delta(index, E, deltas):
    box = BoxSpec(1, 32)
    s = dense_spectrum(assemble_hamiltonian(LAP, box, 1.0, sample_realization(UNIFORM, box, 3, index)))
    masses = [window_count(s, E, d) for d in sorted(deltas)]
    assert all(b >= a for a, b in zip(masses, masses[1:]))


def test_full_window_is_one():
    box = BoxSpec(1, 64)
    ham = assemble_hamiltonian(LAP, box, 1.0, sample_realization(UNIFORM, box, 1, 0))
    s = dense_spectrum(ham)
    assert window_count(s, 0.0, ham.norm_bound + 1) == 1.0
    k = kpm_spectrum(ham, 256)
    assert k.moments[0] == pytest.approx(1.0, abs=1e-14)
    assert kpm_window(k, 0.0, k.half_width * 2).mass == pytest.approx(1.0, abs=1e-6)


def test_jackson_kernel_endpoints():
    g = jackson_kernel(128)
    assert g[0] == pytest.approx(1.0)
    assert np.all(np.diff(g) <= 0) and g[-1] >= 0


def test_kpm_matches_dense_free_chain():
    box = BoxSpec(1, 4096)
    ham = assemble_hamiltonian(LAP, box, 0.0, np.zeros(box.n_sites))
    dense = window_count(dense_spectrum(ham), 0.0, 0.2)
    kpm = kpm_window(kpm_spectrum(ham, 2048, seed=5), 0.0, 0.2)
    assert abs(kpm.mass - dense) <= 5e-3


@pytest.mark.parametrize("index", [0, 1, 2])
def test_kpm_dense_agreement_within_bias(index):
    box = BoxSpec(1, 512)
    ham = assemble_hamiltonian(LAP, box, 1.0, sample_realization(UNIFORM, box, 17, index))
    d, k = dense_spectrum(ham), kpm_spectrum(ham, 1024)
    for E, delta in [(0.0, 0.2), (1.0, 0.3), (-1.5, 0.25)]:
        w = kpm_window(k, E, delta)
        assert abs(w.mass - window_count(d, E, delta)) <= w.bias + 1e-3


def test_kpm_window_resolution_error():
    box = BoxSpec(1, 64)
    k = kpm_spectrum(assemble_hamiltonian(LAP, box, 0.0, np.zeros(64)), 64)
    with pytest.raises(WindowResolutionError, match="moments"):
        kpm_window(k, 0.0, 1e-3)


def test_method_guards():
    with pytest.raises(ResourceCapError):
        choose_method(BoxSpec(1, 5000), "dense")
    assert choose_method(BoxSpec(1, 5000)) == "kpm"
    with pytest.raises(MethodError):
        choose_method(BoxSpec(1, 10), "lanczos")
    box = BoxSpec(1, 16)
    s = dense_spectrum(assemble_hamiltonian(LAP, box, 0.0, np.zeros(16)))
    with pytest.raises(MethodError):
        kpm_window(s, 0.0, 0.5)


def test_ensemble_independent_of_threads():
    box = BoxSpec(1, 64)
    a = ensemble_spectra(LAP, UNIFORM, box, 0.5, 6, 9, threads=1)
    b = ensemble_spectra(LAP, UNIFORM, box, 0.5, 6, 9, threads=3)
    for x, y in zip(a, b):
        assert np.array_equal(x.eigenvalues, y.eigenvalues)


def test_free_local_resolvent_residue():
    box = BoxSpec(1, 256)
    est = averaged_resolvent_element(LAP, UNIFORM, box, 0.0, 1j, 0, 2, 0)
    assert est.mean == pytest.approx(1j / math.sqrt(5), abs=1e-12)


def test_zero_kernel_offdiagonal_vanishes():
    box = BoxSpec(1, 16)
    m = standardize(UNIFORM)
    est = averaged_resolvent_element(kernel_from_symbol("zero"), m, box, 1.0, 0.5 + 1j, 3, 5, 1)
    assert est.mean == 0


def test_resolvent_symmetry_and_herglotz():
    box = BoxSpec(1, 64)
    prof = resolvent_profiles(LAP, UNIFORM, box, 1.0, 0.3 + 0.2j, 10, 4)
    for xi in (1, 2, 5):
        a = averaged_resolvent_element(LAP, UNIFORM, box, 1.0, 0.3 + 0.2j, xi, 10, 4, profiles=prof)
        b = averaged_resolvent_element(LAP, UNIFORM, box, 1.0, 0.3 + 0.2j, -xi, 10, 4, profiles=prof)
        assert a.mean == pytest.approx(b.mean, abs=1e-12)
    assert np.all(prof.min_imag_diagonal > 0)


def test_translation_average_is_unbiased():
    box = BoxSpec(1, 64)
    prof = resolvent_profiles(LAP, UNIFORM, box, 1.0, 0.5j, 60, 8)
    for xi in (0, 1, 3):
        t = averaged_resolvent_element(LAP, UNIFORM, box, 1.0, 0.5j, xi, 60, 8, profiles=prof)
        o = averaged_resolvent_element(LAP, UNIFORM, box, 1.0, 0.5j, xi, 60, 8, translation_average=False, profiles=prof)
        assert abs(t.mean - o.mean) < 3 * math.hypot(t.stderr, o.stderr)
        assert t.stderr <= o.stderr


def test_small_imaginary_part_rejected():
    with pytest.raises(ValueError):
        averaged_resolvent_element(LAP, UNIFORM, BoxSpec(1, 8), 1.0, 0.05j, 0, 1, 0)


@pytest.mark.parametrize("seed", range(5))
def test_second_order_expansion_identity(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(8, 8))
    H0 = (A + A.T) / 2
    V = np.diag(rng.uniform(-1, 1, 8))
    assert expansion_residual(H0, V, 0.7, 0.4 + 0.3j) <= 1e-12
    R0, first, second, R = second_order_expansion(H0, V, 0.0, 0.3j)
    assert np.array_equal(R0, R) and not first.any()
