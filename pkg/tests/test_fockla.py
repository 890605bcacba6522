import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from qbench import fockla
from qbench.errors import DimensionError, HermiticityError, InputError, TruncationError
from qbench.fockla import HermitianOperator, Truncation


def random_state(rng, d):
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def poisson_tail(x, dim):
    # direct Poisson series beyond the cutoff, evaluated in log space
    n = np.arange(dim, dim + 400)
    return math.fsum(np.exp(n * np.log(x) - x - gammaln(n + 1)))


# --- coherent states ------------------------------------------------------------


def test_vacuum_coherent_state_is_exact():
    psi = fockla.coherent_state(0.0, Truncation(10))
    expected = np.zeros(10)
    expected[0] = 1.0
    np.testing.assert_array_equal(psi.amplitudes, expected)
    assert psi.norm_deficit == 0.0


def test_coherent_amplitude_on_two_photons():
    psi = fockla.coherent_state(1.0, Truncation(30))
    assert abs(psi.amplitudes[2] - math.exp(-0.5) / math.sqrt(2)) < 1e-15


def test_coherent_norm_matches_poisson_tail():
    psi = fockla.coherent_state(2.0, Truncation(40))
    assert psi.norm_deficit < 1e-12
    assert abs(psi.norm_squared() - (1.0 - psi.norm_deficit)) < 1e-14
    assert abs(psi.norm_deficit - poisson_tail(4.0, 40)) < 1e-14


@pytest.mark.parametrize("alpha,dim", [(0.5, 8), (1 + 1j, 20), (3.0, 60), (-2j, 35)])
def test_coherent_deficit_is_tail_formula(alpha, dim):
    psi = fockla.coherent_state(alpha, Truncation(dim), ceiling=None)
    assert abs(psi.norm_deficit - poisson_tail(abs(alpha) ** 2, dim)) < 1e-14
    assert abs(1.0 - psi.norm_squared() - psi.norm_deficit) < 1e-14


def test_coherent_state_rejects_small_cutoff_with_hint():
    with pytest.raises(TruncationError) as info:
        fockla.coherent_state(3.0, Truncation(10))
    need = info.value.min_dim
    assert need > 10
    assert fockla.coherent_tail(9.0, need) <= 1e-8 < fockla.coherent_tail(9.0, need - 1)


def test_coherent_state_rejects_non_finite():
    with pytest.raises(InputError):
        fockla.coherent_state(complex(np.nan, 0), Truncation(5))


def test_large_amplitude_rows_do_not_overflow():
    amps = fockla.coherent_amplitudes([30.0, 0.0], 1500)
    assert np.all(np.isfinite(amps))
    assert abs(np.vdot(amps[0], amps[0]).real - 1.0) < 1e-12


# --- two-mode squeezing and thermal states ----------------------------------------


def test_two_mode_squeezed_vacuum_at_zero():
    psi = fockla.two_mode_squeezed(0.0, Truncation(6))
    t = psi.as_tensor()
    assert t[0, 0] == 1.0
    assert np.count_nonzero(t) == 1


def test_two_mode_squeezed_amplitude():
    psi = fockla.two_mode_squeezed(0.5, Truncation(20))
    assert abs(psi.as_tensor()[3, 3] - math.sqrt(0.75) * 0.125) < 1e-16
    assert abs(psi.norm_deficit - 0.5**40) < 1e-20


def test_two_mode_squeezed_rejects_unit_xi():
    with pytest.raises(InputError):
        fockla.two_mode_squeezed(1.0, Truncation(5))


def test_projecting_squeezed_state_onto_coherent():
    alpha, xi, d = 0.7 + 0.2j, 0.6, 40
    psi = fockla.two_mode_squeezed(xi, Truncation(d)).as_tensor()
    a = fockla.coherent_state(alpha, Truncation(d)).amplitudes
    lhs = a.conj() @ psi
    rhs = (
        math.sqrt(1 - xi**2)
        * math.exp(-(1 - xi**2) * abs(alpha) ** 2 / 2)
        * fockla.coherent_state(xi * alpha.conjugate(), Truncation(d)).amplitudes
    )
    assert np.abs(lhs - rhs).max() < 1e-10


def test_thermal_entries():
    rho = fockla.thermal_state(1.0, Truncation(30))
    assert abs(rho.matrix[2, 2] - 1 / 8) < 1e-16
    vac = fockla.thermal_state(0.0, Truncation(5))
    assert vac.matrix[0, 0] == 1.0 and vac.deficit == 0.0
    assert abs(vac.trace() - 1.0) < 1e-15


def test_thermal_mean_photon_number():
    nbar, d = 2.0, 80
    rho = fockla.thermal_state(nbar, Truncation(d))
    n = np.arange(d)
    q = nbar / (1 + nbar)
    # the truncated geometric series falls short of nbar by q^d (d + nbar)
    assert abs(n @ np.diag(rho.matrix).real - (nbar - q**d * (d + nbar))) < 1e-12
    assert abs(1.0 - rho.trace() - rho.deficit) < 1e-14


# --- operators ------------------------------------------------------------------


def test_hermitian_operator_rejects_non_hermitian():
    with pytest.raises(HermiticityError):
        HermitianOperator((2,), np.array([[0, 1], [0, 0]]))


def test_hermitian_operator_checks_dims():
    with pytest.raises(DimensionError):
        HermitianOperator((3,), np.eye(2))


def test_tensor_of_vacua():
    v = fockla.number_state(0, Truncation(3))
    out = fockla.tensor(v, v)
    assert out.mode_dims == (3, 3)
    assert out.amplitudes[0] == 1.0 and np.count_nonzero(out.amplitudes) == 1


def test_tensor_of_identities():
    out = fockla.tensor(fockla.identity_operator((2,)), fockla.identity_operator((3,)))
    np.testing.assert_array_equal(out.matrix, np.eye(6))


def test_tensor_trace_of_coherent_projector():
    psi = fockla.coherent_state(1.2, Truncation(30))
    rho = psi.projector()
    out = fockla.tensor(rho, fockla.DensityOperator((4,), np.diag([1.0, 0, 0, 0])))
    assert abs(out.trace() - psi.norm_squared()) < 1e-14


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_tensor_trace_is_multiplicative(da, db, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((da, da)) + 1j * rng.standard_normal((da, da))
    b = rng.standard_normal((db, db)) + 1j * rng.standard_normal((db, db))
    A = HermitianOperator((da,), a + a.conj().T)
    B = HermitianOperator((db,), b + b.conj().T)
    t = fockla.tensor(A, B).trace()
    assert abs(t - A.trace() * B.trace()) <= 1e-12 * max(1.0, abs(A.trace() * B.trace()))


def test_partial_transpose_of_product():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    b = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    A, B = a + a.conj().T, b + b.conj().T
    op = HermitianOperator((3, 2), np.kron(A, B))
    out = fockla.partial_transpose(op, 1)
    np.testing.assert_allclose(out.matrix, np.kron(A, B.T), atol=1e-14)
    sym = HermitianOperator((3, 2), np.kron(A, B.real + B.real.T))
    np.testing.assert_array_equal(fockla.partial_transpose(sym, 1).matrix, sym.matrix)


def test_partial_transpose_of_entangled_state_is_not_positive():
    psi = fockla.two_mode_squeezed(0.5, Truncation(20))
    rho = psi.projector()
    low = fockla.partial_transpose(rho, 1).min_eigenvalue()
    # the spectrum of the transposed pure state is +-c_m c_n; most negative is -c_0 c_1
    assert abs(low - (-0.75 * 0.5)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 1), st.integers(0, 2**32 - 1))
def test_partial_transpose_is_an_involution(da, db, mode, seed):
    rng = np.random.default_rng(seed)
    n = da * db
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    op = HermitianOperator((da, db), m + m.conj().T)
    twice = fockla.partial_transpose(fockla.partial_transpose(op, mode), mode)
    np.testing.assert_array_equal(twice.matrix, op.matrix)


def test_partial_transpose_rejects_bad_mode():
    with pytest.raises(DimensionError):
        fockla.partial_transpose(fockla.identity_operator((2, 2)), 2)


# --- eigenvalues ----------------------------------------------------------------


def test_max_eigenvalue_of_identity():
    assert fockla.max_eigenvalue(fockla.identity_operator((5,))) == pytest.approx(1.0, abs=1e-15)


def test_thermal_norm_with_vacuum_factor():
    s, kappa = 1.0, 1.0
    rho = fockla.thermal_state((1 + kappa**2) / s, Truncation(30))
    vac = fockla.DensityOperator((2,), np.diag([1.0, 0.0]))
    assert abs(fockla.max_eigenvalue(fockla.tensor(rho, vac)) - 1 / 3) < 1e-15


def test_flip_operator_spectrum():
    f = fockla.flip_operator(3)
    vals = f.eigenvalues()
    np.testing.assert_allclose(f.matrix @ f.matrix, np.eye(9), atol=0)
    assert set(np.round(vals, 12)) == {-1.0, 1.0}
    assert fockla.max_eigenvalue(f) == pytest.approx(1.0, abs=1e-14)


def test_flip_swaps_factors():
    rng = np.random.default_rng(11)
    a, b = random_state(rng, 4), random_state(rng, 4)
    out = fockla.flip_operator(4).matrix @ np.kron(a, b)
    np.testing.assert_allclose(out, np.kron(b, a), atol=1e-15)


def test_power_iteration_matches_dense():
    rng = np.random.default_rng(5)
    u, _ = np.linalg.qr(rng.standard_normal((600, 600)) + 1j * rng.standard_normal((600, 600)))
    spectrum = np.concatenate([[1.0, 0.8, 0.6], rng.uniform(-0.4, 0.4, 597)])
    op = HermitianOperator((600,), (u * spectrum) @ u.conj().T)
    dense = fockla.top_eigenpairs(op, 3, method="dense")
    power = fockla.top_eigenpairs(op, 3, method="power")
    for a, b, exact in zip(dense, power, [1.0, 0.8, 0.6]):
        assert abs(a.value - exact) < 1e-12
        assert abs(a.value - b.value) < 1e-9 * a.value
        assert abs(abs(np.vdot(a.vector, b.vector)) - 1.0) < 1e-9
    assert fockla.top_eigenpairs(op)[0].value == pytest.approx(dense[0].value, rel=1e-12)


def test_top_eigenpairs_rejects_unknown_method():
    with pytest.raises(InputError):
        fockla.top_eigenpairs(fockla.identity_operator((2,)), method="lanczos")


def test_norm_is_invariant_under_beam_splitter_conjugation():
    rng = np.random.default_rng(8)
    d = 12
    v = fockla.beam_splitter_isometry(0.7, Truncation(d))
    assert np.allclose(v.conj().T @ v, np.eye(d), atol=1e-14)
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = HermitianOperator((d,), g @ g.conj().T)
    conj = v @ h.matrix @ v.conj().T
    assert abs(fockla.max_eigenvalue(HermitianOperator((d, d), conj)) - fockla.max_eigenvalue(h)) < 1e-9


# --- beam splitter -----------------------------------------------------------------


def test_beam_splitter_keeps_vacuum():
    out = fockla.beam_splitter_on_vacuum(0, 2.5, Truncation(4)).as_tensor()
    assert out[0, 0] == 1.0 and np.count_nonzero(out) == 1


def test_beam_splitter_single_photon():
    out = fockla.beam_splitter_on_vacuum(1, 1.0, Truncation(3)).as_tensor()
    assert abs(out[1, 0] - 1 / math.sqrt(2)) < 1e-15
    assert abs(out[0, 1] - 1 / math.sqrt(2)) < 1e-15


def test_beam_splitter_splits_coherent_state():
    d = 40
    psi = fockla.coherent_state(math.sqrt(2) * 0.5, Truncation(d))
    out = fockla.beam_splitter_apply(psi, 1.0)
    half = fockla.coherent_state(0.5, Truncation(d)).amplitudes
    target = np.kron(half, half)
    assert abs(np.vdot(target, out.amplitudes)) ** 2 > 1 - 1e-10


# --- finite-dimensional helpers ----------------------------------------------------


def test_maximally_entangled_qubits():
    phi = fockla.maximally_entangled(2).amplitudes
    np.testing.assert_allclose(phi, np.array([1, 0, 0, 1]) / math.sqrt(2), atol=1e-16)


def test_conjugate_state_from_entangled_contraction():
    rng = np.random.default_rng(2)
    d = 5
    psi = random_state(rng, d)
    phi = fockla.maximally_entangled(d).as_tensor()
    contracted = math.sqrt(d) * (psi.conj() @ phi)
    conj = fockla.conjugate_state(fockla.StateVector((d,), psi)).amplitudes
    assert np.abs(contracted - conj).max() < 1e-14
