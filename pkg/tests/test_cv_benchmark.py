import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbench import channels, cv_benchmark, fockla
from qbench.cv_benchmark import GaussianTask, ProofParams
from qbench.errors import InputError, TruncationError
from qbench.fockla import Truncation
from qbench.report import Verdict


def loss_oracle(eta0, task):
    # int p_lam exp(-(sqrt(eta0 N) - sqrt(eta))^2 |a|^2) d^2a
    gap = (math.sqrt(eta0 * task.N) - math.sqrt(task.eta)) ** 2
    return task.lam / (task.lam + gap)


def loss_fidelity(eta0, task):
    trunc = cv_benchmark.default_truncation(task)
    return cv_benchmark.average_fidelity_cv(channels.loss_channel(eta0, trunc), task)


# --- closed form ---------------------------------------------------------------


def test_classical_limit_unit_task():
    assert cv_benchmark.classical_limit_cv(GaussianTask(1, 1, 1)) == 2 / 3


def test_classical_limit_flat_prior():
    assert abs(cv_benchmark.classical_limit_cv(GaussianTask(1, 1, 1e-300)) - 0.5) < 1e-15


def test_classical_limit_is_scale_invariant():
    a = cv_benchmark.classical_limit_cv(GaussianTask(2, 4, 6))
    b = cv_benchmark.classical_limit_cv(GaussianTask(0.5, 1, 1.5))
    assert a == b == 2 / 3


def test_task_validation():
    with pytest.raises(InputError):
        GaussianTask(0, 1, 1)
    with pytest.raises(InputError):
        GaussianTask(1, 1, float("inf"))


def test_task_scaling_forms():
    unit_gain, unit_input = cv_benchmark.task_scaling(GaussianTask(2, 4, 6))
    assert unit_gain == GaussianTask(0.5, 1, 1.5)
    assert unit_input == GaussianTask(1, 2, 3)
    fixed = GaussianTask(1, 1, 0.3)
    assert cv_benchmark.task_scaling(fixed)[0] == fixed


# --- simulated fidelities --------------------------------------------------------


@pytest.mark.parametrize("lam", [0.2, 1.0, 5.0])
def test_identity_channel_is_perfect(lam):
    # the shortfall is the truncated tail mass, so size the cutoff for a 1e-11 budget
    task = GaussianTask(1, 1, lam)
    ch = channels.identity_channel(cv_benchmark.default_truncation(task, ceiling=1e-11).dim)
    assert abs(cv_benchmark.average_fidelity_cv(ch, task) - 1.0) < 1e-10


def test_matched_loss_is_perfect():
    assert abs(loss_fidelity(0.49, GaussianTask(1, 0.49, 1)) - 1.0) < 1e-8


def test_loss_on_unit_gain_task():
    f = loss_fidelity(0.81, GaussianTask(1, 1, 1))
    assert abs(f - 1 / 1.01) < 1e-6


@pytest.mark.parametrize("eta0", [0.2, 0.5, 0.9])
@pytest.mark.parametrize("task", [GaussianTask(2, 0.5, 0.7), GaussianTask(0.5, 3, 2.0)])
def test_loss_fidelity_oracle(eta0, task):
    assert abs(loss_fidelity(eta0, task) - loss_oracle(eta0, task)) < 1e-6


@pytest.mark.parametrize("eta0", [0.3, 0.64])
def test_fidelity_agrees_across_parameterisations(eta0):
    # loss(eta0) on (N, eta, lam) versus loss(eta0) on (N/eta, 1, lam/eta) give the same average
    task = GaussianTask(2.0, 1.6, 1.2)
    unit = cv_benchmark.task_scaling(task)[0]
    assert abs(loss_fidelity(eta0, task) - loss_fidelity(eta0, unit)) < 2e-6


def test_fidelity_monotone_in_loss_mismatch():
    task = GaussianTask(1, 0.5, 1)
    mismatch = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
    f = [loss_fidelity(e, task) for e in mismatch]
    assert all(a >= b for a, b in zip(f, f[1:]))


def test_small_cutoff_is_refused_with_hint():
    task = GaussianTask(4, 4, 0.5)
    with pytest.raises(TruncationError) as info:
        cv_benchmark.average_fidelity_cv(channels.identity_channel(10), task)
    need = info.value.min_dim
    ch = channels.identity_channel(need)
    assert abs(cv_benchmark.average_fidelity_cv(ch, task) - 1.0) < 1e-8


@pytest.mark.parametrize("g", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_heterodyne_never_beats_limit(g):
    task = GaussianTask(1, 1, 1)
    ch = channels.heterodyne_mp_channel(g, cv_benchmark.default_truncation(task))
    f = cv_benchmark.average_fidelity_cv(ch, task)
    assert f <= cv_benchmark.classical_limit_cv(task) + 2e-3
    assert abs(f - 1 / (1 + g * g + (g - 1) ** 2)) < 1e-7


def test_certify_reports_quantum_domain_for_mild_loss():
    task = GaussianTask(1, 1, 1)
    ch = channels.loss_channel(0.81, cv_benchmark.default_truncation(task))
    rep = cv_benchmark.certify_cv(ch, task)
    assert rep.verdict is Verdict.QUANTUM_DOMAIN
    assert rep.margin > 0.32
    assert rep.diagnostics.quadrature_spec == {"radial_nodes": 32, "angular_nodes": 32, "lambda_weight": 1.0}


def test_certify_is_inconclusive_for_attaining_channel():
    task = GaussianTask(1, 1, 1)
    ch = channels.heterodyne_mp_channel(0.5, cv_benchmark.default_truncation(task))
    assert cv_benchmark.certify_cv(ch, task).verdict is Verdict.INCONCLUSIVE


# --- proof parameters ---------------------------------------------------------------


def test_params_at_zero_s():
    pp = cv_benchmark.params_from_task(GaussianTask(1, 1, 3), 0.5)
    assert pp.kappa == 2.0 and pp.s == 0.0


def test_params_with_positive_s():
    task = GaussianTask(1, 1, 4)
    pp = cv_benchmark.params_from_task(task, 0.5)
    assert pp.kappa == 2.0 and abs(pp.s - 1.0) < 1e-15
    lhs = task.lam / (1 - pp.xi**2)
    assert abs(lhs - 16 / 3) < 1e-15
    assert lhs > task.N + task.lam


def test_tight_point():
    task = GaussianTask(1, 1, 1)
    pp = cv_benchmark.params_from_task(task, "tight")
    assert pp.s == 0.0 and abs(pp.xi - math.sqrt(0.5)) < 1e-16


def test_params_reject_negative_s():
    with pytest.raises(InputError, match="negative"):
        cv_benchmark.params_from_task(GaussianTask(1, 1, 1), 0.5)
    with pytest.raises(InputError):
        cv_benchmark.params_from_task(GaussianTask(1, 2, 1), 0.9)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 10), st.floats(0.05, 10), st.floats(0.0, 1.0))
def test_param_map_is_consistent(N, lam, t):
    task = GaussianTask(N, 1, lam)
    lo = math.sqrt(N / (N + lam))
    xi = lo + t * (1 - lo) * 0.999
    pp = cv_benchmark.params_from_task(task, xi if t > 0 else "tight")
    r_lam, r_n = pp.residuals(task)
    assert r_lam <= 1e-13 * max(1.0, lam, N / xi**2)
    assert r_n <= 1e-13 * max(1.0, math.sqrt(N))
    # the printed direction only holds at s = 0; the derived relation holds always
    lhs = lam / (1 - pp.xi**2)
    rhs = N + lam + pp.s * pp.xi**2 / (1 - pp.xi**2)
    assert abs(lhs - rhs) <= 1e-9 * lhs
    bound = lam / ((1 - pp.xi**2) * (N + lam + 1))
    assert cv_benchmark.classical_limit_cv(task) <= bound * (1 + 1e-12)


# --- J-integral ---------------------------------------------------------------------------


def test_j_integral_identity_channel():
    pp = ProofParams(1.0, 2.0, 0.5)
    j = cv_benchmark.j_integral(channels.identity_channel(60), pp)
    assert abs(j - 0.1875) < 1e-6


def test_j_integral_without_squeezing():
    s, kappa = 1.0, 2.0
    j = cv_benchmark.j_integral(channels.identity_channel(60), ProofParams(s, kappa, 0.0))
    assert abs(j - s / (s + 1 + kappa**2)) < 1e-10


@pytest.mark.parametrize(
    "make",
    [
        lambda t: channels.identity_channel(t.dim),
        lambda t: channels.loss_channel(0.3, t),
        lambda t: channels.loss_channel(0.7, t),
        lambda t: channels.heterodyne_mp_channel(0.4, t),
    ],
    ids=["identity", "loss0.3", "loss0.7", "heterodyne"],
)
@pytest.mark.parametrize("xi", ["tight", 0.8])
def test_j_rate_matches_fidelity(make, xi):
    task = GaussianTask(1, 1, 1)
    pp = cv_benchmark.params_from_task(task, xi)
    ch = make(cv_benchmark.default_truncation(task))
    rate = cv_benchmark.j_integral_rate(ch, pp)
    f = cv_benchmark.average_fidelity_cv(ch, task)
    assert abs(rate - (1 - pp.xi**2) * f / task.lam) < 5e-6


def test_j_integral_loss_cross_check():
    task = GaussianTask(1, 1, 1)
    pp = cv_benchmark.params_from_task(task, 0.8)
    ch = channels.loss_channel(0.7, cv_benchmark.default_truncation(task))
    j = cv_benchmark.j_integral(ch, pp)
    expected = pp.s * (1 - pp.xi**2) / task.lam * loss_oracle(0.7, task)
    assert abs(j - expected) < 2e-6


# --- benchmark operator ---------------------------------------------------------------------


def test_benchmark_operator_trace():
    m, g = cv_benchmark.benchmark_operator_cv(1.0, 1.0)
    # trace falls short of one only by the truncated photon-number tails
    assert abs(m.trace() - 1.0) < 1e-6
    assert abs(g.trace() - m.trace()) < 1e-12


@pytest.mark.parametrize("s,kappa", [(1.0, 1.0), (2.0, 0.5), (0.5, 2.0)])
def test_benchmark_norm(s, kappa):
    _, g = cv_benchmark.benchmark_operator_cv(s, kappa)
    assert abs(fockla.max_eigenvalue(g) - cv_benchmark.gamma_norm_expected(s, kappa)) < 1e-6


def test_benchmark_operator_without_second_mode_displacement():
    s, d = 0.8, 30
    _, g = cv_benchmark.benchmark_operator_cv(s, 0.0, trunc=Truncation(d))
    expected = fockla.tensor(fockla.thermal_state(1 / s, Truncation(d)),
                             fockla.DensityOperator((d,), np.diag(np.eye(d)[0])))
    assert np.abs(g.matrix - expected.matrix).max() < 1e-12
    assert abs(fockla.max_eigenvalue(g) - s / (s + 1)) < 1e-12


def test_partial_transpose_matches_phase_conjugation():
    m, g = cv_benchmark.benchmark_operator_cv(1.0, 1.0, trunc=Truncation(12))
    assert np.abs(fockla.partial_transpose(m, 1).matrix - g.matrix).max() < 1e-12


# --- audit ----------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def tight_audit():
    return cv_benchmark.proof_audit(GaussianTask(1, 1, 1), "tight")


def test_audit_tight_point(tight_audit):
    rec = tight_audit
    assert rec.params.s == 0.0
    assert abs(rec.intermediate_bound - 2 / 3) < 1e-12
    assert rec.printed_s_condition_holds
    assert rec.derived_s_condition_residual < 1e-12
    assert rec.attaining_gap < 1e-3
    assert rec.j_identity_residual < 5e-6
    assert max(rec.param_residuals) < 1e-14


def test_audit_positive_s():
    rec = cv_benchmark.proof_audit(GaussianTask(1, 1, 1), 0.8)
    assert rec.params.s > 0
    assert rec.intermediate_bound > rec.classical_limit
    assert not rec.printed_s_condition_holds
    assert rec.derived_s_condition_residual < 1e-12
    assert rec.gamma_eigen_residual < 1e-6
    assert rec.j_identity_residual < 5e-6


def test_audit_rescales_non_unit_gain():
    rec = cv_benchmark.proof_audit(GaussianTask(2, 4, 6), "tight")
    assert rec.task == GaussianTask(0.5, 1, 1.5)
    assert abs(rec.classical_limit - 2 / 3) < 1e-15
    assert rec.attaining_gap < 1e-3


def test_audit_record_serialises(tight_audit):
    d = tight_audit.as_dict()
    assert d["task"] == {"N": 1.0, "eta": 1.0, "lambda": 1.0}
    assert set(d["truncation_budgets"]) == {"fidelity", "j_integral", "heterodyne_completeness"}
