"""Classical fidelity limit for Gaussian-distributed coherent-state tasks.

A task ``(N, eta, lam)`` asks a device to map ``|sqrt(N) alpha>`` to
``|sqrt(eta) alpha>`` with ``alpha`` drawn from the Gaussian prior of
inverse width ``lam``. Measure-and-prepare strategies cannot exceed
``(N + lam) / (N + lam + eta)``. Besides the closed form, this module
numerically audits each step of the duality/partial-transpose argument
behind that limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import channels, fockla
from .errors import InputError, TruncationError
from .fockla import HermitianOperator, Truncation
from .quadrature import QuadratureSpec, nodes
from .report import CertificationReport, Diagnostics, decide

DEFAULT_RADIAL = 32
DEFAULT_ANGULAR = 32
GAMMA_AGREEMENT_TOL = 1e-10


@dataclass(frozen=True)
class GaussianTask:
    N: float
    eta: float
    lam: float

    def __post_init__(self):
        for name in ("N", "eta", "lam"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InputError(f"task parameter {name} must be a positive real, got {v!r}")
            object.__setattr__(self, name, float(v))


@dataclass(frozen=True)
class ProofParams:
    s: float
    kappa: float
    xi: float

    def __post_init__(self):
        if not (self.s >= 0 and math.isfinite(self.s)):
            raise InputError(f"s must be non-negative, got {self.s!r}")
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise InputError(f"kappa must be non-negative, got {self.kappa!r}")
        if not 0.0 <= self.xi < 1.0:
            raise InputError(f"xi must lie in [0, 1), got {self.xi!r}")

    @property
    def lam(self):
        """Prior width tied to these parameters: s + (1 - xi^2) kappa^2."""
        return self.s + (1.0 - self.xi**2) * self.kappa**2

    @property
    def N(self):
        return (self.kappa * self.xi) ** 2

    def residuals(self, task):
        """|lam - s - (1-xi^2) kappa^2| and |sqrt(N) - kappa xi| against ``task``."""
        return (
            abs(task.lam - self.s - (1.0 - self.xi**2) * self.kappa**2),
            abs(math.sqrt(task.N) - self.kappa * self.xi),
        )


def classical_limit_cv(task):
    return (task.N + task.lam) / (task.N + task.lam + task.eta)


def task_scaling(task):
    """The task rewritten with unit target gain, and with unit input scale.

    Average fidelities (of any channel) and the classical limit are
    unchanged by either rewrite.
    """
    unit_gain = GaussianTask(task.N / task.eta, 1.0, task.lam / task.eta)
    unit_input = GaussianTask(1.0, task.eta / task.N, task.lam / task.N)
    return unit_gain, unit_input


def attaining_gain(task):
    """Re-preparation gain of the optimal heterodyne strategy for ``task``."""
    return math.sqrt(task.N * task.eta) / (task.N + task.lam)


def tight_xi(task):
    return math.sqrt(task.N / (task.N + task.lam))


def params_from_task(task, xi="tight"):
    """Proof parameters (s, kappa, xi) for a unit-gain task.

    ``xi="tight"`` selects xi^2 = N/(N+lam), where s = 0 exactly.
    """
    if task.eta != 1.0:
        raise InputError("proof parameters are defined for unit-gain tasks; use task_scaling first")
    if isinstance(xi, str):
        if xi != "tight":
            raise InputError(f"xi must be a number or 'tight', got {xi!r}")
        xi = tight_xi(task)
        return ProofParams(0.0, math.sqrt(task.N) / xi, xi)
    xi = float(xi)
    if not 0.0 < xi < 1.0:
        raise InputError(f"xi must lie in (0, 1), got {xi}")
    kappa = math.sqrt(task.N) / xi
    s = task.lam - (1.0 - xi * xi) * task.N / (xi * xi)
    if s < 0:
        if s > -1e-12 * task.lam:
            s = 0.0
        else:
            raise InputError(
                f"s would be negative ({s:.6g}): xi must satisfy xi^2 >= N/(N+lam) = "
                f"{task.N / (task.N + task.lam):.6g}"
            )
    return ProofParams(s, kappa, xi)


def default_spec(lam):
    return QuadratureSpec(DEFAULT_RADIAL, DEFAULT_ANGULAR, lam)


def weighted_tail(spec, scale, dim):
    """sum_j w_j * (mass of |scale * alpha_j> beyond ``dim``)."""
    alphas, w = nodes(spec)
    return float(np.sum(w * fockla.coherent_tail(scale**2 * np.abs(alphas) ** 2, dim)))


def adequate_dim(spec, scale, budget):
    """Smallest cutoff keeping :func:`weighted_tail` within ``budget``."""
    lo, hi = 1, 8
    while weighted_tail(spec, scale, hi) > budget:
        lo, hi = hi, 2 * hi
    while lo < hi:
        mid = (lo + hi) // 2
        if weighted_tail(spec, scale, mid) > budget:
            lo = mid + 1
        else:
            hi = mid
    return hi


def default_truncation(task, spec=None, ceiling=fockla.DEFAULT_DEFICIT_CEILING):
    """Cutoff adequate for both inputs and targets of ``task`` under ``ceiling``."""
    spec = spec or default_spec(task.lam)
    scale = math.sqrt(max(task.N, task.eta))
    return Truncation(adequate_dim(spec, scale, ceiling / 2))


@dataclass(frozen=True)
class FidelityEstimate:
    value: float
    truncation_budget: float
    spec: QuadratureSpec


def estimate_fidelity_cv(ch, task, spec=None, ceiling=fockla.DEFAULT_DEFICIT_CEILING):
    """Quadrature average fidelity with its truncation budget."""
    spec = spec or default_spec(task.lam)
    alphas, w = nodes(spec)
    sn, se = math.sqrt(task.N), math.sqrt(task.eta)
    budget = weighted_tail(spec, sn, ch.input_dim) + weighted_tail(spec, se, ch.output_dim)
    if ceiling is not None and budget > ceiling:
        need = max(adequate_dim(spec, sn, ceiling / 2), adequate_dim(spec, se, ceiling / 2))
        raise TruncationError(
            f"truncation too small for task {task}: weighted deficit {budget:.3e} exceeds "
            f"{ceiling:g}; need dim >= {need} for inputs and targets",
            min_dim=need,
        )
    inputs = fockla.coherent_amplitudes(sn * alphas, ch.input_dim)
    targets = fockla.coherent_amplitudes(se * alphas, ch.output_dim)
    f = channels.transition_fidelities(ch, inputs, targets)
    return FidelityEstimate(float(np.sum(w * f)), budget, spec)


def average_fidelity_cv(ch, task, spec=None, trunc=None, ceiling=fockla.DEFAULT_DEFICIT_CEILING):
    """Average fidelity of ``ch`` on ``task``; ``trunc`` if given must match the channel input."""
    if trunc is not None and trunc.dim != ch.input_dim:
        raise InputError(f"truncation {trunc.dim} does not match channel input {ch.input_dim}")
    return estimate_fidelity_cv(ch, task, spec, ceiling).value


def certify_cv(ch, task, spec=None, error_budget=None, ceiling=fockla.DEFAULT_DEFICIT_CEILING):
    """Quantum-domain verdict for a simulated channel on a Gaussian task."""
    est = estimate_fidelity_cv(ch, task, spec, ceiling)
    limit = classical_limit_cv(task)
    budget = est.truncation_budget + ch.completeness_deficit
    if error_budget is None:
        error_budget = budget
    verdict, margin = decide(est.value, limit, error_budget)
    diag = Diagnostics(
        truncation_deficits=(est.truncation_budget, ch.completeness_deficit),
        quadrature_spec=est.spec.as_dict(),
        error_budget=error_budget,
        vacuous=limit >= 1.0,
        notes=(f"channel={ch.label}",),
    )
    return CertificationReport(limit, est.value, margin, verdict, None, diag)


# --- proof audit ------------------------------------------------------------


def _j_rate(ch, pp, spec):
    """J/s as a quadrature against p_lam, lam = s + (1-xi^2) kappa^2.

    Multiplying the integrand by exp((lam - s)|alpha|^2) turns the p_s
    average into a p_lam average of an O(1) function; the value stays finite
    at s = 0, where J itself vanishes.
    """
    lam = pp.lam
    spec = (spec or default_spec(lam)).retarget(lam)
    alphas, w = nodes(spec)
    d_out, d_ref = ch.output_dim, ch.input_dim
    psi = fockla.two_mode_squeezed(pp.xi, Truncation(ch.input_dim))
    left = fockla.coherent_amplitudes(alphas, d_out)
    right = fockla.coherent_amplitudes(pp.kappa * np.conj(alphas), d_ref)
    vals = channels.choi_quadratic_form(ch, psi, left, right)
    r2 = np.abs(alphas) ** 2
    rate = float(np.sum(w * np.exp((lam - pp.s) * r2) * vals)) / lam
    budget = (weighted_tail(spec, 1.0, d_out) + weighted_tail(spec, pp.kappa, d_ref)
              + psi.norm_deficit)
    return rate, budget


def j_integral(ch, pp, spec=None, trunc=None):
    """The p_s-weighted overlap of the Choi state over |psi_xi> with |alpha>|kappa alpha*>.

    Only ``spec``'s node counts are used; nodes are re-aimed at the total
    Gaussian decay of the integrand.
    """
    if trunc is not None and trunc.dim != ch.input_dim:
        raise InputError(f"truncation {trunc.dim} does not match channel input {ch.input_dim}")
    return pp.s * _j_rate(ch, pp, spec)[0]


def j_integral_rate(ch, pp, spec=None):
    """J/s, well defined also at s = 0."""
    return _j_rate(ch, pp, spec)[0]


def _benchmark_pair(s, kappa, spec, trunc, scale):
    mu = s + 1.0 + kappa * kappa
    spec = (spec or default_spec(mu)).retarget(mu)
    alphas, w = nodes(spec)
    d = trunc.dim
    # p_s(a) exp(-(1+kappa^2)|a|^2) = (s/mu) p_mu(a): the Gaussian envelopes of both
    # coherent states move into the weights and the amplitudes stay polynomial
    u = fockla.coherent_amplitudes(alphas, d, normalized=False)
    v = fockla.coherent_amplitudes(kappa * np.conj(alphas), d, normalized=False)
    c = np.sqrt(w * scale(mu))[:, None]
    x = c * np.einsum("ja,jb->jab", u, v).reshape(len(w), d * d)
    y = c * np.einsum("ja,jb->jab", u, v.conj()).reshape(len(w), d * d)
    m = HermitianOperator((d, d), x.T @ x.conj())
    direct = HermitianOperator((d, d), y.T @ y.conj())
    transposed = fockla.partial_transpose(m, 1)
    gap = float(np.abs(transposed.matrix - direct.matrix).max())
    if gap > GAMMA_AGREEMENT_TOL * max(1.0, float(np.abs(direct.matrix).max())):
        raise InputError(
            f"partial transpose of M disagrees with the phase-conjugated form by {gap:.3e}; "
            "quadrature or truncation is inconsistent"
        )
    return m, direct, spec


def benchmark_operator_cv(s, kappa, spec=None, trunc=None):
    """M = int p_s |a><a| (x) |kappa a*><kappa a*| and its partial transpose.

    Returns ``(M, Gamma[M])``; ``Gamma[M]`` is built directly from the
    phase-conjugated form and cross-checked against transposing ``M``.
    """
    trunc = trunc or Truncation(40)
    m, g, _ = _benchmark_pair(s, kappa, spec, trunc, lambda mu: s / mu)
    return m, g


def gamma_norm_expected(s, kappa):
    """Closed-form ||Gamma[M]|| = s / (s + 1 + kappa^2)."""
    return s / (s + 1.0 + kappa * kappa)


@dataclass(frozen=True)
class AuditRecord:
    task: GaussianTask
    params: ProofParams
    param_residuals: tuple
    fidelity: float
    j_rate: float
    j_identity_residual: float
    gamma_norm_rate: float
    gamma_norm_rate_expected: float
    gamma_eigen_residual: float
    intermediate_bound: float
    classical_limit: float
    lam_over_one_minus_xi2: float
    n_plus_lam: float
    printed_s_condition_holds: bool
    derived_s_condition_residual: float
    attaining_fidelity: float
    attaining_gap: float
    truncation_budgets: dict = field(default_factory=dict)

    def as_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["task"] = {"N": self.task.N, "eta": self.task.eta, "lambda": self.task.lam}
        out["params"] = {"s": self.params.s, "kappa": self.params.kappa, "xi": self.params.xi}
        out["param_residuals"] = list(self.param_residuals)
        return out


def proof_audit(task, xi="tight", spec=None, trunc=None, channel=None):
    """Evaluate every link of the benchmark bound for a task, reporting residuals.

    ``channel`` is the device used for the J-identity check; it defaults to
    the optimal heterodyne strategy, whose fidelity also gives the
    attainability gap. Tasks with ``eta != 1`` are first rescaled to unit gain.
    """
    if task.eta != 1.0:
        task = task_scaling(task)[0]
    pp = params_from_task(task, xi)
    spec = spec or default_spec(task.lam)
    trunc = trunc or default_truncation(task, spec)
    eb = channels.heterodyne_mp_channel(attaining_gain(task), trunc)
    ch = channel or eb

    fid = estimate_fidelity_cv(ch, task, spec)
    rate, j_budget = _j_rate(ch, pp, spec)
    j_resid = abs(rate - (1.0 - pp.xi**2) * fid.value / task.lam)

    g_trunc = Truncation(min(trunc.dim, 40))
    _, gamma_rate, _ = _benchmark_pair(pp.s, pp.kappa, spec, g_trunc, lambda mu: 1.0 / mu)
    top = fockla.top_eigenpairs(gamma_rate)[0]
    expected = 1.0 / (pp.s + 1.0 + pp.kappa**2)

    bound = task.lam / ((1.0 - pp.xi**2) * (task.N + task.lam + 1.0))
    limit = classical_limit_cv(task)
    lhs = task.lam / (1.0 - pp.xi**2)
    derived = task.N + task.lam + pp.s * pp.xi**2 / (1.0 - pp.xi**2)
    eb_fid = fid if ch is eb else estimate_fidelity_cv(eb, task, spec)

    return AuditRecord(
        task=task,
        params=pp,
        param_residuals=pp.residuals(task),
        fidelity=fid.value,
        j_rate=rate,
        j_identity_residual=j_resid,
        gamma_norm_rate=top.value,
        gamma_norm_rate_expected=expected,
        gamma_eigen_residual=abs(top.value - expected),
        intermediate_bound=bound,
        classical_limit=limit,
        lam_over_one_minus_xi2=lhs,
        n_plus_lam=task.N + task.lam,
        printed_s_condition_holds=lhs <= (task.N + task.lam) * (1 + 1e-12),
        derived_s_condition_residual=abs(lhs - derived),
        attaining_fidelity=eb_fid.value,
        attaining_gap=abs(eb_fid.value - limit),
        truncation_budgets={
            "fidelity": fid.truncation_budget,
            "j_integral": j_budget,
            "heterodyne_completeness": eb.completeness_deficit,
        },
    )
