"""Quantum-domain criterion for a finite set of measured fidelities.

Given inputs ``psi_i``, targets ``psi'_i`` and priors ``p_i``, no
measure-and-prepare channel reaches an average fidelity above

    d * || sum_i p_i |psi'_i><psi'_i| (x) |psi_i><psi_i| ||,

with ``d`` the dimension spanned by the inputs and ``||.||`` the largest
eigenvalue. The operator is assembled in orthonormal bases of the target
and input spans (from their Gram matrices), which keeps it exact for
coherent states and small for any ensemble.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import channels, fockla
from .errors import DimensionError, InputError, NumericalBudgetError
from .fockla import HermitianOperator
from .report import CertificationReport, Diagnostics, Verdict, decide

GRAM_TOL = 1e-8
NORMALIZATION_TOL = 1e-10
PRIOR_SUM_TOL = 1e-12
TRACE_TOL = 1e-6
# floor on the default error budget: the limit is a computed eigenvalue, so a
# fidelity equal to it must not win on rounding alone
ROUNDING_ALLOWANCE = 1e-12


# --- states -------------------------------------------------------------------


@dataclass(frozen=True)
class CoherentSpec:
    alpha: complex
    space = "fock"

    def __post_init__(self):
        a = complex(self.alpha)
        if not (math.isfinite(a.real) and math.isfinite(a.imag)):
            raise InputError(f"coherent amplitude must be finite, got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)

    def vector(self, dim):
        return fockla.coherent_amplitudes(self.alpha, dim)[0]

    def tail(self, dim):
        return float(fockla.coherent_tail(abs(self.alpha) ** 2, dim))

    def with_phase(self, phase):
        # a global phase cannot be represented on a coherent label; it is irrelevant anyway
        return self


def _normalized_amplitudes(amps, what):
    a = np.array(amps, dtype=complex).reshape(-1)
    if a.size == 0 or not np.all(np.isfinite(a)):
        raise InputError(f"{what} amplitudes must be a non-empty list of finite numbers")
    norm = float(np.vdot(a, a).real)
    if abs(norm - 1.0) > NORMALIZATION_TOL:
        raise InputError(f"{what} amplitudes are not normalised (norm^2 = {norm:.12g})")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FockSpec:
    """Number-basis amplitudes on levels 0..len-1."""

    amplitudes: np.ndarray
    space = "fock"

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", _normalized_amplitudes(self.amplitudes, "Fock"))

    def vector(self, dim):
        if dim < self.amplitudes.size and np.any(self.amplitudes[dim:] != 0):
            raise DimensionError(f"Fock state needs {self.amplitudes.size} levels, cutoff is {dim}")
        out = np.zeros(dim, dtype=complex)
        n = min(dim, self.amplitudes.size)
        out[:n] = self.amplitudes[:n]
        return out

    def tail(self, dim):
        return 0.0

    def with_phase(self, phase):
        return FockSpec(self.amplitudes * phase)


@dataclass(frozen=True)
class VectorSpec:
    """A vector in a finite-dimensional space with a fixed computational basis."""

    amplitudes: np.ndarray
    space = "finite"

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", _normalized_amplitudes(self.amplitudes, "vector"))

    def vector(self, dim):
        if dim != self.amplitudes.size:
            raise DimensionError(f"vector has dimension {self.amplitudes.size}, expected {dim}")
        return np.array(self.amplitudes)

    def tail(self, dim):
        return 0.0

    def with_phase(self, phase):
        return VectorSpec(self.amplitudes * phase)


def overlap(a, b):
    """<a|b> without truncation (coherent overlaps are closed form)."""
    if a.space != b.space:
        raise DimensionError("cannot mix finite-dimensional vectors with optical states")
    if isinstance(a, CoherentSpec) and isinstance(b, CoherentSpec):
        x, y = a.alpha, b.alpha
        return complex(np.exp(-0.5 * abs(x) ** 2 - 0.5 * abs(y) ** 2 + x.conjugate() * y))
    if isinstance(a, CoherentSpec):
        return overlap(b, a).conjugate()
    if isinstance(b, CoherentSpec):
        return complex(np.vdot(a.amplitudes, b.vector(a.amplitudes.size)))
    if a.space == "finite" and a.amplitudes.size != b.amplitudes.size:
        raise DimensionError("finite vectors of different dimension")
    n = max(a.amplitudes.size, b.amplitudes.size)
    return complex(np.vdot(a.vector(n), b.vector(n)))


def gram_matrix(states):
    n = len(states)
    g = np.empty((n, n), dtype=complex)
    for i in range(n):
        g[i, i] = overlap(states[i], states[i])
        for j in range(i + 1, n):
            g[i, j] = overlap(states[i], states[j])
            g[j, i] = g[i, j].conjugate()
    return g


# --- ensembles ----------------------------------------------------------------


@dataclass(frozen=True)
class Entry:
    input: object
    target: object
    prior: float
    fidelity: float | None = None
    uncertainty: float | None = None


@dataclass(frozen=True)
class Ensemble:
    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise InputError("an ensemble needs at least one entry")
        for i, e in enumerate(entries):
            if not (math.isfinite(e.prior) and e.prior > 0):
                raise InputError(f"entry {i}: prior must be a positive real, got {e.prior!r}")
            if e.fidelity is not None and not 0.0 <= e.fidelity <= 1.0:
                raise InputError(f"entry {i}: fidelity must lie in [0, 1], got {e.fidelity!r}")
            if e.uncertainty is not None and not e.uncertainty >= 0:
                raise InputError(f"entry {i}: uncertainty must be non-negative")
        total = math.fsum(e.prior for e in entries)
        if abs(total - 1.0) > PRIOR_SUM_TOL:
            raise InputError(f"priors sum to {total!r}, not 1")
        object.__setattr__(self, "entries", entries)

    @property
    def inputs(self):
        return [e.input for e in self.entries]

    @property
    def targets(self):
        return [e.target for e in self.entries]

    @property
    def priors(self):
        return np.array([e.prior for e in self.entries])

    @classmethod
    def uniform(cls, inputs, targets=None, fidelities=None):
        targets = inputs if targets is None else targets
        n = len(inputs)
        fids = [None] * n if fidelities is None else fidelities
        return cls(tuple(Entry(a, b, 1.0 / n, f) for a, b, f in zip(inputs, targets, fids)))

    def with_fidelities(self, fidelities):
        return Ensemble(tuple(replace(e, fidelity=float(f)) for e, f in zip(self.entries, fidelities)))

    def with_priors(self, priors):
        return Ensemble(tuple(replace(e, prior=float(p)) for e, p in zip(self.entries, priors)))


@dataclass(frozen=True)
class SpanBasis:
    """Coordinates of a list of states in an orthonormal basis of their span."""

    coords: np.ndarray  # (d, n): column j is state j
    singular_values: np.ndarray

    @property
    def dim(self):
        return self.coords.shape[0]


def span_basis(states, tol=GRAM_TOL):
    if not states:
        raise InputError("need at least one state")
    if not tol > 0:
        raise InputError("Gram tolerance must be positive")
    g = gram_matrix(states)
    vals, vecs = np.linalg.eigh(g)
    sv = np.sort(np.abs(vals))[::-1]
    keep = vals > tol * vals.max()
    coords = np.sqrt(vals[keep])[:, None] * vecs[:, keep].conj().T
    return SpanBasis(coords, sv)


def effective_dimension(inputs, tol=GRAM_TOL):
    """Numerical rank of the input Gram matrix and its singular values."""
    basis = span_basis(list(inputs), tol)
    return basis.dim, basis.singular_values


def nominal_state_count(states):
    """Number of states distinct up to a global phase."""
    g = np.abs(gram_matrix(states))
    distinct = []
    for i in range(len(states)):
        if not any(abs(g[i, j] - 1.0) < 1e-12 for j in distinct):
            distinct.append(i)
    return len(distinct)


def benchmark_operator_ensemble(ens, tol=GRAM_TOL):
    """sum_i p_i |psi'_i><psi'_i| (x) |psi_i><psi_i| on (target span) (x) (input span)."""
    tb = span_basis(ens.targets, tol)
    ib = span_basis(ens.inputs, tol)
    p = ens.priors
    x = np.einsum("ai,bi->iab", tb.coords, ib.coords).reshape(len(p), -1)
    x = np.sqrt(p)[:, None] * x
    op = HermitianOperator((tb.dim, ib.dim), x.T @ x.conj())
    tr = op.trace()
    if abs(tr - 1.0) > TRACE_TOL:
        raise NumericalBudgetError(
            f"span orthonormalisation lost {abs(1 - tr):.3e} of the trace; "
            f"the Gram matrix is too ill-conditioned for tolerance {tol:g}"
        )
    return op


@dataclass(frozen=True)
class LimitResult:
    value: float
    d: int
    norm: float
    eigen_residual: float
    input_singular_values: np.ndarray
    operator: HermitianOperator


def ensemble_limit(ens, tol=GRAM_TOL):
    op = benchmark_operator_ensemble(ens, tol)
    d, sv = effective_dimension(ens.inputs, tol)
    top = fockla.top_eigenpairs(op)[0]
    return LimitResult(d * top.value, d, top.value, top.residual, sv, op)


def classical_limit_ensemble(ens, tol=GRAM_TOL):
    return ensemble_limit(ens, tol).value


def average_measured_fidelity(ens):
    missing = [i for i, e in enumerate(ens.entries) if e.fidelity is None]
    if missing:
        raise InputError(f"entries {missing} carry no measured fidelity")
    return math.fsum(e.prior * e.fidelity for e in ens.entries)


def verdict(ens, error_budget=None, tol=GRAM_TOL, extra_deficits=()):
    """Certification report for measured (or simulated) fidelities.

    The default error budget is the eigenvalue residual, a rounding
    allowance, any supplied truncation deficits and the prior-weighted
    measurement uncertainty.
    """
    res = ensemble_limit(ens, tol)
    missing = tuple(i for i, e in enumerate(ens.entries) if e.fidelity is None)
    avg = None if missing else average_measured_fidelity(ens)
    if error_budget is None:
        unc = math.fsum(e.prior * (e.uncertainty or 0.0) for e in ens.entries)
        error_budget = (res.d * res.eigen_residual + ROUNDING_ALLOWANCE
                        + math.fsum(extra_deficits) + unc)
    v, margin = decide(avg, res.value, error_budget)
    diag = Diagnostics(
        gram_singular_values=tuple(float(s) for s in res.input_singular_values),
        eigenvalue_residual=res.eigen_residual,
        truncation_deficits=tuple(float(x) for x in extra_deficits),
        quadrature_spec=None,
        error_budget=error_budget,
        nominal_state_count=nominal_state_count(ens.inputs),
        vacuous=res.value >= 1.0 - 1e-12,
        missing_fidelity_indices=missing,
    )
    return CertificationReport(res.value, avg, margin, v, res.d, diag)


def optimize_priors(ens, sweeps=20, grid=25, tol=GRAM_TOL):
    """Coordinate ascent of (average fidelity - limit) over the prior simplex.

    Each move mixes the current priors with a vertex, p -> (1-t) p + t e_i,
    over a grid of admissible ``t``; a heuristic with no optimality claim.
    """
    fids = np.array([e.fidelity for e in ens.entries], dtype=float)
    if np.any(np.isnan(fids)):
        raise InputError("prior search needs a measured fidelity on every entry")

    def objective(p):
        trial = ens.with_priors(p / math.fsum(p))
        return float(p @ fids / p.sum()) - classical_limit_ensemble(trial, tol)

    p = ens.priors.copy()
    best = objective(p)
    n = len(p)
    for _ in range(sweeps):
        improved = False
        for i in range(n):
            lo = -p[i] / (1.0 - p[i]) if p[i] < 1.0 else 0.0
            for t in np.linspace(lo, 1.0, grid)[:-1]:
                q = (1.0 - t) * p
                q[i] += t
                if np.any(q <= 0):
                    continue
                val = objective(q)
                if val > best + 1e-15:
                    best, p, improved = val, q / q.sum(), True
        if not improved:
            break
    p = p / math.fsum(p)
    p[-1] = 1.0 - math.fsum(p[:-1])
    return ens.with_priors(p), best


# --- channel simulation on ensembles -----------------------------------------


def simulate_fidelities(ch, ens):
    """Fidelities of ``ch`` on every entry, plus per-entry truncation deficits."""
    inputs = np.stack([e.input.vector(ch.input_dim) for e in ens.entries])
    targets = np.stack([e.target.vector(ch.output_dim) for e in ens.entries])
    f = channels.transition_fidelities(ch, inputs, targets)
    deficits = [e.input.tail(ch.input_dim) + e.target.tail(ch.output_dim) for e in ens.entries]
    return np.clip(f, 0.0, 1.0), deficits


def choi_fidelity_identity_check(ch, ens, d):
    """|direct average fidelity - d tr[M rho_E]| for a finite-dimensional ensemble."""
    if ch.input_dim != d:
        raise DimensionError(f"channel input {ch.input_dim} differs from d={d}")
    psi = np.stack([e.input.vector(d) for e in ens.entries])
    tgt = np.stack([e.target.vector(ch.output_dim) for e in ens.entries])
    p = ens.priors
    direct = float(p @ channels.transition_fidelities(ch, psi, tgt))

    rho = channels.choi_state(ch, fockla.maximally_entangled(d))
    x = np.einsum("ia,ib->iab", tgt, psi.conj()).reshape(len(p), -1)
    x = np.sqrt(p)[:, None] * x
    m = x.T @ x.conj()
    via_choi = d * float(np.trace(m @ rho.matrix).real)
    return abs(direct - via_choi)


# --- uniform (Haar) ensemble --------------------------------------------------


def haar_benchmark_operator(d):
    """(1 + flip) / (d (d + 1)), the Haar average of |psi><psi| (x) |psi><psi|."""
    f = fockla.flip_operator(d)
    return HermitianOperator((d, d), (np.eye(d * d) + f.matrix) / (d * (d + 1)))


def haar_classical_limit(d):
    return d * fockla.max_eigenvalue(haar_benchmark_operator(d))


def haar_conjugate_twirl(d):
    """(1 + d |Phi_d><Phi_d|) / (d (d + 1)), the Haar average of |psi><psi| (x) |psi*><psi*|."""
    phi = fockla.maximally_entangled(d).amplitudes
    return (np.eye(d * d) + d * np.outer(phi, phi.conj())) / (d * (d + 1))


def haar_average_fidelity(ch, U=None):
    """Exact Haar-averaged fidelity of ``ch`` for the task psi -> U psi.

    Evaluated through the Choi state: d tr[twirl * rho_E'] where E' is ``ch``
    followed by U^dagger.
    """
    d = ch.input_dim
    if ch.output_dim != d:
        raise DimensionError("Haar fidelity needs equal input and output dimension")
    if U is not None:
        ch = channels.compose(channels.unitary_channel(np.asarray(U).conj().T, d), ch)
    rho = channels.choi_state(ch, fockla.maximally_entangled(d))
    return d * float(np.trace(haar_conjugate_twirl(d) @ rho.matrix).real)


def _haar_block(d, n, seed, block):
    rng = np.random.default_rng(np.random.SeedSequence([seed, block]))
    g = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def haar_sampling_check(d, samples, seed=0, block_size=8192):
    """Max-entry gap between a Monte Carlo Haar twirl and its closed form.

    Sample block ``b`` draws from a generator keyed on ``(seed, b)``, so the
    estimate does not depend on how blocks are scheduled.
    """
    if samples < 1:
        raise InputError("need at least one sample")
    acc = np.zeros((d * d, d * d), dtype=complex)
    for b, lo in enumerate(range(0, samples, block_size)):
        psi = _haar_block(d, min(block_size, samples - lo), seed, b)
        x = np.einsum("ni,nj->nij", psi, psi.conj()).reshape(len(psi), -1)
        acc += x.T @ x.conj()
    acc /= samples
    return float(np.abs(acc - haar_conjugate_twirl(d)).max())
