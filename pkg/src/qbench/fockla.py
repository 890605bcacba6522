"""Dense linear algebra on truncated Fock and finite-dimensional spaces.

States and operators are immutable dataclasses wrapping numpy arrays in the
computational (number) basis. Truncation loss is never renormalised away:
each constructor records the analytic probability mass that falls outside
the cutoff as a *deficit*, so callers can budget for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import DimensionError, HermiticityError, InputError, TruncationError

DEFAULT_DEFICIT_CEILING = 1e-8
HERMITIAN_RTOL = 1e-12
PSD_ATOL = 1e-10
DENSE_EIGEN_MAX_SIDE = 512


def _frozen(arr, dtype=complex):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _check_finite(value, name):
    if not np.all(np.isfinite(value)):
        raise InputError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class Truncation:
    """Number-basis cutoff keeping levels ``0 .. dim-1``."""

    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InputError(f"truncation dim must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))


@dataclass(frozen=True)
class StateVector:
    mode_dims: tuple
    amplitudes: np.ndarray
    norm_deficit: float = 0.0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.mode_dims)
        if not dims or min(dims) < 1:
            raise DimensionError(f"mode dims must all be >= 1, got {dims}")
        amps = _frozen(self.amplitudes).reshape(-1)
        if amps.size != math.prod(dims):
            raise DimensionError(f"{amps.size} amplitudes do not fit mode dims {dims}")
        if self.norm_deficit < 0:
            raise InputError("norm deficit must be non-negative")
        object.__setattr__(self, "mode_dims", dims)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "norm_deficit", float(self.norm_deficit))

    @property
    def dim(self):
        return self.amplitudes.size

    def norm_squared(self):
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def as_tensor(self):
        return self.amplitudes.reshape(self.mode_dims)

    def projector(self):
        """|psi><psi| as a density operator carrying the same deficit."""
        v = self.amplitudes
        return DensityOperator(self.mode_dims, np.outer(v, v.conj()), self.norm_deficit)


def _hermitian_part(mat, what):
    mat = np.asarray(mat, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionError(f"{what} must be a square matrix, got shape {mat.shape}")
    scale = float(np.abs(mat).max()) if mat.size else 0.0
    resid = float(np.abs(mat - mat.conj().T).max()) if mat.size else 0.0
    if resid > HERMITIAN_RTOL * scale:
        raise HermiticityError(
            f"{what} is not Hermitian: residual {resid:.3e} exceeds {HERMITIAN_RTOL:g} x {scale:.3e}"
        )
    return _frozen(0.5 * (mat + mat.conj().T))


@dataclass(frozen=True)
class HermitianOperator:
    mode_dims: tuple
    matrix: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.mode_dims)
        mat = _hermitian_part(self.matrix, type(self).__name__)
        if mat.shape[0] != math.prod(dims):
            raise DimensionError(f"matrix side {mat.shape[0]} does not match mode dims {dims}")
        object.__setattr__(self, "mode_dims", dims)
        object.__setattr__(self, "matrix", mat)

    @property
    def side(self):
        return self.matrix.shape[0]

    def trace(self):
        return float(np.trace(self.matrix).real)

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)

    def min_eigenvalue(self):
        return float(self.eigenvalues()[0])


@dataclass(frozen=True)
class DensityOperator(HermitianOperator):
    """Positive operator with trace ``1 - deficit`` (up to rounding).

    Positivity is not re-verified at construction because it costs a full
    eigendecomposition; use :meth:`check_positive` where it matters.
    """

    deficit: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if self.deficit < 0:
            raise InputError("trace deficit must be non-negative")
        object.__setattr__(self, "deficit", float(self.deficit))

    def check_positive(self, atol=PSD_ATOL):
        lo = self.min_eigenvalue()
        if lo < -atol:
            raise InputError(f"density operator has eigenvalue {lo:.3e} < -{atol:g}")
        return lo


# --- constructors -----------------------------------------------------------


def coherent_tail(mean_photons, dim):
    """Probability mass of a Poisson(``mean_photons``) law at or above ``dim``."""
    x = np.asarray(mean_photons, dtype=float)
    return gammainc(dim, x)


def minimal_dim(mean_photons, ceiling=DEFAULT_DEFICIT_CEILING):
    """Smallest cutoff whose coherent-state tail is at most ``ceiling``."""
    x = float(mean_photons)
    lo, hi = 1, max(2, int(x) + 1)
    while coherent_tail(x, hi) > ceiling:
        lo, hi = hi, 2 * hi
    while lo < hi:
        mid = (lo + hi) // 2
        if coherent_tail(x, mid) > ceiling:
            lo = mid + 1
        else:
            hi = mid
    return hi


def coherent_amplitudes(alphas, dim, normalized=True):
    """Number-basis amplitudes of many coherent states, one row per alpha.

    Evaluated in log space so that large amplitudes neither overflow nor
    underflow before the Poisson envelope is applied. With
    ``normalized=False`` the ``exp(-|alpha|^2/2)`` prefactor is dropped.
    """
    a = np.atleast_1d(np.asarray(alphas, dtype=complex))
    n = np.arange(dim)
    r = np.abs(a)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logmag = n * np.log(r) - 0.5 * gammaln(n + 1)
    logmag[:, 0] = 0.0  # 0**0 = 1 for the vacuum component
    if normalized:
        logmag = logmag - 0.5 * r**2
    phase = np.exp(1j * np.outer(np.angle(a), n))
    return np.exp(logmag) * phase


def coherent_state(alpha, trunc, ceiling=DEFAULT_DEFICIT_CEILING):
    """Truncated coherent state |alpha>, left unnormalised with its tail recorded.

    Pass ``ceiling=None`` to skip the adequacy check (the deficit is still
    recorded).
    """
    alpha = complex(alpha)
    _check_finite(alpha, "alpha")
    x = abs(alpha) ** 2
    deficit = float(coherent_tail(x, trunc.dim))
    if ceiling is not None and deficit > ceiling:
        need = minimal_dim(x, ceiling)
        raise TruncationError(
            f"truncation too small: |{alpha}> loses {deficit:.3e} > {ceiling:g} at dim "
            f"{trunc.dim}; need dim >= {need}",
            min_dim=need,
        )
    return StateVector((trunc.dim,), coherent_amplitudes(alpha, trunc.dim)[0], deficit)


def number_state(n, trunc):
    if not 0 <= n < trunc.dim:
        raise DimensionError(f"|{n}> is outside the cutoff {trunc.dim}")
    v = np.zeros(trunc.dim, dtype=complex)
    v[n] = 1.0
    return StateVector((trunc.dim,), v)


def two_mode_squeezed(xi, trunc):
    """sqrt(1 - xi^2) sum_n xi^n |n>|n>, truncated at ``trunc.dim`` per mode."""
    xi = float(xi)
    _check_finite(xi, "xi")
    if not 0.0 <= xi < 1.0:
        raise InputError(f"two-mode squeezing needs 0 <= xi < 1 (xi >= 1 is unnormalisable), got {xi}")
    d = trunc.dim
    amps = np.zeros((d, d), dtype=complex)
    n = np.arange(d)
    amps[n, n] = math.sqrt(1.0 - xi * xi) * xi**n
    return StateVector((d, d), amps, xi ** (2 * d))


def thermal_state(nbar, trunc):
    nbar = float(nbar)
    _check_finite(nbar, "nbar")
    if nbar < 0:
        raise InputError(f"mean photon number must be non-negative, got {nbar}")
    q = nbar / (1.0 + nbar)
    p = q ** np.arange(trunc.dim) / (1.0 + nbar)
    return DensityOperator((trunc.dim,), np.diag(p), q**trunc.dim)


def identity_operator(mode_dims):
    dims = tuple(mode_dims)
    return HermitianOperator(dims, np.eye(math.prod(dims)))


def maximally_entangled(d):
    """(1/sqrt d) sum_k |k>|k>."""
    amps = np.eye(d, dtype=complex) / math.sqrt(d)
    return StateVector((d, d), amps)


def conjugate_state(psi):
    """Entrywise complex conjugate in the computational basis."""
    return StateVector(psi.mode_dims, psi.amplitudes.conj(), psi.norm_deficit)


def flip_operator(d):
    """Swap of two d-level factors, sum_ij |i><j| (x) |j><i|."""
    f = np.zeros((d, d, d, d))
    i, j = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    f[i, j, j, i] = 1.0
    return HermitianOperator((d, d), f.reshape(d * d, d * d))


def binomial_amplitudes(n, t, r):
    """sqrt(C(n,k)) t^(n-k) r^k for k = 0..n, evaluated in log space."""
    k = np.arange(n + 1)
    logc = 0.5 * (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        lt, lr = np.log(t), np.log(r)
        expo = np.where(n - k > 0, (n - k) * lt, 0.0) + np.where(k > 0, k * lr, 0.0)
    return np.exp(logc + expo)


def beam_splitter_on_vacuum(n, kappa, trunc):
    """V|n>|0> for the beam splitter sending |sqrt(1+kappa^2) a>|0> to |a>|kappa a>."""
    if not 0 <= n < trunc.dim:
        raise DimensionError(f"photon number {n} must be below the cutoff {trunc.dim}")
    if kappa < 0 or not math.isfinite(kappa):
        raise InputError(f"kappa must be a non-negative real, got {kappa}")
    d = trunc.dim
    t = 1.0 / math.sqrt(1.0 + kappa * kappa)
    r = kappa * t
    out = np.zeros((d, d), dtype=complex)
    k = np.arange(n + 1)
    out[n - k, k] = binomial_amplitudes(n, t, r)
    return StateVector((d, d), out)


def beam_splitter_isometry(kappa, trunc):
    """Matrix whose n-th column is V|n>|0>, mapping one mode into two."""
    d = trunc.dim
    cols = [beam_splitter_on_vacuum(n, kappa, trunc).amplitudes for n in range(d)]
    return np.stack(cols, axis=1)


def beam_splitter_apply(psi, kappa):
    """Linear extension of :func:`beam_splitter_on_vacuum` to a one-mode state."""
    if len(psi.mode_dims) != 1:
        raise DimensionError("beam splitter input must be a single mode")
    trunc = Truncation(psi.mode_dims[0])
    amps = beam_splitter_isometry(kappa, trunc) @ psi.amplitudes
    return StateVector((trunc.dim, trunc.dim), amps, psi.norm_deficit)


def tensor(a, b):
    """Kronecker product of two states or two operators of the same kind."""
    dims = tuple(a.mode_dims) + tuple(b.mode_dims)
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        deficit = a.norm_deficit + b.norm_deficit - a.norm_deficit * b.norm_deficit
        return StateVector(dims, np.kron(a.amplitudes, b.amplitudes), deficit)
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        deficit = a.deficit + b.deficit - a.deficit * b.deficit
        return DensityOperator(dims, np.kron(a.matrix, b.matrix), deficit)
    if isinstance(a, HermitianOperator) and isinstance(b, HermitianOperator):
        return HermitianOperator(dims, np.kron(a.matrix, b.matrix))
    raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")


def partial_transpose(op, which_mode):
    """Transpose the ``which_mode`` factor in its computational basis."""
    dims = op.mode_dims
    m = len(dims)
    if not 0 <= which_mode < m:
        raise DimensionError(f"mode index {which_mode} out of range for {m} modes")
    t = op.matrix.reshape(dims + dims)
    axes = list(range(2 * m))
    axes[which_mode], axes[m + which_mode] = m + which_mode, which_mode
    out = np.ascontiguousarray(t.transpose(axes)).reshape(op.matrix.shape)
    return HermitianOperator(dims, out)


# --- eigenvalues --------------------------------------------------------------


@dataclass(frozen=True)
class Eigenpair:
    value: float
    vector: np.ndarray = field(repr=False)
    residual: float = 0.0


def _as_hermitian_matrix(op):
    if isinstance(op, HermitianOperator):
        return op.matrix
    return _hermitian_part(op, "operator")


def _power_iteration(a, k, tol, max_iter):
    side = a.shape[0]
    off = np.abs(a).sum(axis=1) - np.abs(np.diag(a))
    shift = float(np.min(np.diag(a).real - off))
    b = a - shift * np.eye(side)
    rng = np.random.default_rng(20110406)
    found = []
    for _ in range(k):
        v = rng.standard_normal(side) + 1j * rng.standard_normal(side)
        for _ in range(max_iter):
            for u in found:
                v = v - u.vector * np.vdot(u.vector, v)
            v = v / np.linalg.norm(v)
            w = b @ v
            theta = float(np.vdot(v, w).real)
            resid = float(np.linalg.norm(w - theta * v))
            value = theta + shift
            if resid <= tol * max(abs(value), np.finfo(float).tiny):
                break
            v = w
        else:
            return None
        found.append(Eigenpair(value, v, resid))
    return found


def top_eigenpairs(op, k=1, method="auto", tol=1e-12, max_iter=5000):
    """The ``k`` largest eigenpairs of a Hermitian operator, largest first.

    ``method="auto"`` uses a dense decomposition up to side 512 and shifted
    power iteration with deflation beyond; power iteration falls back to the
    dense solver if it fails to converge within ``max_iter`` steps.
    """
    a = _as_hermitian_matrix(op)
    side = a.shape[0]
    if k > side:
        raise DimensionError(f"asked for {k} eigenpairs of a side-{side} operator")
    if method == "auto":
        method = "dense" if side <= DENSE_EIGEN_MAX_SIDE else "power"
    if method == "power":
        pairs = _power_iteration(a, k, tol, max_iter)
        if pairs is not None:
            return pairs
    elif method != "dense":
        raise InputError(f"unknown eigen method {method!r}")
    vals, vecs = np.linalg.eigh(a)
    out = []
    for i in range(side - 1, side - 1 - k, -1):
        v = vecs[:, i]
        out.append(Eigenpair(float(vals[i]), v, float(np.linalg.norm(a @ v - vals[i] * v))))
    return out


def max_eigenvalue(op, method="auto"):
    """Largest eigenvalue of a Hermitian operator."""
    return top_eigenpairs(op, 1, method=method)[0].value


def expectation(op, psi):
    """<psi|op|psi> for a state vector ``psi``."""
    v = psi.amplitudes
    return float(np.vdot(v, op.matrix @ v).real)
