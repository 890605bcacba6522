"""Quantum channels as weighted Kraus families.

A channel acts as ``rho -> sum_k w_k K_k rho K_k^dagger``. Measure-and-prepare
families carry thousands of rank-one Kraus operators, so those are stored
factorised (``K_k = |ket_k><bra_k|``) and only materialised on request.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fockla
from .errors import DimensionError, InputError, QuadratureError
from .fockla import DensityOperator
from .quadrature import QuadratureSpec, max_radius, nodes, suggested_dim

UNITARY_ATOL = 1e-12
HETERODYNE_DEFICIT_THRESHOLD = 1e-6
_CHUNK = 256


def _readonly(a):
    if a is None:
        return None
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Channel:
    input_dim: int
    output_dim: int
    weights: np.ndarray
    operators: np.ndarray | None = None
    kets: np.ndarray | None = None
    bras: np.ndarray | None = None
    completeness_deficit: float = 0.0
    label: str = ""

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, copy=True)
        if w.ndim != 1 or w.size == 0:
            raise InputError("a channel needs at least one Kraus weight")
        if not np.all(w > 0):
            raise InputError("Kraus weights must be strictly positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        dense = self.operators is not None
        if dense == (self.kets is not None or self.bras is not None):
            raise InputError("give either dense operators or ket/bra factors, not both")
        if dense:
            ops = _readonly(self.operators)
            if ops.shape != (w.size, self.output_dim, self.input_dim):
                raise DimensionError(f"Kraus stack shape {ops.shape} does not match the channel")
            object.__setattr__(self, "operators", ops)
        else:
            kets, bras = _readonly(self.kets), _readonly(self.bras)
            if kets.shape != (w.size, self.output_dim) or bras.shape != (w.size, self.input_dim):
                raise DimensionError("rank-one factors do not match the channel dimensions")
            object.__setattr__(self, "kets", kets)
            object.__setattr__(self, "bras", bras)

    @classmethod
    def from_kraus(cls, weights, operators, label=""):
        ops = np.asarray(operators, dtype=complex)
        if ops.ndim == 2:
            ops = ops[None]
        ch = cls(ops.shape[2], ops.shape[1], weights, operators=ops, label=label)
        return ch._with_deficit()

    @classmethod
    def rank_one(cls, weights, kets, bras, label=""):
        kets = np.asarray(kets, dtype=complex)
        bras = np.asarray(bras, dtype=complex)
        ch = cls(bras.shape[1], kets.shape[1], weights, kets=kets, bras=bras, label=label)
        return ch._with_deficit()

    def _with_deficit(self):
        resid = float(np.abs(self.kraus_gram() - np.eye(self.input_dim)).max())
        object.__setattr__(self, "completeness_deficit", resid)
        return self

    @property
    def is_rank_one(self):
        return self.operators is None

    @property
    def num_kraus(self):
        return self.weights.size

    def kraus_gram(self):
        """sum_k w_k K_k^dagger K_k."""
        if self.is_rank_one:
            c = self.weights * np.sum(np.abs(self.kets) ** 2, axis=1)
            return (self.bras.T * c) @ self.bras.conj()
        a = np.sqrt(self.weights)[:, None, None] * self.operators
        a = a.reshape(-1, self.input_dim)
        return a.conj().T @ a

    def kraus_array(self):
        if self.is_rank_one:
            return np.einsum("ko,ki->koi", self.kets, self.bras.conj())
        return np.asarray(self.operators)

    @property
    def kraus(self):
        """List of ``(weight, matrix)`` pairs."""
        return list(zip(self.weights.tolist(), self.kraus_array()))


# --- constructors -------------------------------------------------------------


def identity_channel(dim):
    return Channel.from_kraus([1.0], np.eye(dim)[None], label="identity")


def unitary_channel(U, d=None):
    U = _check_unitary(U, d)
    return Channel.from_kraus([1.0], U[None], label="unitary")


def basis_mp_channel(U, d=None):
    """Measure in the computational basis, prepare ``U|u_j>`` on outcome j."""
    U = _check_unitary(U, d)
    d = U.shape[0]
    return Channel.rank_one(np.ones(d), U.T, np.eye(d), label="basis-mp")


def _check_unitary(U, d):
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1] or (d is not None and U.shape[0] != d):
        raise DimensionError(f"expected a {d}x{d} unitary, got shape {U.shape}")
    resid = float(np.abs(U.conj().T @ U - np.eye(U.shape[0])).max())
    if resid > UNITARY_ATOL:
        raise InputError(f"matrix is not unitary (residual {resid:.3e})")
    return U


def loss_channel(eta, trunc):
    """Pure attenuation with transmissivity ``eta``: |a> -> |sqrt(eta) a>."""
    eta = float(eta)
    if not 0.0 <= eta <= 1.0:
        raise InputError(f"loss transmissivity must lie in [0, 1], got {eta}")
    d = trunc.dim
    if eta == 1.0:
        return Channel.from_kraus([1.0], np.eye(d)[None], label="loss")
    ops = np.zeros((d, d, d))
    t, r = math.sqrt(eta), math.sqrt(1.0 - eta)
    for n in range(d):
        amps = fockla.binomial_amplitudes(n, t, r)
        k = np.arange(n + 1)
        ops[k, n - k, n] = amps
    return Channel.from_kraus(np.ones(d), ops, label=f"loss({eta:g})")


def default_heterodyne_spec(trunc):
    """Node counts that resolve the identity exactly on ``trunc``."""
    d = trunc.dim
    return QuadratureSpec(radial_nodes=(d + 1) // 2 + 2, angular_nodes=d + 1, lambda_weight=1.0)


def heterodyne_mp_channel(gain, trunc, spec=None, output_dim=None,
                          threshold=HETERODYNE_DEFICIT_THRESHOLD):
    """Heterodyne measurement followed by preparation of ``|gain * beta>``.

    The coherent-state POVM (1/pi)|beta><beta| d^2 beta is discretised on the
    nodes of ``spec``; with the default spec the discretised POVM sums to the
    identity on the truncated input space up to rounding. The output cutoff
    defaults to the ``r^2 + 6r`` rule applied to the largest prepared
    amplitude.
    """
    gain = float(gain)
    if not (gain >= 0 and math.isfinite(gain)):
        raise InputError(f"gain must be a non-negative real, got {gain}")
    spec = spec or default_heterodyne_spec(trunc)
    if output_dim is None:
        output_dim = max(trunc.dim, suggested_dim(gain * max_radius(spec)))
    betas, w = nodes(spec)
    mu = spec.lambda_weight
    r2 = np.abs(betas) ** 2
    # (1/pi) d^2 beta = (1/mu) p_mu(beta) exp(mu |beta|^2) d^2 beta; the exp(-|beta|^2/2)
    # of each bra is cancelled by leaving the bra unnormalised
    weights = w * np.exp((mu - 1.0) * r2) / mu
    keep = weights > 0
    betas, weights = betas[keep], weights[keep]
    bras = fockla.coherent_amplitudes(betas, trunc.dim, normalized=False)
    kets = fockla.coherent_amplitudes(gain * betas, output_dim)
    ch = Channel.rank_one(weights, kets, bras, label=f"heterodyne-mp({gain:g})")
    if ch.completeness_deficit > threshold:
        raise QuadratureError(
            f"quadrature too coarse: heterodyne POVM completeness deficit "
            f"{ch.completeness_deficit:.3e} exceeds {threshold:g}"
        )
    return ch


def random_kraus_channel(d, num_kraus, rng):
    """Channel from a Haar-ish random Stinespring isometry (QR of a Gaussian)."""
    g = rng.standard_normal((d * num_kraus, d)) + 1j * rng.standard_normal((d * num_kraus, d))
    q, _ = np.linalg.qr(g)
    return Channel.from_kraus(np.ones(num_kraus), q.reshape(num_kraus, d, d), label="random")


def compose(second, first):
    """Channel ``second o first`` (apply ``first``, then ``second``)."""
    if first.output_dim != second.input_dim:
        raise DimensionError("composed channels have mismatched dimensions")
    a, b = second.kraus_array(), first.kraus_array()
    ops = np.einsum("aoj,bji->aboi", a, b).reshape(-1, second.output_dim, first.input_dim)
    w = np.outer(second.weights, first.weights).reshape(-1)
    keep = np.abs(ops).reshape(len(w), -1).max(axis=1) > 0
    return Channel.from_kraus(w[keep], ops[keep], label=f"{second.label}*{first.label}")


# --- action -------------------------------------------------------------------


def apply(ch, rho, on_mode=0):
    """(E on mode ``on_mode``, identity elsewhere) applied to ``rho``."""
    dims = rho.mode_dims
    m = len(dims)
    if not 0 <= on_mode < m:
        raise DimensionError(f"mode {on_mode} out of range for {m} modes")
    if dims[on_mode] != ch.input_dim:
        raise DimensionError(
            f"channel expects dimension {ch.input_dim} but mode {on_mode} has {dims[on_mode]}"
        )
    t = rho.matrix.reshape(dims + dims)
    t = np.moveaxis(t, [on_mode, m + on_mode], [0, 1])
    rest = t.shape[2:]
    t = t.reshape(ch.input_dim, ch.input_dim, -1)
    if ch.is_rank_one:
        s = np.einsum("ka,abr,kb->kr", ch.bras.conj(), t, ch.bras)
        out = np.einsum("k,ko,kr,kp->opr", ch.weights, ch.kets, s, ch.kets.conj())
    else:
        x = np.einsum("koa,abr->kobr", ch.operators, t)
        out = np.einsum("k,kobr,kpb->opr", ch.weights, x, ch.operators.conj())
    out = out.reshape((ch.output_dim, ch.output_dim) + rest)
    out = np.moveaxis(out, [0, 1], [on_mode, m + on_mode])
    new_dims = dims[:on_mode] + (ch.output_dim,) + dims[on_mode + 1:]
    side = math.prod(new_dims)
    deficit = min(1.0, rho.deficit + ch.completeness_deficit)
    return DensityOperator(new_dims, out.reshape(side, side), deficit)


def transition_fidelities(ch, inputs, targets):
    """<t_j| E(|psi_j><psi_j|) |t_j> for paired rows of ``inputs`` and ``targets``."""
    psi = np.atleast_2d(np.asarray(inputs, dtype=complex))
    tgt = np.atleast_2d(np.asarray(targets, dtype=complex))
    if psi.shape[1] != ch.input_dim or tgt.shape[1] != ch.output_dim or len(psi) != len(tgt):
        raise DimensionError("input/target rows do not match the channel dimensions")
    out = np.empty(len(psi))
    for lo in range(0, len(psi), _CHUNK):
        p, t = psi[lo:lo + _CHUNK], tgt[lo:lo + _CHUNK]
        if ch.is_rank_one:
            sb = np.sqrt(ch.weights)[:, None] * ch.bras
            a = np.abs(t.conj() @ ch.kets.T) ** 2
            b = np.abs(p @ sb.conj().T) ** 2
            out[lo:lo + _CHUNK] = np.sum(a * b, axis=1)
        else:
            y = np.einsum("koi,ji->kjo", ch.operators, p)
            amp = np.einsum("kjo,jo->kj", y, t.conj())
            out[lo:lo + _CHUNK] = ch.weights @ (np.abs(amp) ** 2)
    return out


def _entangler_matrix(ch, entangler):
    if len(entangler.mode_dims) != 2:
        raise DimensionError("the entangler must be a two-mode state")
    if entangler.mode_dims[0] != ch.input_dim:
        raise DimensionError(
            f"entangler first mode has dimension {entangler.mode_dims[0]}, "
            f"channel input is {ch.input_dim}"
        )
    return entangler.as_tensor()


def choi_vectors(ch, entangler):
    """Rows sqrt(w_k) vec((K_k (x) I)|e>), whose outer products sum to the Choi state."""
    e = _entangler_matrix(ch, entangler)
    sw = np.sqrt(ch.weights)
    if ch.is_rank_one:
        c = ch.bras.conj() @ e
        x = np.einsum("ko,kr->kor", ch.kets, c)
    else:
        x = np.einsum("koi,ir->kor", ch.operators, e)
    return (sw[:, None, None] * x).reshape(ch.num_kraus, -1)


def choi_state(ch, entangler):
    """(E (x) I)(|e><e|) for a bipartite entangler such as |Phi_d> or |psi_xi>."""
    x = choi_vectors(ch, entangler)
    rho = x.T @ x.conj()
    dims = (ch.output_dim, entangler.mode_dims[1])
    deficit = min(1.0, entangler.norm_deficit + ch.completeness_deficit)
    return DensityOperator(dims, rho, deficit)


def choi_quadratic_form(ch, entangler, left, right):
    """<l_j (x) r_j| rho_E |l_j (x) r_j> for the Choi state of ``ch`` over ``entangler``.

    Same numbers as contracting :func:`choi_state` with product vectors, but
    without materialising the (possibly large) density matrix.
    """
    e = _entangler_matrix(ch, entangler)
    left = np.atleast_2d(np.asarray(left, dtype=complex))
    right = np.atleast_2d(np.asarray(right, dtype=complex))
    out = np.empty(len(left))
    sw = np.sqrt(ch.weights)
    for lo in range(0, len(left), _CHUNK):
        lc, rc = left[lo:lo + _CHUNK].conj(), right[lo:lo + _CHUNK].conj()
        if ch.is_rank_one:
            c = sw[:, None] * (ch.bras.conj() @ e)
            amp = (lc @ ch.kets.T) * (rc @ c.T)
            out[lo:lo + _CHUNK] = np.sum(np.abs(amp) ** 2, axis=1)
        else:
            # (K_k E)_{or}: contract the small reference side first
            er = e @ rc.T  # (in, J)
            amp = np.einsum("koi,ij,jo->kj", ch.operators, er, lc, optimize=True)
            out[lo:lo + _CHUNK] = ch.weights @ (np.abs(amp) ** 2)
    return out
