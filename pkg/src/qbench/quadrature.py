"""Polar product quadrature for averages over the complex plane.

A :class:`QuadratureSpec` describes nodes for integrals of the form

    integral  p(alpha) f(alpha) d^2 alpha,   p(alpha) = (lam / pi) exp(-lam |alpha|^2)

The radial part is Gauss-Laguerre in ``t = lam r^2`` and the angular part is
the trapezoid rule, so the weights already contain the prior and integrands
are weight-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import InputError, QuadratureError

MAX_RADIAL_NODES = 2**10


@dataclass(frozen=True)
class QuadratureSpec:
    radial_nodes: int
    angular_nodes: int
    lambda_weight: float

    def __post_init__(self):
        if int(self.radial_nodes) != self.radial_nodes or self.radial_nodes < 1:
            raise InputError(f"radial_nodes must be a positive integer, got {self.radial_nodes!r}")
        if int(self.angular_nodes) != self.angular_nodes or self.angular_nodes < 1:
            raise InputError(f"angular_nodes must be a positive integer, got {self.angular_nodes!r}")
        if not (math.isfinite(self.lambda_weight) and self.lambda_weight > 0):
            raise InputError(f"lambda_weight must be a positive real, got {self.lambda_weight!r}")
        object.__setattr__(self, "radial_nodes", int(self.radial_nodes))
        object.__setattr__(self, "angular_nodes", int(self.angular_nodes))
        object.__setattr__(self, "lambda_weight", float(self.lambda_weight))

    def retarget(self, lambda_weight):
        """Same node counts aimed at a different Gaussian width."""
        return replace(self, lambda_weight=lambda_weight)

    def refined(self):
        return replace(self, radial_nodes=2 * self.radial_nodes, angular_nodes=2 * self.angular_nodes)

    def as_dict(self):
        return {
            "radial_nodes": self.radial_nodes,
            "angular_nodes": self.angular_nodes,
            "lambda_weight": self.lambda_weight,
        }


def _laguerre_logsum(x, n):
    """log sum_{k<n} L_k(x)^2 and the scale-free ratio L_n/L_n' at each x.

    The three-term recurrence is run with running rescaling so that the
    Christoffel sum stays finite for nodes far out on the tail.
    """
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    logscale = np.zeros_like(x)
    acc = np.ones_like(x)
    for k in range(n):
        p_next = ((2 * k + 1 - x) * p - k * p_prev) / (k + 1)
        p_prev, p = p, p_next
        if k + 1 < n:
            acc = acc + p * p
        big = np.abs(p) > 1e100
        if big.any():
            p[big] *= 1e-100
            p_prev[big] *= 1e-100
            acc[big] *= 1e-200
            logscale[big] += 100 * math.log(10.0)
    # p = L_n, p_prev = L_{n-1} (common scale); L_n' = n (L_n - L_{n-1}) / x
    ratio = x * p / (n * (p - p_prev))
    return np.log(acc) + 2 * logscale, ratio


@lru_cache(maxsize=64)
def gauss_laguerre(n):
    """Nodes and weights of n-point Gauss-Laguerre for weight exp(-t) on [0, inf).

    Nodes start from the Golub-Welsch eigenvalues and are polished by two
    Newton steps; weights come from the Christoffel sum in log space, which
    keeps tiny tail weights accurate to relative precision. Weights that
    underflow to zero are dropped.
    """
    k = np.arange(1, n, dtype=float)
    x = eigh_tridiagonal(2 * np.arange(n) + 1.0, k, eigvals_only=True)
    for _ in range(2):
        _, ratio = _laguerre_logsum(x, n)
        x = x - ratio
    logsum, _ = _laguerre_logsum(x, n)
    w = np.exp(-logsum)
    keep = w > 0
    x, w = x[keep], w[keep]
    w = w / math.fsum(w)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=64)
def nodes(spec):
    """Complex nodes and positive weights (summing to one) for ``spec``."""
    t, wr = gauss_laguerre(spec.radial_nodes)
    r = np.sqrt(t / spec.lambda_weight)
    theta = 2 * np.pi * np.arange(spec.angular_nodes) / spec.angular_nodes
    alphas = (r[:, None] * np.exp(1j * theta)[None, :]).reshape(-1)
    weights = np.repeat(wr / spec.angular_nodes, spec.angular_nodes)
    alphas.setflags(write=False)
    weights.setflags(write=False)
    return alphas, weights


def max_radius(spec):
    """Largest node modulus, for sizing Fock cutoffs."""
    t, _ = gauss_laguerre(spec.radial_nodes)
    return float(math.sqrt(t.max() / spec.lambda_weight))


def suggested_dim(radius):
    """Cutoff rule ``dim >= r^2 + 6 r`` for coherent amplitudes up to ``radius``."""
    return int(math.ceil(radius * radius + 6 * radius)) + 1


def gaussian_plane_integrate(f, spec):
    """Sum_j w_j f(alpha_j) for a vectorised real integrand ``f``.

    ``f`` receives the full array of complex nodes and must return one real
    value per node. The sum is pairwise (numpy's reduction), so results do
    not depend on how callers chunk node evaluation.
    """
    alphas, weights = nodes(spec)
    vals = np.asarray(f(alphas), dtype=float)
    if vals.shape != alphas.shape:
        vals = np.broadcast_to(vals, alphas.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise QuadratureError(f"integrand is not finite at node alpha={alphas[j]!r} (value {vals[j]!r})")
    return float(np.sum(weights * vals))


def refine_until(f, spec, tol, max_radial=MAX_RADIAL_NODES):
    """Double node counts until successive estimates agree to ``tol``.

    Returns ``(value, spec)`` for the finer of the last two estimates.
    """
    if not tol > 0:
        raise InputError(f"tolerance must be positive, got {tol!r}")
    estimates = [gaussian_plane_integrate(f, spec)]
    while True:
        nxt = spec.refined()
        if nxt.radial_nodes > max_radial:
            raise QuadratureError(
                f"quadrature did not converge to {tol:g} within {max_radial} radial nodes; "
                f"last estimates {estimates[-2:]}",
                estimates=estimates[-2:],
            )
        cur = gaussian_plane_integrate(f, nxt)
        if abs(cur - estimates[-1]) < tol:
            return cur, nxt
        estimates.append(cur)
        spec = nxt
