"""Separable regularizers with closed-form proximal maps.

Every regularizer exposes ``eval_block(i, xi)``, ``prox_block(i, z, tau)``
and ``threshold(i)`` (the prox-boundedness threshold, ``inf`` for everything
shipped here). Where the prox is multi-valued the selection rule is stated
on the class.
"""

from __future__ import annotations

import numpy as np

from .problem import INF, BlockPartition, UsageError


def prox_nonneg(z, tau):
    """Projection onto the nonnegative orthant (independent of ``tau``)."""
    return np.maximum(z, 0.0)


def prox_l1(z, tau, mu):
    """Soft thresholding at level ``tau * mu``."""
    return np.sign(z) * np.maximum(np.abs(z) - tau * mu, 0.0)


def prox_l0(z, tau, mu):
    """Hard thresholding for ``mu * ||.||_0``.

    Keeps ``z_j`` when ``z_j**2 > 2 tau mu``; ties go to 0.
    """
    z = np.asarray(z, dtype=float)
    return np.where(z * z > 2.0 * tau * mu, z, 0.0)


def prox_box(z, tau, lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise UsageError("box bounds must satisfy lo <= hi")
    return np.minimum(np.maximum(z, lo), hi)


class NonnegIndicator:
    """Indicator of ``x >= 0`` on every coordinate."""

    convex = True

    def eval_block(self, i, xi):
        return 0.0 if xi.min() >= 0.0 else INF

    def prox_block(self, i, z, tau):
        return np.maximum(z, 0.0)

    def threshold(self, i):
        return INF

    def __repr__(self):
        return "NonnegIndicator()"


class BoxIndicator:
    """Indicator of ``lo <= x <= hi``.

    Bounds are scalars or full-length vectors; vectors need the partition to
    locate each block.
    """

    convex = True

    def __init__(self, lo, hi, partition: BlockPartition | None = None):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if self.lo.shape != self.hi.shape:
            raise UsageError("lo and hi must have the same shape")
        if np.any(self.lo > self.hi):
            raise UsageError("box bounds must satisfy lo <= hi")
        if self.lo.ndim > 0:
            if partition is None:
                raise UsageError("vector bounds need a partition")
            if self.lo.shape != (partition.n,):
                raise UsageError("bounds length does not match the partition")
        self.partition = partition

    def _bounds(self, i):
        if self.lo.ndim == 0:
            return self.lo, self.hi
        sl = self.partition.slice(i)
        return self.lo[sl], self.hi[sl]

    def eval_block(self, i, xi):
        lo, hi = self._bounds(i)
        return 0.0 if np.all(xi >= lo) and np.all(xi <= hi) else INF

    def prox_block(self, i, z, tau):
        lo, hi = self._bounds(i)
        return np.minimum(np.maximum(z, lo), hi)

    def threshold(self, i):
        return INF


class L1Penalty:
    """``mu * ||x||_1``."""

    convex = True

    def __init__(self, mu: float):
        if mu < 0:
            raise UsageError("l1 weight must be nonnegative")
        self.mu = float(mu)

    def eval_block(self, i, xi):
        return self.mu * float(np.abs(xi).sum())

    def prox_block(self, i, z, tau):
        return prox_l1(z, tau, self.mu)

    def threshold(self, i):
        return INF

    def __repr__(self):
        return f"L1Penalty(mu={self.mu})"


class L0Penalty:
    """``mu * #{j : x_j != 0}``; nonconvex, prox set-valued at ``z**2 == 2 tau mu``.

    At the tie the selected element is 0.
    """

    convex = False

    def __init__(self, mu: float):
        if mu <= 0:
            raise UsageError("l0 weight must be positive")
        self.mu = float(mu)

    def eval_block(self, i, xi):
        return self.mu * float(np.count_nonzero(xi))

    def prox_block(self, i, z, tau):
        return prox_l0(z, tau, self.mu)

    def threshold(self, i):
        return INF


class ZeroRegularizer:
    """``g = 0``; the prox is the identity."""

    convex = True

    def eval_block(self, i, xi):
        return 0.0

    def prox_block(self, i, z, tau):
        return np.array(z, dtype=float)

    def threshold(self, i):
        return INF


class Tilted:
    """``g + <v, .>`` for a full-length vector ``v``.

    The prox is evaluated through the shifted argument,
    ``prox_{tau (g + <v,.>)}(z) = prox_{tau g}(z - tau v)``; the threshold is
    inherited unchanged.
    """

    def __init__(self, base, v, partition: BlockPartition):
        self.base = base
        self.v = np.asarray(v, dtype=float)
        self.partition = partition
        self.convex = getattr(base, "convex", False)

    def eval_block(self, i, xi):
        gi = self.base.eval_block(i, xi)
        if gi == INF:
            return INF
        return gi + float(self.v[self.partition.slice(i)] @ xi)

    def prox_block(self, i, z, tau):
        return self.base.prox_block(i, z - tau * self.v[self.partition.slice(i)], tau)

    def threshold(self, i):
        return self.base.threshold(i)


def prox_objective(reg, i, u, z, tau):
    """``g_i(u) + ||u - z||^2 / (2 tau)``, the quantity a prox minimizes."""
    gi = reg.eval_block(i, u)
    if gi == INF:
        return INF
    diff = np.asarray(u, dtype=float) - z
    return gi + float(diff @ diff) / (2.0 * tau)
