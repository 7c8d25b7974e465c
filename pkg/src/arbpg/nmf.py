"""Nonnegative matrix factorization ``A ~ U^T V`` as a block composite problem.

``f(U, V) = 0.5 * ||A - U^T V||_F^2`` with ``U`` (p x m) and ``V`` (p x n)
constrained to be nonnegative. Each column of ``U`` and each column of ``V``
is one block of size ``p``, so there are ``m + n`` blocks. The flat variable
stacks the columns of ``U`` followed by the columns of ``V``.

Internally the factors are kept transposed (``Ut = U.T``, ``Vt = V.T``) so a
block is a contiguous row. The residual ``R = A - U^T V`` and ``||R||_F^2``
are cached and updated per commit in ``O(p * max(m, n))``.
"""

from __future__ import annotations

import math

import numpy as np

from .problem import BlockPartition, CompositeProblem, SmoothFunction, UsageError
from .prox import NonnegIndicator


def split_x(x, m, n, p):
    """Return views ``(Ut, Vt)`` of the flat variable."""
    return x[: m * p].reshape(m, p), x[m * p:].reshape(n, p)


def stack_factors(U, V):
    """Flat variable from ``U`` (p x m) and ``V`` (p x n)."""
    return np.concatenate((np.asarray(U, dtype=float).T.ravel(), np.asarray(V, dtype=float).T.ravel()))


def init_uniform(rng: np.random.Generator, m: int, n: int, p: int):
    """Random factors with entries uniform in ``[0, 1)``.

    Draw order: the columns of ``U`` one after another, then the columns of
    ``V``.
    """
    if p < 1 or m < 1 or n < 1:
        raise UsageError(f"need positive m, n, p; got m={m}, n={n}, p={p}")
    Ut = rng.random((m, p))
    Vt = rng.random((n, p))
    return Ut.T.copy(), Vt.T.copy()


class NmfProblem(SmoothFunction):
    """Smooth NMF oracle with residual caching.

    Every ``refresh_cadence`` commits the residual is rebuilt from scratch.
    The probe preceding such a commit also evaluates from scratch, so a
    probe and the value after committing the same block are always
    bitwise equal. The relative gap between the incrementally tracked and
    the rebuilt ``||R||^2`` is appended to ``drift_log`` at every refresh.
    """

    def __init__(self, A, p: int, refresh_cadence: int | None = None):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.size == 0:
            raise UsageError("A must be a nonempty 2-d array")
        if p < 1:
            raise UsageError("rank p must be positive")
        self.A = A
        self.m, self.n = A.shape
        self.p = int(p)
        super().__init__(BlockPartition.uniform(self.m + self.n, self.p))
        self.refresh_cadence = int(refresh_cadence or (self.m + self.n))
        self.Ut = self.Vt = self.R = None
        self.r2 = 0.0
        self.commits = 0
        self.drift_log = []

    # stateless
    def evaluate(self, x):
        Ut, Vt = split_x(np.asarray(x, dtype=float), self.m, self.n, self.p)
        R = self.A - Ut @ Vt.T
        return 0.5 * float(np.dot(R.ravel(), R.ravel()))

    def grad_block_at(self, x, i):
        Ut, Vt = split_x(np.asarray(x, dtype=float), self.m, self.n, self.p)
        R = self.A - Ut @ Vt.T
        if i < self.m:
            return -(R[i] @ Vt)
        return -(R[:, i - self.m] @ Ut)

    # stateful
    def reset(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.partition.n,):
            raise UsageError(f"expected vector of length {self.partition.n}, got shape {x.shape}")
        Ut, Vt = split_x(x, self.m, self.n, self.p)
        self.Ut = Ut.copy()
        self.Vt = Vt.copy()
        self.commits = 0
        self.drift_log = []
        self._rebuild()

    def _rebuild(self):
        self.R = self.A - self.Ut @ self.Vt.T
        self.r2 = float(np.dot(self.R.ravel(), self.R.ravel()))

    def _refresh_due(self):
        return (self.commits + 1) % self.refresh_cadence == 0

    def value(self):
        return 0.5 * self.r2

    def current_point(self):
        return np.concatenate((self.Ut.ravel(), self.Vt.ravel()))

    @property
    def U(self):
        return self.Ut.T

    @property
    def V(self):
        return self.Vt.T

    def grad_u_col(self, j):
        return -(self.R[j] @ self.Vt)

    def grad_v_col(self, j):
        return -(self.R[:, j] @ self.Ut)

    def block_grad(self, i):
        if i < self.m:
            return -(self.R[i] @ self.Vt)
        return -(self.R[:, i - self.m] @ self.Ut)

    def _full_value_with(self, i, new_block):
        Ut, Vt = self.Ut, self.Vt
        if i < self.m:
            Ut = Ut.copy()
            Ut[i] = new_block
        else:
            Vt = Vt.copy()
            Vt[i - self.m] = new_block
        R = self.A - Ut @ Vt.T
        return 0.5 * float(np.dot(R.ravel(), R.ravel()))

    def probe_u_col(self, j, new_col):
        delta = new_col - self.Ut[j]
        if not delta.any():
            return 0.5 * self.r2
        row = self.R[j]
        new_row = row - self.Vt @ delta
        return 0.5 * (self.r2 - float(row @ row) + float(new_row @ new_row))

    def probe_v_col(self, j, new_col):
        delta = new_col - self.Vt[j]
        if not delta.any():
            return 0.5 * self.r2
        col = self.R[:, j]
        new_c = col - self.Ut @ delta
        return 0.5 * (self.r2 - float(col @ col) + float(new_c @ new_c))

    def eval_candidate(self, i, new_block):
        if self._refresh_due():
            return self._full_value_with(i, new_block)
        if i < self.m:
            return self.probe_u_col(i, new_block)
        return self.probe_v_col(i - self.m, new_block)

    def commit_u_col(self, j, new_col):
        self.commit_block(j, new_col)

    def commit_v_col(self, j, new_col):
        self.commit_block(self.m + j, new_col)

    def commit_block(self, i, new_block):
        old = self.Ut[i] if i < self.m else self.Vt[i - self.m]
        delta = new_block - old
        refresh = self._refresh_due()
        if not delta.any() and not refresh:
            self.commits += 1
            return
        if i < self.m:
            row = self.R[i]
            new_row = row - self.Vt @ delta
            r2 = self.r2 - float(row @ row) + float(new_row @ new_row)
            self.R[i] = new_row
            self.Ut[i] = new_block
        else:
            j = i - self.m
            col = self.R[:, j]
            new_c = col - self.Ut @ delta
            r2 = self.r2 - float(col @ col) + float(new_c @ new_c)
            self.R[:, j] = new_c
            self.Vt[j] = new_block
        self.commits += 1
        if refresh:
            self._rebuild()
            self.drift_log.append(abs(r2 - self.r2) / max(self.r2, np.finfo(float).tiny))
        else:
            self.r2 = r2


def nmf_value(problem: NmfProblem) -> float:
    return problem.value()


def make_nmf_problem(A, p, refresh_cadence=None, name="nmf") -> CompositeProblem:
    """Composite NMF problem with nonnegativity on both factors.

    Stopping scale is ``||A||_F`` and the residual window ``2 (m + n)``.
    """
    smooth = NmfProblem(A, p, refresh_cadence)
    scale = float(np.linalg.norm(smooth.A))
    return CompositeProblem(
        partition=smooth.partition,
        smooth=smooth,
        regularizer=NonnegIndicator(),
        scale=scale if scale > 0 else None,
        window=2 * (smooth.m + smooth.n),
        name=name,
        meta={"m": smooth.m, "n": smooth.n, "p": smooth.p},
    )


def reconstruct(U, V):
    return np.asarray(U).T @ np.asarray(V)


def psnr(A, U, V, max_pixel: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for an exact reconstruction."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        raise UsageError("empty image")
    R = A - reconstruct(U, V)
    mse = float(np.dot(R.ravel(), R.ravel())) / A.size
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(max_pixel) - 10.0 * math.log10(mse)


def psnr_from_mse(mse: float, max_pixel: float = 1.0) -> float:
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(max_pixel) - 10.0 * math.log10(mse)
