"""Composite problem model: block structure, smooth oracles and objective values.

Objective values live on the extended real line. They are stored as Python
floats where ``math.inf`` is the only non-finite value allowed; NaN and
``-inf`` coming out of a regularizer are rejected, which keeps every
comparison used by the linesearches total and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

INF = math.inf


class UsageError(ValueError):
    """Raised on malformed input (dimensions, indices, bounds)."""


def check_extended(value: float) -> float:
    """Validate a regularizer value: finite or ``+inf``."""
    value = float(value)
    if math.isnan(value) or value == -INF:
        raise ValueError(f"regularizer returned {value!r}; only finite or +inf allowed")
    return value


class BlockPartition:
    """Contiguous split of ``R^n`` into ``N`` coordinate blocks.

    Blocks are indexed from 0.
    """

    __slots__ = ("sizes", "offsets", "n", "N", "_slices")

    def __init__(self, sizes: Sequence[int]):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 1:
            raise UsageError("a partition needs at least one block")
        if any(s < 1 for s in sizes):
            raise UsageError(f"block sizes must be positive, got {sizes}")
        self.sizes = tuple(sizes)
        self.offsets = tuple(int(o) for o in np.concatenate(([0], np.cumsum(sizes))))
        self.n = self.offsets[-1]
        self.N = len(sizes)
        self._slices = tuple(slice(self.offsets[i], self.offsets[i + 1]) for i in range(self.N))

    @classmethod
    def uniform(cls, n_blocks: int, size: int) -> "BlockPartition":
        return cls([size] * n_blocks)

    def slice(self, i: int) -> slice:
        if not 0 <= i < self.N:
            raise UsageError(f"block index {i} out of range [0, {self.N})")
        return self._slices[i]

    def __len__(self) -> int:
        return self.N

    def __repr__(self) -> str:
        return f"BlockPartition(N={self.N}, n={self.n})"


def block_view(x: np.ndarray, part: BlockPartition, i: int) -> np.ndarray:
    """Return block ``i`` of ``x`` as a writable view (no copy)."""
    if x.shape != (part.n,):
        raise UsageError(f"expected vector of length {part.n}, got shape {x.shape}")
    return x[part.slice(i)]


class SmoothFunction:
    """Smooth part ``f`` of the composite objective.

    The oracle owns a *committed* point. The solver asks for values and block
    gradients at that point, probes single-block candidates with
    :meth:`eval_candidate`, and announces accepted moves with
    :meth:`commit_block`. Subclasses must provide :meth:`evaluate` and
    :meth:`grad_block_at`; the stateful methods below fall back on them, and
    applications with cheap incremental updates override them.
    """

    partition: BlockPartition

    def __init__(self, partition: BlockPartition):
        self.partition = partition
        self.x: Optional[np.ndarray] = None
        self._value = 0.0

    # stateless part
    def evaluate(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad_block_at(self, x: np.ndarray, i: int) -> np.ndarray:
        raise NotImplementedError

    # stateful part
    def reset(self, x: np.ndarray) -> None:
        if x.shape != (self.partition.n,):
            raise UsageError(f"expected vector of length {self.partition.n}, got shape {x.shape}")
        self.x = np.array(x, dtype=float)
        self._value = float(self.evaluate(self.x))

    def value(self) -> float:
        return self._value

    def block_grad(self, i: int) -> np.ndarray:
        return self.grad_block_at(self.x, i)

    def eval_candidate(self, i: int, new_block: np.ndarray) -> float:
        """f at the committed point with block ``i`` replaced by ``new_block``."""
        y = self.x.copy()
        y[self.partition.slice(i)] = new_block
        return float(self.evaluate(y))

    def commit_block(self, i: int, new_block: np.ndarray) -> None:
        self.x[self.partition.slice(i)] = new_block
        self._value = float(self.evaluate(self.x))

    def current_point(self) -> np.ndarray:
        return self.x.copy()


class Regularizer(Protocol):
    def eval_block(self, i: int, xi: np.ndarray) -> float: ...

    def prox_block(self, i: int, z: np.ndarray, tau: float) -> np.ndarray: ...

    def threshold(self, i: int) -> float: ...


@dataclass
class CompositeProblem:
    """``phi = f + sum_i g_i`` over a block partition.

    ``scale`` normalizes the stopping residual (``None`` means
    ``max(1, |phi(x0)|)``); ``window`` is the default residual window length
    (``None`` means ``2 * N``).
    """

    partition: BlockPartition
    smooth: SmoothFunction
    regularizer: Regularizer
    scale: Optional[float] = None
    window: Optional[int] = None
    name: str = "problem"
    meta: dict = field(default_factory=dict)

    def g_value(self, x: np.ndarray) -> float:
        total = 0.0
        for i in range(self.partition.N):
            gi = check_extended(self.regularizer.eval_block(i, x[self.partition.slice(i)]))
            if gi == INF:
                return INF
            total += gi
        return total

    def objective(self, x: np.ndarray) -> float:
        """Full evaluation of ``f(x) + g(x)``; ``inf`` outside ``dom g``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.partition.n,):
            raise UsageError(f"expected vector of length {self.partition.n}, got shape {x.shape}")
        g = self.g_value(x)
        if g == INF:
            return INF
        return float(self.smooth.evaluate(x)) + g


def objective(problem: CompositeProblem, x: np.ndarray) -> float:
    return problem.objective(x)


class Quadratic(SmoothFunction):
    """``f(x) = 0.5 * ||Q x - b||^2`` with a cached residual."""

    def __init__(self, Q: np.ndarray, b: np.ndarray, partition: BlockPartition):
        super().__init__(partition)
        self.Q = np.asarray(Q, dtype=float)
        self.b = np.asarray(b, dtype=float)
        if self.Q.shape[1] != partition.n or self.Q.shape[0] != self.b.shape[0]:
            raise UsageError("Q, b and partition dimensions disagree")
        # column blocks of Q, contiguous for fast matvecs
        self._cols = [np.ascontiguousarray(self.Q[:, partition.slice(i)].T) for i in range(partition.N)]
        self.r = None

    def evaluate(self, x):
        r = self.Q @ x - self.b
        return 0.5 * float(r @ r)

    def grad_block_at(self, x, i):
        return self._cols[i] @ (self.Q @ x - self.b)

    def reset(self, x):
        super().reset(x)
        self.r = self.Q @ self.x - self.b
        self._value = 0.5 * float(self.r @ self.r)

    def block_grad(self, i):
        return self._cols[i] @ self.r

    def eval_candidate(self, i, new_block):
        r = self.r + (new_block - self.x[self.partition.slice(i)]) @ self._cols[i]
        return 0.5 * float(r @ r)

    def commit_block(self, i, new_block):
        sl = self.partition.slice(i)
        self.r = self.r + (new_block - self.x[sl]) @ self._cols[i]
        self.x[sl] = new_block
        self._value = 0.5 * float(self.r @ self.r)


class Quartic(SmoothFunction):
    """``f(x) = 0.25 * sum x_j^4``; gradient is only locally Lipschitz."""

    def evaluate(self, x):
        return 0.25 * float(np.sum(x ** 4))

    def grad_block_at(self, x, i):
        return x[self.partition.slice(i)] ** 3


class HalfSquaredNorm(SmoothFunction):
    """``f(x) = 0.5 * ||x||^2``."""

    def evaluate(self, x):
        return 0.5 * float(x @ x)

    def grad_block_at(self, x, i):
        return x[self.partition.slice(i)].copy()
