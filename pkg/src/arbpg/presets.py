"""Seeded synthetic problems and images."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nmf import init_uniform, make_nmf_problem, stack_factors
from .problem import BlockPartition, CompositeProblem, Quadratic, Quartic, UsageError
from .prox import L1Penalty, ZeroRegularizer

PRESETS = ("quad-l1", "lowrank-exact", "quartic-1d")
SYNTHETIC_IMAGES = ("atacama-like",)


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed of ``seed`` for the given key path.

    Uses numpy's ``SeedSequence`` hashing, so sibling streams are
    decorrelated and the mapping is stable across platforms.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))


@dataclass
class Preset:
    name: str
    problem: CompositeProblem
    x0: np.ndarray
    # solver settings the preset needs regardless of CLI defaults
    config_overrides: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)


def proximal_gradient_reference(Q, b, mu, tol=1e-8, max_iters=1_000_000):
    """Full-vector ISTA for ``0.5 ||Qx - b||^2 + mu ||x||_1`` with step ``1/L``.

    ``L = ||Q||_2^2``. Stops when the gradient mapping ``L ||x+ - x||`` is at
    most ``tol``. Returns ``(x, phi, iterations)``.
    """
    Q = np.asarray(Q, dtype=float)
    b = np.asarray(b, dtype=float)
    L = float(np.linalg.norm(Q, 2)) ** 2
    step = 1.0 / L
    x = np.zeros(Q.shape[1])
    QtQ = Q.T @ Q
    Qtb = Q.T @ b
    it = 0
    for it in range(1, max_iters + 1):
        z = x - step * (QtQ @ x - Qtb)
        x_new = np.sign(z) * np.maximum(np.abs(z) - step * mu, 0.0)
        gap = L * float(np.linalg.norm(x_new - x))
        x = x_new
        if gap <= tol:
            break
    r = Q @ x - b
    phi = 0.5 * float(r @ r) + mu * float(np.abs(x).sum())
    return x, phi, it


def quad_l1(seed=0, n=20, m=30, mu=0.1, block_size=1) -> Preset:
    """``0.5 ||Qx - b||^2 + mu ||x||_1`` with Gaussian ``Q`` (m x n) and ``b``."""
    rng = make_rng(seed, 0)
    Q = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    if n % block_size:
        raise UsageError("block_size must divide n")
    part = BlockPartition.uniform(n // block_size, block_size)
    problem = CompositeProblem(part, Quadratic(Q, b, part), L1Penalty(mu), name="quad-l1",
                               meta={"Q": Q, "b": b, "mu": mu})
    return Preset("quad-l1", problem, np.zeros(n), {"rel_tol": 1e-12, "max_iters": 200_000})


def lowrank_exact(seed=0, m=20, n=20, rank=3) -> Preset:
    """NMF of ``A = W^T H`` with nonnegative ``W``, ``H``; optimal value 0."""
    W = make_rng(seed, 0).random((rank, m))
    H = make_rng(seed, 1).random((rank, n))
    A = W.T @ H
    problem = make_nmf_problem(A, rank, name="lowrank-exact")
    U0, V0 = init_uniform(make_rng(seed, 2), m, n, rank)
    return Preset("lowrank-exact", problem, stack_factors(U0, V0),
                  info={"A_fro2": float(np.sum(A * A))})


def quartic_1d(seed=0, x0=3.0) -> Preset:
    """``0.25 x^4`` from ``x0`` with the trial stepsize pinned at ``tau_hi``."""
    part = BlockPartition([1])
    problem = CompositeProblem(part, Quartic(part), ZeroRegularizer(), name="quartic-1d")
    return Preset("quartic-1d", problem, np.array([x0]),
                  {"strategy": "fixed", "tau_init": 1e8})


def build_preset(name: str, seed: int = 0) -> Preset:
    if name == "quad-l1":
        return quad_l1(seed)
    if name == "lowrank-exact":
        return lowrank_exact(seed)
    if name == "quartic-1d":
        return quartic_1d(seed)
    raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def atacama_like(width=256, height=192, seed=0) -> np.ndarray:
    """Desert landscape stand-in: sky gradient, ridge line, textured sand.

    Returns an ``(height, width, 3)`` uint8 array.
    """
    rng = make_rng(seed, 7)
    yy, xx = np.mgrid[0:height, 0:width] / np.array([height, width]).reshape(2, 1, 1)
    sky = np.stack([0.35 + 0.3 * yy, 0.55 + 0.25 * yy, 0.85 + 0.1 * yy], axis=-1)
    ridge = 0.45 + 0.06 * np.sin(2 * math.pi * 1.5 * xx) + 0.03 * np.sin(2 * math.pi * 5.3 * xx + 1.0)
    mountain = np.stack([0.55 - 0.2 * yy, 0.40 - 0.15 * yy, 0.35 - 0.1 * yy], axis=-1)
    dune = 0.08 * np.sin(2 * math.pi * (3 * xx + 6 * yy))
    sand = np.stack([0.85 + dune, 0.62 + dune, 0.40 + 0.5 * dune], axis=-1)
    sand = sand + 0.04 * rng.standard_normal((height, width, 1))
    img = np.where((yy < ridge)[..., None], sky, np.where((yy < ridge + 0.15)[..., None], mountain, sand))
    return np.clip(np.round(255 * img), 0, 255).astype(np.uint8)


def synthetic_image(name: str, width=256, height=192, seed=0) -> np.ndarray:
    if name == "atacama-like":
        return atacama_like(width, height, seed)
    raise UsageError(f"unknown synthetic image {name!r}; choose from {', '.join(SYNTHETIC_IMAGES)}")
