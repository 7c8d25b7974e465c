"""Adaptive randomized block proximal gradient solver.

One iteration picks a block at random, takes a proximal gradient step on
that block with a stepsize found by backtracking on a sufficient-decrease
test, and optionally extends the step along the same direction (boosted
linesearch). ``monotone_window > 0`` switches the sufficient-decrease test to
the nonmonotone variant that compares against the max of the last ``M + 1``
objective values.

Randomness: a single PCG64 stream seeded with ``config.seed``. Each
iteration consumes exactly one ``random()`` double, used to draw the block
by inverse CDF. Nothing else in the solver draws from the stream.
"""

from __future__ import annotations

import bisect
import math
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from .problem import INF, CompositeProblem, UsageError

STRATEGIES = ("fixed", "decreasing", "adaptive")
METHODS = ("rnbpg", "arbpg", "arbpg-b")

RESIDUAL_TOLERANCE = "ResidualTolerance"
MAX_ITERATIONS = "MaxIterations"
STATIONARY_DIRECTION = "StationaryDirection"


class ConfigError(UsageError):
    pass


class BacktrackExhausted(RuntimeError):
    """The stepsize backtracking ran past ``max_backtracks`` reductions.

    The sufficient-decrease test always succeeds for a small enough stepsize
    when the oracle is consistent, so this points at a broken oracle.
    """

    def __init__(self, block, taus, phi):
        self.block = block
        self.taus = list(taus)
        self.phi = phi
        head = ", ".join(f"{t:.3g}" for t in self.taus[:3])
        tail = ", ".join(f"{t:.3g}" for t in self.taus[-3:])
        super().__init__(
            f"backtracking on block {block} did not terminate after {len(self.taus) - 1} "
            f"reductions (phi={phi!r}); tau trajectory: {head}, ..., {tail}"
        )


@dataclass(frozen=True)
class SolverConfig:
    """Algorithm parameters. Defaults are the tuning used for the NMF runs."""

    tau_lo: float = 1e-8
    tau_hi: float = 1e8
    a: float = 1e-4
    alpha: float = 0.1
    beta: float = 0.9
    rho: float = 0.5
    sigma0: float = 3.0
    delta: float = 2.0
    monotone_window: int = 0
    block_probs: Optional[Sequence[float]] = None
    strategy: str = "adaptive"
    # constant trial value for "fixed", starting value otherwise
    tau_init: float = 2.0
    boost: bool = False
    sigma_strategy: str = "adaptive"
    seed: int = 0
    max_iters: int = 1_500_000
    rel_tol: float = 1e-4
    window: Optional[int] = None
    max_backtracks: int = 2000
    zero_dir_tol: float = 1e-15
    stop_on_stationary: bool = False

    def __post_init__(self):
        if not 0 < self.tau_lo <= self.tau_hi:
            raise ConfigError("need 0 < tau_lo <= tau_hi")
        if self.a <= 0 or self.alpha <= 0:
            raise ConfigError("a and alpha must be positive")
        if not 0 < self.beta < 1:
            raise ConfigError("beta must lie in (0, 1)")
        if not 0 < self.rho < 1:
            raise ConfigError("rho must lie in (0, 1)")
        if self.sigma0 < 1:
            raise ConfigError("sigma0 must be >= 1")
        if self.delta <= 1:
            raise ConfigError("delta must be > 1")
        if self.monotone_window < 0:
            raise ConfigError("monotone_window must be >= 0")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown trial strategy {self.strategy!r}")
        if self.sigma_strategy not in ("fixed", "adaptive"):
            raise ConfigError(f"unknown sigma strategy {self.sigma_strategy!r}")
        if self.strategy == "fixed" and not self.tau_lo <= self.tau_init <= self.tau_hi:
            raise ConfigError("fixed trial stepsize must lie in [tau_lo, tau_hi]")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.max_iters < 0 or self.max_backtracks < 0:
            raise ConfigError("iteration limits must be nonnegative")
        if self.rel_tol < 0 or self.zero_dir_tol < 0:
            raise ConfigError("tolerances must be nonnegative")
        if self.window is not None and self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.block_probs is not None:
            probs = np.asarray(self.block_probs, dtype=float)
            if probs.ndim != 1 or np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
                raise ConfigError("block_probs must be positive and sum to 1")

    @classmethod
    def for_method(cls, method: str, **overrides) -> "SolverConfig":
        """Config for one of ``rnbpg``, ``arbpg``, ``arbpg-b``."""
        if method == "rnbpg":
            base = dict(monotone_window=10, boost=False)
        elif method == "arbpg":
            base = dict(monotone_window=0, boost=False)
        elif method == "arbpg-b":
            base = dict(monotone_window=0, boost=True)
        else:
            raise ConfigError(f"unknown method {method!r}")
        base.update(overrides)
        return cls(**base)

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass
class IterationRecord:
    k: int
    block: int
    tau: float
    tau_bar: float
    backtracks: int
    lam: float
    boost_attempts: int
    phi: float
    dir_norm: float
    elapsed_ns: int
    stationary: bool = False

    def key(self):
        """Everything except the wall-clock field."""
        return (self.k, self.block, self.tau, self.tau_bar, self.backtracks, self.lam,
                self.boost_attempts, self.phi, self.dir_norm, self.stationary)


@dataclass
class SolveResult:
    x: np.ndarray
    phi: float
    phi0: float
    iterations: int
    reason: str
    trace: List[IterationRecord] = field(default_factory=list)
    elapsed_s: float = 0.0


# ---------------------------------------------------------------------------
# building blocks


def sample_block(u: float, cdf: Sequence[float]) -> int:
    """Inverse-CDF draw: the first block whose cumulative probability exceeds ``u``."""
    return min(bisect.bisect_right(cdf, u), len(cdf) - 1)


def trial_tau(strategy, prev_tau, prev_trial, config, threshold=INF, first=False):
    """Starting stepsize for the backtracking of the current iteration.

    The raw value comes from the strategy, then it is clamped into
    ``[tau_lo, min(tau_hi, threshold)]``.
    """
    if strategy == "fixed" or first:
        raw = config.tau_init
    elif strategy == "decreasing":
        raw = prev_tau
    elif strategy == "adaptive":
        raw = prev_tau if prev_tau < prev_trial else prev_tau / config.beta
    else:
        raise ConfigError(f"unknown trial strategy {strategy!r}")
    # the prox is only guaranteed for tau strictly below the threshold
    upper = min(config.tau_hi, math.nextafter(threshold, 0.0))
    if upper < config.tau_lo:
        # prox threshold below tau_lo: stay strictly inside the admissible range
        return 0.5 * upper
    return min(max(raw, config.tau_lo), upper)


def prox_direction(xi, grad_i, i, tau, regularizer):
    """Return ``(u, d)`` with ``u = prox(xi - tau * grad_i)`` and ``d = u - xi``."""
    if not tau < regularizer.threshold(i):
        raise RuntimeError(f"tau={tau} not below the prox threshold of block {i}")
    u = regularizer.prox_block(i, xi - tau * grad_i, tau)
    return u, u - xi


def prox_grad_direction(problem: CompositeProblem, x, i, tau):
    """Block proximal gradient direction at ``x`` (length of block ``i``)."""
    sl = problem.partition.slice(i)
    grad = problem.smooth.grad_block_at(x, i)
    return prox_direction(x[sl], grad, i, tau, problem.regularizer)[1]


@dataclass
class BacktrackResult:
    tau: float
    backtracks: int
    u: np.ndarray
    d: np.ndarray
    dn2: float
    phi_hat: float
    stationary: bool


def backtrack(tau_bar, direction_at, value_at, reference, xi_norm, config) -> BacktrackResult:
    """Shrink ``tau = tau_bar * beta**j`` until ``value_at(u) <= reference - a ||d||^2``.

    ``direction_at(tau)`` returns the candidate block and the step ``(u, d)``;
    ``value_at(u)`` the objective with the block replaced (``inf`` outside
    the domain). A direction with ``||d|| <= zero_dir_tol * (1 + xi_norm)``
    stops the search and is reported as stationary.
    """
    tol = config.zero_dir_tol * (1.0 + xi_norm)
    for j in range(config.max_backtracks + 1):
        tau = tau_bar * config.beta ** j
        u, d = direction_at(tau)
        dn2 = float(d @ d)
        if math.sqrt(dn2) <= tol:
            return BacktrackResult(tau, j, u, d, dn2, INF, True)
        phi_hat = value_at(u)
        if phi_hat <= reference - config.a * dn2:
            return BacktrackResult(tau, j, u, d, dn2, phi_hat, False)
    taus = [tau_bar * config.beta ** j for j in range(config.max_backtracks + 1)]
    raise BacktrackExhausted(None, taus, reference)


@dataclass
class BoostResult:
    lam: float
    sigma: float
    attempts: int
    phi: float


def boosted_linesearch(value_at_sigma, phi_hat, dn2, sigma_bar, config) -> BoostResult:
    """Search ``x + sigma d`` for ``sigma`` in ``sigma_bar * rho**j`` while ``sigma > 1``.

    Accepts the first ``sigma`` with
    ``value <= phi_hat - alpha (sigma - 1)^2 ||d||^2``; if ``sigma`` drops to 1
    or below the extra step is zero and the point stays at ``x + d``.
    """
    sigma = sigma_bar
    attempts = 0
    while sigma > 1.0:
        attempts += 1
        value = value_at_sigma(sigma)
        if value <= phi_hat - config.alpha * (sigma - 1.0) ** 2 * dn2:
            return BoostResult(sigma - 1.0, sigma, attempts, value)
        sigma *= config.rho
    return BoostResult(0.0, sigma, attempts, phi_hat)


def self_adaptive_sigma(sigma, sigma_bar, config) -> float:
    """Next boost trial: grow by ``delta`` after first-try success, else reset."""
    if sigma == sigma_bar:
        return config.delta * sigma_bar
    return max(config.sigma0, sigma)


def nonmonotone_reference(history, M: int) -> float:
    """Max over the newest ``M + 1`` stored objective values."""
    if not history:
        raise ValueError("empty objective history")
    if M == 0:
        return history[-1]
    values = list(history)
    return max(values[-(M + 1):])


def chi(lam: float) -> float:
    """``(1 + lam^2) / (1 + lam)^2``; at least 1/2 for ``lam >= 0``."""
    return (1.0 + lam * lam) / (1.0 + lam) ** 2


# ---------------------------------------------------------------------------


class Solver:
    """Stateful driver; :meth:`step` runs one iteration."""

    _RNG_BATCH = 4096

    def __init__(self, problem: CompositeProblem, config: SolverConfig, x0):
        self.problem = problem
        self.config = config
        part = problem.partition
        x0 = np.array(x0, dtype=float)
        if x0.shape != (part.n,):
            raise UsageError(f"x0 must have length {part.n}, got shape {x0.shape}")
        reg = problem.regularizer
        self.g_blocks = [float(reg.eval_block(i, x0[part.slice(i)])) for i in range(part.N)]
        if not all(math.isfinite(gi) for gi in self.g_blocks):
            raise UsageError("x0 lies outside the domain of the regularizer")
        problem.smooth.reset(x0)
        self.x = x0
        self.g_total = math.fsum(self.g_blocks)
        self.phi = float(problem.smooth.value()) + self.g_total
        if not math.isfinite(self.phi):
            raise UsageError("objective is not finite at x0")
        self.k = 0
        self.tau_prev = config.tau_init
        self.tau_bar_prev = config.tau_init
        self.sigma_bar = config.sigma0
        self.phi_history = deque([self.phi], maxlen=config.monotone_window + 1)

        if config.block_probs is None:
            probs = np.full(part.N, 1.0 / part.N)
        else:
            probs = np.asarray(config.block_probs, dtype=float)
            if probs.shape != (part.N,):
                raise ConfigError(f"block_probs needs {part.N} entries")
        self.cdf = np.cumsum(probs).tolist()
        self._rng = np.random.Generator(np.random.PCG64(config.seed))
        self._draws = np.empty(0)
        self._pos = 0
        self._t0 = time.perf_counter_ns()

    def _uniform(self) -> float:
        if self._pos == len(self._draws):
            self._draws = self._rng.random(self._RNG_BATCH)
            self._pos = 0
        u = self._draws[self._pos]
        self._pos += 1
        return float(u)

    def step(self) -> IterationRecord:
        cfg = self.config
        problem = self.problem
        smooth = problem.smooth
        reg = problem.regularizer

        i = sample_block(self._uniform(), self.cdf)
        tau_bar = trial_tau(cfg.strategy, self.tau_prev, self.tau_bar_prev, cfg,
                            reg.threshold(i), first=self.k == 0)
        sl = problem.partition.slice(i)
        xi = self.x[sl]
        grad = smooth.block_grad(i)
        rest = self.g_total - self.g_blocks[i]

        def direction_at(tau):
            return prox_direction(xi, grad, i, tau, reg)

        def value_at(u):
            gn = reg.eval_block(i, u)
            if gn == INF:
                return INF
            return float(smooth.eval_candidate(i, u)) + (rest + float(gn))

        if cfg.monotone_window == 0:
            reference = self.phi
        else:
            reference = nonmonotone_reference(self.phi_history, cfg.monotone_window)
        try:
            bt = backtrack(tau_bar, direction_at, value_at, reference,
                           float(np.sqrt(xi @ xi)), cfg)
        except BacktrackExhausted as exc:
            raise BacktrackExhausted(i, exc.taus, self.phi) from None

        self.tau_prev, self.tau_bar_prev = bt.tau, tau_bar
        lam, attempts = 0.0, 0
        if not bt.stationary:
            new_block = bt.u
            if cfg.boost:
                d = bt.d
                boost = boosted_linesearch(lambda s: value_at(xi + s * d), bt.phi_hat,
                                           bt.dn2, self.sigma_bar, cfg)
                lam, attempts = boost.lam, boost.attempts
                if lam > 0.0:
                    new_block = xi + boost.sigma * d
                if cfg.sigma_strategy == "adaptive":
                    self.sigma_bar = self_adaptive_sigma(boost.sigma, self.sigma_bar, cfg)
            g_new = float(reg.eval_block(i, new_block))
            smooth.commit_block(i, new_block)
            self.x[sl] = new_block
            self.g_blocks[i] = g_new
            self.g_total = rest + g_new
            self.phi = float(smooth.value()) + self.g_total

        self.phi_history.append(self.phi)
        rec = IterationRecord(self.k, i, bt.tau, tau_bar, bt.backtracks, lam, attempts,
                              self.phi, math.sqrt(bt.dn2), time.perf_counter_ns() - self._t0,
                              bt.stationary)
        self.k += 1
        return rec


def solve(problem: CompositeProblem, config: SolverConfig, x0, trace_stride: int = 1,
          callback: Optional[Callable[[IterationRecord, Solver], None]] = None) -> SolveResult:
    """Iterate until the windowed relative residual drops to ``rel_tol`` or ``max_iters``.

    The residual at iteration ``k >= W`` is ``|phi_{k-W} - phi_k| / scale``.
    ``trace_stride = 0`` disables the trace; otherwise every record with
    ``k % trace_stride == 0`` plus the final one is kept.
    """
    solver = Solver(problem, config, x0)
    W = config.window or problem.window or 2 * problem.partition.N
    phi0 = solver.phi
    scale = problem.scale if problem.scale else max(1.0, abs(phi0))
    window = deque([phi0], maxlen=W + 1)
    trace: List[IterationRecord] = []
    reason = MAX_ITERATIONS
    rec = None
    N = problem.partition.N
    stationary_blocks: set = set()
    t0 = time.perf_counter()

    while solver.k < config.max_iters:
        rec = solver.step()
        if trace_stride and rec.k % trace_stride == 0:
            trace.append(rec)
        if callback is not None:
            callback(rec, solver)
        window.append(rec.phi)
        if solver.k >= W and abs(window[0] - rec.phi) / scale <= config.rel_tol:
            reason = RESIDUAL_TOLERANCE
            break
        if config.stop_on_stationary:
            if rec.stationary:
                stationary_blocks.add(rec.block)
                if len(stationary_blocks) == N:
                    reason = STATIONARY_DIRECTION
                    break
            else:
                stationary_blocks.clear()

    elapsed = time.perf_counter() - t0
    if trace_stride and rec is not None and (not trace or trace[-1] is not rec):
        trace.append(rec)
    return SolveResult(solver.x.copy(), solver.phi, phi0, solver.k, reason, trace, elapsed)
