"""Adaptive randomized block proximal gradient methods for ``f + g``.

``f`` needs only locally Lipschitz block partial gradients; ``g`` is block
separable with a computable prox. Includes an NMF image-compression
application and the ``nmf-compress`` command line.
"""

from .nmf import NmfProblem, init_uniform, make_nmf_problem, psnr, stack_factors
from .problem import (
    INF,
    BlockPartition,
    CompositeProblem,
    SmoothFunction,
    UsageError,
    block_view,
    objective,
)
from .prox import BoxIndicator, L0Penalty, L1Penalty, NonnegIndicator, ZeroRegularizer
from .solver import (
    BacktrackExhausted,
    ConfigError,
    IterationRecord,
    SolveResult,
    Solver,
    SolverConfig,
    solve,
)

__version__ = "0.1.0"
