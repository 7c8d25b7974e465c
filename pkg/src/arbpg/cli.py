"""``nmf-compress`` command line.

    nmf-compress --input img.png --rank 20 --method arbpg-b --strategy adaptive --seed 0
    nmf-compress preset lowrank-exact --method arbpg-b
    nmf-compress compare --synthetic atacama-like --rank 20 \\
        --spec "--method arbpg" --spec "--method arbpg-b"

Exit codes: 0 success, 1 usage, 2 I/O, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys

from .experiment import ImageError, RunSpec, compare, comparison_table, run_experiment, run_preset
from .presets import PRESETS, SYNTHETIC_IMAGES
from .problem import UsageError
from .solver import METHODS, STRATEGIES, BacktrackExhausted

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_SOLVER = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _size(text):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}")


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _add_solver_flags(p, suppress=False):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--method", choices=METHODS, default=d if suppress else "arbpg")
    p.add_argument("--strategy", choices=STRATEGIES, default=d if suppress else "adaptive")
    p.add_argument("--sigma-strategy", choices=("adaptive", "fixed"),
                   default=d if suppress else "adaptive",
                   help="boost trial rule (arbpg-b only)")
    p.add_argument("--seed", type=_u64, default=d if suppress else 0)
    p.add_argument("--tol", type=float, default=d, help="relative residual tolerance (default 1e-4)")
    p.add_argument("--max-iters", type=int, default=d, help="iteration cap (default 1500000)")
    p.add_argument("--trace-stride", type=int, default=d if suppress else 100,
                   help="keep every K-th trace row (0 disables traces)")
    p.add_argument("--timing", action="store_true", default=d if suppress else False,
                   help="put wall-clock values into trace CSVs and summary.json (not reproducible)")
    p.add_argument("--no-plots", dest="plots", action="store_false", default=d if suppress else True)


def _add_input_flags(p, suppress=False):
    d = argparse.SUPPRESS if suppress else None
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", default=d, help="PNG file (8-bit gray or RGB)")
    src.add_argument("--synthetic", choices=SYNTHETIC_IMAGES, default=d)
    p.add_argument("--resize", type=_size, default=d, metavar="WxH")
    p.add_argument("--rank", type=int, default=d)
    p.add_argument("--jobs", type=int, default=d if suppress else 1, help="channels solved in parallel")
    p.add_argument("--save-factors", action="store_true", default=d if suppress else False)


def run_parser():
    p = _Parser(prog="nmf-compress", description="NMF image compression with randomized block proximal gradient")
    _add_input_flags(p)
    _add_solver_flags(p)
    p.add_argument("--out", default="nmf_out")
    return p


def preset_parser():
    p = _Parser(prog="nmf-compress preset")
    p.add_argument("preset", choices=PRESETS)
    _add_solver_flags(p)
    p.add_argument("--out", default=None)
    return p


def compare_parser():
    p = _Parser(prog="nmf-compress compare")
    _add_input_flags(p)
    _add_solver_flags(p)
    p.add_argument("--spec", action="append", default=[],
                   help='per-run flags, e.g. --spec "--method arbpg --strategy fixed" (repeat)')
    p.add_argument("--out", default="nmf_compare")
    return p


def spec_override_parser():
    p = _Parser(prog="--spec", add_help=False, argument_default=argparse.SUPPRESS)
    _add_solver_flags(p, suppress=True)
    p.add_argument("--rank", type=int)
    return p


def _spec_from(ns, **extra) -> RunSpec:
    fields = {k: v for k, v in vars(ns).items() if k in RunSpec.__dataclass_fields__}
    fields.update(extra)
    return RunSpec(**fields)


def _dispatch(argv):
    if argv and argv[0] == "preset":
        ns = preset_parser().parse_args(argv[1:])
        spec = _spec_from(ns)
        report = run_preset(ns.preset, spec)
        print(json.dumps(report, indent=2))
        return EXIT_OK
    if argv and argv[0] == "compare":
        ns = compare_parser().parse_args(argv[1:])
        if len(ns.spec) < 2:
            raise UsageError("compare needs at least two --spec groups")
        base = vars(ns).copy()
        specs = []
        for text in ns.spec:
            overrides = vars(spec_override_parser().parse_args(shlex.split(text)))
            merged = argparse.Namespace(**{**base, **overrides})
            specs.append(_spec_from(merged, out=None))
        rows = compare(specs, ns.out)
        sys.stdout.write(comparison_table(rows))
        return EXIT_OK
    if argv and argv[0] == "run":
        argv = argv[1:]
    ns = run_parser().parse_args(argv)
    summary = run_experiment(_spec_from(ns))
    sys.stdout.write(summary.to_text())
    return EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return _dispatch(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BacktrackExhausted as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ImageError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
