"""Image-compression experiments, synthetic presets and method comparisons.

Seeding: channel ``c`` of a run with seed ``s`` initializes its factors from
the stream ``derive_seed(s, c, 0)`` and drives the block sampling with
``derive_seed(s, c, 1)`` (numpy ``SeedSequence`` hashing of the key path).
One seed therefore reproduces the whole experiment while channels get
decorrelated streams.
"""

from __future__ import annotations

import json
import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import plotting
from .nmf import init_uniform, make_nmf_problem, psnr, reconstruct, stack_factors
from .presets import build_preset, derive_seed, proximal_gradient_reference, synthetic_image
from .problem import UsageError
from .solver import METHODS, STRATEGIES, SolverConfig, solve
from .trace import write_trace

FACTOR_MAGIC = b"NMFFAC01"
FACTOR_HEADER = struct.Struct("<8sQQQ")


class ImageError(OSError):
    pass


@dataclass
class RunSpec:
    input: Optional[str] = None
    synthetic: Optional[str] = None
    # (width, height) applied after loading
    resize: Optional[Tuple[int, int]] = None
    rank: Optional[int] = None
    method: str = "arbpg"
    strategy: str = "adaptive"
    sigma_strategy: str = "adaptive"
    seed: int = 0
    tol: Optional[float] = None
    max_iters: Optional[int] = None
    out: Optional[str] = None
    trace_stride: int = 100
    jobs: int = 1
    timing: bool = False
    save_factors: bool = False
    plots: bool = True

    def validate(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}")
        if self.strategy not in STRATEGIES:
            raise UsageError(f"unknown strategy {self.strategy!r}")
        if self.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        if self.trace_stride < 0:
            raise UsageError("--trace-stride must be >= 0")

    @property
    def label(self):
        return f"{self.method}/{self.strategy}"

    def solver_config(self, seed: int, **defaults) -> SolverConfig:
        kw = dict(defaults)
        kw.update(strategy=self.strategy, sigma_strategy=self.sigma_strategy, seed=seed)
        if self.tol is not None:
            kw["rel_tol"] = self.tol
        if self.max_iters is not None:
            kw["max_iters"] = self.max_iters
        return SolverConfig.for_method(self.method, **kw)


@dataclass
class ChannelResult:
    channel: str
    iterations: int
    time_s: float
    phi_final: float
    psnr_db: float
    termination: str
    U: np.ndarray = field(repr=False, default=None)
    V: np.ndarray = field(repr=False, default=None)
    trace: list = field(repr=False, default_factory=list)
    max_drift: float = 0.0


@dataclass
class RunSummary:
    spec: RunSpec
    shape: Tuple[int, int]
    config: SolverConfig
    channels: List[ChannelResult]

    def average(self, attr):
        values = [getattr(c, attr) for c in self.channels]
        return sum(values) / len(values)

    def to_json(self, timing: bool) -> dict:
        def num(v):
            return "inf" if v == math.inf else v

        cfg = self.config
        m, n = self.shape
        return {
            "method": self.spec.method,
            "strategy": self.spec.strategy,
            "seed": self.spec.seed,
            "rank": self.spec.rank,
            "input": self.spec.input or f"synthetic:{self.spec.synthetic}",
            "shape": [m, n],
            "provenance": {
                "M": cfg.monotone_window, "boost": cfg.boost, "sigma_strategy": cfg.sigma_strategy,
                "tau_lo": cfg.tau_lo, "tau_hi": cfg.tau_hi, "tau_init": cfg.tau_init,
                "a": cfg.a, "beta": cfg.beta, "alpha": cfg.alpha, "rho": cfg.rho,
                "sigma0": cfg.sigma0, "delta": cfg.delta, "rel_tol": cfg.rel_tol,
                "max_iters": cfg.max_iters, "window": 2 * (m + n),
            },
            "channels": [
                {"channel": c.channel, "iterations": c.iterations,
                 "time_s": c.time_s if timing else None, "phi_final": c.phi_final,
                 "psnr_db": num(c.psnr_db), "termination": c.termination}
                for c in self.channels
            ],
            "avg": {
                "iterations": self.average("iterations"),
                "time_s": self.average("time_s") if timing else None,
                "phi_final": self.average("phi_final"),
                "psnr_db": num(self.average("psnr_db")),
            },
        }

    def to_text(self) -> str:
        lines = [
            f"input: {self.spec.input or 'synthetic:' + str(self.spec.synthetic)}  "
            f"shape: {self.shape[0]}x{self.shape[1]}  rank: {self.spec.rank}",
            f"method: {self.spec.method}  strategy: {self.spec.strategy}  seed: {self.spec.seed}",
            "",
            f"{'channel':<8} {'# Iterations':>12} {'Time (s.)':>10} {'phi(U,V)':>14} {'PSNR':>8}  termination",
        ]
        for c in self.channels:
            lines.append(f"{c.channel:<8} {c.iterations:>12d} {c.time_s:>10.2f} {c.phi_final:>14.6g} "
                         f"{c.psnr_db:>8.2f}  {c.termination}")
        lines.append(f"{'average':<8} {self.average('iterations'):>12.1f} {self.average('time_s'):>10.2f} "
                     f"{self.average('phi_final'):>14.6g} {self.average('psnr_db'):>8.2f}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# image I/O


def load_image(path):
    """Read an 8-bit grayscale or RGB PNG.

    Returns ``(channels, max_pixel)`` where ``channels`` is a list of float
    matrices scaled to ``[0, 1]`` (one for grayscale, three for color) and
    ``max_pixel`` is 255.
    """
    img = _open_image(path)
    arr = np.asarray(img)
    if arr.ndim == 2:
        return [arr.astype(float) / 255.0], 255
    return [arr[..., c].astype(float) / 255.0 for c in range(3)], 255


def _open_image(path):
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "RGB"):
                return im.copy()
            if im.mode in ("LA", "RGBA", "P"):
                return im.convert("RGB" if im.mode != "LA" else "L")
            if im.mode == "1":
                return im.convert("L")
            raise ImageError(f"{path}: unsupported image mode {im.mode!r} (need 8-bit gray or RGB)")
    except FileNotFoundError as exc:
        raise ImageError(f"{path}: no such file") from exc
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        if isinstance(exc, ImageError):
            raise
        raise ImageError(f"{path}: cannot decode image ({exc})") from exc


def load_input(spec: RunSpec):
    """uint8 image array (H x W or H x W x 3) for a run spec."""
    if (spec.input is None) == (spec.synthetic is None):
        raise UsageError("give exactly one of --input or --synthetic")
    if spec.input is not None:
        img = _open_image(spec.input)
    else:
        img = Image.fromarray(synthetic_image(spec.synthetic, seed=0))
    if spec.resize is not None:
        img = img.resize(tuple(spec.resize), Image.Resampling.LANCZOS)
    return np.asarray(img)


def channel_names(count):
    return ["gray"] if count == 1 else ["red", "green", "blue"]


def write_factors(path, U, V):
    """Little-endian float64 factors: 32-byte header then U and V row-major."""
    U = np.ascontiguousarray(U, dtype="<f8")
    V = np.ascontiguousarray(V, dtype="<f8")
    p, m = U.shape
    _, n = V.shape
    with open(path, "wb") as fh:
        fh.write(FACTOR_HEADER.pack(FACTOR_MAGIC, m, n, p))
        fh.write(U.tobytes())
        fh.write(V.tobytes())


def read_factors(path):
    with open(path, "rb") as fh:
        magic, m, n, p = FACTOR_HEADER.unpack(fh.read(FACTOR_HEADER.size))
        if magic != FACTOR_MAGIC:
            raise ImageError(f"{path}: not a factor file")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != p * (m + n):
        raise ImageError(f"{path}: truncated factor file")
    return data[: p * m].reshape(p, m).copy(), data[p * m:].reshape(p, n).copy()


# ---------------------------------------------------------------------------
# runs


def run_channel(A, rank, config: SolverConfig, init_seed: int, name: str, trace_stride: int):
    m, n = A.shape
    problem = make_nmf_problem(A, rank, name=name)
    U0, V0 = init_uniform(np.random.Generator(np.random.PCG64(init_seed)), m, n, rank)
    res = solve(problem, config, stack_factors(U0, V0), trace_stride=trace_stride)
    smooth = problem.smooth
    U, V = smooth.U.copy(), smooth.V.copy()
    return ChannelResult(name, res.iterations, res.elapsed_s, res.phi, psnr(A, U, V, 1.0),
                         res.reason, U, V, res.trace, max(smooth.drift_log, default=0.0))


def _run_channel_star(args):
    return run_channel(*args)


def run_experiment(spec: RunSpec) -> RunSummary:
    """Compress every channel of the input and write the report artifacts."""
    spec.validate()
    if spec.rank is None or spec.rank < 1:
        raise UsageError("--rank must be a positive integer")
    image = load_input(spec)
    if image.ndim == 2:
        mats = [image.astype(float) / 255.0]
    else:
        mats = [image[..., c].astype(float) / 255.0 for c in range(3)]
    names = channel_names(len(mats))
    m, n = mats[0].shape
    defaults = dict(rel_tol=1e-4, max_iters=1_500_000)
    jobs = []
    configs = []
    for c, A in enumerate(mats):
        cfg = spec.solver_config(derive_seed(spec.seed, c, 1), **defaults)
        configs.append(cfg)
        jobs.append((A, spec.rank, cfg, derive_seed(spec.seed, c, 0), names[c], spec.trace_stride))
    if spec.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(spec.jobs, len(jobs))) as pool:
            results = list(pool.map(_run_channel_star, jobs))
    else:
        results = [run_channel(*job) for job in jobs]
    summary = RunSummary(spec, (m, n), configs[0].with_(seed=spec.seed), results)
    if spec.out:
        write_artifacts(summary, image)
    return summary


def reconstructed_image(channels: Sequence[ChannelResult]) -> np.ndarray:
    planes = [np.clip(reconstruct(c.U, c.V), 0.0, 1.0) for c in channels]
    img = np.round(np.stack(planes, axis=-1) * 255.0).astype(np.uint8)
    return img[..., 0] if img.shape[-1] == 1 else img


def write_artifacts(summary: RunSummary, original: np.ndarray):
    spec = summary.spec
    os.makedirs(spec.out, exist_ok=True)
    for c in summary.channels:
        write_trace(os.path.join(spec.out, f"trace_{c.channel}.csv"), c.trace, spec.timing)
        if spec.save_factors:
            write_factors(os.path.join(spec.out, f"factors_{c.channel}.bin"), c.U, c.V)
    recon = reconstructed_image(summary.channels)
    Image.fromarray(recon).save(os.path.join(spec.out, "reconstruction.png"))
    with open(os.path.join(spec.out, "summary.json"), "w") as fh:
        json.dump(summary.to_json(spec.timing), fh, indent=2)
        fh.write("\n")
    with open(os.path.join(spec.out, "summary.txt"), "w") as fh:
        fh.write(summary.to_text())
    if spec.plots:
        traces = {c.channel: c.trace for c in summary.channels}
        plotting.plot_convergence(traces, os.path.join(spec.out, "convergence.png"), spec.label)
        plotting.plot_stepsizes(traces, os.path.join(spec.out, "stepsizes.png"))
        plotting.plot_reconstruction(original, recon, os.path.join(spec.out, "reconstruction_compare.png"),
                                     f"{spec.label}, p = {spec.rank}")


def run_preset(name: str, spec: RunSpec) -> dict:
    """Run a synthetic preset and report final value and the reference gap where known."""
    spec.validate()
    preset = build_preset(name, spec.seed)
    overrides = dict(preset.config_overrides)
    cfg = spec.solver_config(derive_seed(spec.seed, 0, 1), **overrides)
    if "strategy" in preset.config_overrides:
        cfg = cfg.with_(strategy=overrides["strategy"], tau_init=overrides["tau_init"])
    res = solve(preset.problem, cfg, preset.x0, trace_stride=spec.trace_stride)
    report = {
        "preset": name, "method": spec.method, "strategy": cfg.strategy, "seed": spec.seed,
        "iterations": res.iterations, "phi_final": res.phi, "termination": res.reason,
        "time_s": res.elapsed_s if spec.timing else None,
    }
    if name == "quad-l1":
        meta = preset.problem.meta
        _, ref_phi, _ = proximal_gradient_reference(meta["Q"], meta["b"], meta["mu"], tol=1e-8)
        report.update(reference_phi=ref_phi, gap=res.phi - ref_phi)
    elif name == "lowrank-exact":
        report.update(A_fro2=preset.info["A_fro2"], phi_rel=res.phi / preset.info["A_fro2"])
    elif name == "quartic-1d":
        report.update(x_final=float(res.x[0]),
                      max_backtracks=max((r.backtracks for r in res.trace), default=0))
    if spec.out:
        os.makedirs(spec.out, exist_ok=True)
        write_trace(os.path.join(spec.out, f"trace_{name}.csv"), res.trace, spec.timing)
        with open(os.path.join(spec.out, "summary.json"), "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        if spec.plots:
            plotting.plot_convergence({name: res.trace}, os.path.join(spec.out, "convergence.png"),
                                      f"{name}, {spec.label}")
    return report


def compare(specs: Sequence[RunSpec], out: Optional[str] = None):
    """Run several specs on the same input; one table row per spec."""
    if len(specs) < 2:
        raise UsageError("compare needs at least two specs")
    sources = {(s.input, s.synthetic, tuple(s.resize) if s.resize else None) for s in specs}
    if len(sources) != 1:
        raise UsageError("all compared specs must use the same input")
    rows, series = [], {}
    for idx, spec in enumerate(specs):
        if out:
            spec.out = os.path.join(out, f"{idx:02d}-{spec.method}-{spec.strategy}")
        summary = run_experiment(spec)
        label = f"{idx}:{spec.label}" if sum(s.label == spec.label for s in specs) > 1 else spec.label
        rows.append({
            "label": label, "input": spec.input or f"synthetic:{spec.synthetic}",
            "method": spec.method, "strategy": spec.strategy, "seed": spec.seed,
            "iterations": summary.average("iterations"), "time_s": summary.average("time_s"),
            "phi_final": summary.average("phi_final"), "psnr_db": summary.average("psnr_db"),
        })
        series[label] = summary.channels[0].trace
    if out:
        timing = any(s.timing for s in specs)
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "comparison.txt"), "w") as fh:
            fh.write(comparison_table(rows))
        with open(os.path.join(out, "comparison.json"), "w") as fh:
            payload = [dict(r, time_s=r["time_s"] if timing else None,
                            psnr_db="inf" if r["psnr_db"] == math.inf else r["psnr_db"]) for r in rows]
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        if specs[0].plots:
            plotting.plot_comparison(rows, series, os.path.join(out, "comparison.png"))
    return rows


def comparison_table(rows) -> str:
    head = f"{'Method':<10} {'Strategy':<11} {'# Iterations':>12} {'Time (s.)':>10} {'phi(U_out,V_out)':>17} {'PSNR':>7}"
    lines = [f"input: {rows[0]['input']}", head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['method']:<10} {r['strategy']:<11} {r['iterations']:>12.0f} {r['time_s']:>10.2f} "
                     f"{r['phi_final']:>17.6g} {r['psnr_db']:>7.2f}")
    return "\n".join(lines) + "\n"


def recompute_psnr(image_path, factor_paths) -> List[float]:
    """PSNR per channel from an input PNG and persisted factor files."""
    channels, _ = load_image(image_path)
    out = []
    for A, path in zip(channels, factor_paths):
        U, V = read_factors(path)
        out.append(psnr(A, U, V, 1.0))
    return out
