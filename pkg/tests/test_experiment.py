import json
import math

import numpy as np
import pytest
from PIL import Image

from arbpg.experiment import (
    FACTOR_HEADER,
    ImageError,
    RunSpec,
    compare,
    comparison_table,
    load_image,
    read_factors,
    recompute_psnr,
    run_experiment,
    run_preset,
    write_factors,
)
from arbpg.presets import atacama_like
from arbpg.problem import UsageError
from arbpg.trace import read_trace


@pytest.fixture
def small_png(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "small.png"
    Image.fromarray(rng.integers(0, 256, (10, 12, 3), dtype=np.uint8)).save(path)
    return str(path)


def _spec(path, out=None, **kw):
    kw.setdefault("rank", 2)
    kw.setdefault("max_iters", 400)
    kw.setdefault("trace_stride", 1)
    return RunSpec(input=path, out=out, **kw)


def test_load_image_white_rgb(tmp_path):
    path = tmp_path / "white.png"
    Image.fromarray(np.full((3, 4, 3), 255, dtype=np.uint8)).save(path)
    channels, peak = load_image(str(path))
    assert peak == 255 and len(channels) == 3
    for A in channels:
        assert A.shape == (3, 4) and np.all(A == 1.0)


def test_load_image_grayscale_gives_one_channel(tmp_path):
    path = tmp_path / "gray.png"
    Image.fromarray(np.arange(12, dtype=np.uint8).reshape(3, 4)).save(path)
    channels, _ = load_image(str(path))
    assert len(channels) == 1
    assert channels[0][0, 1] == 1 / 255


def test_load_image_errors(tmp_path):
    path = tmp_path / "cut.png"
    Image.fromarray(np.zeros((20, 20, 3), dtype=np.uint8)).save(path)
    path.write_bytes(path.read_bytes()[:40])
    with pytest.raises(ImageError):
        load_image(str(path))
    with pytest.raises(ImageError):
        load_image(str(tmp_path / "missing.png"))


def test_run_writes_artifacts(small_png, tmp_path):
    out = tmp_path / "run"
    summary = run_experiment(_spec(small_png, str(out), save_factors=True))
    names = {p.name for p in out.iterdir()}
    for ch in ("red", "green", "blue"):
        assert {f"trace_{ch}.csv", f"factors_{ch}.bin"} <= names
    assert {"summary.json", "summary.txt", "reconstruction.png", "convergence.png",
            "stepsizes.png", "reconstruction_compare.png"} <= names
    data = json.loads((out / "summary.json").read_text())
    assert {"method", "strategy", "seed", "channels", "avg"} <= data.keys()
    assert [c["channel"] for c in data["channels"]] == ["red", "green", "blue"]
    for c in data["channels"]:
        assert {"iterations", "time_s", "phi_final", "psnr_db", "termination"} <= c.keys()
        assert c["time_s"] is None
    trace = read_trace(out / "trace_red.csv")
    assert len(trace) == summary.channels[0].iterations
    recon = np.asarray(Image.open(out / "reconstruction.png"))
    assert recon.shape == (10, 12, 3) and recon.dtype == np.uint8


def test_reconstruction_png_is_clamped(tmp_path):
    path = tmp_path / "white.png"
    Image.fromarray(np.full((6, 5), 255, dtype=np.uint8)).save(path)
    out = tmp_path / "run"
    summary = run_experiment(_spec(str(path), str(out), plots=False, max_iters=50))
    recon = np.asarray(Image.open(out / "reconstruction.png")).astype(float)
    raw = summary.channels[0].U.T @ summary.channels[0].V
    np.testing.assert_array_equal(recon, np.round(np.clip(raw, 0, 1) * 255))


def test_identical_specs_give_identical_outputs(small_png, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(_spec(small_png, str(a), plots=False))
    run_experiment(_spec(small_png, str(b), plots=False))
    for name in ("summary.json", "trace_red.csv", "trace_green.csv", "trace_blue.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_parallel_channels_match_sequential(small_png):
    seq = run_experiment(_spec(small_png))
    par = run_experiment(_spec(small_png, jobs=3))
    assert seq.to_json(False) == par.to_json(False)


def test_channels_use_distinct_streams(tmp_path):
    path = tmp_path / "flat.png"
    Image.fromarray(np.full((6, 7, 3), 128, dtype=np.uint8)).save(path)
    summary = run_experiment(_spec(str(path), max_iters=30))
    assert not np.array_equal(summary.channels[0].U, summary.channels[1].U)


def test_rnbpg_provenance(small_png):
    data = run_experiment(_spec(small_png, method="rnbpg")).to_json(False)
    assert data["provenance"]["M"] == 10 and data["provenance"]["boost"] is False
    boosted = run_experiment(_spec(small_png, method="arbpg-b")).to_json(False)
    assert boosted["provenance"]["M"] == 0 and boosted["provenance"]["boost"] is True


def test_full_size_synthetic_accepted():
    img = atacama_like()
    assert img.shape == (192, 256, 3) and img.dtype == np.uint8
    summary = run_experiment(RunSpec(synthetic="atacama-like", rank=100, max_iters=20))
    assert summary.shape == (192, 256)
    assert all(c.termination == "MaxIterations" for c in summary.channels)


def test_rank_required(small_png):
    with pytest.raises(UsageError):
        run_experiment(_spec(small_png, rank=0))
    with pytest.raises(UsageError):
        run_experiment(RunSpec(rank=2))


def test_factor_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    U, V = rng.random((3, 5)), rng.random((3, 4))
    path = tmp_path / "f.bin"
    write_factors(path, U, V)
    raw = path.read_bytes()
    assert len(raw) == FACTOR_HEADER.size + 8 * 27 and FACTOR_HEADER.size == 32
    U2, V2 = read_factors(path)
    assert np.array_equal(U, U2) and np.array_equal(V, V2)
    path.write_bytes(raw[:-8])
    with pytest.raises(ImageError):
        read_factors(path)


def test_psnr_recomputable_from_factors(small_png, tmp_path):
    out = tmp_path / "run"
    summary = run_experiment(_spec(small_png, str(out), save_factors=True, plots=False))
    paths = [out / f"factors_{c}.bin" for c in ("red", "green", "blue")]
    again = recompute_psnr(small_png, paths)
    for c, value in zip(summary.channels, again):
        assert abs(c.psnr_db - value) <= 1e-9


def test_presets_report():
    quad = run_preset("quad-l1", RunSpec(seed=0))
    assert abs(quad["gap"]) <= 1e-6
    low = run_preset("lowrank-exact", RunSpec(method="arbpg-b", max_iters=2000))
    assert low["phi_rel"] < 1.0 and low["iterations"] == 2000
    quartic = run_preset("quartic-1d", RunSpec(max_iters=50))
    assert quartic["strategy"] == "fixed" and 0 < quartic["max_backtracks"] < 2000
    with pytest.raises(UsageError):
        run_preset("nope", RunSpec())


def test_compare_three_rows(small_png, tmp_path):
    specs = [_spec(small_png, method=m, plots=False) for m in ("rnbpg", "arbpg", "arbpg-b")]
    rows = compare(specs, str(tmp_path / "cmp"))
    assert [r["method"] for r in rows] == ["rnbpg", "arbpg", "arbpg-b"]
    assert len({r["input"] for r in rows}) == 1
    table = comparison_table(rows)
    lines = table.splitlines()
    assert "# Iterations" in lines[1] and "Time (s.)" in lines[1]
    assert len(lines) == 3 + 3
    payload = json.loads((tmp_path / "cmp" / "comparison.json").read_text())
    assert len(payload) == 3 and all(r["time_s"] is None for r in payload)


def test_compare_needs_two_specs_on_one_input(small_png, tmp_path):
    with pytest.raises(UsageError):
        compare([_spec(small_png)])
    other = tmp_path / "o.png"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(other)
    with pytest.raises(UsageError):
        compare([_spec(small_png), _spec(str(other))])


def test_timing_opt_in(small_png):
    summary = run_experiment(_spec(small_png, timing=True, max_iters=10))
    data = summary.to_json(True)
    assert all(isinstance(c["time_s"], float) for c in data["channels"])
    assert not math.isnan(data["avg"]["time_s"])
