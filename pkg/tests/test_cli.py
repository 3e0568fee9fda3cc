import numpy as np
import pytest

from scgi.harness import io
from scgi.harness.cli import main
from scgi.harness.config import parse_config
from scgi.harness.pipeline import FrameSimulator, replay_frames, run_simulation, shard_bounds
from scgi.optics import Grid

SMALL = ["--set", "frames=4000", "--set", "block_size=500", "--set", "beta_count=128",
         "--set", "source_count=128", "--set", "power_hold_frames=500"]


def _run(*args):
    return main(list(args))


def _report(path):
    return dict(io.read_key_values(path / "report.txt"))


def _check_files(out):
    rep = io.read_key_values(out / "report.txt")
    files = [v for k, v in rep if k.startswith("file.")]
    assert files
    for name in files:
        assert (out / name).stat().st_size > 0
    return files


def test_simulate_and_report(tmp_path):
    out = tmp_path / "s"
    assert _run("simulate", "--preset", "fig2", "--out", str(out), *SMALL) == 0
    files = _check_files(out)
    assert "simulated.csv" in files and "report.txt" in files
    raw = (out / "simulated.csv").read_bytes()
    assert raw.startswith(b"beta_m,gi,scgi\n") and b"\r" not in raw
    header, data = io.read_curves_csv(out / "simulated.csv")
    assert data.shape == (128, 3)
    img = io.read_pgm(out / "simulated_gi.pgm")
    assert img.shape == (64, 128) and img.max() == 65535
    rep = _report(out)
    assert int(rep["frames"]) == 4000 and float(rep["frames_per_s"]) > 0


def test_strict_determinism(tmp_path):
    outs = []
    for k, extra in enumerate([[], ["--set", "workers=3"]]):
        out = tmp_path / f"d{k}"
        assert _run("simulate", "--preset", "fig3", "--strict", "--seed", "17", "--out", str(out), *SMALL, *extra) == 0
        outs.append((out / "simulated.csv").read_bytes())
    assert outs[0] == outs[1]
    other = tmp_path / "d2"
    _run("simulate", "--preset", "fig3", "--strict", "--seed", "18", "--out", str(other), *SMALL)
    assert (other / "simulated.csv").read_bytes() != outs[0]


def test_tolerant_threads_close(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _run("simulate", "--preset", "fig2", "--out", str(a), *SMALL)
    _run("simulate", "--preset", "fig2", "--out", str(b), "--set", "workers=4", *SMALL)
    _, x = io.read_curves_csv(a / "simulated.csv")
    _, y = io.read_curves_csv(b / "simulated.csv")
    np.testing.assert_allclose(y, x, rtol=1e-8)


@pytest.mark.parametrize("estimator", ["frame", "block"])
def test_replay_round_trip(tmp_path, estimator):
    out = tmp_path / "sim"
    args = ["--preset", "fig2", "--strict", *SMALL, "--set", f"estimator={estimator}"]
    assert _run("simulate", "--out", str(out), "--set", "save_frames=true", *args) == 0
    manifest = out / "frames_manifest.txt"
    assert _run("replay", "--manifest", str(manifest), "--out", str(tmp_path / "rep"), *args) == 0
    _, sim = io.read_curves_csv(out / "simulated.csv")
    _, rep = io.read_curves_csv(tmp_path / "rep" / "replayed.csv")
    np.testing.assert_allclose(rep, sim, rtol=1e-9)
    assert (out / "simulated.csv").read_bytes() == (tmp_path / "rep" / "replayed.csv").read_bytes()
    _check_files(tmp_path / "rep")


def test_replay_bucket_scaling(tmp_path):
    cfg = parse_config("", preset="fig2", overrides={
        "frames": "3000", "estimator": "frame", "beta_count": "64", "source_count": "128",
        "out_dir": str(tmp_path / "a"), "strict": "true"})
    sim = FrameSimulator(cfg)
    I, B = sim(0, 3000)
    base = io.write_frame_stack(tmp_path, I, B, sim.beta_grid, stem="base")
    scaled = io.write_frame_stack(tmp_path, I, B * 2.5, sim.beta_grid, stem="scaled")
    r1 = replay_frames(base, cfg)
    cfg.out_dir = str(tmp_path / "b")
    r2 = replay_frames(scaled, cfg)
    gi1, gi2 = r1.images["gi"].values, r2.images["gi"].values
    sc1, sc2 = r1.images["scgi"].values, r2.images["scgi"].values
    np.testing.assert_allclose(gi2, 2.5 * gi1, rtol=1e-9, atol=1e-9 * np.abs(gi1).max())
    np.testing.assert_allclose(sc2, 6.25 * sc1, rtol=1e-9, atol=1e-9 * sc1.max())


def test_replay_pgm_frames(tmp_path):
    rows = np.array([[0, 10, 20], [5, 5, 5], [30, 0, 10]], float)
    io.write_pgm(tmp_path / "f.pgm", rows)
    (tmp_path / "b.csv").write_text("frame,bucket\n0,1.0\n1,2.0\n2,4.0\n")
    (tmp_path / "m.txt").write_text("pixels = f.pgm\nbuckets = b.csv\n")
    stack = io.read_manifest(tmp_path / "m.txt")
    I, B = stack(0, 3)
    np.testing.assert_allclose(I, rows / 30 * 65535, rtol=1e-4)
    assert list(B) == [1.0, 2.0, 4.0]


def test_exit_codes(tmp_path):
    assert _run("simulate", "--preset", "fig2", "--set", "wavelength_m=-1") == 2
    assert _run("simulate", "--set", "colour=red") == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("wavelength_m = 1e-6\nnonsense\n")
    assert _run("analytic", "--config", str(bad)) == 2
    assert _run("analytic", "--config", str(tmp_path / "missing.cfg")) == 4
    assert _run("replay", "--preset", "fig2", "--manifest", str(tmp_path / "none.txt")) == 4


def test_single_frame_manifest_is_runtime_error(tmp_path):
    io.write_frame_stack(tmp_path, np.ones((1, 4)), [1.0], Grid(0, 1, 4), stem="one")
    code = _run("replay", "--preset", "fig2", "--set", "estimator=frame",
                "--manifest", str(tmp_path / "one_manifest.txt"), "--out", str(tmp_path / "o"))
    assert code == 3


def test_manifest_errors(tmp_path):
    io.write_frame_stack(tmp_path, np.ones((3, 4)), [1.0, 2.0], Grid(0, 1, 4), stem="x")
    with pytest.raises(io.ManifestError):
        io.read_manifest(tmp_path / "x_manifest.txt")
    io.write_frame_stack(tmp_path, -np.ones((2, 4)), [1.0, 2.0], Grid(0, 1, 4), stem="neg")
    stack = io.read_manifest(tmp_path / "neg_manifest.txt")
    with pytest.raises(ValueError):
        stack(0, 2)


def test_analytic_outputs(tmp_path):
    out = tmp_path / "a"
    assert _run("analytic", "--preset", "fig2", "--out", str(out)) == 0
    _check_files(out)
    _, data = io.read_curves_csv(out / "analytic.csv")
    assert data[:, 1].max() == pytest.approx(1.0, abs=1e-9)
    assert data[:, 2].max() == pytest.approx(1.0, abs=1e-9)
    rep = _report(out)
    assert float(rep["gi.rayleigh_distance_m"]) == pytest.approx(0.532e-3, abs=Grid.centered(2e-3, 512).step)
    assert (out / "analytic_no_cross.csv").exists()


def test_analytic_fig3_ordering(tmp_path):
    out = tmp_path / "a3"
    assert _run("analytic", "--preset", "fig3", "--out", str(out)) == 0
    rep = _report(out)
    assert float(rep["scgi_no_cross.dip_ratio"]) < float(rep["scgi.dip_ratio"])


def test_resolve_coordinates(tmp_path):
    obj, ref = tmp_path / "o", tmp_path / "r"
    lay = ["--preset", "fig2", "--set", "s_r_m=10", "--set", "resolve_method=defocus",
           "--set", "quadrature_nodes=512"]
    assert _run("resolve", "--out", str(obj), *lay) == 0
    assert _run("resolve", "--out", str(ref), "--set", "coordinates=reference", *lay) == 0
    d_obj = float(_report(obj)["defocus.rayleigh_distance_m"])
    d_ref = float(_report(ref)["defocus.rayleigh_distance_m"])
    assert d_ref == pytest.approx(2.0 * d_obj, rel=1e-12)


def test_block_drops_partial_block(tmp_path):
    cfg = parse_config("", preset="fig2", overrides={
        "frames": "1100", "block_size": "500", "beta_count": "32", "source_count": "64",
        "out_dir": str(tmp_path)})
    rep = run_simulation(cfg)
    assert rep.frames == 1000
    assert any("dropped 100" in w for w in rep.warnings)


def test_shard_bounds():
    assert shard_bounds(10, 3) == [(0, 3), (3, 6), (6, 10)]
    b = shard_bounds(5000, 8, align=1000)
    assert b[0][0] == 0 and b[-1][1] == 5000
    assert all(lo % 1000 == 0 for lo, _ in b)
    assert shard_bounds(0, 4) == []
