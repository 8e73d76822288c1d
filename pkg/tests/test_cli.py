import csv
import io

import numpy as np
import pytest

from gewdiff.cli import main
from gewdiff.core import load_cube, load_segmentation, save_cube
from gewdiff.sampler import LinearDenoiser


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    rc = main(
        [
            "gen-synthetic", "--seed", "1", "--height", "64", "--width", "64",
            "--out", str(d / "hr.cube"), "--labels-out", str(d / "labels.seg"),
            "--lr-out", str(d / "lr.cube"),
        ]
    )
    assert rc == 0
    return d


def _csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_gen_synthetic_outputs(workdir):
    assert load_cube(workdir / "hr.cube").shape == (242, 64, 64)
    assert load_cube(workdir / "lr.cube").shape == (242, 16, 16)
    assert load_segmentation(workdir / "labels.seg").shape == (64, 64)


def test_encode_decode(workdir):
    d = workdir
    assert main(["encode", "--input", str(d / "hr.cube"), "--pca-k", "121", "--out", str(d / "codec.bin")]) == 0
    assert main(["decode", "--codec", str(d / "codec.bin"), "--out", str(d / "dec.cube")]) == 0
    hr = load_cube(d / "hr.cube").data
    assert np.max(np.abs(load_cube(d / "dec.cube").data - hr)) < 1e-6


def test_rwa_lossless_cli(workdir):
    d = workdir
    assert main(["rwa-encode", "--input", str(d / "hr.cube"), "--levels", "2", "--lossless", "--out", str(d / "rwa.bin")]) == 0
    assert main(["rwa-decode", "--input", str(d / "rwa.bin"), "--out", str(d / "rwa.cube")]) == 0
    assert np.array_equal(load_cube(d / "rwa.cube").data, load_cube(d / "hr.cube").data)


def test_roundtrip_eval_and_sweep(workdir):
    d = workdir
    assert main(["roundtrip-eval", "--input", str(d / "hr.cube"), "--out", str(d / "rt.csv")]) == 0
    row = _csv(d / "rt.csv")[0]
    assert row["pca_k"] == "20" and float(row["psnr"]) > 40
    assert main(["sweep", "--input", str(d / "hr.cube"), "--levels", "1,2", "--ks", "6,3", "--out", str(d / "sw.csv")]) == 0
    assert len(_csv(d / "sw.csv")) == 4


def test_mask_and_edge(workdir):
    d = workdir
    assert main(["mask", "--input", str(d / "hr.cube"), "--segments", str(d / "labels.seg"), "--out", str(d / "m.cube")]) == 0
    mask = load_cube(d / "m.cube").data[0]
    labels = load_segmentation(d / "labels.seg")
    for lab in np.unique(labels):
        assert np.ptp(mask[labels == lab]) == 0
    assert main(["edge", "--input", str(d / "hr.cube"), "--out", str(d / "e.seg")]) == 0
    assert set(np.unique(load_segmentation(d / "e.seg"))) <= {0, 1}


def test_schedule_csv(tmp_path, capsys):
    assert main(["schedule", "--rho", "1", "--steps", "4"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [float(r["sigma"]) for r in rows][0] == 80.0
    assert list(rows[0]) == ["n", "sigma", "t", "dt", "gamma"]


def test_condition_then_sample(workdir):
    d = workdir
    assert main(["condition", "--input", str(d / "lr.cube"), "--out", str(d / "cond")]) == 0
    assert load_cube(d / "cond" / "latent.cube").shape == (20, 64, 64)
    args = ["sample", "--conditions", str(d / "cond"), "--steps", "6", "--seed", "3"]
    assert main(args + ["--out", str(d / "z1.cube")]) == 0
    assert main(args + ["--out", str(d / "z2.cube")]) == 0
    assert (d / "z1.cube").read_bytes() == (d / "z2.cube").read_bytes()


def test_sr_twice_bit_identical(workdir):
    d = workdir
    args = ["sr", "--input", str(d / "lr.cube"), "--steps", "8", "--seed", "7"]
    assert main(args + ["--out", str(d / "sr1.cube"), "--conditions-out", str(d / "srcond")]) == 0
    assert main(args + ["--out", str(d / "sr2.cube")]) == 0
    assert (d / "sr1.cube").read_bytes() == (d / "sr2.cube").read_bytes()
    assert load_cube(d / "sr1.cube").shape == (242, 64, 64)
    assert (d / "srcond" / "codec.bin").exists()


def test_sr_with_config_file_and_linear_denoiser(workdir, nprng):
    d = workdir
    (d / "run.cfg").write_text("steps = 5\nseed = 1\ndenoiser = linear-file\n")
    LinearDenoiser(nprng.standard_normal((20, 41)) * 0.01, np.zeros(20)).save(d / "lin.bin")
    base = ["sr", "--input", str(d / "lr.cube"), "--config", str(d / "run.cfg"), "--out", str(d / "srl.cube")]
    assert main(base + ["--denoiser-file", str(d / "lin.bin")]) == 0
    assert main(base) == 2


def test_sr_hr_codec_source_needs_codec(workdir):
    d = workdir
    rc = main(["sr", "--input", str(d / "lr.cube"), "--codec-source", "hr", "--out", str(d / "x.cube")])
    assert rc == 2
    assert main(["encode", "--input", str(d / "hr.cube"), "--out", str(d / "hrcodec.bin")]) == 0
    rc = main(["sr", "--input", str(d / "lr.cube"), "--codec-source", "hr", "--codec", str(d / "hrcodec.bin"), "--steps", "4", "--out", str(d / "x.cube")])
    assert rc == 0


def test_metrics_and_loss(workdir, capsys):
    d = workdir
    assert main(["metrics", "--pred", str(d / "hr.cube"), "--target", str(d / "hr.cube"), "--out", str(d / "met.csv")]) == 0
    assert "FID" in capsys.readouterr().err
    row = _csv(d / "met.csv")[0]
    assert row["psnr"] == "inf" and float(row["rmse"]) == 0.0
    assert main(["loss", "--pred", str(d / "hr.cube"), "--target", str(d / "hr.cube"), "--out", str(d / "loss.csv")]) == 0
    row = _csv(d / "loss.csv")[0]
    assert float(row["total"]) == 0.0 and float(row["lambda"]) == 8.0


def test_exit_codes(tmp_path, workdir):
    assert main(["metrics", "--pred", str(tmp_path / "missing.cube"), "--target", str(tmp_path / "missing.cube")]) == 3
    (tmp_path / "bad.cube").write_bytes(b'{"height": 1}\n')
    assert main(["encode", "--input", str(tmp_path / "bad.cube"), "--out", str(tmp_path / "c.bin")]) == 2
    assert main(["schedule", "--sigma-max", "0.01"]) == 2
    assert main(["loss", "--pred", str(workdir / "hr.cube"), "--target", str(workdir / "hr.cube"), "--weights", "1,2"]) == 2


def test_exit_code_numeric(tmp_path, workdir):
    # a denoiser file whose weights blow up the state produces non-finite values
    LinearDenoiser(np.full((20, 41), 1e300), np.zeros(20)).save(tmp_path / "huge.bin")
    rc = main(["sr", "--input", str(workdir / "lr.cube"), "--denoiser", "linear-file", "--denoiser-file", str(tmp_path / "huge.bin"), "--steps", "4", "--out", str(tmp_path / "x.cube")])
    assert rc == 4


def test_pred_target_mismatch_is_validation(tmp_path):
    save_cube(np.zeros((2, 12, 12)) + 0.1, tmp_path / "a.cube")
    save_cube(np.zeros((3, 12, 12)) + 0.1, tmp_path / "b.cube")
    assert main(["metrics", "--pred", str(tmp_path / "a.cube"), "--target", str(tmp_path / "b.cube")]) == 2
