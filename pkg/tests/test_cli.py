import subprocess
import sys

import numpy as np
import pytest

from pitchtrace.cli import build_parser, main
from pitchtrace.formats import list_segment_files, read_calibration, read_segment, read_segment_dir, write_segment_dir
from pitchtrace.synth import generate_corpus

SUBCOMMANDS = ["gen-synth", "split", "calibrate", "project", "train-imputer", "impute", "train-bc", "rollout", "evaluate", "report"]


@pytest.fixture
def gt_dir(tmp_path):
    d = tmp_path / "gt"
    write_segment_dir(d, generate_corpus(2, 2, seed=3))
    return d


def test_evaluate_example(tmp_path, gt_dir):
    out = tmp_path / "report"
    code = main(["evaluate", "--pred", str(gt_dir), "--gt", str(gt_dir), "--grids", "15x10", "--horizons", "3,5,10", "--out", str(out)])
    assert code == 0
    assert (out / "model.csv").exists() and (out / "model.md").exists()
    assert "100.00" in (out / "model.md").read_text()
    assert len((out / "model.csv").read_text().strip().splitlines()) == 1 + 4 * 3


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["evaluate", "--bogus"])
    assert exc.value.code == 1
    assert "usage:" in capsys.readouterr().err


def test_missing_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_malformed_gt_file(tmp_path, gt_dir, capsys):
    victim = list_segment_files(gt_dir)[1]
    lines = victim.read_text().splitlines()
    k = next(i for i, l in enumerate(lines) if l and l[0].isdigit()) + 3
    lines[k] = lines[k].replace(",", ",x", 1)
    victim.write_text("\n".join(lines) + "\n")
    code = main(["evaluate", "--pred", str(gt_dir), "--gt", str(gt_dir), "--out", str(tmp_path / "r")])
    err = capsys.readouterr().err
    assert code == 2
    assert f"{victim}:{k + 1}" in err


def test_missing_directory_is_data_error(tmp_path, capsys):
    code = main(["evaluate", "--pred", str(tmp_path / "nope"), "--gt", str(tmp_path / "nope")])
    assert code == 2 and "error" in capsys.readouterr().err


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_on_every_subcommand(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main([cmd, "--help"])
    assert exc.value.code == 0
    assert f"usage: pitchtrace {cmd}" in capsys.readouterr().out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pitchtrace", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "gen-synth" in res.stdout


def test_seed_flag_wherever_randomness_exists():
    parser = build_parser()
    actions = {a.dest: a for a in parser._subparsers._group_actions}["command"].choices
    for cmd in ("gen-synth", "split", "train-imputer", "train-bc", "rollout"):
        assert any("--seed" in a.option_strings for a in actions[cmd]._actions)


def to_pixels(metric):
    return np.asarray(metric) * 10.0 + (100.0, 50.0)


def test_calibrate_and_project(tmp_path):
    corr = tmp_path / "corr.csv"
    keypoints = [(0, 0), (105, 0), (105, 68), (0, 68), (52.5, 34), (16.5, 13.84)]
    rows = ["frame,u,v,X,Y"]
    for f in (0, 4):
        rows += [f"{f},{u},{v},{x},{y}" for (x, y), (u, v) in zip(keypoints, to_pixels(keypoints))]
    corr.write_text("\n".join(rows) + "\n")
    calib = tmp_path / "calib.csv"
    assert main(["calibrate", "--correspondences", str(corr), "--out", str(calib)]) == 0
    assert sorted(read_calibration(calib)) == [0, 4]

    u, v = to_pixels((52.5, 34.0))
    det = tmp_path / "det.csv"
    det.write_text(
        "frame,agent,x_min,y_min,x_max,y_max\n"
        + "".join(f"{f},5,{u - 10},{v - 40},{u + 10},{v}\n" for f in range(6))
        + f"2,-1,{u},{v - 40},{u + 20},{v}\n"
    )
    seg_path = tmp_path / "seg.txt"
    assert main(["project", "--detections", str(det), "--calibration", str(calib), "--out", str(seg_path), "--segment-id", "p1"]) == 0
    seg = read_segment(seg_path)
    assert seg.n_frames == 6 and seg.segment_id == "p1"
    assert seg.observed[:, 5].all() and seg.observed.sum() == 6
    assert np.allclose(seg.positions[:, 5], 0.0, atol=1e-6)


def test_impute_fills_short_gaps(tmp_path):
    seg = generate_corpus(1, 1, duration_s=4.0, seed=0)[0]
    obs = np.ones(seg.observed.shape, bool)
    obs[10:13, 7] = False
    holed = seg.replace(observed=obs)
    src = tmp_path / "holed"
    write_segment_dir(src, [holed])
    out = tmp_path / "filled"
    assert main(["impute", "--segments", str(src), "--out", str(out)]) == 0
    (done,) = read_segment_dir(out)
    assert done.observed.all()
    assert np.abs(done.positions[10:13, 7] - seg.positions[10:13, 7]).max() < 0.01


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PITCHTRACE_OUTPUT_DIR", str(tmp_path / "envout"))
    assert main(["gen-synth", "--matches", "1", "--segments-per-match", "2", "--duration", "3"]) == 0
    assert len(read_segment_dir(tmp_path / "envout")) == 2


def test_rollout_and_report(tmp_path, gt_dir, capsys):
    pred = tmp_path / "pred"
    assert main(["rollout", "--segments", str(gt_dir), "--policy", "zero", "--horizon", "10", "--out", str(pred)]) == 0
    preds = read_segment_dir(pred)
    assert len(preds) == 4 and all(p.n_frames == 250 for p in preds)
    assert all(np.array_equal(p.positions[-1], p.positions[0]) for p in preds)
    rep = tmp_path / "rep"
    assert main(["evaluate", "--pred", str(pred), "--gt", str(gt_dir), "--method", "zero", "--out", str(rep),
                 "--grids", "10x6;15x10;adaptive:2,0.05,0.5"]) == 0
    assert main(["report", str(rep / "zero.csv")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# Imitation fidelity") and "adaptive" in out


def test_bc_policy_requires_checkpoint(tmp_path, gt_dir):
    assert main(["rollout", "--segments", str(gt_dir), "--policy", "bc", "--out", str(tmp_path / "p")]) == 2
