"""Command-line entry point: ``pitchtrace <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from pitchtrace.errors import DataError, OutOfBounds
from pitchtrace.formats import (
    default_output_dir,
    read_calibration,
    read_correspondences,
    read_detections,
    read_segment_dir,
    write_calibration,
    write_segment,
    write_segment_dir,
)
from pitchtrace.geometry import N_AGENTS, Phase, PhaseLabel, Segment, validate_segment
from pitchtrace.metrics import DEFAULT_HORIZONS_S, GridConfig, evaluate_dataset, horizon_frames
from pitchtrace.projection import estimate_homography, fill_calibration_gaps, project_detection, reprojection_error
from pitchtrace.report import emit_report, read_report_csv, summary_markdown
from pitchtrace.split import SplitManifest, split_dataset
from pitchtrace.synth import Scenario, generate_corpus

log = logging.getLogger("pitchtrace")

POLICIES = ("bc", "zero", "constant-velocity", "replay", "random-walk")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _grids(text: str) -> list[GridConfig]:
    # adaptive rules contain commas, so grids are separated by ';' when one is present
    parts = text.split(";") if "adaptive:" in text else text.split(",")
    try:
        return [GridConfig.parse(p) for p in parts if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid grid list {text!r}: {exc}") from None


def _horizons(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid horizon list {text!r}") from None
    if not vals or min(vals) <= 0:
        raise argparse.ArgumentTypeError("horizons must be positive seconds")
    return vals


def _out(path) -> Path:
    return Path(path) if path is not None else default_output_dir()


def _load_segments(directory) -> list[Segment]:
    segments = read_segment_dir(directory)
    if not segments:
        raise DataError(f"{directory}: no segment files found")
    return segments


# --- subcommands ---------------------------------------------------------


def cmd_gen_synth(args) -> int:
    corpus = generate_corpus(
        args.matches,
        args.segments_per_match,
        duration_s=args.duration,
        noise_sigma=args.noise,
        seed=args.seed,
        scenarios=args.scenarios or tuple(Scenario),
        fps=args.fps,
    )
    out = _out(args.out)
    write_segment_dir(out, corpus)
    log.info("wrote %d segments to %s", len(corpus), out)
    return 0


def cmd_split(args) -> int:
    segments = _load_segments(args.segments)
    manifest = split_dataset(sorted({s.match_id for s in segments}), args.seed)
    out = _out(args.out)
    manifest.save(out / "split.json")
    for part in ("train", "val", "test"):
        write_segment_dir(out / part, manifest.select(segments, part))
    log.info("split sizes train/val/test (matches): %s", manifest.sizes())
    return 0


def cmd_calibrate(args) -> int:
    per_frame = read_correspondences(args.correspondences)
    calib = {}
    for frame, pairs in sorted(per_frame.items()):
        calib[frame] = estimate_homography(pairs)
        log.info("frame %d: %d points, reprojection RMS %.3g m", frame, len(pairs), reprojection_error(calib[frame], pairs))
    write_calibration(args.out, calib)
    return 0


def cmd_project(args) -> int:
    calib = read_calibration(args.calibration)
    detections = read_detections(args.detections)
    n = args.frames if args.frames is not None else 1 + max([d.frame_idx for d in detections] + list(calib) + [0])
    per_frame = fill_calibration_gaps(calib, n)
    positions = np.zeros((n, N_AGENTS, 2))
    observed = np.zeros((n, N_AGENTS), dtype=bool)
    skipped = 0
    for d in detections:
        if d.agent is None or not 0 <= d.frame_idx < n:
            skipped += 1
            continue
        hom = per_frame[d.frame_idx]
        if hom is None:
            skipped += 1
            continue
        try:
            positions[d.frame_idx, d.agent] = project_detection(hom, d)
        except OutOfBounds as exc:
            log.warning("frame %d agent %d: %s", d.frame_idx, d.agent, exc)
            skipped += 1
            continue
        observed[d.frame_idx, d.agent] = True
    if skipped:
        log.info("%d detections left unobserved (no identity, calibration or on-pitch position)", skipped)
    seg = Segment(args.segment_id, args.match_id, args.fps, PhaseLabel(Phase.TRANSITION), positions, observed=observed)
    write_segment(args.out, seg)
    return 0


def cmd_train_imputer(args) -> int:
    from pitchtrace.imputation import LatentConfig, TrainConfig, save_imputer, train_imputer

    segments = _load_segments(args.segments)
    cfg = LatentConfig(latent_dim=args.latent_dim, hidden_dim=args.hidden_dim)
    tc = TrainConfig(epochs=args.epochs, learning_rate=args.lr, seed=args.seed, optimizer=args.optimizer)
    model = train_imputer(segments, cfg, tc)
    save_imputer(args.out, model)
    log.info("imputer evaluation loss %.6g -> %.6g", model.history[0], min(model.history))
    return 0


def cmd_impute(args) -> int:
    from pitchtrace.imputation import impute_segment, load_imputer

    params = load_imputer(args.checkpoint) if args.checkpoint else None
    out = _out(args.out)
    for seg in _load_segments(args.segments):
        done, _ = impute_segment(params, seg)
        write_segment_dir(out, [done])
    return 0


def cmd_train_bc(args) -> int:
    from pitchtrace.rollout import BCConfig, RolloutConfig, bc_train, closed_loop_refine, save_bc

    train = _load_segments(args.segments)
    val = _load_segments(args.val) if args.val else None
    cfg = RolloutConfig(closed_loop_steps=args.closed_loop_steps)
    model = BCConfig(iterations=args.iterations, hidden_dim=args.hidden_dim, learning_rate=args.lr)
    params = bc_train(train, cfg, model, seed=args.seed)
    params = closed_loop_refine(params, train, cfg, model, seed=args.seed, validation=val)
    if params.refine_rejected:
        log.warning("closed-loop refinement increased held-out rollout error; kept teacher-forced weights")
    save_bc(args.out, params)
    return 0


def _policy_factory(args):
    from pitchtrace.rollout import BCPolicy, ConstantVelocityPolicy, RandomWalkPolicy, ReplayPolicy, ZeroPolicy, load_bc

    if args.policy == "bc":
        if not args.checkpoint:
            raise DataError("--checkpoint is required for the bc policy")
        policy = BCPolicy(load_bc(args.checkpoint))
    elif args.policy == "zero":
        policy = ZeroPolicy()
    elif args.policy == "constant-velocity":
        policy = ConstantVelocityPolicy()
    elif args.policy == "random-walk":
        policy = RandomWalkPolicy(sigma=args.sigma, seed=args.seed)
    else:
        return ReplayPolicy
    return lambda gt: policy


def cmd_rollout(args) -> int:
    from pitchtrace.rollout import predict_segment

    factory = _policy_factory(args)
    out = _out(args.out)
    for gt in sorted(_load_segments(args.segments), key=lambda s: s.segment_id):
        n = horizon_frames(args.horizon, gt.fps)
        if n < 2:
            raise DataError(f"horizon {args.horizon}s is shorter than two frames at {gt.fps} fps")
        write_segment_dir(out, [predict_segment(factory, gt, n)])
    return 0


def cmd_evaluate(args) -> int:
    gts = {s.segment_id: s for s in _load_segments(args.gt)}
    preds = {s.segment_id: s for s in _load_segments(args.pred)}
    missing = sorted(set(gts) - set(preds))
    if missing:
        raise DataError(f"{args.pred}: no prediction for segment(s) {', '.join(missing[:5])}")
    for s in list(gts.values()) + list(preds.values()):
        problems = validate_segment(s)
        if problems:
            raise DataError(f"segment {s.segment_id}: {problems[0]}")
    pairs = [(gts[k], preds[k]) for k in sorted(gts)]
    report = evaluate_dataset(pairs, args.grids, args.horizons, harmonic=args.harmonic, method=args.method)
    out = _out(args.out)
    for p in emit_report(report, out):
        log.info("wrote %s", p)
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.csv:
        rows.extend(read_report_csv(path))
    text = summary_markdown(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# --- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pitchtrace", description="Football trajectory reconstruction, imputation, rollout and evaluation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("gen-synth", help="generate a synthetic segment corpus")
    s.add_argument("--out", help="output directory (default: $PITCHTRACE_OUTPUT_DIR or pitchtrace-out)")
    s.add_argument("--matches", type=int, default=20)
    s.add_argument("--segments-per-match", type=int, default=5)
    s.add_argument("--duration", type=float, default=10.0, help="seconds per segment")
    s.add_argument("--noise", type=float, default=0.002, help="position jitter std, normalized units")
    s.add_argument("--fps", type=float, default=25.0)
    s.add_argument("--scenarios", nargs="+", choices=[sc.value for sc in Scenario])
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gen_synth)

    s = sub.add_parser("split", help="partition segments by match into train/val/test directories")
    s.add_argument("--segments", required=True)
    s.add_argument("--out")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("calibrate", help="estimate per-frame homographies from keypoint correspondences")
    s.add_argument("--correspondences", required=True, help="CSV rows frame,u,v,X,Y")
    s.add_argument("--out", required=True, help="calibration file to write")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("project", help="project detections through a calibration into a segment file")
    s.add_argument("--detections", required=True, help="CSV rows frame,agent,x_min,y_min,x_max,y_max")
    s.add_argument("--calibration", required=True)
    s.add_argument("--out", required=True, help="segment file to write")
    s.add_argument("--segment-id", default="projected")
    s.add_argument("--match-id", default="unknown")
    s.add_argument("--fps", type=float, default=25.0)
    s.add_argument("--frames", type=int, help="segment length (default: last frame seen + 1)")
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("train-imputer", help="train the masked latent imputer")
    s.add_argument("--segments", required=True)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--lr", type=float, default=1e-2)
    s.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    s.add_argument("--latent-dim", type=int, default=8)
    s.add_argument("--hidden-dim", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train_imputer)

    s = sub.add_parser("impute", help="fill unobserved positions (spline for short gaps, model otherwise)")
    s.add_argument("--segments", required=True)
    s.add_argument("--checkpoint", help="imputer checkpoint; without it only gaps of up to 4 frames are filled")
    s.add_argument("--out")
    s.set_defaults(func=cmd_impute)

    s = sub.add_parser("train-bc", help="train the behavior-cloning policy")
    s.add_argument("--segments", required=True)
    s.add_argument("--val", help="held-out segments for the closed-loop refinement check")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--iterations", type=int, default=1500)
    s.add_argument("--hidden-dim", type=int, default=128)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--closed-loop-steps", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train_bc)

    s = sub.add_parser("rollout", help="roll a policy out from each segment's first frame")
    s.add_argument("--segments", required=True, help="ground-truth segments supplying the first frame")
    s.add_argument("--policy", choices=POLICIES, default="bc")
    s.add_argument("--checkpoint", help="BC checkpoint (bc policy only)")
    s.add_argument("--horizon", type=float, default=10.0, help="seconds to cover, including the context frame")
    s.add_argument("--sigma", type=float, default=0.01, help="random-walk step std")
    s.add_argument("--out")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_rollout)

    s = sub.add_parser("evaluate", help="score predictions against ground truth and write a report")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--grids", type=_grids, default=[GridConfig.parse("15x10")], help="e.g. 10x6,15x10 or 'adaptive:0.02,0.05,0.2'")
    s.add_argument("--horizons", type=_horizons, default=DEFAULT_HORIZONS_S, help="seconds, e.g. 3,5,10")
    s.add_argument("--method", default="model", help="name used in report rows and file names")
    s.add_argument("--harmonic", action="store_true", help="combine S_t and S_v with a harmonic mean")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="render a Markdown summary from one or more per-segment CSVs")
    s.add_argument("csv", nargs="+")
    s.add_argument("--out", help="Markdown file (default: stdout)")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except DataError as exc:
        print(f"pitchtrace: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"pitchtrace: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
