"""Command-line entry points.

Exit codes: 0 on success, 2 for input problems (bad paths, malformed
files or arguments), 3 for pipeline failures on accepted inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np
from PIL import Image

from . import pipeline
from .config import PipelineConfig
from .errors import InputError, PipelineError
from .features import DetectorParams
from .harness import SynthSpec, generate_sequence, synthetic_vessel_mask
from .ingest import (
    load_annotations,
    load_sequence,
    save_annotations,
    save_frame_dir,
    save_raw_planar,
)
from .matching import fine_match, initial_match
from .metrics import (
    ScoreSet,
    bpcer_at_apcer,
    compute_auc,
    compute_eer,
    compute_hter,
    spectral_liveness_score,
)
from .representation import (
    VesselWeightMap,
    default_vessel_weights,
    read_str_tensor,
    vessel_weights_from_mask,
    write_str_tensor,
)
from .signals import partition_rois
from .stitching import AlignmentPlan, align_sequence_dp, align_sequence_landmarks

logger = logging.getLogger(__name__)

HEATMAP_STD_MAX = 5.0  # fixed color scale for deviation heatmaps

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PIPELINE = 3


def _detector(cfg: PipelineConfig) -> DetectorParams:
    return DetectorParams(
        octaves=cfg.octaves,
        scales_per_octave=cfg.scales_per_octave,
        dog_threshold=cfg.dog_threshold,
        edge_ratio=cfg.edge_ratio,
    )


def _heatmap_png(std_map: np.ndarray, path) -> None:
    """Deviation map to an RGB PNG on the fixed 0..HEATMAP_STD_MAX scale."""
    t = np.clip(std_map / HEATMAP_STD_MAX, 0.0, 1.0)
    # dark blue -> cyan -> yellow -> red ramp
    anchors = np.array(
        [[10, 10, 80], [40, 180, 200], [245, 220, 50], [210, 30, 25]], dtype=float
    )
    pos = np.array([0.0, 1 / 3, 2 / 3, 1.0])
    rgb = np.empty(t.shape + (3,), dtype=np.uint8)
    for c in range(3):
        rgb[:, :, c] = np.clip(
            np.interp(t, pos, anchors[:, c]), 0, 255
        ).astype(np.uint8)
    Image.fromarray(rgb).save(path)


def cmd_synth(args, cfg: PipelineConfig) -> int:
    try:
        doc = json.loads(Path(args.spec).read_text())
    except FileNotFoundError:
        raise InputError(f"no such spec file: {args.spec}")
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.spec}: invalid JSON ({exc})")
    if args.seed is not None:
        doc["texture_seed"] = args.seed
    spec = SynthSpec.from_dict(doc)
    seq, ann, gt = generate_sequence(spec)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "raw":
        save_raw_planar(seq, out / "video.vmrv")
    else:
        save_frame_dir(seq, out / "frames")
    save_annotations(ann, out / "annotations.json")
    truth = {
        "transforms": [t.coeffs() for t in gt.transforms],
        "landmark_tracks": gt.landmark_tracks.tolist(),
        "vessel_layout": gt.vessel_layout.tolist(),
        "pulse_freq": spec.pulse_freq,
        "pulse_amplitude": spec.pulse_amplitude,
    }
    (out / "ground_truth.json").write_text(json.dumps(truth))
    print(f"wrote {len(seq)} frames to {out}")
    return EXIT_OK


def _load_video_features(args, cfg: PipelineConfig):
    seq = load_sequence(args.video, getattr(args, "fps", None))
    ann = None
    if getattr(args, "annotations", None):
        ann = load_annotations(args.annotations, seq)
    feats = pipeline.extract_frame_features(
        seq, ann, _detector(cfg), equalize=cfg.equalize
    )
    return seq, feats


def _match_report(feats, plan) -> None:
    """Diagnostic: how score ordering differs from fused-distance ordering
    on the hop from the template to its first aligned frame."""
    tmpl = plan.template_index
    other = next((i for i in sorted(plan.frames) if i != tmpl), None)
    if other is None:
        return
    first = initial_match(
        (feats[tmpl].positions, feats[tmpl].descriptors),
        (feats[other].positions, feats[other].descriptors),
    )
    if len(first) < 2:
        print("match report: too few initial matches")
        return
    refined = fine_match(first)
    by_score = [m.ref_index for m in refined]
    by_dist = [
        m.ref_index
        for m in sorted(first, key=lambda m: m.d_fused)[: len(refined)]
    ]
    common = len(set(by_score) & set(by_dist))
    print(
        f"match report (frames {tmpl}->{other}): {len(first)} initial, "
        f"{len(refined)} kept; score-vs-distance selection overlap "
        f"{common}/{len(refined)}"
    )


def cmd_align(args, cfg: PipelineConfig) -> int:
    seq, feats = _load_video_features(args, cfg)
    if args.landmark_only:
        plan = align_sequence_landmarks(feats, 0)
    else:
        plan = align_sequence_dp(
            feats,
            template_mode=cfg.template_mode,
            ratio_threshold=cfg.ratio_threshold,
            spatial_weight=cfg.spatial_weight,
            acceptance_rate=cfg.acceptance_rate,
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    plan.save(out / "plan.json")

    stack, valid = pipeline.render_aligned(seq, plan)
    if args.frames:
        fdir = out / "aligned"
        fdir.mkdir(exist_ok=True)
        for k in range(stack.shape[0]):
            arr = np.clip(np.floor(stack[k] + 0.5), 0, 255).astype(np.uint8)
            Image.fromarray(arr).save(fdir / f"{k:06d}.png")
            Image.fromarray((valid[k] * 255).astype(np.uint8)).save(
                fdir / f"mask_{k:06d}.png"
            )
        (fdir / "meta.json").write_text(
            json.dumps({"fps": seq.fps, "face_box": list(seq.face_box)})
        )
    _heatmap_png(pipeline.alignment_heatmap(stack, valid), out / "heatmap.png")
    if args.match_report and not args.landmark_only:
        _match_report(feats, plan)
    print(
        f"aligned {len(seq)} frames, template {plan.template_index}, "
        f"{plan.candidate_evaluations} candidate evaluations"
    )
    return EXIT_OK


def cmd_extract(args, cfg: PipelineConfig) -> int:
    seq = load_sequence(args.video, getattr(args, "fps", None))
    plan = AlignmentPlan.load(args.plan)
    weights = None
    if args.weights:
        weights = VesselWeightMap.from_json(Path(args.weights).read_text())
    stack, valid = pipeline.render_aligned(seq, plan)
    tensors = pipeline.stack_tensors(
        stack,
        valid,
        seq.face_box,
        seq.fps,
        weights,
        label=args.label,
        normalize_first=cfg.normalize_before_filter,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t in tensors:
        write_str_tensor(t, out / f"segment_{t.segment_start:06d}.vmr1")
    if args.traces_csv:
        raw = pipeline.extract_channel_traces(stack, valid, seq.face_box)
        _write_traces_csv(raw, seq.fps, args.traces_csv)
    print(f"wrote {len(tensors)} tensors to {out}")
    return EXIT_OK


def _write_traces_csv(raw: np.ndarray, fps: float, path) -> None:
    from .signals import CHANNEL_NAMES

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["roi", "channel", "t", "value"])
        for c, name in enumerate(CHANNEL_NAMES):
            for r in range(raw.shape[1]):
                for k in range(raw.shape[2]):
                    w.writerow([r, name, f"{k / fps:.6f}", f"{raw[c, r, k]:.6f}"])


def cmd_score(args, cfg: PipelineConfig) -> int:
    tdir = Path(args.tensors)
    files = sorted(tdir.glob("*.vmr1"))
    if not files:
        raise InputError(f"no .vmr1 tensors in {tdir}")
    video_id = args.video_id or tdir.name
    rows = []
    for f in files:
        t = read_str_tensor(f)
        rows.append(
            (
                video_id,
                t.segment_start,
                spectral_liveness_score(t),
                "" if t.label is None else t.label,
            )
        )
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "segment", "score", "label"])
        for r in rows:
            w.writerow(r)
    print(f"scored {len(rows)} segments -> {args.out}")
    return EXIT_OK


def _read_scores_csv(path):
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise InputError(f"no such scores file: {path}")
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [
            "video_id",
            "segment",
            "score",
            "label",
        ]:
            raise InputError(f"{path}: expected header video_id,segment,score,label")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise InputError(f"{path}:{lineno}: expected 4 columns")
            vid, seg, score, label = row
            if label.strip() == "":
                raise InputError(f"{path}:{lineno}: missing label")
            try:
                rows.append((vid, int(seg), float(score), int(label)))
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}")
    if not rows:
        raise InputError(f"{path}: no score rows")
    return rows


def cmd_eval(args, cfg: PipelineConfig) -> int:
    rows = _read_scores_csv(args.scores)
    scores = ScoreSet([r[2] for r in rows], [r[3] for r in rows])
    eer, thr = compute_eer(scores)
    report = {
        "pooled": {
            "n_segments": len(rows),
            "eer": eer,
            "eer_threshold": thr,
            "auc": compute_auc(scores),
        }
    }
    if args.folds:
        by_video = defaultdict(list)
        for vid, _seg, score, label in rows:
            by_video[vid].append((score, label))
        if len(by_video) < 2:
            raise InputError("fold evaluation needs at least 2 video_ids")
        hters, bp10, bp01 = [], [], []
        for vid in sorted(by_video):
            test_rows = by_video[vid]
            dev_rows = [r for v in sorted(by_video) if v != vid for r in by_video[v]]
            dev = ScoreSet([r[0] for r in dev_rows], [r[1] for r in dev_rows])
            test = ScoreSet([r[0] for r in test_rows], [r[1] for r in test_rows])
            hters.append(compute_hter(dev, test))
            if test.genuine.size:
                bp10.append(bpcer_at_apcer(dev, test, 0.10))
                bp01.append(bpcer_at_apcer(dev, test, 0.01))

        def stat(vals):
            if not vals:
                return None
            return {
                "mean": float(np.mean(vals)),
                "std": float(np.std(vals, ddof=1)) if len(vals) > 1 else None,
                "n_folds": len(vals),
            }

        report["folds"] = {
            "hter": stat(hters),
            "bpcer_at_apcer_0.10": stat(bp10),
            "bpcer_at_apcer_0.01": stat(bp01),
        }
    text = json.dumps(report, indent=1)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return EXIT_OK


def cmd_weights(args, cfg: PipelineConfig) -> int:
    if args.default:
        wmap = default_vessel_weights()
    elif args.synthetic_mask:
        mask, lm = synthetic_vessel_mask()
        grid = partition_rois((0, 0, mask.shape[1], mask.shape[0]))
        wmap = vessel_weights_from_mask(mask, lm, lm, grid)
    else:
        if not (args.mask and args.mask_landmarks and args.face_landmarks):
            raise InputError(
                "need --mask, --mask-landmarks and --face-landmarks (or --default)"
            )
        with Image.open(args.mask) as im:
            mask = np.asarray(im.convert("L"))
        mask_lm = _read_points(args.mask_landmarks)
        face_lm = _read_points(args.face_landmarks)
        box = args.face_box or [0, 0, mask.shape[1], mask.shape[0]]
        grid = partition_rois(box)
        wmap = vessel_weights_from_mask(mask, mask_lm, face_lm, grid)
    Path(args.out).write_text(wmap.to_json())
    print(f"wrote {len(wmap.weights)} weights -> {args.out}")
    return EXIT_OK


def _read_points(path):
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"no such landmark file: {path}")
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})")
    pts = doc.get("points") if isinstance(doc, dict) else doc
    arr = np.asarray(pts, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError(f"{path}: expected a list of [x, y] points")
    return arr


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pulsestitch",
        description="Motion-robust pulse-signal extraction from face video",
    )
    p.add_argument("--config", help="pipeline config JSON file")
    p.add_argument("--config-dump", action="store_true", help="print the effective config and exit")
    p.add_argument("--seed", type=int, help="seed override for generation commands")
    p.add_argument("--threads", type=int, help="cap numeric library threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    sp = sub.add_parser("synth", help="generate a synthetic sequence")
    sp.add_argument("--spec", required=True, help="SynthSpec JSON")
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", choices=("raw", "frames"), default="raw")

    ap = sub.add_parser("align", help="stitch a sequence to its template")
    ap.add_argument("--video", required=True, help="frame dir or raw-planar file")
    ap.add_argument("--annotations")
    ap.add_argument("--fps", type=float)
    ap.add_argument("--out", required=True)
    ap.add_argument("--landmark-only", action="store_true")
    ap.add_argument("--frames", action="store_true", help="write aligned frames")
    ap.add_argument("--match-report", action="store_true")

    ep = sub.add_parser("extract", help="aligned video to tensors")
    ep.add_argument("--video", required=True)
    ep.add_argument("--plan", required=True)
    ep.add_argument("--fps", type=float)
    ep.add_argument("--out", required=True)
    ep.add_argument("--label", type=int, choices=(0, 1))
    ep.add_argument("--weights", help="vessel weight JSON")
    ep.add_argument("--traces-csv", help="also dump raw traces as CSV")

    cp = sub.add_parser("score", help="spectral liveness scores for tensors")
    cp.add_argument("--tensors", required=True)
    cp.add_argument("--out", required=True)
    cp.add_argument("--video-id")

    vp = sub.add_parser("eval", help="metrics from a scores CSV")
    vp.add_argument("--scores", required=True)
    vp.add_argument("--out")
    vp.add_argument("--folds", action="store_true", help="leave-one-video-out folds")

    wp = sub.add_parser("weights", help="vessel weight maps")
    wp.add_argument("--mask", help="vessel mask PNG")
    wp.add_argument("--mask-landmarks")
    wp.add_argument("--face-landmarks")
    wp.add_argument("--face-box", type=int, nargs=4, metavar=("X", "Y", "W", "H"))
    wp.add_argument("--default", action="store_true", help="dump the bundled map")
    wp.add_argument(
        "--synthetic-mask", action="store_true", help="derive from the synthetic mask"
    )
    wp.add_argument("--out", required=True)
    return p


_COMMANDS = {
    "synth": cmd_synth,
    "align": cmd_align,
    "extract": cmd_extract,
    "score": cmd_score,
    "eval": cmd_eval,
    "weights": cmd_weights,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads is not None and args.threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    try:
        cfg = (
            PipelineConfig.from_json(Path(args.config).read_text())
            if args.config
            else PipelineConfig()
        )
    except FileNotFoundError:
        print(f"error: no such config file: {args.config}", file=sys.stderr)
        return EXIT_INPUT
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    if args.config_dump:
        print(cfg.to_json())
        return EXIT_OK
    if not args.command:
        build_parser().print_help()
        return EXIT_INPUT

    try:
        return _COMMANDS[args.command](args, cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
