"""Command-line entry point.

Subcommands: synth, resample, fuse, eval, ensemble, topo {train,eval}.
Global flags (before or after the subcommand): --config, --seed, --out, --verbose.
Exit codes: 0 success, 2 usage, 3 schema, 4 I/O, 5 numeric-degenerate.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from io import StringIO
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import io as vio
from .config import RunConfig, load_config
from .elements import canonicalize
from .ensemble import ensemble_frames, ensemble_instances
from .errors import InvalidArgumentError, SchemaError, StorageError, VmkitError
from .evalm import evaluate
from .htf import ConvGruParams, Frame, FusionMode, HtfParams, StackParams, run_sequence
from .matchloss import rasterize
from .svt import lidar_to_depthmap
from .synth import gen_lidar, gen_scene, gen_sequence, gen_topology_dataset, local_map
from .topo import (
    MapFrame,
    TopoHeadParams,
    frame_to_sample,
    pair_accuracy,
    predict_topology,
    sample_to_frame,
    train_topo,
)

log = logging.getLogger("vmkit")

GRID_CHANNELS = 5


def _say(msg: str) -> None:
    print(msg, flush=True)


# -- synth --------------------------------------------------------------------


def cmd_synth(cfg: RunConfig, out: Path) -> dict:
    """Scene, sequence grids (rasterized local ground truth), local maps and topology data."""
    scene = gen_scene(cfg.seed, cfg.scene_config())
    seq_cfg = cfg.sequence
    seq = gen_sequence(scene, seq_cfg.n_frames, seq_cfg.spacing, seq_cfg.lane)
    spec = cfg.grid_spec()
    vio.write_scene(out / "scene.json", scene)

    frames_doc, local_maps = [], []
    for k, pose in enumerate(seq.poses):
        frame = local_map(scene, pose, seq.rig[0], spec.x_range, spec.y_range)
        local_maps.append(frame)
        grid_rel = f"frames/{k:04d}.vmkt"
        vio.write_tensor(out / grid_rel, rasterize(frame.instances, spec).astype(np.float32))
        entry = {"frame_id": k, "pose": vio.pose_to_dict(pose), "grid": grid_rel}
        if seq_cfg.lidar:
            cloud = gen_lidar(scene, pose, cfg.lidar_config(), k)
            entry["lidar"] = f"lidar/{k:04d}.vmkt"
            vio.write_tensor(out / entry["lidar"], cloud.astype(np.float32))
            entry["depth"] = []
            for c, cam in enumerate(seq.rig):
                rel = f"depth/{k:04d}_{c}.vmkt"
                vio.write_tensor(out / rel, lidar_to_depthmap(cam, cloud, seq_cfg.depth_stride).depth)
                entry["depth"].append(rel)
        frames_doc.append(entry)
        log.info("frame %d: %d instances", k, len(frame.instances))
    vio.write_json(out / "sequence.json", {
        "version": vio.FORMAT_VERSION,
        "kind": "sequence",
        "scene_seed": cfg.seed,
        "grid_spec": vio.grid_spec_to_dict(spec),
        "channels": GRID_CHANNELS,
        "cameras": [vio.camera_to_dict(c) for c in seq.rig],
        "frames": frames_doc,
    })
    vio.write_map_set(out / "gt.json", local_maps)

    t = cfg.topo
    data = gen_topology_dataset(t.train_scenes + t.test_scenes, cfg.seed, n_lanes=t.n_lanes, n_tes=t.n_tes)
    vio.write_map_set(out / "topo_train.json", [sample_to_frame(s) for s in data[: t.train_scenes]])
    vio.write_map_set(out / "topo_test.json", [sample_to_frame(s) for s in data[t.train_scenes :]])

    summary = {
        "instances": len(scene.instances),
        "lane_segments": len(scene.lane_indices()),
        "frames": len(seq.poses),
        "local_instances": sum(len(f.instances) for f in local_maps),
        "topo_scenes": len(data),
    }
    _say("synth: " + ", ".join(f"{k}={v}" for k, v in summary.items()))
    return summary


# -- resample -----------------------------------------------------------------


def cmd_resample(in_map: Path, out_map: Path) -> int:
    raw = vio.load_json(in_map)
    frames = vio.read_frames(in_map)
    out = []
    for f in frames:
        try:
            insts = [canonicalize(i) for i in f.instances]
        except VmkitError as exc:
            raise type(exc)(f"{in_map}: {exc}") from exc
        out.append(MapFrame(insts, f.traffic_elements, f.topology, f.image_size))
    if raw.get("kind") == "map":
        vio.write_map(out_map, out[0])
    else:
        vio.write_map_set(out_map, out)
    n = sum(len(f.instances) for f in out)
    _say(f"resample: {n} instances in {len(out)} frame(s) -> {out_map}")
    return n


# -- fuse ---------------------------------------------------------------------


def _check_sequence(seq_dir: Path, doc: vio.SequenceDoc) -> None:
    ids = [f.frame_id for f in doc.frames]
    if any(b <= a for a, b in zip(ids, ids[1:])):
        raise SchemaError(f"{seq_dir}: frame ids must increase")
    gaps = [f"{a + 1}-{b - 1}" if b - a > 2 else str(a + 1) for a, b in zip(ids, ids[1:]) if b - a > 1]
    missing = [f.grid for f in doc.frames if not (seq_dir / f.grid).is_file()]
    if missing:
        raise StorageError(f"{seq_dir}: missing frame grids: {', '.join(missing)}")
    if gaps:
        raise SchemaError(f"{seq_dir}: frame ids have gaps: {', '.join(gaps)}")


def cmd_fuse(cfg: RunConfig, seq_dir: Path, mode: FusionMode, out: Path) -> list[dict]:
    doc = vio.read_sequence(seq_dir / "sequence.json")
    _check_sequence(seq_dir, doc)
    spec = vio.grid_spec_from_doc(doc.grid_spec)
    frames = [Frame(f.frame_id, vio.pose_from_doc(f.pose), vio.load_grid(seq_dir / f.grid, spec, doc.channels))
              for f in doc.frames]
    fc = cfg.fusion
    rng = np.random.default_rng([cfg.seed, 1])
    stacking = cfg.stacking()
    params = HtfParams(
        gru=ConvGruParams.random(doc.channels, rng, fc.gru_kernel, fc.gru_scale),
        gru2=ConvGruParams.random(doc.channels, rng, fc.gru_kernel, fc.gru_scale),
        stack=getattr(StackParams, fc.stack)(doc.channels, stacking.n),
        stacking=stacking,
        buffer_capacity=fc.buffer_capacity,
        seed=cfg.seed,
    )
    result = run_sequence(mode, frames, params)
    out_frames = []
    for f, src, grid in zip(frames, doc.frames, result.outputs):
        rel = f"fused/{f.frame_id:04d}.vmkt"
        vio.write_tensor(out / rel, np.asarray(grid.data, dtype=np.float32))
        out_frames.append({"frame_id": f.frame_id, "pose": src.pose.model_dump(), "grid": rel})
    fused = doc.model_dump(mode="json", exclude_none=True)
    fused["frames"] = out_frames
    vio.write_json(out / "sequence.json", fused)
    selections = [{"frame_id": r["frame_id"], "selected": [int(i) for i in r["selected"]],
                   "distances": [float(d) for d in r["distances"]]} for r in result.selections]
    vio.write_json(out / "selection_log.json", {"version": vio.FORMAT_VERSION, "kind": "selection_log",
                                                "mode": FusionMode(mode).value, "frames": selections})
    _say(f"fuse: {len(frames)} frame(s), mode {FusionMode(mode).value} -> {out}")
    return selections


# -- eval ---------------------------------------------------------------------


def _jsonable(v):
    return None if v is None else float(v)


def report_to_dict(rep) -> dict:
    return {
        "version": vio.FORMAT_VERSION,
        "kind": "eval_report",
        **{k: _jsonable(v) for k, v in rep.components().items()},
        "uniscore": _jsonable(rep.uniscore),
        "per_class_ap": {c: {f"{t:g}": float(ap) for t, ap in row.items()} for c, row in rep.per_class_ap.items()},
        "te_ap": {str(k): _jsonable(v) for k, v in rep.te_ap.items()},
    }


def cmd_eval(cfg: RunConfig, pred_file: Path, gt_file: Path, out: Path):
    preds, gts = vio.read_frames(pred_file), vio.read_frames(gt_file)
    if len(preds) != len(gts):
        raise SchemaError(f"{pred_file} has {len(preds)} frame(s) but {gt_file} has {len(gts)}")
    rep = evaluate(preds, gts, cfg.eval_config())
    doc = report_to_dict(rep)
    vio.write_json(out / "report.json", doc)
    lines = [f"{k:8s} {'n/a' if v is None else f'{v:.4f}'}" for k, v in rep.components().items()]
    lines.append(f"{'uniscore':8s} {'n/a' if rep.uniscore is None else f'{rep.uniscore:.4f}'}")
    for c, row in rep.per_class_ap.items():
        lines.append(f"AP {c}: " + ", ".join(f"{t:g}m={ap:.4f}" for t, ap in row.items()))
    vio.atomic_write_text(out / "report.txt", "\n".join(lines) + "\n")
    buf = StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["curve", "rank", "recall", "precision"])
    for key, (recall, precision) in rep.pr_curves.items():
        for i, (r, p) in enumerate(zip(recall, precision)):
            w.writerow([key, i, repr(float(r)), repr(float(p))])
    vio.atomic_write_text(out / "pr_curves.csv", buf.getvalue())
    _say("\n".join(lines))
    return rep


# -- ensemble -----------------------------------------------------------------


def cmd_ensemble(cfg: RunConfig, pred_files: Sequence[Path], out: Path, topo_params: Optional[Path] = None):
    if not pred_files:
        raise InvalidArgumentError("ensemble needs at least one prediction file")
    models = [vio.read_frames(p) for p in pred_files]
    n = {len(m) for m in models}
    if len(n) != 1:
        raise SchemaError("prediction files have different frame counts: "
                          + ", ".join(f"{p}={len(m)}" for p, m in zip(pred_files, models)))
    params = vio.load_topo_params(topo_params) if topo_params else None
    e = cfg.ensemble
    accepted = [0] * len(models)
    merged_frames = []
    for k in range(n.pop()):
        ranked = [m[k] for m in models]
        merged = ensemble_frames(ranked, e.tau_sim, e.score_penalty, params)
        counts = [len(ensemble_instances([f.instances for f in ranked[: i + 1]], e.tau_sim, e.score_penalty))
                  for i in range(len(ranked))]
        for i, c in enumerate(counts):
            accepted[i] += c - (counts[i - 1] if i else 0)
        merged_frames.append(merged)
    vio.write_map_set(out / "ensemble.json", merged_frames)
    vio.write_json(out / "ensemble_log.json", {
        "version": vio.FORMAT_VERSION, "kind": "ensemble_log",
        "models": [str(p) for p in pred_files], "accepted": accepted,
    })
    for p, a in zip(pred_files, accepted):
        _say(f"ensemble: {p}: {a} instance(s) accepted")
    return merged_frames, accepted


# -- topology -----------------------------------------------------------------


def _samples(path: Path):
    frames = vio.read_frames(path)
    for k, f in enumerate(frames):
        if f.topology is None:
            raise SchemaError(f"{path}: frame {k} has no ground-truth topology")
        if not f.lanes():
            raise SchemaError(f"{path}: frame {k} has no lane segments")
    return [frame_to_sample(f) for f in frames]


def topo_metrics(cfg: RunConfig, samples, params: TopoHeadParams) -> dict:
    acc = pair_accuracy(samples, params, cfg.eval.topology_threshold)
    preds = [sample_to_frame(s, predict_topology(s.lanes, s.tes, params, s.image_size, cfg.eval.topology_threshold))
             for s in samples]
    rep = evaluate(preds, [sample_to_frame(s) for s in samples], cfg.eval_config())
    return {"pair_accuracy": acc, "top_ll": _jsonable(rep.top_ll), "top_lt": _jsonable(rep.top_lt)}


def cmd_topo_train(cfg: RunConfig, data: Path, out: Path) -> dict:
    samples = _samples(data)
    result = train_topo(samples, cfg.topo_train_config())
    vio.save_topo_params(out / "topo_params.vmkt", result.params, {"seed": cfg.seed})
    acc = pair_accuracy(samples, result.params, cfg.eval.topology_threshold)
    doc = {"version": vio.FORMAT_VERSION, "kind": "topo_train_log", "epochs_run": result.epochs_run,
           "loss_curve": [float(v) for v in result.loss_curve], "train_pair_accuracy": acc}
    vio.write_json(out / "topo_train_log.json", doc)
    _say(f"topo train: {len(samples)} scenes, {result.epochs_run} epochs, "
         f"final loss {result.loss_curve[-1]:.4f}, train pair accuracy {acc['all']:.4f}")
    return doc


def cmd_topo_eval(cfg: RunConfig, params_file: Path, data: Path, out: Path) -> dict:
    samples = _samples(data)
    params = vio.load_topo_params(params_file)
    m = topo_metrics(cfg, samples, params)
    doc = {"version": vio.FORMAT_VERSION, "kind": "topo_eval", "scenes": len(samples), **m}
    vio.write_json(out / "topo_eval.json", doc)
    fmt = lambda v: "n/a" if v is None else f"{v:.4f}"  # noqa: E731
    _say(f"topo eval: pair accuracy {fmt(m['pair_accuracy']['all'])} (ll {fmt(m['pair_accuracy']['ll'])}, "
         f"lt {fmt(m['pair_accuracy']['lt'])}), TOP-ll {fmt(m['top_ll'])}, TOP-lt {fmt(m['top_lt'])}")
    return doc


# -- argument parsing ---------------------------------------------------------


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", type=Path, default=d(None), help="JSON run configuration")
    p.add_argument("--seed", type=_seed, default=d(None), help="overrides the config seed")
    p.add_argument("--out", type=Path, default=d(Path("out")), help="output directory (default: out)")
    p.add_argument("--verbose", "-v", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vmkit", description="Vectorized HD-map toolkit.")
    parser.add_argument("--version", action="version", version=f"vmkit {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    add("synth", "generate a scene, sequence grids, local maps and topology data")
    p = add("resample", "canonicalize every instance of a map file")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path, nargs="?", help="default: <out>/<input name>")
    p = add("fuse", "temporal fusion over a sequence directory")
    p.add_argument("sequence_dir", type=Path)
    p.add_argument("--mode", choices=[m.value for m in FusionMode], default=None,
                   help="default: fusion.mode from the config")
    p = add("eval", "score predictions against ground truth")
    p.add_argument("pred", type=Path)
    p.add_argument("gt", type=Path)
    p = add("ensemble", "merge prediction files, best-ranked first")
    p.add_argument("preds", type=Path, nargs="+")
    p.add_argument("--topo-params", type=Path, default=None, help="recompute topology with these parameters")
    p = add("topo", "train or evaluate the topology heads")
    tsub = p.add_subparsers(dest="action", required=True)
    t = tsub.add_parser("train")
    _global_flags(t, suppress=True)
    t.add_argument("data", type=Path)
    t = tsub.add_parser("eval")
    _global_flags(t, suppress=True)
    t.add_argument("params", type=Path)
    t.add_argument("data", type=Path)
    return parser


def run(args: argparse.Namespace) -> None:
    cfg = load_config(args.config, args.seed)
    out: Path = args.out
    if args.command == "synth":
        cmd_synth(cfg, out)
    elif args.command == "resample":
        cmd_resample(args.input, args.output or out / args.input.name)
    elif args.command == "fuse":
        cmd_fuse(cfg, args.sequence_dir, FusionMode(args.mode or cfg.fusion.mode), out)
    elif args.command == "eval":
        cmd_eval(cfg, args.pred, args.gt, out)
    elif args.command == "ensemble":
        cmd_ensemble(cfg, args.preds, out, args.topo_params)
    elif args.action == "train":
        cmd_topo_train(cfg, args.data, out)
    else:
        cmd_topo_eval(cfg, args.params, args.data, out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except VmkitError as exc:
        print(f"vmkit: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"vmkit: error: {exc}", file=sys.stderr)
        return StorageError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
