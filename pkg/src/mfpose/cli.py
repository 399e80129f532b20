"""Command-line entry point: ``mfpose {synth,train,eval,gradcheck,inspect}``.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration error.
Outputs go under ``--out``, else the config's ``output``, else ``$MFPOSE_OUT``,
else ``./runs``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from mfpose import __version__
from mfpose.autograd import serialize
from mfpose.config import RunConfig, load_config
from mfpose.errors import ConfigError, DimensionError, UsageError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
ENV_OUT = "MFPOSE_OUT"

log = logging.getLogger("mfpose")


def output_root(args, cfg: RunConfig) -> Path:
    return Path(args.out or cfg.output or os.environ.get(ENV_OUT) or "runs")


def _ensure_empty(path: Path, force: bool) -> None:
    if path.exists() and any(path.iterdir()) and not force:
        raise UsageError(f"{path} is not empty; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)


def _config(args) -> RunConfig:
    cfg = load_config(args.config, args.set)
    if args.set:
        print("overrides (last wins): " + ", ".join(args.set))
    return cfg


def _videos(cfg: RunConfig, data_dir, eval_split: bool):
    from mfpose.data.dataset import load_videos
    from mfpose.data.synthetic import generate_videos
    if data_dir:
        if not Path(data_dir).is_dir():
            raise FileNotFoundError(f"dataset directory not found: {data_dir}")
        return load_videos(data_dir)
    if eval_split:
        return generate_videos(cfg.data.eval_spec(), cfg.data.eval_seed)
    return generate_videos(cfg.data.spec, cfg.data.seed)


def _samples(cfg: RunConfig, videos) -> list:
    from mfpose.data.dataset import Sample, heatmap_target, windows_from_videos
    m = cfg.train.model
    out_size = (m.backbone.img_h, m.backbone.img_w)
    windows = windows_from_videos(videos, m.temporal_radius, cfg.train.delta, out_size)
    return [Sample(w, heatmap_target(w, m.heatmap_size, cfg.train.sigma)) for w in windows]


def cmd_synth(args) -> int:
    from mfpose.data.dataset import export_videos
    from mfpose.data.synthetic import generate_videos
    cfg = _config(args)
    out = output_root(args, cfg) / "synth" if args.out is None else Path(args.out)
    _ensure_empty(out, args.force)
    spec = cfg.data.eval_spec() if args.split == "eval" else cfg.data.spec
    seed = cfg.data.eval_seed if args.split == "eval" else cfg.data.seed
    videos = generate_videos(spec, seed)
    export_videos(videos, out, spec, seed)
    frames = sum(len(v) for v in videos)
    print(f"wrote {out}: videos {len(videos)}, frames {frames}, joints {spec.num_joints}")
    return EXIT_OK


def _plot_losses(records, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot([r.step for r in records], [r.loss for r in records], lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("heatmap MSE")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def cmd_train(args) -> int:
    from dataclasses import replace
    from mfpose.train.engine import train, with_ablation
    cfg = _config(args)
    tcfg = cfg.train
    if args.epochs is not None:
        tcfg = replace(tcfg, epochs=args.epochs)
    if args.ablate:
        tcfg = with_ablation(tcfg, args.ablate.split(","))
    cfg = replace(cfg, train=tcfg)
    out = output_root(args, cfg) / "train" if args.out is None else Path(args.out)
    if args.resume is None:
        _ensure_empty(out, args.force)
    samples = _samples(cfg, _videos(cfg, args.data, eval_split=False))
    (out / "config.yaml").write_text(cfg.dumps())
    m = tcfg.model
    print(f"training {len(samples)} windows; msff={m.use_msff} afw={m.use_afw} "
          f"cross_attention={m.use_cross_attention}; config hash {m.hash()}")
    result = train(tcfg, samples, out, resume=args.resume, progress=print)
    if result.records:
        _plot_losses(result.records, out / "loss.png")
    print(f"checkpoints in {out} (last: {result.checkpoints[-1].name if result.checkpoints else 'none'})")
    return EXIT_OK


def _plot_eval(preds, windows, report, out: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from mfpose.metrics import torso_length
    thresholds = np.linspace(0.02, 0.5, 25)
    gts = [w.pose for w in windows]
    dists = []
    for p, g in zip(preds.poses, gts):
        torso = torso_length(g)
        if torso > 0:
            d = np.linalg.norm(p.xy - g.xy, axis=1) / torso
            dists.append(np.where(g.visible, d, np.nan))
    dists = np.array(dists)
    curve = [np.nanmean(dists <= t) if dists.size else np.nan for t in thresholds]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(thresholds, curve, marker="o", ms=3)
    ax.axvline(report.threshold, color="gray", ls="--", lw=0.8)
    ax.set_xlabel("threshold (fraction of torso)")
    ax.set_ylabel("PCK")
    fig.tight_layout()
    fig.savefig(out / "pck_sweep.png", dpi=100)
    plt.close(fig)

    conf = np.array([p.confidence for p in preds.poses])
    vis = np.array([g.visible for g in gts])
    ok = dists <= report.threshold
    fig, ax = plt.subplots(figsize=(5, 4))
    for j, name in enumerate(report.joints):
        m = vis[:, j]
        if not m.any():
            continue
        order = np.argsort(-conf[m, j], kind="stable")
        tp = np.cumsum(ok[m, j][order])
        ax.plot(tp / m.sum(), tp / np.arange(1, m.sum() + 1), lw=0.8, label=name)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.legend(fontsize=5, ncol=3)
    fig.tight_layout()
    fig.savefig(out / "pr_curves.png", dpi=100)
    plt.close(fig)


def cmd_eval(args) -> int:
    from mfpose.train.engine import evaluate
    cfg = _config(args)
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    tcfg = cfg.train
    if args.ablate:
        from mfpose.train.engine import with_ablation
        tcfg = with_ablation(tcfg, args.ablate.split(","))
    samples = _samples(cfg, _videos(cfg, args.data, eval_split=True))
    out = output_root(args, cfg) / "eval" if args.out is None else Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report, preds = evaluate(ckpt, samples, None if args.no_check else tcfg,
                             keep_attention=args.dump_attn)
    if cfg.metrics.threshold != report.threshold:
        from mfpose.metrics import report as make_report
        report = make_report(preds.poses, [s.window.pose for s in samples], cfg.metrics.threshold)
    table = report.table("pck") + "\n\n" + report.table("ap")
    print(table)
    (out / "table.txt").write_text(table + "\n")
    report.save(out / "report.json")
    if args.dump_weights:
        if preds.frame_weights is None:
            print("model has no frame weighting; nothing to dump")
        else:
            np.save(out / "frame_weights.npy", preds.frame_weights)
    if args.dump_attn:
        if preds.attention is None:
            print("model has no cross-attention; nothing to dump")
        else:
            np.save(out / "attention.npy", preds.attention)
    if not args.no_plots:
        _plot_eval(preds, [s.window for s in samples], report, out)
    print(f"{report.samples} samples; report in {out / 'report.json'}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from mfpose.verify import gradient_suite
    cfg = _config(args)
    corrupt = None
    if args.corrupt:
        target = args.corrupt
        corrupt = lambda group: group == target or group.startswith(target + "/")
    result = gradient_suite(cfg.train.model, args.seed, max_coords=args.coords, corrupt=corrupt)
    for line in result.lines(args.tol):
        print(line)
    failed = result.failures(args.tol)
    print(f"{len(result.groups)} groups, {result.coords} coordinates, {result.seconds:.1f}s")
    if failed:
        print("FAILED: " + ", ".join(failed))
        return EXIT_FAIL
    print("all groups pass")
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise FileNotFoundError(f"no such file or directory: {path}")
    if path.is_dir():
        manifest = path / "manifest.json"
        if manifest.is_file():
            print(manifest.read_text())
        else:
            for p in sorted(path.iterdir()):
                print(p.name)
        return EXIT_OK
    if path.suffix in (".json", ".yaml", ".yml", ".txt", ".jsonl"):
        print(path.read_text())
        return EXIT_OK
    arrays, meta = serialize.load(path)
    print(f"format v{serialize.VERSION}; {len(arrays)} arrays")
    for key in ("kind", "epoch", "adam_t", "config_hash", "train_hash"):
        if key in meta:
            print(f"{key}: {meta[key]}")
    from mfpose.model.network import parameter_group
    counts: dict = {}
    for name, arr in arrays.items():
        group = "optimizer" if name.startswith("adam.") else parameter_group(name)
        counts[group] = counts.get(group, 0) + arr.size
    for group, n in counts.items():
        print(f"  {group:<16} {n:>10,d} values")
    if args.verbose and "config" in meta:
        print(json.dumps(meta["config"], indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfpose", description="Multi-frame pose estimation on synthetic video.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help="output directory"):
        p.add_argument("-c", "--config", help="YAML or JSON run configuration")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. train.lr=5e-6 (repeatable)")
        p.add_argument("-o", "--out", help=out_help)

    p = sub.add_parser("synth", help="generate a synthetic dataset and write it to disk")
    common(p)
    p.add_argument("--split", choices=("train", "eval"), default="train")
    p.add_argument("--force", action="store_true", help="write into a non-empty directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model, checkpointing every epoch")
    common(p)
    p.add_argument("--data", help="dataset directory written by synth (default: generate from config)")
    p.add_argument("--epochs", type=int, help="override train.epochs")
    p.add_argument("--ablate", default="", help="comma list of components to disable: afw,msff,crossattn")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the held-out split")
    common(p)
    p.add_argument("checkpoint")
    p.add_argument("--data", help="dataset directory written by synth (default: generate the eval split)")
    p.add_argument("--ablate", default="", help="ablations the checkpoint was trained with")
    p.add_argument("--no-check", action="store_true", help="use the checkpoint's own config, skip the hash check")
    p.add_argument("--dump-weights", action="store_true", help="write per-frame weights to frame_weights.npy")
    p.add_argument("--dump-attn", action="store_true", help="write cross-attention maps to attention.npy")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every parameter group")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coords", type=int, default=4, help="coordinates sampled per tensor")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--corrupt", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect", help="describe a checkpoint, report or dataset directory")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, DimensionError, FileNotFoundError, serialize.FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
