"""Command-line entry point: ``hgcn <command> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 data or format error,
4 numeric failure (non-finite loss, failed gradient check).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, build_config
from .data import dataset_stats, generate_synthetic, read_container, write_container
from .errors import FormatError, ShapeError
from .experiment import adopt_dims, load_records, run, to_graphs
from .graph import write_graph
from .gradcheck import run_gradcheck
from .model import (ABLATIONS, HgcnModel, check_compatible, init_xavier, load_checkpoint,
                    mask_to_edges, save_checkpoint)
from .plotting import sweep_curve, training_curves
from .training import NumericError, evaluate, predict

log = logging.getLogger("hgcn")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

SWEEP_FIELDS = ["hyper", "value", "seed", "map", "roc_auc"]
SWEEPABLE = ("span_audio", "dilation_audio", "span_video", "dilation_video")


class CommandFailed(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------------ flag groups


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [graph] [model] [train] [data] [synth] sections")
    p.add_argument("--out-dir", help="artifact directory (default ./runs/<timestamp>)")
    p.add_argument("--seed", type=int, help="seed (default: $HGCN_SEED, then 0)")


def _add_graph(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("graph construction")
    for name in SWEEPABLE:
        g.add_argument("--" + name.replace("_", "-"), type=int, dest=name)


def _add_model(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--hidden", type=int)
    g.add_argument("--layers", type=int, dest="n_modality_layers",
                   help="modality-specific layers before the crossmodal layer")
    g.add_argument("--k", type=int)
    g.add_argument("--distance", choices=["cosine", "l2"])
    g.add_argument("--scope", choices=["per-audio-node", "global-top-k"])
    g.add_argument("--heads", type=int, dest="gat_heads")
    g.add_argument("--ablate", choices=ABLATIONS, dest="ablation")


def _add_train(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float, dest="lr_base")
    g.add_argument("--warmup", type=int, dest="warmup_iters")
    g.add_argument("--batch-size", type=int)
    g.add_argument("--loss", choices=["multilabel-bce", "multiclass-ce"], dest="loss_mode")
    g.add_argument("--split", help="train,val,test fractions for a single container")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hgcn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="write a synthetic two-modality container")
    _add_common(p)
    p.add_argument("--clips", type=int, dest="n_clips")
    p.add_argument("--q", type=int, dest="n_audio", help="audio nodes per clip")
    p.add_argument("--p", type=int, dest="n_video", help="video nodes per clip")
    p.add_argument("--d-audio", type=int)
    p.add_argument("--d-video", type=int)
    p.add_argument("--motifs", type=int, dest="n_motifs")
    p.add_argument("--noise", type=float, dest="noise_sigma")
    p.add_argument("--task", choices=["cooccurrence", "xor"])
    p.add_argument("-o", "--output", help="container path (default <out-dir>/data.avf)")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("build-graph", help="write per-clip HGF1 graph files")
    _add_common(p)
    _add_graph(p)
    p.add_argument("--data", required=True)
    p.add_argument("--clip", action="append", help="clip id to export (repeatable; default all)")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("train", help="train a model and write checkpoint, metrics, summary")
    _add_common(p)
    _add_graph(p)
    _add_model(p)
    _add_train(p)
    p.add_argument("--data", required=True, help="AVF1 container or JSON manifest")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    _add_common(p)
    _add_graph(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--dump-edges", action="store_true",
                   help="write the learned audio-video edges of every clip")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of all parameter groups")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="train across span/dilation values and seeds")
    _add_common(p)
    _add_graph(p)
    _add_model(p)
    _add_train(p)
    p.add_argument("--data", required=True)
    p.add_argument("--hyper", action="append", choices=SWEEPABLE,
                   help="hyperparameter to sweep (repeatable; default span_audio)")
    p.add_argument("--values", default="1,2,3,4")
    p.add_argument("--seeds", default="1,2,3")
    p.set_defaults(func=cmd_sweep)
    return parser


# ------------------------------------------------------------------ config plumbing


def _env_seed() -> int | None:
    raw = os.environ.get("HGCN_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"HGCN_SEED must be an integer, got {raw!r}") from None


def _picked(args, names) -> dict:
    return {n: getattr(args, n, None) for n in names}


def resolve_config(args) -> RunConfig:
    """Defaults < $HGCN_SEED < config file < flags; validated in full."""
    seed = _env_seed()
    defaults = {}
    if seed is not None:
        defaults = {s: {"seed": seed} for s in ("model", "train", "synth")}
    split_raw = getattr(args, "split", None)
    overrides = {
        "graph": _picked(args, SWEEPABLE),
        "model": _picked(args, ("hidden", "n_modality_layers", "k", "distance", "scope",
                                "gat_heads", "ablation")),
        "train": _picked(args, ("epochs", "lr_base", "warmup_iters", "batch_size", "loss_mode")),
        "data": {"split": split_raw},
        "synth": _picked(args, ("n_clips", "n_audio", "n_video", "d_audio", "d_video",
                                "n_motifs", "noise_sigma", "task")),
    }
    if getattr(args, "seed", None) is not None:
        for section in ("model", "train", "synth"):
            overrides[section]["seed"] = args.seed
    return build_config(getattr(args, "config", None), overrides, defaults)


def _out_dir(args) -> Path:
    out = Path(args.out_dir) if getattr(args, "out_dir", None) else \
        Path("runs") / time.strftime("%Y%m%d-%H%M%S")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n")


def parameter_counts(model: HgcnModel) -> dict[str, int]:
    counts = {name: sum(t.data.size for _, t in members)
              for name, members in model.named_groups().items()}
    counts["total"] = model.parameter_count()
    return counts


def video_facing_parameters(model: HgcnModel) -> int:
    """Parameters that ever multiply or aggregate video-derived values."""
    total = 0
    for name, members in model.named_groups().items():
        for pname, t in members:
            if name in ("video_sage", "shared_sage", "cross_gat") or pname == "pooling.p_video":
                total += t.data.size
    if not model.config.uses_video:
        return total
    # the classifier rows reading the pooled video block
    return total + model.config.hidden * model.config.n_classes


def _log_parameters(model: HgcnModel) -> dict[str, int]:
    counts = parameter_counts(model)
    print("parameters " + " ".join(f"{k}={v}" for k, v in counts.items()))
    print(f"video-facing parameters: {video_facing_parameters(model)}")
    return counts


# ------------------------------------------------------------------ commands


def cmd_gen_synth(args) -> int:
    cfg = resolve_config(args)
    target = Path(args.output) if args.output else _out_dir(args) / "data.avf"
    records = generate_synthetic(cfg.synth)
    target.parent.mkdir(parents=True, exist_ok=True)
    write_container(records, target)
    stats = dataset_stats(records)
    stats["task"] = cfg.synth.task
    stats["path"] = str(target)
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def cmd_build_graph(args) -> int:
    cfg = resolve_config(args)
    records = read_container(args.data)
    cfg = adopt_dims(cfg, records)
    if args.clip:
        wanted = set(args.clip)
        records = [r for r in records if r.id in wanted]
        missing = wanted - {r.id for r in records}
        if missing:
            raise CommandFailed(EXIT_DATA, f"clip ids not in {args.data}: {sorted(missing)}")
    out = _out_dir(args) / "graphs"
    out.mkdir(parents=True, exist_ok=True)
    for graph in to_graphs(records, cfg):
        write_graph(graph, out / f"{graph.id}.hgf")
    print(f"wrote {len(records)} graphs to {out}")
    return EXIT_OK


def _write_history(path: Path, history: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "split", "loss", "map", "roc_auc",
                                                "accuracy"])
        writer.writeheader()
        for row in history:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v)
                             for k, v in row.items()})


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(args)
    splits = load_records(args.data, cfg)
    cfg = adopt_dims(cfg, splits["train"])
    # shape problems surface here, before any optimisation
    probe = init_xavier(cfg.model, cfg.model.seed)
    for name, recs in splits.items():
        for n, g in enumerate(to_graphs(recs, cfg)):
            try:
                check_compatible(probe, g)
            except ShapeError as exc:
                raise CommandFailed(EXIT_DATA, f"{name} sample {n}: {exc}") from None
    counts = _log_parameters(probe)
    started = time.perf_counter()
    result = run(cfg, splits)
    log.info("trained in %.1fs", time.perf_counter() - started)

    save_checkpoint(result.model, out / "model.hgm")
    _write_history(out / "metrics.csv", result.history)
    training_curves(result.history, out / "training_curves.png",
                    title=f"ablation={cfg.model.ablation} seed={cfg.model.seed}")
    final = {row["split"]: row for row in result.history if row["epoch"] == cfg.train.epochs - 1}
    summary = {
        "config": cfg.as_dict(),
        "data": str(args.data),
        "n_clips": {k: len(v) for k, v in splits.items()},
        "parameter_counts": counts,
        "video_facing_parameters": video_facing_parameters(probe),
        "final_epoch": final,
        "test": result.test.as_dict() | {"loss": result.test_loss} if result.test else None,
    }
    _write_json(out / "summary.json", summary)
    if result.test:
        print(f"test map={result.test.map:.4f} roc_auc={result.test.roc_auc:.4f} "
              f"accuracy={result.test.accuracy:.4f}")
    print(f"artifacts in {out}")
    return EXIT_OK


def _graph_config_for(args, checkpoint: Path) -> RunConfig:
    cfg = resolve_config(args)
    summary = checkpoint.parent / "summary.json"
    if summary.exists():
        try:
            stored = json.loads(summary.read_text())["config"]["graph"]
        except (KeyError, json.JSONDecodeError):
            stored = {}
        changes = {k: int(v) for k, v in stored.items() if not cfg.is_set("graph", k)}
        cfg = replace(cfg, graph=replace(cfg.graph, **changes))
    return cfg


def cmd_eval(args) -> int:
    checkpoint = Path(args.checkpoint)
    cfg = _graph_config_for(args, checkpoint)
    model = load_checkpoint(checkpoint)
    cfg = replace(cfg, model=model.config)
    path = Path(args.data)
    if path.suffix == ".json":
        parts = load_records(path, cfg)
        records = parts["test"] or parts["val"] or parts["train"]
    else:
        records = read_container(path)
    graphs = to_graphs(records, cfg)
    for n, g in enumerate(graphs):
        try:
            check_compatible(model, g)
        except ShapeError as exc:
            raise CommandFailed(EXIT_DATA, f"checkpoint/data mismatch at sample {n}: {exc}") \
                from None
    metrics, mean_loss = evaluate(model, graphs, cfg.train.loss_mode)
    out = _out_dir(args)
    doc = metrics.as_dict() | {"loss": mean_loss, "n_clips": len(graphs),
                               "checkpoint": str(checkpoint), "data": str(path)}
    _write_json(out / "metrics.json", doc)
    print(f"map={metrics.map:.4f} roc_auc={metrics.roc_auc:.4f} accuracy={metrics.accuracy:.4f}")
    for c, (ap, auc) in enumerate(zip(metrics.per_class_ap, metrics.per_class_auc)):
        print(f"  class {c}: ap={ap:.4f} auc={auc:.4f}")
    if args.dump_edges:
        _, _, masks = predict(model, graphs, cfg.train.loss_mode)
        with (out / "edges.jsonl").open("w") as fh:
            for n, g in enumerate(graphs):
                edges = mask_to_edges(None if masks is None else masks[n])
                fh.write(json.dumps({"id": g.id, "edges": [list(e) for e in edges]}) + "\n")
        print(f"edges written to {out / 'edges.jsonl'}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else (_env_seed() or 0)
    if not args.tol > 0:
        raise ConfigError(f"--tol must be positive, got {args.tol}")
    started = time.perf_counter()
    report = run_gradcheck(seed=seed, tol=args.tol)
    for line in report.lines():
        print(line)
    print(f"elapsed {time.perf_counter() - started:.1f}s")
    if not report.passed:
        name, err = report.worst
        raise CommandFailed(EXIT_NUMERIC,
                            f"gradcheck failed: worst group {name} rel_err={err:.3e} > {args.tol:g}")
    return EXIT_OK


def _int_list(raw: str, what: str) -> list[int]:
    try:
        return [int(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{what} must be comma-separated integers, got {raw!r}") from None


def _read_progress(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SWEEP_FIELDS:
            raise CommandFailed(EXIT_DATA, f"{path} does not have columns {SWEEP_FIELDS}")
        return list(reader)


def sweep_summary(rows: list[dict]) -> list[dict]:
    cells: dict[tuple, list[dict]] = {}
    for row in rows:
        cells.setdefault((row["hyper"], int(row["value"])), []).append(row)
    out = []
    for (hyper, value), members in sorted(cells.items()):
        maps = np.array([float(r["map"]) for r in members])
        aucs = np.array([float(r["roc_auc"]) for r in members])
        out.append({"hyper": hyper, "value": value, "n_seeds": len(members),
                    "map_mean": maps.mean(), "map_std": maps.std(),
                    "roc_auc_mean": aucs.mean(), "roc_auc_std": aucs.std()})
    return out


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    hypers = args.hyper or ["span_audio"]
    values = _int_list(args.values, "--values")
    seeds = _int_list(args.seeds, "--seeds")
    for hyper in hypers:
        for v in values:
            replace(cfg.graph, **{hyper: v}).specs(cfg.model.n_audio, cfg.model.n_video)
    out = _out_dir(args)
    splits = load_records(args.data, cfg)
    cfg = adopt_dims(cfg, splits["train"])
    progress = out / "sweep.csv"
    rows = _read_progress(progress)
    done = {(r["hyper"], int(r["value"]), int(r["seed"])) for r in rows}
    fresh = not progress.exists()
    with progress.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        if fresh:
            writer.writeheader()
        for hyper in hypers:
            for value in values:
                for seed in seeds:
                    if (hyper, value, seed) in done:
                        log.info("skip %s=%d seed=%d (done)", hyper, value, seed)
                        continue
                    cell = replace(cfg, graph=replace(cfg.graph, **{hyper: value}),
                                   model=replace(cfg.model, seed=seed),
                                   train=replace(cfg.train, seed=seed))
                    result = run(cell, splits)
                    if result.test is None:
                        raise CommandFailed(EXIT_DATA, "sweep needs a non-empty test split")
                    row = {"hyper": hyper, "value": value, "seed": seed,
                           "map": f"{result.test.map:.6f}",
                           "roc_auc": f"{result.test.roc_auc:.6f}"}
                    writer.writerow(row)
                    fh.flush()
                    rows.append(row)
                    log.info("%s=%d seed=%d map=%s", hyper, value, seed, row["map"])
    summary = sweep_summary(rows)
    with (out / "sweep_summary.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(summary[0]))
        writer.writeheader()
        for s in summary:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in s.items()})
    sweep_curve(rows, out / "sweep.png")
    for s in summary:
        print(f"{s['hyper']}={s['value']}: map {s['map_mean']:.4f} ± {s['map_std']:.4f} "
              f"(n={s['n_seeds']})")
    return EXIT_OK


# ------------------------------------------------------------------ entry point


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("hgcn").setLevel(level)
    try:
        return args.func(args)
    except CommandFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, ShapeError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
