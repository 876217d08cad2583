"""One training run end to end: records to graphs, fit, score on held-out clips."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

from .config import RunConfig
from .data import ClipRecord, read_container, read_manifest, split
from .graph import HeteroGraph
from .metrics import Metrics
from .model import HgcnModel, init_xavier
from .training import evaluate, train

log = logging.getLogger(__name__)

Splits = dict[str, list[ClipRecord]]


@dataclass
class RunResult:
    model: HgcnModel
    history: list[dict]
    test: Metrics | None
    test_loss: float


def load_records(path: str | Path, cfg: RunConfig) -> Splits:
    """Read a container (split by fractions) or a manifest (explicit splits)."""
    path = Path(path)
    if path.suffix == ".json":
        parts = read_manifest(path)
        if not parts["train"]:
            raise ValueError(f"manifest {path} lists no training container")
        return parts
    train_recs, val_recs, test_recs = split(read_container(path), cfg.data.split,
                                            cfg.data.split_seed)
    return {"train": train_recs, "val": val_recs, "test": test_recs}


def adopt_dims(cfg: RunConfig, records: Sequence[ClipRecord]) -> RunConfig:
    """Fill model dimensions from the data unless the config pins them."""
    first = records[0]
    found = {"n_audio": first.audio.shape[0], "n_video": first.video.shape[0],
             "d_audio": first.audio.shape[1], "d_video": first.video.shape[1],
             "n_classes": len(first.label)}
    changes = {k: int(v) for k, v in found.items() if not cfg.is_set("model", k)}
    return replace(cfg, model=replace(cfg.model, **changes))


def to_graphs(records: Sequence[ClipRecord], cfg: RunConfig) -> list[HeteroGraph]:
    audio_spec, video_spec = cfg.graph.specs(cfg.model.n_audio, cfg.model.n_video)
    return [r.to_graph(audio_spec, video_spec) for r in records]


def run(cfg: RunConfig, splits: Splits,
        on_epoch: Callable[[dict], None] | None = None) -> RunResult:
    """Train on ``train`` (monitoring ``val``) and score ``test``."""
    model = init_xavier(cfg.model, cfg.model.seed)
    train_graphs = to_graphs(splits["train"], cfg)
    val_graphs = to_graphs(splits.get("val", []), cfg) or None
    model, history = train(model, train_graphs, cfg.train, val=val_graphs, on_epoch=on_epoch)
    test_graphs = to_graphs(splits.get("test", []), cfg)
    if not test_graphs:
        return RunResult(model, history, None, float("nan"))
    metrics, test_loss = evaluate(model, test_graphs, cfg.train.loss_mode)
    log.info("test map=%.4f auc=%.4f acc=%.4f", metrics.map, metrics.roc_auc, metrics.accuracy)
    return RunResult(model, history, metrics, test_loss)
