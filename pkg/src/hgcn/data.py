"""Clip records: synthetic generation, the AVF1 container, manifests, splits."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import FormatError
from .graph import HeteroGraph, SubgraphSpec, assemble_graph, default_audio_spec, default_video_spec

CONTAINER_MAGIC = b"AVF1"


@dataclass
class ClipRecord:
    audio: np.ndarray  # Q x D_a
    video: np.ndarray  # P x D_v
    label: np.ndarray  # C
    id: str

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClipRecord):
            return NotImplemented
        return (self.id == other.id
                and np.array_equal(self.audio, other.audio)
                and np.array_equal(self.video, other.video)
                and np.array_equal(self.label, other.label))

    def to_graph(self, audio_spec: SubgraphSpec | None = None,
                 video_spec: SubgraphSpec | None = None) -> HeteroGraph:
        audio_spec = audio_spec or default_audio_spec(self.audio.shape[0])
        video_spec = video_spec or default_video_spec(self.video.shape[0])
        return assemble_graph(self.audio, self.video, audio_spec, video_spec, self.label, self.id)


@dataclass(frozen=True)
class SynthConfig:
    n_clips: int = 2000
    n_audio: int = 30
    n_video: int = 10
    d_audio: int = 16
    d_video: int = 16
    n_motifs: int = 2
    noise_sigma: float = 0.3
    seed: int = 0
    task: Literal["cooccurrence", "xor"] = "cooccurrence"

    def __post_init__(self):
        if self.n_motifs < 2:
            raise ValueError("n_motifs must be >= 2")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.task not in ("cooccurrence", "xor"):
            raise ValueError(f"unknown task {self.task!r}")
        if min(self.n_clips, self.n_audio, self.n_video, self.d_audio, self.d_video) < 1:
            raise ValueError("clip count and dimensions must be positive")


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def motif_centroids(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Seeded unit-norm centroids per modality (shared when widths agree)."""
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    audio = _unit_rows(rng, cfg.n_motifs, cfg.d_audio)
    video = audio if cfg.d_video == cfg.d_audio else _unit_rows(rng, cfg.n_motifs, cfg.d_video)
    return audio, video


def _f32(x: np.ndarray) -> np.ndarray:
    # keep in-memory values exactly representable on disk
    return np.asarray(x, dtype=np.float32).astype(np.float64)


def generate_synthetic(cfg: SynthConfig) -> list[ClipRecord]:
    """Two-modality clips whose label depends jointly on both modalities.

    ``cooccurrence``: one audio row and one video row, at random positions,
    hold motif centroids; the label says whether the two motifs agree.
    ``xor``: binary motif identities written into every row, label is their
    exclusive or.  Labels are one-hot over two classes, ``[negative, positive]``.
    """
    cen_a, cen_v = motif_centroids(cfg)
    rng = np.random.default_rng(cfg.seed)
    records = []
    width = len(str(cfg.n_clips - 1))
    for n in range(cfg.n_clips):
        audio = rng.normal(0.0, cfg.noise_sigma, size=(cfg.n_audio, cfg.d_audio))
        video = rng.normal(0.0, cfg.noise_sigma, size=(cfg.n_video, cfg.d_video))
        if cfg.task == "cooccurrence":
            c_a, c_v = rng.integers(cfg.n_motifs, size=2)
            t_a = rng.integers(cfg.n_audio)
            t_v = rng.integers(cfg.n_video)
            audio[t_a] = cen_a[c_a]
            video[t_v] = cen_v[c_v]
            positive = c_a == c_v
        else:
            c_a, c_v = rng.integers(2, size=2)
            audio += cen_a[c_a]
            video += cen_v[c_v]
            positive = bool(c_a ^ c_v)
        label = np.array([0.0, 1.0]) if positive else np.array([1.0, 0.0])
        records.append(ClipRecord(_f32(audio), _f32(video), label, f"clip{n:0{width}d}"))
    return records


def dataset_stats(records: Sequence[ClipRecord]) -> dict:
    labels = np.stack([r.label for r in records])
    return {
        "n_clips": len(records),
        "Q": int(records[0].audio.shape[0]),
        "P": int(records[0].video.shape[0]),
        "D_a": int(records[0].audio.shape[1]),
        "D_v": int(records[0].video.shape[1]),
        "C": int(labels.shape[1]),
        "positive_rate": [float(x) for x in labels.mean(axis=0)],
    }


# ------------------------------------------------------------------ AVF1


def write_container(records: Sequence[ClipRecord], path: str | Path) -> None:
    """Write records as little-endian AVF1 with f32 payloads."""
    if not records:
        raise ValueError("cannot write an empty container")
    q, d_a = records[0].audio.shape
    p, d_v = records[0].video.shape
    c = len(records[0].label)
    out = [CONTAINER_MAGIC, struct.pack("<6I", len(records), q, p, d_a, d_v, c)]
    for idx, r in enumerate(records):
        if r.audio.shape != (q, d_a) or r.video.shape != (p, d_v) or len(r.label) != c:
            raise ValueError(f"clip {idx} ({r.id}) has dimensions differing from clip 0")
        raw_id = r.id.encode("utf-8")
        out.append(struct.pack("<I", len(raw_id)))
        out.append(raw_id)
        for arr in (r.audio, r.video, r.label):
            out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(out))


def read_container(path: str | Path) -> list[ClipRecord]:
    buf = Path(path).read_bytes()
    if len(buf) < 4 or buf[:4] != CONTAINER_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {CONTAINER_MAGIC!r}", 0)
    if len(buf) < 28:
        raise FormatError("truncated header", len(buf))
    n, q, p, d_a, d_v, c = struct.unpack_from("<6I", buf, 4)
    pos = 28
    records = []

    def take(nbytes: int, idx: int, what: str) -> bytes:
        nonlocal pos
        if pos + nbytes > len(buf):
            raise FormatError(f"truncated {what} in clip {idx}", pos)
        chunk = buf[pos:pos + nbytes]
        pos += nbytes
        return chunk

    def floats(count: int, shape, idx: int, what: str) -> np.ndarray:
        raw = take(4 * count, idx, what)
        return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)

    for idx in range(n):
        (id_len,) = struct.unpack("<I", take(4, idx, "id length"))
        try:
            clip_id = take(id_len, idx, "id").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"invalid UTF-8 id in clip {idx}", pos - id_len) from None
        audio = floats(q * d_a, (q, d_a), idx, "audio payload")
        video = floats(p * d_v, (p, d_v), idx, "video payload")
        label = floats(c, (c,), idx, "label")
        records.append(ClipRecord(audio, video, label, clip_id))
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after {n} clips", pos)
    return records


# ------------------------------------------------------------------ manifests and splits


def read_manifest(path: str | Path) -> dict[str, list[ClipRecord]]:
    """Load a JSON manifest ``{"containers": [{"path": ..., "split": ...}]}``.

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    spec = json.loads(path.read_text())
    out: dict[str, list[ClipRecord]] = {"train": [], "val": [], "test": []}
    for entry in spec.get("containers", []):
        split_name = entry.get("split", "train")
        if split_name not in out:
            raise ValueError(f"unknown split {split_name!r} in {path}")
        target = Path(entry["path"])
        if not target.is_absolute():
            target = path.parent / target
        out[split_name].extend(read_container(target))
    return out


def write_manifest(path: str | Path, entries: Sequence[tuple[str, str]]) -> None:
    doc = {"containers": [{"path": p, "split": s} for p, s in entries]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def split(records: Sequence, fractions: Sequence[float] = (0.8, 0.1, 0.1),
          seed: int = 0) -> tuple[list, list, list]:
    """Seeded shuffle, then contiguous train/val/test slices."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise ValueError(f"fractions must be three non-negative numbers summing to 1: {fractions}")
    order = np.random.default_rng(seed).permutation(len(records))
    n = len(records)
    n_train = int(round(fractions[0] * n))
    n_val = min(int(round(fractions[1] * n)), n - n_train)
    items = [records[i] for i in order]
    return items[:n_train], items[n_train:n_train + n_val], items[n_train + n_val:]


def unimodal_probe(train: Sequence[ClipRecord], test: Sequence[ClipRecord],
                   modality: Literal["audio", "video"] = "audio") -> float:
    """Test accuracy of logistic regression on mean-pooled single-modality features."""
    from sklearn.linear_model import LogisticRegression

    def feats(recs):
        return np.stack([getattr(r, modality).mean(axis=0) for r in recs])

    y_train = np.array([int(np.argmax(r.label)) for r in train])
    y_test = np.array([int(np.argmax(r.label)) for r in test])
    clf = LogisticRegression(max_iter=1000).fit(feats(train), y_train)
    return float((clf.predict(feats(test)) == y_test).mean())
