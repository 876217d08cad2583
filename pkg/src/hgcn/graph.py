"""Intra-modal subgraph construction and heterogeneous graph assembly.

Span/dilation convention: ``dilation=1`` links consecutive segments.  A
drawing that labels consecutive links as "dilation 0" corresponds to
``dilation=1`` here (drawn value = ours - 1).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import FormatError, ShapeError

EdgeKind = Literal["audio-audio", "video-video", "audio-video"]
INTRA_KINDS = ("audio-audio", "video-video")

DEFAULT_AUDIO_NODES = 30
DEFAULT_VIDEO_NODES = 10


@dataclass(frozen=True)
class SubgraphSpec:
    """Construction parameters for one modality's temporal chain."""

    n_nodes: int
    span: int = 1
    dilation: int = 1

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError(f"n_nodes must be >= 1, got {self.n_nodes}")
        if self.span < 0:
            raise ValueError(f"span must be >= 0, got {self.span}")
        if self.dilation < 1:
            raise ValueError(f"dilation must be >= 1, got {self.dilation}")


def default_audio_spec(n_nodes: int = DEFAULT_AUDIO_NODES) -> SubgraphSpec:
    return SubgraphSpec(n_nodes, span=3, dilation=1)


def default_video_spec(n_nodes: int = DEFAULT_VIDEO_NODES) -> SubgraphSpec:
    return SubgraphSpec(n_nodes, span=1, dilation=1)


@dataclass(frozen=True)
class EdgeSet:
    """Directed (source, target) pairs of one edge type.

    For audio-video edges the source is the audio node and the target the
    video node.
    """

    kind: EdgeKind
    pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if len(set(self.pairs)) != len(self.pairs):
            raise ValueError(f"duplicate pairs in {self.kind} edge set")
        if self.kind in INTRA_KINDS and any(i == j for i, j in self.pairs):
            raise ValueError(f"self-loop in {self.kind} edge set")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def neighbors(self, node: int) -> list[int]:
        return sorted(j for i, j in self.pairs if i == node)


def build_intra_edges(spec: SubgraphSpec, kind: EdgeKind = "audio-audio") -> EdgeSet:
    """Link node ``i`` to ``i + m*dilation`` for ``m = 1..span``, both directions."""
    pairs = set()
    for i in range(spec.n_nodes):
        for m in range(1, spec.span + 1):
            j = i + m * spec.dilation
            if j >= spec.n_nodes:
                break
            pairs.add((i, j))
            pairs.add((j, i))
    return EdgeSet(kind, tuple(sorted(pairs)))


@dataclass
class HeteroGraph:
    """Two node sets (audio, video) and three typed edge sets."""

    audio_features: np.ndarray
    video_features: np.ndarray
    edges_aa: EdgeSet
    edges_vv: EdgeSet
    edges_av: EdgeSet = field(default_factory=lambda: EdgeSet("audio-video"))
    label: np.ndarray = field(default_factory=lambda: np.zeros(0))
    id: str = ""

    @property
    def n_audio(self) -> int:
        return self.audio_features.shape[0]

    @property
    def n_video(self) -> int:
        return self.video_features.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.label)

    def validate(self) -> None:
        q, p = self.n_audio, self.n_video
        for es, n_src, n_dst in ((self.edges_aa, q, q), (self.edges_vv, p, p),
                                 (self.edges_av, q, p)):
            for i, j in es:
                if not (0 <= i < n_src and 0 <= j < n_dst):
                    raise ShapeError(f"{es.kind} edge ({i}, {j}) out of range for {n_src}x{n_dst}")


def assemble_graph(audio_features, video_features, audio_spec: SubgraphSpec,
                   video_spec: SubgraphSpec, label, id: str = "") -> HeteroGraph:
    audio = np.asarray(audio_features, dtype=np.float64)
    video = np.asarray(video_features, dtype=np.float64)
    if audio.ndim != 2 or audio.shape[0] != audio_spec.n_nodes:
        raise ShapeError(f"audio features {audio.shape} do not match {audio_spec.n_nodes} nodes")
    if video.ndim != 2 or video.shape[0] != video_spec.n_nodes:
        raise ShapeError(f"video features {video.shape} do not match {video_spec.n_nodes} nodes")
    return HeteroGraph(
        audio_features=audio,
        video_features=video,
        edges_aa=build_intra_edges(audio_spec, "audio-audio"),
        edges_vv=build_intra_edges(video_spec, "video-video"),
        edges_av=EdgeSet("audio-video"),
        label=np.asarray(label, dtype=np.float64),
        id=id,
    )


def adjacency(edge_set: EdgeSet, n_rows: int, n_cols: int,
              normalize: bool = False) -> np.ndarray:
    """0/1 adjacency matrix; intra-modal sets get self-loops.

    ``normalize`` divides each row by its sum (empty rows stay zero).
    """
    a = np.zeros((n_rows, n_cols))
    for i, j in edge_set:
        if not (0 <= i < n_rows and 0 <= j < n_cols):
            raise AssertionError(f"edge ({i}, {j}) outside {n_rows}x{n_cols} adjacency")
        a[i, j] = 1.0
    if edge_set.kind in INTRA_KINDS:
        if n_rows != n_cols:
            raise ShapeError(f"intra-modal adjacency must be square, got {n_rows}x{n_cols}")
        np.fill_diagonal(a, 1.0)
    if normalize:
        deg = a.sum(axis=1, keepdims=True)
        a = np.divide(a, deg, out=np.zeros_like(a), where=deg > 0)
    return a


# ------------------------------------------------------------------ HGF1 files

GRAPH_MAGIC = b"HGF1"


def write_graph(graph: HeteroGraph, path) -> None:
    """Serialize one graph: header, edge lists (aa, vv, av), f32 payloads."""
    q, d_a = graph.audio_features.shape
    p, d_v = graph.video_features.shape
    chunks = [GRAPH_MAGIC, struct.pack("<5I", q, p, d_a, d_v, graph.n_classes)]
    for es in (graph.edges_aa, graph.edges_vv, graph.edges_av):
        chunks.append(struct.pack("<I", len(es)))
        chunks.append(np.asarray(es.pairs, dtype="<u4").reshape(-1).tobytes())
    for arr in (graph.audio_features, graph.video_features, graph.label):
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_graph(path) -> HeteroGraph:
    buf = Path(path).read_bytes()
    if buf[:4] != GRAPH_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {GRAPH_MAGIC!r}", 0)
    pos = 4

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError(f"truncated graph file reading {what}", pos)
        out = buf[pos:pos + n]
        pos += n
        return out

    q, p, d_a, d_v, c = struct.unpack("<5I", take(20, "header"))
    edge_sets = []
    for kind in ("audio-audio", "video-video", "audio-video"):
        (count,) = struct.unpack("<I", take(4, f"{kind} edge count"))
        flat = np.frombuffer(take(8 * count, f"{kind} edges"), dtype="<u4").reshape(count, 2)
        edge_sets.append(EdgeSet(kind, tuple((int(i), int(j)) for i, j in flat)))

    def floats(n: int, shape, what: str) -> np.ndarray:
        return np.frombuffer(take(4 * n, what), dtype="<f4").astype(np.float64).reshape(shape)

    audio = floats(q * d_a, (q, d_a), "audio features")
    video = floats(p * d_v, (p, d_v), "video features")
    label = floats(c, (c,), "label")
    if pos != len(buf):
        raise FormatError("trailing bytes after graph", pos)
    graph = HeteroGraph(audio, video, *edge_sets, label=label)
    graph.validate()
    return graph
