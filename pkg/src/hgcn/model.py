"""HGCN layers: modality-specific GraphSage stacks, the crossmodal graph
learning layer (shared GraphSage + kNN matching graph + attention fusion),
learnable pooling and the linear classifier.

All forwards accept either one graph (``N x D`` tensors) or a batch of
equally-sized graphs stacked along a leading axis (``B x N x D``).
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import FormatError, ShapeError
from .graph import EdgeSet, HeteroGraph, adjacency

Distance = Literal["cosine", "l2"]
Scope = Literal["per-audio-node", "global-top-k"]
Ablation = Literal["full", "audio-only", "video-only", "no-crossmodal", "no-learnable-pool"]
ABLATIONS = ("full", "audio-only", "video-only", "no-crossmodal", "no-learnable-pool")

CHECKPOINT_MAGIC = b"HGM1"


@dataclass
class SageParams:
    w_self: Tensor
    w_neigh: Tensor
    bias: Tensor

    def tensors(self) -> list[Tensor]:
        return [self.w_self, self.w_neigh, self.bias]


@dataclass
class GatParams:
    w: Tensor
    attn: Tensor  # 1 x 2*D_out, [audio half | video half]
    leaky_slope: float = 0.2

    def __post_init__(self):
        if not 0 < self.leaky_slope < 1:
            raise ValueError(f"leaky_slope must be in (0, 1), got {self.leaky_slope}")

    def tensors(self) -> list[Tensor]:
        return [self.w, self.attn]


@dataclass(frozen=True)
class MatchingConfig:
    k: int = 3
    distance: Distance = "cosine"
    scope: Scope = "per-audio-node"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.distance not in ("cosine", "l2"):
            raise ValueError(f"unknown distance {self.distance!r}")
        if self.scope not in ("per-audio-node", "global-top-k"):
            raise ValueError(f"unknown matching scope {self.scope!r}")


@dataclass
class PoolingParams:
    p_audio: Tensor  # 1 x Q
    p_video: Tensor  # 1 x P

    def tensors(self) -> list[Tensor]:
        return [self.p_audio, self.p_video]


@dataclass(frozen=True)
class ModelConfig:
    n_audio: int = 30
    n_video: int = 10
    d_audio: int = 16
    d_video: int = 16
    hidden: int = 32
    n_classes: int = 2
    n_modality_layers: int = 3
    k: int = 3
    distance: Distance = "cosine"
    scope: Scope = "per-audio-node"
    gat_heads: int = 1
    leaky_slope: float = 0.2
    ablation: Ablation = "full"
    seed: int = 0

    def __post_init__(self):
        for name in ("n_audio", "n_video", "d_audio", "d_video", "hidden", "n_classes",
                     "gat_heads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_modality_layers < 0:
            raise ValueError("n_modality_layers must be >= 0")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")
        MatchingConfig(self.k, self.distance, self.scope)

    @property
    def matching(self) -> MatchingConfig:
        return MatchingConfig(self.k, self.distance, self.scope)

    @property
    def uses_audio(self) -> bool:
        return self.ablation != "video-only"

    @property
    def uses_video(self) -> bool:
        return self.ablation != "audio-only"

    @property
    def has_crossmodal(self) -> bool:
        return self.ablation in ("full", "no-learnable-pool")

    @property
    def stack_depth(self) -> int:
        # without the crossmodal layer one more modality layer keeps total depth fixed
        return self.n_modality_layers + (0 if self.has_crossmodal else 1)


# ------------------------------------------------------------------ layers


def neighbor_mean_matrix(adj: np.ndarray) -> np.ndarray:
    """Row-normalised adjacency with the diagonal removed.

    Row ``i`` averages over the neighbours of ``i`` other than itself; an
    isolated node gets an all-zero row.
    """
    m = np.array(adj, dtype=np.float64, copy=True)
    n = m.shape[-1]
    idx = np.arange(n)
    m[..., idx, idx] = 0.0
    m = (m != 0).astype(np.float64)
    deg = m.sum(axis=-1, keepdims=True)
    return np.divide(m, deg, out=np.zeros_like(m), where=deg > 0)


def sage_forward(params: SageParams, features: Tensor, adj: np.ndarray,
                 neigh: np.ndarray | None = None) -> Tensor:
    """Mean-aggregator GraphSage layer with an explicit self weight, then ReLU.

    ``neigh`` may carry a precomputed :func:`neighbor_mean_matrix` of ``adj``.
    """
    if features.cols != params.w_self.rows:
        raise ShapeError(f"sage input width {features.cols} != weight rows {params.w_self.rows}")
    if adj.shape[-1] != features.rows or adj.shape[-2] != features.rows:
        raise ShapeError(f"adjacency {adj.shape} does not fit {features.rows} nodes")
    if neigh is None:
        neigh = neighbor_mean_matrix(adj)
    aggregated = Tensor(neigh) @ features
    return ad.relu(features @ params.w_self + aggregated @ params.w_neigh + params.bias)


def distance_matrix(audio: np.ndarray, video: np.ndarray, metric: Distance) -> np.ndarray:
    """Pairwise ``Q x P`` distances.  Cosine distance is ``1 - cos``; a zero
    vector has similarity 0 with everything."""
    audio = np.asarray(audio, dtype=np.float64)
    video = np.asarray(video, dtype=np.float64)
    if audio.shape[-1] != video.shape[-1]:
        raise ShapeError(f"matching needs a shared width: {audio.shape} vs {video.shape}")
    if metric == "cosine":
        dot = audio @ video.T
        na = np.sqrt((audio * audio).sum(axis=1))
        nv = np.sqrt((video * video).sum(axis=1))
        denom = na[:, None] * nv[None, :]
        sim = np.divide(dot, denom, out=np.zeros_like(dot), where=denom > 0)
        return 1.0 - sim
    if metric == "l2":
        diff = audio[:, None, :] - video[None, :, :]
        return np.sqrt((diff * diff).sum(axis=2))
    raise ValueError(f"unknown distance {metric!r}")


def select_top_k(dist: np.ndarray, k: int, scope: Scope) -> list[tuple[int, int]]:
    """Pick matching pairs from a ``Q x P`` distance matrix.

    Ties go to the smaller video index, then the smaller audio index.
    """
    n_a, n_v = dist.shape
    if scope == "per-audio-node":
        order = np.argsort(dist, axis=1, kind="stable")[:, :k]
        pairs = [(i, int(j)) for i in range(n_a) for j in order[i]]
    elif scope == "global-top-k":
        ii, jj = np.meshgrid(np.arange(n_a), np.arange(n_v), indexing="ij")
        ranked = np.lexsort((ii.ravel(), jj.ravel(), dist.ravel()))[:k]
        pairs = [(int(ii.flat[r]), int(jj.flat[r])) for r in ranked]
    else:
        raise ValueError(f"unknown matching scope {scope!r}")
    return sorted(pairs)


def knn_matching(audio_feats, video_feats, cfg: MatchingConfig) -> EdgeSet:
    a = audio_feats.data if isinstance(audio_feats, Tensor) else np.asarray(audio_feats)
    v = video_feats.data if isinstance(video_feats, Tensor) else np.asarray(video_feats)
    dist = distance_matrix(a, v, cfg.distance)
    return EdgeSet("audio-video", tuple(select_top_k(dist, cfg.k, cfg.scope)))


def edge_mask(edges: EdgeSet, n_audio: int, n_video: int) -> np.ndarray:
    mask = np.zeros((n_audio, n_video), dtype=bool)
    for i, j in edges:
        mask[i, j] = True
    return mask


def gat_fuse(params: GatParams, audio_feats: Tensor, video_feats: Tensor,
             edges_av: EdgeSet | np.ndarray) -> Tensor:
    """Attention-weighted sum of matched, projected video nodes per audio node.

    ``edges_av`` is an :class:`EdgeSet` or a boolean ``(B x) Q x P`` mask.
    Audio nodes without matches receive a zero vector.
    """
    d_out = params.w.cols
    if isinstance(edges_av, EdgeSet):
        mask = edge_mask(edges_av, audio_feats.rows, video_feats.rows)
    else:
        mask = np.asarray(edges_av, dtype=bool)
    if mask.shape[-2:] != (audio_feats.rows, video_feats.rows):
        raise ShapeError(f"edge mask {mask.shape} does not fit "
                         f"{audio_feats.rows}x{video_feats.rows}")
    ha = audio_feats @ params.w
    hv = video_feats @ params.w
    a_src = ad.transpose(params.attn[:, :d_out])
    a_dst = ad.transpose(params.attn[:, d_out:])
    score = (ha @ a_src) + ad.transpose(hv @ a_dst)
    alpha = ad.softmax_rows(ad.leaky_relu(score, params.leaky_slope), mask)
    return alpha @ hv


def attention_weights(params: GatParams, audio_feats: Tensor, video_feats: Tensor,
                      mask: np.ndarray) -> np.ndarray:
    d_out = params.w.cols
    ha = audio_feats.data @ params.w.data
    hv = video_feats.data @ params.w.data
    score = ha @ params.attn.data[:, :d_out].T + np.swapaxes(hv @ params.attn.data[:, d_out:].T, -1, -2)
    score = np.where(score > 0, score, params.leaky_slope * score)
    return ad.softmax_rows(Tensor(score), mask).data


# ------------------------------------------------------------------ model


@dataclass
class HgcnModel:
    config: ModelConfig
    audio_layers: list[SageParams] = field(default_factory=list)
    video_layers: list[SageParams] = field(default_factory=list)
    shared_sage: SageParams | None = None
    cross_gat: list[GatParams] = field(default_factory=list)
    pooling: PoolingParams | None = None
    classifier_w: Tensor | None = None
    classifier_b: Tensor | None = None

    @property
    def matching(self) -> MatchingConfig:
        return self.config.matching

    def named_groups(self) -> dict[str, list[tuple[str, Tensor]]]:
        """Parameters by group, in checkpoint order."""
        groups: dict[str, list[tuple[str, Tensor]]] = {}
        for tag, layers in (("audio_sage", self.audio_layers), ("video_sage", self.video_layers)):
            if layers:
                groups[tag] = [(f"{tag}.{li}.{n}", t) for li, layer in enumerate(layers)
                               for n, t in zip(("w_self", "w_neigh", "bias"), layer.tensors())]
        if self.shared_sage is not None:
            groups["shared_sage"] = [(f"shared_sage.{n}", t) for n, t in
                                     zip(("w_self", "w_neigh", "bias"), self.shared_sage.tensors())]
        if self.cross_gat:
            groups["cross_gat"] = [(f"cross_gat.{h}.{n}", t) for h, head in enumerate(self.cross_gat)
                                   for n, t in zip(("w", "attn"), head.tensors())]
        groups["pooling"] = []
        if self.config.uses_audio:
            groups["pooling"].append(("pooling.p_audio", self.pooling.p_audio))
        if self.config.uses_video:
            groups["pooling"].append(("pooling.p_video", self.pooling.p_video))
        groups["classifier"] = [("classifier.w", self.classifier_w),
                                ("classifier.b", self.classifier_b)]
        return groups

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [item for group in self.named_groups().values() for item in group]

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def trainable(self) -> list[Tensor]:
        frozen = set()
        if self.config.ablation == "no-learnable-pool":
            frozen = {id(t) for t in self.pooling.tensors()}
        return [t for t in self.parameters() if id(t) not in frozen]

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.parameters())

    def copy(self) -> "HgcnModel":
        clone = load_state(self.config, {n: t.data for n, t in self.named_parameters()})
        return clone


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, name: str) -> Tensor:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return ad.parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)), name)


def _sage_init(rng, d_in: int, d_out: int, name: str) -> SageParams:
    return SageParams(_xavier(rng, d_in, d_out, f"{name}.w_self"),
                      _xavier(rng, d_in, d_out, f"{name}.w_neigh"),
                      ad.parameter(np.zeros((1, d_out)), f"{name}.bias"))


def init_xavier(config: ModelConfig, seed: int | None = None) -> HgcnModel:
    """Xavier-uniform weights, zero biases, uniform pooling weights."""
    seed = config.seed if seed is None else seed
    if seed != config.seed:
        config = ModelConfig(**{**asdict(config), "seed": seed})
    rng = np.random.default_rng(seed)
    h = config.hidden
    model = HgcnModel(config)
    for tag, d_in, used in (("audio_sage", config.d_audio, config.uses_audio),
                            ("video_sage", config.d_video, config.uses_video)):
        if not used:
            continue
        layers = []
        for li in range(config.stack_depth):
            layers.append(_sage_init(rng, d_in if li == 0 else h, h, f"{tag}.{li}"))
        setattr(model, "audio_layers" if tag == "audio_sage" else "video_layers", layers)
    width_a = h if config.n_modality_layers else config.d_audio
    width_v = h if config.n_modality_layers else config.d_video
    if config.has_crossmodal:
        if width_a != width_v:
            raise ShapeError("crossmodal layer needs equal audio/video widths; "
                             "use at least one modality layer")
        model.shared_sage = _sage_init(rng, width_a, h, "shared_sage")
        for i in range(config.gat_heads):
            w = _xavier(rng, width_a, h, f"cross_gat.{i}.w")
            attn = _xavier(rng, 2 * h, 1, f"cross_gat.{i}.attn")
            attn.data = attn.data.T.copy()
            model.cross_gat.append(GatParams(w, attn, config.leaky_slope))
    model.pooling = PoolingParams(
        ad.parameter(np.full((1, config.n_audio), 1.0 / config.n_audio), "pooling.p_audio"),
        ad.parameter(np.full((1, config.n_video), 1.0 / config.n_video), "pooling.p_video"))
    width = h * (int(config.uses_audio) + int(config.uses_video))
    model.classifier_w = _xavier(rng, width, config.n_classes, "classifier.w")
    model.classifier_b = ad.parameter(np.zeros((1, config.n_classes)), "classifier.b")
    return model


# ------------------------------------------------------------------ forward


@dataclass
class BatchInputs:
    """Stacked node features and aggregation matrices for equally-sized graphs."""

    audio: np.ndarray
    video: np.ndarray
    adj_a: np.ndarray
    adj_v: np.ndarray
    labels: np.ndarray
    ids: list[str]


_adj_cache: dict[tuple, np.ndarray] = {}


def _adjacency_cached(edges: EdgeSet, n: int) -> np.ndarray:
    key = (edges.kind, n, edges.pairs)
    hit = _adj_cache.get(key)
    if hit is None:
        if len(_adj_cache) > 256:
            _adj_cache.clear()
        hit = adjacency(edges, n, n)
        _adj_cache[key] = hit
    return hit


def stack_graphs(graphs: Sequence[HeteroGraph]) -> BatchInputs:
    return BatchInputs(
        audio=np.stack([g.audio_features for g in graphs]),
        video=np.stack([g.video_features for g in graphs]),
        adj_a=np.stack([_adjacency_cached(g.edges_aa, g.n_audio) for g in graphs]),
        adj_v=np.stack([_adjacency_cached(g.edges_vv, g.n_video) for g in graphs]),
        labels=np.stack([g.label for g in graphs]),
        ids=[g.id for g in graphs],
    )


def check_compatible(model: HgcnModel, graph: HeteroGraph) -> None:
    cfg = model.config
    problems = []
    if graph.n_audio != cfg.n_audio:
        problems.append(f"{graph.n_audio} audio nodes (model expects {cfg.n_audio})")
    if graph.n_video != cfg.n_video:
        problems.append(f"{graph.n_video} video nodes (model expects {cfg.n_video})")
    if graph.audio_features.shape[1] != cfg.d_audio:
        problems.append(f"audio width {graph.audio_features.shape[1]} (expects {cfg.d_audio})")
    if graph.video_features.shape[1] != cfg.d_video:
        problems.append(f"video width {graph.video_features.shape[1]} (expects {cfg.d_video})")
    if graph.label.shape != (cfg.n_classes,):
        problems.append(f"label length {graph.label.shape} (expects {cfg.n_classes})")
    if problems:
        raise ShapeError(f"graph {graph.id or '?'}: " + "; ".join(problems))


def _mask_from_edges(edges, n_a: int, n_v: int) -> np.ndarray:
    if isinstance(edges, EdgeSet):
        return edge_mask(edges, n_a, n_v)
    if isinstance(edges, np.ndarray):
        return edges.astype(bool)
    return np.stack([edge_mask(e, n_a, n_v) for e in edges])


def matching_masks(model: HgcnModel, audio: np.ndarray, video: np.ndarray) -> np.ndarray:
    """Boolean ``(B x) Q x P`` matching mask from shared-space embeddings."""
    cfg = model.matching
    if audio.ndim == 2:
        return edge_mask(knn_matching(audio, video, cfg), audio.shape[0], video.shape[0])
    return np.stack([edge_mask(knn_matching(a, v, cfg), a.shape[0], v.shape[0])
                     for a, v in zip(audio, video)])


def crossmodal_layer(model: HgcnModel, audio_in: Tensor, video_in: Tensor,
                     adj_a: np.ndarray, adj_v: np.ndarray, edges_av=None,
                     neigh_a: np.ndarray | None = None, neigh_v: np.ndarray | None = None):
    """Shared GraphSage on both modalities, matching graph, fusion into audio.

    Matching uses the shared-space embeddings; attention fusion reads the
    layer inputs.

    Returns ``(audio_out, video_out, mask)``; ``mask`` is the boolean
    audio-video matching.  Supplying ``edges_av`` freezes the matching.
    """
    shared_a = sage_forward(model.shared_sage, audio_in, adj_a, neigh_a)
    shared_v = sage_forward(model.shared_sage, video_in, adj_v, neigh_v)
    if edges_av is None:
        mask = matching_masks(model, shared_a.data, shared_v.data)
    else:
        mask = _mask_from_edges(edges_av, audio_in.rows, video_in.rows)
    fused = None
    for head in model.cross_gat:
        out = gat_fuse(head, audio_in, video_in, mask)
        fused = out if fused is None else fused + out
    if len(model.cross_gat) > 1:
        fused = ad.scale(fused, 1.0 / len(model.cross_gat))
    return shared_a + fused, shared_v, mask


def pool_and_classify(model: HgcnModel, audio_final: Tensor | None,
                      video_final: Tensor | None) -> Tensor:
    """Weighted node sums per modality, concatenated, then a linear map.

    Returns logits of shape ``(B x) 1 x C`` following the input batching.
    """
    parts = []
    if audio_final is not None:
        if audio_final.rows != model.pooling.p_audio.cols:
            raise ShapeError(f"{audio_final.rows} audio rows vs pooling length "
                             f"{model.pooling.p_audio.cols}")
        parts.append(model.pooling.p_audio @ audio_final)
    if video_final is not None:
        if video_final.rows != model.pooling.p_video.cols:
            raise ShapeError(f"{video_final.rows} video rows vs pooling length "
                             f"{model.pooling.p_video.cols}")
        parts.append(model.pooling.p_video @ video_final)
    h_graph = parts[0] if len(parts) == 1 else ad.concat(parts, axis=-1)
    return h_graph @ model.classifier_w + model.classifier_b


def forward_arrays(model: HgcnModel, audio: np.ndarray, video: np.ndarray,
                   adj_a: np.ndarray, adj_v: np.ndarray, edges_av=None):
    """Forward on raw (optionally batched) arrays.

    Returns ``(logits, mask)`` with logits shaped ``(B,) C`` and the
    boolean matching mask (``None`` without a crossmodal layer).
    """
    cfg = model.config
    a = Tensor(audio) if cfg.uses_audio else None
    v = Tensor(video) if cfg.uses_video else None
    neigh_a = neighbor_mean_matrix(adj_a)
    neigh_v = neighbor_mean_matrix(adj_v)
    for layer in model.audio_layers:
        a = sage_forward(layer, a, adj_a, neigh_a)
    for layer in model.video_layers:
        v = sage_forward(layer, v, adj_v, neigh_v)
    mask = None
    if cfg.has_crossmodal:
        a, v, mask = crossmodal_layer(model, a, v, adj_a, adj_v, edges_av, neigh_a, neigh_v)
    logits = pool_and_classify(model, a, v)
    batch_shape = audio.shape[:-2]
    return ad.reshape(logits, batch_shape + (cfg.n_classes,)), mask


def forward(model: HgcnModel, graph: HeteroGraph | Sequence[HeteroGraph], edges_av=None):
    """Logits and learned audio-video edges for one graph or a list of graphs."""
    if isinstance(graph, HeteroGraph):
        check_compatible(model, graph)
        adj_a = _adjacency_cached(graph.edges_aa, graph.n_audio)
        adj_v = _adjacency_cached(graph.edges_vv, graph.n_video)
        logits, mask = forward_arrays(model, graph.audio_features, graph.video_features,
                                      adj_a, adj_v, edges_av)
        return logits, mask_to_edges(mask)
    for g in graph:
        check_compatible(model, g)
    batch = stack_graphs(graph)
    logits, mask = forward_arrays(model, batch.audio, batch.video, batch.adj_a, batch.adj_v,
                                  edges_av)
    edges = [EdgeSet("audio-video")] * len(graph) if mask is None else [mask_to_edges(m) for m in mask]
    return logits, edges


def mask_to_edges(mask: np.ndarray | None) -> EdgeSet:
    if mask is None:
        return EdgeSet("audio-video")
    ii, jj = np.nonzero(mask)
    return EdgeSet("audio-video", tuple((int(i), int(j)) for i, j in zip(ii, jj)))


# ------------------------------------------------------------------ checkpoints


def load_state(config: ModelConfig, state: dict[str, np.ndarray]) -> HgcnModel:
    model = init_xavier(config, config.seed)
    params = model.named_parameters()
    missing = [n for n, _ in params if n not in state]
    extra = sorted(set(state) - {n for n, _ in params})
    if missing or extra:
        raise FormatError(f"checkpoint/config mismatch: missing {missing}, unexpected {extra}")
    for name, t in params:
        value = np.asarray(state[name], dtype=np.float64)
        if value.shape != t.shape:
            raise FormatError(f"checkpoint/config mismatch for {name}: "
                              f"{value.shape} vs {t.shape}")
        t.data = value.copy()
    return model


def save_checkpoint(model: HgcnModel, path: str | Path) -> None:
    header = json.dumps(asdict(model.config), sort_keys=True).encode("utf-8")
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", len(header)), header]
    params = model.named_parameters()
    chunks.append(struct.pack("<I", len(params)))
    for name, t in params:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack("<I", t.data.ndim) + struct.pack(f"<{t.data.ndim}I", *t.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated checkpoint reading {what} at byte offset {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_checkpoint(path: str | Path) -> HgcnModel:
    r = _Reader(Path(path).read_bytes())
    magic = r.take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r} at byte offset 0")
    try:
        raw_cfg = json.loads(r.take(r.u32("header length"), "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable checkpoint header: {exc}") from None
    known = {f.name for f in fields(ModelConfig)}
    unknown = set(raw_cfg) - known
    if unknown:
        raise FormatError(f"unknown config keys in checkpoint: {sorted(unknown)}")
    config = ModelConfig(**raw_cfg)
    state = {}
    for _ in range(r.u32("tensor count")):
        name = r.take(r.u32("name length"), "tensor name").decode("utf-8")
        ndim = r.u32(f"{name} ndim")
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim, f"{name} shape"))
        n = int(np.prod(shape))
        state[name] = np.frombuffer(r.take(8 * n, name), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(r.buf):
        raise FormatError(f"trailing bytes after checkpoint at byte offset {r.pos}")
    return load_state(config, state)
