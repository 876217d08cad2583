"""Central finite-difference check of the full model's gradients."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .graph import SubgraphSpec, assemble_graph
from .model import HgcnModel, ModelConfig, forward, init_xavier
from .training import loss


@dataclass
class GradcheckReport:
    tol: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e <= self.tol for e in self.errors.values())

    @property
    def worst(self) -> tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]

    def lines(self) -> list[str]:
        out = []
        for name, err in self.errors.items():
            status = "PASS" if err <= self.tol else "FAIL"
            out.append(f"{status} {name:<12} rel_err={err:.3e} tol={self.tol:.0e}")
        return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def tiny_instance(seed: int, n_audio: int = 4, n_video: int = 3, hidden: int = 6,
                  d_audio: int = 5, d_video: int = 5, n_classes: int = 3,
                  ablation: str = "full"):
    """A random model/graph pair with every parameter moved off its init."""
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(n_audio=n_audio, n_video=n_video, d_audio=d_audio, d_video=d_video,
                      hidden=hidden, n_classes=n_classes, k=2, ablation=ablation, seed=seed)
    model = init_xavier(cfg, seed)
    for p in model.parameters():
        p.data = rng.uniform(-1.0, 1.0, size=p.shape)
    graph = assemble_graph(rng.uniform(-1, 1, (n_audio, d_audio)),
                           rng.uniform(-1, 1, (n_video, d_video)),
                           SubgraphSpec(n_audio, span=2, dilation=1),
                           SubgraphSpec(n_video, span=1, dilation=1),
                           (rng.random(n_classes) < 0.5).astype(float))
    return model, graph


def check_model(model: HgcnModel, graph, tol: float = 1e-4, h: float = 1e-6,
                groups: list[str] | None = None) -> GradcheckReport:
    """Compare tape gradients with central differences, matching held fixed."""
    _, edges = forward(model, graph)

    def objective() -> ad.Tensor:
        logits, _ = forward(model, graph, edges_av=edges)
        return loss(logits, graph.label, "multilabel-bce")

    with ad.Tape() as tape:
        value = objective()
    params = model.parameters()
    analytic = ad.backward(tape, value, params)
    report = GradcheckReport(tol)
    for name, members in model.named_groups().items():
        if groups is not None and name not in groups:
            continue
        ga, gn = [], []
        for _, p in members:
            numeric = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                up = objective().item()
                flat[idx] = orig - h
                down = objective().item()
                flat[idx] = orig
                numeric.reshape(-1)[idx] = (up - down) / (2 * h)
            ga.append(analytic[p].ravel())
            gn.append(numeric.ravel())
        if ga:
            report.errors[name] = relative_error(np.concatenate(ga), np.concatenate(gn))
    return report


def run_gradcheck(seed: int = 0, tol: float = 1e-4, **overrides) -> GradcheckReport:
    model, graph = tiny_instance(seed, **overrides)
    return check_model(model, graph, tol)
