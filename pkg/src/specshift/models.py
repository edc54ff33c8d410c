"""GCN / MLP backbones, graph readouts (global max, global mean, SIA) and the
self-supervised cycle-membership head."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Mapping, Optional

import numpy as np

from . import nn
from .cycles import align_cycle_lengths, node_cycle_features
from .datasets import Dataset
from .graph import Graph
from .nn import Tensor
from .spectral import normalized_adjacency

BACKBONES = ("gcn", "mlp")
READOUTS = ("global_max", "global_mean", "sia")


@dataclass
class ModelConfig:
    backbone: str = "gcn"
    layers: int = 3
    hidden: int = 64
    readout: str = "global_max"
    ssl_lambda: float = 0.0
    augcyc_n: int = 0
    augcyc_r: int = 0
    batch_size: int = 30
    lr: float = 1e-3
    max_epochs: int = 500
    patience: int = 50

    def __post_init__(self) -> None:
        if self.backbone not in BACKBONES:
            raise ValueError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if self.readout not in READOUTS:
            raise ValueError(f"readout must be one of {READOUTS}, got {self.readout!r}")
        if self.hidden < 1 or self.layers < 1:
            raise ValueError("hidden width and layer count must be >= 1")
        if self.ssl_lambda < 0:
            raise ValueError("ssl_lambda must be nonnegative")
        if (self.augcyc_n > 0) != (self.augcyc_r > 0):
            raise ValueError("augcyc_n and augcyc_r must be set together")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise ValueError("batch_size >= 1, max_epochs >= 0, patience >= 1 required")

    @property
    def augcyc(self) -> Optional[tuple[int, int]]:
        return (self.augcyc_n, self.augcyc_r) if self.augcyc_n > 0 else None

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            conv = {"int": int, "float": float}.get(types[key], str)
            kwargs[key] = conv(value)
        return cls(**kwargs)


@dataclass
class GraphInput:
    """Per-graph tensors computed once before training."""

    x: np.ndarray
    t: np.ndarray
    cycle_feats: np.ndarray
    label: int

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def membership(self) -> np.ndarray:
        return self.cycle_feats[:, 0].astype(np.int64)


def node_features(g: Graph) -> np.ndarray:
    """Graph features, or a constant 1 column for featureless graphs."""
    return np.ones((g.n, 1)) if g.features is None else np.asarray(g.features)


def prepare(g: Graph) -> GraphInput:
    if g.n == 0:
        raise ValueError("empty graph readout")
    return GraphInput(
        x=node_features(g),
        t=normalized_adjacency(g),
        cycle_feats=node_cycle_features(g),
        label=-1 if g.label is None else int(g.label),
    )


def init_params(
    config: ModelConfig, in_dim: int, n_classes: int, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {}
    dims = [in_dim] + [config.hidden] * config.layers
    for l in range(config.layers):
        params[f"W{l}"] = nn.glorot_init(dims[l], dims[l + 1], rng)
        params[f"b{l}"] = np.zeros((1, dims[l + 1]))
    params["Wc"] = nn.glorot_init(config.hidden, n_classes, rng)
    params["bc"] = np.zeros((1, n_classes))
    if config.readout == "sia":
        params["wA"] = np.zeros((2, 1))
    if config.ssl_lambda > 0:
        params["Ws1"] = nn.glorot_init(config.hidden, config.hidden, rng)
        params["bs1"] = np.zeros((1, config.hidden))
        params["Ws2"] = nn.glorot_init(config.hidden, 2, rng)
        params["bs2"] = np.zeros((1, 2))
    return params


def backbone_forward(
    config: ModelConfig, inp: GraphInput, params: Mapping[str, Tensor]
) -> Tensor:
    """Node representations after ``config.layers`` layers.

    GCN layer: ``T (H W) + b``; the MLP drops ``T``. ReLU follows every layer
    except the last.
    """
    h: Tensor = Tensor(inp.x)
    for l in range(config.layers):
        h = nn.matmul(h, params[f"W{l}"])
        if config.backbone == "gcn":
            h = nn.matmul(inp.t, h)
        h = nn.add_bias(h, params[f"b{l}"])
        if l < config.layers - 1:
            h = nn.relu(h)
    return h


def sia_weights(cycle_feats: np.ndarray, w_a) -> Tensor:
    """(N, 1) node weights ``softmax(C w_A) * N``; they average to 1."""
    n = cycle_feats.shape[0]
    if n == 0:
        raise ValueError("empty graph readout")
    scores = nn.transpose(nn.matmul(cycle_feats, w_a))
    return nn.transpose(nn.row_softmax(scores, scale=n))


def sia_readout(cycle_feats: np.ndarray, x_last: Tensor, w_a) -> Tensor:
    """Size-insensitive attention pooling: global max over ``Diag(k) X``.

    Scaling the softmax by N keeps the mean weight at 1 regardless of graph
    size.
    """
    if x_last.shape[0] == 0:
        raise ValueError("empty graph readout")
    return nn.global_max_rows(nn.scale_rows(x_last, sia_weights(cycle_feats, w_a)))


def readout(config: ModelConfig, inp: GraphInput, x_last: Tensor, params) -> Tensor:
    if config.readout == "global_max":
        return nn.global_max_rows(x_last)
    if config.readout == "global_mean":
        return nn.global_mean_rows(x_last)
    return sia_readout(inp.cycle_feats, x_last, params["wA"])


def ssl_loss(node_reps: Tensor, membership: np.ndarray, params: Mapping[str, Tensor]) -> Tensor:
    """Mean per-node cross-entropy of a 2-layer MLP predicting cycle membership."""
    h = nn.relu(nn.add_bias(nn.matmul(node_reps, params["Ws1"]), params["bs1"]))
    logits = nn.add_bias(nn.matmul(h, params["Ws2"]), params["bs2"])
    return nn.cross_entropy_from_logits(logits, membership)


@dataclass
class Forward:
    logits: Tensor
    node_reps: Tensor


def forward(config: ModelConfig, inp: GraphInput, params: Mapping[str, Tensor]) -> Forward:
    reps = backbone_forward(config, inp, params)
    pooled = readout(config, inp, reps, params)
    logits = nn.add_bias(nn.matmul(pooled, params["Wc"]), params["bc"])
    return Forward(logits, reps)


def graph_loss(config: ModelConfig, inp: GraphInput, params: Mapping[str, Tensor]) -> Tensor:
    """Classification loss, plus ``ssl_lambda`` times the cycle loss when enabled."""
    out = forward(config, inp, params)
    loss = nn.cross_entropy_from_logits(out.logits, [inp.label])
    if config.ssl_lambda > 0:
        aux = ssl_loss(out.node_reps, inp.membership, params)
        loss = nn.add(loss, nn.scale(aux, config.ssl_lambda))
    return loss


def as_tensors(params: Mapping[str, np.ndarray], requires_grad: bool = False) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=requires_grad) for k, v in params.items()}


def predict_logits(config: ModelConfig, inp: GraphInput, params: Mapping[str, np.ndarray]) -> np.ndarray:
    return forward(config, inp, as_tensors(params)).logits.data[0]


def augcyc_prepare(
    train_indices, dataset: Dataset, n: int, r: int, seed: int
) -> list[Graph]:
    """Training graphs (in ``train_indices`` order) with every r-th one's
    basis cycles lengthened n times. Other splits are never touched."""
    rng = np.random.default_rng(seed)
    graphs = [dataset.graphs[i] for i in train_indices]
    return align_cycle_lengths(graphs, r, n, rng)
