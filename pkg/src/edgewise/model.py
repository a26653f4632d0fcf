"""Tokenizer, node-edge attention convolution and the symmetric pair head.

A mini-batch of pattern subgraphs is flattened into one set of stacked rows so
the whole batch is a single pass over the tape:

* every pattern contributes its member rows (centers first);
* every (pattern, center) pair is a *segment* ``2 * p + c``;
* every message ``source -> center`` carries its segment id, so attention is
  a segment softmax and aggregation a segment sum.

Messages within a segment are ordered by ascending global source index, which
makes the computation for a center independent of whether it is listed first
or second in its pattern.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .graph import Graph, PatternSubgraph, induce_pattern_subgraph, neighbors_in_subgraph
from .tensor import Node, Parameters, Tape, glorot_init

TOKENIZERS = ("deep", "shallow")
TASKS = ("regression", "binary-classification")
ATTEND = ("neighbors", "members")
ACTIVATIONS = ("relu", "tanh", "sigmoid")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    token_dim: int = 16
    edge_dim: int = 0
    tokenizer: str = "deep"
    head_hidden: tuple[int, int] = (32, 16)
    task: str = "regression"
    attend_over: str = "neighbors"
    head_activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "head_hidden", tuple(int(h) for h in self.head_hidden))
        if self.input_dim < 1 or self.token_dim < 1 or self.edge_dim < 0:
            raise ValueError("input_dim and token_dim must be >= 1, edge_dim >= 0")
        if len(self.head_hidden) != 2 or min(self.head_hidden) < 1:
            raise ValueError("head_hidden needs two positive sizes")
        for name, allowed in (
            ("tokenizer", TOKENIZERS),
            ("task", TASKS),
            ("attend_over", ATTEND),
            ("head_activation", ACTIVATIONS),
        ):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")

    @property
    def embed_dim(self) -> int:
        return 2 * self.token_dim

    @property
    def head_input_dim(self) -> int:
        return 2 * self.embed_dim

    def to_dict(self) -> dict:
        d = asdict(self)
        d["head_hidden"] = list(self.head_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, int]]:
    d, t, q = cfg.input_dim, cfg.token_dim, cfg.edge_dim
    h1, h2 = cfg.head_hidden
    shapes = {"tok.W1": (d, t), "tok.b1": (1, t)}
    if cfg.tokenizer == "deep":
        shapes |= {"tok.W2": (t, t), "tok.b2": (1, t)}
    shapes |= {
        "att.WQ": (t + q, t),
        "att.bQ": (1, t),
        "att.WK": (t, t),
        "att.bK": (1, t),
        "att.WV": (t, t),
        "att.bV": (1, t),
        "proj.W": (2 * t, 2 * t),
        "proj.b": (1, 2 * t),
        "head.W1": (4 * t, h1),
        "head.b1": (1, h1),
        "head.W2": (h1, h2),
        "head.b2": (1, h2),
        "head.W3": (h2, 1),
        "head.b3": (1, 1),
    }
    return shapes


def init_params(cfg: ModelConfig, seed: int) -> Parameters:
    """Glorot weights, zero biases; each matrix gets its own derived seed."""
    shapes = parameter_shapes(cfg)
    seeds = np.random.SeedSequence(seed).generate_state(len(shapes))
    params = Parameters()
    for (name, (rows, cols)), s in zip(shapes.items(), seeds):
        if name.split(".")[1].startswith("b"):
            params.add(name, np.zeros((rows, cols)))
        else:
            params.add(name, glorot_init(rows, cols, int(s)))
    return params


def zero_params(cfg: ModelConfig) -> Parameters:
    params = Parameters()
    for name, shape in parameter_shapes(cfg).items():
        params.add(name, np.zeros(shape))
    return params


def _activation(tp: Tape, x: Node, kind: str) -> Node:
    return getattr(tp, kind)(x)


# -- blocks ---------------------------------------------------------------

def tokenize(tp: Tape, x: Node, params: Parameters, cfg: ModelConfig) -> Node:
    """Row-wise tokenizer: ``linear-ReLU-linear-Tanh`` (deep) or ``linear-Tanh``."""
    if x.shape[1] != cfg.input_dim:
        raise ValueError(f"node features have {x.shape[1]} columns, model expects {cfg.input_dim}")
    h = tp.affine(x, tp.param(params, "tok.W1"), tp.param(params, "tok.b1"))
    if cfg.tokenizer == "deep":
        h = tp.relu(h)
        h = tp.affine(h, tp.param(params, "tok.W2"), tp.param(params, "tok.b2"))
    return tp.tanh(h)


@dataclass
class Layout:
    """Stacked-row indexing for a batch of pattern subgraphs."""

    n_patterns: int
    features: np.ndarray
    centers: np.ndarray
    msg_target: np.ndarray
    msg_source: np.ndarray
    msg_segment: np.ndarray
    msg_edges: np.ndarray | None
    msg_nodes: list = field(default_factory=list)

    @property
    def n_segments(self) -> int:
        return 2 * self.n_patterns


def build_layout(subs: Sequence[PatternSubgraph], cfg: ModelConfig) -> Layout:
    q = cfg.edge_dim
    feats, centers = [], []
    tgt, src, seg, edge_rows, msg_nodes = [], [], [], [], []
    offset = 0
    for p, sub in enumerate(subs):
        if q and (sub.edge_feature_slice is None or sub.edge_feature_slice.shape[1] != q):
            raise ValueError(f"model expects {q} edge features per edge")
        feats.append(sub.node_feature_slice)
        pos = sub.position
        for c_local, c in enumerate((sub.center_i, sub.center_j)):
            segment = 2 * p + c_local
            centers.append(offset + c_local)
            if cfg.attend_over == "neighbors":
                sources = neighbors_in_subgraph(sub, c)
            else:
                sources = sorted(m for m in sub.members if m != c)
            for k in sources:
                tgt.append(offset + c_local)
                src.append(offset + pos[k])
                seg.append(segment)
                msg_nodes.append((segment, k))
                if q:
                    e = sub.edge_position.get((min(c, k), max(c, k)))
                    edge_rows.append(
                        sub.edge_feature_slice[e] if e is not None else np.zeros(q)
                    )
        offset += sub.size
    features = np.vstack(feats) if feats else np.zeros((0, cfg.input_dim))
    msg_edges = np.array(edge_rows).reshape(len(tgt), q) if q else None
    as_idx = lambda a: np.asarray(a, dtype=np.intp)
    return Layout(
        len(subs), features, as_idx(centers), as_idx(tgt), as_idx(src), as_idx(seg),
        msg_edges, msg_nodes,
    )


def nea_layer(
    tp: Tape, tokens: Node, layout: Layout, params: Parameters, cfg: ModelConfig
) -> tuple[Node, Node | None]:
    """Attention message passing into both centers of every pattern.

    Returns the center embeddings (one row per segment, width ``2t``) and the
    per-message attention weights (``None`` when the batch has no messages).
    """
    t = cfg.token_dim
    own = tp.gather(tokens, layout.centers)
    weights = None
    if len(layout.msg_source) == 0:
        aggregated = tp.constant(np.zeros((layout.n_segments, t)))
    else:
        target = tp.gather(tokens, layout.msg_target)
        q_in = target
        if cfg.edge_dim:
            q_in = tp.concat([target, tp.constant(layout.msg_edges)])
        query = tp.sigmoid(tp.affine(q_in, tp.param(params, "att.WQ"), tp.param(params, "att.bQ")))
        keys = tp.sigmoid(tp.affine(tokens, tp.param(params, "att.WK"), tp.param(params, "att.bK")))
        values = tp.sigmoid(tp.affine(tokens, tp.param(params, "att.WV"), tp.param(params, "att.bV")))
        key = tp.gather(keys, layout.msg_source)
        value = tp.gather(values, layout.msg_source)
        score = tp.row_sum(tp.mul(query, key))
        weights = tp.segment_softmax(score, layout.msg_segment, layout.n_segments)
        aggregated = tp.segment_sum(tp.mul(value, weights), layout.msg_segment, layout.n_segments)
    return tp.tanh(tp.concat([aggregated, own])), weights


def predict_head(tp: Tape, z_i: Node, z_j: Node, params: Parameters, cfg: ModelConfig) -> Node:
    """Shared projection, elementwise min/max reordering, then a 3-layer MLP."""
    if z_i.shape[1] != cfg.embed_dim or z_j.shape[1] != cfg.embed_dim:
        raise ValueError(f"embeddings must have width {cfg.embed_dim}")
    proj_w, proj_b = tp.param(params, "proj.W"), tp.param(params, "proj.b")
    u_i = tp.tanh(tp.affine(z_i, proj_w, proj_b))
    u_j = tp.tanh(tp.affine(z_j, proj_w, proj_b))
    h = tp.minmax(u_i, u_j)
    h = _activation(tp, tp.affine(h, tp.param(params, "head.W1"), tp.param(params, "head.b1")), cfg.head_activation)
    h = _activation(tp, tp.affine(h, tp.param(params, "head.W2"), tp.param(params, "head.b2")), cfg.head_activation)
    out = tp.affine(h, tp.param(params, "head.W3"), tp.param(params, "head.b3"))
    if cfg.task == "binary-classification":
        out = tp.sigmoid(out)
    return out


@dataclass
class BatchOutput:
    prediction: Node  # (B, 1)
    cosine: Node  # (B, 1)
    z_i: Node  # (B, 2t)
    z_j: Node
    weights: Node | None
    layout: Layout


def forward_batch(
    tp: Tape,
    subs: Sequence[PatternSubgraph],
    params: Parameters,
    cfg: ModelConfig,
    layout: Layout | None = None,
) -> BatchOutput:
    if layout is None:
        layout = build_layout(subs, cfg)
    tokens = tokenize(tp, tp.constant(layout.features), params, cfg)
    z, weights = nea_layer(tp, tokens, layout, params, cfg)
    idx = np.arange(layout.n_patterns)
    z_i = tp.gather(z, 2 * idx)
    z_j = tp.gather(z, 2 * idx + 1)
    pred = predict_head(tp, z_i, z_j, params, cfg)
    cos = tp.cosine_rows(z_i, z_j)
    return BatchOutput(pred, cos, z_i, z_j, weights, layout)


# -- single-pattern conveniences ---------------------------------------------

@dataclass
class Forward:
    prediction: float
    z_i: np.ndarray
    z_j: np.ndarray
    cosine: float


def model_forward(sub: PatternSubgraph, params: Parameters, cfg: ModelConfig) -> Forward:
    out = forward_batch(Tape(grad=False), [sub], params, cfg)
    return Forward(
        out.prediction.item(), out.z_i.value[0].copy(), out.z_j.value[0].copy(), out.cosine.item()
    )


def attention_weights(
    sub: PatternSubgraph, target: int, params: Parameters, cfg: ModelConfig
) -> dict[int, float]:
    """Attention weight of every source node feeding ``target`` (a center)."""
    if target not in (sub.center_i, sub.center_j):
        raise ValueError(f"node {target} is not a center of this pattern")
    out = forward_batch(Tape(grad=False), [sub], params, cfg)
    segment = 0 if target == sub.center_i else 1
    if out.weights is None:
        return {}
    w = out.weights.value[:, 0]
    return {k: float(w[m]) for m, (s, k) in enumerate(out.layout.msg_nodes) if s == segment}


def nea_embed(sub: PatternSubgraph, target: int, params: Parameters, cfg: ModelConfig) -> np.ndarray:
    """Embedding of one center (length ``2t``)."""
    fwd = model_forward(sub, params, cfg)
    if target == sub.center_i:
        return fwd.z_i
    if target == sub.center_j:
        return fwd.z_j
    raise ValueError(f"node {target} is not a center of this pattern")


def predict_subgraphs(
    subs: Sequence[PatternSubgraph], params: Parameters, cfg: ModelConfig, batch_size: int = 256
) -> tuple[np.ndarray, np.ndarray]:
    """Predictions and embedding cosines for many patterns, without recording."""
    preds, coss = [], []
    for start in range(0, len(subs), batch_size):
        out = forward_batch(Tape(grad=False), subs[start : start + batch_size], params, cfg)
        preds.append(out.prediction.value[:, 0])
        coss.append(out.cosine.value[:, 0])
    if not preds:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(preds), np.concatenate(coss)


def node_embeddings(
    graph: Graph, params: Parameters, cfg: ModelConfig, batch_size: int = 256
) -> np.ndarray:
    """Per-node embedding, taken as the first-center embedding of ``(v, partner)``.

    With neighbour attention a center's embedding does not depend on its
    partner, so this is the embedding the node has in every pattern.  The
    partner is the lowest-index other node.
    """
    n = graph.n_nodes
    if n < 2:
        raise ValueError("need at least two nodes")
    subs = [induce_pattern_subgraph(graph, v, 1 if v == 0 else 0) for v in range(n)]
    rows = []
    for start in range(0, n, batch_size):
        out = forward_batch(Tape(grad=False), subs[start : start + batch_size], params, cfg)
        rows.append(out.z_i.value)
    return np.vstack(rows)
