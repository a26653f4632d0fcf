"""Hybrid loss, mini-batch training with early stopping, and k-fold splits."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .graph import Graph, Pattern, PatternSubgraph, induce_pattern_subgraph
from .metrics import evaluate, f1_max, mae, precision_recall_f1
from .model import ModelConfig, forward_batch, init_params, predict_subgraphs
from .tensor import ADAM_DEFAULTS, Node, Parameters, Tape, adam_step, backward

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-7
MONITORS = {"loss": "min", "mae": "min", "f1": "max", "f1max": "max"}
COMPONENTS = ("l_sup", "l_cos", "l_cospred")


@dataclass
class TrainConfig:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    epochs: int = 300
    batch_size: int = 32
    lr: float = ADAM_DEFAULTS["lr"]
    beta1: float = ADAM_DEFAULTS["beta1"]
    beta2: float = ADAM_DEFAULTS["beta2"]
    eps: float = ADAM_DEFAULTS["eps"]
    seed: int = 0
    patience: int = 30
    task: str = "regression"
    folds: int = 5
    repeats: int = 10
    val_fraction: float = 0.16
    monitor: str = "loss"
    exclude_center_edge: bool = False
    runs: int = 1
    model: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.alpha == self.beta == self.gamma == 0:
            raise ValueError("at least one loss weight must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 0 or self.runs < 1:
            raise ValueError("epochs, batch_size and runs must be >= 1, patience >= 0")
        if self.folds < 2 or self.repeats < 1:
            raise ValueError("cross-validation needs folds >= 2 and repeats >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")
        if self.monitor not in MONITORS:
            raise ValueError(f"monitor must be one of {sorted(MONITORS)}")
        if self.monitor in ("f1", "f1max") and self.task != "binary-classification":
            raise ValueError(f"monitor {self.monitor!r} needs the binary-classification task")
        allowed = {f.name for f in dataclasses.fields(ModelConfig)} - {"input_dim", "edge_dim", "task"}
        bad = set(self.model) - allowed
        if bad:
            raise ValueError(f"unsupported model keys: {sorted(bad)}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def model_config(self, graph: Graph) -> ModelConfig:
        return ModelConfig(
            input_dim=graph.feature_dim, edge_dim=graph.edge_dim, task=self.task, **self.model
        )


def cosine_embedding_target(z_i, z_j) -> float:
    """Cosine similarity of two embeddings; 0 (with a warning) if either is zero."""
    a = np.asarray(z_i, dtype=np.float64).ravel()
    b = np.asarray(z_j, dtype=np.float64).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        warnings.warn("cosine of a zero-norm embedding taken as 0")
        return 0.0
    return float(a @ b / (na * nb))


def loss_terms(
    tp: Tape,
    prediction: Node,
    cosine: Node,
    labels: np.ndarray,
    cfg: TrainConfig,
) -> tuple[Node, dict[str, Node]]:
    """Batch-mean hybrid loss.

    ``labels`` holds one entry per pattern with NaN for unlabelled patterns.
    The two supervised terms are summed over labelled rows only (gathered, so
    unlabelled rows never reach the label path) and all three are divided by
    the full batch size.
    """
    n = prediction.shape[0]
    labels = np.asarray(labels, dtype=np.float64).reshape(n)
    labeled = np.flatnonzero(~np.isnan(labels))
    classify = cfg.task == "binary-classification"
    if classify and not np.isin(labels[labeled], (0.0, 1.0)).all():
        raise ValueError("classification labels must be 0 or 1")

    if classify:
        cos_prob = tp.scale(cosine, 0.5, 0.5)
        t3 = tp.bce(prediction, _clamp(tp, cos_prob))
    else:
        t3 = tp.square(tp.sub(prediction, cosine))
    terms = {"l_cospred": tp.scale(tp.sum(t3), 1.0 / n)}

    if len(labeled):
        y = tp.constant(labels[labeled][:, None])
        pred_l = tp.gather(prediction, labeled)
        cos_l = tp.gather(cosine, labeled)
        if classify:
            t1 = tp.bce(pred_l, y)
            t2 = tp.bce(tp.gather(cos_prob, labeled), y)
        else:
            t1 = tp.square(tp.sub(pred_l, y))
            t2 = tp.square(tp.sub(cos_l, y))
        terms["l_sup"] = tp.scale(tp.sum(t1), 1.0 / n)
        terms["l_cos"] = tp.scale(tp.sum(t2), 1.0 / n)
    else:
        terms["l_sup"] = tp.constant(0.0)
        terms["l_cos"] = tp.constant(0.0)

    total = None
    for weight, name in ((cfg.alpha, "l_sup"), (cfg.beta, "l_cos"), (cfg.gamma, "l_cospred")):
        if weight == 0:
            continue
        part = tp.scale(terms[name], weight)
        total = part if total is None else tp.add(total, part)
    return total, {k: terms[k] for k in COMPONENTS}


def _clamp(tp: Tape, p: Node) -> Node:
    # soft targets in BCE are clamped too; the clamp region passes no gradient
    v = p.value
    inside = (v >= PROB_CLAMP) & (v <= 1 - PROB_CLAMP)
    return tp._op(np.clip(v, PROB_CLAMP, 1 - PROB_CLAMP), (p,), lambda g: (g * inside,))


def composite_loss(
    prediction: float, y_tilde: float, label: float | None, cfg: TrainConfig
) -> tuple[float, dict[str, float]]:
    """Scalar hybrid loss for one pattern."""
    tp = Tape(grad=False)
    total, parts = loss_terms(
        tp,
        tp.constant(prediction),
        tp.constant(y_tilde),
        np.array([np.nan if label is None else label]),
        cfg,
    )
    return total.item(), {k: v.item() for k, v in parts.items()}


# -- training ------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    split: str
    total: float
    l_sup: float
    l_cos: float
    l_cospred: float
    monitor: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_value: float = math.nan
    stop_reason: str = ""

    def split(self, name: str) -> list[EpochRecord]:
        return [r for r in self.records if r.split == name]

    def to_csv(self) -> str:
        lines = ["epoch,split,total,l_sup,l_cos,l_cospred"]
        for r in self.records:
            lines.append(f"{r.epoch},{r.split},{r.total!r},{r.l_sup!r},{r.l_cos!r},{r.l_cospred!r}")
        return "\n".join(lines) + "\n"


class SubgraphCache:
    def __init__(self, graph: Graph, exclude_center_edge: bool = False):
        self.graph = graph
        self.exclude = exclude_center_edge
        self._cache: dict[tuple[int, int], PatternSubgraph] = {}

    def __call__(self, p: Pattern) -> PatternSubgraph:
        key = (self.graph.index(p.i), self.graph.index(p.j))
        sub = self._cache.get(key)
        if sub is None:
            sub = induce_pattern_subgraph(self.graph, *key, exclude_center_edge=self.exclude)
            self._cache[key] = sub
        return sub

    def many(self, patterns: Sequence[Pattern]) -> list[PatternSubgraph]:
        return [self(p) for p in patterns]


def _labels(patterns: Sequence[Pattern]) -> np.ndarray:
    return np.array([np.nan if p.label is None else float(p.label) for p in patterns])


@dataclass
class SplitEval:
    total: float
    parts: dict[str, float]
    predictions: np.ndarray
    cosines: np.ndarray


def evaluate_split(
    subs: Sequence[PatternSubgraph],
    labels: np.ndarray,
    params: Parameters,
    mcfg: ModelConfig,
    cfg: TrainConfig,
) -> SplitEval:
    preds, coss = predict_subgraphs(subs, params, mcfg)
    tp = Tape(grad=False)
    total, parts = loss_terms(tp, tp.constant(preds[:, None]), tp.constant(coss[:, None]), labels, cfg)
    return SplitEval(total.item(), {k: v.item() for k, v in parts.items()}, preds, coss)


def monitor_value(ev: SplitEval, labels: np.ndarray, cfg: TrainConfig) -> float:
    known = ~np.isnan(labels)
    if cfg.monitor == "loss":
        return ev.total
    if not known.any():
        return math.nan
    y, p = labels[known], ev.predictions[known]
    if cfg.monitor == "mae":
        return mae(p, y)
    if cfg.monitor == "f1":
        return precision_recall_f1(p, y, 0.5)[2]
    return f1_max(p, y)[0] if (y == 1).any() else 0.0


def _improved(value: float, best: float, mode: str) -> bool:
    if math.isnan(value):
        return False
    if math.isnan(best):
        return True
    return value < best if mode == "min" else value > best


def train(
    graph: Graph,
    patterns: Sequence[Pattern],
    cfg: TrainConfig,
    val_patterns: Sequence[Pattern] | None = None,
    init: Parameters | None = None,
    on_epoch: Callable[[int, Parameters], None] | None = None,
) -> tuple[Parameters, TrainHistory]:
    """Mini-batch Adam training; returns the parameters of the best monitored epoch.

    The monitor runs on ``val_patterns`` when given, otherwise on the training
    set.  Training stops once ``patience`` consecutive epochs fail to improve.
    """
    if not any(p.labeled for p in patterns):
        raise ValueError("no labelled pattern in the training set: nothing to supervise")
    mcfg = cfg.model_config(graph)
    cache = SubgraphCache(graph, cfg.exclude_center_edge)
    train_subs = cache.many(patterns)
    train_labels = _labels(patterns)
    val_subs = cache.many(val_patterns) if val_patterns else None
    val_labels = _labels(val_patterns) if val_patterns else None

    params = init.copy() if init is not None else init_params(mcfg, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    mode = MONITORS[cfg.monitor]
    history = TrainHistory()
    best_params = params.copy()
    stale = 0
    n = len(train_subs)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = [train_subs[k] for k in idx]
            tp = Tape()
            out = forward_batch(tp, batch, params, mcfg)
            total, _ = loss_terms(tp, out.prediction, out.cosine, train_labels[idx], cfg)
            if not np.isfinite(total.value).all():
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            grads = backward(tp, total)
            adam_step(params, grads, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)

        tr = evaluate_split(train_subs, train_labels, params, mcfg, cfg)
        tr_monitor = monitor_value(tr, train_labels, cfg)
        history.records.append(EpochRecord(epoch, "train", tr.total, **tr.parts, monitor=tr_monitor))
        current = tr_monitor
        if val_subs:
            va = evaluate_split(val_subs, val_labels, params, mcfg, cfg)
            current = monitor_value(va, val_labels, cfg)
            history.records.append(EpochRecord(epoch, "validation", va.total, **va.parts, monitor=current))
        if on_epoch is not None:
            on_epoch(epoch, params)

        if _improved(current, history.best_value, mode):
            history.best_value, history.best_epoch = current, epoch
            best_params = params.copy()
            stale = 0
        else:
            stale += 1
            if stale > cfg.patience:
                history.stop_reason = f"no improvement for {stale} epoch(s)"
                break
        log.debug("epoch %d train=%.6g monitor=%.6g", epoch, tr.total, current)
    else:
        history.stop_reason = "epoch budget exhausted"
    return best_params, history


def train_runs(
    graph: Graph,
    patterns: Sequence[Pattern],
    cfg: TrainConfig,
    val_patterns: Sequence[Pattern] | None = None,
) -> tuple[Parameters, TrainHistory, int]:
    """Train ``cfg.runs`` times with seeds ``seed, seed+1, ...``; keep the best monitored run."""
    mode = MONITORS[cfg.monitor]
    best = None
    for r in range(cfg.runs):
        params, hist = train(graph, patterns, cfg.replace(seed=cfg.seed + r), val_patterns)
        if best is None or _improved(hist.best_value, best[1].best_value, mode):
            best = (params, hist, r)
    return best


# -- splitting -------------------------------------------------------------------

@dataclass
class Split:
    repeat: int
    fold: int
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def to_dict(self) -> dict:
        return {
            "repeat": self.repeat,
            "fold": self.fold,
            "train": self.train.tolist(),
            "validation": self.validation.tolist(),
            "test": self.test.tolist(),
        }


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def kfold_split(
    n_patterns: int, k: int, repeats: int = 1, seed: int = 0, val_fraction: float = 0.16
) -> list[Split]:
    """Repeated k-fold partition with a seeded validation carve-out per split."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n_patterns:
        raise ValueError(f"k={k} exceeds the number of patterns ({n_patterns})")
    splits = []
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        folds = np.array_split(rng.permutation(n_patterns), k)
        for f in range(k):
            test = np.sort(folds[f])
            rest = np.sort(np.concatenate([folds[g] for g in range(k) if g != f]))
            n_val = round_half_up(val_fraction * len(rest))
            picked = rng.permutation(len(rest))[:n_val]
            val_mask = np.zeros(len(rest), dtype=bool)
            val_mask[picked] = True
            splits.append(Split(r, f, rest[~val_mask], rest[val_mask], test))
    return splits


def split_seed(seed: int, repeat: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, repeat, fold]).generate_state(1)[0])


def run_split(graph: Graph, patterns: Sequence[Pattern], cfg: TrainConfig, split: Split) -> dict:
    """Train on one split and report test metrics over its labelled patterns."""
    pick = lambda idx: [patterns[k] for k in idx]
    run_cfg = cfg.replace(seed=split_seed(cfg.seed, split.repeat, split.fold))
    params, hist, _ = train_runs(graph, pick(split.train), run_cfg, pick(split.validation) or None)
    mcfg = cfg.model_config(graph)
    cache = SubgraphCache(graph, cfg.exclude_center_edge)
    test = [p for p in pick(split.test) if p.labeled]
    if not test:
        raise ValueError(f"split r{split.repeat} f{split.fold} has no labelled test pattern")
    preds, _ = predict_subgraphs(cache.many(test), params, mcfg)
    report = evaluate(preds, [p.label for p in test], cfg.task)
    return {
        "repeat": split.repeat,
        "fold": split.fold,
        "best_epoch": hist.best_epoch,
        "metrics": report.to_dict(),
    }


def aggregate(results: Sequence[dict]) -> dict:
    keys = sorted({k for r in results for k, v in r["metrics"].items() if v is not None})
    out = {}
    for k in keys:
        vals = np.array([r["metrics"][k] for r in results if r["metrics"].get(k) is not None], dtype=float)
        out[k] = {
            "mean": float(vals.mean()),
            "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
            "n": int(len(vals)),
        }
    return out
