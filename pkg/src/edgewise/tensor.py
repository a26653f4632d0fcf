"""Dense float64 matrices with a recording tape for reverse-mode gradients.

Every value on the tape is a 2-D ``numpy.float64`` array.  Operations are
methods of :class:`Tape`; each appends a :class:`Node` holding the forward
value and a vector-Jacobian closure.  ``backward`` walks the recorded list in
reverse, so accumulation order is fixed and results are bitwise reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

ADAM_DEFAULTS = {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}
CHECKPOINT_VERSION = 1


def as_dense(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ValueError(f"dense values must be 2-D, got shape {arr.shape}")
    return arr


def glorot_init(rows: int, cols: int, seed: int) -> np.ndarray:
    """Uniform Glorot matrix in ``[-a, a]`` with ``a = sqrt(6 / (rows + cols))``."""
    if rows < 1 or cols < 1:
        raise ValueError(f"invalid shape ({rows}, {cols})")
    bound = math.sqrt(6.0 / (rows + cols))
    rng = np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=(rows, cols))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


class Node:
    __slots__ = ("value", "parents", "vjp", "grad", "requires_grad", "name")

    def __init__(self, value, parents=(), vjp=None, requires_grad=False, name=None):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ValueError(f"item() needs a 1x1 node, got {self.value.shape}")
        return float(self.value[0, 0])

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(shape={self.value.shape})"


class Tape:
    """Ordered record of primitive operations.

    With ``grad=False`` nothing is recorded and the tape is a plain forward
    evaluator; this is what inference and finite differences use.
    """

    def __init__(self, grad: bool = True):
        self.grad = grad
        self.nodes: list[Node] = []
        self._params: dict[str, Node] = {}

    # -- leaves --------------------------------------------------------
    def constant(self, value) -> Node:
        return Node(as_dense(value))

    def variable(self, value, name: str | None = None) -> Node:
        node = Node(as_dense(value), requires_grad=self.grad, name=name)
        if self.grad:
            self.nodes.append(node)
        return node

    def param(self, params: "Parameters", name: str) -> Node:
        node = self._params.get(name)
        if node is None:
            node = self.variable(params[name], name=name)
            self._params[name] = node
        return node

    @property
    def param_nodes(self) -> dict[str, Node]:
        return self._params

    def _op(self, value: np.ndarray, parents: tuple, vjp: Callable) -> Node:
        if self.grad and any(p.requires_grad for p in parents):
            node = Node(value, parents, vjp, True)
            self.nodes.append(node)
            return node
        return Node(value)

    # -- linear algebra ------------------------------------------------
    def affine(self, x: Node, w: Node, b: Node | None = None) -> Node:
        """``x @ w + b`` with ``b`` a single row broadcast over rows of ``x``."""
        xv, wv = x.value, w.value
        if xv.shape[1] != wv.shape[0]:
            raise ValueError(f"affine shape mismatch {xv.shape} @ {wv.shape}")
        out = xv @ wv
        if b is not None:
            if b.value.shape != (1, wv.shape[1]):
                raise ValueError(f"bias shape {b.value.shape} != (1, {wv.shape[1]})")
            out = out + b.value

        def vjp(g):
            grads = [g @ wv.T, xv.T @ g]
            if b is not None:
                grads.append(g.sum(axis=0, keepdims=True))
            return grads

        parents = (x, w) if b is None else (x, w, b)
        return self._op(out, parents, vjp)

    def add(self, a: Node, b: Node) -> Node:
        _same_shape(a, b)
        return self._op(a.value + b.value, (a, b), lambda g: (g, g))

    def sub(self, a: Node, b: Node) -> Node:
        _same_shape(a, b)
        return self._op(a.value - b.value, (a, b), lambda g: (g, -g))

    def mul(self, a: Node, b: Node) -> Node:
        """Hadamard product; ``b`` may also be a single column scaling each row of ``a``."""
        av, bv = a.value, b.value
        if av.shape == bv.shape:
            return self._op(av * bv, (a, b), lambda g: (g * bv, g * av))
        if bv.shape == (av.shape[0], 1):
            return self._op(
                av * bv, (a, b), lambda g: (g * bv, (g * av).sum(axis=1, keepdims=True))
            )
        raise ValueError(f"mul shape mismatch {av.shape} * {bv.shape}")

    def scale(self, a: Node, c: float, shift: float = 0.0) -> Node:
        """``c * a + shift`` for Python scalars ``c`` and ``shift``."""
        return self._op(a.value * c + shift, (a,), lambda g: (g * c,))

    def square(self, a: Node) -> Node:
        av = a.value
        return self._op(av * av, (a,), lambda g: (2.0 * av * g,))

    # -- elementwise nonlinearities -------------------------------------
    def sigmoid(self, a: Node) -> Node:
        s = _sigmoid(a.value)
        return self._op(s, (a,), lambda g: (g * s * (1.0 - s),))

    def tanh(self, a: Node) -> Node:
        t = np.tanh(a.value)
        return self._op(t, (a,), lambda g: (g * (1.0 - t * t),))

    def relu(self, a: Node) -> Node:
        mask = a.value > 0
        return self._op(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))

    # -- reductions ----------------------------------------------------
    def row_sum(self, a: Node) -> Node:
        shape = a.value.shape
        return self._op(
            a.value.sum(axis=1, keepdims=True),
            (a,),
            lambda g: (np.broadcast_to(g, shape).copy(),),
        )

    def sum(self, a: Node) -> Node:
        shape = a.value.shape
        return self._op(
            np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),)
        )

    def mean(self, a: Node) -> Node:
        n = a.value.size
        return self.scale(self.sum(a), 1.0 / n)

    # -- normalisation ---------------------------------------------------
    def softmax_rows(self, a: Node) -> Node:
        z = a.value - a.value.max(axis=1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=1, keepdims=True)

        def vjp(g):
            return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

        return self._op(s, (a,), vjp)

    def segment_softmax(self, a: Node, segments: np.ndarray, n_segments: int) -> Node:
        """Softmax of a single column taken separately within each segment."""
        av = a.value
        if av.ndim != 2 or av.shape[1] != 1 or len(segments) != av.shape[0]:
            raise ValueError("segment_softmax expects an (n, 1) column and n segment ids")
        col = av[:, 0]
        peak = np.full(n_segments, -np.inf)
        np.maximum.at(peak, segments, col)
        e = np.exp(col - peak[segments])
        total = np.zeros(n_segments)
        np.add.at(total, segments, e)
        s = (e / total[segments])[:, None]

        def vjp(g):
            gs = (g * s)[:, 0]
            acc = np.zeros(n_segments)
            np.add.at(acc, segments, gs)
            return (s * (g - acc[segments][:, None]),)

        return self._op(s, (a,), vjp)

    def segment_sum(self, a: Node, segments: np.ndarray, n_segments: int) -> Node:
        """Row sums grouped by segment id; empty segments give zero rows."""
        av = a.value
        out = np.zeros((n_segments, av.shape[1]))
        np.add.at(out, segments, av)
        return self._op(out, (a,), lambda g: (g[segments],))

    # -- structure -------------------------------------------------------
    def gather(self, a: Node, index: np.ndarray) -> Node:
        index = np.asarray(index, dtype=np.intp)
        shape = a.value.shape

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, index, g)
            return (out,)

        return self._op(a.value[index], (a,), vjp)

    def concat(self, parts: Sequence[Node]) -> Node:
        """Column-wise concatenation."""
        rows = {p.value.shape[0] for p in parts}
        if len(rows) != 1:
            raise ValueError(f"concat row mismatch {sorted(rows)}")
        widths = np.cumsum([0] + [p.value.shape[1] for p in parts])

        def vjp(g):
            return tuple(g[:, widths[k] : widths[k + 1]] for k in range(len(parts)))

        return self._op(np.hstack([p.value for p in parts]), tuple(parts), vjp)

    def minmax(self, a: Node, b: Node) -> Node:
        """``[min(a, b) ; max(a, b)]`` elementwise; ties split the gradient evenly."""
        _same_shape(a, b)
        av, bv = a.value, b.value
        lo = np.minimum(av, bv)
        hi = np.maximum(av, bv)
        a_low = np.where(av < bv, 1.0, np.where(av > bv, 0.0, 0.5))
        width = av.shape[1]

        def vjp(g):
            g_lo, g_hi = g[:, :width], g[:, width:]
            ga = g_lo * a_low + g_hi * (1.0 - a_low)
            gb = g_lo * (1.0 - a_low) + g_hi * a_low
            return ga, gb

        return self._op(np.hstack([lo, hi]), (a, b), vjp)

    # -- similarity and losses --------------------------------------------
    def cosine_rows(self, a: Node, b: Node) -> Node:
        """Row-wise cosine similarity as an (n, 1) column.

        A row with zero norm on either side yields 0 and passes no gradient.
        """
        _same_shape(a, b)
        av, bv = a.value, b.value
        na = np.sqrt((av * av).sum(axis=1, keepdims=True))
        nb = np.sqrt((bv * bv).sum(axis=1, keepdims=True))
        ok = (na > 0) & (nb > 0)
        na_s = np.where(ok, na, 1.0)
        nb_s = np.where(ok, nb, 1.0)
        dot = (av * bv).sum(axis=1, keepdims=True)
        cos = np.where(ok, dot / (na_s * nb_s), 0.0)

        def vjp(g):
            gg = np.where(ok, g, 0.0)
            ga = gg * (bv / (na_s * nb_s) - cos * av / (na_s * na_s))
            gb = gg * (av / (na_s * nb_s) - cos * bv / (nb_s * nb_s))
            return ga, gb

        return self._op(cos, (a, b), vjp)

    def bce(self, p: Node, target: Node, clamp: float = 1e-7) -> Node:
        """Elementwise binary cross-entropy ``-(t log p + (1 - t) log(1 - p))``.

        ``p`` is clamped to ``[clamp, 1 - clamp]``; the clamped region carries
        no gradient to ``p``.  ``target`` may itself be a differentiable node
        (soft targets).
        """
        _same_shape(p, target)
        pv, tv = p.value, target.value
        inside = (pv >= clamp) & (pv <= 1.0 - clamp)
        pc = np.clip(pv, clamp, 1.0 - clamp)
        log_p, log_q = np.log(pc), np.log1p(-pc)
        out = -(tv * log_p + (1.0 - tv) * log_q)

        def vjp(g):
            gp = np.where(inside, g * (-(tv / pc) + (1.0 - tv) / (1.0 - pc)), 0.0)
            gt = g * (log_q - log_p)
            return gp, gt

        return self._op(out, (p, target), vjp)


def _same_shape(a: Node, b: Node) -> None:
    if a.value.shape != b.value.shape:
        raise ValueError(f"shape mismatch {a.value.shape} vs {b.value.shape}")


def backward(tape: Tape, output: Node) -> dict[str, np.ndarray]:
    """Accumulate d(output)/d(node) over the tape and return parameter gradients.

    Parameters registered through :meth:`Tape.param` that the output does not
    depend on receive zero gradients.
    """
    if output.value.shape != (1, 1):
        raise ValueError(f"backward needs a scalar output, got shape {output.value.shape}")
    for node in tape.nodes:
        node.grad = None
    if output.requires_grad:
        output.grad = np.ones((1, 1))
    for node in reversed(tape.nodes):
        g = node.grad
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.array(pg, dtype=np.float64, copy=True)
            else:
                parent.grad += pg
    return {
        name: (node.grad if node.grad is not None else np.zeros_like(node.value))
        for name, node in tape.param_nodes.items()
    }


@dataclass
class Parameters:
    """Named trainable matrices plus per-matrix Adam state."""

    values: dict[str, np.ndarray] = field(default_factory=dict)
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)
    steps: dict[str, int] = field(default_factory=dict)

    def add(self, name: str, value) -> None:
        value = as_dense(value).copy()
        self.values[name] = value
        self.first_moment[name] = np.zeros_like(value)
        self.second_moment[name] = np.zeros_like(value)
        self.steps[name] = 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __iter__(self):
        return iter(self.values)

    def names(self) -> list[str]:
        return list(self.values)

    def copy(self) -> "Parameters":
        return Parameters(
            {k: v.copy() for k, v in self.values.items()},
            {k: v.copy() for k, v in self.first_moment.items()},
            {k: v.copy() for k, v in self.second_moment.items()},
            dict(self.steps),
        )

    def size(self) -> int:
        return int(sum(v.size for v in self.values.values()))


def adam_step(
    params: Parameters,
    grads: dict[str, np.ndarray],
    lr: float = ADAM_DEFAULTS["lr"],
    beta1: float = ADAM_DEFAULTS["beta1"],
    beta2: float = ADAM_DEFAULTS["beta2"],
    eps: float = ADAM_DEFAULTS["eps"],
) -> Parameters:
    """Bias-corrected Adam update, applied in place and returned for chaining."""
    for name in params.names():
        g = grads.get(name)
        if g is None:
            continue
        p = params.values[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, expected {p.shape}")
        t = params.steps[name] + 1
        m = params.first_moment[name]
        v = params.second_moment[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
        params.steps[name] = t
    return params


@dataclass
class GradCheckReport:
    max_error: dict[str, float]
    tol: float
    diagnostic: str | None = None

    @property
    def worst(self) -> float:
        return max(self.max_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.diagnostic is None and self.worst < self.tol


def finite_diff_check(
    params: Parameters,
    loss_fn: Callable[[Tape, Parameters], Node],
    h: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
    names: Iterable[str] | None = None,
) -> GradCheckReport:
    """Compare tape gradients with central differences, entry by entry.

    The relative error of an entry is ``|a - n| / max(|a|, |n|, floor)``; the
    floor keeps round-off on vanishing gradients from reading as failure.
    ``loss_fn`` must build its scalar loss on the tape it is given.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    tape = Tape()
    loss = loss_fn(tape, params)
    if not np.isfinite(loss.value).all():
        return GradCheckReport({}, tol, f"non-finite loss {loss.value.ravel()[0]!r}")
    analytic = backward(tape, loss)
    report: dict[str, float] = {}
    for name in names if names is not None else params.names():
        value = params.values[name]
        a = analytic.get(name, np.zeros_like(value))
        worst = 0.0
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            value[idx] = orig + h
            up = loss_fn(Tape(grad=False), params).item()
            value[idx] = orig - h
            down = loss_fn(Tape(grad=False), params).item()
            value[idx] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                return GradCheckReport(report, tol, f"non-finite loss perturbing {name}{idx}")
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(a[idx]), abs(numeric), floor)
            worst = max(worst, abs(a[idx] - numeric) / denom)
        report[name] = worst
    return GradCheckReport(report, tol)


# -- checkpoints ----------------------------------------------------------

def config_hash(config: dict) -> str:
    import hashlib

    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def checkpoint_document(params: Parameters, config: dict) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash(config),
        "config": config,
        "parameters": {
            name: {
                "rows": int(v.shape[0]),
                "cols": int(v.shape[1]),
                "data": [float(x) for x in v.ravel()],
            }
            for name, v in sorted(params.values.items())
        },
    }


def dumps_checkpoint(params: Parameters, config: dict) -> str:
    # float repr is the shortest decimal that round-trips
    return json.dumps(checkpoint_document(params, config), indent=1, sort_keys=True) + "\n"


def loads_checkpoint(text: str, expected_config: dict | None = None) -> tuple[Parameters, dict]:
    doc = json.loads(text)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    config = doc.get("config", {})
    if doc.get("config_hash") != config_hash(config):
        raise ValueError("checkpoint config_hash does not match its config")
    if expected_config is not None and config_hash(expected_config) != doc["config_hash"]:
        raise ValueError("checkpoint was written for a different model configuration")
    params = Parameters()
    for name, entry in doc["parameters"].items():
        data = np.asarray(entry["data"], dtype=np.float64)
        if data.size != entry["rows"] * entry["cols"]:
            raise ValueError(f"parameter {name!r}: data length does not match rows*cols")
        params.add(name, data.reshape(entry["rows"], entry["cols"]))
    return params, config
