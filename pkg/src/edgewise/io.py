"""TSV/JSON readers and writers for graphs, patterns, features and manifests.

Floats are written with ``repr`` (shortest round-trip decimal), so every
writer/reader pair is lossless.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .featurize import Fingerprint
from .graph import Graph, Pattern

NODES_FILE = "nodes.tsv"
EDGES_FILE = "edges.tsv"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def fmt(x: float) -> str:
    return repr(float(x))


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _rows(path) -> Iterator[tuple[int, list[str]]]:
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            yield lineno, line.split("\t")


def _floats(path, lineno: int, cells: Sequence[str]) -> list[float]:
    try:
        return [float(c) for c in cells]
    except ValueError:
        raise DataError(f"{path}:{lineno}: non-numeric value in {cells!r}") from None


def read_table(path, first: Sequence[str]) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Header plus rows; the header must start with the ``first`` column names."""
    rows = _rows(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise DataError(f"{path}: empty file") from None
    if [h.strip() for h in header[: len(first)]] != list(first):
        raise DataError(f"{path}:{lineno}: header must start with {list(first)}, got {header}")
    body = []
    for lineno, cells in rows:
        if len(cells) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} columns, got {len(cells)}")
        body.append((lineno, cells))
    return header, body


# -- node features -------------------------------------------------------------

def read_node_features(path) -> tuple[list[str], np.ndarray]:
    header, body = read_table(path, ["id"])
    ids = [cells[0] for _, cells in body]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate node ids")
    feats = np.array([_floats(path, ln, cells[1:]) for ln, cells in body]).reshape(len(ids), len(header) - 1)
    return ids, feats


def node_features_text(ids: Sequence[str], feats: np.ndarray) -> str:
    d = feats.shape[1]
    lines = ["\t".join(["id"] + [f"f{c}" for c in range(d)])]
    for node, row in zip(ids, feats):
        lines.append("\t".join([node] + [fmt(x) for x in row]))
    return "\n".join(lines) + "\n"


# -- graphs ----------------------------------------------------------------------

def edges_text(graph: Graph) -> str:
    q = graph.edge_dim
    lines = ["\t".join(["src", "dst"] + [f"e{c}" for c in range(q)])]
    for k, (u, v) in enumerate(graph.edges):
        cells = [graph.node_ids[u], graph.node_ids[v]]
        if q:
            cells += [fmt(x) for x in graph.edge_features[k]]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def read_edges(path, ids: Sequence[str]) -> tuple[list[tuple[int, int]], np.ndarray | None]:
    header, body = read_table(path, ["src", "dst"])
    index = {x: k for k, x in enumerate(ids)}
    pairs, feats = [], []
    for ln, cells in body:
        try:
            pairs.append((index[cells[0]], index[cells[1]]))
        except KeyError as e:
            raise DataError(f"{path}:{ln}: unknown node id {e.args[0]!r}") from None
        feats.append(_floats(path, ln, cells[2:]))
    q = len(header) - 2
    return pairs, (np.array(feats).reshape(len(pairs), q) if q else None)


def save_graph(graph: Graph, directory) -> list[Path]:
    directory = Path(directory)
    paths = [directory / NODES_FILE, directory / EDGES_FILE]
    atomic_write_text(paths[0], node_features_text(graph.node_ids, graph.node_features))
    atomic_write_text(paths[1], edges_text(graph))
    return paths


def load_graph(directory) -> Graph:
    directory = Path(directory)
    ids, feats = read_node_features(directory / NODES_FILE)
    pairs, efeats = read_edges(directory / EDGES_FILE, ids)
    try:
        return Graph.from_edges(ids, pairs, feats, efeats)
    except ValueError as e:
        raise DataError(f"{directory}: {e}") from None


# -- similarity matrices -------------------------------------------------------------

def read_similarity(path) -> tuple[list[str], np.ndarray]:
    header, body = read_table(path, ["id"])
    ids = header[1:]
    if len(body) != len(ids):
        raise DataError(f"{path}: {len(ids)} columns but {len(body)} rows")
    for k, (ln, cells) in enumerate(body):
        if cells[0] != ids[k]:
            raise DataError(f"{path}:{ln}: row id {cells[0]!r} does not match column {ids[k]!r}")
    sim = np.array([_floats(path, ln, cells[1:]) for ln, cells in body]).reshape(len(ids), len(ids))
    return ids, sim


def similarity_text(ids: Sequence[str], sim: np.ndarray) -> str:
    lines = ["\t".join(["id", *ids])]
    for node, row in zip(ids, sim):
        lines.append("\t".join([node] + [fmt(x) for x in row]))
    return "\n".join(lines) + "\n"


# -- patterns --------------------------------------------------------------------

def read_patterns(path) -> list[Pattern]:
    """Rows ``i, j, label``; an empty label marks an unlabelled pattern."""
    header, body = read_table(path, ["i", "j"])
    has_label = len(header) > 2 and header[2].strip() == "label"
    out = []
    for ln, cells in body:
        label = None
        if has_label and cells[2].strip():
            label = _floats(path, ln, [cells[2]])[0]
        try:
            out.append(Pattern(cells[0], cells[1], label))
        except ValueError as e:
            raise DataError(f"{path}:{ln}: {e}") from None
    return out


def patterns_text(patterns: Sequence[Pattern]) -> str:
    lines = ["i\tj\tlabel"]
    for p in patterns:
        lines.append(f"{p.i}\t{p.j}\t{'' if p.label is None else fmt(p.label)}")
    return "\n".join(lines) + "\n"


def predictions_text(patterns: Sequence[Pattern], preds, cosines) -> str:
    lines = ["i\tj\tprediction\tcosine"]
    for p, y, c in zip(patterns, preds, cosines):
        lines.append(f"{p.i}\t{p.j}\t{fmt(y)}\t{fmt(c)}")
    return "\n".join(lines) + "\n"


def read_predictions(path) -> tuple[list[tuple[str, str]], np.ndarray, np.ndarray]:
    _, body = read_table(path, ["i", "j", "prediction", "cosine"])
    pairs = [(c[0], c[1]) for _, c in body]
    vals = np.array([_floats(path, ln, c[2:4]) for ln, c in body]).reshape(len(body), 2)
    return pairs, vals[:, 0], vals[:, 1]


# -- sequences and fingerprints -------------------------------------------------------

def read_fasta(path) -> list[tuple[str, str]]:
    records: list[tuple[str, list[str]]] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                name = line[1:].split()[0] if line[1:].split() else ""
                if not name:
                    raise DataError(f"{path}:{lineno}: empty FASTA header")
                records.append((name, []))
            elif not records:
                raise DataError(f"{path}:{lineno}: sequence data before the first header")
            else:
                records[-1][1].append(line)
    return [(name, "".join(chunks)) for name, chunks in records]


def read_fingerprints(path) -> list[Fingerprint]:
    _, body = read_table(path, ["id", "bits"])
    out = []
    for ln, cells in body:
        try:
            out.append(Fingerprint.from_string(cells[0], cells[1].strip()))
        except ValueError as e:
            raise DataError(f"{path}:{ln}: {e}") from None
    if len({len(f.bits) for f in out}) > 1:
        raise DataError(f"{path}: fingerprints have different lengths")
    return out


def fingerprints_text(fps: Sequence[Fingerprint]) -> str:
    return "id\tbits\n" + "".join(f"{f.id}\t{f.to_string()}\n" for f in fps)


# -- run manifests ------------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    config: str | None
    seed: int | None
    inputs: dict[str, str] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)
    wall_time_s: float = 0.0

    @classmethod
    def for_files(cls, command, config, seed, inputs, artifacts, wall_time_s) -> "RunManifest":
        digest = lambda paths: {str(p): file_digest(p) for p in paths if Path(p).is_file()}
        return cls(command, config and str(config), seed, digest(inputs), digest(artifacts), wall_time_s)

    def write(self, path) -> None:
        write_json(path, asdict(self))

    @classmethod
    def read(cls, path) -> "RunManifest":
        with open(path) as fh:
            return cls(**json.load(fh))

    def verify(self) -> list[str]:
        """Paths whose current digest differs from the recorded one."""
        bad = []
        for table in (self.inputs, self.artifacts):
            for p, d in table.items():
                if not Path(p).is_file() or file_digest(p) != d:
                    bad.append(p)
        return bad
