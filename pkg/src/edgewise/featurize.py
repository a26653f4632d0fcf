"""Dataset construction: triad features, one-hot encodings and Tanimoto targets."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graph import Pattern

log = logging.getLogger(__name__)

N_CLASSES = 7
CT_DIM = N_CLASSES**3
AMBIGUOUS = frozenset("BJOUXZ")
N_ENZYME_CLASSES = 7


class CTWarning(UserWarning):
    """No complete residue triad could be counted."""


def load_ct_groups(path=None) -> dict[str, int]:
    """Residue -> class (1..7) map from a two-column TSV (class, residues)."""
    if path is None:
        text = resources.files("edgewise").joinpath("data/ct_groups.tsv").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    table: dict[str, int] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cls, residues = line.split("\t")
        for aa in residues.strip().upper():
            if aa in table:
                raise ValueError(f"residue {aa} assigned to two classes")
            table[aa] = int(cls)
    if sorted(set(table.values())) != list(range(1, N_CLASSES + 1)):
        raise ValueError("grouping must use classes 1..7")
    return table


DEFAULT_GROUPS = load_ct_groups()


def triad_index(c1: int, c2: int, c3: int) -> int:
    return 49 * (c1 - 1) + 7 * (c2 - 1) + (c3 - 1)


def ct_counts(sequence: str, groups: Mapping[str, int] = DEFAULT_GROUPS) -> np.ndarray:
    """Raw triad counts over windows whose three residues all have a class."""
    seq = sequence.strip().upper()
    classes = []
    for pos, aa in enumerate(seq):
        if aa in groups:
            classes.append(groups[aa])
        elif aa in AMBIGUOUS:
            classes.append(0)
        else:
            raise ValueError(f"invalid residue {aa!r} at position {pos}")
    counts = np.zeros(CT_DIM)
    for a, b, c in zip(classes, classes[1:], classes[2:]):
        if a and b and c:
            counts[triad_index(a, b, c)] += 1
    return counts


def ct_features(
    sequence: str, groups: Mapping[str, int] = DEFAULT_GROUPS, normalize: bool = True
) -> np.ndarray:
    """343-dim composition-of-triads vector.

    Windows touching an ambiguity code (B, J, O, U, X, Z) are skipped.  With
    ``normalize`` counts are divided by the number of counted windows.  If no
    window counts, the zero vector is returned and a :class:`CTWarning` issued.
    """
    counts = ct_counts(sequence, groups)
    total = counts.sum()
    if total == 0:
        warnings.warn(f"no valid triad in sequence of length {len(sequence)}", CTWarning)
        return counts
    return counts / total if normalize else counts


@dataclass(frozen=True)
class Fingerprint:
    id: str
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1 or not np.isin(bits, (0, 1)).all():
            raise ValueError(f"fingerprint {self.id!r} must be a 1-D 0/1 vector")
        object.__setattr__(self, "bits", bits.astype(bool))

    @classmethod
    def from_string(cls, id: str, bitstring: str) -> "Fingerprint":
        if not bitstring or set(bitstring) - {"0", "1"}:
            raise ValueError(f"fingerprint {id!r}: expected a 0/1 string")
        return cls(id, np.frombuffer(bitstring.encode(), dtype=np.uint8) - ord("0"))

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)


def tanimoto(a: Fingerprint | np.ndarray, b: Fingerprint | np.ndarray) -> float:
    """|a AND b| / |a OR b| for binary fingerprints."""
    av = np.asarray(a.bits if isinstance(a, Fingerprint) else a, dtype=bool)
    bv = np.asarray(b.bits if isinstance(b, Fingerprint) else b, dtype=bool)
    if av.shape != bv.shape:
        raise ValueError(f"fingerprint lengths differ: {av.shape} vs {bv.shape}")
    union = np.count_nonzero(av | bv)
    if union == 0:
        raise ValueError("tanimoto undefined for two all-zero fingerprints")
    return np.count_nonzero(av & bv) / union


def tanimoto_matrix(fingerprints: Sequence[Fingerprint]) -> np.ndarray:
    bits = np.array([f.bits for f in fingerprints], dtype=np.float64)
    inter = bits @ bits.T
    pop = bits.sum(axis=1)
    union = pop[:, None] + pop[None, :] - inter
    if (union == 0).any():
        raise ValueError("tanimoto undefined for two all-zero fingerprints")
    return inter / union


def one_hot_nodes(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("need at least one node")
    return np.eye(n)


def enzyme_edge_features(ec_classes: Iterable[int]) -> np.ndarray:
    """Presence vector over the seven top-level EC classes."""
    classes = list(ec_classes)
    if not classes:
        raise ValueError("need at least one EC class")
    out = np.zeros(N_ENZYME_CLASSES)
    for c in classes:
        if not (isinstance(c, (int, np.integer)) and 1 <= c <= N_ENZYME_CLASSES):
            raise ValueError(f"EC class must be an integer in 1..7, got {c!r}")
        out[c - 1] = 1.0
    return out


def pairwise_tanimoto_targets(
    fingerprints: Sequence[Fingerprint], pairs: Iterable[tuple[str, str]]
) -> list[Pattern]:
    """Label each pair with the Tanimoto of its fingerprints.

    Pairs involving an id without a fingerprint become unlabelled patterns.
    Repeated unordered pairs are dropped with a warning, keeping the first.
    """
    by_id = {f.id: f for f in fingerprints}
    seen = set()
    dropped = 0
    out = []
    for a, b in pairs:
        key = frozenset((a, b))
        if key in seen:
            dropped += 1
            continue
        seen.add(key)
        if a in by_id and b in by_id:
            out.append(Pattern(a, b, tanimoto(by_id[a], by_id[b])))
        else:
            out.append(Pattern(a, b, None))
    if dropped:
        warnings.warn(f"dropped {dropped} duplicate pairs")
    return out


def all_pairs(ids: Sequence[str]) -> list[tuple[str, str]]:
    return [(ids[a], ids[b]) for a in range(len(ids)) for b in range(a + 1, len(ids))]
