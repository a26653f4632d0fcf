import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_graph
from edgewise.featurize import Fingerprint
from edgewise.graph import Pattern
from edgewise.io import (
    DataError,
    RunManifest,
    atomic_write_text,
    fingerprints_text,
    load_graph,
    node_features_text,
    patterns_text,
    predictions_text,
    read_fasta,
    read_fingerprints,
    read_node_features,
    read_patterns,
    read_predictions,
    read_similarity,
    save_graph,
    similarity_text,
)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


@pytest.mark.parametrize("q", [0, 3])
def test_graph_round_trip_is_exact(tmp_path, q):
    g = random_graph(np.random.default_rng(q), 9, d=4, q=q)
    save_graph(g, tmp_path)
    back = load_graph(tmp_path)
    assert back.node_ids == g.node_ids
    assert np.array_equal(back.edges, g.edges)
    assert np.array_equal(back.node_features, g.node_features)
    if q:
        assert np.array_equal(back.edge_features, g.edge_features)
    else:
        assert back.edge_dim == 0


def test_graph_rejects_self_loop_with_location(tmp_path):
    write(tmp_path, "nodes.tsv", "id\tf0\na\t1\nb\t2\n")
    write(tmp_path, "edges.tsv", "src\tdst\na\ta\n")
    with pytest.raises(DataError, match="self-loop|loop"):
        load_graph(tmp_path)


def test_unknown_edge_node_reports_line(tmp_path):
    write(tmp_path, "nodes.tsv", "id\tf0\na\t1\nb\t2\n")
    write(tmp_path, "edges.tsv", "src\tdst\na\tb\n\nb\tzz\n")
    with pytest.raises(DataError, match=r"edges.tsv:4: unknown node id 'zz'"):
        load_graph(tmp_path)


def test_non_numeric_feature_reports_line(tmp_path):
    path = write(tmp_path, "n.tsv", "id\tf0\tf1\na\t1\t2\nb\t3\tx\n")
    with pytest.raises(DataError, match=r"n.tsv:3"):
        read_node_features(path)


def test_ragged_row_reports_line(tmp_path):
    path = write(tmp_path, "n.tsv", "id\tf0\na\t1\t2\n")
    with pytest.raises(DataError, match=r"n.tsv:2: expected 2 columns"):
        read_node_features(path)


def test_bad_header_and_empty_file(tmp_path):
    with pytest.raises(DataError, match="header"):
        read_node_features(write(tmp_path, "a.tsv", "name\tf0\na\t1\n"))
    with pytest.raises(DataError, match="empty"):
        read_node_features(write(tmp_path, "b.tsv", "# only a comment\n"))


def test_duplicate_node_ids(tmp_path):
    with pytest.raises(DataError, match="duplicate"):
        read_node_features(write(tmp_path, "a.tsv", "id\tf0\na\t1\na\t2\n"))


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=3, max_size=3))
def test_node_features_float_round_trip(tmp_path_factory, vals):
    path = tmp_path_factory.mktemp("nf") / "n.tsv"
    path.write_text(node_features_text(["x"], np.array([vals])))
    ids, feats = read_node_features(path)
    assert ids == ["x"] and feats[0].tolist() == vals


def test_similarity_round_trip_and_mismatch(tmp_path):
    sim = np.array([[1.0, 0.3], [0.3, 1.0]])
    path = write(tmp_path, "s.tsv", similarity_text(["a", "b"], sim))
    ids, back = read_similarity(path)
    assert ids == ["a", "b"] and np.array_equal(back, sim)
    with pytest.raises(DataError, match="does not match"):
        read_similarity(write(tmp_path, "t.tsv", "id\ta\tb\nb\t1\t0\na\t0\t1\n"))


def test_patterns_round_trip_with_unlabeled(tmp_path):
    pats = [Pattern("a", "b", 0.25), Pattern("b", "c"), Pattern("c", "a", 1.0)]
    back = read_patterns(write(tmp_path, "p.tsv", patterns_text(pats)))
    assert back == pats


def test_patterns_without_label_column(tmp_path):
    back = read_patterns(write(tmp_path, "p.tsv", "i\tj\na\tb\n"))
    assert back == [Pattern("a", "b")]


def test_pattern_self_pair_rejected(tmp_path):
    with pytest.raises(DataError, match="p.tsv:2"):
        read_patterns(write(tmp_path, "p.tsv", "i\tj\tlabel\na\ta\t0.5\n"))


def test_predictions_round_trip(tmp_path):
    pats = [Pattern("a", "b"), Pattern("c", "d")]
    path = write(tmp_path, "pred.tsv", predictions_text(pats, [0.1, 1 / 3], [-0.2, 0.7]))
    pairs, y, c = read_predictions(path)
    assert pairs == [("a", "b"), ("c", "d")]
    assert y.tolist() == [0.1, 1 / 3] and c.tolist() == [-0.2, 0.7]


def test_fasta(tmp_path):
    path = write(tmp_path, "s.fa", ">p1 some description\nACDE\nFG\n\n>p2\nKL\n")
    assert read_fasta(path) == [("p1", "ACDEFG"), ("p2", "KL")]
    with pytest.raises(DataError, match=":1:"):
        read_fasta(write(tmp_path, "bad.fa", "ACDE\n>p\nA\n"))
    with pytest.raises(DataError, match="empty FASTA header"):
        read_fasta(write(tmp_path, "bad2.fa", ">\nA\n"))


def test_fingerprints_round_trip_and_errors(tmp_path):
    fps = [Fingerprint.from_string("a", "0101"), Fingerprint.from_string("b", "1100")]
    back = read_fingerprints(write(tmp_path, "f.tsv", fingerprints_text(fps)))
    assert [f.id for f in back] == ["a", "b"]
    assert all(np.array_equal(x.bits, y.bits) for x, y in zip(back, fps))
    with pytest.raises(DataError, match="different lengths"):
        read_fingerprints(write(tmp_path, "g.tsv", "id\tbits\na\t01\nb\t011\n"))
    with pytest.raises(DataError, match="g2.tsv:3"):
        read_fingerprints(write(tmp_path, "g2.tsv", "id\tbits\na\t01\nb\t0z\n"))


def test_atomic_write_replaces_and_leaves_no_temp(tmp_path):
    path = tmp_path / "sub" / "x.txt"
    atomic_write_text(path, "one")
    atomic_write_text(path, "two")
    assert path.read_text() == "two"
    assert [p.name for p in path.parent.iterdir()] == ["x.txt"]


def test_manifest_round_trip_and_verify(tmp_path):
    inp = write(tmp_path, "in.tsv", "data\n")
    out = write(tmp_path, "out.txt", "result\n")
    m = RunManifest.for_files("train", None, 3, [inp], [out], 0.5)
    m.write(tmp_path / "manifest.json")
    back = RunManifest.read(tmp_path / "manifest.json")
    assert back == m and back.verify() == []
    out.write_text("tampered\n")
    assert back.verify() == [str(out)]
