"""Command line interface.

Exit codes: 0 success, 2 usage or validation error, 3 data error, 4 numeric
failure.  ``EDGEWISE_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io as eio
from .featurize import (
    all_pairs,
    ct_features,
    enzyme_edge_features,
    load_ct_groups,
    one_hot_nodes,
    pairwise_tanimoto_targets,
)
from .graph import Graph, build_knn_graph
from .io import DataError
from .metrics import evaluate, pca2
from .model import ModelConfig, node_embeddings, predict_subgraphs
from .synthetic import make_tanimoto_dataset
from .tensor import dumps_checkpoint, loads_checkpoint
from .training import (
    SubgraphCache,
    TrainConfig,
    aggregate,
    kfold_split,
    run_split,
    train_runs,
)

log = logging.getLogger("edgewise")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


def _checkpoint_config(mcfg: ModelConfig, cfg: TrainConfig) -> dict:
    return {"model": mcfg.to_dict(), "exclude_center_edge": cfg.exclude_center_edge}


def _load_config(args) -> TrainConfig:
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        changes["runs"] = args.runs
    if getattr(args, "exclude_center_edge", False):
        changes["exclude_center_edge"] = True
    if getattr(args, "attend_over", None):
        changes["model"] = {**cfg.model, "attend_over": args.attend_over}
    return cfg.replace(**changes) if changes else cfg


def _resolve(graph: Graph, patterns) -> None:
    bad = [(k, p) for k, p in enumerate(patterns) for x in (p.i, p.j) if x not in graph._index]
    if bad:
        lines = [f"  pattern {k + 1}: ({p.i}, {p.j})" for k, p in bad[:20]]
        raise DataError("patterns reference unknown node ids:\n" + "\n".join(lines))


def _split_validation(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, 0x5EED])
    n_val = int(np.floor(fraction * n + 0.5)) if n > 1 else 0
    perm = rng.permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


# -- commands -----------------------------------------------------------------------

def cmd_knn_graph(args) -> int:
    ids, sim = eio.read_similarity(args.similarity)
    feats = None
    if args.node_features:
        fids, f = eio.read_node_features(args.node_features)
        pos = {x: k for k, x in enumerate(fids)}
        missing = [x for x in ids if x not in pos]
        if missing:
            raise DataError(f"no node features for {missing[:5]}")
        feats = f[[pos[x] for x in ids]]
    else:
        feats = one_hot_nodes(len(ids))
    graph = build_knn_graph(sim, args.k, ids, feats, args.similarity_edge_feature)
    eio.save_graph(graph, args.out)
    deg = graph.degrees()
    print(f"{graph.n_nodes} nodes, {graph.n_edges} edges; degree min {deg.min()} "
          f"mean {deg.mean():.2f} max {deg.max()}")
    return 0


def _ec_class(token: str, where: str) -> int:
    m = re.match(r"^(?:EC[: ]?)?(\d+)", token.strip())
    if not m:
        raise DataError(f"{where}: cannot read EC number {token!r}")
    return int(m.group(1))


def cmd_reaction_graph(args) -> int:
    _, body = eio.read_table(args.reactions, ["src", "dst", "ec"])
    ids: list[str] = []
    seen = set()
    classes: dict[tuple[str, str], set[int]] = {}
    for ln, (a, b, ec) in body:
        if a == b:
            raise DataError(f"{args.reactions}:{ln}: self-loop on {a}")
        for x in (a, b):
            if x not in seen:
                seen.add(x)
                ids.append(x)
        key = tuple(sorted((a, b)))
        try:
            classes.setdefault(key, set()).add(_ec_class(ec, f"{args.reactions}:{ln}"))
        except ValueError as e:
            raise DataError(f"{args.reactions}:{ln}: {e}") from None
    if args.nodes:
        extra = [line.strip() for line in Path(args.nodes).read_text().splitlines() if line.strip()]
        ids += [x for x in extra if x not in seen]
    pos = {x: k for k, x in enumerate(ids)}
    pairs = [(pos[a], pos[b]) for a, b in classes]
    try:
        efeats = np.array([enzyme_edge_features(sorted(c)) for c in classes.values()])
    except ValueError as e:
        raise DataError(str(e)) from None
    graph = Graph.from_edges(ids, pairs, one_hot_nodes(len(ids)), efeats.reshape(len(pairs), 7))
    eio.save_graph(graph, args.out)
    print(f"{graph.n_nodes} nodes, {graph.n_edges} edges with 7 enzyme-class features")
    return 0


def cmd_ct_features(args) -> int:
    groups = load_ct_groups(args.groups) if args.groups else load_ct_groups()
    records = eio.read_fasta(args.fasta)
    ids, rows = [], []
    for name, seq in records:
        try:
            rows.append(ct_features(seq, groups, normalize=not args.raw))
        except ValueError as e:
            raise DataError(f"{args.fasta}: sequence {name}: {e}") from None
        ids.append(name)
    eio.atomic_write_text(args.out, eio.node_features_text(ids, np.array(rows).reshape(len(ids), 343)))
    print(f"wrote {len(ids)} CT vectors")
    return 0


def cmd_tanimoto_targets(args) -> int:
    fps = eio.read_fingerprints(args.fingerprints)
    if args.pairs:
        _, body = eio.read_table(args.pairs, ["i", "j"])
        pairs = [(c[0], c[1]) for _, c in body]
    else:
        ids = list(eio.read_node_features(Path(args.graph) / eio.NODES_FILE)[0]) if args.graph \
            else [f.id for f in fps]
        pairs = all_pairs(ids)
    patterns = pairwise_tanimoto_targets(fps, pairs)
    eio.atomic_write_text(args.out, eio.patterns_text(patterns))
    n_lab = sum(p.labeled for p in patterns)
    print(f"{len(patterns)} patterns: {n_lab} labelled, {len(patterns) - n_lab} unlabelled")
    return 0


def cmd_train(args) -> int:
    t0 = time.time()
    cfg = _load_config(args)
    graph = eio.load_graph(args.graph)
    patterns = eio.read_patterns(args.patterns)
    _resolve(graph, patterns)
    n_unl = sum(not p.labeled for p in patterns)
    if n_unl:
        print(f"{n_unl} pattern(s) without label: trained through the self-supervised term only")
    tr_idx, va_idx = _split_validation(len(patterns), cfg.val_fraction, cfg.seed)
    tr = [patterns[k] for k in tr_idx]
    va = [patterns[k] for k in va_idx] or None
    mcfg = cfg.model_config(graph)
    params, hist, run = train_runs(graph, tr, cfg, va)
    out = Path(args.out)
    history_path = out.with_name(out.name + ".history.csv")
    eio.atomic_write_text(out, dumps_checkpoint(params, _checkpoint_config(mcfg, cfg)))
    eio.atomic_write_text(history_path, hist.to_csv())
    manifest_path = out.with_name(out.name + ".manifest.json")
    inputs = [args.patterns, Path(args.graph) / eio.NODES_FILE, Path(args.graph) / eio.EDGES_FILE]
    if args.config:
        inputs.append(args.config)
    eio.RunManifest.for_files(
        "train", args.config, cfg.seed, inputs, [out, history_path], round(time.time() - t0, 3)
    ).write(manifest_path)
    print(f"best epoch {hist.best_epoch} (run {run}), monitor {cfg.monitor} = {hist.best_value:.6g}; "
          f"{hist.stop_reason}")
    return 0


def _load_model(ckpt, graph: Graph):
    params, conf = loads_checkpoint(Path(ckpt).read_text())
    mcfg = ModelConfig.from_dict(conf["model"])
    if mcfg.input_dim != graph.feature_dim or mcfg.edge_dim != graph.edge_dim:
        raise DataError(
            f"checkpoint expects {mcfg.input_dim} node / {mcfg.edge_dim} edge features, graph has "
            f"{graph.feature_dim} / {graph.edge_dim}"
        )
    return params, mcfg, bool(conf.get("exclude_center_edge", False))


def cmd_predict(args) -> int:
    graph = eio.load_graph(args.graph)
    params, mcfg, exclude = _load_model(args.ckpt, graph)
    patterns = eio.read_patterns(args.patterns)
    _resolve(graph, patterns)
    preds, coss = predict_subgraphs(SubgraphCache(graph, exclude).many(patterns), params, mcfg)
    eio.atomic_write_text(args.out, eio.predictions_text(patterns, preds, coss))
    print(f"wrote {len(patterns)} predictions")
    return 0


def _crossval_job(payload):
    graph_dir, patterns, cfg_dict, split = payload
    graph = eio.load_graph(graph_dir)
    return run_split(graph, patterns, TrainConfig.from_dict(cfg_dict), split)


def cmd_crossval(args) -> int:
    t0 = time.time()
    cfg = _load_config(args)
    if args.folds:
        cfg = cfg.replace(folds=args.folds)
    if args.repeats:
        cfg = cfg.replace(repeats=args.repeats)
    graph = eio.load_graph(args.graph)
    patterns = eio.read_patterns(args.patterns)
    _resolve(graph, patterns)
    out = Path(args.out)
    splits = kfold_split(len(patterns), cfg.folds, cfg.repeats, cfg.seed, cfg.val_fraction)
    eio.write_json(out / "folds.json", {"n_patterns": len(patterns), "splits": [s.to_dict() for s in splits]})
    payloads = [(args.graph, patterns, cfg.to_dict(), s) for s in splits]
    results: dict[tuple[int, int], dict] = {}
    failures = []

    def record(split, fut_result=None, error=None):
        name = f"split_r{split.repeat}_f{split.fold}.json"
        if error is None:
            results[(split.repeat, split.fold)] = fut_result
            eio.write_json(out / name, fut_result)
        else:
            failures.append((split, error))
            log.error("split r%d f%d failed: %s", split.repeat, split.fold, error)

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_crossval_job, p) for p in payloads]
            for split, fut in zip(splits, futures):
                try:
                    record(split, fut.result())
                except Exception as e:  # keep other folds
                    record(split, error=e)
    else:
        for split, payload in zip(splits, payloads):
            try:
                record(split, run_split(graph, patterns, cfg, split))
            except Exception as e:
                record(split, error=e)

    ordered = [results[k] for k in sorted(results)]
    summary = {
        "config": cfg.to_dict(),
        "n_splits": len(splits),
        "n_completed": len(ordered),
        "aggregate": aggregate(ordered) if ordered else {},
        "failures": [{"repeat": s.repeat, "fold": s.fold, "error": str(e)} for s, e in failures],
    }
    eio.write_json(out / "aggregate.json", summary)
    artifacts = sorted(out.glob("split_r*_f*.json")) + [out / "folds.json", out / "aggregate.json"]
    inputs = [args.patterns, Path(args.graph) / eio.NODES_FILE, Path(args.graph) / eio.EDGES_FILE]
    if args.config:
        inputs.append(args.config)
    eio.RunManifest.for_files(
        "crossval", args.config, cfg.seed, inputs, artifacts, round(time.time() - t0, 3)
    ).write(out / "manifest.json")
    for metric, agg in summary["aggregate"].items():
        print(f"{metric}: {agg['mean']:.6g} +/- {agg['std']:.3g} (n={agg['n']})")
    if failures:
        numeric = any(isinstance(e, FloatingPointError) for _, e in failures)
        print(f"{len(failures)} split(s) failed; partial results kept in {out}", file=sys.stderr)
        return EXIT_NUMERIC if numeric else EXIT_DATA
    return 0


def cmd_evaluate(args) -> int:
    pairs, preds, _ = eio.read_predictions(args.predictions)
    patterns = eio.read_patterns(args.patterns)
    if len(patterns) != len(pairs):
        raise DataError("predictions and patterns differ in length")
    for k, (p, (a, b)) in enumerate(zip(patterns, pairs)):
        if (p.i, p.j) != (a, b):
            raise DataError(f"row {k + 1}: prediction pair ({a}, {b}) != pattern ({p.i}, {p.j})")
    keep = [k for k, p in enumerate(patterns) if p.labeled]
    if not keep:
        raise DataError("no labelled pattern to evaluate")
    report = evaluate(preds[keep], [patterns[k].label for k in keep], args.task, args.threshold)
    doc = {**report.to_dict(), "config": {"task": args.task, "threshold": args.threshold,
                                           "predictions": str(args.predictions)}}
    eio.write_json(args.out, doc)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_embed(args) -> int:
    graph = eio.load_graph(args.graph)
    params, mcfg, _ = _load_model(args.ckpt, graph)
    z = node_embeddings(graph, params, mcfg)
    res = pca2(z)
    lines = ["id\tpc1\tpc2"] + [
        f"{node}\t{eio.fmt(a)}\t{eio.fmt(b)}" for node, (a, b) in zip(graph.node_ids, res.coords)
    ]
    out = Path(args.out)
    eio.atomic_write_text(out, "\n".join(lines) + "\n")
    eio.write_json(out.with_name(out.name + ".json"), {
        "explained_variance": res.eigenvalues.tolist(),
        "explained_variance_ratio": res.explained_variance_ratio.tolist(),
    })
    if args.raw:
        eio.atomic_write_text(args.raw, eio.node_features_text(graph.node_ids, z))
    print(f"PC1 {res.explained_variance_ratio[0]:.3f}, PC2 {res.explained_variance_ratio[1]:.3f}")
    return 0


def cmd_make_fixture(args) -> int:
    ds = make_tanimoto_dataset(
        n_nodes=args.nodes, k=args.k, n_pairs=args.pairs, n_hidden=args.hidden,
        similarity_edge_feature=True, seed=args.seed,
    )
    out = Path(args.out)
    eio.save_graph(ds.graph, out / "graph")
    eio.atomic_write_text(out / "patterns.tsv", eio.patterns_text(ds.patterns))
    eio.atomic_write_text(out / "fingerprints.tsv",
                          eio.fingerprints_text([f for f in ds.fingerprints if f.id not in ds.hidden]))
    eio.atomic_write_text(out / "similarity.tsv", eio.similarity_text(ds.graph.node_ids, ds.similarity))
    print(f"fixture with {ds.graph.n_nodes} nodes and {len(ds.patterns)} patterns in {out}")
    return 0


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="edgewise", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("knn-graph", help="build a KNN graph from a similarity matrix")
    p.add_argument("--similarity", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True, help="output graph directory")
    p.add_argument("--node-features", help="node feature TSV (default: one-hot)")
    p.add_argument("--similarity-edge-feature", action="store_true",
                   help="attach the similarity value as a one-column edge feature")
    p.set_defaults(func=cmd_knn_graph)

    p = sub.add_parser("reaction-graph", help="graph from substrate/product pairs with EC numbers")
    p.add_argument("--reactions", required=True, help="TSV with src, dst, ec")
    p.add_argument("--nodes", help="optional file of extra node ids, one per line")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reaction_graph)

    p = sub.add_parser("ct-features", help="composition-of-triads vectors from FASTA")
    p.add_argument("--fasta", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--groups", help="residue grouping TSV (class, residues)")
    p.add_argument("--raw", action="store_true", help="raw counts instead of frequencies")
    p.set_defaults(func=cmd_ct_features)

    p = sub.add_parser("tanimoto-targets", help="label pairs with fingerprint Tanimoto similarity")
    p.add_argument("--fingerprints", required=True)
    p.add_argument("--pairs", help="TSV with i, j; default: all pairs")
    p.add_argument("--graph", help="take all pairs over this graph's nodes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tanimoto_targets)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required)
        p.add_argument("--graph", required=True)
        p.add_argument("--patterns", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--exclude-center-edge", action="store_true")
        p.add_argument("--attend-over", choices=("neighbors", "members"))
        p.add_argument("--runs", type=int)
        p.add_argument("--select", choices=("best-val",), default="best-val")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict patterns with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--patterns", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("crossval", help="repeated k-fold cross-validation")
    common(p)
    p.add_argument("--folds", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("evaluate", help="metrics for a predictions TSV")
    p.add_argument("--predictions", required=True)
    p.add_argument("--patterns", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--task", choices=("regression", "binary-classification"), default="regression")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("embed", help="export node embeddings projected on two principal axes")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True, help="TSV of id, pc1, pc2")
    p.add_argument("--raw", help="also write the full embeddings here")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("make-fixture", help="write a synthetic Tanimoto dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--nodes", type=int, default=30)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--pairs", type=int, default=120)
    p.add_argument("--hidden", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_fixture)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("EDGEWISE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataError, KeyError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"invalid argument: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
