"""Command-line interface.

Subcommands: synth, hypergraph, train, cluster, evaluate, plot, pipeline.
Each stage is independently invokable with intermediate files as its
interface; chaining the subcommands reproduces the pipeline output
byte-for-byte. Exit codes: 0 success, 1 usage error, 2 data/validation
error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import dataio, hypergraph, metrics, pipeline, plotting, training
from .clustering import ClusterAssignment
from .errors import HyperspotError, NumericError, PipelineError, ValidationError


class UsageError(HyperspotError):
    """Bad command line; exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we map usage to 1
        raise UsageError(message)


# Flags mirroring PipelineConfig fields, grouped by which subcommands use them.
_FLAG_TYPES = {
    "expression": str, "coords": str, "image": str, "mask": str, "truth": str,
    "synth": str, "out_dir": str, "normalize": str, "cluster_method": str,
    "k_neighbors": int, "tile_size": int, "pca_components": int,
    "latent_dim": int, "spatial_dim": int, "hidden_dim": int, "epochs": int,
    "seed": int, "n_clusters": int, "k_snn": int, "k_lisi": int,
    "synth_noise_sd": float, "synth_mix": float, "gate_quantile": float,
    "noise_sd": float, "lambda_re": float, "learning_rate": float,
    "resolution": float,
}

_CHOICES = {"normalize": ("none", "log1p"), "cluster_method": ("kmeans", "leiden")}


def _add_config_flags(parser: _Parser, names: list[str]) -> None:
    parser.add_argument("--config", default=None, help="flat key=value config file")
    for name in names:
        flag = "--" + name.replace("_", "-")
        if name == "phased":
            parser.add_argument(flag, dest=name, action="store_const", const=True,
                                default=None, help="train the two autoencoders sequentially")
            continue
        parser.add_argument(
            flag, dest=name, type=_FLAG_TYPES[name], default=None,
            choices=_CHOICES.get(name),
        )


def _resolve(args: argparse.Namespace) -> pipeline.PipelineConfig:
    overrides = {
        key: getattr(args, key)
        for key in list(_FLAG_TYPES) + ["phased"]
        if hasattr(args, key) and getattr(args, key) is not None
    }
    return pipeline.resolve_config(overrides, getattr(args, "config", None))


_SYNTH_FLAGS = ["out_dir", "synth_noise_sd", "synth_mix", "seed"]
_HYPERGRAPH_FLAGS = [
    "coords", "mask", "image", "out_dir", "k_neighbors", "tile_size",
    "gate_quantile", "seed",
]
_TRAIN_FLAGS = [
    "expression", "mask", "out_dir", "normalize", "latent_dim", "spatial_dim",
    "hidden_dim", "noise_sd", "lambda_re", "learning_rate", "epochs", "seed",
    "phased",
]
_CLUSTER_FLAGS = [
    "out_dir", "pca_components", "cluster_method", "n_clusters", "resolution",
    "k_snn", "seed",
]
_EVALUATE_FLAGS = ["truth", "out_dir", "k_lisi"]
_PLOT_FLAGS = ["coords", "out_dir"]
_PIPELINE_FLAGS = [
    "expression", "coords", "image", "mask", "truth", "synth", "synth_noise_sd",
    "synth_mix", "out_dir", "k_neighbors", "tile_size", "gate_quantile",
    "normalize", "pca_components", "latent_dim", "spatial_dim", "hidden_dim",
    "noise_sd", "lambda_re", "learning_rate", "epochs", "seed", "phased",
    "cluster_method", "n_clusters", "resolution", "k_snn", "k_lisi",
]


def build_parser() -> _Parser:
    parser = _Parser(prog="hyperspot", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("shape", help="DOMAINSxSPOTSxGENES, e.g. 3x50x40")
    _add_config_flags(p, _SYNTH_FLAGS)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("hypergraph", help="build the spatial KNN hypergraph")
    _add_config_flags(p, _HYPERGRAPH_FLAGS)
    p.set_defaults(func=_cmd_hypergraph)

    p = sub.add_parser("train", help="train the joint autoencoders")
    p.add_argument("--hyperedges", required=True, help="edge-list file from 'hypergraph'")
    _add_config_flags(p, _TRAIN_FLAGS)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("cluster", help="PCA-reduce and cluster an embedding")
    p.add_argument("--embedding", required=True, help="fused embedding CSV")
    _add_config_flags(p, _CLUSTER_FLAGS)
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("evaluate", help="score a clustering (ARI, iLISI)")
    p.add_argument("--embedding", required=True, help="embedding CSV used for clustering")
    p.add_argument("--labels", required=True, help="labels CSV to score")
    _add_config_flags(p, _EVALUATE_FLAGS)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("plot", help="render the domain-map SVG")
    p.add_argument("--labels", required=True, help="labels CSV")
    _add_config_flags(p, _PLOT_FLAGS)
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _add_config_flags(p, _PIPELINE_FLAGS)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def _out(cfg, name: str) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def _cmd_synth(args) -> int:
    cfg = _resolve(args)
    d, s, g = pipeline.parse_synth_spec(args.shape)
    expr, coords, truth = dataio.generate_synthetic(
        d, s, g, cfg.synth_noise_sd, cfg.synth_mix, cfg.seed
    )
    dataio.write_expression(expr, _out(cfg, "expression.csv"))
    dataio.write_coords(coords, _out(cfg, "coords.csv"))
    dataio.write_labels(expr.spot_ids, truth.labels, _out(cfg, "truth_labels.csv"))
    print(f"wrote {expr.n_spots} spots x {expr.n_genes} genes to {cfg.out_dir}")
    return 0


def _load_masked_coords(cfg) -> dataio.SpatialCoords:
    if not cfg.coords:
        raise UsageError("--coords is required")
    coords = dataio.load_coords(cfg.coords)
    if cfg.mask:
        tissue = pipeline.align_mask(cfg.mask, coords.spot_ids)
        keep = tissue.in_tissue
        coords = dataio.SpatialCoords(
            coords.positions[keep],
            tuple(s for s, k in zip(coords.spot_ids, keep) if k),
        )
    return coords


def _cmd_hypergraph(args) -> int:
    cfg = _resolve(args)
    coords = _load_masked_coords(cfg)
    tile_feats = cov = None
    if cfg.image:
        tile_feats, cov = pipeline.compute_image_features(cfg.image, coords, cfg)
    hg, _, _ = pipeline.build_spatial_hypergraph(coords, cfg, tile_feats, cov)
    hypergraph.save_hyperedges(hg, _out(cfg, "hyperedges.txt"))
    print(f"wrote {hg.n_edges} hyperedges to {cfg.out_dir}")
    return 0


def _cmd_train(args) -> int:
    cfg = _resolve(args)
    if not cfg.expression:
        raise UsageError("--expression is required")
    expr = dataio.load_expression(cfg.expression)
    if cfg.mask:
        tissue = pipeline.align_mask(cfg.mask, expr.spot_ids)
        keep = tissue.in_tissue
        expr = dataio.ExpressionMatrix(
            expr.values[keep],
            tuple(s for s, k in zip(expr.spot_ids, keep) if k),
            expr.gene_ids,
        )
    norm_expr = pipeline.normalize_expression(expr, cfg.normalize)
    hg = hypergraph.load_hyperedges(args.hyperedges, n_vertices=expr.n_spots)
    incidence = hypergraph.incidence_matrix(hg)
    norm = hypergraph.degree_normalization(incidence, hg.edge_weights)
    adjacency = hypergraph.adjacency_from_incidence(incidence)
    result = training.train_joint(
        norm_expr.values, norm, hg, adjacency, pipeline.train_config_from(cfg)
    )
    dataio.write_embedding(
        expr.spot_ids, result.embeddings.fused, _out(cfg, "embedding_fused.csv")
    )
    training.save_loss_trace(result.trace, _out(cfg, "loss_trace.csv"))
    training.save_checkpoint(result.params, _out(cfg, "checkpoint.txt"))
    final = result.trace[-1]
    print(
        f"trained {len(result.trace)} epochs; final total loss {final.total:.6f} "
        f"(mse {final.reconstruction_mse:.6f}, bce {final.adjacency_bce:.6f})"
    )
    return 0


def _cmd_cluster(args) -> int:
    cfg = _resolve(args)
    spot_ids, fused = dataio.load_embedding(args.embedding)
    scores, _ = pipeline.reduce_embedding(fused, cfg)
    assignment = pipeline.cluster_embedding(scores, cfg, cfg.n_clusters)
    dataio.write_embedding(spot_ids, scores, _out(cfg, "embedding_pca.csv"))
    dataio.write_labels(spot_ids, assignment.labels, _out(cfg, "labels.csv"))
    print(f"{assignment.n_clusters} clusters via {assignment.method}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _resolve(args)
    emb_ids, embedding = dataio.load_embedding(args.embedding)
    lab_ids, labels = dataio.load_labels(args.labels)
    if emb_ids != lab_ids:
        raise ValidationError("embedding and labels list different spots")
    truth = None
    if cfg.truth:
        truth = pipeline.load_truth(cfg.truth, emb_ids).labels
    report = metrics.evaluate(embedding, labels, truth, k_lisi=cfg.k_lisi)
    metrics.write_metric_report(report, _out(cfg, "metrics.json"))
    ari = "n/a" if report.ari is None else f"{report.ari:.4f}"
    print(f"ari {ari}, mean ilisi {report.ilisi_mean:.4f}")
    return 0


def _cmd_plot(args) -> int:
    cfg = _resolve(args)
    if not cfg.coords:
        raise UsageError("--coords is required")
    lab_ids, labels = dataio.load_labels(args.labels)
    coords = dataio.align_coords(
        dataio.load_coords(cfg.coords), lab_ids, allow_extra=True
    )
    assignment = ClusterAssignment(labels, method="file", seed=0)
    plotting.plot_domains(coords, assignment, _out(cfg, "domains.svg"))
    print(f"wrote domain map for {len(lab_ids)} spots")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _resolve(args)
    if not cfg.synth and not (cfg.expression and cfg.coords):
        raise UsageError("pipeline needs --synth or both --expression and --coords")
    result = pipeline.run_pipeline(cfg)
    report = result.report
    ari = "n/a" if report.ari is None else f"{report.ari:.4f}"
    print(
        f"{result.assignment.n_clusters} domains via {result.assignment.method}; "
        f"ari {ari}, mean ilisi {report.ilisi_mean:.4f}; artifacts in {cfg.out_dir}"
    )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3 if isinstance(exc.cause, NumericError) else 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
