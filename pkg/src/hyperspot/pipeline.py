"""End-to-end orchestration: config resolution and the staged pipeline.

Stage order: load -> normalize -> mask -> tile features -> hypergraph ->
joint training -> fuse + PCA -> cluster -> metrics -> artifacts. Any stage
error aborts with the stage name; artifacts are written only after every
stage succeeded, so failures leave no partial outputs behind.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np

from . import dataio, features, hypergraph, metrics, plotting, training
from .clustering import ClusterAssignment, build_snn_graph, kmeans, leiden_communities
from .errors import PipelineError, ValidationError
from .features import pca_fit_transform
from .metrics import MetricReport


@dataclass
class PipelineConfig:
    """Every pipeline knob; flags override config-file values override these."""

    expression: str | None = None
    coords: str | None = None
    image: str | None = None
    mask: str | None = None
    truth: str | None = None
    synth: str | None = None  # "DOMAINSxSPOTSxGENES", e.g. 3x50x40
    synth_noise_sd: float = 0.1
    synth_mix: float = 0.0
    out_dir: str = "out"
    k_neighbors: int = 6
    tile_size: int = 32
    gate_quantile: float | None = None
    normalize: str = "log1p"  # none | log1p
    pca_components: int = 20
    latent_dim: int = 32
    spatial_dim: int = 32
    hidden_dim: int = 64
    noise_sd: float = 0.1
    lambda_re: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 500
    seed: int = 0
    phased: bool = False
    cluster_method: str = "kmeans"  # kmeans | leiden
    n_clusters: int | None = None
    resolution: float = 1.0
    k_snn: int = 15
    k_lisi: int = 30


def _bool(text: str) -> bool:
    key = text.strip().lower()
    if key in ("1", "true", "yes"):
        return True
    if key in ("0", "false", "no"):
        return False
    raise ValidationError(f"bad boolean value '{text}'")


# Coercers for config-file values, keyed by field name.
_COERCERS = {
    "expression": str, "coords": str, "image": str, "mask": str, "truth": str,
    "synth": str, "out_dir": str, "normalize": str, "cluster_method": str,
    "k_neighbors": int, "tile_size": int, "pca_components": int,
    "latent_dim": int, "spatial_dim": int, "hidden_dim": int, "epochs": int,
    "seed": int, "n_clusters": int, "k_snn": int, "k_lisi": int,
    "synth_noise_sd": float, "synth_mix": float, "gate_quantile": float,
    "noise_sd": float, "lambda_re": float, "learning_rate": float,
    "resolution": float,
    "phased": _bool,
}


def parse_config_file(path: str) -> dict[str, str]:
    """Flat key=value config file; blank lines and # comments ignored."""
    if not os.path.exists(path):
        raise ValidationError(f"config file not found: {path}")
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}: line {lineno} is not key=value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def resolve_config(
    overrides: dict | None = None, config_file: str | None = None
) -> PipelineConfig:
    """Merge defaults, config-file values, and explicit overrides (strongest)."""
    cfg = PipelineConfig()
    if config_file:
        for key, raw in parse_config_file(config_file).items():
            if key not in _COERCERS:
                raise ValidationError(f"unknown config key '{key}'")
            try:
                setattr(cfg, key, _COERCERS[key](raw))
            except ValueError:
                raise ValidationError(f"bad value '{raw}' for config key '{key}'") from None
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if not hasattr(cfg, key):
            raise ValidationError(f"unknown config key '{key}'")
        setattr(cfg, key, value)
    if cfg.normalize not in ("none", "log1p"):
        raise ValidationError(f"normalize must be none|log1p, got '{cfg.normalize}'")
    if cfg.cluster_method not in ("kmeans", "leiden"):
        raise ValidationError(
            f"cluster_method must be kmeans|leiden, got '{cfg.cluster_method}'"
        )
    return cfg


def parse_synth_spec(text: str) -> tuple[int, int, int]:
    """Parse a DOMAINSxSPOTSxGENES spec such as 3x50x40."""
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ValidationError(f"synth spec must be DxSxG, got '{text}'")
    try:
        d, s, g = (int(p) for p in parts)
    except ValueError:
        raise ValidationError(f"synth spec must be three integers, got '{text}'") from None
    return d, s, g


class _Stage:
    """Context manager tagging any failure with its pipeline stage name."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


def load_inputs(cfg: PipelineConfig):
    """Load or synthesize (expression, coords, truth-or-None)."""
    if cfg.synth:
        d, s, g = parse_synth_spec(cfg.synth)
        return dataio.generate_synthetic(
            d, s, g, cfg.synth_noise_sd, cfg.synth_mix, cfg.seed
        )
    if not cfg.expression or not cfg.coords:
        raise ValidationError("need either --synth or both --expression and --coords")
    expr = dataio.load_expression(cfg.expression)
    coords = dataio.align_coords(dataio.load_coords(cfg.coords), expr.spot_ids)
    truth = None
    if cfg.truth:
        truth = load_truth(cfg.truth, expr.spot_ids)
    return expr, coords, truth


def load_truth(path: str, spot_ids) -> dataio.GroundTruthLabels:
    ids, labels = dataio.load_labels(path)
    index = {sid: i for i, sid in enumerate(ids)}
    rows = []
    for sid in spot_ids:
        if sid not in index:
            raise ValidationError(f"truth labels miss spot '{sid}'")
        rows.append(index[sid])
    return dataio.GroundTruthLabels(labels[rows], int(labels.max()) + 1)


def align_mask(path: str, spot_ids) -> dataio.TissueMask:
    ids, mask = dataio.load_mask(path)
    index = {sid: i for i, sid in enumerate(ids)}
    flags = []
    for sid in spot_ids:
        if sid not in index:
            raise ValidationError(f"tissue mask misses spot '{sid}'")
        flags.append(mask.in_tissue[index[sid]])
    return dataio.TissueMask(np.asarray(flags, dtype=bool))


def normalize_expression(expr: dataio.ExpressionMatrix, mode: str):
    if mode == "log1p":
        return dataio.log1p_normalize(expr)
    return expr


def build_spatial_hypergraph(coords, cfg: PipelineConfig, tile_features=None, cov=None):
    """KNN hypergraph, optional Mahalanobis gate, normalization, adjacency."""
    hg = hypergraph.build_knn_hypergraph(coords, cfg.k_neighbors)
    if cfg.gate_quantile is not None:
        if tile_features is None or cov is None:
            raise ValidationError("gate_quantile requires an --image for tile features")
        hg = hypergraph.mahalanobis_gate(hg, tile_features, cov, cfg.gate_quantile)
    incidence = hypergraph.incidence_matrix(hg)
    norm = hypergraph.degree_normalization(incidence, hg.edge_weights)
    adjacency = hypergraph.adjacency_from_incidence(incidence)
    return hg, norm, adjacency


def compute_image_features(image_path: str, coords, cfg: PipelineConfig):
    image = features.load_image(image_path)
    tiles = features.extract_tiles(image, coords, cfg.tile_size)
    tile_feats = features.compute_tile_features(tiles)
    cov = features.covariance_matrix(tile_feats)
    return tile_feats, cov


def train_config_from(cfg: PipelineConfig) -> training.TrainConfig:
    return training.TrainConfig(
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        noise_sd=cfg.noise_sd,
        lambda_re=cfg.lambda_re,
        seed=cfg.seed,
        hidden_dim=cfg.hidden_dim,
        latent_dim=cfg.latent_dim,
        spatial_dim=cfg.spatial_dim,
        phased=cfg.phased,
    )


def reduce_embedding(fused: np.ndarray, cfg: PipelineConfig):
    return pca_fit_transform(fused, cfg.pca_components)


def cluster_embedding(
    scores: np.ndarray, cfg: PipelineConfig, n_clusters: int | None
) -> ClusterAssignment:
    if cfg.cluster_method == "kmeans":
        if n_clusters is None:
            raise ValidationError(
                "k-means needs --n-clusters (or ground truth to infer it from)"
            )
        return kmeans(scores, n_clusters, seed=cfg.seed)
    snn = build_snn_graph(scores, min(cfg.k_snn, scores.shape[0] - 1))
    return leiden_communities(snn, resolution=cfg.resolution, seed=cfg.seed)


@dataclass
class PipelineResult:
    out_dir: str
    artifacts: dict[str, str]
    report: MetricReport
    assignment: ClusterAssignment
    embeddings: training.EmbeddingBundle
    scores: np.ndarray
    trace: list = field(default_factory=list)


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Run every stage and write all artifacts into ``cfg.out_dir``.

    Artifacts: the synthetic inputs (when synthesized), hyperedges.txt,
    embedding_fused.csv, embedding_pca.csv, labels.csv, loss_trace.csv,
    checkpoint.txt, metrics.json, domains.svg, and tile_features.csv when
    an image is given. Bit-reproducible for a fixed config.
    """
    with _Stage("load"):
        expr, coords, truth = load_inputs(cfg)
        raw_expr, raw_coords, raw_truth = expr, coords, truth
    with _Stage("normalize"):
        norm_expr = normalize_expression(expr, cfg.normalize)
    with _Stage("mask"):
        if cfg.mask:
            tissue = align_mask(cfg.mask, norm_expr.spot_ids)
            kept = tissue.in_tissue
            norm_expr, coords = dataio.apply_tissue_mask(norm_expr, coords, tissue)
            if truth is not None:
                truth = dataio.GroundTruthLabels(truth.labels[kept], truth.n_domains)
    with _Stage("tiles"):
        tile_feats = cov = None
        if cfg.image:
            tile_feats, cov = compute_image_features(cfg.image, coords, cfg)
    with _Stage("hypergraph"):
        hg, norm, adjacency = build_spatial_hypergraph(coords, cfg, tile_feats, cov)
    with _Stage("train"):
        result = training.train_joint(
            norm_expr.values, norm, hg, adjacency, train_config_from(cfg)
        )
    with _Stage("reduce"):
        scores, _ = reduce_embedding(result.embeddings.fused, cfg)
    with _Stage("cluster"):
        n_clusters = cfg.n_clusters
        if n_clusters is None and truth is not None:
            n_clusters = truth.n_domains
        assignment = cluster_embedding(scores, cfg, n_clusters)
    with _Stage("metrics"):
        report = metrics.evaluate(
            scores,
            assignment.labels,
            truth.labels if truth is not None else None,
            k_lisi=cfg.k_lisi,
        )
    with _Stage("artifacts"):
        artifacts = _write_artifacts(
            cfg,
            (raw_expr, raw_coords, raw_truth),
            coords,
            hg,
            result,
            scores,
            assignment,
            report,
            tile_feats,
        )
    return PipelineResult(
        out_dir=cfg.out_dir,
        artifacts=artifacts,
        report=report,
        assignment=assignment,
        embeddings=result.embeddings,
        scores=scores,
        trace=result.trace,
    )


def _write_artifacts(
    cfg, raw_inputs, coords, hg, result, scores, assignment, report, tile_feats
) -> dict[str, str]:
    raw_expr, raw_coords, raw_truth = raw_inputs
    os.makedirs(cfg.out_dir, exist_ok=True)
    written: list[str] = []

    def path(name: str) -> str:
        p = os.path.join(cfg.out_dir, name)
        written.append(p)
        return p

    artifacts: dict[str, str] = {}
    try:
        if cfg.synth:
            dataio.write_expression(raw_expr, path("expression.csv"))
            artifacts["expression"] = written[-1]
            dataio.write_coords(raw_coords, path("coords.csv"))
            artifacts["coords"] = written[-1]
            dataio.write_labels(
                raw_expr.spot_ids, raw_truth.labels, path("truth_labels.csv")
            )
            artifacts["truth_labels"] = written[-1]
        if tile_feats is not None:
            features.write_tile_features(
                coords.spot_ids, tile_feats, path("tile_features.csv")
            )
            artifacts["tile_features"] = written[-1]
        hypergraph.save_hyperedges(hg, path("hyperedges.txt"))
        artifacts["hyperedges"] = written[-1]
        dataio.write_embedding(
            coords.spot_ids, result.embeddings.fused, path("embedding_fused.csv")
        )
        artifacts["embedding_fused"] = written[-1]
        training.save_loss_trace(result.trace, path("loss_trace.csv"))
        artifacts["loss_trace"] = written[-1]
        training.save_checkpoint(result.params, path("checkpoint.txt"))
        artifacts["checkpoint"] = written[-1]
        dataio.write_embedding(coords.spot_ids, scores, path("embedding_pca.csv"))
        artifacts["embedding_pca"] = written[-1]
        dataio.write_labels(coords.spot_ids, assignment.labels, path("labels.csv"))
        artifacts["labels"] = written[-1]
        metrics.write_metric_report(report, path("metrics.json"))
        artifacts["metrics"] = written[-1]
        plotting.plot_domains(coords, assignment, path("domains.svg"))
        artifacts["domains"] = written[-1]
    except Exception:
        for p in written:
            if os.path.exists(p):
                os.unlink(p)
        raise
    return artifacts
