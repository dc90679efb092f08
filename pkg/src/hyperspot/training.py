"""Joint training of the denoising and hypergraph autoencoders.

Full-batch gradient descent with adaptive moments; everything is
bit-deterministic for a given seed. The finite-difference gradient check
is the correctness oracle for the analytic backward passes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ValidationError
from .hypergraph import DegreeNormalization, Hypergraph
from .network import (
    AffineLayer,
    GraphConvLayer,
    ModelGrads,
    ModelParams,
    TrainingBatch,
    _as_propagation,
    _chain_forward,
    grad_arrays,
    hgcn_forward,
    init_model,
    joint_forward_backward,
    param_arrays,
)

CHECKPOINT_MAGIC = "hyperspot-checkpoint v1"


@dataclass
class TrainConfig:
    """Hyperparameters for :func:`train_joint`.

    ``lambda_re`` weights the adjacency-reconstruction loss against the
    expression-reconstruction loss; ``pos_weight=None`` selects the
    standard imbalance correction #zeros / #ones of the adjacency.
    """

    epochs: int = 500
    learning_rate: float = 1e-3
    noise_sd: float = 0.1
    lambda_re: float = 1.0
    seed: int = 0
    hidden_dim: int = 64
    latent_dim: int = 32
    spatial_dim: int = 32
    pos_weight: float | None = None
    phased: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.lambda_re < 0:
            raise ValidationError("lambda_re must be non-negative")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be non-negative")


@dataclass(frozen=True)
class EmbeddingBundle:
    """Latent codes after training: autoencoder, hypergraph, and their fusion."""

    latent: np.ndarray  # (N, latent_dim) denoising-autoencoder code
    spatial: np.ndarray  # (N, spatial_dim) hypergraph-encoder code
    fused: np.ndarray  # (N, latent_dim + spatial_dim) concatenation


@dataclass(frozen=True)
class LossRecord:
    epoch: int
    reconstruction_mse: float
    adjacency_bce: float
    total: float


@dataclass
class TrainResult:
    params: ModelParams
    embeddings: EmbeddingBundle
    trace: list[LossRecord] = field(default_factory=list)


class AdamOptimizer:
    """Adaptive-moment descent over a fixed list of parameter arrays."""

    def __init__(self, arrays, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.arrays = arrays
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.learning_rate * np.sqrt(1.0 - b2**self.t) / (1.0 - b1**self.t)
        for arr, g, m, v in zip(self.arrays, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            arr -= scale * m / (np.sqrt(v) + self.eps)


def default_pos_weight(adjacency: np.ndarray) -> float:
    """Imbalance correction #zeros / #ones over the full adjacency."""
    ones = float(np.asarray(adjacency).sum())
    if ones <= 0:
        return 1.0
    return (adjacency.size - ones) / ones


def train_joint(
    x: np.ndarray,
    norm: DegreeNormalization,
    hg: Hypergraph,
    adjacency: np.ndarray,
    config: TrainConfig,
    params: ModelParams | None = None,
) -> TrainResult:
    """Jointly minimize reconstruction MSE + lambda_re * adjacency BCE.

    Full-batch adaptive-moment descent for ``config.epochs`` epochs with a
    fresh latent corruption drawn each epoch from the seeded stream. With
    ``config.phased`` the hypergraph encoder is trained first on the
    adjacency loss, then the autoencoder on the reconstruction loss with
    the spatial embedding frozen.

    Returns the trained parameters, the clean (noise-free) embeddings with
    their fusion, and the per-epoch loss trace.
    """
    config.validate()
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if hg.n_vertices != n:
        raise ValidationError(f"hypergraph has {hg.n_vertices} vertices for {n} spots")
    if adjacency.shape != (n, n):
        raise ValidationError(f"adjacency shape {adjacency.shape} != ({n}, {n})")
    if params is None:
        params = init_model(
            x.shape[1],
            hidden_dim=config.hidden_dim,
            latent_dim=config.latent_dim,
            spatial_dim=config.spatial_dim,
            seed=config.seed,
        )
    pos_weight = (
        default_pos_weight(adjacency) if config.pos_weight is None else config.pos_weight
    )
    rng = np.random.default_rng(config.seed)
    latent_dim = params.latent_dim

    trace: list[LossRecord] = []
    all_arrays = param_arrays(params)

    def run_epochs(n_epochs: int, lambda_re: float, trainable: list[bool]) -> None:
        opt = AdamOptimizer(
            [a for a, t in zip(all_arrays, trainable) if t],
            config.learning_rate,
            config.beta1,
            config.beta2,
            config.adam_eps,
        )
        # one corruption draw per phase: the objective stays deterministic,
        # so the loss trace reflects optimization progress, not draw luck
        noise = rng.normal(0.0, config.noise_sd, size=(n, latent_dim))
        for _ in range(n_epochs):
            batch = TrainingBatch(
                x=x,
                propagation=norm,
                adjacency=adjacency,
                noise=noise,
                lambda_re=lambda_re,
                pos_weight=pos_weight,
            )
            losses, grads = joint_forward_backward(params, batch)
            if not np.isfinite(losses.total):
                raise NumericError(
                    f"training loss diverged at epoch {len(trace)}; "
                    "reduce the learning rate"
                )
            opt.step([g for g, t in zip(grad_arrays(grads), trainable) if t])
            trace.append(
                LossRecord(
                    epoch=len(trace),
                    reconstruction_mse=losses.reconstruction_mse,
                    adjacency_bce=losses.adjacency_bce,
                    total=losses.total,
                )
            )

    if config.phased:
        n_dae = 2 * (len(params.dae_encoder) + len(params.dae_decoder))
        n_hgcn = len(params.hgcn_layers)
        # adjacency phase first, then expression reconstruction on the
        # frozen spatial embedding
        run_epochs(config.epochs, config.lambda_re, [False] * n_dae + [True] * n_hgcn)
        run_epochs(config.epochs, 0.0, [True] * n_dae + [False] * n_hgcn)
    else:
        run_epochs(config.epochs, config.lambda_re, [True] * len(all_arrays))

    spatial = hgcn_forward(x, norm, params)
    latent, _ = _chain_forward(x, params.dae_encoder)
    bundle = EmbeddingBundle(latent, spatial, np.hstack([latent, spatial]))
    return TrainResult(params=params, embeddings=bundle, trace=trace)


def _loss_extended_precision(params: ModelParams, batch: TrainingBatch) -> np.longdouble:
    """Loss-only forward in extended precision for the difference oracle.

    Central differences at epsilon ~ 1e-5 lose ~11 digits to cancellation;
    evaluating the perturbed losses in longdouble keeps the finite
    difference itself meaningful for small-gradient coordinates.
    """
    ld = np.longdouble
    prop = _as_propagation(batch.propagation)
    prop = (prop.toarray() if hasattr(prop, "toarray") else np.asarray(prop)).astype(ld)
    x = np.asarray(batch.x).astype(ld)
    adjacency = np.asarray(batch.adjacency).astype(ld)
    noise = np.asarray(batch.noise).astype(ld)

    def act(tag, v):
        if tag == "identity":
            return v
        return np.where(v > 0, v, np.longdouble(0.01) * v)

    spatial = x
    for layer in params.hgcn_layers:
        spatial = act(layer.activation, (prop @ spatial) @ layer.weight.astype(ld))
    latent = x
    for layer in params.dae_encoder:
        latent = act(
            layer.activation, latent @ layer.weight.astype(ld) + layer.bias.astype(ld)
        )
    h = np.hstack([latent + noise, spatial])
    for layer in params.dae_decoder:
        h = act(layer.activation, h @ layer.weight.astype(ld) + layer.bias.astype(ld))
    diff = h - x
    mse = (diff * diff).mean()

    gram = spatial @ spatial.T
    gram = (gram + gram.T) / 2
    sim = np.where(gram >= 0, 1 / (1 + np.exp(-gram)), np.exp(gram) / (1 + np.exp(gram)))
    clamp = np.longdouble(1e-7)
    sim = np.clip(sim, clamp, 1 - clamp)
    w = np.where(adjacency == 1, np.longdouble(batch.pos_weight), np.longdouble(1.0))
    bce = -(w * (adjacency * np.log(sim) + (1 - adjacency) * np.log(1 - sim))).mean()
    return mse + np.longdouble(batch.lambda_re) * bce


def gradient_check(
    params: ModelParams,
    batch: TrainingBatch,
    epsilon: float = 1e-5,
    n_coords: int = 50,
    seed: int = 0,
    analytic: ModelGrads | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    A random subset of at least ``n_coords`` parameter coordinates is
    perturbed by +/- epsilon; the relative error per coordinate is
    |g_a - g_f| / max(|g_a|, |g_f|, 1e-8). Pass a corrupted ``analytic``
    gradient to verify the check itself reports large errors.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValidationError("epsilon must lie in [1e-7, 1e-3]")
    if analytic is None:
        _, analytic = joint_forward_backward(params, batch)
    arrays = param_arrays(params)
    grads = grad_arrays(analytic)
    sizes = [a.size for a in arrays]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=min(n_coords, total), replace=False)
    offsets = np.cumsum([0, *sizes])

    worst = 0.0
    for flat_idx in sorted(int(c) for c in chosen):
        a_i = int(np.searchsorted(offsets, flat_idx, side="right")) - 1
        local = flat_idx - offsets[a_i]
        arr = arrays[a_i].ravel()
        old = arr[local]
        arr[local] = old + epsilon
        up = _loss_extended_precision(params, batch)
        theta_up = arr[local]
        arr[local] = old - epsilon
        down = _loss_extended_precision(params, batch)
        theta_down = arr[local]
        arr[local] = old
        # divide by the exact float64 step, not the nominal 2*epsilon
        fd = float((up - down) / (np.longdouble(theta_up) - np.longdouble(theta_down)))
        ga = grads[a_i].ravel()[local]
        err = abs(ga - fd) / max(abs(ga), abs(fd), 1e-8)
        worst = max(worst, err)
    return worst


def save_loss_trace(trace: list[LossRecord], path: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("epoch,reconstruction_mse,adjacency_bce,total\n")
        for rec in trace:
            fh.write(
                f"{rec.epoch},{rec.reconstruction_mse!r},{rec.adjacency_bce!r},"
                f"{rec.total!r}\n"
            )


def save_checkpoint(params: ModelParams, path: str) -> None:
    """Write a versioned text checkpoint: layer dims then row-major weights."""

    def fmt(arr: np.ndarray) -> str:
        return " ".join(repr(float(v)) for v in np.asarray(arr).ravel())

    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        fh.write(
            f"{len(params.dae_encoder)} {len(params.dae_decoder)} "
            f"{len(params.hgcn_layers)}\n"
        )
        for section, layers in (
            ("dae_encoder", params.dae_encoder),
            ("dae_decoder", params.dae_decoder),
        ):
            for layer in layers:
                rows, cols = layer.weight.shape
                fh.write(f"{section} {rows} {cols} {layer.activation}\n")
                fh.write(fmt(layer.weight) + "\n")
                fh.write(fmt(layer.bias) + "\n")
        for layer in params.hgcn_layers:
            rows, cols = layer.weight.shape
            fh.write(f"hgcn {rows} {cols} {layer.activation}\n")
            fh.write(fmt(layer.weight) + "\n")


def load_checkpoint(path: str) -> ModelParams:
    import os

    if not os.path.exists(path):
        raise ValidationError(f"file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValidationError(f"{path}: not a {CHECKPOINT_MAGIC} file")
    try:
        n_enc, n_dec, n_hgcn = (int(v) for v in lines[1].split())
        pos = 2
        encoder: list[AffineLayer] = []
        decoder: list[AffineLayer] = []
        hgcn: list[GraphConvLayer] = []
        for _ in range(n_enc + n_dec):
            section, rows, cols, act = lines[pos].split()
            rows, cols = int(rows), int(cols)
            weight = np.array([float(v) for v in lines[pos + 1].split()]).reshape(
                rows, cols
            )
            bias = np.array([float(v) for v in lines[pos + 2].split()])
            layer = AffineLayer(weight, bias, act)
            (encoder if section == "dae_encoder" else decoder).append(layer)
            pos += 3
        for _ in range(n_hgcn):
            _, rows, cols, act = lines[pos].split()
            weight = np.array([float(v) for v in lines[pos + 1].split()]).reshape(
                int(rows), int(cols)
            )
            hgcn.append(GraphConvLayer(weight, act))
            pos += 2
    except (ValueError, IndexError):
        raise ValidationError(f"{path}: malformed checkpoint") from None
    return ModelParams(encoder, decoder, hgcn)
