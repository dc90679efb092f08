"""Dense layers with analytic gradients, the denoising autoencoder, the
hypergraph-convolutional encoder, the two message-passing stages, and the
reconstruction losses.

Everything is plain numpy with hand-written backward passes; the finite
difference oracle in :mod:`hyperspot.training` keeps them honest.

Shapes: the expression matrix is (N, M); the autoencoder latent is
(N, latent_dim); the hypergraph encoder output ("spatial embedding") is
(N, spatial_dim); the decoder consumes their concatenation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import NumericError, ValidationError
from .hypergraph import Hypergraph

LEAKY_SLOPE = 0.01
BCE_CLAMP = 1e-7


def _leaky(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def _leaky_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, LEAKY_SLOPE)


ACTIVATIONS = {
    "identity": (lambda x: x, lambda x: np.ones_like(x)),
    "leaky_relu": (_leaky, _leaky_grad),
}


@dataclass
class AffineLayer:
    """One fully connected layer: x @ weight + bias, then the activation."""

    weight: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "leaky_relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation '{self.activation}'")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValidationError(
                f"layer shapes {self.weight.shape}/{self.bias.shape} do not chain"
            )


@dataclass
class GraphConvLayer:
    """One hypergraph convolution: act(propagation @ x @ weight)."""

    weight: np.ndarray  # (in_dim, out_dim)
    activation: str = "leaky_relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation '{self.activation}'")
        if self.weight.ndim != 2:
            raise ValidationError(f"graph layer weight must be 2-D, got {self.weight.shape}")


@dataclass
class ModelParams:
    """All trainable parameters of the joint model."""

    dae_encoder: list[AffineLayer] = field(default_factory=list)
    dae_decoder: list[AffineLayer] = field(default_factory=list)
    hgcn_layers: list[GraphConvLayer] = field(default_factory=list)

    def __post_init__(self):
        for stack in (self.dae_encoder, self.dae_decoder):
            for a, b in zip(stack, stack[1:]):
                if a.weight.shape[1] != b.weight.shape[0]:
                    raise ValidationError(
                        f"layer widths {a.weight.shape} -> {b.weight.shape} do not chain"
                    )
        for a, b in zip(self.hgcn_layers, self.hgcn_layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ValidationError(
                    f"graph layer widths {a.weight.shape} -> {b.weight.shape} do not chain"
                )
        if self.dae_encoder and self.dae_decoder:
            latent = self.latent_dim
            dec_in = self.dae_decoder[0].weight.shape[0]
            if self.hgcn_layers:
                if dec_in != latent + self.spatial_dim:
                    raise ValidationError(
                        f"decoder input width {dec_in} != latent {latent} + "
                        f"spatial {self.spatial_dim}"
                    )
        for arr in param_arrays(self):
            if not np.isfinite(arr).all():
                raise ValidationError("non-finite model parameter")

    @property
    def latent_dim(self) -> int:
        return self.dae_encoder[-1].weight.shape[1]

    @property
    def spatial_dim(self) -> int:
        return self.hgcn_layers[-1].weight.shape[1]


@dataclass
class ModelGrads:
    """Gradients in the same structure as :class:`ModelParams`."""

    dae_encoder: list[tuple[np.ndarray, np.ndarray]]
    dae_decoder: list[tuple[np.ndarray, np.ndarray]]
    hgcn_layers: list[np.ndarray]


def param_arrays(params: ModelParams) -> list[np.ndarray]:
    """Parameter arrays in a fixed canonical order (shared with grad_arrays)."""
    arrays: list[np.ndarray] = []
    for layer in params.dae_encoder:
        arrays.extend([layer.weight, layer.bias])
    for layer in params.dae_decoder:
        arrays.extend([layer.weight, layer.bias])
    for layer in params.hgcn_layers:
        arrays.append(layer.weight)
    return arrays


def grad_arrays(grads: ModelGrads) -> list[np.ndarray]:
    arrays: list[np.ndarray] = []
    for gw, gb in grads.dae_encoder:
        arrays.extend([gw, gb])
    for gw, gb in grads.dae_decoder:
        arrays.extend([gw, gb])
    arrays.extend(grads.hgcn_layers)
    return arrays


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(
    n_genes: int,
    hidden_dim: int | Sequence[int] = 64,
    latent_dim: int = 32,
    spatial_dim: int = 32,
    seed: int = 0,
) -> ModelParams:
    """Seeded Glorot-uniform initialization of the default architecture.

    Encoder n_genes -> hidden -> latent_dim, decoder
    (latent_dim + spatial_dim) -> reversed hidden -> n_genes, hypergraph
    encoder n_genes -> hidden -> spatial_dim. Hidden layers use the leaky
    rectifier; final layers are linear. Biases start at zero.
    """
    hidden = (hidden_dim,) if isinstance(hidden_dim, int) else tuple(hidden_dim)
    rng = np.random.default_rng(seed)

    def stack(dims: list[int]) -> list[AffineLayer]:
        layers = []
        for i, (a, b) in enumerate(zip(dims, dims[1:])):
            act = "identity" if i == len(dims) - 2 else "leaky_relu"
            layers.append(AffineLayer(_glorot(rng, a, b), np.zeros(b), act))
        return layers

    encoder = stack([n_genes, *hidden, latent_dim])
    decoder = stack([latent_dim + spatial_dim, *reversed(hidden), n_genes])
    hgcn = []
    dims = [n_genes, *hidden, spatial_dim]
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        act = "identity" if i == len(dims) - 2 else "leaky_relu"
        hgcn.append(GraphConvLayer(_glorot(rng, a, b), act))
    return ModelParams(encoder, decoder, hgcn)


def add_noise(latent: np.ndarray, noise_sd: float, seed: int) -> np.ndarray:
    """Return latent + Gaussian(0, noise_sd^2) noise; input untouched."""
    if noise_sd < 0:
        raise ValidationError("noise_sd must be non-negative")
    rng = np.random.default_rng(seed)
    return latent + rng.normal(0.0, noise_sd, size=latent.shape)


def _chain_forward(x: np.ndarray, layers: list[AffineLayer]):
    caches = []
    for layer in layers:
        pre = x @ layer.weight + layer.bias
        caches.append((x, pre))
        x = ACTIVATIONS[layer.activation][0](pre)
    return x, caches


def _chain_backward(d_out: np.ndarray, layers: list[AffineLayer], caches):
    grads = []
    for layer, (x_in, pre) in zip(reversed(layers), reversed(caches)):
        d_pre = d_out * ACTIVATIONS[layer.activation][1](pre)
        grads.append((x_in.T @ d_pre, d_pre.sum(axis=0)))
        d_out = d_pre @ layer.weight.T
    return d_out, list(reversed(grads))


def _as_propagation(norm) -> sp.spmatrix:
    prop = getattr(norm, "propagation", norm)
    if not (sp.issparse(prop) or isinstance(prop, np.ndarray)):
        raise ValidationError("expected a DegreeNormalization or a matrix")
    return prop


def _hgcn_forward(x: np.ndarray, prop, layers: list[GraphConvLayer]):
    caches = []
    for layer in layers:
        mixed = prop @ x  # (N, d_in)
        pre = mixed @ layer.weight
        caches.append((mixed, pre))
        x = ACTIVATIONS[layer.activation][0](pre)
    return x, caches


def _hgcn_backward(d_out: np.ndarray, prop, layers: list[GraphConvLayer], caches):
    grads = []
    for layer, (mixed, pre) in zip(reversed(layers), reversed(caches)):
        d_pre = d_out * ACTIVATIONS[layer.activation][1](pre)
        grads.append(mixed.T @ d_pre)
        d_out = prop.T @ (d_pre @ layer.weight.T)
    return d_out, list(reversed(grads))


def hgcn_forward(x: np.ndarray, norm, params: ModelParams) -> np.ndarray:
    """Hypergraph-convolutional encoding of x under the propagation operator.

    Layer l computes act(propagation @ x @ weight_l); hidden layers use the
    leaky rectifier, the final layer is linear. ``norm`` may be a
    DegreeNormalization or a raw (sparse or dense) propagation matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    prop = _as_propagation(norm)
    if params.hgcn_layers and x.shape[1] != params.hgcn_layers[0].weight.shape[0]:
        raise ValidationError(
            f"input width {x.shape[1]} does not match first graph layer "
            f"{params.hgcn_layers[0].weight.shape}"
        )
    out, _ = _hgcn_forward(x, prop, params.hgcn_layers)
    return out


def dae_forward(
    x: np.ndarray,
    params: ModelParams,
    spatial: np.ndarray,
    noise_sd: float = 0.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Denoising-autoencoder pass: encode, corrupt, decode.

    The decoder input is the concatenation of the noisy latent with the
    spatial embedding, so its width is latent_dim + spatial_dim.

    Returns
    -------
    (latent, reconstruction): the clean latent code and the reconstructed
    expression matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    spatial = np.asarray(spatial, dtype=np.float64)
    latent, _ = _chain_forward(x, params.dae_encoder)
    expected = params.dae_decoder[0].weight.shape[0] - latent.shape[1]
    if spatial.ndim != 2 or spatial.shape != (x.shape[0], expected):
        raise ValidationError(
            f"spatial embedding shape {spatial.shape} does not match decoder "
            f"input (expected ({x.shape[0]}, {expected}))"
        )
    noisy = add_noise(latent, noise_sd, seed)
    recon, _ = _chain_forward(np.hstack([noisy, spatial]), params.dae_decoder)
    return latent, recon


def mse_loss(x: np.ndarray, recon: np.ndarray) -> float:
    """Mean squared error over every entry of the reconstruction."""
    x = np.asarray(x, dtype=np.float64)
    recon = np.asarray(recon, dtype=np.float64)
    if x.shape != recon.shape:
        raise ValidationError(f"shape mismatch {x.shape} vs {recon.shape}")
    diff = recon - x
    return float(np.mean(diff * diff))


def node_to_edge_aggregate(x: np.ndarray, hg: Hypergraph) -> np.ndarray:
    """Stage 1 of message passing: mean of member-vertex rows per hyperedge."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[:, None]
    if arr.shape[0] != hg.n_vertices:
        raise ValidationError(f"{arr.shape[0]} rows for {hg.n_vertices} vertices")
    out = np.empty((hg.n_edges, arr.shape[1]))
    for j, edge in enumerate(hg.hyperedges):
        out[j] = arr[list(edge)].mean(axis=0)
    return out[:, 0] if single else out


def edge_to_node_aggregate(h_edges: np.ndarray, hg: Hypergraph) -> np.ndarray:
    """Stage 2 of message passing: mean of incident-hyperedge rows per vertex."""
    arr = np.asarray(h_edges, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[:, None]
    if arr.shape[0] != hg.n_edges:
        raise ValidationError(f"{arr.shape[0]} rows for {hg.n_edges} hyperedges")
    incident: list[list[int]] = [[] for _ in range(hg.n_vertices)]
    for j, edge in enumerate(hg.hyperedges):
        for v in edge:
            incident[v].append(j)
    out = np.empty((hg.n_vertices, arr.shape[1]))
    for v, edges in enumerate(incident):
        if not edges:
            raise ValidationError(f"vertex {v} is isolated")
        out[v] = arr[edges].mean(axis=0)
    return out[:, 0] if single else out


def similarity_decode(spatial: np.ndarray) -> np.ndarray:
    """Elementwise logistic of the Gram matrix of the embedding rows.

    The Gram matrix is symmetrized before the sigmoid, so the result is
    exactly symmetric. Saturated sigmoid values are nudged to the nearest
    representable numbers inside (0, 1) to keep every entry strictly open.
    """
    z = np.asarray(spatial, dtype=np.float64)
    if not np.isfinite(z).all():
        raise ValidationError("non-finite embedding")
    gram = z @ z.T
    gram = (gram + gram.T) / 2.0
    return np.clip(expit(gram), np.finfo(float).tiny, np.nextafter(1.0, 0.0))


def weighted_bce_loss(
    similarity: np.ndarray, adjacency: np.ndarray, pos_weight: float = 1.0
) -> float:
    """Weighted binary cross-entropy between similarity and adjacency.

    Positive entries (adjacency 1) are weighted by ``pos_weight`` to offset
    the sparsity of real adjacencies. Similarities are clamped away from
    {0, 1} before the logs.
    """
    s = np.asarray(similarity, dtype=np.float64)
    a = np.asarray(adjacency, dtype=np.float64)
    if s.shape != a.shape:
        raise ValidationError(f"shape mismatch {s.shape} vs {a.shape}")
    sc = np.clip(s, BCE_CLAMP, 1.0 - BCE_CLAMP)
    w = np.where(a == 1.0, pos_weight, 1.0)
    terms = w * (a * np.log(sc) + (1.0 - a) * np.log(1.0 - sc))
    return float(-terms.mean())


def _bce_grad_wrt_gram(
    s: np.ndarray, adjacency: np.ndarray, pos_weight: float
) -> np.ndarray:
    """d(weighted BCE)/d(gram), honoring the clamp (zero gradient outside)."""
    n_sq = s.size
    sc = np.clip(s, BCE_CLAMP, 1.0 - BCE_CLAMP)
    w = np.where(adjacency == 1.0, pos_weight, 1.0)
    d_sc = -(w / n_sq) * (adjacency / sc - (1.0 - adjacency) / (1.0 - sc))
    inside = (s > BCE_CLAMP) & (s < 1.0 - BCE_CLAMP)
    d_s = d_sc * inside
    return d_s * s * (1.0 - s)


@dataclass(frozen=True)
class TrainingBatch:
    """Fixed inputs for one full-batch loss evaluation.

    ``noise`` is the exact corruption matrix added to the latent code, so
    the loss is a deterministic function of the parameters (which is what
    the finite-difference gradient oracle requires).
    """

    x: np.ndarray
    propagation: object  # DegreeNormalization or matrix
    adjacency: np.ndarray
    noise: np.ndarray
    lambda_re: float = 1.0
    pos_weight: float = 1.0


@dataclass(frozen=True)
class LossBreakdown:
    reconstruction_mse: float
    adjacency_bce: float
    total: float


def _joint_forward(params: ModelParams, batch: TrainingBatch):
    x = np.asarray(batch.x, dtype=np.float64)
    prop = _as_propagation(batch.propagation)

    spatial, hg_caches = _hgcn_forward(x, prop, params.hgcn_layers)
    latent, enc_caches = _chain_forward(x, params.dae_encoder)
    if batch.noise.shape != latent.shape:
        raise ValidationError(
            f"noise shape {batch.noise.shape} does not match latent {latent.shape}"
        )
    noisy = latent + batch.noise
    dec_in = np.hstack([noisy, spatial])
    if dec_in.shape[1] != params.dae_decoder[0].weight.shape[0]:
        raise ValidationError(
            f"decoder input width {dec_in.shape[1]} does not match decoder "
            f"({params.dae_decoder[0].weight.shape[0]})"
        )
    recon, dec_caches = _chain_forward(dec_in, params.dae_decoder)

    mse = mse_loss(x, recon)
    gram = spatial @ spatial.T
    gram = (gram + gram.T) / 2.0
    similarity = expit(gram)
    bce = weighted_bce_loss(similarity, batch.adjacency, batch.pos_weight)
    total = mse + batch.lambda_re * bce
    if not np.isfinite(total):
        raise NumericError(
            "non-finite training loss; reduce the learning rate or noise level"
        )
    losses = LossBreakdown(mse, bce, total)
    caches = {
        "x": x,
        "prop": prop,
        "spatial": spatial,
        "similarity": similarity,
        "recon": recon,
        "hg": hg_caches,
        "enc": enc_caches,
        "dec": dec_caches,
        "latent_dim": latent.shape[1],
    }
    return losses, caches


def _joint_backward(params: ModelParams, batch: TrainingBatch, caches) -> ModelGrads:
    x = caches["x"]
    latent_dim = caches["latent_dim"]

    d_recon = 2.0 * (caches["recon"] - x) / x.size
    d_dec_in, dec_grads = _chain_backward(d_recon, params.dae_decoder, caches["dec"])
    d_latent = d_dec_in[:, :latent_dim]  # additive noise passes gradient through
    _, enc_grads = _chain_backward(d_latent, params.dae_encoder, caches["enc"])

    d_spatial = d_dec_in[:, latent_dim:].copy()
    if batch.lambda_re != 0.0:
        d_gram = batch.lambda_re * _bce_grad_wrt_gram(
            caches["similarity"], np.asarray(batch.adjacency, dtype=np.float64),
            batch.pos_weight,
        )
        d_gram = (d_gram + d_gram.T) / 2.0
        d_spatial += 2.0 * d_gram @ caches["spatial"]
    _, hg_grads = _hgcn_backward(
        d_spatial, caches["prop"], params.hgcn_layers, caches["hg"]
    )
    return ModelGrads(enc_grads, dec_grads, hg_grads)


def joint_loss(params: ModelParams, batch: TrainingBatch) -> LossBreakdown:
    """Forward-only evaluation of the joint training objective."""
    losses, _ = _joint_forward(params, batch)
    return losses


def joint_forward_backward(
    params: ModelParams, batch: TrainingBatch
) -> tuple[LossBreakdown, ModelGrads]:
    """One full-batch evaluation of the joint loss and all its gradients."""
    losses, caches = _joint_forward(params, batch)
    return losses, _joint_backward(params, batch, caches)
