"""Degradation modulator: LDA projection fit over bank embeddings and the
SOH-driven modulation chain (project, perturb, cone-restricted softmin decode,
blend, amplitude/spectral shaping).

The projection pipeline for an embedding e is

    z = ((e - mu_e) @ whitener - x_bar) @ W

where whitener realizes the inverse square root of the shrinkage-regularized
embedding covariance and W holds the multiclass discriminants (anchor voltages
as classes), scaled so each discriminant has unit within-class variance.

Degradation strength is delta = max(0, 1 - SOH). Modulation perturbs z by
-gamma * delta along the fitted state direction, decodes a morphology from the
bank by cone-restricted k-NN softmin retrieval around the perturbed point,
blends it with the base proportionally to min(1, blend_slope * delta), then
applies amplitude scaling and Gaussian spectral broadening. delta = 0 bypasses
every stage and returns the base unchanged.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .bank import MorphologyBank
from .core import BridgeConfig
from .embed import ReservoirSpec, embed, embed_signatures, reservoir_from_params

LDA_SHRINKAGE = 0.1
_COND_FLOOR = 1e-12


class SingularScatterError(ValueError):
    """Scatter matrix is numerically singular even after shrinkage."""


@dataclass(frozen=True, eq=False)
class LdaModel:
    """Fitted embedding-to-discriminant projection plus the bank it decodes from."""

    mu_e: np.ndarray              # (D,) embedding mean over the bank
    whitener: np.ndarray          # (D, D) shrinkage covariance inverse square root
    x_bar: np.ndarray             # (D,) post-whitening mean
    w_lda: np.ndarray             # (D, K-1) discriminant basis
    class_voltages: np.ndarray    # (K,) anchor voltages, the LDA classes
    centroids: np.ndarray         # (K, K-1) per-anchor centroids in discriminant space
    state_direction: np.ndarray   # (K-1,) unit vector along increasing voltage
    bank_coords: np.ndarray       # (N, K-1) projected bank samples
    bank_signatures: np.ndarray   # (N, 100, 6) raw bank samples for decoding
    reservoir: ReservoirSpec
    shrinkage: float
    scatter_within: float         # mean distance of bank points to their centroid
    separation: float             # mean pairwise centroid distance


def _sym_inv_sqrt(mat: np.ndarray, what: str) -> np.ndarray:
    w, v = np.linalg.eigh(mat)
    if w[-1] <= 0 or w[0] < _COND_FLOOR * w[-1]:
        raise SingularScatterError(f"{what} is singular even after shrinkage")
    return (v * w**-0.5) @ v.T


def _canonical_column_signs(w: np.ndarray) -> np.ndarray:
    flips = np.sign(w[np.argmax(np.abs(w), axis=0), np.arange(w.shape[1])])
    flips[flips == 0] = 1.0
    return w * flips


def fit_lda_model(
    bank: MorphologyBank, spec: ReservoirSpec, shrinkage: float = LDA_SHRINKAGE
) -> LdaModel:
    """Embed every bank sample and fit the discriminant projection.

    Covariance shrinkage: (1 - lam) * Cov + lam * (tr Cov / D) * I. Discriminants
    solve the standard multiclass eigenproblem on whitened embeddings; the state
    direction is the unit least-squares slope of anchor centroids against anchor
    voltage.
    """
    if bank.anchors.size < 2:
        raise ValueError("LDA fit needs at least 2 anchor classes")
    sigs = bank.all_samples()
    labels = bank.sample_anchor_labels()
    emb = embed_signatures(sigs, spec)
    n, d = emb.shape

    mu_e = emb.mean(axis=0)
    centered = emb - mu_e
    cov = centered.T @ centered / n
    trace = float(np.trace(cov))
    if trace <= 0:
        raise SingularScatterError("embedding covariance has zero trace")
    cov = (1.0 - shrinkage) * cov + shrinkage * (trace / d) * np.eye(d)
    whitener = _sym_inv_sqrt(cov, "shrunk embedding covariance")

    white = centered @ whitener
    x_bar = white.mean(axis=0)
    white0 = white - x_bar

    k = bank.anchors.size
    means = np.stack([white0[labels == i].mean(axis=0) for i in range(k)])
    counts = np.array([(labels == i).sum() for i in range(k)], dtype=np.float64)
    resid = white0 - means[labels]
    s_within = resid.T @ resid / n
    s_between = (means.T * (counts / n)) @ means

    sw_inv_half = _sym_inv_sqrt(s_within, "within-class scatter")
    core = sw_inv_half @ s_between @ sw_inv_half
    core = 0.5 * (core + core.T)
    evals, evecs = np.linalg.eigh(core)
    top = np.argsort(evals)[::-1][: k - 1]
    w_lda = _canonical_column_signs(sw_inv_half @ evecs[:, top])

    coords = white0 @ w_lda
    centroids = np.stack([coords[labels == i].mean(axis=0) for i in range(k)])

    v = bank.anchors - bank.anchors.mean()
    slope = (v @ (centroids - centroids.mean(axis=0))) / (v @ v)
    norm = np.linalg.norm(slope)
    if norm == 0:
        raise ValueError("anchor centroids carry no voltage trend")
    direction = slope / norm

    scatter = float(np.linalg.norm(coords - centroids[labels], axis=1).mean())
    pair_d = [
        float(np.linalg.norm(centroids[i] - centroids[j]))
        for i in range(k)
        for j in range(i + 1, k)
    ]
    separation = float(np.mean(pair_d))
    if not scatter < separation:
        raise ValueError(
            f"within-anchor scatter {scatter} not below centroid separation {separation}"
        )

    return LdaModel(
        mu_e=mu_e,
        whitener=whitener,
        x_bar=x_bar,
        w_lda=w_lda,
        class_voltages=bank.anchors.copy(),
        centroids=centroids,
        state_direction=direction,
        bank_coords=coords,
        bank_signatures=sigs,
        reservoir=spec,
        shrinkage=float(shrinkage),
        scatter_within=scatter,
        separation=separation,
    )


def project_embedding(e: np.ndarray, model: LdaModel) -> np.ndarray:
    """Project embeddings (D,) or (N, D) into the discriminant subspace."""
    e = np.asarray(e, dtype=np.float64)
    if not np.all(np.isfinite(e)):
        raise ValueError("embedding contains non-finite entries")
    return ((e - model.mu_e) @ model.whitener - model.x_bar) @ model.w_lda


def degradation_delta(soh: float) -> float:
    """delta = max(0, 1 - soh). Rejects non-finite and non-positive soh."""
    if not (math.isfinite(soh) and soh > 0):
        raise ValueError(f"soh must be finite and > 0, got {soh}")
    return max(0.0, 1.0 - soh)


def blend_fraction(delta: float, slope: float) -> float:
    return min(1.0, slope * delta)


def u_dispersion(u) -> float:
    """std(u) / max(mean |u|, 1e-9), clipped to [0, 2]."""
    u = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(u)):
        raise ValueError("u contains non-finite values")
    denom = max(float(np.mean(np.abs(u))), 1e-9)
    return float(np.clip(u.std() / denom, 0.0, 2.0))


def cone_mask(coords: np.ndarray, z_base: np.ndarray, pert: np.ndarray, half_angle_deg: float) -> np.ndarray:
    """Bank points whose displacement from z_base aligns with pert within the cone.

    Zero-displacement points count as in-cone.
    """
    disp = coords - z_base
    norms = np.linalg.norm(disp, axis=1)
    pert_norm = np.linalg.norm(pert)
    if pert_norm == 0:
        raise ValueError("cone axis must be a nonzero vector")
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = (disp @ pert) / (norms * pert_norm)
    cos[norms == 0] = 1.0
    return cos >= math.cos(math.radians(half_angle_deg))


def softmin_weights(distances: np.ndarray, tau: float) -> np.ndarray:
    """w_i proportional to exp(-d_i / tau); shift-stabilized, sums to 1."""
    d = np.asarray(distances, dtype=np.float64)
    scores = np.exp(-(d - d.min()) / tau)
    return scores / scores.sum()


def select_neighbors(
    coords: np.ndarray,
    z_base: np.ndarray,
    z_pert: np.ndarray,
    pert: np.ndarray,
    k: int,
    half_angle_deg: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Indices and distances of decode candidates around z_pert.

    In-cone candidates first; fewer than k in-cone means take them all; zero
    in-cone falls back to unrestricted k-NN, so decoding never fails.
    """
    d_all = np.linalg.norm(coords - z_pert, axis=1)
    mask = cone_mask(coords, z_base, pert, half_angle_deg)
    if mask.any():
        pool = np.nonzero(mask)[0]
    else:
        pool = np.arange(coords.shape[0])
    order = pool[np.argsort(d_all[pool], kind="stable")][:k]
    return order, d_all[order]


def gaussian_smooth(x: np.ndarray, width: float) -> np.ndarray:
    """Convolve with a normalized Gaussian kernel of the given std, edge-replicated."""
    if width <= 0:
        return np.array(x, dtype=np.float64, copy=True)
    radius = max(1, int(math.ceil(4.0 * width)))
    kern = np.exp(-0.5 * (np.arange(-radius, radius + 1) / width) ** 2)
    kern /= kern.sum()
    padded = np.pad(np.asarray(x, dtype=np.float64), radius, mode="edge")
    return np.convolve(padded, kern, mode="valid")


def modulate_projected(
    base: np.ndarray,
    delta: float,
    u,
    z_base: np.ndarray,
    model: LdaModel,
    config: BridgeConfig,
) -> np.ndarray:
    """Modulation chain after the base has been embedded and projected."""
    pert = -config.gamma * delta * model.state_direction
    z_pert = z_base + pert
    idx, dist = select_neighbors(
        model.bank_coords, z_base, z_pert, pert, config.k_nn, config.cone_half_angle_deg
    )
    weights = softmin_weights(dist, config.tau)
    decoded = np.tensordot(weights, model.bank_signatures[idx], axes=1)

    beta = blend_fraction(delta, config.blend_slope)
    out = (1.0 - beta) * base + beta * decoded
    out = out * (1.0 - config.amp_scale_coeff * delta)
    width = config.broaden_base_width * delta * (1.0 + config.broaden_u_coeff * u_dispersion(u))
    for c in range(out.shape[1]):
        out[:, c] = gaussian_smooth(out[:, c], width)
    return out


def modulate(
    base: np.ndarray,
    soh: float,
    u,
    model: LdaModel,
    config: BridgeConfig,
) -> np.ndarray:
    """Apply SOH-driven degradation to a base signature. soh = 1.0 is a bit-exact pass-through."""
    delta = degradation_delta(soh)
    if delta == 0.0:
        return np.array(base, dtype=np.float64, copy=True)
    z_base = project_embedding(embed(base, model.reservoir), model)
    return modulate_projected(base, delta, u, z_base, model, config)


# ---------------------------------------------------------------------------
# model export: deterministic binary container (JSON header line + raw <f8 data)
# ---------------------------------------------------------------------------

_ARRAY_FIELDS = (
    "mu_e",
    "whitener",
    "x_bar",
    "w_lda",
    "class_voltages",
    "centroids",
    "state_direction",
    "bank_coords",
    "bank_signatures",
)
_RESERVOIR_ARRAYS = ("coupling", "field", "channel_lo", "channel_hi")


def serialize_lda_model(model: LdaModel) -> bytes:
    header = {
        "format": "lda-model",
        "version": 1,
        "arrays": {name: list(getattr(model, name).shape) for name in _ARRAY_FIELDS},
        "reservoir_arrays": {
            name: list(getattr(model.reservoir, name).shape) for name in _RESERVOIR_ARRAYS
        },
        "scalars": {
            "shrinkage": model.shrinkage,
            "scatter_within": model.scatter_within,
            "separation": model.separation,
        },
        "reservoir": {
            "n_memory": model.reservoir.n_memory,
            "n_processor": model.reservoir.n_processor,
            "n_layers": model.reservoir.n_layers,
            "injection_scale": model.reservoir.injection_scale,
            "dt": model.reservoir.dt,
            "structural_seed": model.reservoir.structural_seed,
        },
    }
    blob = [json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"), b"\n"]
    for name in _ARRAY_FIELDS:
        blob.append(getattr(model, name).astype("<f8").tobytes(order="C"))
    for name in _RESERVOIR_ARRAYS:
        blob.append(getattr(model.reservoir, name).astype("<f8").tobytes(order="C"))
    return b"".join(blob)


def lda_model_sha256(model: LdaModel) -> str:
    return hashlib.sha256(serialize_lda_model(model)).hexdigest()


def save_lda_model(model: LdaModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_lda_model(model))


def load_lda_model(path) -> LdaModel:
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.index(b"\n")
    header = json.loads(data[:nl].decode("utf-8"))
    if header.get("format") != "lda-model":
        raise ValueError("not an lda-model file")
    offset = nl + 1

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += count * 8
        return arr.copy()

    arrays = {name: take(header["arrays"][name]) for name in _ARRAY_FIELDS}
    res_arrays = {name: take(header["reservoir_arrays"][name]) for name in _RESERVOIR_ARRAYS}
    res = header["reservoir"]
    spec = reservoir_from_params(
        n_memory=int(res["n_memory"]),
        n_processor=int(res["n_processor"]),
        n_layers=int(res["n_layers"]),
        coupling=res_arrays["coupling"],
        field=res_arrays["field"],
        injection_scale=float(res["injection_scale"]),
        dt=float(res["dt"]),
        channel_lo=res_arrays["channel_lo"],
        channel_hi=res_arrays["channel_hi"],
        structural_seed=int(res["structural_seed"]),
    )
    scalars = header["scalars"]
    return LdaModel(
        reservoir=spec,
        shrinkage=float(scalars["shrinkage"]),
        scatter_within=float(scalars["scatter_within"]),
        separation=float(scalars["separation"]),
        **arrays,
    )
