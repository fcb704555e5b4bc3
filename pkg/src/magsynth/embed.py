"""Fixed quantum-reservoir embedding of signatures, simulated on a dense state vector.

The reservoir is a transverse-field Ising system on n_memory + n_processor
qubits. Per timestep, the processor register is reset to |0...0> (projection
plus renormalization, so the map stays deterministic), the timestep's channel
values are encoded as R_y rotations on the processor qubits, and the full
register evolves under exp(-i H dt) applied n_layers times. Memory qubits are
never re-encoded and carry history across timesteps. Per step, 57 observables
are read out (<Z_i> for every qubit, <Z_i Z_j> for every pair, mean <X>, mean
<Y>); the per-step trajectory is pooled with {last, mean, std} into a
3 x 57 = 171-dimensional embedding.

All reservoir parameters are frozen at construction from a structural seed and
are never trained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bank import MorphologyBank

STRUCTURAL_SEED = 211
COUPLING_SCALE = 0.5
FIELD_SCALE = 1.0
_NORM_FLOOR = 1e-12


def ising_hamiltonian(coupling: np.ndarray, field: np.ndarray) -> np.ndarray:
    """Dense H = sum_{i<j} J_ij Z_i Z_j + sum_i h_i X_i (qubit i = bit i of the index)."""
    coupling = np.asarray(coupling, dtype=np.float64)
    field = np.asarray(field, dtype=np.float64)
    n = field.size
    if coupling.shape != (n, n):
        raise ValueError("coupling must be (n, n) for an n-qubit field vector")
    if not np.allclose(coupling, coupling.T):
        raise ValueError("coupling matrix must be symmetric")
    dim = 1 << n
    idx = np.arange(dim)
    z = 1.0 - 2.0 * ((idx[None, :] >> np.arange(n)[:, None]) & 1)  # (n, dim)
    diag = np.zeros(dim)
    for i in range(n):
        for j in range(i + 1, n):
            diag += coupling[i, j] * z[i] * z[j]
    h = np.zeros((dim, dim))
    h[idx, idx] = diag
    for i in range(n):
        h[idx, idx ^ (1 << i)] += field[i]
    return h


def evolution_unitary(hamiltonian: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i H dt) by spectral decomposition of the real symmetric H."""
    w, v = np.linalg.eigh(hamiltonian)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


@dataclass(frozen=True, eq=False)
class ReservoirSpec:
    """Frozen reservoir: Hamiltonian parameters, encoding ranges, precomputed unitary."""

    n_memory: int
    n_processor: int
    n_layers: int
    coupling: np.ndarray       # (n, n) symmetric
    field: np.ndarray          # (n,)
    injection_scale: float     # rotation angle per unit normalized input
    dt: float
    channel_lo: np.ndarray     # (n_processor,) encoding ranges from the bank
    channel_hi: np.ndarray
    structural_seed: int
    step_unitary: np.ndarray   # (2^n, 2^n), exp(-iHdt)^n_layers
    z_signs: np.ndarray        # (n, 2^n)
    pair_signs: np.ndarray     # (n*(n-1)/2, 2^n)
    flip_idx: np.ndarray       # (n, 2^n)

    @property
    def n_qubits(self) -> int:
        return self.n_memory + self.n_processor

    @property
    def n_observables(self) -> int:
        n = self.n_qubits
        return n + n * (n - 1) // 2 + 2

    @property
    def embedding_dim(self) -> int:
        return 3 * self.n_observables


def reservoir_from_params(
    *,
    n_memory: int,
    n_processor: int,
    n_layers: int,
    coupling: np.ndarray,
    field: np.ndarray,
    injection_scale: float,
    dt: float,
    channel_lo: np.ndarray,
    channel_hi: np.ndarray,
    structural_seed: int,
) -> ReservoirSpec:
    """Assemble a spec from explicit parameters, precomputing the step unitary."""
    channel_lo = np.asarray(channel_lo, dtype=np.float64)
    channel_hi = np.asarray(channel_hi, dtype=np.float64)
    if channel_lo.shape != (n_processor,) or channel_hi.shape != (n_processor,):
        raise ValueError("channel ranges must have one entry per processor qubit")
    span = channel_hi - channel_lo
    channel_hi = np.where(span <= 0, channel_lo + 1.0, channel_hi)

    n = n_memory + n_processor
    layer = evolution_unitary(ising_hamiltonian(coupling, field), dt)
    step = layer
    for _ in range(n_layers - 1):
        step = step @ layer

    dim = 1 << n
    idx = np.arange(dim)
    z_signs = (1.0 - 2.0 * ((idx[None, :] >> np.arange(n)[:, None]) & 1)).astype(np.float64)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    pair_signs = np.stack([z_signs[i] * z_signs[j] for i, j in pairs])
    flip_idx = idx[None, :] ^ (1 << np.arange(n))[:, None]

    return ReservoirSpec(
        n_memory=n_memory,
        n_processor=n_processor,
        n_layers=n_layers,
        coupling=np.asarray(coupling, dtype=np.float64),
        field=np.asarray(field, dtype=np.float64),
        injection_scale=float(injection_scale),
        dt=float(dt),
        channel_lo=channel_lo,
        channel_hi=channel_hi,
        structural_seed=int(structural_seed),
        step_unitary=step,
        z_signs=z_signs,
        pair_signs=pair_signs,
        flip_idx=flip_idx,
    )


def build_reservoir(
    bank: MorphologyBank | None = None,
    *,
    n_memory: int = 4,
    n_processor: int = 6,
    n_layers: int = 2,
    dt: float = 1.0,
    injection_scale: float = float(np.pi),
    structural_seed: int = STRUCTURAL_SEED,
    channel_lo=None,
    channel_hi=None,
) -> ReservoirSpec:
    """Draw fixed reservoir parameters from the structural seed and precompute the unitary.

    Channel encoding ranges come from the bank (bank-wide per-channel min/max);
    reduced test reservoirs may pass explicit ranges instead.
    """
    if bank is not None:
        channel_lo, channel_hi = bank.channel_ranges()
    if channel_lo is None or channel_hi is None:
        raise ValueError("need a bank or explicit channel ranges")

    n = n_memory + n_processor
    rng = np.random.default_rng(structural_seed)
    upper = rng.uniform(-1.0, 1.0, size=(n, n)) * COUPLING_SCALE
    coupling = np.triu(upper, k=1)
    coupling = coupling + coupling.T
    field = rng.uniform(-1.0, 1.0, size=n) * FIELD_SCALE

    return reservoir_from_params(
        n_memory=n_memory,
        n_processor=n_processor,
        n_layers=n_layers,
        coupling=coupling,
        field=field,
        injection_scale=injection_scale,
        dt=dt,
        channel_lo=np.asarray(channel_lo, dtype=np.float64),
        channel_hi=np.asarray(channel_hi, dtype=np.float64),
        structural_seed=structural_seed,
    )


def _observables(psi: np.ndarray, spec: ReservoirSpec) -> np.ndarray:
    """All 57 per-step observables for a batch of states psi (dim, B) -> (n_obs, B)."""
    n = spec.n_qubits
    p = (psi.real**2 + psi.imag**2)
    z = spec.z_signs @ p
    zz = spec.pair_signs @ p
    psi_c = psi.conj()
    x_acc = np.zeros(psi.shape[1])
    y_acc = np.zeros(psi.shape[1])
    for i in range(n):
        cross = psi_c * psi[spec.flip_idx[i]]
        x_acc += cross.real.sum(axis=0)
        y_acc += (spec.z_signs[i][:, None] * cross).imag.sum(axis=0)
    return np.concatenate([z, zz, x_acc[None] / n, y_acc[None] / n], axis=0)


def _encode_processor(x_norm: np.ndarray, spec: ReservoirSpec) -> np.ndarray:
    """Product state of the processor register for normalized inputs x (C, B) -> (2^C, B)."""
    theta = spec.injection_scale * x_norm
    c = np.cos(theta / 2.0)
    s = np.sin(theta / 2.0)
    n_proc = spec.n_processor
    chi = np.stack([c[n_proc - 1], s[n_proc - 1]]).astype(np.complex128)
    for ch in range(n_proc - 2, -1, -1):
        q = np.stack([c[ch], s[ch]])
        chi = (chi[:, None, :] * q[None, :, :]).reshape(-1, x_norm.shape[1])
    return chi


def _run_batch(sigs: np.ndarray, spec: ReservoirSpec) -> np.ndarray:
    """Per-step observable trajectory for a batch of signatures -> (T, n_obs, B)."""
    b, t_len, n_ch = sigs.shape
    span = spec.channel_hi - spec.channel_lo
    x_norm = 2.0 * (sigs - spec.channel_lo) / span - 1.0  # (B, T, C)

    dim_mem = 1 << spec.n_memory
    dim = 1 << spec.n_qubits
    phi = np.zeros((dim_mem, b), dtype=np.complex128)
    phi[0] = 1.0  # memory register starts in |0...0>

    traj = np.empty((t_len, spec.n_observables, b))
    for t in range(t_len):
        chi = _encode_processor(x_norm[:, t, :].T, spec)
        psi = (chi[:, None, :] * phi[None, :, :]).reshape(dim, b)
        psi = spec.step_unitary @ psi
        traj[t] = _observables(psi, spec)
        # processor reset: project onto its |0...0> subspace, renormalize memory
        phi = psi.reshape(-1, dim_mem, b)[0].copy()
        norms = np.sqrt((phi.real**2 + phi.imag**2).sum(axis=0))
        dead = norms < _NORM_FLOOR
        if np.any(dead):
            phi[:, dead] = 0.0
            phi[0, dead] = 1.0
            norms = np.where(dead, 1.0, norms)
        phi /= norms
    return traj


def embed_signatures(
    sigs: np.ndarray,
    spec: ReservoirSpec,
    return_trajectory: bool = False,
    batch_size: int = 64,
):
    """Embed a stack of signatures (B, T, C) -> (B, 3 * n_obs).

    Pooling order is [last, mean, std] over the per-step observable trajectory.
    """
    sigs = np.asarray(sigs, dtype=np.float64)
    if sigs.ndim != 3 or sigs.shape[2] != spec.n_processor:
        raise ValueError(
            f"signatures must be (B, T, {spec.n_processor}), got {sigs.shape}"
        )
    if not np.all(np.isfinite(sigs)):
        raise ValueError("signatures contain non-finite entries")

    out = np.empty((sigs.shape[0], spec.embedding_dim))
    trajs = [] if return_trajectory else None
    for start in range(0, sigs.shape[0], batch_size):
        chunk = sigs[start : start + batch_size]
        traj = _run_batch(chunk, spec)  # (T, n_obs, b)
        pooled = np.concatenate([traj[-1], traj.mean(axis=0), traj.std(axis=0)], axis=0)
        out[start : start + chunk.shape[0]] = pooled.T
        if trajs is not None:
            trajs.append(np.transpose(traj, (2, 0, 1)))
    if trajs is not None:
        return out, np.concatenate(trajs, axis=0)
    return out


def embed(sig: np.ndarray, spec: ReservoirSpec) -> np.ndarray:
    """Embed one signature (T, C) -> (3 * n_obs,)."""
    sig = np.asarray(sig, dtype=np.float64)
    if sig.ndim != 2:
        raise ValueError("signature must be a (T, C) matrix")
    return embed_signatures(sig[None], spec)[0]
