"""Release validation: the five-invariant sanity suite, the two-sample KS
statistic, and the anchor-fidelity report (KS pass rate, std ratios,
correlation MAD)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .bank import MorphologyBank, base_morphology
from .conditioning import generate_demo_conditioning
from .core import GROUNDED, REGIME_B, BridgeConfig, derive_sample_seed
from .embed import embed
from .modulator import LdaModel, degradation_delta, modulate, modulate_projected, project_embedding
from .noise import apply_noise
from .regime import VoltageRangeError, classify

SOH_PROBE_GRID = (1.00, 0.95, 0.90, 0.85, 0.80, 0.75)
SOH_PROBE_VOLTAGES = (3.10, 2.81)
SMOOTHNESS_PROBES = (2.7, 2.9, 3.2)
BOUNDARY_TABLE = {2.54: REGIME_B, 2.81: REGIME_B, 3.00: REGIME_B, 3.06: GROUNDED, 3.10: GROUNDED, 3.34: GROUNDED}
REJECTION_PROBES = (2.00, 4.00)
REPLICA_TOLERANCE = 1e-10

_NEUTRAL_U = np.full(21, 3.2)


@dataclass(frozen=True)
class SanityCheck:
    name: str
    passed: bool
    details: dict


@dataclass(frozen=True)
class SanityReport:
    checks: tuple[SanityCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> str:
        payload = {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "details": c.details} for c in self.checks
            ],
        }
        return json.dumps(payload, indent=2) + "\n"


def _check_anchor_replica(bank: MorphologyBank) -> SanityCheck:
    devs = {}
    for i, v in enumerate(bank.anchors):
        replica = base_morphology(bank, float(v), "replica")
        empirical = bank.samples[i].mean(axis=0)
        devs[f"{v:g}"] = float(np.max(np.abs(replica - empirical)))
    worst = max(devs.values())
    return SanityCheck(
        name="anchor_replica_identity",
        passed=worst <= REPLICA_TOLERANCE,
        details={"max_abs_deviation": worst, "tolerance": REPLICA_TOLERANCE, "per_anchor": devs},
    )


def _check_soh_monotonicity(
    bank: MorphologyBank, model: LdaModel, config: BridgeConfig, master_seed: int
) -> SanityCheck:
    details = {}
    ok = True
    for v in SOH_PROBE_VOLTAGES:
        rng = np.random.default_rng(derive_sample_seed(master_seed, f"sanity:soh:{v:g}"))
        base = base_morphology(bank, v, "stochastic", rng)
        z_base = project_embedding(embed(base, model.reservoir), model)
        distances = []
        for soh in SOH_PROBE_GRID[1:]:
            out = modulate_projected(base, degradation_delta(soh), _NEUTRAL_U, z_base, model, config)
            distances.append(float(np.linalg.norm(out - base)))
        increasing = distances[0] > 0 and all(b > a for a, b in zip(distances, distances[1:]))
        ok &= increasing
        details[f"{v:g}"] = {"distances": distances, "strictly_increasing": increasing}
    return SanityCheck(name="soh_monotonicity", passed=ok, details=details)


def _check_voltage_smoothness(bank: MorphologyBank) -> SanityCheck:
    details = {}
    ok = True
    for v in SMOOTHNESS_PROBES:
        ref = base_morphology(bank, v, "replica")
        d_small = float(np.linalg.norm(ref - base_morphology(bank, v + 0.01, "replica")))
        d_big = float(np.linalg.norm(ref - base_morphology(bank, v + 0.10, "replica")))
        ok &= d_small < d_big
        details[f"{v:g}"] = {"l2_step_0.01": d_small, "l2_step_0.10": d_big}
    return SanityCheck(name="voltage_smoothness", passed=ok, details=details)


def _check_regime_boundaries(config: BridgeConfig, bank: MorphologyBank) -> SanityCheck:
    table = {}
    ok = True
    for v, expected in BOUNDARY_TABLE.items():
        got = classify(v, config, bank.anchors).regime
        table[f"{v:g}"] = got
        ok &= got == expected
    rejected = {}
    for v in REJECTION_PROBES:
        try:
            classify(v, config, bank.anchors)
            rejected[f"{v:g}"] = False
            ok = False
        except VoltageRangeError:
            rejected[f"{v:g}"] = True
    return SanityCheck(
        name="regime_boundaries", passed=ok, details={"table": table, "rejected": rejected}
    )


def _check_anomaly_flags(
    bank: MorphologyBank, model: LdaModel, config: BridgeConfig, master_seed: int
) -> SanityCheck:
    from .emit import DatasetPlan, generate_records

    conditioning = generate_demo_conditioning(8, derive_sample_seed(master_seed, "sanity:cond"))
    plan = DatasetPlan(
        n_grounded=40,
        n_anomaly=8,
        n_regime_b=6,
        conditioning=tuple(conditioning),
        master_seed=derive_sample_seed(master_seed, "sanity:probe"),
        config=config,
    )
    records = generate_records(plan, bank, model)
    violations = 0
    for rec in records:
        if rec.regime == REGIME_B and not rec.anomaly_flag:
            violations += 1
        if rec.regime == GROUNDED and rec.anomaly_subtype == "none" and rec.anomaly_flag:
            violations += 1
        if rec.anomaly_subtype != "none" and not (rec.anomaly_flag and rec.parent_sample_id):
            violations += 1
    return SanityCheck(
        name="anomaly_flag_consistency",
        passed=violations == 0,
        details={"rows_checked": len(records), "violations": violations},
    )


def run_sanity_suite(
    bank: MorphologyBank, model: LdaModel, config: BridgeConfig, master_seed: int = 0
) -> SanityReport:
    """Run the five release-blocking invariants. Failures are report entries, never raises."""
    checks = []
    for fn, args in (
        (_check_anchor_replica, (bank,)),
        (_check_soh_monotonicity, (bank, model, config, master_seed)),
        (_check_voltage_smoothness, (bank,)),
        (_check_regime_boundaries, (config, bank)),
        (_check_anomaly_flags, (bank, model, config, master_seed)),
    ):
        try:
            checks.append(fn(*args))
        except Exception as exc:  # a crashed invariant is a failed invariant
            checks.append(SanityCheck(name=fn.__name__.lstrip("_"), passed=False, details={"error": str(exc)}))
    return SanityReport(checks=tuple(checks))


# ---------------------------------------------------------------------------
# two-sample Kolmogorov-Smirnov
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float


def kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution, Q(lambda)."""
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        # theta-function form, accurate for small lambda
        t = math.exp(-math.pi**2 / (8 * lam**2))
        cdf = math.sqrt(2 * math.pi) / lam * (t + t**9 + t**25 + t**49)
        return min(1.0, max(0.0, 1.0 - cdf))
    total = 0.0
    for j in range(1, 101):
        term = 2.0 * (-1.0) ** (j - 1) * math.exp(-2.0 * j * j * lam * lam)
        total += term
        if abs(term) < 1e-16:
            break
    return min(1.0, max(0.0, total))


def ks_two_sample(a, b) -> KsResult:
    """sup-distance between the two empirical CDFs, with the asymptotic p-value.

    Effective sample size is |a||b| / (|a| + |b|).
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size < 5 or b.size < 5:
        raise ValueError("ks_two_sample needs at least 5 points per sample")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("ks_two_sample requires finite inputs")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    stat = float(np.max(np.abs(cdf_a - cdf_b)))
    n_eff = a.size * b.size / (a.size + b.size)
    return KsResult(statistic=stat, p_value=kolmogorov_sf(math.sqrt(n_eff) * stat))


# ---------------------------------------------------------------------------
# anchor fidelity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FidelityReport:
    anchor: float
    n_synthetic: int
    ks_statistics: tuple[float, ...]
    ks_pvalues: tuple[float, ...]
    ks_pass: tuple[bool, ...]
    per_timestep_pass_fraction: tuple[float, ...]
    std_ratios: tuple[float, ...]
    correlation_mad: float
    delta_zero_identity: bool

    @property
    def all_channels_pass(self) -> bool:
        return all(self.ks_pass)

    def to_json(self) -> str:
        payload = {
            "anchor": self.anchor,
            "n_synthetic": self.n_synthetic,
            "ks_statistics": list(self.ks_statistics),
            "ks_pvalues": list(self.ks_pvalues),
            "ks_pass": list(self.ks_pass),
            "per_timestep_pass_fraction": list(self.per_timestep_pass_fraction),
            "std_ratios": list(self.std_ratios),
            "correlation_mad": self.correlation_mad,
            "delta_zero_identity": self.delta_zero_identity,
            "all_channels_pass": self.all_channels_pass,
        }
        return json.dumps(payload, indent=2) + "\n"


def anchor_fidelity_report(
    bank: MorphologyBank,
    model: LdaModel,
    config: BridgeConfig,
    anchor: float,
    n: int = 41,
    alpha: float = 0.05,
    master_seed: int = 0,
) -> FidelityReport:
    """Compare n SOH=1.0 generations at a grounded anchor against the real bank scans.

    Generation runs the full grounded path at SOH=1.0 and SOC=50: the modulator
    is bypassed (verified bit-exactly) and the SOC fluctuation is zero, so the
    only divergence sources are the stochastic base draw and sensor noise.
    """
    decision = classify(anchor, config, bank.anchors)
    if decision.regime != GROUNDED:
        raise ValueError(f"anchor {anchor} is not in the grounded range")
    matches = np.nonzero(np.abs(bank.anchors - anchor) <= 1e-12)[0]
    if not matches.size:
        raise ValueError(f"{anchor} is not a bank anchor")
    idx = int(matches[0])

    identity_ok = True
    synth = np.empty((n,) + bank.mu[idx].shape)
    for i in range(n):
        rng = np.random.default_rng(
            derive_sample_seed(master_seed, f"fidelity:{anchor:g}:{i:03d}")
        )
        base = base_morphology(bank, anchor, "stochastic", rng)
        passed_through = modulate(base, 1.0, _NEUTRAL_U, model, config)
        identity_ok &= bool(np.array_equal(passed_through, base))
        synth[i] = apply_noise(passed_through, 50.0, bank.sigma[idx], config, rng)

    real = bank.samples[idx]
    ks_stats, ks_ps, ks_ok, frac, ratios = [], [], [], [], []
    for c in range(synth.shape[2]):
        res = ks_two_sample(synth[:, :, c].ravel(), real[:, :, c].ravel())
        ks_stats.append(res.statistic)
        ks_ps.append(res.p_value)
        ks_ok.append(res.p_value > alpha)
        per_t = [
            ks_two_sample(synth[:, t, c], real[:, t, c]).p_value > alpha
            for t in range(synth.shape[1])
        ]
        frac.append(float(np.mean(per_t)))
        ratios.append(float(synth[:, :, c].std() / real[:, :, c].std()))

    corr_s = np.corrcoef(synth.reshape(-1, synth.shape[2]), rowvar=False)
    corr_r = np.corrcoef(real.reshape(-1, real.shape[2]), rowvar=False)
    mad = float(np.mean(np.abs(corr_s - corr_r)))

    return FidelityReport(
        anchor=float(anchor),
        n_synthetic=n,
        ks_statistics=tuple(ks_stats),
        ks_pvalues=tuple(ks_ps),
        ks_pass=tuple(ks_ok),
        per_timestep_pass_fraction=tuple(frac),
        std_ratios=tuple(ratios),
        correlation_mad=mad,
        delta_zero_identity=identity_ok,
    )
