"""Rate computation, entropy references, envelope verification, and summaries."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import linear_etc as lin
from . import nonlinear_etc as nl
from .engine import BatchStats, Scenario, SimTrace, SweepResult, atomic_write_text

__all__ = [
    "RateReport",
    "EnvelopeReport",
    "EntropyReference",
    "compute_rate",
    "rate_from_sends",
    "verify_envelopes",
    "entropy_rate_linear",
    "demo_entropy",
    "demo_entropy_floor",
    "entropy_reference_for",
    "build_summary",
    "write_summary_json",
    "sweep_rows",
    "write_sweep_csv",
    "SWEEP_COLUMNS",
]

SWEEP_COLUMNS = ["gamma", "g_bits", "R_s", "entropy_ref", "max_z", "violations"]


@dataclass(frozen=True)
class RateReport:
    """Finite-horizon payload-rate statistics of one run.

    R_s pairs each send's bits with the interval to the next send, so the last
    send's bits are not counted: R_s = sum(bits[:-1]) / (t_last - t_first).
    With fewer than two sends the rate is undefined and reported as None.
    """

    r_s: float | None
    total_payload_bits: int
    elapsed_s: float | None  # span from first to last send
    trigger_count: int
    mean_interval_s: float | None
    min_interval_s: float | None
    max_abs_z: float
    envelope_violations: int


@dataclass(frozen=True)
class EnvelopeReport:
    """Observed maxima against the configured bounds (one-step slack included)."""

    slack: float
    global_bound: float
    max_abs_z: float
    global_excess: float
    reception_bound: float
    max_abs_z_post_jump: float | None  # None when the run had no receptions
    reception_excess: float
    candidate_bound: float | None  # periodic scheme only
    max_abs_z_at_candidates: float | None
    candidate_excess: float | None
    violations: int


@dataclass(frozen=True)
class EntropyReference:
    """Plant information-rate references the measured payload rate compares to."""

    linear_rate_bits_s: float | None
    pointwise: Callable[[float], float] | None
    floor_bits_s: float | None

    @property
    def reference_value(self) -> float | None:
        return (
            self.linear_rate_bits_s
            if self.linear_rate_bits_s is not None
            else self.floor_bits_s
        )


def entropy_rate_linear(lambda1: float) -> float:
    """Intrinsic rate of an unstable scalar mode: lambda1 / ln 2 bits per second."""
    if lambda1 <= 0:
        raise ValueError("lambda1 must be strictly positive")
    return lambda1 / math.log(2.0)


def demo_entropy(x):
    """Pointwise expansion rate of the scalar demo plant: d f / d x = 2 + cos(x)."""
    return 2.0 + np.cos(x)


def demo_entropy_floor() -> float:
    """Lower bound of the demo plant's pointwise rate: min over x of 2 + cos(x)."""
    return 2.0 + (-1.0)


def entropy_reference_for(scenario: Scenario) -> EntropyReference:
    if scenario.scheme == "linear":
        return EntropyReference(
            linear_rate_bits_s=entropy_rate_linear(scenario.linear.system.lambda1),
            pointwise=None,
            floor_bits_s=None,
        )
    if scenario.nonlinear.plant.plant_id == "scalar-demo":
        return EntropyReference(
            linear_rate_bits_s=None,
            pointwise=demo_entropy,
            floor_bits_s=demo_entropy_floor(),
        )
    return EntropyReference(None, None, None)


def rate_from_sends(
    times: np.ndarray, bits: np.ndarray
) -> tuple[float | None, float | None, float | None, float | None]:
    """(R_s, elapsed, mean interval, min interval) from send timestamps and sizes.

    Events are sorted by timestamp first, so the result depends only on the
    event multiset.
    """
    order = np.argsort(times)
    times = np.asarray(times, dtype=float)[order]
    bits = np.asarray(bits, dtype=float)[order]
    if len(times) < 2:
        return None, None, None, None
    gaps = np.diff(times)
    span = float(times[-1] - times[0])
    r_s = float(np.sum(bits[:-1]) / span)
    return r_s, span, float(np.mean(gaps)), float(np.min(gaps))


def compute_rate(trace: SimTrace) -> RateReport:
    """Finite-horizon rate report of a run, including envelope verification."""
    times = np.array([s.t for s in trace.sends])
    bits = np.array([s.g_bits for s in trace.sends])
    r_s, span, mean_gap, min_gap = rate_from_sends(times, bits)
    env = verify_envelopes(trace)
    return RateReport(
        r_s=r_s,
        total_payload_bits=int(np.sum(bits)) if len(bits) else 0,
        elapsed_s=span,
        trigger_count=len(trace.sends),
        mean_interval_s=mean_gap,
        min_interval_s=min_gap,
        max_abs_z=float(np.max(np.abs(trace.z[:, 0]))) if trace.n_steps else 0.0,
        envelope_violations=env.violations,
    )


def verify_envelopes(trace: SimTrace) -> EnvelopeReport:
    """Check the trace against the scheme's bounds plus the one-step slack."""
    sc = trace.scenario
    post = [abs(r.z_after) for r in trace.receptions]
    max_post = max(post) if post else None
    if sc.scheme == "linear":
        cfg = sc.linear.trigger
        slack = lin.one_step_slack(cfg, sc.delta_s)
        gbound = lin.envelope_bound(cfg)
        rbound = lin.post_reception_bound(cfg)
        cand_bound = None
        max_cand = None
    else:
        cfg = sc.nonlinear.trigger
        slack = nl.one_step_slack(cfg, sc.delta_s)
        gbound = nl.global_bound(cfg)
        rbound = cfg.threshold
        cand_bound = nl.candidate_bound(cfg)
        p = nl.period_steps(cfg, sc.delta_s)
        idx = np.arange(0, trace.n_steps, p)
        max_cand = float(np.max(np.abs(trace.z[idx, 0]))) if len(idx) else 0.0

    max_abs_z = float(np.max(np.abs(trace.z[:, 0]))) if trace.n_steps else 0.0
    global_excess = max(0.0, max_abs_z - (gbound + slack))
    reception_excess = max(0.0, (max_post or 0.0) - (rbound + slack))
    violations = int(global_excess > 0)
    violations += sum(1 for v in post if v > rbound + slack)
    cand_excess = None
    if cand_bound is not None:
        cand_excess = max(0.0, (max_cand or 0.0) - (cand_bound + slack))
        violations += int(cand_excess > 0)
    return EnvelopeReport(
        slack=slack,
        global_bound=gbound,
        max_abs_z=max_abs_z,
        global_excess=global_excess,
        reception_bound=rbound,
        max_abs_z_post_jump=max_post,
        reception_excess=reception_excess,
        candidate_bound=cand_bound,
        max_abs_z_at_candidates=max_cand,
        candidate_excess=cand_excess,
        violations=violations,
    )


def _scheme_block(sc: Scenario) -> dict:
    if sc.scheme == "linear":
        cfg = sc.linear.trigger
        return {
            "threshold_J": cfg.threshold,
            "rho0": cfg.rho0,
            "safety_b": cfg.safety,
            "g_bits_used": sc.linear.g_bits,
            "g_bits_formula": sc.linear.g_formula_bits,
            "min_intertrigger_bound_s": lin.min_intertrigger_bound(cfg),
            "envelope_bound": lin.envelope_bound(cfg),
            "post_reception_bound": lin.post_reception_bound(cfg),
            "one_step_slack": lin.one_step_slack(cfg, sc.delta_s),
            "K": list(sc.linear.system.K),
            "lambda1": sc.linear.system.lambda1,
        }
    cfg = sc.nonlinear.trigger
    deploy_rate, bound_rate = nl.rate_lower_bound(cfg, sc.nonlinear.g_bits)
    return {
        "threshold_J": cfg.threshold,
        "alpha_s": cfg.alpha_s,
        "g_bits_used": sc.nonlinear.g_bits,
        "g_lower_bound_bits": sc.nonlinear.g_lower_bound_bits,
        "candidate_bound": nl.candidate_bound(cfg),
        "global_bound": nl.global_bound(cfg),
        "one_step_slack": nl.one_step_slack(cfg, sc.delta_s),
        "rate_if_every_period_bits_s": deploy_rate,
        "rate_lower_bound_bits_s": bound_rate,
        "gain": sc.nonlinear.gain,
    }


def build_summary(trace: SimTrace) -> dict:
    """JSON-ready summary of one run: rate report, envelope report, references."""
    sc = trace.scenario
    rate = compute_rate(trace)
    env = verify_envelopes(trace)
    ref = entropy_reference_for(sc)
    env_dict = asdict(env)
    return {
        "scenario": sc.name,
        "variant": sc.variant,
        "scheme": sc.scheme,
        "seed": sc.seed,
        "run_index": trace.run_index,
        "delta_s": sc.delta_s,
        "horizon_s": sc.horizon_s,
        "gamma_s": sc.channel.gamma_s,
        "min_delay_steps": sc.channel.min_delay_steps,
        "aborted": trace.aborted,
        "steps_recorded": trace.n_steps,
        "sends": len(trace.sends),
        "receptions": len(trace.receptions),
        "rate": asdict(rate),
        "envelopes": env_dict,
        "entropy_reference_bits_s": ref.reference_value,
        "scheme_params": _scheme_block(sc),
    }


def write_summary_json(summary: dict, path) -> None:
    atomic_write_text(path, json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _point_violations(stats: BatchStats, meta: dict) -> int:
    """Runs violating the global envelope or the reception contract (with slack)."""
    post = np.where(np.isfinite(stats.max_abs_z_post_jump), stats.max_abs_z_post_jump, 0.0)
    bad = (stats.max_abs_z > meta["global_bound_slack"]) | (
        post > meta["reception_bound_slack"]
    )
    bad |= stats.diverged | stats.breached
    return int(np.sum(bad))


def sweep_rows(results: list[SweepResult]) -> list[dict]:
    """Aggregate sweep results into the documented CSV rows (skipped points omitted)."""
    rows = []
    for res in results:
        if res.skipped:
            continue
        stats = res.stats
        rates = stats.rates()
        r_s = float(np.nanmean(rates)) if np.any(np.isfinite(rates)) else math.nan
        rows.append(
            {
                "gamma": res.gamma_s,
                "g_bits": res.g_bits,
                "R_s": r_s,
                "entropy_ref": res.meta["entropy_ref"],
                "max_z": float(np.max(stats.max_abs_z)),
                "violations": _point_violations(stats, res.meta),
            }
        )
    return rows


def write_sweep_csv(rows: list[dict], path) -> None:
    out = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        out.append(
            ",".join(
                [
                    repr(float(row["gamma"])),
                    str(int(row["g_bits"])),
                    repr(float(row["R_s"])),
                    repr(float(row["entropy_ref"])),
                    repr(float(row["max_z"])),
                    str(int(row["violations"])),
                ]
            )
        )
    atomic_write_text(path, "\n".join(out) + "\n")
