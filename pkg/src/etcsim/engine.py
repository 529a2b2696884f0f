"""Deterministic fixed-step closed-loop executor for both triggering schemes.

Step order at each sampling instant t = i*delta:

  1. poll the channel; on a delivery, decode and apply the jump (controller
     estimate and sensor mirror move together: the sensor learns reception
     times through the control input),
  2. compute the control input from the current estimate,
  3. evaluate the trigger rule; encode and send on a firing,
  4. draw the disturbance for the step,
  5. advance the plant and the estimator flow by one Euler step.

A trace row is recorded after stage 4 and holds the values valid at time t;
stage 5 produces the state for t + delta.  Runs are deterministic functions of
(scenario, run_index): run r derives its streams from SeedSequence([seed, r]),
split once into (channel, disturbance) children.

``run`` executes one run and keeps the full trace.  ``run_batch`` executes many
runs in numpy lockstep and keeps contract/rate statistics only; it consumes
the identical per-run streams, so its runs match ``run`` one for one.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import linear_etc as lin
from . import nonlinear_etc as nl
from .channel import ChannelConfig, DelayChannel, Packet, max_sends_budget
from .errors import ConfigError, EnvelopeBreachError, ProtocolViolationError
from .plants import DisturbanceSource, LinearDiagonalSystem, ScalarNonlinearPlant

__all__ = [
    "LinearSetup",
    "NonlinearSetup",
    "Scenario",
    "SendEvent",
    "ReceptionEvent",
    "SimTrace",
    "BatchStats",
    "SweepResult",
    "run",
    "run_batch",
    "sweep",
    "write_trace_csv",
    "write_events_csv",
    "atomic_write_text",
    "DIVERGENCE_LIMIT",
]

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class LinearSetup:
    """Threshold-scheme wiring: diagonalized plant, trigger parameters, payload size."""

    system: LinearDiagonalSystem
    trigger: lin.LinearTriggerConfig
    x0: tuple[float, float]  # diagonal coordinates
    xhat0: tuple[float, float]
    g_bits: int  # payload size used on the wire
    g_formula_bits: int  # size the packet-size formula yields
    truth: str = "diagonal"  # "diagonal" | "pendulum" (full sin() plant)
    w2_bound: float = 0.02  # physical angular-acceleration disturbance, pendulum truth


@dataclass(frozen=True)
class NonlinearSetup:
    """Periodic-scheme wiring: scalar plant, trigger parameters, payload size."""

    plant: ScalarNonlinearPlant
    trigger: nl.NonlinearTriggerConfig
    gain: float  # u = -gain * xhat
    x0: float
    xhat0: float
    g_bits: int
    g_lower_bound_bits: float


@dataclass(frozen=True)
class Scenario:
    name: str
    scheme: str  # "linear" | "nonlinear"
    delta_s: float
    horizon_s: float
    seed: int
    channel: ChannelConfig
    disturbance_law: str = "uniform"
    variant: str | None = None
    linear: LinearSetup | None = None
    nonlinear: NonlinearSetup | None = None

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_s / self.delta_s))

    @property
    def slug(self) -> str:
        base = self.name.replace("/", "-")
        return f"{base}-{self.variant}" if self.variant else base


@dataclass(frozen=True)
class SendEvent:
    seq: int
    step: int
    t: float
    g_bits: int
    payload: str
    z_at_send: float


@dataclass(frozen=True)
class ReceptionEvent:
    seq: int
    step: int
    t: float
    delay_s: float
    z_after: float


@dataclass
class SimTrace:
    """Full per-step record of one run plus its send/reception events."""

    scenario: Scenario
    run_index: int
    t: np.ndarray
    x: np.ndarray  # (n, d) diagonal or scalar state
    xhat: np.ndarray
    z: np.ndarray
    u: np.ndarray
    w: np.ndarray
    phys: np.ndarray | None  # (n, 2) phi, phidot for the linear scheme
    sends: list[SendEvent]
    receptions: list[ReceptionEvent]
    aborted: str | None  # None | "divergence" | "envelope-breach"

    @property
    def n_steps(self) -> int:
        return len(self.t)

    @property
    def diverged(self) -> bool:
        return self.aborted == "divergence"


def _run_rngs(
    scenario: Scenario, run_index: int
) -> tuple[np.random.Generator, np.random.Generator]:
    """Per-run (channel, disturbance) generators; documented splitting rule."""
    base = np.random.SeedSequence([scenario.seed, run_index])
    ch_ss, w_ss = base.spawn(2)
    if scenario.channel.seed is not None:
        ch_ss = np.random.SeedSequence([scenario.channel.seed, run_index])
    return (
        np.random.Generator(np.random.PCG64(ch_ss)),
        np.random.Generator(np.random.PCG64(w_ss)),
    )


def _bad_state(*values: np.ndarray | float) -> bool:
    for v in values:
        arr = np.asarray(v)
        if not np.all(np.isfinite(arr)) or np.max(np.abs(arr)) > DIVERGENCE_LIMIT:
            return True
    return False


def run(scenario: Scenario, run_index: int = 0) -> SimTrace:
    """Execute one seeded run and return its full trace."""
    if scenario.scheme == "linear":
        return _run_linear(scenario, run_index)
    if scenario.scheme == "nonlinear":
        return _run_nonlinear(scenario, run_index)
    raise ConfigError(f"unknown scheme {scenario.scheme!r}")


def _run_linear(sc: Scenario, run_index: int) -> SimTrace:
    setup = sc.linear
    assert setup is not None
    sys_ = setup.system
    cfg = setup.trigger
    delta = sc.delta_s
    steps = sc.n_steps
    ch_rng, w_rng = _run_rngs(sc, run_index)
    channel = DelayChannel(sc.channel, ch_rng, max_sends_budget(steps, sc.channel))
    pendulum_truth = setup.truth == "pendulum"
    w_dim = 1 if pendulum_truth else 2
    w_bound = setup.w2_bound if pendulum_truth else sys_.w_bound
    w_all = DisturbanceSource(w_bound, w_rng, sc.disturbance_law).draw(steps, w_dim)

    lam = sys_.eigenvalues
    B = sys_.B
    K0, K1 = sys_.K
    J = cfg.threshold
    min_delay_s = sc.channel.min_delay_s

    x = np.array(setup.x0, dtype=float)
    phys = sys_.to_physical(x) if pendulum_truth else None
    xh = np.array(setup.xhat0, dtype=float)

    T = np.empty(steps)
    X = np.empty((steps, 2))
    XH = np.empty((steps, 2))
    Z = np.empty((steps, 2))
    U = np.empty(steps)
    W = np.zeros((steps, 2))
    PH = np.empty((steps, 2))

    sends: list[SendEvent] = []
    recs: list[ReceptionEvent] = []
    state = lin.LinearSchemeState()
    seq = 0
    aborted: str | None = None
    n_rows = steps

    for i in range(steps):
        t = i * delta
        x_diag = sys_.from_physical(phys) if pendulum_truth else x

        pkt = channel.poll(t)
        if pkt is not None:
            new_xh1, _zbar, _q = lin.decode_and_jump(
                pkt.payload, t, cfg, min_delay_s, xh[0]
            )
            xh[0] = new_xh1
            state.on_reception(t)
            recs.append(
                ReceptionEvent(pkt.seq, i, t, t - pkt.t_send, x_diag[0] - xh[0])
            )

        u = -(K0 * xh[0] + K1 * xh[1])
        z = x_diag - xh

        if lin.check_trigger(z[0], J, state.awaiting_ack):
            sign = 1.0 if z[0] >= 0 else -1.0
            payload = lin.encode_timing(t, sign > 0, setup.g_bits, cfg.gamma_s)
            channel.send(Packet(seq, payload, t))
            state.on_send(t, sign)
            sends.append(SendEvent(seq, i, t, setup.g_bits, payload, z[0]))
            seq += 1

        wi = w_all[i]

        T[i] = t
        X[i] = x_diag
        XH[i] = xh
        Z[i] = z
        U[i] = u
        PH[i] = phys if pendulum_truth else sys_.to_physical(x_diag)
        if pendulum_truth:
            W[i, 1] = wi[0]
        else:
            W[i] = wi

        if pendulum_truth:
            phi, phidot = phys
            phys = phys + delta * np.array(
                [phidot, sys_.a21 * math.sin(phi) + sys_.b2_input * u + wi[0]]
            )
            state_probe: tuple = (phys, xh)
        else:
            x = x + delta * (lam * x + B * u + wi)
            state_probe = (x, xh)
        xh = xh + delta * (lam * xh + B * u)

        if _bad_state(*state_probe):
            aborted = "divergence"
            n_rows = i + 1
            break

    return SimTrace(
        scenario=sc,
        run_index=run_index,
        t=T[:n_rows],
        x=X[:n_rows],
        xhat=XH[:n_rows],
        z=Z[:n_rows],
        u=U[:n_rows],
        w=W[:n_rows],
        phys=PH[:n_rows],
        sends=sends,
        receptions=recs,
        aborted=aborted,
    )


def _run_nonlinear(sc: Scenario, run_index: int) -> SimTrace:
    setup = sc.nonlinear
    assert setup is not None
    plant = setup.plant
    cfg = setup.trigger
    delta = sc.delta_s
    steps = sc.n_steps
    ch_rng, w_rng = _run_rngs(sc, run_index)
    channel = DelayChannel(sc.channel, ch_rng, max_sends_budget(steps, sc.channel))
    w_all = DisturbanceSource(plant.w_bound, w_rng, sc.disturbance_law).draw(steps, 1)

    p_steps = nl.period_steps(cfg, delta)
    quant = nl.UniformErrorQuantizer(
        nl.candidate_bound(cfg), setup.g_bits, slack=nl.one_step_slack(cfg, delta)
    )
    J = cfg.threshold

    x = float(setup.x0)
    xh = float(setup.xhat0)

    T = np.empty(steps)
    X = np.empty(steps)
    XH = np.empty(steps)
    Z = np.empty(steps)
    U = np.empty(steps)
    W = np.empty(steps)

    sends: list[SendEvent] = []
    recs: list[ReceptionEvent] = []
    send_step_of_seq: dict[int, int] = {}
    seq = 0
    aborted: str | None = None
    n_rows = steps

    for i in range(steps):
        t = i * delta

        pkt = channel.poll(t)
        if pkt is not None:
            zdec = float(quant.decode(quant.parse(pkt.payload)))
            i_s = send_step_of_seq[pkt.seq]
            xh = nl.reconstruct(plant, zdec + XH[i_s], U[i_s:i], delta)
            recs.append(ReceptionEvent(pkt.seq, i, t, t - pkt.t_send, x - xh))

        u = -setup.gain * xh
        z = x - xh

        if i % p_steps == 0 and nl.check_trigger(z, J):
            if channel.busy:  # cannot happen: period exceeds the delay bound
                raise ProtocolViolationError("candidate fired while packet in flight")
            try:
                idx = quant.encode(z)
            except EnvelopeBreachError:
                aborted = "envelope-breach"
                T[i] = t
                X[i] = x
                XH[i] = xh
                Z[i] = z
                U[i] = u
                W[i] = w_all[i, 0]
                n_rows = i + 1
                break
            payload = quant.payload(idx)
            channel.send(Packet(seq, payload, t))
            sends.append(SendEvent(seq, i, t, setup.g_bits, payload, z))
            send_step_of_seq[seq] = i
            seq += 1

        wi = w_all[i, 0]

        T[i] = t
        X[i] = x
        XH[i] = xh
        Z[i] = z
        U[i] = u
        W[i] = wi

        x = x + delta * plant.rhs(x, u, wi)
        xh = xh + delta * plant.rhs(xh, u, 0.0)

        if _bad_state(x, xh):
            aborted = "divergence"
            n_rows = i + 1
            break

    return SimTrace(
        scenario=sc,
        run_index=run_index,
        t=T[:n_rows],
        x=X[:n_rows].reshape(-1, 1),
        xhat=XH[:n_rows].reshape(-1, 1),
        z=Z[:n_rows].reshape(-1, 1),
        u=U[:n_rows],
        w=W[:n_rows].reshape(-1, 1),
        phys=None,
        sends=sends,
        receptions=recs,
        aborted=aborted,
    )


@dataclass
class BatchStats:
    """Per-run statistics from a lockstep batch of seeded runs.

    All arrays are indexed by run.  Rates follow the finite-horizon convention
    of the metrics module: bits of all sends but the last, divided by the span
    from first to last send.
    """

    n_runs: int
    delta_s: float
    diverged: np.ndarray
    breached: np.ndarray
    max_abs_z: np.ndarray
    max_abs_z_post_jump: np.ndarray  # -inf for runs with no receptions
    max_abs_z_candidates: np.ndarray | None  # nonlinear scheme only
    n_sends: np.ndarray
    n_receptions: np.ndarray
    g_bits: int
    first_send_t: np.ndarray  # nan for runs with no sends
    last_send_t: np.ndarray
    min_interval_steps: np.ndarray  # 0 for runs with < 2 sends
    intervals_on_period_grid: np.ndarray | None  # nonlinear scheme only
    max_abs_phi_after: np.ndarray | None  # linear scheme, t >= phi_after_s
    sup_abs_x_after: np.ndarray | None  # nonlinear scheme, t >= x_after_s

    def rates(self) -> np.ndarray:
        """Measured payload rate per run; nan where fewer than two sends."""
        out = np.full(self.n_runs, np.nan)
        ok = self.n_sends >= 2
        span = self.last_send_t - self.first_send_t
        bits = (self.n_sends - 1) * self.g_bits
        with np.errstate(invalid="ignore", divide="ignore"):
            out[ok] = bits[ok] / span[ok]
        return out


def run_batch(
    scenario: Scenario,
    n_runs: int,
    chunk: int = 1024,
    phi_after_s: float | None = None,
    x_after_s: float | None = None,
) -> BatchStats:
    """Execute runs 0..n_runs-1 in numpy lockstep, keeping statistics only.

    Stream-compatible with ``run``: run r of the batch sees exactly the
    disturbance and delay sequences of ``run(scenario, run_index=r)``.
    """
    if scenario.scheme == "linear":
        fn = _batch_linear
    elif scenario.scheme == "nonlinear":
        fn = _batch_nonlinear
    else:
        raise ConfigError(f"unknown scheme {scenario.scheme!r}")

    parts = []
    for r0 in range(0, n_runs, chunk):
        r1 = min(r0 + chunk, n_runs)
        parts.append(fn(scenario, r0, r1, phi_after_s, x_after_s))
    return _concat_stats(parts)


def _concat_stats(parts: list[BatchStats]) -> BatchStats:
    if len(parts) == 1:
        return parts[0]
    first = parts[0]

    def cat(name: str):
        vals = [getattr(p, name) for p in parts]
        if vals[0] is None:
            return None
        return np.concatenate(vals)

    return BatchStats(
        n_runs=sum(p.n_runs for p in parts),
        delta_s=first.delta_s,
        diverged=cat("diverged"),
        breached=cat("breached"),
        max_abs_z=cat("max_abs_z"),
        max_abs_z_post_jump=cat("max_abs_z_post_jump"),
        max_abs_z_candidates=cat("max_abs_z_candidates"),
        n_sends=cat("n_sends"),
        n_receptions=cat("n_receptions"),
        g_bits=first.g_bits,
        first_send_t=cat("first_send_t"),
        last_send_t=cat("last_send_t"),
        min_interval_steps=cat("min_interval_steps"),
        intervals_on_period_grid=cat("intervals_on_period_grid"),
        max_abs_phi_after=cat("max_abs_phi_after"),
        sup_abs_x_after=cat("sup_abs_x_after"),
    )


def _chunk_streams(
    sc: Scenario, r0: int, r1: int, w_dim: int, w_bound: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-run disturbance blocks and channel delay sequences for runs r0..r1-1."""
    steps = sc.n_steps
    budget = max_sends_budget(steps, sc.channel)
    R = r1 - r0
    w = np.empty((R, steps, w_dim))
    delays = np.empty((R, budget), dtype=np.int64)
    for j, r in enumerate(range(r0, r1)):
        ch_rng, w_rng = _run_rngs(sc, r)
        w[j] = DisturbanceSource(w_bound, w_rng, sc.disturbance_law).draw(steps, w_dim)
        delays[j] = DelayChannel(sc.channel, ch_rng, budget).pregenerated_delays()
    return w, delays


def _batch_linear(
    sc: Scenario, r0: int, r1: int, phi_after_s: float | None, x_after_s: float | None
) -> BatchStats:
    setup = sc.linear
    assert setup is not None
    if setup.truth != "diagonal":
        raise ConfigError("batch execution supports the diagonal truth model only")
    sys_ = setup.system
    cfg = setup.trigger
    delta = sc.delta_s
    steps = sc.n_steps
    R = r1 - r0
    w, delays = _chunk_streams(sc, r0, r1, 2, sys_.w_bound)

    lam1, lam2 = sys_.lambda1, sys_.lambda2
    b1, b2 = sys_.b1, sys_.b2
    K0, K1 = sys_.K
    J = cfg.threshold
    gamma = cfg.gamma_s
    min_delay_s = sc.channel.min_delay_s
    g_bits = setup.g_bits
    timing_bits = g_bits - 1
    p00, p01 = sys_.P[0]

    x1 = np.full(R, setup.x0[0])
    x2 = np.full(R, setup.x0[1])
    xh1 = np.full(R, setup.xhat0[0])
    xh2 = np.full(R, setup.xhat0[1])

    alive = np.ones(R, dtype=bool)
    diverged = np.zeros(R, dtype=bool)
    awaiting = np.zeros(R, dtype=bool)
    deliver_step = np.full(R, -1, dtype=np.int64)
    sign_pending = np.zeros(R)
    cell_pending = np.zeros(R, dtype=np.int64)
    send_count = np.zeros(R, dtype=np.int64)
    n_recs = np.zeros(R, dtype=np.int64)
    max_z = np.zeros(R)
    max_post = np.full(R, -np.inf)
    first_send_t = np.full(R, np.nan)
    last_send_step = np.full(R, -1, dtype=np.int64)
    min_int_steps = np.zeros(R, dtype=np.int64)
    max_phi = np.zeros(R) if phi_after_s is not None else None

    for i in range(steps):
        t = i * delta

        dmask = alive & (deliver_step == i)
        if dmask.any():
            if timing_bits == 0:
                q = np.full(int(dmask.sum()), t - 0.5 * (gamma + min_delay_s))
            else:
                q = lin.lift_cell_center(
                    cell_pending[dmask], timing_bits, t, gamma, min_delay_s
                )
                q = np.clip(q, t - gamma, t - min_delay_s)
            zbar = lin.error_at_reception(sign_pending[dmask], cfg, t, q)
            xh1[dmask] += zbar
            awaiting[dmask] = False
            deliver_step[dmask] = -1
            n_recs[dmask] += 1
            max_post[dmask] = np.maximum(
                max_post[dmask], np.abs(x1[dmask] - xh1[dmask])
            )

        u = -(K0 * xh1 + K1 * xh2)
        z1 = x1 - xh1
        az = np.abs(z1)
        max_z[alive] = np.maximum(max_z[alive], az[alive])

        smask = alive & ~awaiting & (az >= J)
        if smask.any():
            sgn = np.where(z1[smask] >= 0, 1.0, -1.0)
            cell = int(lin.timing_cell(t, g_bits, gamma))
            d = delays[smask, send_count[smask]]
            deliver_step[smask] = i + d
            sign_pending[smask] = sgn
            cell_pending[smask] = cell
            awaiting[smask] = True
            had = smask & (last_send_step >= 0)
            if had.any():
                gap = i - last_send_step[had]
                prev = min_int_steps[had]
                min_int_steps[had] = np.where(prev == 0, gap, np.minimum(prev, gap))
            first_send_t[smask & np.isnan(first_send_t)] = t
            last_send_step[smask] = i
            send_count[smask] += 1

        if max_phi is not None and t >= phi_after_s:
            phi = np.abs(p00 * x1 + p01 * x2)
            max_phi[alive] = np.maximum(max_phi[alive], phi[alive])

        w1 = w[:, i, 0]
        w2 = w[:, i, 1]
        nx1 = x1 + delta * (lam1 * x1 + b1 * u + w1)
        nx2 = x2 + delta * (lam2 * x2 + b2 * u + w2)
        nxh1 = xh1 + delta * (lam1 * xh1 + b1 * u)
        nxh2 = xh2 + delta * (lam2 * xh2 + b2 * u)
        x1 = np.where(alive, nx1, x1)
        x2 = np.where(alive, nx2, x2)
        xh1 = np.where(alive, nxh1, xh1)
        xh2 = np.where(alive, nxh2, xh2)

        with np.errstate(invalid="ignore"):
            bad = alive & ~(
                np.isfinite(x1)
                & np.isfinite(x2)
                & np.isfinite(xh1)
                & np.isfinite(xh2)
                & (np.abs(x1) <= DIVERGENCE_LIMIT)
                & (np.abs(x2) <= DIVERGENCE_LIMIT)
                & (np.abs(xh1) <= DIVERGENCE_LIMIT)
                & (np.abs(xh2) <= DIVERGENCE_LIMIT)
            )
        if bad.any():
            diverged[bad] = True
            alive[bad] = False

    return BatchStats(
        n_runs=R,
        delta_s=delta,
        diverged=diverged,
        breached=np.zeros(R, dtype=bool),
        max_abs_z=max_z,
        max_abs_z_post_jump=max_post,
        max_abs_z_candidates=None,
        n_sends=send_count,
        n_receptions=n_recs,
        g_bits=g_bits,
        first_send_t=first_send_t,
        last_send_t=np.where(last_send_step >= 0, last_send_step * delta, np.nan),
        min_interval_steps=min_int_steps,
        intervals_on_period_grid=None,
        max_abs_phi_after=max_phi,
        sup_abs_x_after=None,
    )


def _batch_nonlinear(
    sc: Scenario, r0: int, r1: int, phi_after_s: float | None, x_after_s: float | None
) -> BatchStats:
    setup = sc.nonlinear
    assert setup is not None
    plant = setup.plant
    cfg = setup.trigger
    delta = sc.delta_s
    steps = sc.n_steps
    R = r1 - r0
    w, delays = _chunk_streams(sc, r0, r1, 1, plant.w_bound)

    p_steps = nl.period_steps(cfg, delta)
    quant = nl.UniformErrorQuantizer(
        nl.candidate_bound(cfg), setup.g_bits, slack=nl.one_step_slack(cfg, delta)
    )
    J = cfg.threshold
    g_bits = setup.g_bits

    x = np.full(R, setup.x0)
    xh = np.full(R, setup.xhat0)
    xb = np.zeros(R)  # reconstruction shadow, integrated while a packet is in flight

    alive = np.ones(R, dtype=bool)
    diverged = np.zeros(R, dtype=bool)
    breached = np.zeros(R, dtype=bool)
    deliver_step = np.full(R, -1, dtype=np.int64)
    send_count = np.zeros(R, dtype=np.int64)
    n_recs = np.zeros(R, dtype=np.int64)
    max_z = np.zeros(R)
    max_z_cand = np.zeros(R)
    max_post = np.full(R, -np.inf)
    first_send_t = np.full(R, np.nan)
    last_send_step = np.full(R, -1, dtype=np.int64)
    min_int_steps = np.zeros(R, dtype=np.int64)
    on_grid = np.ones(R, dtype=bool)
    sup_x = np.zeros(R) if x_after_s is not None else None

    for i in range(steps):
        t = i * delta

        dmask = alive & (deliver_step == i)
        if dmask.any():
            xh[dmask] = xb[dmask]
            deliver_step[dmask] = -1
            n_recs[dmask] += 1
            max_post[dmask] = np.maximum(max_post[dmask], np.abs(x[dmask] - xh[dmask]))

        u = -setup.gain * xh
        z = x - xh
        az = np.abs(z)
        max_z[alive] = np.maximum(max_z[alive], az[alive])

        if i % p_steps == 0:
            max_z_cand[alive] = np.maximum(max_z_cand[alive], az[alive])
            bmask = alive & quant.breach(z)
            if bmask.any():
                breached[bmask] = True
                alive[bmask] = False
            smask = alive & (az >= J)
            if smask.any():
                if (deliver_step[smask] >= 0).any():
                    raise ProtocolViolationError(
                        "candidate fired while packet in flight"
                    )
                zdec = quant.decode(quant.cell_of(z[smask]))
                xb[smask] = zdec + xh[smask]
                d = delays[smask, send_count[smask]]
                deliver_step[smask] = i + d
                had = smask & (last_send_step >= 0)
                if had.any():
                    gap = i - last_send_step[had]
                    on_grid[had] &= (gap % p_steps) == 0
                    prev = min_int_steps[had]
                    min_int_steps[had] = np.where(prev == 0, gap, np.minimum(prev, gap))
                first_send_t[smask & np.isnan(first_send_t)] = t
                last_send_step[smask] = i
                send_count[smask] += 1

        if sup_x is not None and t >= x_after_s:
            sup_x[alive] = np.maximum(sup_x[alive], np.abs(x[alive]))

        wi = w[:, i, 0]
        nx = x + delta * plant.rhs(x, u, wi)
        nxh = xh + delta * plant.rhs(xh, u, 0.0)
        infl = alive & (deliver_step >= 0)
        nxb = xb + delta * plant.rhs(xb, u, 0.0)
        x = np.where(alive, nx, x)
        xh = np.where(alive, nxh, xh)
        xb = np.where(infl, nxb, xb)

        with np.errstate(invalid="ignore"):
            bad = alive & ~(
                np.isfinite(x)
                & np.isfinite(xh)
                & (np.abs(x) <= DIVERGENCE_LIMIT)
                & (np.abs(xh) <= DIVERGENCE_LIMIT)
            )
        if bad.any():
            diverged[bad] = True
            alive[bad] = False

    return BatchStats(
        n_runs=R,
        delta_s=delta,
        diverged=diverged,
        breached=breached,
        max_abs_z=max_z,
        max_abs_z_post_jump=max_post,
        max_abs_z_candidates=max_z_cand,
        n_sends=send_count,
        n_receptions=n_recs,
        g_bits=g_bits,
        first_send_t=first_send_t,
        last_send_t=np.where(last_send_step >= 0, last_send_step * delta, np.nan),
        min_interval_steps=min_int_steps,
        intervals_on_period_grid=on_grid,
        max_abs_phi_after=None,
        sup_abs_x_after=sup_x,
    )


@dataclass
class SweepResult:
    gamma_requested: float
    gamma_s: float | None  # actual (grid-rounded) value, None when skipped
    g_bits: int | None
    stats: BatchStats | None
    meta: dict | None = None  # bounds and references used for aggregation
    error: str | None = None

    @property
    def skipped(self) -> bool:
        return self.stats is None


def _point_meta(sc: Scenario) -> dict:
    from .metrics import entropy_reference_for  # deferred: metrics imports engine

    ref = entropy_reference_for(sc).reference_value
    if sc.scheme == "linear":
        cfg = sc.linear.trigger
        slack = lin.one_step_slack(cfg, sc.delta_s)
        return {
            "entropy_ref": ref,
            "global_bound_slack": lin.envelope_bound(cfg) + slack,
            "reception_bound_slack": lin.post_reception_bound(cfg) + slack,
        }
    cfg = sc.nonlinear.trigger
    slack = nl.one_step_slack(cfg, sc.delta_s)
    return {
        "entropy_ref": ref,
        "global_bound_slack": nl.global_bound(cfg) + slack,
        "reception_bound_slack": cfg.threshold + slack,
    }


def _sweep_point(base_cfg: dict, gamma: float, n_seeds: int) -> SweepResult:
    from .scenarios import scenario_from_config  # deferred: scenarios imports engine

    cfg = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base_cfg.items()}
    cfg.setdefault("channel", {})
    cfg["channel"]["gamma_s"] = float(gamma)
    try:
        sc = scenario_from_config(cfg)
    except ConfigError as e:
        return SweepResult(gamma, None, None, None, error=str(e))
    stats = run_batch(sc, n_seeds)
    g_bits = sc.nonlinear.g_bits if sc.scheme == "nonlinear" else sc.linear.g_bits
    return SweepResult(gamma, sc.channel.gamma_s, g_bits, stats, meta=_point_meta(sc))


def sweep(
    base_cfg: dict, gammas: Sequence[float], n_seeds: int, jobs: int = 1
) -> list[SweepResult]:
    """Run the scenario across a gamma grid; infeasible points are skipped.

    Each grid point executes n_seeds independent runs (run indices 0..n-1 of
    the point's scenario).  Points are independent and may run in a process
    pool; results come back in grid order either way.
    """
    if jobs <= 1 or len(gammas) <= 1:
        return [_sweep_point(base_cfg, g, n_seeds) for g in gammas]
    workers = min(jobs, len(gammas), os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_sweep_point, base_cfg, g, n_seeds) for g in gammas]
        return [f.result() for f in futures]


def _fmt(v: float) -> str:
    return repr(float(v))


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file and rename, so partial artifacts never appear."""
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


LINEAR_TRACE_COLUMNS = [
    "t", "x1", "x2", "xhat1", "xhat2", "z1", "z2", "u", "w1", "w2", "phi", "phidot",
]
SCALAR_TRACE_COLUMNS = ["t", "x", "xhat", "z", "u", "w"]
EVENTS_COLUMNS = [
    "seq", "t_send", "t_deliver", "delay", "g_bits", "payload", "z_at_send", "z_after_jump",
]


def write_trace_csv(trace: SimTrace, path) -> None:
    rows = []
    if trace.scenario.scheme == "linear":
        rows.append(",".join(LINEAR_TRACE_COLUMNS))
        for i in range(trace.n_steps):
            vals = [
                trace.t[i],
                trace.x[i, 0], trace.x[i, 1],
                trace.xhat[i, 0], trace.xhat[i, 1],
                trace.z[i, 0], trace.z[i, 1],
                trace.u[i],
                trace.w[i, 0], trace.w[i, 1],
                trace.phys[i, 0], trace.phys[i, 1],
            ]
            rows.append(",".join(_fmt(v) for v in vals))
    else:
        rows.append(",".join(SCALAR_TRACE_COLUMNS))
        for i in range(trace.n_steps):
            vals = [
                trace.t[i], trace.x[i, 0], trace.xhat[i, 0],
                trace.z[i, 0], trace.u[i], trace.w[i, 0],
            ]
            rows.append(",".join(_fmt(v) for v in vals))
    atomic_write_text(path, "\n".join(rows) + "\n")


def write_events_csv(trace: SimTrace, path) -> None:
    """One row per packet; delivery fields stay empty for an unreceived packet."""
    recs = {r.seq: r for r in trace.receptions}
    rows = [",".join(EVENTS_COLUMNS)]
    for s in trace.sends:
        r = recs.get(s.seq)
        rows.append(
            ",".join(
                [
                    str(s.seq),
                    _fmt(s.t),
                    _fmt(r.t) if r else "",
                    _fmt(r.delay_s) if r else "",
                    str(s.g_bits),
                    s.payload,
                    _fmt(s.z_at_send),
                    _fmt(r.z_after) if r else "",
                ]
            )
        )
    atomic_write_text(path, "\n".join(rows) + "\n")
