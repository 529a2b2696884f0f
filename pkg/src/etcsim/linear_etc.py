"""Threshold-triggered scheme for the unstable pendulum coordinate.

The sensor transmits when the estimation error z1 = x1 - xhat1 reaches the
threshold J.  The packet carries one sign bit plus a timing code: the send
time modulo gamma, uniformly quantized into 2^(g-1) cells.  The controller
lifts the received cell into the reception window (t_c - gamma, t_c], rebuilds
z1 from the known threshold crossing, and jumps its estimate by that amount.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "LinearTriggerConfig",
    "LinearSchemeState",
    "threshold_from_margin",
    "disturbance_growth",
    "packet_size_bits",
    "check_trigger",
    "min_intertrigger_bound",
    "envelope_bound",
    "post_reception_bound",
    "one_step_slack",
    "encode_timing",
    "decode_timing",
    "timing_cell",
    "lift_cell_center",
    "error_at_reception",
    "decode_and_jump",
]


@dataclass(frozen=True)
class LinearTriggerConfig:
    """Parameters of the threshold scheme for the lambda1 coordinate."""

    threshold: float  # J, trigger level on |z1|
    rho0: float  # post-reception contraction target, in (0, 1)
    safety: float  # timing safety factor > 1 (config key: linear.b)
    gamma_s: float  # channel delay bound (s)
    lambda1: float  # unstable rate (1/s)
    w_bound: float  # disturbance bound M on the coordinate

    def __post_init__(self) -> None:
        if self.threshold <= 0:
            raise ConfigError("threshold J must be strictly positive")
        if not 0.0 < self.rho0 < 1.0:
            raise ConfigError("rho0 must lie in (0, 1)")
        if self.safety <= 1.0:
            raise ConfigError("safety factor b must be > 1")
        if self.lambda1 <= 0:
            raise ConfigError("lambda1 must be strictly positive")
        if self.gamma_s <= 0:
            raise ConfigError("gamma_s must be strictly positive")
        if self.w_bound < 0:
            raise ConfigError("disturbance bound must be nonnegative")

    def validate(self) -> None:
        """Feasibility: J > (M / (lambda1 rho0)) (e^{lambda1 gamma} - 1)."""
        floor = disturbance_growth(self) / self.rho0
        if not self.threshold > floor:
            raise ConfigError(
                "infeasible linear trigger config: require "
                "J > (M/(lambda1*rho0))*(exp(lambda1*gamma)-1) "
                f"= {floor!r}, got J = {self.threshold!r}"
            )


@dataclass
class LinearSchemeState:
    """Per-run triggering bookkeeping shared by sensor and controller.

    The estimate itself lives with the engine; the acknowledgment model keeps
    the sensor mirror identical to the controller copy.  No trigger may fire
    while awaiting_ack is set.
    """

    awaiting_ack: bool = False
    last_trigger_t: float | None = None
    last_trigger_sign: float = 0.0
    reception_times: list[float] = field(default_factory=list)

    def on_send(self, t: float, sign: float) -> None:
        if self.awaiting_ack:
            raise RuntimeError("trigger issued while a packet was in flight")
        self.awaiting_ack = True
        self.last_trigger_t = t
        self.last_trigger_sign = sign

    def on_reception(self, t: float) -> None:
        self.awaiting_ack = False
        self.reception_times.append(t)


def disturbance_growth(cfg: LinearTriggerConfig) -> float:
    """(M / lambda1) (e^{lambda1 gamma} - 1), the delay-window disturbance term."""
    return cfg.w_bound / cfg.lambda1 * math.expm1(cfg.lambda1 * cfg.gamma_s)


def threshold_from_margin(
    margin: float, rho0: float, safety: float, gamma_s: float, lambda1: float, w_bound: float
) -> float:
    """J = (M / (lambda1 rho0)) (e^{lambda1 gamma} - 1) + margin."""
    return w_bound / (lambda1 * rho0) * math.expm1(lambda1 * gamma_s) + margin


def packet_size_bits(cfg: LinearTriggerConfig) -> int:
    """Sufficient payload size (bits) for the post-reception contract rho0*J.

    g = max(1, ceil(1 + log2(lambda1 b gamma / ln(1 + eps)))) with
    eps = (rho0 - (M/(J lambda1))(e^{lambda1 gamma}-1)) / e^{lambda1 gamma}.
    """
    cfg.validate()
    growth = math.exp(cfg.lambda1 * cfg.gamma_s)
    eps = (cfg.rho0 - disturbance_growth(cfg) / cfg.threshold) / growth
    arg = cfg.lambda1 * cfg.safety * cfg.gamma_s / math.log1p(eps)
    return max(1, math.ceil(1.0 + math.log2(arg)))


def check_trigger(z1: float, threshold: float, awaiting_ack: bool) -> bool:
    """Fire at the first sample with |z1| >= J, unless a packet is in flight."""
    return (not awaiting_ack) and abs(z1) >= threshold


def min_intertrigger_bound(cfg: LinearTriggerConfig) -> float:
    """Guaranteed lower bound on the time between consecutive sends.

    (1/lambda1) ln((J + M/lambda1) / (rho0 J + M/lambda1)); a calculator
    output, not enforced at runtime.
    """
    m = cfg.w_bound / cfg.lambda1
    return math.log((cfg.threshold + m) / (cfg.rho0 * cfg.threshold + m)) / cfg.lambda1


def envelope_bound(cfg: LinearTriggerConfig) -> float:
    """Worst-case |z1| between receptions: J e^{lambda1 gamma} + (M/lambda1)(e^{lambda1 gamma}-1)."""
    return cfg.threshold * math.exp(cfg.lambda1 * cfg.gamma_s) + disturbance_growth(cfg)


def post_reception_bound(cfg: LinearTriggerConfig) -> float:
    return cfg.rho0 * cfg.threshold


def one_step_slack(cfg: LinearTriggerConfig, delta_s: float) -> float:
    """Discrete-time overshoot allowance for the continuous-time bounds.

    One sampling step of growth applied to the envelope scale:
    (e^{lambda1 delta} - 1)(J e^{lambda1 gamma} + M/lambda1).
    """
    scale = cfg.threshold * math.exp(cfg.lambda1 * cfg.gamma_s) + cfg.w_bound / cfg.lambda1
    return math.expm1(cfg.lambda1 * delta_s) * scale


def timing_cell(t_send, g_bits: int, gamma_s: float):
    """Cell index of t_send mod gamma in the 2^(g-1)-cell uniform grid.

    Accepts scalars or numpy arrays.  g_bits = 1 means no timing bits; the
    single cell is index 0.
    """
    n = 1 << (g_bits - 1)
    v = np.fmod(t_send, gamma_s)
    v = np.where(v < 0, v + gamma_s, v)
    idx = np.minimum(np.floor(v * (n / gamma_s)).astype(np.int64), n - 1)
    return idx


def lift_cell_center(
    cell, timing_bits: int, t_deliver, gamma_s: float, min_delay_s: float
):
    """Center of the given cell, lifted onto the branch nearest the feasible window.

    The send time lies in [t_c - gamma, t_c - min_delay]; among the candidates
    c + k*gamma the one closest to the window midpoint is within half a cell of
    the true send time whenever the cell width is below the minimum delay.
    Accepts scalars or numpy arrays.
    """
    n = 1 << timing_bits
    c = (cell + 0.5) * (gamma_s / n)
    mid = t_deliver - 0.5 * (gamma_s + min_delay_s)
    return c + gamma_s * np.round((mid - c) / gamma_s)


def encode_timing(t_send: float, positive: bool, g_bits: int, gamma_s: float) -> str:
    """Payload: one sign bit, then g-1 bits of the send-time cell index."""
    if g_bits < 1:
        raise ValueError("payload needs at least the sign bit")
    sign_char = "1" if positive else "0"
    if g_bits == 1:
        return sign_char
    cell = int(timing_cell(t_send, g_bits, gamma_s))
    return sign_char + format(cell, f"0{g_bits - 1}b")


def decode_timing(
    payload: str, t_deliver: float, gamma_s: float, min_delay_s: float
) -> tuple[float, float]:
    """Recover (sign, q) from a payload, q being the best estimate of the send time.

    The candidate cell center is lifted into (t_c - gamma, t_c] and then clamped
    to the physically feasible window [t_c - gamma, t_c - min_delay]; with a
    singleton delay support (gamma == min_delay) the estimate is exact.  Without
    timing bits the feasible-window midpoint is used.
    """
    sign = 1.0 if payload[0] == "1" else -1.0
    lo = t_deliver - gamma_s
    hi = t_deliver - min_delay_s
    timing_bits = len(payload) - 1
    if timing_bits == 0:
        return sign, 0.5 * (lo + hi)
    cell = int(payload[1:], 2)
    q = float(lift_cell_center(cell, timing_bits, t_deliver, gamma_s, min_delay_s))
    return sign, min(max(q, lo), hi)


def error_at_reception(sign: float, cfg: LinearTriggerConfig, t_deliver, q):
    """Decoded estimation error at reception: sign * J * e^{lambda1 (t_c - q)}."""
    return sign * cfg.threshold * np.exp(cfg.lambda1 * (t_deliver - q))


def decode_and_jump(
    payload: str,
    t_deliver: float,
    cfg: LinearTriggerConfig,
    min_delay_s: float,
    xhat1: float,
) -> tuple[float, float, float]:
    """Decode a packet and apply the jump to the estimate.

    Returns (new xhat1, decoded error zbar, send-time estimate q).  The sensor
    mirror applies the identical jump at the same time (reception times are
    known to the sensor through the control input).
    """
    sign, q = decode_timing(payload, t_deliver, cfg.gamma_s, min_delay_s)
    zbar = float(error_at_reception(sign, cfg, t_deliver, q))
    return xhat1 + zbar, zbar, q
