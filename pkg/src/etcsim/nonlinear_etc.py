"""Periodic event-triggered scheme for scalar Lipschitz nonlinear plants.

Candidate send times sit on the fixed schedule t = k (alpha + gamma); a packet
goes out only when the estimation error has reached the threshold J.  The
payload quantizes the error over the interval [-G(0), G(0)], where G is the
worst-case growth envelope, and the controller rebuilds the state by
integrating the disturbance-free model forward from the (implicitly known)
send time using the recorded input history.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EnvelopeBreachError
from .plants import ScalarNonlinearPlant

__all__ = [
    "NonlinearTriggerConfig",
    "threshold_from_margin",
    "disturbance_growth",
    "growth_envelope",
    "PacketSize",
    "packet_size",
    "check_trigger",
    "period_steps",
    "candidate_bound",
    "global_bound",
    "EnvelopeBounds",
    "envelope_bounds",
    "one_step_slack",
    "UniformErrorQuantizer",
    "reconstruct",
    "rate_lower_bound",
]


@dataclass(frozen=True)
class NonlinearTriggerConfig:
    """Parameters of the periodic triggering scheme."""

    threshold: float  # J, trigger level on |z| at candidate times
    alpha_s: float  # schedule margin added to gamma (s), >= 0
    gamma_s: float  # channel delay bound (s)
    lip_x: float  # state Lipschitz constant of the plant
    lip_w: float  # disturbance Lipschitz constant
    w_bound: float  # disturbance bound M

    def __post_init__(self) -> None:
        if self.threshold <= 0:
            raise ConfigError("threshold J must be strictly positive")
        if self.alpha_s < 0:
            raise ConfigError("alpha_s must be nonnegative")
        if self.gamma_s <= 0:
            raise ConfigError("gamma_s must be strictly positive")
        if self.lip_x <= 0 or self.lip_w <= 0:
            raise ConfigError("Lipschitz constants must be strictly positive")
        if self.w_bound < 0:
            raise ConfigError("disturbance bound must be nonnegative")

    @property
    def period_s(self) -> float:
        return self.alpha_s + self.gamma_s

    def validate(self, strict: bool = True) -> None:
        """Feasibility: J >= (L_w M / L_x)(e^{L_x gamma} - 1), strictly for sizing."""
        floor = disturbance_growth(self)
        ok = self.threshold > floor if strict else self.threshold >= floor
        if not ok:
            op = ">" if strict else ">="
            raise ConfigError(
                "infeasible nonlinear trigger config: require "
                f"J {op} (L_w*M/L_x)*(exp(L_x*gamma)-1) = {floor!r}, "
                f"got J = {self.threshold!r}"
            )


def disturbance_growth(cfg: NonlinearTriggerConfig) -> float:
    """(L_w M / L_x)(e^{L_x gamma} - 1), the delay-window disturbance term."""
    return cfg.lip_w * cfg.w_bound / cfg.lip_x * math.expm1(cfg.lip_x * cfg.gamma_s)


def threshold_from_margin(
    margin: float, alpha_s: float, gamma_s: float, plant: ScalarNonlinearPlant
) -> NonlinearTriggerConfig:
    """Threshold recipe J = (L_w M / L_x)(e^{L_x gamma} - 1) + margin."""
    j = plant.lip_w * plant.w_bound / plant.lip_x * math.expm1(plant.lip_x * gamma_s)
    return NonlinearTriggerConfig(
        threshold=j + margin,
        alpha_s=alpha_s,
        gamma_s=gamma_s,
        lip_x=plant.lip_x,
        lip_w=plant.lip_w,
        w_bound=plant.w_bound,
    )


def growth_envelope(
    cfg: NonlinearTriggerConfig, theta_s: float, wbound: float | None = None
) -> float:
    """Worst-case |z| bound theta seconds past a candidate time.

    J e^{L_x (alpha + gamma + theta)} + (L_w wb / L_x)(e^{L_x (alpha+gamma+theta)} - 1),
    with wb defaulting to the configured disturbance bound.
    """
    if not 0.0 <= theta_s <= cfg.gamma_s + 1e-12:
        raise ValueError("theta must lie in [0, gamma]")
    wb = cfg.w_bound if wbound is None else wbound
    e = math.exp(cfg.lip_x * (cfg.alpha_s + cfg.gamma_s + theta_s))
    return cfg.threshold * e + cfg.lip_w * wb / cfg.lip_x * (e - 1.0)


def candidate_bound(cfg: NonlinearTriggerConfig) -> float:
    """Bound on |z| at candidate times (theta = 0)."""
    return growth_envelope(cfg, 0.0)


def global_bound(cfg: NonlinearTriggerConfig) -> float:
    """Bound on |z| at all times (theta = gamma)."""
    return growth_envelope(cfg, cfg.gamma_s)


@dataclass(frozen=True)
class EnvelopeBounds:
    """The two endpoint bounds plus the disturbance-indexed family.

    upsilon0 caps |z| at candidate times, upsilon_gamma at all times; the
    w-indexed value tightens the cap when the realized disturbance stayed
    below the configured bound.
    """

    upsilon0: float
    upsilon_gamma: float
    cfg: NonlinearTriggerConfig

    def w_indexed(self, theta_s: float, wbound: float) -> float:
        return growth_envelope(self.cfg, theta_s, wbound)


def envelope_bounds(cfg: NonlinearTriggerConfig) -> EnvelopeBounds:
    return EnvelopeBounds(candidate_bound(cfg), global_bound(cfg), cfg)


def one_step_slack(cfg: NonlinearTriggerConfig, delta_s: float) -> float:
    """Discrete-time overshoot allowance: (e^{L_x delta} - 1)(G(gamma) + L_w M / L_x)."""
    scale = global_bound(cfg) + cfg.lip_w * cfg.w_bound / cfg.lip_x
    return math.expm1(cfg.lip_x * delta_s) * scale


@dataclass(frozen=True)
class PacketSize:
    """Real-valued sufficient lower bound and the deployable integer size."""

    lower_bound_bits: float
    bits: int


def packet_size(cfg: NonlinearTriggerConfig) -> PacketSize:
    """Sufficient payload size for the reception contract |z(t_c+)| <= J.

    Lower bound max(0, log2(G(0) e^{L_x gamma} / (J - (L_w M/L_x)(e^{L_x gamma}-1))));
    the deployable size is max(1, ceil(log2 of the same ratio)).
    """
    cfg.validate(strict=True)
    ratio = (
        candidate_bound(cfg)
        * math.exp(cfg.lip_x * cfg.gamma_s)
        / (cfg.threshold - disturbance_growth(cfg))
    )
    log_ratio = math.log2(ratio)
    return PacketSize(
        lower_bound_bits=max(0.0, log_ratio),
        bits=max(1, math.ceil(log_ratio)),
    )


def check_trigger(z: float, threshold: float) -> bool:
    """Inclusive threshold test at a candidate time."""
    return abs(z) >= threshold


def period_steps(cfg: NonlinearTriggerConfig, delta_s: float) -> int:
    """Candidate spacing on the sampling grid.

    The schedule runs at whole multiples of ceil((alpha+gamma)/delta) steps so
    that every inter-send interval is a grid value >= alpha + gamma exactly.
    """
    ratio = cfg.period_s / delta_s
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        return int(nearest)
    return int(math.ceil(ratio))


class UniformErrorQuantizer:
    """2^bits equal cells over [-half_range, half_range], decoded to cell centers.

    The decode error is at most half_range / 2^bits.  ``slack`` widens the
    accepted input range to absorb one-step discrete overshoot; inputs beyond
    range + slack indicate an envelope breach and raise.
    """

    def __init__(self, half_range: float, bits: int, slack: float = 0.0):
        if half_range <= 0:
            raise ConfigError("quantizer range must be strictly positive")
        if bits < 1:
            raise ConfigError("quantizer needs at least one bit")
        self.half_range = float(half_range)
        self.bits = int(bits)
        self.cells = 1 << bits
        self.cell_width = 2.0 * self.half_range / self.cells
        self.slack = float(slack)

    def cell_of(self, z):
        """Cell indices for scalars or arrays, clamped into range (no breach check)."""
        idx = np.floor((z + self.half_range) / self.cell_width).astype(np.int64)
        return np.clip(idx, 0, self.cells - 1)

    def breach(self, z):
        """True where |z| exceeds the accepted range including slack."""
        return np.abs(z) > self.half_range + self.slack

    def encode(self, z: float) -> int:
        if bool(self.breach(z)):
            raise EnvelopeBreachError(
                f"|z| = {abs(z)!r} exceeds quantizer range {self.half_range!r} "
                f"+ slack {self.slack!r}"
            )
        return int(self.cell_of(z))

    def decode(self, idx) -> float | np.ndarray:
        """Center of cell idx (scalar or array)."""
        return -self.half_range + (np.asarray(idx) + 0.5) * self.cell_width

    def payload(self, idx: int) -> str:
        return format(idx, f"0{self.bits}b")

    def parse(self, payload: str) -> int:
        if len(payload) != self.bits:
            raise ValueError(
                f"payload length {len(payload)} does not match quantizer bits {self.bits}"
            )
        return int(payload, 2)


def reconstruct(
    plant: ScalarNonlinearPlant, xbar0: float, u_history: np.ndarray, delta_s: float
) -> float:
    """Integrate the disturbance-free model forward over the recorded inputs.

    Euler steps of dx/dt = f(x, u, 0) starting from the decoded state at the
    send time; an empty history returns the start value (zero residual delay).
    Uses the same stepper as the plant, so an exact payload with no disturbance
    reproduces the true state with no drift.
    """
    xb = xbar0
    for u in u_history:
        xb = xb + delta_s * plant.rhs(xb, u, 0.0)
    return xb


def rate_lower_bound(cfg: NonlinearTriggerConfig, bits: int) -> tuple[float, float]:
    """Payload rates if every candidate fired: (deployable, sufficient lower bound).

    Both are per-period rates: bits / (alpha + gamma) for the deployable size
    and the real-valued sufficient bound divided by (alpha + gamma).
    """
    ps = packet_size(cfg)
    return bits / cfg.period_s, ps.lower_bound_bits / cfg.period_s
