"""Error-free digital channel with bounded random delay on the sampling grid.

Delays are whole multiples of the sampling time, at least ``min_delay_steps``
(two in the hardware-faithful setting: one sensing-side step plus one
actuation-side step) and at most gamma.  The channel holds a single packet in
flight; the triggering schemes guarantee they never send into a busy channel.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ProtocolViolationError

__all__ = [
    "Packet",
    "ChannelConfig",
    "InFlight",
    "DelayChannel",
    "max_sends_budget",
]

_LAWS = ("uniform", "max")


@dataclass(frozen=True)
class Packet:
    seq: int
    payload: str  # bit characters '0'/'1'; empty payload is a bare event marker
    t_send: float

    def __post_init__(self) -> None:
        if self.t_send < 0:
            raise ValueError("t_send must be nonnegative")
        if any(c not in "01" for c in self.payload):
            raise ValueError("payload must consist of '0'/'1' characters")

    @property
    def g_bits(self) -> int:
        return len(self.payload)


@dataclass(frozen=True)
class ChannelConfig:
    gamma_s: float  # delay upper bound (s)
    delta_s: float  # sampling time (s)
    min_delay_steps: int = 2
    law: str = "uniform"  # "uniform" over the step grid, or "max" (always gamma)
    seed: int | None = None  # optional stream override, else derived from the run seed

    def __post_init__(self) -> None:
        if self.delta_s <= 0:
            raise ConfigError("channel delta_s must be strictly positive")
        if self.gamma_s <= 0:
            raise ConfigError("channel gamma_s must be strictly positive")
        if self.min_delay_steps < 1:
            raise ConfigError("channel min_delay_steps must be >= 1")
        if self.law not in _LAWS:
            raise ConfigError(f"unknown delay law {self.law!r} (known: {_LAWS})")

    def normalized(self) -> "ChannelConfig":
        """Round gamma up to a whole number of sampling steps and check feasibility."""
        steps = self.gamma_s / self.delta_s
        steps_int = int(round(steps))
        if abs(steps - steps_int) > 1e-9 * max(1.0, steps):
            steps_int = int(np.ceil(steps - 1e-12))
            new_gamma = steps_int * self.delta_s
            warnings.warn(
                f"channel gamma_s={self.gamma_s} is not a multiple of delta_s="
                f"{self.delta_s}; rounded up to {new_gamma}",
                stacklevel=2,
            )
            cfg = replace(self, gamma_s=new_gamma)
        else:
            cfg = replace(self, gamma_s=steps_int * self.delta_s)
        if cfg.gamma_steps < cfg.min_delay_steps:
            raise ConfigError(
                "gamma_s >= min_delay_steps * delta_s must hold: "
                f"gamma_s={cfg.gamma_s}, min_delay_steps={cfg.min_delay_steps}, "
                f"delta_s={cfg.delta_s}"
            )
        return cfg

    @property
    def gamma_steps(self) -> int:
        return int(round(self.gamma_s / self.delta_s))

    @property
    def min_delay_s(self) -> float:
        return self.min_delay_steps * self.delta_s


@dataclass(frozen=True)
class InFlight:
    packet: Packet
    t_deliver: float
    deliver_step: int
    delay_steps: int


def max_sends_budget(n_steps: int, cfg: ChannelConfig) -> int:
    """Upper bound on sends in a run: consecutive sends are at least one delay apart."""
    return n_steps // cfg.min_delay_steps + 2


class DelayChannel:
    """Single-slot FIFO channel over the sampling grid.

    The delay sequence is pre-drawn from the generator at construction so that
    the k-th send always sees the k-th draw; this keeps runs reproducible and
    lets batched executors share the stream layout.
    """

    def __init__(self, cfg: ChannelConfig, rng: np.random.Generator, max_sends: int):
        if abs(cfg.gamma_s - cfg.gamma_steps * cfg.delta_s) > 1e-9 * cfg.delta_s:
            raise ConfigError("channel config must be normalized before use")
        self.cfg = cfg
        if cfg.law == "uniform":
            self._delays = rng.integers(
                cfg.min_delay_steps, cfg.gamma_steps + 1, size=max_sends
            )
        else:
            self._delays = np.full(max_sends, cfg.gamma_steps, dtype=np.int64)
        self._sent = 0
        self._in_flight: InFlight | None = None

    @property
    def busy(self) -> bool:
        return self._in_flight is not None

    def pregenerated_delays(self) -> np.ndarray:
        """The delay-steps sequence this channel will apply, in send order."""
        return self._delays.copy()

    def send(self, pkt: Packet) -> InFlight:
        if self._in_flight is not None:
            raise ProtocolViolationError(
                f"send of seq={pkt.seq} while seq={self._in_flight.packet.seq} in flight"
            )
        if self._sent >= len(self._delays):
            raise ProtocolViolationError("send budget exhausted")
        d = int(self._delays[self._sent])
        self._sent += 1
        send_step = int(round(pkt.t_send / self.cfg.delta_s))
        deliver_step = send_step + d
        flight = InFlight(
            packet=pkt,
            t_deliver=deliver_step * self.cfg.delta_s,
            deliver_step=deliver_step,
            delay_steps=d,
        )
        self._in_flight = flight
        return flight

    def poll(self, now: float) -> Packet | None:
        """Deliver the in-flight packet iff now >= its delivery time (inclusive).

        ``now`` must lie on the sampling grid; comparison is done in steps so
        the boundary is exact.
        """
        if self._in_flight is None:
            return None
        step_now = int(round(now / self.cfg.delta_s))
        if step_now >= self._in_flight.deliver_step:
            pkt = self._in_flight.packet
            self._in_flight = None
            return pkt
        return None
