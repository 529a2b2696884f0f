"""Runtime invariant suite behind the ``validate`` CLI subcommand.

Smaller and faster than the acceptance test module, but it touches every
published invariant: eigendecomposition round trip, disturbance bounds,
channel delay law, quantizer round trips, scheme contracts on seeded batches,
schedule spacing, and run determinism.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linear_etc as lin
from . import nonlinear_etc as nl
from .channel import ChannelConfig, DelayChannel, Packet
from .engine import run, run_batch
from .plants import DisturbanceSource, demo_plant, reference_pendulum_system
from .scenarios import BUILTIN_NAMES, builtin_configs, builtin_scenarios, dump_config

__all__ = ["CheckResult", "run_all"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def _check(name: str, ok: bool, detail: str = "") -> CheckResult:
    return CheckResult(name, bool(ok), detail)


def _eigen_round_trip() -> CheckResult:
    sys_ = reference_pendulum_system()
    A = np.array([[0.0, 1.0], [sys_.a21, 0.0]])
    resid = sys_.P @ np.diag(sys_.eigenvalues) @ sys_.P_inv - A
    rel = np.max(np.abs(resid)) / np.max(np.abs(A))
    return _check("eigen-round-trip", rel <= 1e-9, f"relative residual {rel:.3e}")


def _demo_lipschitz() -> CheckResult:
    plant = demo_plant(0.1)
    rng = np.random.default_rng(7)
    x = rng.uniform(-50, 50, 10_000)
    xh = rng.uniform(-50, 50, 10_000)
    w = rng.uniform(-0.1, 0.1, 10_000)
    u = rng.uniform(-10, 10, 10_000)
    lhs = np.abs(plant.rhs(x, u, w) - plant.rhs(xh, u, 0.0))
    rhs = plant.lip_x * np.abs(x - xh) + plant.lip_w * np.abs(w)
    worst = float(np.max(lhs - rhs))
    return _check("demo-lipschitz-split", worst <= 1e-12, f"max excess {worst:.3e}")


def _disturbance_bound() -> CheckResult:
    src = DisturbanceSource(0.047, np.random.default_rng(3), "uniform")
    w = src.draw(100_000, 2)
    return _check(
        "disturbance-bound", np.all(np.abs(w) <= 0.047), f"max |w| {np.max(np.abs(w)):.6f}"
    )


def _channel_delays() -> CheckResult:
    cfg = ChannelConfig(gamma_s=0.015, delta_s=0.003, min_delay_steps=2).normalized()
    ch = DelayChannel(cfg, np.random.default_rng(11), 10_000)
    ok = True
    for k in range(10_000):
        fl = ch.send(Packet(k, "1", k * 10 * cfg.delta_s))
        d = fl.t_deliver - fl.packet.t_send
        ok &= 0 < d <= cfg.gamma_s + 1e-12 and fl.delay_steps >= cfg.min_delay_steps
        ch.poll(fl.t_deliver)
    return _check("channel-delay-bounds", ok, "10000 sends within (0, gamma]")


def _timing_quantizer() -> CheckResult:
    gamma, g_bits = 0.015, 6
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(4096):
        t_s = float(rng.uniform(0, 30.0))
        delay = float(rng.uniform(2 * 0.003, gamma))
        payload = lin.encode_timing(t_s, True, g_bits, gamma)
        _, q = lin.decode_timing(payload, t_s + delay, gamma, 2 * 0.003)
        worst = max(worst, abs(t_s - q))
    bound = gamma / 2**g_bits
    return _check(
        "timing-quantizer-round-trip", worst <= bound + 1e-12, f"worst {worst:.3e} <= {bound:.3e}"
    )


def _error_quantizer() -> CheckResult:
    quant = nl.UniformErrorQuantizer(0.043164, 3)
    z = np.linspace(-quant.half_range, quant.half_range, 4096)
    err = np.abs(z - quant.decode(quant.cell_of(z)))
    bound = quant.half_range / 2**quant.bits
    return _check(
        "error-quantizer-round-trip",
        np.max(err) <= bound + 1e-15,
        f"worst {np.max(err):.3e} <= {bound:.3e}",
    )


def _linear_contracts() -> CheckResult:
    sc = builtin_scenarios("paper/linear-gamma2delta")[0]
    # use the formula payload size for the contract check
    from dataclasses import replace

    sc = replace(sc, linear=replace(sc.linear, g_bits=sc.linear.g_formula_bits))
    stats = run_batch(sc, 200)
    cfg = sc.linear.trigger
    slack = lin.one_step_slack(cfg, sc.delta_s)
    g_ok = np.all(stats.max_abs_z <= lin.envelope_bound(cfg) + slack)
    post = stats.max_abs_z_post_jump[np.isfinite(stats.max_abs_z_post_jump)]
    r_ok = np.all(post <= lin.post_reception_bound(cfg) + slack)
    return _check(
        "linear-contracts-200-runs",
        g_ok and r_ok and not stats.diverged.any(),
        f"max|z1| {np.max(stats.max_abs_z):.5f}, max post jump {np.max(post):.5f}",
    )


def _nonlinear_contracts() -> CheckResult:
    sc = builtin_scenarios("paper/nonlinear-fig")[0]
    stats = run_batch(sc, 200)
    cfg = sc.nonlinear.trigger
    slack = nl.one_step_slack(cfg, sc.delta_s)
    g_ok = np.all(stats.max_abs_z <= nl.global_bound(cfg) + slack)
    post = stats.max_abs_z_post_jump[np.isfinite(stats.max_abs_z_post_jump)]
    r_ok = np.all(post <= cfg.threshold + slack)
    zeno = np.all(stats.intervals_on_period_grid) and np.all(
        (stats.min_interval_steps == 0)
        | (stats.min_interval_steps * sc.delta_s >= cfg.period_s - 1e-12)
    )
    return _check(
        "nonlinear-contracts-200-runs",
        g_ok and r_ok and zeno and not stats.diverged.any() and not stats.breached.any(),
        f"max|z| {np.max(stats.max_abs_z):.5f}, max post jump {np.max(post):.5f}",
    )


def _determinism() -> CheckResult:
    sc = builtin_scenarios("paper/nonlinear-fig")[0]
    from dataclasses import replace

    sc = replace(sc, horizon_s=2.0)
    a = run(sc)
    b = run(sc)
    same = (
        np.array_equal(a.x, b.x)
        and np.array_equal(a.z, b.z)
        and a.sends == b.sends
        and a.receptions == b.receptions
    )
    return _check("run-determinism", same, "identical traces for identical seeds")


def _builtin_round_trip() -> CheckResult:
    import yaml

    ok = True
    for name in BUILTIN_NAMES:
        for cfg in builtin_configs(name):
            ok &= yaml.safe_load(dump_config(cfg)) == cfg
    return _check("builtin-config-round-trip", ok, "parse -> dump -> parse is stable")


def run_all() -> list[CheckResult]:
    checks = [
        _eigen_round_trip,
        _demo_lipschitz,
        _disturbance_bound,
        _channel_delays,
        _timing_quantizer,
        _error_quantizer,
        _linear_contracts,
        _nonlinear_contracts,
        _determinism,
        _builtin_round_trip,
    ]
    out = []
    for fn in checks:
        try:
            out.append(fn())
        except Exception as e:  # a crash inside a check is a failure, not an abort
            out.append(CheckResult(fn.__name__.strip("_"), False, f"raised {e!r}"))
    return out
