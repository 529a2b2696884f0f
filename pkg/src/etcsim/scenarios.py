"""Scenario configuration: file schema, validation, built-in reference set.

A scenario file is a single YAML document with explicit units in key names
(gamma_s, delta_s, horizon_s, alpha_s, phi_rad).  The loader normalizes the
channel grid (gamma rounded up to a whole number of sampling steps, with a
warning), resolves threshold recipes, sizes the payload, and checks every
feasibility inequality before the engine ever runs.
"""
from __future__ import annotations

import importlib.resources
import math
import warnings

import numpy as np
import yaml

from . import linear_etc as lin
from . import nonlinear_etc as nl
from .channel import ChannelConfig
from .engine import LinearSetup, NonlinearSetup, Scenario
from .errors import ConfigError
from .plants import REFERENCE_A21, REFERENCE_B2, diagonalize_companion, plant_from_id

__all__ = [
    "BUILTIN_NAMES",
    "load_config",
    "dump_config",
    "scenario_from_config",
    "builtin_configs",
    "builtin_scenarios",
    "resolve_configs",
    "list_builtins",
    "parse_gamma_grid",
]

BUILTIN_NAMES = [
    "paper/linear-gamma2delta",
    "paper/linear-gamma5delta",
    "paper/nonlinear-fig",
    "paper/nonlinear-rate",
]

_BUILTIN_FILES: dict[str, list[str]] = {
    "paper/linear-gamma2delta": ["linear_gamma2delta.yaml"],
    "paper/linear-gamma5delta": ["linear_gamma5delta.yaml"],
    "paper/nonlinear-fig": [
        "nonlinear_fig_gamma010.yaml",
        "nonlinear_fig_gamma099.yaml",
    ],
    "paper/nonlinear-rate": ["nonlinear_rate.yaml"],
}


def load_config(path) -> dict:
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"scenario file {path} does not contain a mapping")
    return cfg


def dump_config(cfg: dict) -> str:
    """Canonical serialization; load(dump(load(f))) is byte-stable."""
    return yaml.safe_dump(cfg, sort_keys=False)


def builtin_text(filename: str) -> str:
    return importlib.resources.files("etcsim").joinpath("data", filename).read_text()


def builtin_configs(name: str) -> list[dict]:
    """Raw config dicts of a built-in scenario (one per variant)."""
    if name not in _BUILTIN_FILES:
        known = ", ".join(BUILTIN_NAMES)
        raise ConfigError(f"unknown scenario {name!r}; built-ins: {known}")
    return [yaml.safe_load(builtin_text(f)) for f in _BUILTIN_FILES[name]]


def builtin_scenarios(name: str) -> list[Scenario]:
    return [scenario_from_config(cfg) for cfg in builtin_configs(name)]


def resolve_configs(name_or_path: str) -> list[dict]:
    """Accept a built-in name or a path to a scenario file."""
    if name_or_path in _BUILTIN_FILES:
        return builtin_configs(name_or_path)
    import os

    if os.path.exists(name_or_path):
        return [load_config(name_or_path)]
    known = ", ".join(BUILTIN_NAMES)
    raise ConfigError(f"unknown scenario {name_or_path!r}; built-ins: {known}")


def _require(cfg: dict, key: str, context: str = "scenario"):
    if key not in cfg:
        raise ConfigError(f"{context} is missing required key {key!r}")
    return cfg[key]


def _normalized_horizon(horizon_s: float, delta_s: float) -> float:
    steps = horizon_s / delta_s
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        new = math.ceil(steps - 1e-12) * delta_s
        warnings.warn(
            f"horizon_s={horizon_s} is not a multiple of delta_s={delta_s}; "
            f"rounded up to {new}",
            stacklevel=2,
        )
        return new
    return round(steps) * delta_s


def scenario_from_config(cfg: dict) -> Scenario:
    name = str(_require(cfg, "name"))
    scheme = str(_require(cfg, "scheme"))
    if scheme not in ("linear", "nonlinear"):
        raise ConfigError(f"scheme must be 'linear' or 'nonlinear', got {scheme!r}")
    delta_s = float(_require(cfg, "delta_s"))
    if delta_s <= 0:
        raise ConfigError("delta_s must be strictly positive")
    horizon_s = _normalized_horizon(float(_require(cfg, "horizon_s")), delta_s)
    seed = int(_require(cfg, "seed"))
    if seed < 0:
        raise ConfigError("seed must be nonnegative")

    ch = dict(_require(cfg, "channel"))
    channel = ChannelConfig(
        gamma_s=float(_require(ch, "gamma_s", "channel")),
        delta_s=delta_s,
        min_delay_steps=int(ch.get("min_delay_steps", 2)),
        law=str(ch.get("law", "uniform")),
        seed=ch.get("seed"),
    ).normalized()

    plant_cfg = dict(_require(cfg, "plant"))
    disturbance_law = str(plant_cfg.get("disturbance", "uniform"))
    variant = cfg.get("variant")

    if scheme == "linear":
        setup = _linear_setup(cfg, plant_cfg, channel)
        return Scenario(
            name=name,
            scheme=scheme,
            delta_s=delta_s,
            horizon_s=horizon_s,
            seed=seed,
            channel=channel,
            disturbance_law=disturbance_law,
            variant=variant,
            linear=setup,
        )
    setup = _nonlinear_setup(cfg, plant_cfg, channel)
    return Scenario(
        name=name,
        scheme=scheme,
        delta_s=delta_s,
        horizon_s=horizon_s,
        seed=seed,
        channel=channel,
        disturbance_law=disturbance_law,
        variant=variant,
        nonlinear=setup,
    )


def _linear_setup(cfg: dict, plant_cfg: dict, channel: ChannelConfig) -> LinearSetup:
    kind = str(plant_cfg.get("kind", "pendulum-diagonal"))
    if kind not in ("pendulum-diagonal", "pendulum-nonlinear"):
        raise ConfigError(f"linear scheme expects a pendulum plant, got {kind!r}")
    a21 = float(plant_cfg.get("a21_per_s2", REFERENCE_A21))
    b2 = float(plant_cfg.get("b2_per_s2", REFERENCE_B2))
    w_bound = float(_require(plant_cfg, "M", "plant"))

    sect = dict(_require(cfg, "linear"))
    K = tuple(float(v) for v in _require(sect, "K", "linear"))
    if len(K) != 2:
        raise ConfigError("linear.K must have exactly two entries")
    system = diagonalize_companion(a21, b2, w_bound=w_bound, K=K)

    rho0 = float(_require(sect, "rho0", "linear"))
    safety = float(_require(sect, "b", "linear"))
    if "J_value" in sect:
        threshold = float(sect["J_value"])
    else:
        threshold = lin.threshold_from_margin(
            float(_require(sect, "J_margin", "linear")),
            rho0,
            safety,
            channel.gamma_s,
            system.lambda1,
            w_bound,
        )
    trigger = lin.LinearTriggerConfig(
        threshold=threshold,
        rho0=rho0,
        safety=safety,
        gamma_s=channel.gamma_s,
        lambda1=system.lambda1,
        w_bound=w_bound,
    )
    trigger.validate()
    g_formula = lin.packet_size_bits(trigger)
    g_bits = int(sect.get("g_override_bits") or g_formula)
    if g_bits < 1:
        raise ConfigError("payload needs at least one bit")

    x0, xhat0, truth = _linear_initial(cfg, system, kind)
    if abs(x0[0] - xhat0[0]) > trigger.threshold:
        raise ConfigError(
            "initial estimation error must satisfy |z1(0)| <= J: "
            f"|{x0[0] - xhat0[0]!r}| > {trigger.threshold!r}"
        )
    return LinearSetup(
        system=system,
        trigger=trigger,
        x0=x0,
        xhat0=xhat0,
        g_bits=g_bits,
        g_formula_bits=g_formula,
        truth=truth,
        w2_bound=float(plant_cfg.get("w2_bound", 0.02)),
    )


def _linear_initial(cfg: dict, system, kind: str):
    init = dict(cfg.get("initial", {}))
    if "x" in init:
        x0 = tuple(float(v) for v in init["x"])
    else:
        phys = np.array(
            [float(init.get("phi_rad", 0.0)), float(init.get("phidot_rad_s", 0.0))]
        )
        x0 = tuple(float(v) for v in system.from_physical(phys))
    xhat = init.get("xhat", "same-as-state")
    if isinstance(xhat, str):
        if xhat != "same-as-state":
            raise ConfigError(f"initial.xhat must be a pair or 'same-as-state', got {xhat!r}")
        xhat0 = x0
    else:
        xhat0 = tuple(float(v) for v in xhat)
    truth = "pendulum" if kind == "pendulum-nonlinear" else "diagonal"
    return x0, xhat0, truth


def _nonlinear_setup(
    cfg: dict, plant_cfg: dict, channel: ChannelConfig
) -> NonlinearSetup:
    kind = str(plant_cfg.get("kind", "scalar-demo"))
    w_bound = float(_require(plant_cfg, "M", "plant"))
    plant = plant_from_id(kind, w_bound)

    sect = dict(_require(cfg, "nonlinear"))
    alpha_s = float(_require(sect, "alpha_s", "nonlinear"))
    gain = float(_require(sect, "gain", "nonlinear"))
    if "J_value" in sect:
        trigger = nl.NonlinearTriggerConfig(
            threshold=float(sect["J_value"]),
            alpha_s=alpha_s,
            gamma_s=channel.gamma_s,
            lip_x=plant.lip_x,
            lip_w=plant.lip_w,
            w_bound=w_bound,
        )
    else:
        trigger = nl.threshold_from_margin(
            float(_require(sect, "J_margin", "nonlinear")),
            alpha_s,
            channel.gamma_s,
            plant,
        )
    trigger.validate(strict=True)
    ps = nl.packet_size(trigger)
    g_bits = int(sect.get("g_override_bits") or ps.bits)
    if g_bits < 1:
        raise ConfigError("payload needs at least one bit")

    init = dict(cfg.get("initial", {}))
    x0 = float(init.get("x", 0.0))
    xhat0 = float(init.get("xhat", x0))
    if not abs(x0 - xhat0) < trigger.threshold:
        raise ConfigError(
            "initial estimation error must satisfy |z(0)| < J: "
            f"|{x0 - xhat0!r}| >= {trigger.threshold!r}"
        )
    return NonlinearSetup(
        plant=plant,
        trigger=trigger,
        gain=gain,
        x0=x0,
        xhat0=xhat0,
        g_bits=g_bits,
        g_lower_bound_bits=ps.lower_bound_bits,
    )


def _param_table(cfg: dict) -> dict:
    """Compact parameter view of one config for the CLI listing."""
    sc = scenario_from_config(cfg)
    row = {
        "variant": sc.variant,
        "scheme": sc.scheme,
        "delta_s": sc.delta_s,
        "horizon_s": sc.horizon_s,
        "gamma_s": sc.channel.gamma_s,
        "min_delay_steps": sc.channel.min_delay_steps,
        "seed": sc.seed,
    }
    if sc.scheme == "linear":
        row.update(
            M=sc.linear.system.w_bound,
            J=sc.linear.trigger.threshold,
            g_bits=sc.linear.g_bits,
            g_formula_bits=sc.linear.g_formula_bits,
        )
    else:
        row.update(
            M=sc.nonlinear.plant.w_bound,
            J=sc.nonlinear.trigger.threshold,
            g_bits=sc.nonlinear.g_bits,
            alpha_s=sc.nonlinear.trigger.alpha_s,
        )
    ref = cfg.get("reference")
    if ref:
        row["reference"] = dict(ref)
    return row


def list_builtins() -> list[dict]:
    """Names and parameter tables of the built-in scenarios."""
    out = []
    for name in BUILTIN_NAMES:
        variants = [_param_table(c) for c in builtin_configs(name)]
        out.append({"name": name, "variants": variants})
    return out


def parse_gamma_grid(spec: str) -> list[float]:
    """Grid syntax: 'start:stop:count' (inclusive linspace) or 'a,b,c'."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid must be start:stop:count, got {spec!r}")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ConfigError("grid count must be >= 1")
        if count == 1:
            return [start]
        return [float(v) for v in np.linspace(start, stop, count)]
    return [float(v) for v in spec.split(",")]
