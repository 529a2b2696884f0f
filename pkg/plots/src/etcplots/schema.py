"""Documented etcsim CSV schemas and strict header validation."""
from __future__ import annotations

import pandas as pd

TRACE_LINEAR = [
    "t", "x1", "x2", "xhat1", "xhat2", "z1", "z2", "u", "w1", "w2", "phi", "phidot",
]
TRACE_SCALAR = ["t", "x", "xhat", "z", "u", "w"]
EVENTS = [
    "seq", "t_send", "t_deliver", "delay", "g_bits", "payload", "z_at_send", "z_after_jump",
]
SWEEP = ["gamma", "g_bits", "R_s", "entropy_ref", "max_z", "violations"]

EXIT_SCHEMA = 2


class SchemaError(ValueError):
    """CSV header does not match the documented schema."""


def _diff(expected: list[str], got: list[str]) -> str:
    missing = [c for c in expected if c not in got]
    extra = [c for c in got if c not in expected]
    parts = []
    if missing:
        parts.append(f"missing columns: {missing}")
    if extra:
        parts.append(f"unexpected columns: {extra}")
    if not parts:
        parts.append(f"column order differs: expected {expected}, got {got}")
    return "; ".join(parts)


def read_checked(path, expected: list[str]) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"payload": str} if "payload" in expected else None)
    got = list(df.columns)
    if got != expected:
        raise SchemaError(f"{path}: {_diff(expected, got)}")
    return df


def read_trace(path) -> tuple[pd.DataFrame, str]:
    """Read a trace CSV, returning the frame and its kind ('linear' | 'scalar')."""
    df = pd.read_csv(path)
    got = list(df.columns)
    if got == TRACE_LINEAR:
        return df, "linear"
    if got == TRACE_SCALAR:
        return df, "scalar"
    expected = TRACE_LINEAR if len(got) > len(TRACE_SCALAR) else TRACE_SCALAR
    raise SchemaError(f"{path}: {_diff(expected, got)}")


def read_events(path) -> pd.DataFrame:
    return read_checked(path, EVENTS)


def read_sweep(path) -> pd.DataFrame:
    return read_checked(path, SWEEP)
