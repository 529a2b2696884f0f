"""Shared rendering plumbing: headless backend, deterministic output, exits."""
from __future__ import annotations

import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .schema import EXIT_SCHEMA, SchemaError  # noqa: E402

FIGSIZE = (7.0, 4.0)
DPI = 110


def new_figure():
    return plt.subplots(figsize=FIGSIZE, dpi=DPI)


def save(fig, path) -> None:
    """Deterministic save: fixed dpi, no timestamps in the container."""
    fig.savefig(path, dpi=DPI, format="png")
    plt.close(fig)


def run_script(build, argv) -> int:
    """Parse-build-save wrapper shared by the figure scripts."""
    try:
        fig, out = build(argv)
    except SchemaError as e:
        print(f"schema error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    save(fig, out)
    print(f"wrote {out}")
    return 0
