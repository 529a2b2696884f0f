"""Pendulum trace: angle and angular rate over time, from a two-state trace."""
from __future__ import annotations

import argparse
import sys

import matplotlib.pyplot as plt

from . import common
from .schema import SchemaError, read_trace


def build_figure(trace_df):
    fig, (ax1, ax2) = plt.subplots(
        2, 1, sharex=True, figsize=common.FIGSIZE, dpi=common.DPI
    )
    ax1.plot(trace_df["t"], trace_df["phi"], color="tab:blue")
    ax1.set_ylabel("$\\phi$ (rad)")
    ax1.grid(True, alpha=0.4)
    ax2.plot(trace_df["t"], trace_df["phidot"], color="tab:orange")
    ax2.set_ylabel("$\\dot{\\phi}$ (rad/s)")
    ax2.set_xlabel("t (s)")
    ax2.grid(True, alpha=0.4)
    fig.tight_layout()
    return fig


def main(argv=None) -> int:
    def build(argv):
        p = argparse.ArgumentParser(description=__doc__)
        p.add_argument("--trace", required=True, help="two-state trace CSV")
        p.add_argument("--output", required=True)
        args = p.parse_args(argv)
        trace_df, kind = read_trace(args.trace)
        if kind != "linear":
            raise SchemaError(
                f"{args.trace}: pendulum trace needs the two-state schema "
                "(phi/phidot columns)"
            )
        return build_figure(trace_df), args.output

    return common.run_script(build, argv)


if __name__ == "__main__":
    sys.exit(main())
