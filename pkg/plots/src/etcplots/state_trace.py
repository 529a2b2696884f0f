"""State trace: the plant state (blue) and the controller's estimate (red)
over time; the unstable coordinate for two-state traces."""
from __future__ import annotations

import argparse
import sys

from . import common
from .schema import read_trace


def build_figure(trace_df, kind: str):
    fig, ax = common.new_figure()
    if kind == "linear":
        x, xh, lx, lxh = trace_df["x1"], trace_df["xhat1"], "$x_1(t)$", "$\\hat{x}_1(t)$"
    else:
        x, xh, lx, lxh = trace_df["x"], trace_df["xhat"], "$x(t)$", "$\\hat{x}(t)$"
    ax.plot(trace_df["t"], x, color="tab:blue", label=lx)
    ax.plot(trace_df["t"], xh, color="tab:red", label=lxh)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("state")
    ax.legend()
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    return fig


def main(argv=None) -> int:
    def build(argv):
        p = argparse.ArgumentParser(description=__doc__)
        p.add_argument("--trace", required=True, help="trace CSV")
        p.add_argument("--output", required=True)
        args = p.parse_args(argv)
        trace_df, kind = read_trace(args.trace)
        return build_figure(trace_df, kind), args.output

    return common.run_script(build, argv)


if __name__ == "__main__":
    sys.exit(main())
