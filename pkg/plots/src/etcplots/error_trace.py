"""Error trace: |z| over time (red) against the triggering threshold (blue),
with send markers from the events file."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import common
from .schema import read_events, read_trace


def build_figure(trace_df, kind: str, events_df, threshold: float | None):
    fig, ax = common.new_figure()
    z = trace_df["z1"] if kind == "linear" else trace_df["z"]
    label = "$|z_1(t)|$" if kind == "linear" else "$|z(t)|$"
    ax.plot(trace_df["t"], np.abs(z), color="tab:red", label=label)
    if threshold is not None:
        ax.axhline(threshold, color="tab:blue", label="threshold $J$")
    if len(events_df):
        ax.plot(
            events_df["t_send"], np.abs(events_df["z_at_send"]), linestyle="none",
            marker="^", color="black", markersize=4, label="send",
        )
    ax.set_xlabel("t (s)")
    ax.set_ylabel("estimation error")
    ax.legend()
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    return fig


def main(argv=None) -> int:
    def build(argv):
        p = argparse.ArgumentParser(description=__doc__)
        p.add_argument("--trace", required=True, help="trace CSV")
        p.add_argument("--events", required=True, help="events CSV")
        p.add_argument("--summary", help="run summary JSON (threshold source)")
        p.add_argument("--threshold", type=float, help="threshold override")
        p.add_argument("--output", required=True)
        args = p.parse_args(argv)
        trace_df, kind = read_trace(args.trace)
        events_df = read_events(args.events)
        threshold = args.threshold
        if threshold is None and args.summary:
            with open(args.summary) as fh:
                threshold = json.load(fh)["scheme_params"]["threshold_J"]
        return build_figure(trace_df, kind, events_df, threshold), args.output

    return common.run_script(build, argv)


if __name__ == "__main__":
    sys.exit(main())
