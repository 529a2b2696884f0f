"""Rate curve: measured payload rate against the delay bound, with the plant's
information-rate reference drawn as a horizontal line."""
from __future__ import annotations

import argparse
import sys

from . import common
from .schema import read_sweep

REFERENCE_LABEL = "entropy reference"


def build_figure(sweep_df):
    fig, ax = common.new_figure()
    ax.plot(
        sweep_df["gamma"], sweep_df["R_s"], marker="o", color="tab:blue",
        label="measured $R_s$",
    )
    ref = float(sweep_df["entropy_ref"].iloc[0])
    ax.axhline(ref, color="tab:red", linestyle="--", label=REFERENCE_LABEL)
    ax.set_xlabel("delay bound $\\gamma$ (s)")
    ax.set_ylabel("payload rate (bits/s)")
    ax.legend()
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    return fig


def main(argv=None) -> int:
    def build(argv):
        p = argparse.ArgumentParser(description=__doc__)
        p.add_argument("--input", required=True, help="sweep CSV")
        p.add_argument("--output", required=True, help="output image path")
        args = p.parse_args(argv)
        return build_figure(read_sweep(args.input)), args.output

    return common.run_script(build, argv)


if __name__ == "__main__":
    sys.exit(main())
