"""Figure scripts for etcsim CSV artifacts.

Strictly post-hoc consumers of the documented trace, events, and sweep CSV
schemas plus the per-run JSON summary; no bounds or rates are computed here.
One script per figure kind: rate-curve, error-trace, state-trace, and
pendulum-trace.
"""

__version__ = "0.1.0"
