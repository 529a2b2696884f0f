"""Event-triggered stabilization over delay-bounded digital channels.

Simulation library and CLI for two triggering schemes that encode state
information in both packet payload and packet timing: a threshold scheme for
the unstable coordinate of a linearized pendulum, and a periodic scheme for
scalar Lipschitz nonlinear plants.
"""

from .channel import ChannelConfig, DelayChannel, InFlight, Packet
from .engine import (
    BatchStats,
    LinearSetup,
    NonlinearSetup,
    Scenario,
    SimTrace,
    run,
    run_batch,
    sweep,
)
from .errors import ConfigError, EnvelopeBreachError, ProtocolViolationError
from .metrics import (
    EntropyReference,
    EnvelopeReport,
    RateReport,
    compute_rate,
    demo_entropy,
    demo_entropy_floor,
    entropy_rate_linear,
    verify_envelopes,
)
from .plants import (
    DisturbanceSource,
    LinearDiagonalSystem,
    PendulumParams,
    ScalarNonlinearPlant,
    demo_plant,
    diagonalize_companion,
    linearize_and_diagonalize,
    reference_pendulum_system,
    step_dynamics,
)
from .scenarios import (
    BUILTIN_NAMES,
    builtin_scenarios,
    load_config,
    scenario_from_config,
)

__version__ = "0.1.0"
