"""Plant models and steppers.

Covers the propeller-balanced pendulum (small-angle model and its diagonalized
unstable/stable pair), a scalar nonlinear benchmark plant, bounded disturbance
sources, and the fixed-step integrators used by the simulation engine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError

__all__ = [
    "PendulumParams",
    "LinearDiagonalSystem",
    "ScalarNonlinearPlant",
    "DisturbanceSource",
    "companion_coefficients",
    "diagonalize_companion",
    "linearize_and_diagonalize",
    "reference_pendulum_system",
    "REFERENCE_A21",
    "REFERENCE_B2",
    "demo_plant",
    "plant_from_id",
    "euler_step",
    "exact_exp_step",
    "step_dynamics",
]

# Identified coefficients of the lab rig's small-angle model.  These are the
# measured values; they do not reproduce exactly from the catalog masses and
# inertia, so scenario files carry them explicitly.
REFERENCE_A21 = 53.58
REFERENCE_B2 = 0.50


@dataclass(frozen=True)
class PendulumParams:
    """Physical constants of the propeller-balanced pendulum rig."""

    m1: float  # sheet mass (kg)
    m2: float  # mass of one motor (kg); the rig carries two
    l: float  # sheet length (m)
    inertia: float  # moment of inertia about the pivot (kg m^2), taken as measured
    g_acc: float = 9.81  # gravitational acceleration (m/s^2)
    k_xi: float = 0.001  # thrust per input unit (N)

    def __post_init__(self) -> None:
        for name in ("m1", "m2", "l", "inertia", "g_acc", "k_xi"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"PendulumParams.{name} must be strictly positive")

    @property
    def total_mass(self) -> float:
        return self.m1 + 2.0 * self.m2


def companion_coefficients(p: PendulumParams) -> tuple[float, float]:
    """Small-angle coefficients (a21, b2) of the upright model.

    d/dt (phi, phidot) = [[0, 1], [a21, 0]] (phi, phidot) + (0, b2) u
    with a21 = m g l / I and b2 = k_xi l / I.
    """
    a21 = p.total_mass * p.g_acc * p.l / p.inertia
    b2 = p.k_xi * p.l / p.inertia
    return a21, b2


@dataclass(frozen=True)
class LinearDiagonalSystem:
    """Diagonalized unstable/stable pair of the linearized pendulum.

    Diagonal coordinates are x = P^{-1} (phi, phidot); the scalar input is the
    same in both coordinate systems.  lambda1 > 0 is the coordinate that needs
    feedback through the channel, lambda2 < 0 decays on its own.
    """

    lambda1: float
    lambda2: float
    b1: float
    b2: float
    P: np.ndarray  # 2x2 eigenvector matrix, physical = P @ diagonal
    w_bound: float  # per-coordinate disturbance bound in diagonal coordinates
    K: tuple[float, float] = (0.0, 0.0)  # state feedback row, u = -K @ xhat
    a21: float = 0.0  # companion coefficient the pair was built from
    b2_input: float = 0.0

    def __post_init__(self) -> None:
        if not (self.lambda1 > 0.0 > self.lambda2):
            raise ConfigError("LinearDiagonalSystem requires lambda1 > 0 > lambda2")
        if self.w_bound < 0:
            raise ConfigError("disturbance bound must be nonnegative")
        if abs(np.linalg.det(self.P)) < 1e-12:
            raise ConfigError("eigenvector matrix P is singular")

    @property
    def P_inv(self) -> np.ndarray:
        return np.linalg.inv(self.P)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([self.lambda1, self.lambda2])

    @property
    def B(self) -> np.ndarray:
        return np.array([self.b1, self.b2])

    def to_physical(self, x: np.ndarray) -> np.ndarray:
        """Map diagonal coordinates to (phi, phidot)."""
        return self.P @ np.asarray(x)

    def from_physical(self, phys: np.ndarray) -> np.ndarray:
        return self.P_inv @ np.asarray(phys)

    def rhs(self, x, u, w):
        """Diagonal-coordinate dynamics: dx/dt = diag(l1, l2) x + B u + w."""
        return self.eigenvalues * np.asarray(x) + self.B * u + np.asarray(w)


def diagonalize_companion(
    a21: float,
    b2_input: float,
    w_bound: float = 0.0,
    K: tuple[float, float] = (0.0, 0.0),
) -> LinearDiagonalSystem:
    """Eigendecompose [[0, 1], [a21, 0]] and transform B = (0, b2_input).

    Columns of P are unit-norm eigenvectors with positive second component,
    unstable eigenvalue first.  Verifies the round trip P diag(l1, l2) P^{-1}
    against the companion matrix to 1e-9 relative error.
    """
    A_comp = np.array([[0.0, 1.0], [a21, 0.0]])
    evals, evecs = np.linalg.eig(A_comp)
    if np.max(np.abs(np.imag(evals))) > 0:
        raise ConfigError(
            "companion matrix is not diagonalizable over the reals (a21 <= 0?)"
        )
    evals = np.real(evals)
    evecs = np.real(evecs)
    order = np.argsort(-evals)  # positive eigenvalue first
    evals = evals[order]
    evecs = evecs[:, order]
    for j in range(2):
        if evecs[1, j] < 0:
            evecs[:, j] = -evecs[:, j]
    P = evecs
    B = np.linalg.solve(P, np.array([0.0, b2_input]))
    resid = P @ np.diag(evals) @ np.linalg.inv(P) - A_comp
    if np.max(np.abs(resid)) > 1e-9 * np.max(np.abs(A_comp)):
        raise ConfigError("eigendecomposition round trip failed")
    return LinearDiagonalSystem(
        lambda1=float(evals[0]),
        lambda2=float(evals[1]),
        b1=float(B[0]),
        b2=float(B[1]),
        P=P,
        w_bound=w_bound,
        K=K,
        a21=a21,
        b2_input=b2_input,
    )


def linearize_and_diagonalize(
    p: PendulumParams,
    w_bound: float = 0.0,
    K: tuple[float, float] = (0.0, 0.0),
) -> LinearDiagonalSystem:
    """Linearize the pendulum around upright and diagonalize the result."""
    a21, b2 = companion_coefficients(p)
    return diagonalize_companion(a21, b2, w_bound=w_bound, K=K)


def reference_pendulum_system(
    w_bound: float = 0.047, K: tuple[float, float] = (225.0, 11.0)
) -> LinearDiagonalSystem:
    """The lab rig's identified small-angle model, diagonalized."""
    return diagonalize_companion(REFERENCE_A21, REFERENCE_B2, w_bound=w_bound, K=K)


@dataclass(frozen=True)
class ScalarNonlinearPlant:
    """Scalar plant dx/dt = f(x, u, w) with a Lipschitz error split.

    The map must satisfy |f(x, u, w) - f(xh, u, 0)| <= lip_x |x - xh| + lip_w |w|
    on the operating range; lip_x and lip_w feed the envelope and packet-size
    calculators.  ``rhs`` must accept numpy arrays elementwise.
    """

    plant_id: str
    rhs: Callable[..., np.ndarray]
    lip_x: float
    lip_w: float
    w_bound: float

    def __post_init__(self) -> None:
        if self.lip_x <= 0 or self.lip_w <= 0:
            raise ConfigError("Lipschitz constants must be strictly positive")
        if self.w_bound < 0:
            raise ConfigError("disturbance bound must be nonnegative")


def _demo_rhs(x, u, w):
    return 2.0 * x + np.sin(x) + u + w


def demo_plant(w_bound: float) -> ScalarNonlinearPlant:
    """Benchmark map f = 2x + sin(x) + u + w with lip_x = 3, lip_w = 1."""
    return ScalarNonlinearPlant("scalar-demo", _demo_rhs, 3.0, 1.0, w_bound)


_PLANT_BUILDERS: dict[str, Callable[[float], ScalarNonlinearPlant]] = {
    "scalar-demo": demo_plant,
}


def plant_from_id(plant_id: str, w_bound: float) -> ScalarNonlinearPlant:
    try:
        return _PLANT_BUILDERS[plant_id](w_bound)
    except KeyError:
        known = ", ".join(sorted(_PLANT_BUILDERS))
        raise ConfigError(f"unknown scalar plant {plant_id!r} (known: {known})") from None


class DisturbanceSource:
    """Bounded per-step disturbance stream.

    law "uniform" draws independent uniform samples on [-bound, bound] each
    step; "const-max" pins every sample at +bound for worst-case stress runs.
    Streams are deterministic functions of the generator handed in.
    """

    LAWS = ("uniform", "const-max")

    def __init__(self, bound: float, rng: np.random.Generator, law: str = "uniform"):
        if bound < 0:
            raise ConfigError("disturbance bound must be nonnegative")
        if law not in self.LAWS:
            raise ConfigError(f"unknown disturbance law {law!r} (known: {self.LAWS})")
        self.bound = float(bound)
        self.law = law
        self._rng = rng

    def draw(self, n_steps: int, dim: int = 1) -> np.ndarray:
        """Draw an (n_steps, dim) block of per-step samples."""
        if self.law == "uniform":
            out = self._rng.uniform(-self.bound, self.bound, size=(n_steps, dim))
        else:
            out = np.full((n_steps, dim), self.bound)
        # hard guarantee: no emitted sample may exceed the bound
        assert np.all(np.abs(out) <= self.bound)
        return out

    def sample(self, dim: int = 1) -> np.ndarray:
        """Draw the next single-step sample (consumes the same stream as draw)."""
        return self.draw(1, dim)[0]


def euler_step(rhs: Callable[..., float], x, u, w, delta: float):
    """One forward-Euler step of dx/dt = rhs(x, u, w)."""
    return x + delta * rhs(x, u, w)


def exact_exp_step(lam: float, x: float, drive: float, delta: float) -> float:
    """Exact step of dx/dt = lam*x + drive with drive held constant over the step."""
    if lam == 0.0:
        return x + delta * drive
    growth = math.exp(lam * delta)
    return x * growth + drive * (growth - 1.0) / lam


def step_dynamics(model, x, u, w, delta: float, method: str = "euler"):
    """One integration step for a plant model.

    Forward Euler for every model; "exact" is available for the diagonal
    linear pair (zero-order-hold input and disturbance) to quantify the Euler
    discretization slack in tests.
    """
    if method == "euler":
        return euler_step(model.rhs, x, u, w, delta)
    if method == "exact" and isinstance(model, LinearDiagonalSystem):
        lam = model.eigenvalues
        drive = model.B * u + np.asarray(w)
        growth = np.exp(lam * delta)
        return np.asarray(x) * growth + drive * (growth - 1.0) / lam
    raise ConfigError(f"no {method!r} stepper for {type(model).__name__}")
