"""Vehicle-platoon car-following model with per-vehicle reaction delays.

The platoon consists of a leader with a prescribed velocity profile and N
followers. Each follower accelerates according to a power-law coupling with
the vehicle ahead, evaluated at a delayed time, and may additionally reuse a
fraction ``gamma`` of its own delayed acceleration. The module works in
transformed coordinates:

* ``v_i`` : velocity difference between vehicle ``i-1`` and vehicle ``i``
  (leader is vehicle 0),
* ``y_i`` : deviation of the headway of vehicle ``i`` from its reference
  value ``b_i``,
* ``l_i = v_i - gamma_i * v_i(t - tau_i)`` : auxiliary coordinate that turns
  the acceleration-feedback system into one of retarded type.

At the uniform-flow equilibrium (``v = 0``, ``y = 0``) the linearised
coupling strength of vehicle ``i`` is::

    beta_star_i = alpha_i * xdot0 ** m / b_i ** l

with ``xdot0`` the settled leader speed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "ConfigError",
    "ModelDomainError",
    "ModelExponents",
    "VehicleParams",
    "AccelSegment",
    "LeaderProfile",
    "PlatoonConfig",
    "PlatoonState",
    "EquilibriumCoefficients",
    "validate_config",
    "equilibrium_coefficients",
    "follower_velocity",
    "interaction_coefficient",
    "ccfm_rhs",
    "ccfm_daf_rhs",
]


class ConfigError(ValueError):
    """Raised when a platoon configuration violates its domain constraints."""


class ModelDomainError(ValueError):
    """Raised when a state evaluation leaves the model's domain.

    Carries the offending vehicle index (0-based) and, when known, the
    time at which the violation occurred.
    """

    def __init__(self, message: str, vehicle: int, time: Optional[float] = None):
        self.vehicle = vehicle
        self.time = time
        where = f" (vehicle {vehicle}" + (f", t={time:.6g})" if time is not None else ")")
        super().__init__(message + where)


@dataclass(frozen=True)
class ModelExponents:
    """Power-law exponents shared by every vehicle.

    Parameters
    ----------
    m : float
        Exponent on the follower's own (delayed) velocity.  ``m = 0``
        removes the velocity dependence entirely.
    l : float
        Exponent on the headway in the denominator; must be nonnegative.
        ``l = 0`` removes the headway dependence.
    """

    m: float
    l: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.m) and math.isfinite(self.l)):
            raise ConfigError("exponents must be finite")
        if self.l < 0:
            raise ConfigError(f"headway exponent must be >= 0, got {self.l}")


@dataclass(frozen=True)
class VehicleParams:
    """Per-vehicle parameters.

    ``alpha`` is the coupling gain, ``tau`` the reaction delay in seconds,
    ``gamma`` the delayed-acceleration feedback weight (0 disables the
    feedback) and ``b`` the reference headway.
    """

    alpha: float
    tau: float
    gamma: float = 0.0
    b: float = 1.0

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if not (0.0 <= self.gamma < 1.0):
            raise ConfigError(
                f"gamma must lie in [0, 1) to keep the neutral-type system "
                f"well posed, got {self.gamma}"
            )
        if not self.b > 0:
            raise ConfigError(f"reference headway b must be > 0, got {self.b}")


@dataclass(frozen=True)
class AccelSegment:
    """Leader acceleration, linear in time, on the half-open span [t0, t1)."""

    t0: float
    t1: float
    a0: float
    a1: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t0) and math.isfinite(self.t1)):
            raise ConfigError("segment times must be finite")
        if not self.t1 > self.t0:
            raise ConfigError(f"segment must have t1 > t0, got [{self.t0}, {self.t1})")
        if self.t0 < 0:
            raise ConfigError("segments must start at t >= 0")

    @property
    def area(self) -> float:
        return 0.5 * (self.a0 + self.a1) * (self.t1 - self.t0)

    def accel_at(self, t: float) -> float:
        w = (t - self.t0) / (self.t1 - self.t0)
        return self.a0 + (self.a1 - self.a0) * w


@dataclass(frozen=True)
class LeaderProfile:
    """Leader velocity profile built from piecewise-linear acceleration.

    The leader cruises at ``initial_velocity`` for ``t <= 0``, accelerates
    through the listed segments, and is settled at ``terminal_velocity``
    from ``settle_time`` onward.  Acceleration past ``settle_time`` is
    exactly zero, so the uniform-flow equilibrium of the platoon is well
    defined for long horizons.
    """

    initial_velocity: float
    terminal_velocity: float
    settle_time: float = 0.0
    segments: Tuple[AccelSegment, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.initial_velocity > 0:
            raise ConfigError("initial_velocity must be > 0")
        if not self.terminal_velocity > 0:
            raise ConfigError("terminal_velocity must be > 0")
        if self.settle_time < 0:
            raise ConfigError("settle_time must be >= 0")
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        last = 0.0
        for seg in segs:
            if seg.t0 < last:
                raise ConfigError("accel segments must be sorted and non-overlapping")
            if seg.t1 > self.settle_time + 1e-12:
                raise ConfigError("accel segments must end by settle_time")
            last = seg.t1
        reached = self.initial_velocity + sum(s.area for s in segs)
        if abs(reached - self.terminal_velocity) > 1e-9 * max(1.0, abs(self.terminal_velocity)):
            raise ConfigError(
                f"accel segments integrate to {reached!r}, but terminal_velocity is "
                f"{self.terminal_velocity!r}"
            )

    @staticmethod
    def settled(speed: float) -> "LeaderProfile":
        """Leader already at its terminal speed for all time."""
        return LeaderProfile(speed, speed, 0.0, ())

    @staticmethod
    def ramp(v0: float, v1: float, t_start: float, t_end: float) -> "LeaderProfile":
        """Constant-acceleration transition from v0 to v1 on [t_start, t_end]."""
        a = (v1 - v0) / (t_end - t_start)
        seg = AccelSegment(t_start, t_end, a, a)
        return LeaderProfile(v0, v1, t_end, (seg,))

    def accel(self, t: float) -> float:
        if t < 0.0 or t >= self.settle_time:
            return 0.0
        for seg in self.segments:
            if seg.t0 <= t < seg.t1:
                return seg.accel_at(t)
        return 0.0

    def velocity(self, t: float) -> float:
        if t <= 0.0:
            return self.initial_velocity
        if t >= self.settle_time:
            return self.terminal_velocity
        v = self.initial_velocity
        for seg in self.segments:
            if t <= seg.t0:
                break
            te = min(t, seg.t1)
            # area of the linear accel between seg.t0 and te
            w = (te - seg.t0) / (seg.t1 - seg.t0)
            a_te = seg.a0 + (seg.a1 - seg.a0) * w
            v += 0.5 * (seg.a0 + a_te) * (te - seg.t0)
        return v


@dataclass(frozen=True)
class PlatoonConfig:
    """A leader profile plus the ordered follower parameter list."""

    vehicles: Tuple[VehicleParams, ...]
    exponents: ModelExponents
    leader: LeaderProfile

    def __post_init__(self) -> None:
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        if len(self.vehicles) == 0:
            raise ConfigError("platoon needs at least one follower")

    @property
    def n(self) -> int:
        return len(self.vehicles)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Vehicle parameters as (alpha, tau, gamma, b) float arrays."""
        alpha = np.array([v.alpha for v in self.vehicles], dtype=np.float64)
        tau = np.array([v.tau for v in self.vehicles], dtype=np.float64)
        gamma = np.array([v.gamma for v in self.vehicles], dtype=np.float64)
        b = np.array([v.b for v in self.vehicles], dtype=np.float64)
        return alpha, tau, gamma, b

    def is_feedback_free(self) -> bool:
        return all(v.gamma == 0.0 for v in self.vehicles)


@dataclass
class PlatoonState:
    """Headway deviations ``y`` and velocity differences ``v`` at one instant."""

    y: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.y.shape != self.v.shape or self.y.ndim != 1:
            raise ValueError("y and v must be 1-d arrays of equal length")


@dataclass(frozen=True)
class EquilibriumCoefficients:
    """Linearised coupling strengths ``beta_star`` at uniform flow."""

    beta_star: np.ndarray


def validate_config(config: PlatoonConfig) -> list[str]:
    """Collect domain violations of a configuration.

    Returns an empty list when the configuration is admissible.  Most
    violations are already rejected by the dataclass constructors; this
    exists for checking documents assembled from external input and for
    cross-field conditions.
    """
    problems: list[str] = []
    m = config.exponents.m
    if m != 0.0 and config.leader.initial_velocity <= 0:
        problems.append("leader initial velocity must be positive")
    for idx, veh in enumerate(config.vehicles):
        if veh.tau <= 0:
            problems.append(f"vehicle {idx}: tau must be positive")
        if not (0.0 <= veh.gamma < 1.0):
            problems.append(f"vehicle {idx}: gamma must lie in [0, 1)")
        if veh.alpha <= 0:
            problems.append(f"vehicle {idx}: alpha must be positive")
        if veh.b <= 0:
            problems.append(f"vehicle {idx}: reference headway must be positive")
    return problems


def equilibrium_coefficients(config: PlatoonConfig) -> EquilibriumCoefficients:
    """Coupling strengths linearised around uniform flow.

    Parameters
    ----------
    config : PlatoonConfig
        Platoon description.  The settled leader speed
        ``config.leader.terminal_velocity`` is the equilibrium speed of
        every vehicle.

    Returns
    -------
    EquilibriumCoefficients
        ``beta_star[i] = alpha_i * xdot0**m / b_i**l`` for each follower.

    Notes
    -----
    The linearisation of each follower equation about ``(y, v) = (0, 0)``
    reads ``vdot_i(t) = ... - beta_star_i * v_i(t - tau_i)``, so
    ``beta_star_i`` plays the role of a per-vehicle feedback gain and
    drives all closed-form stability conditions.
    """
    xdot0 = config.leader.terminal_velocity
    m, l = config.exponents.m, config.exponents.l
    alpha, _, _, b = config.arrays()
    if m != 0.0 and xdot0 <= 0:
        raise ConfigError("equilibrium requires positive leader speed")
    num = xdot0 ** m if m != 0.0 else 1.0
    beta = alpha * num / b ** l
    return EquilibriumCoefficients(beta_star=beta)


def follower_velocity(state: PlatoonState, leader_velocity: float, i: int) -> float:
    """Absolute velocity of follower ``i`` (0-based) from the difference chain.

    The velocity differences telescope: follower ``i`` moves at the leader
    speed minus the sum of the first ``i + 1`` differences.
    """
    if i < 0 or i >= state.v.shape[0]:
        raise IndexError(f"vehicle index {i} out of range")
    return leader_velocity - float(np.sum(state.v[: i + 1]))


def interaction_coefficient(
    config: PlatoonConfig, state: PlatoonState, leader_velocity: float, i: int
) -> float:
    """Power-law coupling coefficient of vehicle ``i`` at one state snapshot.

    Evaluates ``alpha_i * xdot_i**m / (y_i + b_i)**l`` where ``xdot_i`` is
    the follower's absolute velocity reconstructed from the difference
    chain.  Raises :class:`ModelDomainError` when the separation
    ``y_i + b_i`` is nonpositive, or when a nonzero velocity exponent
    meets a nonpositive follower velocity (the power law is only defined
    for forward motion).
    """
    m, l = config.exponents.m, config.exponents.l
    veh = config.vehicles[i]
    sep = float(state.y[i]) + veh.b
    if sep <= 0.0:
        raise ModelDomainError("nonpositive separation", vehicle=i)
    if m == 0.0:
        num = 1.0
    else:
        xdot = follower_velocity(state, leader_velocity, i)
        if xdot <= 0.0:
            raise ModelDomainError("nonpositive follower velocity in power law", vehicle=i)
        num = xdot ** m
    den = sep ** l if l != 0.0 else 1.0
    return veh.alpha * num / den


def _flux_terms(
    config: PlatoonConfig,
    delayed_states: Sequence[PlatoonState],
    leader_velocity_delayed: np.ndarray,
    ) -> np.ndarray:
    """Per-vehicle delayed acceleration terms beta_i(t - tau_i) * v_i(t - tau_i)."""
    n = config.n
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        snap = delayed_states[i]
        beta = interaction_coefficient(config, snap, float(leader_velocity_delayed[i]), i)
        out[i] = beta * float(snap.v[i])
    return out


def ccfm_rhs(
    state_now: PlatoonState,
    delayed_states: Sequence[PlatoonState],
    config: PlatoonConfig,
    leader_velocity_delayed: np.ndarray,
    leader_accel_now: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Right-hand side of the delay system without acceleration feedback.

    Parameters
    ----------
    state_now : PlatoonState
        State at the current time ``t`` (only ``v`` enters, through
        ``ydot = v``).
    delayed_states : sequence of PlatoonState
        ``delayed_states[i]`` is the full platoon state at ``t - tau_i``.
    config : PlatoonConfig
        Platoon description.
    leader_velocity_delayed : ndarray
        ``leader_velocity_delayed[i]`` is the leader speed at ``t - tau_i``.
    leader_accel_now : float
        Leader acceleration at ``t``; it forces the first follower's
        velocity-difference equation.

    Returns
    -------
    (vdot, ydot) : pair of ndarray
        Time derivatives of the velocity differences and headway
        deviations.

    Notes
    -----
    For the first follower ``vdot_1 = xddot_0(t) - beta_1(t - tau_1)
    v_1(t - tau_1)``; downstream vehicles exchange the delayed
    acceleration flux of their predecessor for their own.
    """
    flux = _flux_terms(config, delayed_states, leader_velocity_delayed)
    vdot = np.empty_like(flux)
    vdot[0] = leader_accel_now - flux[0]
    if config.n > 1:
        vdot[1:] = flux[:-1] - flux[1:]
    ydot = state_now.v.copy()
    return vdot, ydot


def ccfm_daf_rhs(
    state_now: PlatoonState,
    delayed_states: Sequence[PlatoonState],
    config: PlatoonConfig,
    leader_velocity_delayed: np.ndarray,
    leader_accel_now: float,
    leader_accel_delayed: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Right-hand side with delayed-acceleration feedback, in l-coordinates.

    Identical flux structure to :func:`ccfm_rhs`, but the returned first
    component is ``ldot`` for ``l_i = v_i - gamma_i v_i(t - tau_i)``, and
    the leader forcing on the first follower becomes
    ``xddot_0(t) - gamma_1 * xddot_0(t - tau_1)``.

    ``state_now.v`` must hold the recovered velocity differences at the
    current time, not ``l``; it feeds ``ydot = v`` unchanged.  With all
    ``gamma_i = 0`` the result coincides with :func:`ccfm_rhs`.
    """
    flux = _flux_terms(config, delayed_states, leader_velocity_delayed)
    ldot = np.empty_like(flux)
    g1 = config.vehicles[0].gamma
    ldot[0] = leader_accel_now - g1 * float(leader_accel_delayed[0]) - flux[0]
    if config.n > 1:
        ldot[1:] = flux[:-1] - flux[1:]
    ydot = state_now.v.copy()
    return ldot, ydot
