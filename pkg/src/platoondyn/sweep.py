"""Bifurcation sweeps: envelopes, periods, and onset classification.

A sweep re-integrates the full nonlinear platoon over a grid of one scalar
parameter (a vehicle's delay or feedback weight, or a global delay scale)
and measures the post-transient response of one observed vehicle: the
velocity-deviation envelope, an upward-zero-crossing period estimate, and
whether the oscillation is sustained (non-decaying) or has settled.

To compare feedback weights on a common axis, the leader speed can be
recalibrated per curve so that a designated vehicle's critical delay sits
at a prescribed value; all curves then bifurcate at the same grid location
and their envelopes are directly comparable.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dde import (
    IntegrationSettings,
    NumericalFault,
    Trajectory,
    integrate_neutral,
    perturbation_history,
)
from .model import ConfigError, LeaderProfile, PlatoonConfig, VehicleParams

__all__ = [
    "CalibrationError",
    "CalibrationTarget",
    "SweepSpec",
    "EnvelopePoint",
    "LimitCycleMetrics",
    "SweepPoint",
    "SweepCurve",
    "SweepResult",
    "BifurcationClassification",
    "PeriodEquivalence",
    "calibrate_leader_velocity",
    "estimate_period",
    "measure_response",
    "bifurcation_diagram",
    "classify_bifurcation",
    "period_equivalence_check",
]

#: amplitude must exceed this multiple of the seed perturbation to count
#: as an established limit cycle
OSCILLATION_THRESHOLD_FACTOR = 10.0

#: minimum number of full cycles for a trustworthy period estimate
MIN_CYCLES = 10

#: minimum exponential growth rate (1/s) of the late-window cycle-peak
#: envelope for a small-amplitude response to count as sustained; sits an
#: order of magnitude above the integrator's numerical damping noise
SUSTAIN_GROWTH_MIN = 5e-5

_SWEEP_PARAMETERS = ("tau", "gamma", "delay_scale")


class CalibrationError(ValueError):
    """Leader-speed calibration is impossible for the given exponents."""


@dataclass(frozen=True)
class CalibrationTarget:
    """Pin one vehicle's critical delay by choosing the leader speed."""

    vehicle: int
    tau_cr: float

    def __post_init__(self) -> None:
        if not self.tau_cr > 0:
            raise ValueError("target critical delay must be positive")


def calibrate_leader_velocity(config: PlatoonConfig, vehicle: int, tau_cr_target: float) -> float:
    """Leader speed that places one vehicle's critical delay at a target.

    Inverts ``tau_cr = sqrt(1 - gamma**2) * acos(gamma) / beta_star``
    for the required gain and then the power law
    ``beta_star = alpha * speed**m / b**l`` for the speed.  Requires a
    nonzero velocity exponent ``m``; with ``m = 0`` the gain does not
    depend on the leader speed at all.
    """
    if not 0 <= vehicle < config.n:
        raise ValueError(f"vehicle index {vehicle} out of range")
    if not tau_cr_target > 0:
        raise ValueError("tau_cr_target must be positive")
    m, l = config.exponents.m, config.exponents.l
    if m == 0.0:
        raise CalibrationError("beta_star is independent of the leader speed when m = 0")
    veh = config.vehicles[vehicle]
    g = veh.gamma
    beta_needed = math.sqrt(1.0 - g * g) * math.acos(g) / tau_cr_target
    speed = (beta_needed * veh.b ** l / veh.alpha) ** (1.0 / m)
    if not (speed > 0 and math.isfinite(speed)):
        raise CalibrationError(f"calibration produced inadmissible speed {speed}")
    return speed


@dataclass(frozen=True)
class SweepSpec:
    """Description of one bifurcation sweep.

    Parameters
    ----------
    config : PlatoonConfig
        Base platoon; the swept vehicle's parameter is overridden per
        grid point (and its feedback weight per curve).
    vehicle : int
        Index of the bifurcating vehicle (0-based).
    parameter : str
        ``"tau"`` or ``"gamma"`` of the bifurcating vehicle, or
        ``"delay_scale"`` multiplying every delay.
    values : tuple of float
        Grid of parameter values.
    gamma_family : tuple of float
        One sweep curve per entry, with the bifurcating vehicle's
        feedback weight set to it.  Empty means a single curve with the
        config's own weights.
    calibration : CalibrationTarget, optional
        When given, the leader is replaced per curve by a settled profile
        at the speed pinning the target vehicle's critical delay.
    perturb_delta : float
        Size of the constant velocity offset seeding the response.
    observe : int, optional
        Vehicle whose velocity deviation is measured (defaults to
        ``vehicle``).
    """

    config: PlatoonConfig
    vehicle: int
    parameter: str
    values: Tuple[float, ...]
    gamma_family: Tuple[float, ...] = field(default_factory=tuple)
    calibration: Optional[CalibrationTarget] = None
    perturb_delta: float = 5e-4
    observe: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "gamma_family", tuple(float(g) for g in self.gamma_family))
        if self.parameter not in _SWEEP_PARAMETERS:
            raise ValueError(f"parameter must be one of {_SWEEP_PARAMETERS}")
        if not 0 <= self.vehicle < self.config.n:
            raise ValueError(f"vehicle index {self.vehicle} out of range")
        if self.observe is not None and not 0 <= self.observe < self.config.n:
            raise ValueError(f"observe index {self.observe} out of range")
        if len(self.values) == 0:
            raise ValueError("sweep needs at least one grid value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("grid values must be strictly increasing")
        if not self.perturb_delta > 0:
            raise ValueError("perturb_delta must be positive")

    @property
    def observed(self) -> int:
        return self.vehicle if self.observe is None else self.observe


@dataclass(frozen=True)
class EnvelopePoint:
    """Velocity-deviation extremes after the transient window."""

    param_value: float
    v_min: float
    v_max: float

    @property
    def amplitude(self) -> float:
        return 0.5 * (self.v_max - self.v_min)


@dataclass(frozen=True)
class LimitCycleMetrics:
    """Oscillation measurements; ``period`` is None below the cycle threshold."""

    amplitude: float
    period: Optional[float]
    n_cycles: int

    @property
    def frequency(self) -> Optional[float]:
        return None if self.period is None else 1.0 / self.period


@dataclass(frozen=True)
class SweepPoint:
    param_value: float
    envelope: Optional[EnvelopePoint]
    metrics: Optional[LimitCycleMetrics]
    sustained: bool
    oscillatory: bool
    raw_period: Optional[float]
    growth_rate: Optional[float] = None
    status: str = "ok"

    @property
    def amplitude(self) -> float:
        return self.envelope.amplitude if self.envelope is not None else math.nan


@dataclass(frozen=True)
class SweepCurve:
    gamma: Optional[float]
    leader_speed: float
    points: Tuple[SweepPoint, ...]

    def amplitudes(self) -> np.ndarray:
        return np.array([p.amplitude for p in self.points])

    def param_values(self) -> np.ndarray:
        return np.array([p.param_value for p in self.points])


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    settings: IntegrationSettings
    curves: Tuple[SweepCurve, ...]


def estimate_period(times: np.ndarray, values: np.ndarray) -> Tuple[Optional[float], int]:
    """Mean spacing of upward zero crossings, by linear interpolation.

    Returns ``(period, n_intervals)``; the period is None when fewer than
    two upward crossings exist.
    """
    t = np.asarray(times, dtype=np.float64)
    x = np.asarray(values, dtype=np.float64)
    up = np.nonzero((x[:-1] < 0.0) & (x[1:] >= 0.0))[0]
    if up.size < 2:
        return None, 0
    frac = -x[up] / (x[up + 1] - x[up])
    crossings = t[up] + frac * (t[up + 1] - t[up])
    diffs = np.diff(crossings)
    return float(np.mean(diffs)), int(diffs.size)


def estimate_growth_rate(times: np.ndarray, values: np.ndarray) -> Optional[float]:
    """Exponential rate of the cycle-peak envelope, from a log-linear fit.

    Splits the signal into cycles at its upward zero crossings, takes the
    peak magnitude of each cycle, and fits a straight line to the log of
    those peaks against the cycle midpoints.  Returns the slope in 1/s,
    or None when fewer than four complete cycles are available.  An
    exponentially growing or decaying oscillation is recovered exactly;
    the estimate is insensitive to the oscillation's shape because only
    one number per cycle enters the fit.
    """
    t = np.asarray(times, dtype=np.float64)
    x = np.asarray(values, dtype=np.float64)
    up = np.nonzero((x[:-1] < 0.0) & (x[1:] >= 0.0))[0]
    if up.size < 5:
        return None
    mids = []
    peaks = []
    for a, b in zip(up[:-1], up[1:]):
        peak = float(np.max(np.abs(x[a:b + 1])))
        if peak > 0.0:
            mids.append(0.5 * (t[a] + t[b]))
            peaks.append(peak)
    if len(peaks) < 4:
        return None
    slope = np.polyfit(np.asarray(mids), np.log(np.asarray(peaks)), 1)[0]
    return float(slope)


def measure_response(traj: Trajectory, vehicle: int, t_from: Optional[float] = None,
                     perturb_delta: float = 5e-4,
                     threshold_factor: float = OSCILLATION_THRESHOLD_FACTOR,
                     ) -> SweepPoint:
    """Envelope, period, and oscillation flags of one vehicle's response.

    The measurement window runs from ``t_from`` (default: the settings'
    transient cut) to the horizon; the envelope and amplitude are the
    extremes over that window.  ``oscillatory`` means the amplitude
    exceeds ``threshold_factor * perturb_delta``, the level at which the
    response counts as an established cycle rather than a lingering
    transient; the period is reported only in that regime and only when
    at least ``MIN_CYCLES`` full cycles fit in the window.

    ``sustained`` asks whether the instability expressed itself, in
    either of two ways: the response reached the established-cycle
    amplitude at some point in the window, or the cycle-peak envelope of
    the window's second half still grows at ``SUSTAIN_GROWTH_MIN`` or
    faster (the signature of a slow unstable mode that has not yet had
    time to saturate).  The growth-rate branch is measured on the second
    half alone so that fast-decaying secondary modes from the initial
    perturbation cannot pollute the fit.  A response that only ever
    decays satisfies neither branch.
    """
    if t_from is None:
        t_from = traj.settings.measure_from
    ts = traj.times()
    keep = ts >= t_from - 1e-12
    t_win = ts[keep]
    x = traj.series("v", vehicle)[keep]
    if t_win.size < 8:
        raise ValueError("measurement window is empty; lower transient_cut")
    v_min = float(np.min(x))
    v_max = float(np.max(x))
    env = EnvelopePoint(param_value=math.nan, v_min=v_min, v_max=v_max)
    amplitude = env.amplitude

    period, n_cycles = estimate_period(t_win, x)
    half = t_win.size // 2
    growth = estimate_growth_rate(t_win[half:], x[half:])
    threshold = threshold_factor * perturb_delta
    oscillatory = amplitude > threshold
    sustained = n_cycles >= 3 and (
        oscillatory or (growth is not None and growth >= SUSTAIN_GROWTH_MIN)
    )
    metrics = LimitCycleMetrics(
        amplitude=amplitude,
        period=period if (oscillatory and n_cycles >= MIN_CYCLES) else None,
        n_cycles=n_cycles,
    )
    return SweepPoint(
        param_value=math.nan, envelope=env, metrics=metrics,
        sustained=sustained, oscillatory=oscillatory, raw_period=period,
        growth_rate=growth,
    )


def _apply_parameter(config: PlatoonConfig, spec: SweepSpec, value: float) -> PlatoonConfig:
    vehicles = list(config.vehicles)
    if spec.parameter == "tau":
        vehicles[spec.vehicle] = replace(vehicles[spec.vehicle], tau=value)
    elif spec.parameter == "gamma":
        vehicles[spec.vehicle] = replace(vehicles[spec.vehicle], gamma=value)
    else:  # delay_scale
        if not value > 0:
            raise ValueError("delay_scale values must be positive")
        vehicles = [replace(v, tau=v.tau * value) for v in vehicles]
    return PlatoonConfig(vehicles=tuple(vehicles), exponents=config.exponents,
                         leader=config.leader)


def _curve_config(spec: SweepSpec, gamma: Optional[float]) -> Tuple[PlatoonConfig, float]:
    config = spec.config
    if gamma is not None:
        vehicles = list(config.vehicles)
        vehicles[spec.vehicle] = replace(vehicles[spec.vehicle], gamma=gamma)
        config = PlatoonConfig(vehicles=tuple(vehicles), exponents=config.exponents,
                               leader=config.leader)
    if spec.calibration is not None:
        speed = calibrate_leader_velocity(config, spec.calibration.vehicle,
                                          spec.calibration.tau_cr)
        config = PlatoonConfig(vehicles=config.vehicles, exponents=config.exponents,
                               leader=LeaderProfile.settled(speed))
    return config, config.leader.terminal_velocity


def _point_task(args) -> SweepPoint:
    config, settings, spec_vehicle, observed, delta, value = args
    history = perturbation_history(config.n, spec_vehicle, delta)
    try:
        traj = integrate_neutral(config, settings, history)
    except NumericalFault as exc:
        return SweepPoint(param_value=value, envelope=None, metrics=None,
                          sustained=False, oscillatory=False, raw_period=None,
                          status=f"fault: {exc}")
    point = measure_response(traj, observed, perturb_delta=delta)
    env = EnvelopePoint(param_value=value, v_min=point.envelope.v_min,
                        v_max=point.envelope.v_max)
    return SweepPoint(param_value=value, envelope=env, metrics=point.metrics,
                      sustained=point.sustained, oscillatory=point.oscillatory,
                      raw_period=point.raw_period, growth_rate=point.growth_rate,
                      status="ok")


def bifurcation_diagram(spec: SweepSpec, settings: IntegrationSettings,
                        workers: int = 1) -> SweepResult:
    """Run the sweep: one curve per feedback weight, one point per grid value.

    Each point integrates the full nonlinear platoon from a perturbed
    equilibrium history and measures the observed vehicle's response
    after the transient cut.  Faulted points (for example separation
    collapse) are recorded with an error status and do not stop the
    sweep.  Results are merged by grid index, so the outcome does not
    depend on execution order or the number of workers.
    """
    gammas: Sequence[Optional[float]] = spec.gamma_family if spec.gamma_family else (None,)
    tasks = []
    layout = []
    for g in gammas:
        curve_cfg, speed = _curve_config(spec, g)
        layout.append((g, speed))
        for value in spec.values:
            point_cfg = _apply_parameter(curve_cfg, spec, value)
            tasks.append((point_cfg, settings, spec.vehicle, spec.observed,
                          spec.perturb_delta, value))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_point_task, tasks))
    else:
        points = [_point_task(t) for t in tasks]
    curves = []
    nv = len(spec.values)
    for k, (g, speed) in enumerate(layout):
        chunk = tuple(points[k * nv:(k + 1) * nv])
        curves.append(SweepCurve(gamma=g, leader_speed=speed, points=chunk))
    return SweepResult(spec=spec, settings=settings, curves=tuple(curves))


@dataclass(frozen=True)
class BifurcationClassification:
    """Onset type deduced from the amplitude profile of one curve."""

    kind: str  # "supercritical" | "subcritical" | "inconclusive"
    r_squared: Optional[float]
    onset_index: Optional[int]
    detail: str


def classify_bifurcation(param_values: Sequence[float], amplitudes: Sequence[float],
                         threshold: float) -> BifurcationClassification:
    """Classify the onset from steady-state amplitudes along the grid.

    A supercritical onset grows continuously from zero with amplitude
    proportional to ``sqrt(p - p_cr)``: the squared amplitudes of the
    first few oscillatory points must fit a rising straight line
    (``r_squared in [0.9, 1]``) whose back-extrapolation to the last
    pre-onset grid point stays near zero (at most 30 percent of the
    largest oscillatory amplitude).  A jump to a large sustained
    amplitude (first oscillatory point at half the maximum or more, and
    not collapsing afterwards) is classified subcritical.  Anything else
    is inconclusive.
    """
    p = np.asarray(param_values, dtype=np.float64)
    a = np.asarray(amplitudes, dtype=np.float64)
    if p.shape != a.shape or p.ndim != 1:
        raise ValueError("param_values and amplitudes must be 1-d and equal length")
    osc = np.nonzero(a > threshold)[0]
    if osc.size < 2:
        return BifurcationClassification("inconclusive", None, None,
                                         "fewer than two oscillatory points")
    first = int(osc[0])
    if first == 0:
        return BifurcationClassification("inconclusive", None, first,
                                         "onset not bracketed by the grid")
    a_max = float(np.max(a[osc]))
    near = osc[: min(5, osc.size)]
    x = p[near]
    y = a[near] ** 2
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    extrap_sq = slope * p[first - 1] + intercept
    extrap = math.sqrt(extrap_sq) if extrap_sq > 0 else 0.0
    if slope > 0 and r2 >= 0.9 and extrap <= 0.3 * a_max:
        return BifurcationClassification(
            "supercritical", float(r2), first,
            f"sqrt growth from onset (r2={r2:.4f}, extrapolated pre-onset "
            f"amplitude {extrap:.3g})")
    a_first = float(a[first])
    tail = a[osc[1:]] if osc.size > 1 else np.array([])
    sustained_jump = a_first >= 0.5 * a_max and (tail.size == 0 or float(np.min(tail)) >= 0.5 * a_first)
    if sustained_jump:
        return BifurcationClassification(
            "subcritical", float(r2), first,
            f"amplitude jumps to {a_first:.3g} (max {a_max:.3g}) at onset")
    return BifurcationClassification(
        "inconclusive", float(r2), first,
        "amplitude profile fits neither sqrt growth nor a sustained jump")


@dataclass(frozen=True)
class PeriodEquivalence:
    """Comparison of the auxiliary-coordinate and velocity periods."""

    period_l: Optional[float]
    period_v: Optional[float]
    applicable: bool

    @property
    def ratio(self) -> Optional[float]:
        if not self.applicable:
            return None
        return self.period_l / self.period_v


def period_equivalence_check(traj: Trajectory, vehicle: int,
                             t_from: Optional[float] = None) -> PeriodEquivalence:
    """Measure the periods of ``l_i`` and ``v_i`` on the same window.

    On a periodic orbit the auxiliary coordinate ``l_i = v_i - gamma_i
    v_i(t - tau_i)`` inherits the period of ``v_i`` exactly, so the ratio
    should be 1 up to measurement error.  Not applicable when either
    signal has fewer than three full cycles in the window.
    """
    if t_from is None:
        t_from = traj.settings.measure_from
    ts = traj.times()
    keep = ts >= t_from - 1e-12
    t_win = ts[keep]
    pv, nv = estimate_period(t_win, traj.series("v", vehicle)[keep])
    pl, nl = estimate_period(t_win, traj.series("l", vehicle)[keep])
    applicable = nv >= 3 and nl >= 3 and pv is not None and pl is not None
    return PeriodEquivalence(period_l=pl, period_v=pv, applicable=applicable)
