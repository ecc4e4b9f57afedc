"""Fixed-step method-of-steps integrator for the platoon delay system.

The solver advances the transformed state with the classical fourth-order
Runge-Kutta scheme on a uniform grid and serves every delayed lookup from a
cubic Hermite interpolant over already-computed nodes (value and derivative
stored per node).  Because the step size is capped at one tenth of the
smallest delay, every lookup lands in completed history and the scheme stays
explicit.

The acceleration-feedback system is of neutral type.  It is integrated in
the ``l`` coordinate, ``l_i = v_i - gamma_i v_i(t - tau_i)``, which obeys a
retarded equation; the velocity differences are recovered pointwise from

    v_i(t) = l_i(t) + gamma_i * v_i(t - tau_i)

using the same interpolant, so the recursion never leaves the grid.  With
all ``gamma_i = 0`` the recovery collapses and the neutral path reproduces
the plain retarded integration exactly.

Everything is deterministic: identical inputs produce bit-identical
trajectories.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from numba import njit

from .model import (
    ConfigError,
    LeaderProfile,
    ModelDomainError,
    PlatoonConfig,
)

__all__ = [
    "SettingsError",
    "NumericalFault",
    "SeparationFault",
    "VelocityDomainFault",
    "IntegrationSettings",
    "InitialHistory",
    "equilibrium_history",
    "perturbation_history",
    "harmonic_history",
    "HistoryBuffer",
    "Trajectory",
    "integrate_retarded",
    "integrate_neutral",
    "sample",
    "config_digest",
    "DEFAULT_PERTURBATION",
]

# default size of the velocity kick used when a caller asks for a perturbed
# equilibrium start without giving an explicit amplitude
DEFAULT_PERTURBATION = 0.01

_NODE_SNAP = 1e-9  # grid positions closer than this to a node reuse the stored sample


class SettingsError(ValueError):
    """Raised for inconsistent integration settings."""


class NumericalFault(RuntimeError):
    """A simulation left the model's domain; carries vehicle index and time."""

    def __init__(self, message: str, time: float, vehicle: int):
        self.reason = message
        self.time = time
        self.vehicle = vehicle
        super().__init__(f"{message} (vehicle {vehicle}, t={time:.6g})")


class SeparationFault(NumericalFault):
    """Delayed separation dropped to the safety floor."""


class VelocityDomainFault(NumericalFault):
    """Delayed follower velocity became nonpositive under a power-law exponent."""


@dataclass(frozen=True)
class IntegrationSettings:
    """Fixed-step integration parameters.

    Parameters
    ----------
    h : float
        Step size.  Must not exceed one tenth of the smallest delay.
    horizon : float
        End time of the integration (start is 0).
    transient_cut : float, optional
        Start of the measurement window used by sweeps; defaults to
        ``horizon / 2``.
    separation_floor : float
        Delayed separations at or below this value abort the run with a
        :class:`SeparationFault` instead of evaluating a near-singular
        power law.
    """

    h: float
    horizon: float
    transient_cut: Optional[float] = None
    separation_floor: float = 1e-6

    def __post_init__(self) -> None:
        if not (self.h > 0 and math.isfinite(self.h)):
            raise SettingsError(f"step size must be positive, got {self.h}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise SettingsError(f"horizon must be positive, got {self.horizon}")
        if self.transient_cut is not None and not (0 <= self.transient_cut < self.horizon):
            raise SettingsError("transient_cut must lie in [0, horizon)")
        if self.separation_floor < 0:
            raise SettingsError("separation_floor must be >= 0")

    @property
    def measure_from(self) -> float:
        return self.horizon / 2.0 if self.transient_cut is None else self.transient_cut


ArrayFn = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class InitialHistory:
    """Initial platoon history on ``[-max(tau), 0]`` as callables.

    ``v`` and ``y`` return length-n arrays for a scalar time.  Derivative
    callables are optional; when omitted they are approximated by a central
    difference (adequate for histories without analytic derivatives, exact
    ones should be supplied when available).
    """

    v: ArrayFn
    y: ArrayFn
    dv: Optional[ArrayFn] = None
    dy: Optional[ArrayFn] = None

    def dv_at(self, t: float) -> np.ndarray:
        if self.dv is not None:
            return np.asarray(self.dv(t), dtype=np.float64)
        e = 1e-6
        return (np.asarray(self.v(t + e)) - np.asarray(self.v(t - e))) / (2 * e)

    def dy_at(self, t: float) -> np.ndarray:
        if self.dy is not None:
            return np.asarray(self.dy(t), dtype=np.float64)
        e = 1e-6
        return (np.asarray(self.y(t + e)) - np.asarray(self.y(t - e))) / (2 * e)


def equilibrium_history(n: int) -> InitialHistory:
    """Uniform-flow history: all deviations identically zero."""
    z = np.zeros(n, dtype=np.float64)
    return InitialHistory(
        v=lambda t: z.copy(), y=lambda t: z.copy(),
        dv=lambda t: z.copy(), dy=lambda t: z.copy(),
    )


def perturbation_history(n: int, vehicle: int, delta: float = DEFAULT_PERTURBATION) -> InitialHistory:
    """Equilibrium plus a constant velocity offset ``delta`` on one vehicle."""
    if not 0 <= vehicle < n:
        raise ValueError(f"vehicle index {vehicle} out of range for n={n}")
    z = np.zeros(n, dtype=np.float64)
    vv = z.copy()
    vv[vehicle] = delta
    return InitialHistory(
        v=lambda t: vv.copy(), y=lambda t: z.copy(),
        dv=lambda t: z.copy(), dy=lambda t: z.copy(),
    )


def harmonic_history(n: int, vehicle: int, amplitude: float, omega: float) -> InitialHistory:
    """Cosine velocity history on one vehicle with its consistent headway.

    ``v_i(t) = A cos(omega t)`` and ``y_i(t) = (A / omega) sin(omega t)``,
    zeros elsewhere; analytic derivatives are attached.  Used as the test
    hook for integrator accuracy checks against known solutions.
    """
    if not 0 <= vehicle < n:
        raise ValueError(f"vehicle index {vehicle} out of range for n={n}")

    def _vec(fill: float, t_unused: float) -> np.ndarray:
        out = np.zeros(n, dtype=np.float64)
        out[vehicle] = fill
        return out

    return InitialHistory(
        v=lambda t: _vec(amplitude * math.cos(omega * t), t),
        y=lambda t: _vec(amplitude / omega * math.sin(omega * t), t),
        dv=lambda t: _vec(-amplitude * omega * math.sin(omega * t), t),
        dy=lambda t: _vec(amplitude * math.cos(omega * t), t),
    )


@dataclass
class HistoryBuffer:
    """Uniform-grid storage of the computed trajectory.

    Node ``j`` holds time ``(j - n_pre) * h``; rows ``0..n_pre`` are the
    sampled initial history, later rows are integration output.  ``dvh``
    and ``dyh`` store the history-side derivatives for the prehistory
    nodes (the junction node ``n_pre`` carries both a history-side and a
    model-side derivative; interpolation uses whichever side the queried
    interval lies on).
    """

    h: float
    n_pre: int
    n_steps: int
    v: np.ndarray
    y: np.ndarray
    l: np.ndarray
    dv: np.ndarray
    dy: np.ndarray
    dl: np.ndarray
    dvh: np.ndarray
    dyh: np.ndarray

    @property
    def n(self) -> int:
        return self.v.shape[1]

    @property
    def t_min(self) -> float:
        return -self.n_pre * self.h

    @property
    def t_max(self) -> float:
        return self.n_steps * self.h

    def times(self) -> np.ndarray:
        return (np.arange(self.v.shape[0]) - self.n_pre) * self.h

    def model_times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.h


_KINDS = ("v", "y", "l", "dv", "dy", "dl")


def _buffer_lookup(buf: HistoryBuffer, t: float, kind: str, vehicle: int) -> float:
    """Cubic Hermite evaluation of one stored quantity at an arbitrary time."""
    if kind not in _KINDS:
        raise ValueError(f"unknown quantity {kind!r}, expected one of {_KINDS}")
    if not 0 <= vehicle < buf.n:
        raise ValueError(f"vehicle index {vehicle} out of range")
    lo, hi = buf.t_min, buf.t_max
    if t < lo - 1e-12 or t > hi + 1e-12:
        raise ValueError(f"time {t} outside stored range [{lo}, {hi}]")
    if kind in ("l", "dl") and t < -1e-12:
        raise ValueError("l is only defined for t >= 0")
    p = t / buf.h + buf.n_pre
    p = min(max(p, 0.0), buf.v.shape[0] - 1.0)
    base = kind[-1]  # 'v', 'y' or 'l'
    want_deriv = kind.startswith("d")
    U = {"v": buf.v, "y": buf.y, "l": buf.l}[base]
    dU = {"v": buf.dv, "y": buf.dy, "l": buf.dl}[base]
    dUh = {"v": buf.dvh, "y": buf.dyh, "l": None}[base]

    r = round(p)
    if abs(p - r) < _NODE_SNAP:
        k = int(r)
        if not want_deriv:
            return float(U[k, vehicle])
        if dUh is not None and k < buf.n_pre:
            return float(dUh[k, vehicle])
        return float(dU[k, vehicle])
    k = int(math.floor(p))
    th = p - k
    u0 = U[k, vehicle]
    u1 = U[k + 1, vehicle]
    if dUh is not None and k + 1 <= buf.n_pre:
        f0 = dUh[k, vehicle]
        f1 = dUh[k + 1, vehicle]
    else:
        f0 = dU[k, vehicle]
        f1 = dU[k + 1, vehicle]
    h = buf.h
    if not want_deriv:
        h00 = (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th)
        h10 = th * (1.0 - th) * (1.0 - th)
        h01 = th * th * (3.0 - 2.0 * th)
        h11 = th * th * (th - 1.0)
        return float(h00 * u0 + h10 * h * f0 + h01 * u1 + h11 * h * f1)
    g00 = 6.0 * th * th - 6.0 * th
    g10 = 3.0 * th * th - 4.0 * th + 1.0
    g01 = -6.0 * th * th + 6.0 * th
    g11 = 3.0 * th * th - 2.0 * th
    return float((g00 * u0 + g01 * u1) / h + g10 * f0 + g11 * f1)


@dataclass
class Trajectory:
    """Integration result: grid storage plus provenance metadata."""

    buffer: HistoryBuffer
    config: PlatoonConfig
    settings: IntegrationSettings
    neutral: bool
    config_hash: str

    @property
    def h(self) -> float:
        return self.buffer.h

    @property
    def horizon(self) -> float:
        return self.buffer.t_max

    def times(self) -> np.ndarray:
        return self.buffer.model_times()

    def series(self, kind: str, vehicle: int) -> np.ndarray:
        """Stored node values for ``t >= 0`` (no interpolation)."""
        if kind not in _KINDS:
            raise ValueError(f"unknown quantity {kind!r}")
        base = kind[-1]
        arrs = {
            "v": (self.buffer.v, self.buffer.dv),
            "y": (self.buffer.y, self.buffer.dy),
            "l": (self.buffer.l, self.buffer.dl),
        }[base]
        arr = arrs[1] if kind.startswith("d") else arrs[0]
        return arr[self.buffer.n_pre:, vehicle].copy()

    def sample(self, t: Union[float, np.ndarray], kind: str = "v", vehicle: int = 0):
        """Hermite-interpolated value(s) of one stored quantity.

        ``t`` may be a scalar or an array within
        ``[-n_pre * h, horizon]``; values at grid times reproduce the
        stored samples exactly.
        """
        if np.ndim(t) == 0:
            return _buffer_lookup(self.buffer, float(t), kind, vehicle)
        return np.array([_buffer_lookup(self.buffer, float(ti), kind, vehicle) for ti in np.ravel(t)])


def sample(trajectory: Trajectory, t, kind: str = "v", vehicle: int = 0):
    """Module-level alias of :meth:`Trajectory.sample`."""
    return trajectory.sample(t, kind, vehicle)


def config_digest(config: PlatoonConfig, settings: Optional[IntegrationSettings] = None) -> str:
    """Stable SHA-256 over the numerical content of a configuration."""
    doc = {
        "m": config.exponents.m,
        "l": config.exponents.l,
        "vehicles": [
            [v.alpha, v.tau, v.gamma, v.b] for v in config.vehicles
        ],
        "leader": {
            "v0": config.leader.initial_velocity,
            "v1": config.leader.terminal_velocity,
            "settle": config.leader.settle_time,
            "segments": [[s.t0, s.t1, s.a0, s.a1] for s in config.leader.segments],
        },
    }
    if settings is not None:
        doc["settings"] = [settings.h, settings.horizon, settings.measure_from,
                           settings.separation_floor]
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# compiled stepping core
# ---------------------------------------------------------------------------

@njit(cache=True)
def _kernel(neutral, n, h, n_pre, n_steps,
            m, l_exp, alpha, gamma, tau, b,
            seg_t0, seg_t1, seg_a0, seg_a1, seg_v0, seg_v1,
            v_init, v_term, settle,
            V, Y, L, dV, dY, dL, dVh, dYh,
            sep_floor):
    ns = seg_t0.shape[0]

    def lead_accel(t):
        if t < 0.0 or t >= settle:
            return 0.0
        for k in range(ns):
            if seg_t0[k] <= t < seg_t1[k]:
                w = (t - seg_t0[k]) / (seg_t1[k] - seg_t0[k])
                return seg_a0[k] + (seg_a1[k] - seg_a0[k]) * w
        return 0.0

    def lead_vel(t):
        if t <= 0.0:
            return v_init
        if t >= settle:
            return v_term
        vv = v_init
        for k in range(ns):
            if t < seg_t0[k]:
                return vv
            if t < seg_t1[k]:
                w = (t - seg_t0[k]) / (seg_t1[k] - seg_t0[k])
                a_t = seg_a0[k] + (seg_a1[k] - seg_a0[k]) * w
                return seg_v0[k] + 0.5 * (seg_a0[k] + a_t) * (t - seg_t0[k])
            vv = seg_v1[k]
        return vv

    def hval(U, dU, dUh, col, p):
        # value of the Hermite interpolant at grid position p (node units)
        r = round(p)
        if abs(p - r) < 1e-9:
            return U[int(r), col]
        k = int(math.floor(p))
        th = p - k
        u0 = U[k, col]
        u1 = U[k + 1, col]
        if k + 1 <= n_pre:
            f0 = dUh[k, col]
            f1 = dUh[k + 1, col]
        else:
            f0 = dU[k, col]
            f1 = dU[k + 1, col]
        h00 = (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th)
        h10 = th * (1.0 - th) * (1.0 - th)
        h01 = th * th * (3.0 - 2.0 * th)
        h11 = th * th * (th - 1.0)
        return h00 * u0 + h10 * h * f0 + h01 * u1 + h11 * h * f1

    def hder(U, dU, dUh, col, p):
        # time derivative of the Hermite interpolant at grid position p
        r = round(p)
        if abs(p - r) < 1e-9:
            k = int(r)
            if k < n_pre:
                return dUh[k, col]
            return dU[k, col]
        k = int(math.floor(p))
        th = p - k
        u0 = U[k, col]
        u1 = U[k + 1, col]
        if k + 1 <= n_pre:
            f0 = dUh[k, col]
            f1 = dUh[k + 1, col]
        else:
            f0 = dU[k, col]
            f1 = dU[k + 1, col]
        g00 = 6.0 * th * th - 6.0 * th
        g10 = 3.0 * th * th - 4.0 * th + 1.0
        g01 = -6.0 * th * th + 6.0 * th
        g11 = 3.0 * th * th - 2.0 * th
        return (g00 * u0 + g01 * u1) / h + g10 * f0 + g11 * f1

    own = np.empty(n, dtype=np.float64)

    def rhs(t, ls, ys, dl, dy):
        # fills dl, dy; returns (code, fault_t, fault_i)
        for i in range(n):
            if neutral:
                p = (t - tau[i]) / h + n_pre
                vrec = ls[i] + gamma[i] * hval(V, dV, dVh, i, p)
            else:
                vrec = ls[i]
            dy[i] = vrec
        for i in range(n):
            tq = t - tau[i]
            p = tq / h + n_pre
            lv = lead_vel(tq)
            if m == 0.0:
                num = 1.0
            else:
                s = lv
                for k in range(i + 1):
                    s -= hval(V, dV, dVh, k, p)
                if s <= 0.0:
                    return 2, tq, i
                num = s ** m
            yq = hval(Y, dY, dYh, i, p)
            sep = yq + b[i]
            if sep <= sep_floor:
                return 1, tq, i
            den = sep ** l_exp if l_exp != 0.0 else 1.0
            beta = alpha[i] * num / den
            own[i] = beta * hval(V, dV, dVh, i, p)
        for i in range(n):
            if i == 0:
                if neutral:
                    inflow = lead_accel(t) - gamma[0] * lead_accel(t - tau[0])
                else:
                    inflow = lead_accel(t)
            else:
                inflow = own[i - 1]
            dl[i] = inflow - own[i]
        return 0, 0.0, -1

    l2 = np.empty(n, dtype=np.float64)
    y2 = np.empty(n, dtype=np.float64)
    k2l = np.empty(n, dtype=np.float64)
    k2y = np.empty(n, dtype=np.float64)
    k3l = np.empty(n, dtype=np.float64)
    k3y = np.empty(n, dtype=np.float64)
    k4l = np.empty(n, dtype=np.float64)
    k4y = np.empty(n, dtype=np.float64)

    for step in range(n_steps + 1):
        j = n_pre + step
        t = step * h
        # node derivative (doubles as RK stage 1)
        code, ft, fi = rhs(t, L[j], Y[j], dL[j], dY[j])
        if code != 0:
            return code, ft, fi
        for i in range(n):
            if neutral:
                p = (t - tau[i]) / h + n_pre
                dV[j, i] = dL[j, i] + gamma[i] * hder(V, dV, dVh, i, p)
            else:
                dV[j, i] = dL[j, i]
        if step == n_steps:
            break
        th2 = t + 0.5 * h
        for i in range(n):
            l2[i] = L[j, i] + 0.5 * h * dL[j, i]
            y2[i] = Y[j, i] + 0.5 * h * dY[j, i]
        code, ft, fi = rhs(th2, l2, y2, k2l, k2y)
        if code != 0:
            return code, ft, fi
        for i in range(n):
            l2[i] = L[j, i] + 0.5 * h * k2l[i]
            y2[i] = Y[j, i] + 0.5 * h * k2y[i]
        code, ft, fi = rhs(th2, l2, y2, k3l, k3y)
        if code != 0:
            return code, ft, fi
        t4 = t + h
        for i in range(n):
            l2[i] = L[j, i] + h * k3l[i]
            y2[i] = Y[j, i] + h * k3y[i]
        code, ft, fi = rhs(t4, l2, y2, k4l, k4y)
        if code != 0:
            return code, ft, fi
        for i in range(n):
            L[j + 1, i] = L[j, i] + h / 6.0 * (dL[j, i] + 2.0 * k2l[i] + 2.0 * k3l[i] + k4l[i])
            Y[j + 1, i] = Y[j, i] + h / 6.0 * (dY[j, i] + 2.0 * k2y[i] + 2.0 * k3y[i] + k4y[i])
        for i in range(n):
            if neutral:
                p = (t4 - tau[i]) / h + n_pre
                V[j + 1, i] = L[j + 1, i] + gamma[i] * hval(V, dV, dVh, i, p)
            else:
                V[j + 1, i] = L[j + 1, i]
    return 0, 0.0, -1


def _integrate(config: PlatoonConfig, settings: IntegrationSettings,
               history: Optional[InitialHistory], neutral: bool) -> Trajectory:
    alpha, tau, gamma, b = config.arrays()
    n = config.n
    h = settings.h
    tmin = float(np.min(tau))
    if h * 10.0 > tmin * (1.0 + 1e-12):
        raise SettingsError(
            f"step h={h} exceeds one tenth of the smallest delay {tmin}")
    if not neutral and not config.is_feedback_free():
        raise ConfigError("retarded integration requires gamma == 0 for every vehicle")

    if history is None:
        history = equilibrium_history(n)

    tmax = float(np.max(tau))
    n_pre = int(math.ceil(tmax / h - 1e-9)) + 1
    n_steps = int(math.ceil(settings.horizon / h - 1e-9))
    nt = n_pre + n_steps + 1

    V = np.zeros((nt, n), dtype=np.float64)
    Y = np.zeros((nt, n), dtype=np.float64)
    L = np.zeros((nt, n), dtype=np.float64)
    dV = np.zeros((nt, n), dtype=np.float64)
    dY = np.zeros((nt, n), dtype=np.float64)
    dL = np.zeros((nt, n), dtype=np.float64)
    dVh = np.zeros((n_pre + 1, n), dtype=np.float64)
    dYh = np.zeros((n_pre + 1, n), dtype=np.float64)

    for j in range(n_pre + 1):
        t = (j - n_pre) * h
        V[j] = np.asarray(history.v(t), dtype=np.float64)
        Y[j] = np.asarray(history.y(t), dtype=np.float64)
        dVh[j] = history.dv_at(t)
        dYh[j] = history.dy_at(t)

    buf = HistoryBuffer(h=h, n_pre=n_pre, n_steps=n_steps,
                        v=V, y=Y, l=L, dv=dV, dy=dY, dl=dL, dvh=dVh, dyh=dYh)

    # initial l from the same interpolant the stepping core uses, so the
    # recovery identity holds to round-off from the very first node
    for i in range(n):
        L[n_pre, i] = V[n_pre, i] - gamma[i] * _buffer_lookup(buf, -tau[i], "v", i)

    lead = config.leader
    ns = len(lead.segments)
    seg_t0 = np.array([s.t0 for s in lead.segments], dtype=np.float64) if ns else np.zeros(0)
    seg_t1 = np.array([s.t1 for s in lead.segments], dtype=np.float64) if ns else np.zeros(0)
    seg_a0 = np.array([s.a0 for s in lead.segments], dtype=np.float64) if ns else np.zeros(0)
    seg_a1 = np.array([s.a1 for s in lead.segments], dtype=np.float64) if ns else np.zeros(0)
    seg_v0 = np.zeros(ns, dtype=np.float64)
    seg_v1 = np.zeros(ns, dtype=np.float64)
    vv = lead.initial_velocity
    for k, s in enumerate(lead.segments):
        seg_v0[k] = vv
        vv = vv + s.area
        seg_v1[k] = vv

    code, ft, fi = _kernel(
        neutral, n, h, n_pre, n_steps,
        config.exponents.m, config.exponents.l, alpha, gamma, tau, b,
        seg_t0, seg_t1, seg_a0, seg_a1, seg_v0, seg_v1,
        lead.initial_velocity, lead.terminal_velocity, lead.settle_time,
        V, Y, L, dV, dY, dL, dVh, dYh,
        settings.separation_floor,
    )
    if code == 1:
        raise SeparationFault("delayed separation at or below the safety floor",
                              time=ft, vehicle=int(fi))
    if code == 2:
        raise VelocityDomainFault("nonpositive delayed follower velocity in power law",
                                  time=ft, vehicle=int(fi))

    return Trajectory(buffer=buf, config=config, settings=settings, neutral=neutral,
                      config_hash=config_digest(config, settings))


def integrate_retarded(config: PlatoonConfig, settings: IntegrationSettings,
                       history: Optional[InitialHistory] = None) -> Trajectory:
    """Integrate the feedback-free platoon (requires every ``gamma_i = 0``).

    The state is ``(v, y)`` directly; no recovery step is involved.
    Defaults to the uniform-flow history when none is given.
    """
    return _integrate(config, settings, history, neutral=False)


def integrate_neutral(config: PlatoonConfig, settings: IntegrationSettings,
                      history: Optional[InitialHistory] = None) -> Trajectory:
    """Integrate the acceleration-feedback platoon via the l-coordinate.

    Steps ``(l, y)`` with the same scheme as :func:`integrate_retarded`
    and recovers ``v`` pointwise from the delayed recursion.  With all
    ``gamma_i = 0`` the result matches the retarded integrator bit for
    bit.
    """
    return _integrate(config, settings, history, neutral=True)
