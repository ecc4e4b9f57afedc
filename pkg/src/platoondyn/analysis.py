"""Closed-form stability analysis of the linearised platoon.

Each follower's linearisation about uniform flow is the scalar delay
equation (in the auxiliary coordinate ``l``)::

    vdot_i(t) - gamma_i vdot_i(t - tau_i) = ... - beta_star_i v_i(t - tau_i)

whose characteristic function is::

    F(lam) = lam - gamma * lam * exp(-lam tau) + beta_star * exp(-lam tau)

The module provides the exact crossing point of the rightmost root pair
(frequency and critical delay), the sign of the crossing speed, a Newton
continuation tracker for the root branch (used to cross-check the closed
forms numerically), oscillation and string-stability tests, and a robust
delay bound under interval uncertainty in ``beta_star``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import PlatoonConfig, equilibrium_coefficients

__all__ = [
    "ContinuationError",
    "HopfPoint",
    "CharacteristicRoot",
    "CrossingResult",
    "VehicleStability",
    "LocalStabilityReport",
    "NonOscillationVerdict",
    "PairGain",
    "StringStabilityReport",
    "UncertainBeta",
    "FrequencyComparison",
    "hopf_point",
    "transversality_slope",
    "characteristic_value",
    "characteristic_derivative",
    "polish_root",
    "track_root",
    "find_crossing",
    "stability_chart",
    "is_locally_stable",
    "non_oscillation_check",
    "string_gain_squared",
    "string_gain_sup",
    "string_stability_report",
    "robust_stability_bound",
    "frequency_comparison",
]

#: residual bound every reported characteristic root must satisfy
RESIDUAL_BOUND = 1e-10


class ContinuationError(RuntimeError):
    """Root tracking failed to converge; carries the last good delay."""

    def __init__(self, message: str, last_good_tau: Optional[float] = None):
        self.last_good_tau = last_good_tau
        if last_good_tau is not None:
            message += f" (last converged at tau={last_good_tau:.9g})"
        super().__init__(message)


def _check_pair(beta_star: float, gamma: float) -> None:
    if not (beta_star > 0 and math.isfinite(beta_star)):
        raise ValueError(f"beta_star must be positive, got {beta_star}")
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")


@dataclass(frozen=True)
class HopfPoint:
    """Imaginary-axis crossing of the rightmost characteristic root pair."""

    beta_star: float
    gamma: float
    omega0: float
    tau_cr: float

    @property
    def f0(self) -> float:
        """Crossing frequency in Hz."""
        return self.omega0 / (2.0 * math.pi)


def hopf_point(beta_star: float, gamma: float) -> HopfPoint:
    """Exact crossing frequency and critical delay of one follower.

    Parameters
    ----------
    beta_star : float
        Linearised coupling gain (> 0).
    gamma : float
        Acceleration-feedback weight in [0, 1).

    Returns
    -------
    HopfPoint
        ``omega0 = beta_star / sqrt(1 - gamma**2)`` and the smallest
        positive delay at which the root pair reaches the imaginary axis.

    Notes
    -----
    The crossing satisfies ``cos(omega0 tau) = gamma`` and
    ``sin(omega0 tau) = beta_star / omega0``, so ``omega0 tau_cr =
    atan2(sqrt(1 - gamma**2), gamma)`` lies in ``(0, pi/2]``.  For
    ``gamma = 0`` this reduces to ``tau_cr = pi / (2 beta_star)`` exactly;
    for ``gamma > 0`` it equals
    ``sqrt(1 - gamma**2) / beta_star * atan(sqrt(1 - gamma**2) / gamma)``
    with the arctangent branch in ``(0, pi/2)``.  Larger feedback weights
    therefore shrink the stable delay range.
    """
    _check_pair(beta_star, gamma)
    root = math.sqrt(1.0 - gamma * gamma)
    omega0 = beta_star / root
    tau_cr = math.atan2(root, gamma) / omega0
    return HopfPoint(beta_star=beta_star, gamma=gamma, omega0=omega0, tau_cr=tau_cr)


def transversality_slope(beta_star: float, gamma: float) -> float:
    """Speed of the root pair crossing the imaginary axis, d Re(lam) / d tau.

    Evaluated at the critical delay.  The closed form is::

        omega0**2 (1 - gamma**2) / theta,
        theta = (1 - gamma cos(omega0 tau))**2 + (omega0 tau + gamma sin(omega0 tau))**2

    which is strictly positive, so the crossing is always from stable to
    unstable and there are no stability switches for larger delays.
    """
    hp = hopf_point(beta_star, gamma)
    w, t = hp.omega0, hp.tau_cr
    theta = (1.0 - gamma * math.cos(w * t)) ** 2 + (w * t + gamma * math.sin(w * t)) ** 2
    return w * w * (1.0 - gamma * gamma) / theta


def characteristic_value(lam: complex, tau: float, beta_star: float, gamma: float) -> complex:
    """F(lam) = lam - gamma lam e^(-lam tau) + beta_star e^(-lam tau)."""
    e = cmath.exp(-lam * tau)
    return lam - gamma * lam * e + beta_star * e


def characteristic_derivative(lam: complex, tau: float, beta_star: float, gamma: float) -> complex:
    """dF/dlam at fixed tau."""
    e = cmath.exp(-lam * tau)
    return 1.0 + e * (-gamma + gamma * lam * tau - beta_star * tau)


@dataclass(frozen=True)
class CharacteristicRoot:
    """A converged root of the characteristic function at one delay."""

    lam: complex
    tau: float
    residual: float


def polish_root(beta_star: float, gamma: float, tau: float, guess: complex,
                tol: float = 1e-13, max_iter: int = 60) -> CharacteristicRoot:
    """Newton-polish a characteristic root from an initial guess.

    Convergence is certified by the residual ``|F(lam)|``; the guess only
    selects which root the iteration lands on.  Raises
    :class:`ContinuationError` when Newton does not converge.
    """
    _check_pair(beta_star, gamma)
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    lam = complex(guess)
    scale = max(1.0, abs(lam)) * max(1.0, beta_star)
    for _ in range(max_iter):
        f = characteristic_value(lam, tau, beta_star, gamma)
        if abs(f) <= tol * scale:
            return CharacteristicRoot(lam=lam, tau=tau, residual=abs(f))
        df = characteristic_derivative(lam, tau, beta_star, gamma)
        if df == 0:
            break
        step = f / df
        if not (math.isfinite(step.real) and math.isfinite(step.imag)):
            break
        lam = lam - step
        scale = max(1.0, abs(lam)) * max(1.0, beta_star)
    f = characteristic_value(lam, tau, beta_star, gamma)
    if abs(f) <= RESIDUAL_BOUND * scale:
        return CharacteristicRoot(lam=lam, tau=tau, residual=abs(f))
    raise ContinuationError(f"Newton failed at tau={tau:.9g} (residual {abs(f):.3e})")


def track_root(beta_star: float, gamma: float, tau_range: Tuple[float, float],
               seed: CharacteristicRoot, step: Optional[float] = None) -> List[CharacteristicRoot]:
    """Continuation of one characteristic-root branch over a delay range.

    Starting from a converged ``seed`` inside ``tau_range``, the branch is
    continued outward to both endpoints; the delay step halves (up to ten
    times) whenever Newton fails to follow the branch.  Every returned
    root satisfies the residual bound ``1e-10``.

    Parameters
    ----------
    beta_star, gamma : float
        Characteristic-function parameters.
    tau_range : (float, float)
        Closed delay interval to cover.  Must be positive and should stay
        within a few critical delays of the crossing; the branch ordering
        is only guaranteed there.
    seed : CharacteristicRoot
        Converged starting root with ``tau_range[0] <= seed.tau <=
        tau_range[1]``.
    step : float, optional
        Initial delay step; defaults to ``1e-3`` times the critical delay.

    Returns
    -------
    list of CharacteristicRoot
        Roots sorted by increasing delay, endpoints included.
    """
    _check_pair(beta_star, gamma)
    lo, hi = tau_range
    hp = hopf_point(beta_star, gamma)
    if not (0.0 < lo < hi):
        raise ValueError(f"tau_range must satisfy 0 < lo < hi, got {tau_range}")
    if hi >= 4.0 * hp.tau_cr:
        raise ValueError(
            f"tau_range upper end {hi} outside (0, 4 tau_cr = {4 * hp.tau_cr:.6g})")
    if not (lo <= seed.tau <= hi):
        raise ValueError("seed.tau must lie inside tau_range")
    if step is None:
        step = 1e-3 * hp.tau_cr

    def _march(t_from: float, lam_from: complex, t_to: float) -> List[CharacteristicRoot]:
        out: List[CharacteristicRoot] = []
        direction = 1.0 if t_to >= t_from else -1.0
        t_cur, lam_cur = t_from, lam_from
        dt = step
        while direction * (t_to - t_cur) > 1e-15:
            t_next = t_cur + direction * min(dt, direction * (t_to - t_cur))
            try:
                root = polish_root(beta_star, gamma, t_next, lam_cur)
            except ContinuationError:
                if dt < step / 1024.0:
                    raise ContinuationError("continuation stalled", last_good_tau=t_cur)
                dt *= 0.5
                continue
            out.append(root)
            t_cur, lam_cur = root.tau, root.lam
            dt = min(step, dt * 2.0)
        return out

    seed = polish_root(beta_star, gamma, seed.tau, seed.lam)
    down = _march(seed.tau, seed.lam, lo)
    up = _march(seed.tau, seed.lam, hi)
    roots = list(reversed(down)) + [seed] + up
    roots.sort(key=lambda r: r.tau)
    return roots


@dataclass(frozen=True)
class CrossingResult:
    """Numerically located imaginary-axis crossing of the tracked branch."""

    omega: float
    tau: float
    root: CharacteristicRoot


def find_crossing(beta_star: float, gamma: float, rel_tol: float = 1e-12) -> CrossingResult:
    """Locate the imaginary-axis crossing by tracking and bisection.

    The closed-form crossing estimate is used only to place the search
    window and the first Newton guess; the returned location comes from a
    sign change of ``Re(lam)`` along residual-certified roots, refined by
    bisection in the delay.  A wrong closed form would therefore be
    exposed rather than reproduced.
    """
    _check_pair(beta_star, gamma)
    hp = hopf_point(beta_star, gamma)
    t0 = 0.8 * hp.tau_cr
    root = polish_root(beta_star, gamma, t0, 1j * hp.omega0)
    if root.lam.imag < 0:
        root = CharacteristicRoot(root.lam.conjugate(), root.tau, root.residual)
    lo = root
    hi = None
    t_cur, lam_cur = root.tau, root.lam
    dt = 0.05 * hp.tau_cr
    for _ in range(40):
        t_next = t_cur + dt
        nxt = polish_root(beta_star, gamma, t_next, lam_cur)
        if nxt.lam.real > 0.0:
            hi = nxt
            break
        lo = nxt
        t_cur, lam_cur = nxt.tau, nxt.lam
    if hi is None:
        raise ContinuationError("no sign change of Re(lam) found in search window",
                                last_good_tau=t_cur)
    for _ in range(200):
        if (hi.tau - lo.tau) <= rel_tol * hp.tau_cr:
            break
        tm = 0.5 * (lo.tau + hi.tau)
        mid = polish_root(beta_star, gamma, tm, 0.5 * (lo.lam + hi.lam))
        if mid.lam.real > 0.0:
            hi = mid
        else:
            lo = mid
    # final secant touch-up between the bracket ends
    denom = hi.lam.real - lo.lam.real
    if denom != 0.0:
        t_star = lo.tau - lo.lam.real * (hi.tau - lo.tau) / denom
    else:
        t_star = 0.5 * (lo.tau + hi.tau)
    final = polish_root(beta_star, gamma, t_star, 0.5 * (lo.lam + hi.lam))
    return CrossingResult(omega=abs(final.lam.imag), tau=final.tau, root=final)


def stability_chart(gamma_values: Sequence[float], beta_star: float = 1.0) -> np.ndarray:
    """Critical-delay chart rows ``(gamma, tau_cr, beta_star * tau_cr)``.

    The product ``beta_star * tau_cr`` is scale-free and strictly
    decreasing in ``gamma``, approaching ``pi/2`` as ``gamma -> 0`` and
    ``0`` as ``gamma -> 1``.
    """
    rows = np.empty((len(gamma_values), 3), dtype=np.float64)
    for k, g in enumerate(gamma_values):
        hp = hopf_point(beta_star, float(g))
        rows[k, 0] = g
        rows[k, 1] = hp.tau_cr
        rows[k, 2] = beta_star * hp.tau_cr
    return rows


@dataclass(frozen=True)
class VehicleStability:
    """Local verdict for one follower."""

    vehicle: int
    beta_star: float
    gamma: float
    tau: float
    omega0: float
    tau_cr: float
    margin: float
    stable: bool
    on_boundary: bool


@dataclass(frozen=True)
class LocalStabilityReport:
    vehicles: Tuple[VehicleStability, ...]

    @property
    def all_stable(self) -> bool:
        return all(v.stable for v in self.vehicles)


def is_locally_stable(config: PlatoonConfig) -> LocalStabilityReport:
    """Per-vehicle local stability of uniform flow.

    A follower is locally stable iff its delay is strictly below its
    critical delay; a delay exactly at the critical value sits on the
    bifurcation boundary and is reported as not stable.
    """
    betas = equilibrium_coefficients(config).beta_star
    out = []
    for i, veh in enumerate(config.vehicles):
        hp = hopf_point(float(betas[i]), veh.gamma)
        margin = hp.tau_cr - veh.tau
        boundary = abs(margin) <= 1e-12 * max(1.0, hp.tau_cr)
        stable = (veh.tau < hp.tau_cr) and not boundary
        out.append(VehicleStability(
            vehicle=i, beta_star=float(betas[i]), gamma=veh.gamma, tau=veh.tau,
            omega0=hp.omega0, tau_cr=hp.tau_cr, margin=margin,
            stable=stable, on_boundary=boundary,
        ))
    return LocalStabilityReport(vehicles=tuple(out))


NONOSC_THRESHOLD = 1.0 / math.e


@dataclass(frozen=True)
class NonOscillationVerdict:
    """Whether every solution of the linearised follower oscillates."""

    oscillatory: bool
    reason: str
    product: float
    threshold: float = NONOSC_THRESHOLD

    @property
    def non_oscillatory(self) -> bool:
        return not self.oscillatory


def non_oscillation_check(beta_star: float, tau: float, gamma: float) -> NonOscillationVerdict:
    """Oscillation dichotomy of the linearised follower equation.

    Without feedback (``gamma = 0``) solutions are non-oscillatory exactly
    when ``beta_star * tau <= 1/e`` (the characteristic equation then has a
    real root).  Any positive feedback weight removes every real root, so
    for ``gamma`` in (0, 1) all solutions oscillate regardless of the
    delay.
    """
    _check_pair(beta_star, gamma)
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    product = beta_star * tau
    if gamma == 0.0:
        if product <= NONOSC_THRESHOLD:
            return NonOscillationVerdict(
                oscillatory=False, product=product,
                reason=f"beta_star*tau = {product:.6g} <= 1/e: a real characteristic root exists",
            )
        return NonOscillationVerdict(
            oscillatory=True, product=product,
            reason=f"beta_star*tau = {product:.6g} > 1/e: no real characteristic root",
        )
    return NonOscillationVerdict(
        oscillatory=True, product=product,
        reason="delayed acceleration feedback with gamma in (0, 1) leaves no real root; "
               "every solution oscillates",
    )


def string_gain_squared(beta_prev: float, beta_star: float, gamma: float, tau: float, omega):
    """Squared magnitude of the velocity-difference transfer function.

    ``|H(j omega)|**2 = beta_prev**2 / D`` with::

        D = omega**2 (1 + gamma**2 + 2 gamma cos(omega tau))
            - 2 beta_star omega sin(omega tau) + beta_star**2

    ``beta_prev`` is the upstream vehicle's gain (its value at ``omega =
    0`` is ``(beta_prev / beta_star)**2``).  Accepts scalar or array
    ``omega``; a nonpositive denominator (resonance) maps to ``inf``.
    """
    _check_pair(beta_star, gamma)
    if beta_prev < 0:
        raise ValueError("beta_prev must be >= 0")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    w = np.asarray(omega, dtype=np.float64)
    d = (w * w * (1.0 + gamma * gamma + 2.0 * gamma * np.cos(w * tau))
         - 2.0 * beta_star * w * np.sin(w * tau) + beta_star * beta_star)
    out = np.where(d > 0.0, beta_prev * beta_prev / np.where(d > 0.0, d, 1.0), np.inf)
    if np.ndim(omega) == 0:
        return float(out)
    return out


def string_gain_sup(beta_prev: float, beta_star: float, gamma: float, tau: float,
                    n_points: int = 2000, window: float = 4.0) -> Tuple[float, float, bool]:
    """Numeric supremum of the squared transfer gain over frequency.

    Evaluates a linear base grid on ``[0, window * max(omega0, beta_star /
    tau)]``, then refines around every interior local maximum with
    log-spaced offsets down to a millionth of the grid spacing.  Returns
    ``(sup, argmax_omega, resonant)`` where ``resonant`` marks a
    nonpositive denominator (infinite gain).
    """
    hp = hopf_point(beta_star, gamma)
    w_hi = window * max(hp.omega0, beta_star / tau)
    base = np.linspace(0.0, w_hi, n_points)
    g = string_gain_squared(beta_prev, beta_star, gamma, tau, base)
    if np.any(np.isinf(g)):
        k = int(np.argmax(np.isinf(g)))
        return math.inf, float(base[k]), True
    sup = float(g[0])
    arg = 0.0
    k_best = 0
    if float(np.max(g)) > sup:
        k_best = int(np.argmax(g))
        sup = float(g[k_best])
        arg = float(base[k_best])
    spacing = base[1] - base[0]
    interior = np.nonzero((g[1:-1] >= g[:-2]) & (g[1:-1] >= g[2:]))[0] + 1
    offsets = np.concatenate([-np.geomspace(spacing * 1e-6, spacing, 60)[::-1],
                              np.geomspace(spacing * 1e-6, spacing, 60)])
    for k in interior:
        ws = base[k] + offsets
        ws = ws[ws > 0.0]
        gs = string_gain_squared(beta_prev, beta_star, gamma, tau, ws)
        if np.any(np.isinf(gs)):
            j = int(np.argmax(np.isinf(gs)))
            return math.inf, float(ws[j]), True
        j = int(np.argmax(gs))
        if float(gs[j]) > sup:
            sup = float(gs[j])
            arg = float(ws[j])
    return sup, arg, False


@dataclass(frozen=True)
class PairGain:
    """Numeric transfer-gain result for one consecutive vehicle pair."""

    vehicle: int          # downstream vehicle index (0-based)
    sup_gain_sq: float
    argmax_omega: float
    resonant: bool


@dataclass(frozen=True)
class StringStabilityReport:
    """Closed-form and numeric string-stability verdicts for a platoon.

    ``conflicts`` lists downstream vehicle indices where the closed-form
    ordering test fails although the numeric gain never exceeds one; the
    ordering test is a looser necessary condition than the numeric
    check, so disagreements are surfaced instead of hidden.
    """

    necessary_ok: bool
    sufficient_ok: bool
    numeric_ok: bool
    pair_gains: Tuple[PairGain, ...]
    conflicts: Tuple[int, ...] = field(default_factory=tuple)

    NUMERIC_SLACK = 1e-9


def string_stability_report(config: PlatoonConfig, n_points: int = 2000,
                            window: float = 4.0) -> StringStabilityReport:
    """Evaluate closed-form and numeric string-stability tests.

    Closed forms: the gain ordering ``beta_star_{i-1} <= beta_star_i``
    for every consecutive pair (necessary), plus the per-vehicle bound
    ``beta_star_i * tau_i <= (1 - gamma_i)**2 / 2`` (together:
    sufficient).  Numeric: the supremum of ``|H_i(j omega)|**2`` per pair
    must not exceed ``1 + 1e-9``.
    """
    betas = equilibrium_coefficients(config).beta_star
    n = config.n
    necessary_ok = True
    pair_necessary: list[bool] = []
    for i in range(1, n):
        ok = betas[i - 1] <= betas[i]
        pair_necessary.append(bool(ok))
        necessary_ok = necessary_ok and ok
    amplitude_ok = all(
        betas[i] * config.vehicles[i].tau <= (1.0 - config.vehicles[i].gamma) ** 2 / 2.0
        for i in range(n)
    )
    sufficient_ok = necessary_ok and amplitude_ok

    gains = []
    numeric_ok = True
    conflicts = []
    for i in range(1, n):
        veh = config.vehicles[i]
        sup, arg, res = string_gain_sup(float(betas[i - 1]), float(betas[i]),
                                        veh.gamma, veh.tau,
                                        n_points=n_points, window=window)
        gains.append(PairGain(vehicle=i, sup_gain_sq=sup, argmax_omega=arg, resonant=res))
        pair_ok = (not res) and sup <= 1.0 + StringStabilityReport.NUMERIC_SLACK
        numeric_ok = numeric_ok and pair_ok
        if not pair_necessary[i - 1] and pair_ok:
            conflicts.append(i)
    return StringStabilityReport(
        necessary_ok=bool(necessary_ok),
        sufficient_ok=bool(sufficient_ok),
        numeric_ok=bool(numeric_ok),
        pair_gains=tuple(gains),
        conflicts=tuple(conflicts),
    )


@dataclass(frozen=True)
class UncertainBeta:
    """Interval uncertainty for a linearised gain."""

    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not (0.0 < self.lower <= self.upper):
            raise ValueError(f"need 0 < lower <= upper, got [{self.lower}, {self.upper}]")


def robust_stability_bound(gamma: float, uncertain: UncertainBeta) -> float:
    """Delay bound guaranteeing stability for every gain in the interval.

    ``tau < pi sqrt(1 - gamma**2) / (2 * upper)`` keeps the follower
    locally stable for all ``beta_star`` in ``[lower, upper]``; the bound
    uses the worst (largest) gain and is never tighter than the exact
    critical delay at that gain.
    """
    if not (0.0 <= gamma < 1.0):
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    return math.pi * math.sqrt(1.0 - gamma * gamma) / (2.0 * uncertain.upper)


@dataclass(frozen=True)
class FrequencyComparison:
    """Onset frequency with feedback versus without."""

    f0: float
    f0_feedback_free: float

    @property
    def ratio(self) -> float:
        return self.f0 / self.f0_feedback_free


def frequency_comparison(beta_star: float, gamma: float) -> FrequencyComparison:
    """Compare the oscillation-onset frequency against the gamma = 0 value.

    The feedback raises the crossing frequency:
    ``f0 = omega0 / (2 pi) >= beta_star / (2 pi)`` with equality only at
    ``gamma = 0``.
    """
    hp = hopf_point(beta_star, gamma)
    return FrequencyComparison(f0=hp.f0, f0_feedback_free=beta_star / (2.0 * math.pi))
