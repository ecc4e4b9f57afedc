"""Shared builders for the test suite.

The four-follower platoon built here (follower 2 carrying acceleration
feedback, leader speed calibrated so follower 2's critical delay sits at
exactly 1.0) is the reference configuration for the bifurcation-diagram
tests; the same parameters ship in ``scenarios/delay_sweep.yaml``.
"""
from __future__ import annotations

import numpy as np
import pytest

from platoondyn import (
    CalibrationTarget,
    IntegrationSettings,
    LeaderProfile,
    ModelExponents,
    PlatoonConfig,
    SweepSpec,
    VehicleParams,
)

# leader speeds that put follower 2's critical delay at exactly 1.0
# (alpha = 0.5, b = 1, m = 1.5), one per feedback weight
CALIBRATED_SPEED = {
    0.0: 2.1450293971110256,
    0.5: 1.4872803163004744,
    0.9: 0.53670969119379208,
}

# oscillation period at onset, 2*pi/omega0 at the calibrated gain
ONSET_PERIOD = {
    0.0: 4.0,
    0.5: 6.0,
    0.9: 13.930846554678491,
}


def reference_platoon(gamma2: float = 0.5, tau2: float = 1.05,
                      leader_speed: float | None = None) -> PlatoonConfig:
    """Four followers; follower 2 is the one driven through its onset."""
    if leader_speed is None:
        leader_speed = CALIBRATED_SPEED[gamma2]
    return PlatoonConfig(
        vehicles=(
            VehicleParams(alpha=0.1, tau=0.6),
            VehicleParams(alpha=0.5, tau=tau2, gamma=gamma2),
            VehicleParams(alpha=0.3, tau=0.2),
            VehicleParams(alpha=0.3, tau=0.2),
        ),
        exponents=ModelExponents(m=1.5, l=1.0),
        leader=LeaderProfile.settled(leader_speed),
    )


def reference_sweep_spec() -> SweepSpec:
    """Delay sweep of follower 2 across onset, one curve per feedback weight."""
    return SweepSpec(
        config=reference_platoon(gamma2=0.5, tau2=1.05),
        vehicle=1,
        parameter="tau",
        values=tuple(float(v) for v in np.linspace(0.94, 1.10, 25)),
        gamma_family=(0.0, 0.5, 0.9),
        calibration=CalibrationTarget(vehicle=1, tau_cr=1.0),
        perturb_delta=5e-4,
    )


def reference_sweep_settings() -> IntegrationSettings:
    return IntegrationSettings(h=2e-3, horizon=300.0, transient_cut=40.0)


def scalar_platoon(beta_star: float, tau: float = 1.0,
                   gamma: float = 0.0) -> PlatoonConfig:
    """One follower with exponents m = l = 0, so the gain is exactly alpha.

    The nonlinear model then coincides with its linearization, which makes
    closed-form solutions usable as integrator oracles.
    """
    return PlatoonConfig(
        vehicles=(VehicleParams(alpha=beta_star, tau=tau, gamma=gamma, b=2.0),),
        exponents=ModelExponents(m=0.0, l=0.0),
        leader=LeaderProfile.settled(1.0),
    )


@pytest.fixture(scope="session")
def reference_sweep_result():
    """The full 25 x 3 bifurcation sweep (about half a minute); shared by
    the diagram tests and the acceptance gate."""
    import time

    from platoondyn import bifurcation_diagram

    t0 = time.perf_counter()
    result = bifurcation_diagram(reference_sweep_spec(), reference_sweep_settings())
    elapsed = time.perf_counter() - t0
    return result, elapsed
