"""Rigid-body state evolution and extraction of radar-visible parameters from
the UAV-to-target relative configuration.

Frames: {w} global, {s} UAV body (array platform), {p} target body.  The
tracked state is T_sp, the target pose expressed in the UAV body frame.  The
target is a point: its twist has zero angular velocity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRange
from .se3 import Pose, exp_map
from .waveform import SPEED_OF_LIGHT, PhysicalParams, ReGrid, channel_gain


@dataclass(frozen=True)
class WorldState:
    """Ground-truth world configuration: platform and target poses plus their
    current body twists."""

    T_ws: Pose
    T_wp: Pose
    xi_s: np.ndarray
    xi_p: np.ndarray

    def __post_init__(self):
        if np.any(self.xi_p[3:]):
            raise ValueError("target twist must have zero angular velocity")

    @property
    def T_sp(self) -> Pose:
        return self.T_ws.inverse() @ self.T_wp


@dataclass(frozen=True)
class UpaOffset:
    """Midpoint of the planar array in the UAV body frame, meters."""

    s: np.ndarray = field(default_factory=lambda: np.zeros(3))


def propagate_world(pose: Pose, xi_body: np.ndarray, dt: float) -> Pose:
    """One epoch of rigid-body motion: T <- T * Exp(xi * dt)."""
    return pose @ exp_map(xi_body, dt)


def evolve_relative(
    T_sp: Pose,
    xi_s: np.ndarray,
    xi_p: np.ndarray,
    xi_noise: np.ndarray,
    dt: float,
) -> Pose:
    """Relative-configuration transition
    Exp(-(xi_s + xi_noise) dt) * T_sp * Exp(xi_p dt)."""
    return exp_map(-(xi_s + xi_noise), dt) @ T_sp @ exp_map(xi_p, dt)


def local_velocity(xi: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Body-frame velocity of a body-fixed point: nu + omega x point."""
    return xi[:3] + np.cross(xi[3:], point)


def radial_velocity(T_sp: Pose, v_p_local: np.ndarray, v_s_local: np.ndarray) -> float:
    """Range rate <R v_p - v_s, r> / |r|; positive when the target recedes."""
    rho = np.linalg.norm(T_sp.r)
    if rho < 1e-3:
        raise DegenerateRange(f"range {rho:.3e} m below 1 mm")
    return float((T_sp.R @ v_p_local - v_s_local) @ T_sp.r) / rho


def extract_params(
    T_sp: Pose,
    xi_s_next: np.ndarray,
    xi_p_next: np.ndarray,
    offset: UpaOffset,
    grid: ReGrid,
    a_const: float,
    phase: float,
) -> PhysicalParams:
    """Physical parameters of the relative configuration.

    The Doppler term uses the *next* control twist: the platform velocity that
    acts while the echo of epoch n is collected.  Azimuth is defined as 0 on
    the z-axis (x = y = 0) where atan2 is undefined.
    """
    x, y, z = T_sp.r
    rho = float(np.linalg.norm(T_sp.r))
    if rho < 1e-3:
        raise DegenerateRange(f"range {rho:.3e} m below 1 mm")
    theta = float(np.arccos(np.clip(z / rho, -1.0, 1.0)))
    phi = 0.0 if (x == 0.0 and y == 0.0) else float(np.arctan2(y, x))
    tau = 2.0 * rho / SPEED_OF_LIGHT
    b = channel_gain(rho, phase, a_const)
    v_s = local_velocity(xi_s_next, offset.s)
    v_p = local_velocity(xi_p_next, np.zeros(3))
    mu = 2.0 * radial_velocity(T_sp, v_p, v_s) * grid.fc / SPEED_OF_LIGHT
    return PhysicalParams(tau=tau, phi=phi, theta=theta, mu=mu, b=b)
