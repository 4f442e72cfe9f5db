"""Closed-form reference trajectories for the tracking tasks.

Car references live in the plane and provide the quantities the error
dynamics consume: speed, acceleration, heading and yaw rate of the moving
target frame.  Quadrotor references are 3-D position curves with analytic
velocity/acceleration plus a rotating heading vector that fixes the
reference attitude.
"""

from __future__ import annotations

import numpy as np


class CarReference:
    """Planar reference with analytic frame quantities."""

    def __init__(self, ref_id: str):
        if ref_id not in ("line", "circle", "sine"):
            raise KeyError(f"unknown car reference {ref_id!r}")
        self.id = ref_id

    def position(self, t: float) -> np.ndarray:
        if self.id == "line":
            return np.array([t, 0.0])
        if self.id == "circle":
            return np.array([8.0 * np.cos(0.125 * t), 8.0 * np.sin(0.125 * t)])
        return np.array([t, np.sin(0.2 * t)])

    def frame(self, t: float):
        """(v_ref, a_ref, psi_ref, omega_ref) of the target frame at time t."""
        if self.id == "line":
            return 1.0, 0.0, 0.0, 0.0
        if self.id == "circle":
            # |p'| = 8 * 0.125 = 1; tangent rotates at the path rate
            return 1.0, 0.0, 0.125 * t + 0.5 * np.pi, 0.125
        c, s = np.cos(0.2 * t), np.sin(0.2 * t)
        v = np.sqrt(1.0 + 0.04 * c * c)
        a = -0.008 * c * s / v
        psi = np.arctan(0.2 * c)
        omega = -0.04 * s / (1.0 + 0.04 * c * c)
        return v, a, psi, omega


class QuadReference:
    """3-D position reference with heading; all derivatives analytic."""

    def __init__(self, ref_id: str):
        if ref_id not in ("helix_h", "helix_v", "lissajous"):
            raise KeyError(f"unknown quadrotor reference {ref_id!r}")
        self.id = ref_id

    def position(self, t: float) -> np.ndarray:
        if self.id == "helix_h":
            return np.array([0.4 * t, 0.4 * np.sin(t), 0.6 * np.cos(t)])
        if self.id == "helix_v":
            return np.array([0.5 * np.cos(t), 0.5 * np.sin(t), 0.3 * t])
        return np.array([0.8 * np.sin(0.4 * t), 0.8 * np.cos(0.4 * t),
                         0.4 * np.sin(1.2 * t) + 1.0])

    def velocity(self, t: float) -> np.ndarray:
        if self.id == "helix_h":
            return np.array([0.4, 0.4 * np.cos(t), -0.6 * np.sin(t)])
        if self.id == "helix_v":
            return np.array([-0.5 * np.sin(t), 0.5 * np.cos(t), 0.3])
        return np.array([0.32 * np.cos(0.4 * t), -0.32 * np.sin(0.4 * t),
                         0.48 * np.cos(1.2 * t)])

    def acceleration(self, t: float) -> np.ndarray:
        if self.id == "helix_h":
            return np.array([0.0, -0.4 * np.sin(t), -0.6 * np.cos(t)])
        if self.id == "helix_v":
            return np.array([-0.5 * np.cos(t), -0.5 * np.sin(t), 0.0])
        return np.array([-0.128 * np.sin(0.4 * t), -0.128 * np.cos(0.4 * t),
                         -0.576 * np.sin(1.2 * t)])

    def heading(self, t: float) -> np.ndarray:
        # the published heading program; reused for the generalization curves
        return np.array([np.cos(t), np.sin(t), 0.0])
