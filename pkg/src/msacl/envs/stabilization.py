"""The four stabilization benchmarks.

Each environment exposes its continuous-time derivative as a module-level
function of (state, action, params) so the dynamics can be tested in
isolation, with a thin Env subclass wiring it into the shared contract.
All four drive the state to the origin.
"""

from __future__ import annotations

import numpy as np

from .core import Env, EnvSpec, RewardSpec, box


def vanderpol_deriv(x, u, p):
    """Oscillator with nonlinear damping mu and a direct force input."""
    return np.array([x[1], p["mu"] * (1.0 - x[0] ** 2) * x[1] - x[0] + u[0]])


def pendulum_deriv(x, u, p):
    # torque balance about the pivot; theta = 0 is the upright position
    theta, omega = x
    acc = (p["m"] * p["g"] * p["L"] * np.sin(theta) - p["b"] * omega + u[0]) \
        / (p["m"] * p["L"] ** 2)
    return np.array([omega, acc])


def ductedfan_deriv(x, u, p):
    """Planar VTOL: u1 acts across the fan axis, u2 along it (gravity-offset)."""
    _, _, th, vx, vy, om = x
    m, g, d = p["m"], p["g"], p["d"]
    sin, cos = np.sin(th), np.cos(th)
    ax = (-m * g * sin - d * vx + u[0] * cos - u[1] * sin) / m
    ay = (m * g * (cos - 1.0) - d * vy + u[0] * sin + u[1] * cos) / m
    alpha = p["r"] * u[0] / p["J"]
    return np.array([vx, vy, om, ax, ay, alpha])


def twolink_mass_matrix(q, p):
    m2, l1, lc2 = p["m2"], p["l1"], p["lc2"]
    c2 = np.cos(q[1])
    m11 = p["I1"] + p["I2"] + p["m1"] * p["lc1"] ** 2 \
        + m2 * (l1 ** 2 + lc2 ** 2 + 2.0 * l1 * lc2 * c2)
    m12 = p["I2"] + m2 * (lc2 ** 2 + l1 * lc2 * c2)
    m22 = p["I2"] + m2 * lc2 ** 2
    return np.array([[m11, m12], [m12, m22]])


def twolink_deriv(x, u, p):
    """Planar two-link arm: solve M(q) qdd = u - C(q,qd) qd - G(q)."""
    q, qd = x[:2], x[2:]
    M = twolink_mass_matrix(q, p)
    h = p["m2"] * p["l1"] * p["lc2"] * np.sin(q[1])
    C = np.array([[-h * qd[1], -h * (qd[0] + qd[1])],
                  [h * qd[0], 0.0]])
    g = p["g"]
    s1 = np.sin(q[0])
    s12 = np.sin(q[0] + q[1])
    G = np.array([-(p["m1"] * p["lc1"] + p["m2"] * p["l1"]) * g * s1
                  - p["m2"] * p["lc2"] * g * s12,
                  -p["m2"] * p["lc2"] * g * s12])
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if abs(det) < 1e-12:
        raise ArithmeticError("singular mass matrix")
    rhs = u - C @ qd - G
    qdd = np.array([M[1, 1] * rhs[0] - M[0, 1] * rhs[1],
                    -M[1, 0] * rhs[0] + M[0, 0] * rhs[1]]) / det
    return np.concatenate([qd, qdd])


class VanderPolEnv(Env):
    PARAM_NAMES = ("mu",)
    spec = EnvSpec(
        id="vanderpol", state_dim=2, action_dim=1,
        state_low=box(-10, -10), state_high=box(10, 10),
        init_low=box(-5, -5), init_high=box(5, 5),
        action_low=box(-5), action_high=box(5),
        dt=0.01, substeps_per_control=5, max_episode_steps=1000,
        reward=RewardSpec(q_diag=box(2, 1), r_diag=box(0.1), delta=0.01))

    def default_params(self):
        return {"mu": 1.0}

    def _deriv(self, x, u, t):
        return vanderpol_deriv(x, u, self.params)


class PendulumEnv(Env):
    PARAM_NAMES = ("m", "L", "b", "g")
    spec = EnvSpec(
        id="pendulum", state_dim=2, action_dim=1,
        state_low=box(-np.pi, -10), state_high=box(np.pi, 10),
        init_low=box(-np.pi, -10), init_high=box(np.pi, 10),
        action_low=box(-5), action_high=box(5),
        dt=0.01, substeps_per_control=5, max_episode_steps=1000,
        reward=RewardSpec(q_diag=box(2, 1), r_diag=box(0.1), delta=0.01))

    def default_params(self):
        return {"m": 0.15, "L": 0.5, "b": 0.1, "g": 9.81}

    def _deriv(self, x, u, t):
        return pendulum_deriv(x, u, self.params)


class DuctedFanEnv(Env):
    PARAM_NAMES = ("m", "r", "d", "J", "g")
    spec = EnvSpec(
        id="ductedfan", state_dim=6, action_dim=2,
        state_low=box(-5, -5, -np.pi / 2, -5, -5, -5),
        state_high=box(5, 5, np.pi / 2, 5, 5, 5),
        init_low=-0.5 * np.ones(6), init_high=0.5 * np.ones(6),
        action_low=box(-5, -5), action_high=box(5, 5),
        dt=0.01, substeps_per_control=5, max_episode_steps=1000,
        reward=RewardSpec(q_diag=box(2, 2, 2, 1, 1, 1), r_diag=box(0.1, 0.1),
                          delta=0.01))

    def default_params(self):
        return {"m": 8.5, "r": 0.26, "d": 0.95, "J": 0.048, "g": 9.81}

    def _deriv(self, x, u, t):
        return ductedfan_deriv(x, u, self.params)


class TwoLinkEnv(Env):
    PARAM_NAMES = ("l1", "l2", "m1", "m2", "lc1", "lc2", "I1", "I2", "g")
    spec = EnvSpec(
        id="twolink", state_dim=4, action_dim=2,
        state_low=box(-np.pi / 2, -np.pi / 2, -20, -20),
        state_high=box(np.pi / 2, np.pi / 2, 20, 20),
        init_low=-0.5 * np.ones(4), init_high=0.5 * np.ones(4),
        action_low=box(-20, -20), action_high=box(20, 20),
        dt=0.01, substeps_per_control=5, max_episode_steps=1000,
        reward=RewardSpec(q_diag=box(2, 2, 1, 1), r_diag=box(0.1, 0.1),
                          delta=0.01))

    def __init__(self, noise_sigma: float = 0.0, params: dict | None = None):
        params = dict(params or {})
        # a link length override implies uniform-rod COM offset and inertia
        # unless those are overridden explicitly too
        for i in ("1", "2"):
            li = params.get("l" + i)
            if li is not None:
                params.setdefault("lc" + i, li / 2.0)
                params.setdefault("I" + i, params.get("m" + i, 1.0) * li * li / 12.0)
        super().__init__(noise_sigma, params)

    def default_params(self):
        return {"l1": 1.0, "l2": 1.0, "m1": 1.0, "m2": 1.0,
                "lc1": 0.5, "lc2": 0.5, "I1": 0.0833, "I2": 0.0833, "g": 9.81}

    def _deriv(self, x, u, t):
        return twolink_deriv(x, u, self.params)
