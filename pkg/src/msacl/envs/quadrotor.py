"""Quadrotor tracking on SE(3).

The simulator integrates the full rigid-body pose (position, velocity,
rotation matrix, body rates) under a total thrust along the body z-axis and
three body moments.  The policy-facing generalized state is the 12-dim
geometric tracking error of Lee-style attitude control against a reference
pose built from the position curve and a rotating heading vector.

The rotation matrix is stored row-major inside the flat 18-dim state vector
and re-orthonormalized (Gram-Schmidt over columns) once per control step;
plain Euler integration alone drifts off SO(3) over thousands of substeps.
"""

from __future__ import annotations

import numpy as np

from .core import Env, EnvSpec, RewardSpec, box
from .references import QuadReference

E3 = np.array([0.0, 0.0, 1.0])


def hat(w: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def vee(A: np.ndarray) -> np.ndarray:
    return np.array([A[2, 1], A[0, 2], A[1, 0]])


def rodrigues(r: np.ndarray) -> np.ndarray:
    """Rotation matrix of a rotation vector."""
    angle = np.linalg.norm(r)
    if angle < 1e-12:
        return np.eye(3) + hat(r)
    K = hat(r / angle)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def gram_schmidt(R: np.ndarray) -> np.ndarray:
    """Orthonormalize the columns of R in order."""
    q = np.empty((3, 3))
    c0 = R[:, 0]
    q[:, 0] = c0 / np.linalg.norm(c0)
    c1 = R[:, 1] - (q[:, 0] @ R[:, 1]) * q[:, 0]
    q[:, 1] = c1 / np.linalg.norm(c1)
    c2 = R[:, 2] - (q[:, 0] @ R[:, 2]) * q[:, 0] - (q[:, 1] @ R[:, 2]) * q[:, 1]
    q[:, 2] = c2 / np.linalg.norm(c2)
    return q


def pack_state(p, v, R, omega) -> np.ndarray:
    return np.concatenate([p, v, R.reshape(9), omega])


def unpack_state(x: np.ndarray):
    return x[0:3], x[3:6], x[6:15].reshape(3, 3), x[15:18]


def quadrotor_deriv(x: np.ndarray, u: np.ndarray, p: dict) -> np.ndarray:
    pos, v, R, omega = unpack_state(x)
    del pos
    F, M = u[0], u[1:4]
    J = p["J"]
    vdot = -p["gravity"] + (F / p["m"]) * (R @ E3)
    Rdot = R @ hat(omega)
    omdot = (M - np.cross(omega, J * omega)) / J
    return np.concatenate([v, vdot, Rdot.reshape(9), omdot])


def reference_attitude(t: float, ref: QuadReference, gravity: np.ndarray,
                       fd_dt: float = 0.01):
    """Reference rotation and body rates at time t.

    The frame points body-z along the required thrust direction and aligns
    body-x with the heading program as closely as orthogonality allows.
    Omega_ref comes from central differencing of the frame itself.
    """

    def frame(tt: float) -> np.ndarray:
        thrust = ref.acceleration(tt) + gravity
        nt = np.linalg.norm(thrust)
        if nt < 1e-9:
            raise ArithmeticError("free-fall reference: attitude undefined")
        b3 = thrust / nt
        b2 = np.cross(b3, ref.heading(tt))
        b2 = b2 / np.linalg.norm(b2)
        b1 = np.cross(b2, b3)
        return np.column_stack([b1, b2, b3])

    R_ref = frame(t)
    Rdot = (frame(t + fd_dt) - frame(t - fd_dt)) / (2.0 * fd_dt)
    W = R_ref.T @ Rdot
    return R_ref, vee(0.5 * (W - W.T))


def tracking_error(x: np.ndarray, t: float, ref: QuadReference,
                   gravity: np.ndarray) -> np.ndarray:
    """12-dim geometric error [e_p, e_v, e_R, e_Omega]."""
    pos, v, R, omega = unpack_state(x)
    R_ref, omega_ref = reference_attitude(t, ref, gravity)
    S = R_ref.T @ R - R.T @ R_ref
    e_R = 0.5 * vee(S)
    e_om = omega - R.T @ R_ref @ omega_ref
    return np.concatenate([pos - ref.position(t), v - ref.velocity(t), e_R, e_om])


def rotor_thrusts(u: np.ndarray, p: dict) -> np.ndarray:
    """Individual rotor forces behind a (F, Mx, My, Mz) command; diagnostic."""
    F, Mx, My, Mz = u
    d, c = p["d"], p["c_tf"]
    quarter = 0.25 * F
    return np.array([quarter + My / (2 * d) - Mz / (4 * c),
                     quarter - Mx / (2 * d) + Mz / (4 * c),
                     quarter - My / (2 * d) - Mz / (4 * c),
                     quarter + Mx / (2 * d) + Mz / (4 * c)])


class QuadrotorTrackingEnv(Env):
    PARAM_NAMES = ("m", "J", "gravity", "d", "c_tf")
    # error-box bounds beyond the attitude rows are generous; they exist to
    # cut off numerically diverging episodes, not to shape the task
    spec = EnvSpec(
        id="quadrotor_tracking", state_dim=12, action_dim=4,
        state_low=np.concatenate([-50 * np.ones(6), -np.ones(3), -50 * np.ones(3)]),
        state_high=np.concatenate([50 * np.ones(6), np.ones(3), 50 * np.ones(3)]),
        init_low=-0.01 * np.ones(12), init_high=0.01 * np.ones(12),
        action_low=box(0.0, -10, -10, -10), action_high=box(85.06, 10, 10, 10),
        dt=0.01, substeps_per_control=4, max_episode_steps=1000,
        reward=RewardSpec(q_diag=np.ones(12), r_diag=box(1e-4, 0.01, 0.01, 0.01),
                          delta=0.1, ramp=True),
        is_tracking=True)

    def __init__(self, noise_sigma: float = 0.0, params: dict | None = None,
                 reference: str = "helix_h"):
        super().__init__(noise_sigma, params)
        self.reference = QuadReference(reference)

    def default_params(self):
        return {"m": 4.34, "J": np.array([0.08, 0.09, 0.14]),
                "gravity": np.array([0.0, 0.0, 9.8]), "d": 0.315,
                "c_tf": 8.004e-4}

    def _sample_init(self, rng: np.random.Generator):
        # sampled primitives: position, velocity, rotation vector, body rates
        draw = rng.uniform(self.spec.init_low, self.spec.init_high)
        R0 = rodrigues(draw[6:9])
        return pack_state(draw[0:3], draw[3:6], R0, draw[9:12])

    def _deriv(self, x, u, t):
        return quadrotor_deriv(x, u, self.params)

    def _generalized(self, x, t):
        return tracking_error(x, t, self.reference, self.params["gravity"])

    def _project(self, x):
        p, v, R, omega = unpack_state(x)
        return pack_state(p, v, gram_schmidt(R), omega)

    def absolute_position(self, x: np.ndarray, t: float) -> np.ndarray:
        return x[0:3].copy()
