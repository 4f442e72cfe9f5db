"""Single-track car tracking in error coordinates.

The simulated state IS the 7-dim tracking error
e = [s_xe, s_ye, delta_e, v_e, psi_e, psidot_e, beta_e]; position errors are
expressed in the rotating reference frame.  The model blends a dynamic tire
formulation with a kinematic bicycle at low absolute speed to avoid the 1/v
singularity.  Controls are steering rate and longitudinal acceleration.
"""

from __future__ import annotations

import numpy as np

from .core import Env, EnvSpec, RewardSpec, box
from .references import CarReference


def car_error_deriv(e, u, p, ref_frame):
    """Error-state derivative; ref_frame = (v_ref, a_ref, psi_ref, omega_ref)."""
    v_ref, a_ref, _, omega_ref = ref_frame
    sxe, sye, de, ve, pe, pde, be = e
    v = ve + v_ref                      # absolute speed
    pd = pde + omega_ref                # absolute yaw rate
    lf, lr, hs = p["l_f"], p["l_r"], p["h_s"]
    L = lf + lr
    mu = p["mu_scale"] * p["tire_p_dy1"]
    Cf = Cr = -p["tire_p_ky1"] / p["tire_p_dy1"]
    g = 9.81

    d = np.empty(7)
    d[0] = v * np.cos(pe + be) - v_ref + omega_ref * sye
    d[1] = v * np.sin(pe + be) - omega_ref * sxe
    d[2] = u[0]
    d[3] = -a_ref + u[1]

    if abs(v) >= p["v_switch"]:
        k1 = mu * p["m"] / (p["I_z"] * L)
        d[4] = pde
        d[5] = k1 * (-(lf ** 2 * Cf * g * lr + lr ** 2 * Cr * g * lf) / v * pd
                     + (lr * Cr * g * lf - lf * Cf * g * lr) * be
                     + lf * Cf * g * lr * de) \
            + k1 * (-(-lf ** 2 * Cf * hs + lr ** 2 * Cr * hs) / v * pd
                    + (lr * Cr * hs + lf * Cf * hs) * be
                    - lf * Cf * hs * de) * u[1]
        d[6] = (mu * (Cr * g * lf * lr - Cf * g * lr * lf) / (v ** 2 * L) - 1.0) * pd \
            - mu * (Cr * g * lf + Cf * g * lr) / (v * L) * be \
            + mu * Cf * g * lr / (v * L) * de \
            + (mu * (Cr * hs * lr + Cf * hs * lf) / (v ** 2 * L) * pd
               - mu * (Cr * hs - Cf * hs) / (v * L) * be
               - mu * Cf * hs / (v * L) * de) * u[1]
    else:
        # kinematic bicycle: yaw rate follows geometry, side-slip from steering
        tan_d = np.tan(de)
        d[4] = v * np.cos(be) / L * tan_d - omega_ref
        d[5] = np.cos(be) * tan_d / L * u[1]
        beta_prime = (lr / (L * np.cos(de) ** 2)) / (1.0 + (tan_d * lr / L) ** 2)
        d[6] = beta_prime * u[0]
    return d


class CarTrackingEnv(Env):
    PARAM_NAMES = ("m", "I_z", "l_f", "l_r", "h_s",
                   "tire_p_dy1", "tire_p_ky1", "mu_scale", "v_switch")
    spec = EnvSpec(
        id="car_tracking", state_dim=7, action_dim=2,
        state_low=box(-1, -1, -1.066, -1, -np.pi / 2, -np.pi / 2, -np.pi / 3),
        state_high=box(1, 1, 1.066, 1, np.pi / 2, np.pi / 2, np.pi / 3),
        init_low=-0.5 * np.ones(7), init_high=0.5 * np.ones(7),
        action_low=box(-5, -5), action_high=box(5, 5),
        dt=0.01, substeps_per_control=5, max_episode_steps=1000,
        reward=RewardSpec(q_diag=box(2, 2, 1, 1, 1, 1, 1), r_diag=box(0.1, 0.1),
                          delta=0.01),
        is_tracking=True)

    def __init__(self, noise_sigma: float = 0.0, params: dict | None = None,
                 reference: str = "line"):
        super().__init__(noise_sigma, params)
        self.reference = CarReference(reference)

    def default_params(self):
        return {"m": 1093.0, "I_z": 1792.0, "l_f": 1.155, "l_r": 1.423,
                "h_s": 0.614, "tire_p_dy1": 1.0489, "tire_p_ky1": -21.92,
                "mu_scale": 0.1, "v_switch": 0.1}

    def _deriv(self, e, u, t):
        return car_error_deriv(e, u, self.params, self.reference.frame(t))

    def absolute_position(self, e: np.ndarray, t: float) -> np.ndarray:
        """Map frame-relative position errors back to world coordinates."""
        _, _, psi_ref, _ = self.reference.frame(t)
        c, s = np.cos(psi_ref), np.sin(psi_ref)
        offset = np.array([c * e[0] - s * e[1], s * e[0] + c * e[1]])
        return self.reference.position(t) + offset
