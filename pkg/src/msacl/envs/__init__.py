"""Benchmark environment registry."""

from __future__ import annotations

from .car import CarTrackingEnv
from .core import Env, EnvSpec, RewardSpec, StepResult
from .quadrotor import QuadrotorTrackingEnv
from .stabilization import DuctedFanEnv, PendulumEnv, TwoLinkEnv, VanderPolEnv

REGISTRY = {
    "vanderpol": VanderPolEnv,
    "pendulum": PendulumEnv,
    "ductedfan": DuctedFanEnv,
    "twolink": TwoLinkEnv,
    "car_tracking": CarTrackingEnv,
    "quadrotor_tracking": QuadrotorTrackingEnv,
}

DEFAULT_REFERENCES = {"car_tracking": "line", "quadrotor_tracking": "helix_h"}


def make(env_id: str, noise_sigma: float = 0.0, params: dict | None = None,
         reference: str | None = None) -> Env:
    """Construct a benchmark by id with optional perturbation overrides."""
    try:
        cls = REGISTRY[env_id]
    except KeyError:
        raise KeyError(f"unknown environment id {env_id!r}; "
                       f"choose from {sorted(REGISTRY)}") from None
    if cls.spec.is_tracking:
        ref = reference if reference is not None else DEFAULT_REFERENCES[env_id]
        return cls(noise_sigma=noise_sigma, params=params, reference=ref)
    if reference is not None:
        raise ValueError(f"{env_id} is a stabilization task; no reference applies")
    return cls(noise_sigma=noise_sigma, params=params)


__all__ = ["Env", "EnvSpec", "RewardSpec", "StepResult", "REGISTRY", "make",
           "VanderPolEnv", "PendulumEnv", "DuctedFanEnv", "TwoLinkEnv",
           "CarTrackingEnv", "QuadrotorTrackingEnv"]
