"""Shared environment contract.

Every benchmark follows the same discrete-time scheme: a control action is
held constant while the continuous dynamics are integrated with a fixed
number of explicit Euler substeps, Gaussian process noise is added once per
control step (not per substep), and the episode ends either by leaving the
admissible box (terminated) or by hitting the step limit (truncated).

Rewards share one structure across benchmarks: a quadratic penalty on the
generalized state s and the action, plus a sparse bonus near the target,
all multiplied by a common scale.  The cost channel stays unscaled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RewardSpec:
    q_diag: np.ndarray          # diagonal of the state penalty matrix
    r_diag: np.ndarray          # diagonal of the action penalty matrix
    delta: float                # edge of the bonus region in the max norm
    r_delta: float = 1.0        # bonus value (flat mode)
    ramp: bool = False          # linear ramp bonus instead of a flat one
    scale: float = 100.0

    def compute(self, s: np.ndarray, u: np.ndarray):
        """Scaled reward and unscaled quadratic cost at (s, u)."""
        raw = -(float(s @ (self.q_diag * s)) + float(u @ (self.r_diag * u)))
        sup = float(np.max(np.abs(s)))
        if self.ramp:
            if sup <= self.delta:
                raw += 10.0 * (1.0 - sup / self.delta)
        elif sup <= self.delta:
            raw += self.r_delta
        return self.scale * raw, float(s @ s)


@dataclass(frozen=True)
class EnvSpec:
    id: str
    state_dim: int              # dimension of the generalized state s
    action_dim: int
    state_low: np.ndarray       # admissible box for s; leaving it terminates
    state_high: np.ndarray
    init_low: np.ndarray        # reset sampling box
    init_high: np.ndarray
    action_low: np.ndarray
    action_high: np.ndarray
    dt: float
    substeps_per_control: int
    max_episode_steps: int
    reward: RewardSpec
    is_tracking: bool = False

    def __post_init__(self):
        assert np.all(self.action_low < self.action_high)
        assert self.substeps_per_control >= 1 and self.dt > 0

    @property
    def control_dt(self) -> float:
        return self.dt * self.substeps_per_control


@dataclass
class StepResult:
    next_state: np.ndarray      # raw simulator state
    s: np.ndarray               # generalized state after the step
    reward: float
    cost: float
    terminated: bool
    truncated: bool


class Env:
    """Base class: owns the episode state, rng stream and step counting.

    Subclasses provide the derivative, the init sampler and, for tracking
    tasks, the map from raw state to the generalized (error) state.
    Instances are cheap; concurrent rollouts should each construct their own.
    """

    spec: EnvSpec
    PARAM_NAMES: tuple = ()

    def __init__(self, noise_sigma: float = 0.0, params: dict | None = None):
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        for name in (params or {}):
            if name not in self.PARAM_NAMES:
                raise KeyError(f"unknown physical parameter {name!r} for {self.spec.id}")
        self.noise_sigma = float(noise_sigma)
        self.params = {**self.default_params(), **(params or {})}
        self._x = None
        self._steps = 0
        self._rng = None

    # -- subclass hooks --------------------------------------------------
    def default_params(self) -> dict:
        return {}

    def _deriv(self, x: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
        raise NotImplementedError

    def _sample_init(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.spec.init_low, self.spec.init_high)

    def _generalized(self, x: np.ndarray, t: float) -> np.ndarray:
        return x

    def _project(self, x: np.ndarray) -> np.ndarray:
        """Optional manifold repair applied once per control step."""
        return x

    # -- contract ---------------------------------------------------------
    @property
    def state(self) -> np.ndarray:
        return self._x.copy()

    @property
    def elapsed_steps(self) -> int:
        return self._steps

    @property
    def time(self) -> float:
        return self._steps * self.spec.control_dt

    def reset(self, seed: int | None = None) -> np.ndarray:
        self._rng = np.random.default_rng(seed)
        self._x = self._sample_init(self._rng)
        self._steps = 0
        return self._generalized(self._x, 0.0).copy()

    def step(self, action: np.ndarray) -> StepResult:
        if self._x is None:
            raise RuntimeError("step() before reset()")
        u = np.clip(np.asarray(action, dtype=np.float64),
                    self.spec.action_low, self.spec.action_high)
        if not np.all(np.isfinite(u)):
            raise FloatingPointError("non-finite action")

        t0 = self.time
        s_now = self._generalized(self._x, t0)
        reward, cost = self.spec.reward.compute(s_now, u)

        dt = self.spec.dt
        x = self._x
        for j in range(self.spec.substeps_per_control):
            x = x + dt * self._deriv(x, u, t0 + j * dt)
        if self.noise_sigma > 0.0:
            x = x + self._rng.normal(0.0, self.noise_sigma, size=x.shape)
        x = self._project(x)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"state diverged in {self.spec.id}")

        self._x = x
        self._steps += 1
        t1 = self.time
        s_next = self._generalized(x, t1)
        terminated = bool(np.any(s_next < self.spec.state_low)
                          | np.any(s_next > self.spec.state_high))
        truncated = (not terminated) and self._steps >= self.spec.max_episode_steps
        return StepResult(x.copy(), s_next.copy(), reward, cost, terminated, truncated)


def box(*vals) -> np.ndarray:
    return np.asarray(vals, dtype=np.float64)
