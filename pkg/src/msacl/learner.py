"""Certificate, critic, actor and temperature losses plus the training loop.

One update step runs, in order: the Lyapunov network on the hinge losses,
both Q networks on the soft Bellman residual, then (every ``delay``-th step)
``delay`` consecutive policy and temperature updates, and finally one polyak
blend of the target critics.  Importance weights, stability labels and
advantages enter the graphs as constants, so each loss reaches exactly the
parameter set it is meant to train.

All quantities named per window of length n: states s_t .. s_{t+n-1} are the
stored transitions' origins, decay comparisons run over offsets k = 1..n-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .envs.core import Env
from .nets import Adam, PolicyNet, QNet, VNet, copy_params, polyak_update
from .replay import NStepCollector, ReplayBuffer, SequenceBatch, Transition

LOG_COLUMNS = ("iter", "env_steps", "loss_lya", "loss_bnd", "loss_stab",
               "loss_q1", "loss_q2", "loss_pi", "alpha",
               "mean_esl_positive_fraction", "mean_A_lambda")


@dataclass
class TrainConfig:
    n: int = 20                     # window length; 1 disables all multi-step terms
    lam: float = 0.95
    alpha1: float = 1.0
    alpha2: float = 2.0
    alpha3: float = 0.15
    omega_bnd: float = 1.0
    omega_stab: float = 10.0
    clip_eps: float = 0.1
    gamma: float = 0.99
    tau: float = 0.05
    delay: int = 2
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    alpha_lr: float = 1e-3
    init_alpha: float = 1.0
    batch_size: int = 256
    steps_per_iteration: int = 20
    updates_per_iteration: int = 1
    buffer_capacity: int = 1_000_000
    warm_size: int = 5_000
    hidden: int = 256
    target_entropy: float | None = None   # default -action_dim
    seed: int = 0

    def __post_init__(self):
        assert self.n >= 1
        assert 0.0 < self.lam < 1.0
        assert 0.0 < self.alpha3 < 1.0
        assert 0.0 < self.alpha1 <= self.alpha2
        assert 0.0 < self.gamma < 1.0
        assert 0.0 < self.tau <= 1.0
        assert self.delay >= 1 and self.batch_size >= 1
        assert 0.0 < self.clip_eps < 1.0


# ---------------------------------------------------------------- primitives

def lambda_weights(n: int, lam: float) -> np.ndarray:
    """Normalized geometric weights over offsets k = 1..n-1."""
    if n < 2:
        return np.zeros(0)
    raw = lam ** np.arange(n - 1)
    return raw / raw.sum()


def compute_esl(states: np.ndarray, alpha1: float, alpha2: float,
                alpha3: float) -> np.ndarray:
    """Exponential decay labels in {-1, +1}, shape (..., n-1).

    states has shape (..., n, ds); offset k is labeled +1 when
    ||s_{t+k}|| <= sqrt(alpha2/alpha1) * (1-alpha3)^(k/2) * ||s_t||.
    """
    norms = np.linalg.norm(states, axis=-1)
    n = norms.shape[-1]
    k = np.arange(1, n)
    bound = math.sqrt(alpha2 / alpha1) * (1.0 - alpha3) ** (k / 2.0) \
        * norms[..., :1]
    return np.where(norms[..., 1:] <= bound, 1.0, -1.0)


def is_clip(logp_new: np.ndarray, logp_behavior: np.ndarray) -> np.ndarray:
    """Clipped trajectory importance weights, shape (N, n-1).

    Offset k uses the product of min(ratio_j, 1) over the first k
    transitions, so weights only shrink with depth and stay in (0, 1].
    """
    n = logp_new.shape[-1]
    ratios = np.exp(logp_new[..., :n - 1] - logp_behavior[..., :n - 1])
    return np.cumprod(np.minimum(ratios, 1.0), axis=-1)


def stability_advantage(v_states: np.ndarray, weights: np.ndarray,
                        alpha3: float):
    """Per-offset decay advantages and their weighted aggregate.

    v_states holds V at s_t..s_{t+n-1}, shape (N, n).  Returns
    (A of shape (N, n-1), A_lambda of shape (N,)).
    """
    N, n = v_states.shape
    if n < 2:
        return np.zeros((N, 0)), np.zeros(N)
    beta = (1.0 - alpha3) ** np.arange(1, n)
    adv = beta * v_states[:, :1] - v_states[:, 1:]
    return adv, adv @ weights


# ---------------------------------------------------------------- loss graphs

def lyapunov_losses(vnet: VNet, batch: SequenceBatch, esl: np.ndarray,
                    isw: np.ndarray, weights: np.ndarray, cfg: TrainConfig):
    """Graphs (loss_lya, loss_bnd, loss_stab); gradients reach vnet only."""
    N, n, ds = batch.s.shape
    s_flat = batch.s.reshape(N * n, ds)
    sq = np.sum(s_flat * s_flat, axis=1)
    v_flat = vnet.forward_t(Tensor(s_flat))
    bnd = ad.tmean(ad.add(ad.relu(ad.add(ad.mul(v_flat, -1.0), cfg.alpha1 * sq)),
                          ad.relu(ad.add(v_flat, -cfg.alpha2 * sq))))
    if n < 2:
        return ad.mul(bnd, cfg.omega_bnd), bnd, Tensor(np.zeros(()))
    v_mat = ad.reshape(v_flat, (N, n))
    v0 = ad.take_columns(v_mat, 0, 1)
    vk = ad.take_columns(v_mat, 1, n)
    beta = (1.0 - cfg.alpha3) ** np.arange(1, n)
    hinge = ad.relu(ad.mul(ad.add(vk, ad.mul(v0, -beta)), esl))
    stab = ad.tmean(ad.tsum(ad.mul(hinge, isw * weights), axis=1))
    lya = ad.add(ad.mul(bnd, cfg.omega_bnd), ad.mul(stab, cfg.omega_stab))
    return lya, bnd, stab


def q_targets(batch: SequenceBatch, policy: PolicyNet, q1_target: QNet,
              q2_target: QNet, alpha: float, gamma: float,
              rng: np.random.Generator) -> np.ndarray:
    """Soft Bellman targets for every transition, shape (N*n,); constants."""
    N, n, ds = batch.s_next.shape
    s2 = batch.s_next.reshape(N * n, ds)
    eps = rng.standard_normal((N * n, policy.action_dim))
    u2, logp2 = policy.sample_np(s2, eps)
    qmin = np.minimum(q1_target.forward_np(s2, u2),
                      q2_target.forward_np(s2, u2))
    live = 1.0 - batch.terminated.reshape(-1).astype(np.float64)
    return batch.reward.reshape(-1) + gamma * live * (qmin - alpha * logp2)


def softq_loss(qnet: QNet, s_flat: np.ndarray, u_flat: np.ndarray,
               y_flat: np.ndarray):
    q = qnet.forward_t(Tensor(s_flat), Tensor(u_flat))
    return ad.tmean(ad.square(ad.add(q, -y_flat)))


def policy_loss(policy: PolicyNet, q1: QNet, q2: QNet, batch: SequenceBatch,
                a_lambda: np.ndarray, alpha: float, cfg: TrainConfig,
                eps: np.ndarray):
    """Graph policy loss and the detached fresh log-densities it used.

    The entropy-regularized value term averages over every window state;
    the clipped decay surrogate applies at the first transition, where the
    stored behavior density is exact.  a_lambda enters as a constant.
    """
    N, n, ds = batch.s.shape
    s_flat = batch.s.reshape(N * n, ds)
    u_new, logp_new = policy.sample_t(s_flat, eps)
    qmin = ad.minimum(q1.forward_t(Tensor(s_flat), u_new),
                      q2.forward_t(Tensor(s_flat), u_new))
    sac = ad.tmean(ad.add(qmin, ad.mul(logp_new, -alpha)))
    if n < 2:
        return ad.mul(sac, -1.0), logp_new.data
    lp_first = policy.logp_t(batch.s[:, 0], batch.u[:, 0])
    rho = ad.exp(ad.add(lp_first, -batch.logp_behavior[:, 0]))
    surr = ad.minimum(ad.mul(rho, a_lambda),
                      ad.mul(ad.clip(rho, 1.0 - cfg.clip_eps,
                                     1.0 + cfg.clip_eps), a_lambda))
    return ad.mul(ad.add(sac, ad.tmean(surr)), -1.0), logp_new.data


def alpha_loss(log_alpha: Tensor, logp_detached: np.ndarray,
               target_entropy: float):
    """Temperature loss -alpha * (mean log pi + target entropy)."""
    gap = float(np.mean(logp_detached)) + target_entropy
    return ad.mul(ad.exp(log_alpha), -gap)


# ---------------------------------------------------------------- training

class MSACL:
    """Owns all mutable training state for one run."""

    def __init__(self, env: Env, cfg: TrainConfig):
        self.env = env
        self.cfg = cfg
        ds = env.spec.state_dim
        du = env.spec.action_dim
        base = cfg.seed
        self.policy = PolicyNet(ds, du, env.spec.action_low,
                                env.spec.action_high, seed=base + 1,
                                hidden=cfg.hidden)
        self.q1 = QNet(ds, du, seed=base + 2, hidden=cfg.hidden)
        self.q2 = QNet(ds, du, seed=base + 3, hidden=cfg.hidden)
        self.q1_target = QNet(ds, du, seed=base + 2, hidden=cfg.hidden)
        self.q2_target = QNet(ds, du, seed=base + 3, hidden=cfg.hidden)
        copy_params(self.q1_target.params, self.q1.params)
        copy_params(self.q2_target.params, self.q2.params)
        self.vnet = VNet(ds, seed=base + 4, hidden=cfg.hidden)
        self.log_alpha = Tensor(np.log(cfg.init_alpha), requires_grad=True)

        self.opt_pi = Adam(self.policy.params, lr=cfg.actor_lr)
        self.opt_q1 = Adam(self.q1.params, lr=cfg.critic_lr)
        self.opt_q2 = Adam(self.q2.params, lr=cfg.critic_lr)
        self.opt_v = Adam(self.vnet.params, lr=cfg.critic_lr)
        self.opt_alpha = Adam([self.log_alpha], lr=cfg.alpha_lr)

        self.collector = NStepCollector(cfg.n)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, cfg.warm_size)
        self.weights = lambda_weights(cfg.n, cfg.lam)
        self.target_entropy = (cfg.target_entropy if cfg.target_entropy
                               is not None else -float(du))
        self.rng = np.random.default_rng(cfg.seed)
        self.env_steps = 0
        self.iteration = 0
        self._updates = 0
        self._s = self.env.reset(seed=int(self.rng.integers(2 ** 31)))

    # -- data collection ---------------------------------------------------
    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha.data))

    def collect(self, steps: int):
        for _ in range(steps):
            raw = self.env.state
            eps = self.rng.standard_normal((1, self.env.spec.action_dim))
            u, logp = self.policy.sample_np(self._s[None, :], eps)
            res = self.env.step(u[0])
            window = self.collector.push(Transition(
                x=raw, u=u[0], reward=res.reward,
                logp_behavior=float(logp[0]), x_next=res.next_state,
                s=self._s, s_next=res.s, terminated=res.terminated))
            if window is not None:
                self.buffer.add(window)
            self.env_steps += 1
            if res.terminated or res.truncated:
                self._s = self.env.reset(seed=int(self.rng.integers(2 ** 31)))
                self.collector.clear()
            else:
                self._s = res.s

    # -- one optimization pass over a sampled batch -------------------------
    def _all_nets_zero(self):
        for p in (self.policy.params + self.q1.params + self.q2.params
                  + self.vnet.params + [self.log_alpha]):
            p.grad = None

    def update_step(self) -> dict:
        cfg = self.cfg
        batch = self.buffer.sample(cfg.batch_size, self.rng)
        N, n, ds = batch.s.shape
        s_flat = batch.s.reshape(N * n, ds)
        u_flat = batch.u.reshape(N * n, -1)
        self._updates += 1
        row = {"loss_lya": math.nan, "loss_bnd": math.nan,
               "loss_stab": math.nan, "loss_pi": math.nan,
               "mean_esl_positive_fraction": math.nan,
               "mean_A_lambda": math.nan}

        # certificate update
        train_v = cfg.omega_bnd != 0.0 or cfg.omega_stab != 0.0
        if train_v:
            if n >= 2:
                esl = compute_esl(batch.s, cfg.alpha1, cfg.alpha2, cfg.alpha3)
                logp_now = self.policy.logp_np(s_flat, u_flat).reshape(N, n)
                isw = is_clip(logp_now, batch.logp_behavior)
                row["mean_esl_positive_fraction"] = float(np.mean(esl > 0))
            else:
                esl = np.zeros((N, 0))
                isw = np.zeros((N, 0))
            lya, bnd, stab = lyapunov_losses(self.vnet, batch, esl, isw,
                                             self.weights, cfg)
            self._check_finite("loss_lya", lya)
            self._all_nets_zero()
            lya.backward()
            self.opt_v.step()
            row.update(loss_lya=float(lya.data), loss_bnd=float(bnd.data),
                       loss_stab=float(stab.data))

        # critic updates
        y = q_targets(batch, self.policy, self.q1_target, self.q2_target,
                      self.alpha, cfg.gamma, self.rng)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError("non-finite Bellman target")
        self._all_nets_zero()
        lq1 = softq_loss(self.q1, s_flat, u_flat, y)
        lq2 = softq_loss(self.q2, s_flat, u_flat, y)
        self._check_finite("loss_q1", lq1)
        self._check_finite("loss_q2", lq2)
        lq1.backward()
        lq2.backward()
        self.opt_q1.step()
        self.opt_q2.step()
        row.update(loss_q1=float(lq1.data), loss_q2=float(lq2.data))

        # delayed, compensated policy and temperature updates
        if self._updates % cfg.delay == 0:
            if n >= 2 and train_v:
                v_states = self.vnet.forward_np(s_flat).reshape(N, n)
                _, a_lam = stability_advantage(v_states, self.weights,
                                               cfg.alpha3)
                row["mean_A_lambda"] = float(np.mean(a_lam))
            else:
                a_lam = np.zeros(N)
            for _ in range(cfg.delay):
                eps = self.rng.standard_normal((N * n,
                                                self.env.spec.action_dim))
                lpi, logp_new = policy_loss(self.policy, self.q1, self.q2,
                                            batch, a_lam, self.alpha, cfg,
                                            eps)
                self._check_finite("loss_pi", lpi)
                self._all_nets_zero()
                lpi.backward()
                self.opt_pi.step()
                lal = alpha_loss(self.log_alpha, logp_new,
                                 self.target_entropy)
                self._all_nets_zero()
                lal.backward()
                self.opt_alpha.step()
            row["loss_pi"] = float(lpi.data)

        polyak_update(self.q1_target.params, self.q1.params, cfg.tau)
        polyak_update(self.q2_target.params, self.q2.params, cfg.tau)
        row["alpha"] = self.alpha
        return row

    def _check_finite(self, name: str, loss):
        if not np.all(np.isfinite(loss.data)):
            raise FloatingPointError(
                f"{name} is non-finite at iteration {self.iteration} "
                f"(env_steps={self.env_steps}, alpha={self.alpha})")

    # -- driver --------------------------------------------------------------
    def train_iteration(self) -> dict:
        """Collect, then update when warm; returns one log row."""
        self.iteration += 1
        self.collect(self.cfg.steps_per_iteration)
        row = {c: math.nan for c in LOG_COLUMNS}
        if self.buffer.warm:
            for _ in range(self.cfg.updates_per_iteration):
                row.update(self.update_step())
        row.update(iter=self.iteration, env_steps=self.env_steps,
                   alpha=self.alpha)
        return row
