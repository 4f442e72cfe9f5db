"""Function approximators and their optimizer.

All networks are two-hidden-layer ReLU perceptrons (256 units each) over
float64 arrays.  Every network owns its parameters as autodiff leaves and
exposes two forward paths:

  * a graph path (``*_t`` methods) used inside losses, and
  * a plain numpy path used for data collection, bootstrap targets and
    evaluation, where no gradients are wanted.

Both paths implement the same arithmetic, so their outputs agree to
round-off.

The policy is a diagonal Gaussian squashed through tanh and rescaled to the
action box.  Log-densities account for the squashing via the standard
change-of-variables correction with a 1e-6 floor inside the log.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

HIDDEN = 256
LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_LOG_2PI = float(np.log(2.0 * np.pi))
_SQUASH_EPS = 1e-6
# keep atanh finite when a stored action sits on the box boundary
_ATANH_GUARD = 1.0 - 1e-9


def _init_layer(rng: np.random.Generator, fan_in: int, fan_out: int,
                out_scale: float | None = None):
    """Uniform fan-in init; output layers use a small fixed range instead."""
    bound = out_scale if out_scale is not None else 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    b = rng.uniform(-bound, bound, size=fan_out)
    return Tensor(w, requires_grad=True), Tensor(b, requires_grad=True)


class Mlp:
    """Plain ReLU perceptron: sizes[0] -> ... -> sizes[-1], linear output."""

    def __init__(self, sizes, rng: np.random.Generator, out_scale: float = 3e-3):
        self.sizes = list(sizes)
        self.layers = []
        for i in range(len(sizes) - 1):
            last = i == len(sizes) - 2
            self.layers.append(_init_layer(rng, sizes[i], sizes[i + 1],
                                           out_scale if last else None))

    @property
    def params(self):
        out = []
        for w, b in self.layers:
            out.extend((w, b))
        return out

    def forward_t(self, x: Tensor) -> Tensor:
        h = x
        for i, (w, b) in enumerate(self.layers):
            h = ad.add(ad.matmul(h, w), b)
            if i < len(self.layers) - 1:
                h = ad.relu(h)
        return h

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        h = x
        for i, (w, b) in enumerate(self.layers):
            h = h @ w.data + b.data
            if i < len(self.layers) - 1:
                h = np.maximum(h, 0.0)
        return h


def zero_grads(params):
    for p in params:
        p.zero_grad()


def polyak_update(target_params, online_params, tau: float):
    """target <- (1 - tau) * target + tau * online, in place."""
    for t, o in zip(target_params, online_params):
        t.data *= 1.0 - tau
        t.data += tau * o.data


def copy_params(dst_params, src_params):
    for d, s in zip(dst_params, src_params):
        d.data[...] = s.data


class Adam:
    """Adam with bias correction; update order is fixed for reproducibility."""

    def __init__(self, params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[i] / b1t
            vhat = self.v[i] / b2t
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ----------------------------------------------------------------------


class QNet:
    """State-action value: (s, u) -> scalar."""

    def __init__(self, state_dim: int, action_dim: int, seed: int,
                 hidden: int = HIDDEN):
        rng = np.random.default_rng(seed)
        self.net = Mlp([state_dim + action_dim, hidden, hidden, 1], rng)

    @property
    def params(self):
        return self.net.params

    def forward_t(self, s: Tensor, u: Tensor) -> Tensor:
        x = ad.concat([s, u], axis=1)
        return ad.reshape(self.net.forward_t(x), (-1,))

    def forward_np(self, s: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.net.forward_np(np.concatenate([s, u], axis=1))[:, 0]


class VNet:
    """Certificate candidate: s -> softplus(mlp(s)), nonnegative everywhere."""

    def __init__(self, state_dim: int, seed: int, hidden: int = HIDDEN):
        rng = np.random.default_rng(seed)
        self.net = Mlp([state_dim, hidden, hidden, 1], rng)

    @property
    def params(self):
        return self.net.params

    def forward_t(self, s: Tensor) -> Tensor:
        return ad.reshape(ad.softplus(self.net.forward_t(s)), (-1,))

    def forward_np(self, s: np.ndarray) -> np.ndarray:
        return np.logaddexp(0.0, self.net.forward_np(s)[:, 0])


class PolicyNet:
    """Squashed-Gaussian actor over a box action space.

    The trunk feeds separate mean and log-std heads.  Sampling uses the
    reparameterization u = mid + half * tanh(mu + std * eps), so pathwise
    gradients flow through both heads.
    """

    def __init__(self, state_dim: int, action_dim: int,
                 action_low, action_high, seed: int, hidden: int = HIDDEN):
        rng = np.random.default_rng(seed)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.low = np.asarray(action_low, dtype=np.float64)
        self.high = np.asarray(action_high, dtype=np.float64)
        self.mid = 0.5 * (self.low + self.high)
        self.half = 0.5 * (self.high - self.low)
        self.trunk = Mlp([state_dim, hidden, hidden], rng)
        self.mean_head = _init_layer(rng, hidden, action_dim, out_scale=3e-3)
        self.logstd_head = _init_layer(rng, hidden, action_dim, out_scale=3e-3)

    @property
    def params(self):
        return self.trunk.params + list(self.mean_head) + list(self.logstd_head)

    # ---- numpy path ---------------------------------------------------
    def _heads_np(self, s: np.ndarray):
        h = s
        for w, b in self.trunk.layers:
            h = np.maximum(h @ w.data + b.data, 0.0)
        mu = h @ self.mean_head[0].data + self.mean_head[1].data
        logstd = h @ self.logstd_head[0].data + self.logstd_head[1].data
        return mu, np.clip(logstd, LOG_STD_MIN, LOG_STD_MAX)

    def sample_np(self, s: np.ndarray, eps: np.ndarray):
        """Action and its log-density for given standard-normal draws."""
        mu, logstd = self._heads_np(s)
        z = mu + np.exp(logstd) * eps
        t = np.tanh(z)
        u = self.mid + self.half * t
        gauss = -0.5 * eps * eps - logstd - 0.5 * _LOG_2PI
        corr = np.log(self.half * (1.0 - t * t) + _SQUASH_EPS)
        return u, (gauss - corr).sum(axis=1)

    def mean_action_np(self, s: np.ndarray) -> np.ndarray:
        mu, _ = self._heads_np(s)
        return self.mid + self.half * np.tanh(mu)

    def logp_np(self, s: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Log-density of stored box actions under the current policy."""
        mu, logstd = self._heads_np(s)
        t = np.clip((u - self.mid) / self.half, -_ATANH_GUARD, _ATANH_GUARD)
        z = np.arctanh(t)
        inv_std = np.exp(-logstd)
        gauss = -0.5 * ((z - mu) * inv_std) ** 2 - logstd - 0.5 * _LOG_2PI
        corr = np.log(self.half * (1.0 - t * t) + _SQUASH_EPS)
        return (gauss - corr).sum(axis=1)

    # ---- graph path ---------------------------------------------------
    def _heads_t(self, s: Tensor):
        h = s
        for w, b in self.trunk.layers:
            h = ad.relu(ad.add(ad.matmul(h, w), b))
        mu = ad.add(ad.matmul(h, self.mean_head[0]), self.mean_head[1])
        logstd = ad.add(ad.matmul(h, self.logstd_head[0]), self.logstd_head[1])
        return mu, ad.clip(logstd, LOG_STD_MIN, LOG_STD_MAX)

    def sample_t(self, s: np.ndarray, eps: np.ndarray):
        """Reparameterized action tensor (B, du) and log-density tensor (B,)."""
        mu, logstd = self._heads_t(Tensor(s))
        z = ad.add(mu, ad.mul(ad.exp(logstd), eps))
        t = ad.tanh(z)
        u = ad.add(ad.mul(t, self.half), self.mid)
        # density of the reparameterized draw: the Gaussian part reduces to
        # -0.5 eps^2 - logstd, the squash correction keeps its z dependence
        gauss = ad.add(ad.mul(logstd, -1.0), -0.5 * eps * eps - 0.5 * _LOG_2PI)
        corr = ad.log(ad.add(ad.mul(ad.add(ad.mul(ad.square(t), -1.0), 1.0),
                                    self.half), _SQUASH_EPS))
        logp = ad.tsum(ad.add(gauss, ad.mul(corr, -1.0)), axis=1)
        return u, logp

    def logp_t(self, s: np.ndarray, u: np.ndarray) -> Tensor:
        """Graph log-density of stored actions; matches logp_np exactly."""
        mu, logstd = self._heads_t(Tensor(s))
        t = np.clip((u - self.mid) / self.half, -_ATANH_GUARD, _ATANH_GUARD)
        z = np.arctanh(t)
        diff = ad.mul(ad.add(ad.mul(mu, -1.0), z), ad.exp(ad.mul(logstd, -1.0)))
        gauss = ad.add(ad.mul(ad.square(diff), -0.5),
                       ad.add(ad.mul(logstd, -1.0), -0.5 * _LOG_2PI))
        corr = np.log(self.half * (1.0 - t * t) + _SQUASH_EPS)
        return ad.tsum(ad.add(gauss, -corr), axis=1)
