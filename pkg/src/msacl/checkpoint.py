"""Versioned binary container for trained parameters.

Layout: an ascii magic line, an ascii byte-length line, a JSON header, then
the raw little-endian float64 parameter arrays concatenated in the order the
header's manifest declares.  The header carries everything needed to rebuild
the networks without the training environment: dimensions, action box,
hidden width, temperature, step counters and the resolved run config.
"""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .nets import PolicyNet, QNet, VNet

MAGIC = "MSACL-CKPT-1"

_GROUPS = ("policy", "q1", "q2", "q1_target", "q2_target", "v")


def _group_params(agent):
    return {"policy": agent.policy.params, "q1": agent.q1.params,
            "q2": agent.q2.params, "q1_target": agent.q1_target.params,
            "q2_target": agent.q2_target.params, "v": agent.vnet.params}


def save_checkpoint(path, agent, extra_config: dict | None = None) -> None:
    """Write the agent's parameters and counters to one file."""
    groups = _group_params(agent)
    manifest = []
    blobs = []
    for group in _GROUPS:
        for i, p in enumerate(groups[group]):
            manifest.append({"name": f"{group}.{i}",
                             "shape": list(p.data.shape)})
            blobs.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    env = agent.env
    header = {
        "format": MAGIC,
        "env_id": env.spec.id,
        "reference": getattr(getattr(env, "reference", None), "id", None),
        "state_dim": env.spec.state_dim,
        "action_dim": env.spec.action_dim,
        "action_low": env.spec.action_low.tolist(),
        "action_high": env.spec.action_high.tolist(),
        "hidden": agent.cfg.hidden,
        "alpha": agent.alpha,
        "log_alpha": float(agent.log_alpha.data),
        "env_steps": agent.env_steps,
        "iteration": agent.iteration,
        "train_config": asdict(agent.cfg),
        "run_config": extra_config or {},
        "arrays": manifest,
    }
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC.encode() + b"\n")
        f.write(str(len(head)).encode() + b"\n")
        f.write(head)
        for b in blobs:
            f.write(b)


class LoadedCheckpoint:
    """Parsed container; parameters rebuild into fresh networks on demand."""

    def __init__(self, header: dict, arrays: dict):
        self.header = header
        self.arrays = arrays

    @property
    def alpha(self) -> float:
        return float(self.header["alpha"])

    @property
    def env_id(self) -> str:
        return self.header["env_id"]

    @property
    def env_steps(self) -> int:
        return int(self.header["env_steps"])

    def _load_group(self, net, group: str):
        params = net.params
        want = [k for k in self.arrays if k.startswith(group + ".")]
        if len(want) != len(params):
            raise ValueError(f"checkpoint group {group!r} has {len(want)} "
                             f"arrays, network needs {len(params)}")
        for i, p in enumerate(params):
            arr = self.arrays[f"{group}.{i}"]
            if arr.shape != p.data.shape:
                raise ValueError(f"{group}.{i}: shape {arr.shape} does not "
                                 f"match network shape {p.data.shape}")
            p.data[...] = arr
        return net

    def build_policy(self) -> PolicyNet:
        h = self.header
        net = PolicyNet(h["state_dim"], h["action_dim"], h["action_low"],
                        h["action_high"], seed=0, hidden=h["hidden"])
        return self._load_group(net, "policy")

    def build_vnet(self) -> VNet:
        h = self.header
        return self._load_group(VNet(h["state_dim"], seed=0,
                                     hidden=h["hidden"]), "v")

    def build_qnets(self):
        h = self.header
        q1 = QNet(h["state_dim"], h["action_dim"], seed=0, hidden=h["hidden"])
        q2 = QNet(h["state_dim"], h["action_dim"], seed=0, hidden=h["hidden"])
        return self._load_group(q1, "q1"), self._load_group(q2, "q2")


def load_checkpoint(path) -> LoadedCheckpoint:
    with open(path, "rb") as f:
        magic = f.readline().strip().decode()
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint file (magic {magic!r})")
        head_len = int(f.readline().strip())
        header = json.loads(f.read(head_len))
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError("checkpoint truncated")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(
                shape).copy()
        trailing = f.read(1)
    if trailing:
        raise ValueError("trailing bytes after declared arrays")
    return LoadedCheckpoint(header, arrays)
