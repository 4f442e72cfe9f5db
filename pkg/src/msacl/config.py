"""Experiment configs: flat dotted key-value files and run-dir addressing.

A config file is plain text, one `section.key = value` per line, with `#`
comments.  Sections: `env.*` picks and perturbs the benchmark, `train.*`
maps onto TrainConfig, `run.*` scopes the budget/seeds/output root and
`eval.*` the periodic evaluation protocol.  Unknown keys are errors so a
typo cannot silently fall back to a default.

Run directories are named by env id, a hash of the resolved config (seeds
and output root excluded) and the seed, so re-running a config can never
silently overwrite a different experiment.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .evaluation import DEFAULT_EVAL_SEED, EVAL_RADII
from .learner import TrainConfig

_TRAIN_FIELDS = {f.name: f for f in fields(TrainConfig)}


@dataclass(frozen=True)
class RunConfig:
    """One experiment: env choice, hyperparameters and artifact plumbing."""

    env_id: str
    budget: int                         # total env steps per run
    noise_sigma: float = 0.0
    reference: str | None = None
    env_params: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: tuple = (0,)
    out_root: str = "runs"
    eval_interval: int = 100_000
    eval_episodes: int = 100
    eval_seed: int = DEFAULT_EVAL_SEED
    # optional early finish: once a periodic report clears every configured
    # bar the run stops, keeping the budget an upper bound
    stop_rr: float | None = None
    stop_mcr: float | None = None
    stop_radius: float = 0.1

    def __post_init__(self):
        if not self.env_id:
            raise ValueError("missing required key env.id")
        if self.budget < 1:
            raise ValueError("run.budget must be a positive step count")
        if not self.seeds:
            raise ValueError("run.seeds must name at least one seed")
        if self.eval_interval < 1:
            raise ValueError("eval.interval must be >= 1")
        if self.eval_episodes < 1:
            raise ValueError("eval.episodes must be >= 1")
        if self.stop_radius not in EVAL_RADII:
            raise ValueError(f"eval.stop_radius must be one of {EVAL_RADII}")


def _convert_train(key: str, name: str, text: str):
    ftype = _TRAIN_FIELDS[name].type
    try:
        if "None" in ftype and text.lower() == "none":
            return None
        if ftype.startswith("int"):
            return int(text)
        if ftype.startswith("float"):
            return float(text)
    except ValueError:
        raise ValueError(f"{key}: cannot parse {text!r} as {ftype}") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', "
                             f"got {line!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{lineno}: empty key")
        if not val:
            raise ValueError(f"{source}:{lineno}: empty value for key "
                             f"{key!r}")
        if key in entries:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        entries[key] = val

    kw = {"env_id": "", "budget": 0}
    env_params = {}
    train_kwargs = {}

    def opt_float(s):
        return None if s == "none" else float(s)

    scalar = {
        "env.id": ("env_id", str),
        "env.noise_sigma": ("noise_sigma", float),
        "env.reference": ("reference", str),
        "run.budget": ("budget", int),
        "run.out": ("out_root", str),
        "eval.interval": ("eval_interval", int),
        "eval.episodes": ("eval_episodes", int),
        "eval.seed": ("eval_seed", int),
        "eval.stop_rr": ("stop_rr", opt_float),
        "eval.stop_mcr": ("stop_mcr", opt_float),
        "eval.stop_radius": ("stop_radius", float),
    }
    for key, val in entries.items():
        if key in scalar:
            name, cast = scalar[key]
            try:
                kw[name] = cast(val)
            except ValueError:
                raise ValueError(f"{source}: {key}: cannot parse {val!r} "
                                 f"as {cast.__name__}") from None
        elif key.startswith("env.param."):
            env_params[key[len("env.param."):]] = float(val)
        elif key.startswith("train."):
            name = key[len("train."):]
            if name == "seed":
                raise ValueError(f"{source}: {key} is fixed per run; "
                                 "list seeds under run.seeds instead")
            if name not in _TRAIN_FIELDS:
                raise ValueError(f"{source}: unknown key {key!r}")
            train_kwargs[name] = _convert_train(key, name, val)
        elif key == "run.seeds":
            try:
                kw["seeds"] = tuple(int(s) for s in val.split(","))
            except ValueError:
                raise ValueError(f"{source}: run.seeds: expected comma-"
                                 f"separated integers, got {val!r}") from None
        else:
            raise ValueError(f"{source}: unknown key {key!r}")
    try:
        train = TrainConfig(**train_kwargs)
    except AssertionError as exc:
        raise ValueError(f"{source}: invalid training configuration "
                         f"({exc or 'constraint violated'})") from None
    return RunConfig(env_params=env_params, train=train, **kw)


def parse_config(path) -> RunConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), source=str(path))


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def canonical_text(cfg: RunConfig, seeds=None) -> str:
    """Resolved config as re-parseable text with every default spelled out."""
    seeds = cfg.seeds if seeds is None else tuple(seeds)
    lines = [f"env.id = {cfg.env_id}",
             f"env.noise_sigma = {_fmt(cfg.noise_sigma)}"]
    if cfg.reference is not None:
        lines.append(f"env.reference = {cfg.reference}")
    for name in sorted(cfg.env_params):
        lines.append(f"env.param.{name} = {_fmt(cfg.env_params[name])}")
    for f in fields(TrainConfig):
        if f.name == "seed":
            continue
        lines.append(f"train.{f.name} = {_fmt(getattr(cfg.train, f.name))}")
    lines.append(f"run.budget = {cfg.budget}")
    if seeds:
        lines.append(f"run.seeds = {','.join(str(s) for s in seeds)}")
    lines.append(f"run.out = {cfg.out_root}")
    lines.append(f"eval.interval = {cfg.eval_interval}")
    lines.append(f"eval.episodes = {cfg.eval_episodes}")
    lines.append(f"eval.seed = {cfg.eval_seed}")
    lines.append(f"eval.stop_rr = {_fmt(cfg.stop_rr)}")
    lines.append(f"eval.stop_mcr = {_fmt(cfg.stop_mcr)}")
    lines.append(f"eval.stop_radius = {_fmt(cfg.stop_radius)}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    """Digest of everything experiment-defining (seeds and out root are not)."""
    text = canonical_text(cfg, seeds=())
    kept = [l for l in text.splitlines() if not l.startswith("run.out")]
    return hashlib.sha256("\n".join(kept).encode()).hexdigest()[:10]


def run_dir_name(cfg: RunConfig, seed: int) -> str:
    return f"{cfg.env_id}-{config_hash(cfg)}-s{seed}"


def resolve_out_root(cfg: RunConfig, override=None) -> Path:
    """Flag beats the MSACL_RUNS env var beats the config file."""
    return Path(override or os.environ.get("MSACL_RUNS") or cfg.out_root)


def with_n(cfg: RunConfig, n: int) -> RunConfig:
    return replace(cfg, train=replace(cfg.train, n=n))
