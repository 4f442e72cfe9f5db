"""Policy evaluation: episode scoring, reach metrics, robustness sweeps.

An evaluation runs a fixed set of episodes under deterministic (mean)
actions, scores each by reward and cost normalized by the realized episode
length, and measures how reliably trajectories enter and hold small balls
around the origin of the generalized state.  Results are persisted as a
versioned JSON report so model selection and figure generation can run
long after training without touching the simulator again.

Per-episode initial states come from a seed stream derived from one
published seed stored in the report, so a report can be reproduced exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import envs

REPORT_SCHEMA = "msacl-eval-1"
GRID_SCHEMA = "msacl-grid-1"
TRAJ_SCHEMA = "msacl-traj-1"

EVAL_RADII = (0.2, 0.1, 0.05, 0.01)
DEFAULT_EVAL_SEED = 12345

_NORM_ORDS = {"l2": 2, "linf": np.inf}

# robustness protocol: for every benchmark, physical-parameter variants
# crossed with observation-noise magnitudes
ROBUSTNESS_GRID = {
    "vanderpol": {"params": ({"mu": 0.5}, {"mu": 1.5}), "sigmas": (0.5, 0.8)},
    "pendulum": {"params": ({"L": 0.5}, {"L": 1.0}), "sigmas": (0.5, 1.0)},
    "ductedfan": {"params": ({"m": 5.0}, {"m": 12.0}), "sigmas": (0.1, 0.3)},
    "twolink": {"params": ({"l1": 0.75}, {"l2": 1.5}), "sigmas": (0.1, 0.2)},
    "car_tracking": {"params": ({},), "sigmas": (0.1, 0.3)},
    "quadrotor_tracking": {"params": ({},), "sigmas": (0.01, 0.02)},
}


def _norm_ord(norm: str):
    try:
        return _NORM_ORDS[norm]
    except KeyError:
        raise ValueError(f"unknown norm {norm!r}; "
                         f"choose from {sorted(_NORM_ORDS)}") from None


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


# ---------------------------------------------------------------------------
# episodes


@dataclass(frozen=True)
class EpisodeResult:
    """One evaluation rollout: generalized-state trajectory plus scores."""

    states: np.ndarray                 # (steps+1, state_dim)
    mcr: float                         # reward sum / realized steps
    mcc: float                         # cost sum / realized steps
    steps: int
    terminated: bool
    seed: int | None
    raw_states: np.ndarray | None = None


def run_episode(env, policy, seed: int | None = None,
                deterministic: bool = True, max_steps: int | None = None,
                record_raw: bool = False) -> EpisodeResult:
    """Roll one episode and score it.

    Deterministic mode applies the squashed mean action; otherwise actions
    are sampled from the policy with a seed-derived noise stream.  A
    simulator blow-up ends the episode as a termination; the scores still
    average over the steps that did run.
    """
    s = env.reset(seed=seed)
    states = [s.copy()]
    raw = [env.state] if record_raw else None
    eps_rng = np.random.default_rng(None if seed is None else seed + 1)
    limit = env.spec.max_episode_steps if max_steps is None else max_steps
    total_r = 0.0
    total_c = 0.0
    steps = 0
    terminated = False
    while steps < limit:
        if deterministic:
            u = policy.mean_action_np(s[None])[0]
        else:
            eps = eps_rng.standard_normal((1, env.spec.action_dim))
            u, _ = policy.sample_np(s[None], eps)
            u = u[0]
        try:
            res = env.step(u)
        except FloatingPointError:
            terminated = True
            break
        total_r += res.reward
        total_c += res.cost
        steps += 1
        s = res.s
        states.append(s.copy())
        if raw is not None:
            raw.append(res.next_state.copy())
        if res.terminated:
            terminated = True
            break
        if res.truncated:
            break
    realized = max(steps, 1)
    return EpisodeResult(
        states=np.asarray(states), mcr=total_r / realized,
        mcc=total_c / realized, steps=steps, terminated=terminated,
        seed=seed, raw_states=None if raw is None else np.asarray(raw))


# ---------------------------------------------------------------------------
# reach metrics


def reach_metrics(trajectories, radius: float, norm: str = "l2"):
    """(RR, ARS, AHS) of a trajectory set for one radius.

    RR is the fraction of trajectories whose state ever enters the ball.
    Among those, ARS averages the first-entry step (state 0 counts) and AHS
    averages the number of in-ball states from first entry to the end, so a
    trajectory that enters and stays contributes length - entry + 1.
    ARS and AHS are None when nothing reaches.
    """
    if not trajectories:
        raise ValueError("no trajectories given")
    ord_ = _norm_ord(norm)
    first = []
    hold = []
    for traj in trajectories:
        d = np.linalg.norm(np.asarray(traj, dtype=np.float64), ord=ord_,
                           axis=1)
        inside = d <= radius
        if inside.any():
            t0 = int(np.argmax(inside))
            first.append(float(t0))
            hold.append(float(inside[t0:].sum()))
    rr = len(first) / len(trajectories)
    if not first:
        return rr, None, None
    return rr, float(np.mean(first)), float(np.mean(hold))


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class EvalReport:
    """Aggregated evaluation outcome, serializable as versioned JSON."""

    env_id: str
    reference: str | None
    noise_sigma: float
    params: dict
    episodes: int
    seed: int
    episode_seeds: list
    deterministic: bool
    norm: str
    amcr: float
    amcr_std: float
    amcc: float
    amcc_std: float
    reach: dict
    mcr: list
    mcc: list
    episode_steps: list
    terminated: list
    init_states: list
    checkpoint: str | None = None
    env_steps: int | None = None
    extra: dict = field(default_factory=dict)

    schema = REPORT_SCHEMA

    def to_dict(self) -> dict:
        d = {"schema": self.schema}
        for name in ("env_id", "reference", "noise_sigma", "params",
                     "episodes", "seed", "episode_seeds", "deterministic",
                     "norm", "checkpoint", "env_steps", "amcr", "amcr_std",
                     "amcc", "amcc_std", "reach", "mcr", "mcc",
                     "episode_steps", "terminated", "init_states", "extra"):
            d[name] = getattr(self, name)
        return d


def evaluate(env, policy, episodes: int = 100, seed: int = DEFAULT_EVAL_SEED,
             deterministic: bool = True, radii=EVAL_RADII, norm: str = "l2",
             max_steps: int | None = None, record_raw: bool = False,
             checkpoint: str | None = None, env_steps: int | None = None):
    """Run the episode protocol on one env and aggregate an EvalReport.

    Returns (report, episode results).  The per-episode reset seeds are
    drawn once from `seed` and recorded, making the report reproducible
    bit for bit.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    seeds = np.random.default_rng(seed).integers(0, 2 ** 31 - 1,
                                                 size=episodes)
    results = [run_episode(env, policy, seed=int(sd),
                           deterministic=deterministic, max_steps=max_steps,
                           record_raw=record_raw)
               for sd in seeds]
    trajs = [r.states for r in results]
    reach = {}
    for radius in radii:
        rr, ars, ahs = reach_metrics(trajs, radius, norm=norm)
        reach[f"{radius:g}"] = {"rr": rr, "ars": ars, "ahs": ahs}
    mcr = [r.mcr for r in results]
    mcc = [r.mcc for r in results]
    ref = getattr(env, "reference", None)
    report = EvalReport(
        env_id=env.spec.id,
        reference=None if ref is None else ref.id,
        noise_sigma=float(env.noise_sigma),
        params={k: _jsonable(v) for k, v in env.params.items()},
        episodes=episodes,
        seed=int(seed),
        episode_seeds=[int(sd) for sd in seeds],
        deterministic=bool(deterministic),
        norm=norm,
        amcr=float(np.mean(mcr)),
        amcr_std=float(np.std(mcr)),
        amcc=float(np.mean(mcc)),
        amcc_std=float(np.std(mcc)),
        reach=reach,
        mcr=mcr,
        mcc=mcc,
        episode_steps=[r.steps for r in results],
        terminated=[bool(r.terminated) for r in results],
        init_states=[r.states[0].tolist() for r in results],
        checkpoint=checkpoint,
        env_steps=env_steps)
    return report, results


def write_report(path, report: EvalReport) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")


def load_report(path) -> dict:
    d = json.loads(Path(path).read_text())
    if d.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"{path}: expected schema {REPORT_SCHEMA!r}, "
                         f"got {d.get('schema')!r}")
    return d


# ---------------------------------------------------------------------------
# model selection


@dataclass(frozen=True)
class BestPolicy:
    checkpoint: Path
    amcr: float
    env_steps: int
    run_dir: Path


def select_optimal_policy(run_dirs) -> BestPolicy:
    """Pick the checkpoint with the highest evaluation AMCR across runs.

    Scans eval_*.json records in each run directory; ties go to the record
    with fewer training env steps.  No records anywhere is an error.
    """
    best = None
    for rd in run_dirs:
        rd = Path(rd)
        for rec_path in sorted(rd.glob("eval_*.json")):
            d = load_report(rec_path)
            cand = BestPolicy(checkpoint=rd / d["checkpoint"],
                              amcr=float(d["amcr"]),
                              env_steps=int(d["env_steps"]), run_dir=rd)
            if (best is None or cand.amcr > best.amcr
                    or (cand.amcr == best.amcr
                        and cand.env_steps < best.env_steps)):
                best = cand
    if best is None:
        raise FileNotFoundError(
            "no evaluation records (eval_*.json) under the given run "
            "directories")
    return best


# ---------------------------------------------------------------------------
# robustness protocol


def robustness_eval(policy, env_id: str, episodes: int = 100,
                    seed: int = DEFAULT_EVAL_SEED, grid: dict | None = None,
                    reference: str | None = None, deterministic: bool = True,
                    max_steps: int | None = None, radii=EVAL_RADII,
                    norm: str = "l2") -> list:
    """Evaluate one policy over the parameter-variant x noise grid.

    Each cell rebuilds the env with the overrides applied and runs the
    full episode protocol; unknown parameter names fail in the env
    constructor before anything runs.
    """
    if grid is None:
        grid = ROBUSTNESS_GRID[env_id]
    cells = []
    for overrides in grid["params"]:
        for sigma in grid["sigmas"]:
            env = envs.make(env_id, noise_sigma=sigma,
                            params=dict(overrides), reference=reference)
            report, _ = evaluate(env, policy, episodes=episodes, seed=seed,
                                 deterministic=deterministic,
                                 max_steps=max_steps, radii=radii, norm=norm)
            cells.append({"overrides": dict(overrides),
                          "noise_sigma": float(sigma), "report": report})
    return cells


# ---------------------------------------------------------------------------
# exponential-envelope check


@dataclass(frozen=True)
class StabilityCheck:
    """Per-trajectory verdicts against the decay envelope c * eta^t * |s_0|."""

    c: float
    eta: float
    satisfied: tuple
    fraction: float
    worst_margin: float                # max over all steps of |s_t| - envelope
    worst_episode: int
    worst_step: int


def exp_stability_check(trajectories, alpha1: float = 1.0,
                        alpha2: float = 2.0, alpha3: float = 0.15,
                        norm: str = "l2") -> StabilityCheck:
    if not trajectories:
        raise ValueError("no trajectories given")
    ord_ = _norm_ord(norm)
    c = float(np.sqrt(alpha2 / alpha1))
    eta = float(np.sqrt(1.0 - alpha3))
    flags = []
    worst = (-np.inf, -1, -1)
    for i, traj in enumerate(trajectories):
        d = np.linalg.norm(np.asarray(traj, dtype=np.float64), ord=ord_,
                           axis=1)
        margin = d - c * eta ** np.arange(len(d)) * d[0]
        k = int(np.argmax(margin))
        if margin[k] > worst[0]:
            worst = (float(margin[k]), i, k)
        flags.append(bool(np.all(margin <= 0.0)))
    return StabilityCheck(c=c, eta=eta, satisfied=tuple(flags),
                          fraction=float(np.mean(flags)),
                          worst_margin=worst[0], worst_episode=worst[1],
                          worst_step=worst[2])


# ---------------------------------------------------------------------------
# certificate grids


def lyapunov_grid(vnet, state_dim: int, axes=(0, 1), res: int = 101,
                  lo: float = -2.0, hi: float = 2.0):
    """Certificate values on a uniform 2-D slice through the origin.

    Rows sweep the first axis, columns the second; every other state
    component is held at zero.  Returns (matrix, row values, col values).
    """
    i, j = axes
    if not (0 <= i < state_dim and 0 <= j < state_dim):
        raise ValueError(f"axes {axes} out of range for state_dim {state_dim}")
    if i == j:
        raise ValueError("axes must name two different components")
    if res < 1:
        raise ValueError("res must be >= 1")
    if not lo < hi:
        raise ValueError("need lo < hi")
    vals = (np.array([(lo + hi) / 2.0]) if res == 1
            else np.linspace(lo, hi, res))
    states = np.zeros((res * res, state_dim))
    states[:, i] = np.repeat(vals, res)
    states[:, j] = np.tile(vals, res)
    mat = np.asarray(vnet.forward_np(states)).reshape(res, res)
    return mat, vals, vals.copy()


def write_grid_csv(path, matrix, meta: dict) -> None:
    """CSV matrix with a commented axes-metadata header block."""
    matrix = np.asarray(matrix)
    lines = [f"# {GRID_SCHEMA}"]
    for key, val in meta.items():
        lines.append(f"# {key}: {_jsonable(val)}")
    for row in matrix:
        lines.append(",".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_meta_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_grid_csv(path):
    """Inverse of write_grid_csv: (matrix, metadata dict)."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != f"# {GRID_SCHEMA}":
        raise ValueError(f"{path}: missing {GRID_SCHEMA} header")
    meta = {}
    k = 1
    while k < len(lines) and lines[k].startswith("#"):
        body = lines[k][1:].strip()
        if ":" in body:
            key, val = body.split(":", 1)
            meta[key.strip()] = _parse_meta_value(val.strip())
        k += 1
    rows = [np.fromstring(line, sep=",") for line in lines[k:] if line]
    return np.asarray(rows), meta


# ---------------------------------------------------------------------------
# trajectory export


def write_trajectory_csv(path, env, result: EpisodeResult) -> None:
    """One episode as CSV: states, error norm and, for tracking tasks,
    absolute and reference positions per control step."""
    if result.raw_states is None:
        raise ValueError("episode was recorded without raw states; "
                         "rerun with record_raw=True")
    dt = env.spec.control_dt
    tracking = env.spec.is_tracking
    ds = result.states.shape[1]
    pdim = 0
    if tracking:
        pdim = len(env.absolute_position(result.raw_states[0], 0.0))
    cols = ["step", "time"]
    cols += [f"pos_{i}" for i in range(pdim)]
    cols += [f"ref_{i}" for i in range(pdim)]
    cols += [f"s_{i}" for i in range(ds)]
    cols.append("err_norm")

    lines = [f"# {TRAJ_SCHEMA}", f"# env_id: {env.spec.id}"]
    if tracking:
        lines.append(f"# reference: {env.reference.id}")
    lines.append(f"# control_dt: {dt!r}")
    lines.append(",".join(cols))
    for t in range(len(result.states)):
        time = t * dt
        row = [float(t), time]
        if tracking:
            row += list(env.absolute_position(result.raw_states[t], time))
            row += list(env.reference.position(time))
        s = result.states[t]
        row += list(s)
        row.append(float(np.linalg.norm(s)))
        lines.append(",".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
