"""Command-line entry point: train | eval | sweep-n | robustness | grid | select-best.

Every command reads and writes the documented artifact formats (config
snapshots, iteration CSV logs, binary checkpoints, JSON eval reports, CSV
matrices), so downstream tooling never needs to import the trainer.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import envs
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (RunConfig, canonical_text, config_hash, parse_config,
                     resolve_out_root, run_dir_name, with_n)
from .evaluation import (DEFAULT_EVAL_SEED, EVAL_RADII, evaluate, load_report,
                         lyapunov_grid, robustness_eval, select_optimal_policy,
                         write_grid_csv, write_report, write_trajectory_csv)
from .learner import LOG_COLUMNS, MSACL


def _fmt_row(row: dict) -> str:
    parts = []
    for name in LOG_COLUMNS:
        v = row[name]
        if name in ("iter", "env_steps"):
            parts.append(str(int(v)))
        else:
            parts.append(repr(float(v)))
    return ",".join(parts)


def _make_env(cfg: RunConfig):
    return envs.make(cfg.env_id, noise_sigma=cfg.noise_sigma,
                     params=dict(cfg.env_params) or None,
                     reference=cfg.reference)


def _snapshot(run_dir: Path, agent, cfg: RunConfig, seed: int):
    tag = f"{agent.env_steps:09d}"
    ckpt_name = f"ckpt_{tag}.bin"
    save_checkpoint(run_dir / ckpt_name, agent, extra_config={
        "config_hash": config_hash(cfg), "seed": seed, "budget": cfg.budget,
        "env_params": cfg.env_params, "noise_sigma": cfg.noise_sigma,
        "reference": cfg.reference})
    report, _ = evaluate(_make_env(cfg), agent.policy,
                         episodes=cfg.eval_episodes, seed=cfg.eval_seed,
                         checkpoint=ckpt_name, env_steps=agent.env_steps)
    write_report(run_dir / f"eval_{tag}.json", report)
    return report


def _stop_bars_met(cfg: RunConfig, report) -> bool:
    if cfg.stop_rr is None and cfg.stop_mcr is None:
        return False
    if cfg.stop_rr is not None:
        if report.reach[f"{cfg.stop_radius:g}"]["rr"] < cfg.stop_rr:
            return False
    if cfg.stop_mcr is not None and report.amcr <= cfg.stop_mcr:
        return False
    return True


def run_training(cfg: RunConfig, seed: int, out_root: Path) -> Path:
    """Train one seed to the step budget, leaving a self-contained run dir."""
    out_root.mkdir(parents=True, exist_ok=True)
    run_dir = out_root / run_dir_name(cfg, seed)
    run_dir.mkdir(exist_ok=False)
    (run_dir / "config.txt").write_text(canonical_text(cfg, seeds=(seed,)))

    agent = MSACL(_make_env(cfg), replace(cfg.train, seed=seed))
    next_eval = cfg.eval_interval
    snapped_at = -1
    with open(run_dir / "train_log.csv", "w") as log:
        log.write(",".join(LOG_COLUMNS) + "\n")
        while agent.env_steps < cfg.budget:
            row = agent.train_iteration()
            log.write(_fmt_row(row) + "\n")
            log.flush()
            due = (agent.env_steps >= next_eval
                   or agent.env_steps >= cfg.budget)
            if due and agent.env_steps != snapped_at:
                report = _snapshot(run_dir, agent, cfg, seed)
                snapped_at = agent.env_steps
                while next_eval <= agent.env_steps:
                    next_eval += cfg.eval_interval
                if _stop_bars_met(cfg, report):
                    break
    return run_dir


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = parse_config(args.config)
    out_root = resolve_out_root(cfg, args.out)
    for seed in cfg.seeds:
        run_dir = run_training(cfg, seed, out_root)
        print(run_dir)
    return 0


def _parse_param_flags(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ValueError(f"--param expects name=value, got {pair!r}")
        name, val = pair.split("=", 1)
        out[name.strip()] = float(val)
    return out


def cmd_eval(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    policy = ck.build_policy()
    header = ck.header
    params = dict(header.get("run_config", {}).get("env_params") or {})
    params.update(_parse_param_flags(args.param))
    reference = args.reference or header.get("reference")
    env = envs.make(header["env_id"], noise_sigma=args.noise,
                    params=params or None, reference=reference)
    dump = max(args.dump_trajectories, 0)
    report, results = evaluate(
        env, policy, episodes=args.episodes, seed=args.seed,
        deterministic=not args.stochastic, record_raw=dump > 0,
        checkpoint=Path(args.checkpoint).name, env_steps=ck.env_steps)
    out = Path(args.out)
    write_report(out, report)
    print(out)
    base = out.with_suffix("")
    for i, res in enumerate(results[:dump]):
        traj_path = Path(f"{base}_traj{i:03d}.csv")
        write_trajectory_csv(traj_path, env, res)
        print(traj_path)
    return 0


def cmd_grid(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    vnet = ck.build_vnet()
    try:
        i, j = (int(a) for a in args.axes.split(","))
        lo, hi = (float(v) for v in args.range.split(","))
    except ValueError:
        raise ValueError("expected --axes i,j and --range lo,hi") from None
    mat, iv, jv = lyapunov_grid(vnet, ck.header["state_dim"], axes=(i, j),
                                res=args.res, lo=lo, hi=hi)
    out = Path(args.out)
    write_grid_csv(out, mat, {
        "env_id": ck.env_id, "checkpoint": Path(args.checkpoint).name,
        "axis_i": i, "axis_j": j, "lo": lo, "hi": hi,
        "res_i": mat.shape[0], "res_j": mat.shape[1]})
    print(out)
    return 0


def cmd_select_best(args) -> int:
    best = select_optimal_policy(args.run_dirs)
    print(best.checkpoint)
    return 0


def cmd_robustness(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    policy = ck.build_policy()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cells = robustness_eval(policy, ck.env_id, episodes=args.episodes,
                            seed=args.seed,
                            reference=ck.header.get("reference"))
    rows = []
    for i, cell in enumerate(cells):
        write_report(out / f"cell_{i:03d}.json", cell["report"])
        overrides = ";".join(f"{k}={v}" for k, v in cell["overrides"].items())
        rep = cell["report"]
        row = [overrides, repr(cell["noise_sigma"]), repr(rep.amcr),
               repr(rep.amcr_std)]
        row += [repr(rep.reach[f"{r:g}"]["rr"]) for r in EVAL_RADII]
        rows.append(",".join(row))
    header = ("overrides,noise_sigma,amcr,amcr_std,"
              + ",".join(f"rr_{r:g}" for r in EVAL_RADII))
    table = out / "robustness_table.csv"
    table.write_text("\n".join([header] + rows) + "\n")
    print(table)
    return 0


def _last_eval_record(run_dir: Path) -> dict:
    records = sorted(run_dir.glob("eval_*.json"))
    if not records:
        raise FileNotFoundError(f"no eval records in {run_dir}")
    return load_report(records[-1])


def cmd_sweep_n(args) -> int:
    cfg = parse_config(args.config)
    requested = [int(x) for x in args.n_list.split(",")]
    ns = list(dict.fromkeys(requested))
    if len(ns) != len(requested):
        print("warning: duplicate n values removed from sweep list",
              file=sys.stderr)

    out_root = resolve_out_root(cfg, args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    sweep_dir = out_root / f"sweep_n-{cfg.env_id}-{config_hash(cfg)}"
    sweep_dir.mkdir(exist_ok=True)

    jobs = []
    for n in ns:
        derived = replace(with_n(cfg, n), out_root=str(out_root))
        cfg_path = sweep_dir / f"n{n}.cfg"
        cfg_path.write_text(canonical_text(derived))
        jobs.append((n, derived, cfg_path))

    # fan out one training subprocess per n, bounded by --jobs
    child_env = {k: v for k, v in os.environ.items() if k != "MSACL_RUNS"}

    def launch(cfg_path):
        return subprocess.run(
            [sys.executable, "-m", "msacl.cli", "train", str(cfg_path)],
            capture_output=True, text=True, env=child_env)

    with ThreadPoolExecutor(max_workers=max(args.jobs, 1)) as pool:
        procs = list(pool.map(launch, [p for _, _, p in jobs]))
    failed = [(n, proc) for (n, _, _), proc in zip(jobs, procs)
              if proc.returncode != 0]
    for n, proc in failed:
        print(f"error: training for n={n} failed:\n{proc.stderr}",
              file=sys.stderr)
    if failed:
        return 1

    lines = ["n,runs,amcr_mean,amcr_std,"
             + ",".join(f"rr_{r:g},ars_{r:g},ahs_{r:g}" for r in EVAL_RADII)]
    rr_small = []
    for n, derived, _ in sorted(jobs):
        finals = [_last_eval_record(out_root / run_dir_name(derived, seed))
                  for seed in cfg.seeds]
        amcrs = [d["amcr"] for d in finals]
        row = [str(n), str(len(finals)), repr(_mean(amcrs)),
               repr(_std(amcrs))]
        for r in EVAL_RADII:
            cellvals = [d["reach"][f"{r:g}"] for d in finals]
            row.append(repr(_mean([c["rr"] for c in cellvals])))
            row.append(repr(_mean([c["ars"] for c in cellvals])))
            row.append(repr(_mean([c["ahs"] for c in cellvals])))
        lines.append(",".join(row))
        rr_small.append((n, _mean([d["reach"]["0.01"]["rr"] for d in finals])))

    table = sweep_dir / "sweep_table.csv"
    table.write_text("\n".join(lines) + "\n")
    monotone = all(a[1] <= b[1] for a, b in zip(rr_small, rr_small[1:]))
    print(f"rr@0.01 by n: {rr_small} "
          f"(monotone-or-flat: {'yes' if monotone else 'no'})")
    print(table)
    return 0


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return sum(vals) / len(vals) if vals else float("nan")


def _std(vals):
    if not vals:
        return float("nan")
    m = _mean(vals)
    return (sum((v - m) ** 2 for v in vals) / len(vals)) ** 0.5


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="msacl",
        description="Train and evaluate certificate-guided policies on the "
                    "built-in benchmarks.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train every seed listed in a config")
    t.add_argument("config")
    t.add_argument("--out", default=None, help="override the output root")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--noise", type=float, default=0.0)
    e.add_argument("--param", action="append", metavar="NAME=VALUE")
    e.add_argument("--reference", default=None)
    e.add_argument("--seed", type=int, default=DEFAULT_EVAL_SEED)
    e.add_argument("--stochastic", action="store_true",
                   help="sample actions instead of using the mean")
    e.add_argument("--dump-trajectories", type=int, default=0,
                   metavar="K", help="also write the first K episodes as CSV")
    e.add_argument("--out", default="eval_report.json")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep-n", help="train one run per window length")
    s.add_argument("config")
    s.add_argument("--n-list", default="1,5,10,15,20")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sweep_n)

    r = sub.add_parser("robustness",
                       help="parameter/noise grid for a checkpoint's env")
    r.add_argument("checkpoint")
    r.add_argument("--episodes", type=int, default=100)
    r.add_argument("--seed", type=int, default=DEFAULT_EVAL_SEED)
    r.add_argument("--out", default="robustness")
    r.set_defaults(func=cmd_robustness)

    g = sub.add_parser("grid", help="export certificate values on a 2-D slice")
    g.add_argument("checkpoint")
    g.add_argument("--axes", default="0,1")
    g.add_argument("--res", type=int, default=101)
    g.add_argument("--range", default="-2,2")
    g.add_argument("--out", default="grid.csv")
    g.set_defaults(func=cmd_grid)

    b = sub.add_parser("select-best",
                       help="highest-AMCR checkpoint across run dirs")
    b.add_argument("run_dirs", nargs="+")
    b.set_defaults(func=cmd_select_best)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FloatingPointError as exc:
        print(f"error: run diverged: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
