"""Command-line entry point: terrain generation, plan sampling, rollouts, and
terrain-wise evaluation.

Exit codes: 0 ok, 2 bad flags, 3 missing input file, 4 simulation divergence.
Every output is written atomically; report paths also render figures unless
--no-figures is given.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from dataclasses import asdict, dataclass, replace
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from . import figures
from .agents import make_agent
from .env import EnvConfig, Environment, env_config_to_dict, load_env_config, save_env_config
from .fileio import atomic_write_text
from .observations import NoiseConfig
from .plan import FOOT_NAMES, SamplerConfig, load_plan, sample_plan, save_plan
from .rewards import RewardBreakdown, RewardConfig, Termination
from .sim import SimConfig, settle_standing_state
from .terrain import TerrainKind, TerrainSpec, generate_terrain, load_terrain, save_terrain

EXIT_BAD_FLAGS = 2
EXIT_MISSING_FILE = 3
EXIT_DIVERGED = 4

EVAL_TERRAINS = {
    "flat": (TerrainKind.FLAT, {}),
    "rough": (TerrainKind.ROUGH, {"amplitude": 0.05}),
    "slope": (TerrainKind.SLOPE, {"angle": 0.2}),
    "stairs_up": (TerrainKind.STAIRS_UP, {"step_width": 0.25, "step_height": 0.2}),
    "stairs_down": (TerrainKind.STAIRS_DOWN, {"step_width": 0.25, "step_height": 0.2}),
    "stepping_stones": (TerrainKind.STEPPING_STONES, {"stone_size": 0.35, "gap": 0.2}),
    "stepping_stones_easy": (TerrainKind.STEPPING_STONES, {"stone_size": 0.8, "gap": 0.05}),
    "narrow_beam": (TerrainKind.NARROW_BEAM, {"beam_width": 0.3}),
}


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    atomic_write_text(path, buf.getvalue())


# -- episode runner -------------------------------------------------------------


@dataclass
class EpisodeResult:
    termination: str
    truncated: bool
    steps: int
    distance: float
    max_stage: int
    stages_completed: int
    reward_sums: dict[str, float]


def run_episode(env: Environment, agent, plan=None, stop_distance: float | None = None,
                on_step=None) -> EpisodeResult:
    """Drive one episode to termination (optionally stopping once the base has
    walked stop_distance); on_step(step_index, env, breakdown, termination,
    info) observes every control step."""
    env.reset(plan=plan)
    agent.reset(env)
    reward_sums = {name: 0.0 for name in (*RewardBreakdown.TERMS, "total")}
    termination = Termination.RUNNING
    info = {"truncated": False, "distance_from_spawn": 0.0, "stages_completed": 0}
    steps = 0
    while not env.done:
        action = agent.act(env)
        _, rb, termination, info = env.step(action)
        for name, value in rb.as_dict().items():
            reward_sums[name] += value
        steps += 1
        if on_step is not None:
            on_step(steps, env, rb, termination, info)
        if stop_distance is not None and info["distance_from_spawn"] >= stop_distance:
            break
    return EpisodeResult(
        termination=termination.value,
        truncated=bool(info.get("truncated", False)),
        steps=steps,
        distance=float(info.get("distance_from_spawn", 0.0)),
        max_stage=int(env.progress.stage_index),
        stages_completed=int(info.get("stages_completed", 0)),
        reward_sums=reward_sums,
    )


# -- subcommands ------------------------------------------------------------------


def cmd_terrain(args) -> int:
    params = {}
    for key in (
        "length", "width", "step_width", "step_height", "stone_size", "gap",
        "gap_depth", "beam_width", "amplitude", "angle", "height_var",
    ):
        value = getattr(args, key)
        if value is not None:
            params[key] = value
    spec = TerrainSpec(
        kind=TerrainKind(args.kind), params=params, seed=args.seed, resolution=args.resolution
    )
    hf = generate_terrain(spec)
    save_terrain(args.out, spec, hf)
    print(f"wrote {args.out} ({hf.size_x}x{hf.size_y} cells)")
    return 0


def cmd_plan(args) -> int:
    if args.terrain:
        _, hf = load_terrain(args.terrain)
    else:
        hf = generate_terrain(TerrainSpec(kind=TerrainKind.FLAT))
    if args.config:
        with open(args.config) as f:
            data = json.load(f)
        cfg = SamplerConfig(**{
            k: tuple(v) if isinstance(v, list) else v for k, v in data.items()
        })
    else:
        cfg = SamplerConfig()
    from .sim import default_model

    rng = np.random.default_rng(args.seed)
    state = settle_standing_state(default_model(), hf, np.array([-1.0, 0.0]))
    plan = sample_plan(rng, cfg, hf, state, args.stages)
    save_plan(args.out, plan)
    print(f"wrote {args.out} ({len(plan.stages)} stages, gait {plan.gait.value})")
    return 0


def _build_env(args) -> Environment:
    if args.env:
        config = load_env_config(args.env)
    else:
        config = EnvConfig.default()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return Environment(config)


def cmd_rollout(args) -> int:
    env = _build_env(args)
    plan = load_plan(args.plan) if args.plan else None
    agent = make_agent(args.agent, seed=args.seed or 0, amplitude=args.amplitude,
                       command=args.agent_cmd)

    out_dir = Path(args.out_dir)
    rows, footfall_rows, obs_rows = [], [], []

    def on_step(step_index, env_, rb, termination, info):
        s = env_.state
        t = (step_index - 1) * env_.control_dt
        rows.append(
            [step_index, t, *s.base_pos, *s.base_quat, *s.joint_pos,
             *s.foot_contact, info["stage_index"], *rb.as_dict().values(),
             termination.value]
        )
        footfall_rows.append(
            [step_index, t, *s.foot_contact, *info["satisfied"]]
        )
        if args.obs_out:
            obs_rows.append(list(env_.last_obs))

    result = run_episode(env, agent, plan=plan, on_step=on_step)
    if hasattr(agent, "close"):
        agent.close()

    header = (
        ["step", "time_s", "base_x", "base_y", "base_z", "quat_w", "quat_x", "quat_y",
         "quat_z"]
        + [f"q{i}" for i in range(12)]
        + [f"contact_{n}" for n in FOOT_NAMES]
        + ["stage_index"]
        + [f"rew_{n}" for n in (*RewardBreakdown.TERMS, "total")]
        + ["termination"]
    )
    _write_csv(out_dir / "trajectory.csv", header, rows)
    _write_csv(
        out_dir / "footfall.csv",
        ["step", "time_s"]
        + [f"contact_{n}" for n in FOOT_NAMES]
        + [f"satisfied_{n}" for n in FOOT_NAMES],
        footfall_rows,
    )
    if args.obs_out:
        _write_csv(Path(args.obs_out), [f"obs_{i}" for i in range(77)], obs_rows)
    atomic_write_text(out_dir / "summary.json", json.dumps(asdict(result), indent=2))

    if not args.no_figures and rows:
        time_s = np.array([r[1] for r in rows])
        contact = np.array([r[21:25] for r in rows], dtype=float).astype(bool)
        satisfied = np.array([r[6:10] for r in footfall_rows], dtype=float).astype(bool)
        figures.save_figure(
            figures.footfall_figure(time_s, contact, satisfied), out_dir / "footfall.png"
        )
        base = np.array([r[2:5] for r in rows], dtype=float)
        total = np.array([r[-2] for r in rows], dtype=float)
        stage = np.array([r[25] for r in rows], dtype=float)
        figures.save_figure(
            figures.trajectory_figure(time_s, base, total, stage), out_dir / "trajectory.png"
        )

    print(
        f"rollout: {result.steps} steps, {result.distance:.2f} m, "
        f"stage {result.max_stage}, termination {result.termination}"
    )
    return EXIT_DIVERGED if result.termination == Termination.SIM_DIVERGED.value else 0


def _eval_env_config(name: str, args) -> EnvConfig:
    kind, params = EVAL_TERRAINS[name]
    params = dict(params)
    if args.step_height is not None and kind in (TerrainKind.STAIRS_UP, TerrainKind.STAIRS_DOWN):
        params["step_height"] = args.step_height
    sampler = SamplerConfig.eval_trot(
        step_length=(args.step_length_min, args.step_length_max),
        width=args.step_width_stance,
        duration_steps=args.hold_steps,
    )
    return EnvConfig(
        terrain=TerrainSpec(kind=kind, params=params, seed=args.seed or 0),
        sampler=sampler,
        rewards=RewardConfig(),
        sim=SimConfig(),
        noise=NoiseConfig(),
        episode_seconds=args.episode_seconds,
        plan_stages=args.stages,
        seed=args.seed or 0,
    )


def run_eval_trial(payload: dict) -> dict:
    """One seeded trial; used directly and through worker pools."""
    from .env import env_config_from_dict

    config = env_config_from_dict(payload["config"])
    env = Environment(config, seed=payload["trial_seed"], observe=False)
    agent = make_agent(payload["agent"], seed=payload["trial_seed"],
                       amplitude=payload.get("amplitude", 0.2))
    result = run_episode(env, agent, stop_distance=payload["success_distance"])
    success = (
        result.distance >= payload["success_distance"]
        and result.termination
        in (Termination.RUNNING.value, Termination.PLAN_COMPLETE.value)
    )
    outcome = result.termination if not result.truncated else "timeout"
    return {
        "success": bool(success),
        "distance": result.distance,
        "max_stage": result.max_stage,
        "outcome": outcome,
    }


def evaluate_terrain(config: EnvConfig, agent: str, trials: int, repeats: int, seed: int,
                     success_distance: float, workers: int = 1, amplitude: float = 0.2,
                     terrain_name: str = "") -> dict:
    """Run repeats x trials seeded episodes and aggregate an EvalReport dict.
    Trial seeds are seed + trial index, so reports are reproducible for any
    worker count."""
    if trials < 1 or repeats < 1:
        raise ValueError("trials and repeats must be >= 1")
    payloads = [
        {
            "config": env_config_to_dict(config),
            "trial_seed": seed + i,
            "agent": agent,
            "amplitude": amplitude,
            "success_distance": success_distance,
        }
        for i in range(trials * repeats)
    ]
    if workers > 1:
        with Pool(workers) as pool:
            outcomes = pool.map(run_eval_trial, payloads)
    else:
        outcomes = [run_eval_trial(p) for p in payloads]

    block_rates = []
    for b in range(repeats):
        block = outcomes[b * trials : (b + 1) * trials]
        block_rates.append(sum(o["success"] for o in block) / trials)
    successes = sum(o["success"] for o in outcomes)
    histogram: dict[str, int] = {}
    for o in outcomes:
        histogram[o["outcome"]] = histogram.get(o["outcome"], 0) + 1
    return {
        "terrain": terrain_name,
        "trials": trials * repeats,
        "repeats": repeats,
        "successes": successes,
        "success_rate": successes / (trials * repeats),
        "success_rate_mean": float(np.mean(block_rates)),
        "success_rate_std": float(np.std(block_rates)),
        "per_block_success_rate": block_rates,
        "mean_max_stage": float(np.mean([o["max_stage"] for o in outcomes])),
        "mean_distance_m": float(np.mean([o["distance"] for o in outcomes])),
        "termination_counts": histogram,
    }


def cmd_eval(args) -> int:
    names = [n.strip() for n in args.terrains.split(",") if n.strip()]
    unknown = [n for n in names if n not in EVAL_TERRAINS]
    if unknown:
        print(f"error: unknown terrains: {', '.join(unknown)}", file=sys.stderr)
        return EXIT_BAD_FLAGS
    reports = []
    for name in names:
        config = _eval_env_config(name, args)
        report = evaluate_terrain(
            config,
            agent=args.agent,
            trials=args.trials,
            repeats=args.repeats,
            seed=args.seed or 0,
            success_distance=args.success_distance,
            workers=args.workers,
            amplitude=args.amplitude,
            terrain_name=name,
        )
        reports.append(report)
        print(
            f"{name}: success {report['success_rate_mean']:.2f} "
            f"+/- {report['success_rate_std']:.2f}, mean stage {report['mean_max_stage']:.1f}"
        )
    out_dir = Path(args.out_dir)
    atomic_write_text(out_dir / "eval_report.json", json.dumps(reports, indent=2))
    if not args.no_figures:
        figures.save_figure(figures.eval_figure(reports), out_dir / "success_rates.png")
    return 0


def cmd_env_config(args) -> int:
    config = EnvConfig.default(TerrainKind(args.kind))
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    save_env_config(args.out, config)
    print(f"wrote {args.out}")
    return 0


# -- argument parsing ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contactenv",
        description="Contact-conditioned quadruped environments: terrains, plans, rollouts, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("terrain", help="generate a terrain heightfield JSON")
    p.add_argument("--kind", required=True, choices=[k.value for k in TerrainKind])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=float, default=0.05)
    for key in (
        "length", "width", "step-width", "step-height", "stone-size", "gap",
        "gap-depth", "beam-width", "amplitude", "angle", "height-var",
    ):
        p.add_argument(f"--{key}", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_terrain)

    p = sub.add_parser("plan", help="sample a contact plan JSON")
    p.add_argument("--config", default=None, help="sampler config JSON")
    p.add_argument("--terrain", default=None, help="terrain JSON (default: flat)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stages", type=int, default=30)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("rollout", help="run one episode and write CSV/JSON/figures")
    p.add_argument("--env", default=None, help="environment config JSON")
    p.add_argument("--plan", default=None, help="plan JSON (default: sample at reset)")
    p.add_argument("--agent", default="oracle", choices=["oracle", "random", "external"])
    p.add_argument("--agent-cmd", default=None, help="command for --agent external")
    p.add_argument("--amplitude", type=float, default=0.2, help="random agent amplitude")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--obs-out", default=None, help="also log per-step actor observations")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("eval", help="terrain-wise success evaluation")
    p.add_argument("--terrains", default="flat,stairs_up,stepping_stones,narrow_beam")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--agent", default="oracle", choices=["oracle", "random"])
    p.add_argument("--amplitude", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--success-distance", type=float, default=5.0)
    p.add_argument("--episode-seconds", type=float, default=35.0)
    p.add_argument("--stages", type=int, default=75)
    p.add_argument("--hold-steps", type=int, default=6)
    p.add_argument("--step-length-min", type=float, default=0.15)
    p.add_argument("--step-length-max", type=float, default=0.2)
    p.add_argument("--step-width-stance", type=float, default=0.2)
    p.add_argument("--step-height", type=float, default=None, help="override stair height")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("env-config", help="write a default environment config JSON")
    p.add_argument("--kind", default="flat", choices=[k.value for k in TerrainKind])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_env_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # argparse normalizes dashes to underscores for attribute access.
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: missing file: {e.filename or e}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except SystemExit:
        raise
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_FLAGS


if __name__ == "__main__":
    sys.exit(main())
