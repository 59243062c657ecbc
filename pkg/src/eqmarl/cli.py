"""Command-line experiment harness.

Commands:

* ``train``: run one config over several seeds, one CSV per seed, with a
  manifest that makes identical reruns idempotent.
* ``verify-params``: compare live model parameter counts against the
  built-in expectation table.
* ``export-plot-data``: aggregate per-seed CSVs into per-epoch statistics.
* ``oracle``: run the brute-force verification suites and report the
  worst deviation of each.
* ``eval``: greedy rollout from a checkpoint, printing episode metrics.

Exit codes: 0 success, 1 verification/assertion failure, 2 configuration
error.  The environment variable ``EQMARL_OUT`` overrides the output root.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import oracles, qsim, vqc
from .entangle import (EntanglementStyle, QubitLayout, entangling_gates,
                       prepare_entangled_input)
from .nn import load_tensors
from .trainer import (CSV_HEADER, TrainConfig, Trainer, compute_metrics,
                      make_actor, make_critic, rollout, run_training)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


def output_root(override: str | None = None) -> Path:
    if override:
        return Path(override)
    return Path(os.environ.get("EQMARL_OUT", "runs"))


# -- train ------------------------------------------------------------------

def _parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with dotted keys for nested tables, JSON-typed values."""
    if "=" not in text:
        raise ValueError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    doc = json.loads(json.dumps(doc))
    for text in overrides:
        key, value = _parse_override(text)
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"override key {key!r} descends into a "
                                 f"non-table value")
        node[parts[-1]] = value
    return doc


def config_hash(doc: dict) -> str:
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def _train_worker(doc: dict, seed: int, csv_path: str,
                  checkpoint_path: str) -> int:
    config = TrainConfig.from_dict({**doc, "seed": seed})
    run_training(config, csv_path=csv_path, checkpoint_path=checkpoint_path)
    return seed


def cmd_train(args) -> int:
    try:
        doc = json.loads(Path(args.config).read_text())
        doc = apply_overrides(doc, args.override)
        base = TrainConfig.from_dict(doc)
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seeds = (list(range(args.seeds)) if args.seed_list is None
             else [int(s) for s in args.seed_list.split(",")])
    name = args.name or Path(args.config).stem
    run_dir = output_root(args.out) / name
    run_dir.mkdir(parents=True, exist_ok=True)

    manifest_path = run_dir / "manifest.json"
    digest = config_hash(doc)
    manifest = {"config": doc, "config_hash": digest, "runs": {}}
    if manifest_path.exists():
        previous = json.loads(manifest_path.read_text())
        if previous.get("config_hash") == digest:
            manifest = previous
        else:
            print(f"config changed; restarting runs in {run_dir}")

    pending = []
    for seed in seeds:
        entry = manifest["runs"].get(str(seed))
        csv_path = run_dir / f"seed{seed}.csv"
        if entry and entry.get("complete") and csv_path.exists():
            print(f"seed {seed}: already complete, skipping")
            continue
        pending.append(seed)
    workers = args.workers or os.cpu_count() or 1

    def record(seed: int) -> None:
        manifest["runs"][str(seed)] = {
            "csv": f"seed{seed}.csv",
            "checkpoint": f"seed{seed}_checkpoint.json",
            "complete": True,
        }
        manifest_path.write_text(json.dumps(manifest, indent=2))

    jobs = {seed: (doc, seed, str(run_dir / f"seed{seed}.csv"),
                   str(run_dir / f"seed{seed}_checkpoint.json"))
            for seed in pending}
    if len(jobs) <= 1 or workers == 1:
        for seed, job in jobs.items():
            _train_worker(*job)
            record(seed)
            print(f"seed {seed}: done ({base.epochs} epochs)")
    else:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=min(workers, len(jobs))) as pool:
            futures = {pool.submit(_train_worker, *job): seed
                       for seed, job in jobs.items()}
            for future in concurrent.futures.as_completed(futures):
                seed = futures[future]
                future.result()
                record(seed)
                print(f"seed {seed}: done ({base.epochs} epochs)")
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return EXIT_OK


# -- verify-params ----------------------------------------------------------

# (framework, env, mode) -> (critic per-agent, critic central, critic total,
# actor total or None when unpublished).
PARAM_TABLE = {
    ("eqmarl", "coingame", "mdp"): (132, 1, 265, 136),
    ("qfctde", "coingame", "mdp"): (132, 1, 265, 136),
    ("fctde", "coingame", "mdp"): (0, 889, 889, 136),
    ("sctde", "coingame", "mdp"): (444, 25, 913, 136),
    ("eqmarl", "coingame", "pomdp"): (408, 1, 817, 412),
    ("qfctde", "coingame", "pomdp"): (408, 1, 817, 412),
    ("fctde", "coingame", "pomdp"): (0, 673, 673, 412),
    ("sctde", "coingame", "pomdp"): (336, 25, 697, 412),
    ("eqmarl", "minigrid", "mdp"): (1848, 1, 3697, None),
    ("fctde", "minigrid", "mdp"): (0, 29601, 29601, None),
    ("sctde", "minigrid", "mdp"): (14800, 201, 29801, None),
}


def live_counts(framework: str, env: str, mode: str) -> tuple[dict, int]:
    config = TrainConfig(env=env, mode=mode, framework=framework, epochs=1)
    rng = np.random.default_rng(0)
    critic = make_critic(config, rng)
    actor = make_actor(config, rng)
    return critic.count_parameters(), actor.count_parameters()


def cmd_verify_params(args) -> int:
    rows = [key for key in PARAM_TABLE
            if (args.framework in (None, key[0])
                and args.env in (None, key[1])
                and args.mode in (None, key[2]))]
    if not rows:
        print("no table entries match the given filters", file=sys.stderr)
        return EXIT_CONFIG
    failures = 0
    print(f"{'framework':<8} {'env':<9} {'mode':<6} "
          f"{'critic (per-agent/central/total)':<34} {'actor':<7} status")
    for key in rows:
        framework, env, mode = key
        exp_pa, exp_c, exp_t, exp_actor = PARAM_TABLE[key]
        counts, actor_total = live_counts(framework, env, mode)
        ok = (counts["per_agent"], counts["central"],
              counts["total"]) == (exp_pa, exp_c, exp_t)
        if exp_actor is not None:
            ok = ok and actor_total == exp_actor
        status = "ok" if ok else (
            f"MISMATCH expected {exp_pa}/{exp_c}/{exp_t} actor {exp_actor}")
        failures += 0 if ok else 1
        critic_str = (f"{counts['per_agent']}/{counts['central']}"
                      f"/{counts['total']}")
        print(f"{framework:<8} {env:<9} {mode:<6} {critic_str:<34} "
              f"{actor_total:<7} {status}")
    return EXIT_OK if failures == 0 else EXIT_FAIL


# -- export-plot-data -------------------------------------------------------

def moving_average(series: np.ndarray, window: int) -> np.ndarray:
    """Trailing moving average: entry i averages the last ``window`` values
    ending at i (fewer at the start of the series)."""
    if window <= 1:
        return np.asarray(series, dtype=float)
    out = np.empty(len(series), dtype=float)
    csum = np.concatenate([[0.0], np.cumsum(series)])
    for i in range(len(series)):
        lo = max(0, i - window + 1)
        out[i] = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
    return out


def load_run_csvs(run_dir: Path) -> list[dict[str, np.ndarray]]:
    runs = []
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        paths = [run_dir / entry["csv"]
                 for entry in manifest.get("runs", {}).values()
                 if entry.get("complete")]
    else:
        paths = sorted(p for p in run_dir.glob("seed*.csv"))
    for path in paths:
        with open(path) as fh:
            reader = csv.DictReader(fh)
            columns: dict[str, list[float]] = {}
            for row in reader:
                for name, value in row.items():
                    columns.setdefault(name, []).append(float(value))
        runs.append({name: np.asarray(vals) for name, vals in columns.items()})
    return runs


def cmd_export_plot_data(args) -> int:
    run_dir = Path(args.run_dir)
    runs = load_run_csvs(run_dir)
    if not runs:
        print(f"no completed run CSVs under {run_dir}", file=sys.stderr)
        return EXIT_CONFIG
    missing = [i for i, r in enumerate(runs) if args.metric not in r]
    if missing:
        print(f"metric {args.metric!r} missing from run files {missing}",
              file=sys.stderr)
        return EXIT_CONFIG
    length = min(len(r[args.metric]) for r in runs)
    data = np.stack([moving_average(r[args.metric][:length], args.window)
                     for r in runs])
    out_path = Path(args.out) if args.out else (
        run_dir / f"{args.metric}_aggregate.csv")
    with open(out_path, "w") as fh:
        fh.write("epoch,mean,std,min,max\n")
        for epoch in range(length):
            col = data[:, epoch]
            fh.write(",".join([str(epoch)] + [
                format(v, ".17g") for v in
                (col.mean(), col.std(), col.min(), col.max())]) + "\n")
    print(f"wrote {out_path} ({len(runs)} runs, {length} epochs)")
    return EXIT_OK


# -- oracle -----------------------------------------------------------------

def suite_bell() -> tuple[float, float]:
    """Entangled input vs hand-written Bell states and the dense oracle."""
    worst = 0.0
    layout2 = QubitLayout(2, 1)
    for style in EntanglementStyle:
        amps = prepare_entangled_input(style, layout2).amplitudes
        worst = max(worst, float(np.max(np.abs(
            amps - oracles.bell_reference(style)))))
    for agents in (2, 3):
        for qubits in (1, 2):
            layout = QubitLayout(agents, qubits)
            for style in EntanglementStyle:
                amps = prepare_entangled_input(style, layout).amplitudes
                ref = oracles.entangled_state_brute(style, layout)
                worst = max(worst, float(np.max(np.abs(amps - ref))))
    return worst, 1e-12


def suite_unitarity(num_circuits: int = 100) -> tuple[float, float]:
    """Random circuits must preserve the statevector norm."""
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(num_circuits):
        num_qubits = int(rng.integers(1, 5))
        gates = oracles.random_gate_sequence(rng, num_qubits,
                                             int(rng.integers(5, 40)))
        state = qsim.apply_circuit(qsim.zero_state(num_qubits), gates)
        worst = max(worst, abs(float(np.linalg.norm(state.amplitudes)) - 1.0))
    return worst, 1e-10


def suite_gradients(num_instances: int = 10) -> tuple[float, float]:
    """Analytic circuit gradients vs central finite differences."""
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(num_instances):
        agents = int(rng.integers(2, 4))
        qubits = int(rng.integers(1, 3))
        layers = int(rng.integers(1, 3))
        style = list(EntanglementStyle)[rng.integers(5)]
        spec = vqc.JointCircuitSpec(style, QubitLayout(agents, qubits),
                                    vqc.Squash.ARCTAN)
        params = [vqc.VqcParams.random(layers, qubits, rng)
                  for _ in range(agents)]
        obs = [rng.normal(size=(qubits, 3)) for _ in range(agents)]
        _, grads = vqc.grad_expectation(spec, params, obs)
        for agent in range(agents):
            def value_at(theta, agent=agent):
                saved = params[agent].theta.copy()
                params[agent].theta[:] = theta
                try:
                    return float(vqc.joint_expectation(spec, params, obs)[0])
                finally:
                    params[agent].theta[:] = saved

            fd = oracles.central_difference(value_at, params[agent].theta)
            scale = max(1.0, float(np.max(np.abs(fd))))
            worst = max(worst, float(
                np.max(np.abs(grads[agent].theta - fd))) / scale)
    return worst, 1e-4


def suite_split(num_instances: int = 4) -> tuple[float, float]:
    """Split-form critic gradients vs finite differences of the full loss."""
    from .critics import CriticKind, CriticFramework
    from .nn import huber_loss, huber_loss_grad

    rng = np.random.default_rng(3)
    worst = 0.0
    for i in range(num_instances):
        kind = (CriticKind.EQMARL, CriticKind.SCTDE)[i % 2]
        if kind is CriticKind.EQMARL:
            critic = CriticFramework(kind, 2, 12, rng,
                                     style=EntanglementStyle.PSI_PLUS,
                                     num_qubits=2, num_layers=1)
            obs = [rng.normal(size=(3, 2, 3)) for _ in range(2)]
        else:
            critic = CriticFramework(kind, 2, 5, rng, hidden=6)
            obs = [rng.normal(size=(3, 5)) for _ in range(2)]
        targets = rng.normal(size=2)
        est = critic.estimate_joint_value(obs)
        dvalue = np.zeros(3)
        dvalue[:2] = huber_loss_grad(est.value[:2], targets)
        grads = critic.backward(est, dvalue)
        name = "theta" if kind is CriticKind.EQMARL else "net"
        tensor = critic.param_groups()[name][0]

        def loss_at(flat):
            saved = tensor.copy()
            tensor[:] = flat
            try:
                v = critic.estimate_joint_value(obs).value
                return huber_loss(v[:2], targets)
            finally:
                tensor[:] = saved

        fd = oracles.central_difference(loss_at, tensor)
        scale = max(1.0, float(np.max(np.abs(fd))))
        worst = max(worst, float(
            np.max(np.abs(grads.groups[name][0] - fd))) / scale)
    return worst, 1e-5


SUITES = {
    "bell": suite_bell,
    "unitarity": suite_unitarity,
    "gradients": suite_gradients,
    "split": suite_split,
}


def cmd_oracle(args) -> int:
    names = [args.suite] if args.suite else list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        print(f"unknown suite: {unknown[0]!r} "
              f"(choose from {sorted(SUITES)})", file=sys.stderr)
        return EXIT_CONFIG
    failures = 0
    for name in names:
        worst, tol = SUITES[name]()
        ok = worst < tol
        failures += 0 if ok else 1
        print(f"{name:<10} max deviation {worst:.3e}  tolerance {tol:.0e}  "
              f"{'ok' if ok else 'FAIL'}")
    return EXIT_OK if failures == 0 else EXIT_FAIL


# -- eval -------------------------------------------------------------------

def cmd_eval(args) -> int:
    try:
        doc = json.loads(Path(args.config).read_text())
        doc = apply_overrides(doc, args.override)
        if args.seed is not None:
            doc["seed"] = args.seed
        config = TrainConfig.from_dict(doc)
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    trainer = Trainer(config)
    try:
        trainer.load_tensors(load_tensors(args.checkpoint))
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    episode = rollout(trainer.env, trainer.actor, config, trainer.sample_rng,
                      greedy=True)
    metrics = compute_metrics(episode, config.env)
    for name in ("score", "total_coins", "own_coin_rate", "avg_reward",
                 "episode_len"):
        print(f"{name}: {metrics[name]}")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqmarl", description="Quantum multi-agent actor-critic harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training config over seeds")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--override", action="append", default=[],
                   metavar="KEY=VALUE", help="dotted-key config override")
    p.add_argument("--seeds", type=int, default=1,
                   help="number of seeds (0..N-1)")
    p.add_argument("--seed-list", default=None,
                   help="comma-separated explicit seed values")
    p.add_argument("--workers", type=int, default=0,
                   help="worker processes (default: all cores)")
    p.add_argument("--out", default=None, help="output root directory")
    p.add_argument("--name", default=None, help="run directory name")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify-params",
                       help="check parameter counts against the "
                            "published table")
    p.add_argument("--framework", default=None)
    p.add_argument("--env", default=None)
    p.add_argument("--mode", default=None)
    p.set_defaults(func=cmd_verify_params)

    p = sub.add_parser("export-plot-data",
                       help="aggregate per-seed CSVs into epoch statistics")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--metric", default="avg_reward")
    p.add_argument("--window", type=int, default=1,
                   help="trailing moving-average window (1 = none)")
    p.add_argument("--out", default=None, help="output CSV path")
    p.set_defaults(func=cmd_export_plot_data)

    p = sub.add_parser("oracle", help="run brute-force verification suites")
    p.add_argument("suite", nargs="?", default=None,
                   help=f"one of {sorted(SUITES)} (default: all)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("eval",
                       help="greedy rollout from a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--override", action="append", default=[],
                   metavar="KEY=VALUE")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
