"""Experiment runner: generate data, train models, evaluate handover policies.

Subcommands: generate, train, evaluate, report.  Flags can be overridden
through FEDHO_* environment variables; exit codes are 0 (ok), 2 (config
error), 3 (missing input), 4 (numerical failure).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .dataset import Dataset, build_datasets, build_test_set
from .federated import run_offline, run_online, time_average_accuracy, write_curve_csv
from .handover import (
    CommScheme,
    PolicyKind,
    PolicySpec,
    comm_cost,
    evaluate_policy,
    summarize_metrics,
    write_metrics_csv,
    write_summary_json,
)
from .neural import (
    MlpModel,
    NumericalError,
    Scaler,
    TrainConfig,
    init_params,
    model_from_json,
    model_to_json,
    param_count,
    serialize,
    sgd_train,
)
from .rng import derived_seed, generator
from .topology import dump_topology_json


class MissingInputError(Exception):
    """A required input artifact does not exist."""


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _update_manifest(cfg: RunConfig, entries: dict) -> Path:
    out = _out_dir(cfg)
    path = out / "manifest.json"
    if path.exists():
        data = json.loads(path.read_text())
    else:
        data = {
            "scenario": cfg.scenario,
            "seed": cfg.seed,
            "config_sha256": cfg.config_hash(),
            "entries": {},
        }
    data["entries"].update(entries)
    path.write_text(json.dumps(data, indent=2, sort_keys=True))
    return path


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingInputError(f"{what} not found: {path} (run the producing command first)")
    return path


def cmd_generate(cfg: RunConfig) -> dict[str, Path]:
    """Write train/test datasets, the topology dump, and the manifest."""
    out = _out_dir(cfg)
    scenario = cfg.build_scenario()
    users, test = build_datasets(
        scenario,
        n_users=cfg.dataset.n_users,
        storage=cfg.storage_policy(),
        iid=cfg.dataset.iid,
        test_size=cfg.dataset.test_size,
        seed=derived_seed(cfg.seed, "generate"),
    )
    pooled = Dataset(samples=[s for u in users for s in u.samples], split="train")
    train_path = out / "train.csv"
    test_path = out / "test.csv"
    topo_path = out / "topology.json"
    pooled.write_csv(train_path)
    test.write_csv(test_path)
    dump_topology_json(scenario.topology, topo_path)
    entries = {
        "train.csv": {
            "seed": cfg.seed,
            "samples": len(pooled),
            "users": len(users),
            "group_counts": {str(k): v for k, v in sorted(pooled.group_counts().items())},
        },
        "test.csv": {
            "seed": cfg.seed,
            "samples": len(test),
            "group_counts": {str(k): v for k, v in sorted(test.group_counts().items())},
        },
        "topology.json": {"seed": cfg.seed, "n_sbs": scenario.topology.n_sbs},
    }
    manifest = _update_manifest(cfg, entries)
    return {"train": train_path, "test": test_path, "topology": topo_path, "manifest": manifest}


def _load_datasets(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    out = _out_dir(cfg)
    train = Dataset.read_csv(
        _require(out / "train.csv", "training dataset"), cfg.topology.n_sbs, "train"
    )
    test = Dataset.read_csv(
        _require(out / "test.csv", "test dataset"), cfg.topology.n_sbs, "test"
    )
    return train, test


def _balanced_pool(train: Dataset, pool_size: int) -> Dataset:
    """First pool_size/2 samples of each road group, in stored order."""
    per_group = pool_size // 2
    picked: list = []
    counts = {1: 0, 2: 0}
    for s in train.samples:
        if counts.get(s.group_id, per_group) < per_group:
            picked.append(s)
            counts[s.group_id] += 1
    if counts[1] < per_group or counts[2] < per_group:
        raise MissingInputError(
            f"train pool has {counts} samples per group, need {per_group} each"
        )
    return Dataset(samples=picked, split="train")


def train_centralized(
    pool: Dataset,
    test: Dataset,
    learning_rate: float,
    epochs: int,
    batch_size: int,
    hidden_nodes: int,
    n_sbs: int,
    seed: int,
) -> tuple[MlpModel, list[tuple[int, float]]]:
    """Pooled-data baseline with a per-epoch accuracy curve."""
    X, Y = pool.to_arrays()
    test_X, test_Y = test.to_arrays()
    scaler = Scaler.fit(X)
    Xs = scaler.transform(X)
    dims = (X.shape[1], hidden_nodes, n_sbs)
    params = init_params(dims, generator(seed, "init"))
    curve = []
    for epoch in range(epochs):
        params = sgd_train(
            params,
            Xs,
            Y,
            TrainConfig(
                learning_rate=learning_rate,
                epochs=1,
                batch_size=batch_size,
                shuffle_seed=derived_seed(seed, "shuffle", epoch),
            ),
        )
        model = MlpModel(params=params, scaler=scaler)
        curve.append((epoch + 1, model.accuracy(test_X, test_Y)))
    return MlpModel(params=params, scaler=scaler), curve


def _write_epoch_curve(curve: list[tuple[int, float]], path: Path) -> None:
    lines = ["epoch,test_accuracy"]
    for epoch, acc in curve:
        lines.append(f"{epoch},{acc:.6f}")
    path.write_text("\n".join(lines) + "\n")


def cmd_train(cfg: RunConfig, mode: str) -> dict[str, Path]:
    """Train per mode: centralized baseline, offline FL, or online FL."""
    out = _out_dir(cfg)
    train, test = _load_datasets(cfg)
    test_X, test_Y = test.to_arrays()

    if mode == "centralized":
        pool = _balanced_pool(train, cfg.train.pool_size)
        model, curve = train_centralized(
            pool,
            test,
            cfg.train.learning_rate,
            cfg.train.epochs,
            cfg.train.batch_size,
            cfg.train.hidden_nodes,
            cfg.topology.n_sbs,
            derived_seed(cfg.seed, "centralized"),
        )
        model_path = out / "model_centralized.json"
        curve_path = out / "curve_centralized.csv"
        model_to_json(model, model_path)
        _write_epoch_curve(curve, curve_path)
        final_acc = curve[-1][1] if curve else float("nan")
        _update_manifest(
            cfg,
            {
                "model_centralized.json": {"seed": cfg.seed, "pool_samples": len(pool)},
                "curve_centralized.csv": {"seed": cfg.seed, "final_accuracy": final_acc},
            },
        )
        return {"model": model_path, "curve": curve_path}

    if mode == "fl_offline":
        pool_X, _ = _balanced_pool(train, cfg.train.pool_size).to_arrays()
        scaler = Scaler.fit(pool_X)
        scenario = cfg.build_scenario()
        ckpt_every = cfg.fl.checkpoint_every

        def _checkpoint(model: MlpModel, log) -> None:
            if ckpt_every > 0 and (log.round_index + 1) % ckpt_every == 0:
                ckpt = out / f"ckpt_fl_offline_r{log.round_index + 1:05d}.bin"
                ckpt.write_bytes(serialize(model.params))

        model, logs = run_offline(
            scenario,
            cfg.fl_config(),
            derived_seed(cfg.seed, "fl-offline"),
            test_X,
            test_Y,
            scaler,
            on_round=_checkpoint,
        )
        model_path = out / "model_fl_offline.json"
        curve_path = out / "curve_fl_offline.csv"
        model_to_json(model, model_path)
        write_curve_csv(logs, curve_path)
        _update_manifest(
            cfg,
            {
                "model_fl_offline.json": {"seed": cfg.seed, "rounds": cfg.fl.rounds},
                "curve_fl_offline.csv": {
                    "seed": cfg.seed,
                    "final_accuracy": logs[-1].test_accuracy if logs else float("nan"),
                },
            },
        )
        return {"model": model_path, "curve": curve_path}

    if mode == "fl_online":
        offline_path = _require(
            Path(os.environ.get("FEDHO_MODEL", out / "model_fl_offline.json")),
            "offline model checkpoint",
        )
        offline_model = model_from_json(offline_path)
        scenario = cfg.build_scenario(cfg.online_mobility())
        online_test = build_test_set(
            scenario, cfg.online.test_size, derived_seed(cfg.seed, "online-test")
        )
        otest_X, otest_Y = online_test.to_arrays()
        model, logs = run_online(
            offline_model,
            scenario,
            cfg.online_fl_config(),
            derived_seed(cfg.seed, "fl-online"),
            otest_X,
            otest_Y,
        )
        model_path = out / "model_fl_online.json"
        curve_path = out / "curve_fl_online.csv"
        summary_path = out / "online_summary.json"
        model_to_json(model, model_path)
        write_curve_csv(logs, curve_path)
        first_hour = time_average_accuracy(logs, 3600.0) if logs else float("nan")
        summary_path.write_text(
            json.dumps({"first_hour_avg_accuracy": first_hour}, indent=2, sort_keys=True)
        )
        _update_manifest(
            cfg,
            {
                "model_fl_online.json": {"seed": cfg.seed, "rounds": cfg.online.rounds},
                "curve_fl_online.csv": {"seed": cfg.seed},
                "online_summary.json": {"first_hour_avg_accuracy": first_hour},
            },
        )
        return {"model": model_path, "curve": curve_path, "summary": summary_path}

    raise ConfigError(f"unknown train mode '{mode}'")


def cmd_evaluate(cfg: RunConfig, model_path: str | Path | None = None) -> dict[str, Path]:
    """Replay all four policies over held-out traces in every eval scenario."""
    out = _out_dir(cfg)
    model_file = Path(model_path) if model_path else out / "model_centralized.json"
    model = model_from_json(_require(model_file, "trained model"))

    rows = []
    for eval_scn in cfg.policy.scenarios:
        mobility = replace(
            cfg.mobility,
            speed_min_mps=eval_scn.speed_min_mps,
            speed_max_mps=eval_scn.speed_max_mps,
        )
        scenario = cfg.build_scenario(mobility)
        policies = {
            PolicyKind.REACTIVE_NO_TTT.value: PolicySpec(
                PolicyKind.REACTIVE_NO_TTT,
                cfg.channel.snr_threshold_db,
                cfg.window,
                cfg.policy.ttt_s,
                cfg.mobility.frame_s,
            ),
            PolicyKind.REACTIVE_TTT.value: PolicySpec(
                PolicyKind.REACTIVE_TTT,
                cfg.channel.snr_threshold_db,
                cfg.window,
                cfg.policy.ttt_s,
                cfg.mobility.frame_s,
            ),
            PolicyKind.PROACTIVE_MODEL.value: PolicySpec(
                PolicyKind.PROACTIVE_MODEL,
                cfg.channel.snr_threshold_db,
                cfg.window,
                cfg.policy.ttt_s,
                cfg.mobility.frame_s,
                model=model,
            ),
            PolicyKind.PROACTIVE_PERFECT.value: PolicySpec(
                PolicyKind.PROACTIVE_PERFECT,
                cfg.channel.snr_threshold_db,
                cfg.window,
                cfg.policy.ttt_s,
                cfg.mobility.frame_s,
            ),
        }
        rng_seed = derived_seed(cfg.seed, "evaluate", eval_scn.name)
        for i in range(cfg.policy.eval_traces):
            rng = generator(rng_seed, "trace", i)
            traj = scenario.sample_trajectory(i % 2, rng)
            trace = scenario.trace(traj, rng)
            for name, spec in policies.items():
                rows.append((name, eval_scn.name, i, evaluate_policy(trace, spec)))

    per_trace_path = out / "handover_per_trace.csv"
    summary_path = out / "handover_summary.json"
    comm_path = out / "comm_cost.json"
    write_metrics_csv(rows, per_trace_path)
    summary = summarize_metrics(rows)
    write_summary_json(summary, summary_path)

    n_params = param_count(model.params.dims)
    cent_total, cent_rate = comm_cost(
        CommScheme.CENTRALIZED,
        cfg.topology.n_sbs,
        cfg.policy.comm_sojourn_s,
        cfg.mobility.frame_s,
        n_params,
        cfg.policy.comm_bits,
    )
    fed_total, fed_rate = comm_cost(
        CommScheme.FEDERATED,
        cfg.topology.n_sbs,
        cfg.policy.comm_sojourn_s,
        cfg.mobility.frame_s,
        n_params,
        cfg.policy.comm_bits,
    )
    comm_path.write_text(
        json.dumps(
            {
                "centralized": {"total_kbits": cent_total, "rate_kbps": cent_rate},
                "federated": {"total_kbits": fed_total, "rate_kbps": fed_rate},
                "n_params": n_params,
                "bits": cfg.policy.comm_bits,
                "sojourn_s": cfg.policy.comm_sojourn_s,
            },
            indent=2,
            sort_keys=True,
        )
    )
    _update_manifest(
        cfg,
        {
            "handover_per_trace.csv": {"seed": cfg.seed, "rows": len(rows)},
            "handover_summary.json": {"seed": cfg.seed, "rows": len(summary)},
            "comm_cost.json": {"seed": cfg.seed},
        },
    )
    return {"per_trace": per_trace_path, "summary": summary_path, "comm_cost": comm_path}


def cmd_report(cfg: RunConfig) -> Path:
    """Collate the out directory into a human-readable report."""
    out = _out_dir(cfg)
    manifest = _require(out / "manifest.json", "manifest")
    data = json.loads(manifest.read_text())
    lines = [
        f"# Run report: {data['scenario']}",
        "",
        f"- seed: {data['seed']}",
        f"- config hash: {data['config_sha256']}",
        "",
        "## Artifacts",
        "",
    ]
    for name, entry in sorted(data["entries"].items()):
        detail = ", ".join(f"{k}={v}" for k, v in sorted(entry.items()))
        lines.append(f"- `{name}`: {detail}")
    summary_path = out / "handover_summary.json"
    if summary_path.exists():
        lines += ["", "## Handover comparison", ""]
        lines.append("| scenario | policy | mean handovers | mean avg SNR (dB) |")
        lines.append("|---|---|---|---|")
        for row in json.loads(summary_path.read_text()):
            lines.append(
                f"| {row['scenario']} | {row['policy']} "
                f"| {row['mean_handovers']:.3f} | {row['mean_avg_snr_db']:.3f} |"
            )
    comm_path = out / "comm_cost.json"
    if comm_path.exists():
        comm = json.loads(comm_path.read_text())
        lines += ["", "## Uplink communication cost", ""]
        for scheme in ("centralized", "federated"):
            c = comm[scheme]
            lines.append(
                f"- {scheme}: {c['total_kbits']:.4f} Kbits, {c['rate_kbps']:.4f} Kbps"
            )
    report_path = out / "report.md"
    report_path.write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return report_path


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedho",
        description="Federated proactive-handover simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "train", "evaluate", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="path to the YAML run configuration")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--out", help="output directory override")
        if name == "train":
            p.add_argument(
                "--mode",
                choices=("centralized", "fl_offline", "fl_online"),
                help="training mode",
            )
        if name == "evaluate":
            p.add_argument("--model", help="path to the trained model JSON")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config_path = args.config or os.environ.get("FEDHO_CONFIG")
        if not config_path:
            raise ConfigError("no config given (use --config or FEDHO_CONFIG)")
        seed = args.seed
        if seed is None and os.environ.get("FEDHO_SEED"):
            seed = int(os.environ["FEDHO_SEED"])
        out = args.out or os.environ.get("FEDHO_OUT")
        cfg = load_config(config_path, seed_override=seed, out_override=out)

        if args.command == "generate":
            paths = cmd_generate(cfg)
            print(f"wrote {', '.join(str(p) for p in paths.values())}")
        elif args.command == "train":
            mode = getattr(args, "mode", None) or os.environ.get("FEDHO_MODE")
            if not mode:
                raise ConfigError("train requires --mode (or FEDHO_MODE)")
            paths = cmd_train(cfg, mode)
            print(f"wrote {', '.join(str(p) for p in paths.values())}")
        elif args.command == "evaluate":
            model = getattr(args, "model", None) or os.environ.get("FEDHO_MODEL")
            paths = cmd_evaluate(cfg, model)
            print(f"wrote {', '.join(str(p) for p in paths.values())}")
        else:
            cmd_report(cfg)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (MissingInputError, FileNotFoundError) as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
