"""Federated rounds: local storage policies, weighted aggregation, scheduling.

A round covers one wall-clock window of the arrival process.  Sampled users
train on whatever their storage policy retains, upload when their update
finishes, and are dropped if they leave the region or miss the deadline.
Receipts fold into the global model either all at once or as a running
weighted average; both give the same result.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .dataset import Sample, Scenario, StoragePolicy, extract_samples, user_history
from .mobility import ArrivalSchedule, generate_arrivals
from .neural import MlpModel, MlpParams, Scaler, TrainConfig, init_params, sgd_train
from .rng import generator


@dataclass(frozen=True)
class FlConfig:
    rounds: int
    storage: StoragePolicy
    round_duration_s: float = 60.0
    local_epochs: int = 10
    learning_rate: float = 0.05
    participation: float = 0.10
    aggregation: str = "streaming_async"  # or "batch"
    compute_time_s: float = 5.0
    batch_size: int = 1
    iid: bool = False
    hidden_nodes: int = 20
    checkpoint_every: int = 0

    def __post_init__(self) -> None:
        if self.aggregation not in ("batch", "streaming_async"):
            raise ValueError(f"unknown aggregation mode {self.aggregation!r}")
        if not 0.0 <= self.participation <= 1.0:
            raise ValueError("participation must be in [0, 1]")


@dataclass
class RoundLog:
    round_index: int
    participants: int
    sample_counts: list[int]
    weights: list[float]
    test_accuracy: float
    sim_time_s: float
    passing_users: int = 0

    @property
    def total_samples(self) -> int:
        return sum(self.sample_counts)


@dataclass
class AsyncAggState:
    """Running weighted average over model receipts within one round."""

    model: MlpParams | None = None
    total_samples: int = 0
    models_received: int = 0


def aggregate_batch(models: list[MlpParams], sizes: list[int]) -> MlpParams:
    """Sample-count weighted average of equally shaped models."""
    if not models:
        raise ValueError("no models to aggregate")
    if len(models) != len(sizes) or any(s <= 0 for s in sizes):
        raise ValueError("each model needs a positive sample count")
    dims = models[0].dims
    if any(m.dims != dims for m in models):
        raise ValueError("model shapes do not match")
    total = float(sum(sizes))
    acc = np.zeros_like(models[0].values)
    for m, s in zip(models, sizes):
        acc += (s / total) * m.values
    return MlpParams(dims, acc)


def aggregate_stream_step(state: AsyncAggState, incoming: MlpParams, size: int) -> AsyncAggState:
    """Fold one receipt into the running average.

    The first receipt is adopted verbatim; receipt k blends with weight
    size / (samples so far + size), which reproduces the batch average
    after the last receipt regardless of order.
    """
    if size <= 0:
        raise ValueError("sample count must be positive")
    if state.model is None:
        return AsyncAggState(model=incoming.copy(), total_samples=size, models_received=1)
    if incoming.dims != state.model.dims:
        raise ValueError("model shapes do not match")
    beta = size / (state.total_samples + size)
    blended = beta * incoming.values + (1.0 - beta) * state.model.values
    return AsyncAggState(
        model=MlpParams(state.model.dims, blended),
        total_samples=state.total_samples + size,
        models_received=state.models_received + 1,
    )


def assemble_local_set(history: list[list[Sample]], policy: StoragePolicy) -> list[Sample]:
    """Training samples a user can offer under its storage policy.

    Traditional storage concatenates the most recent n_trajectories sample
    lists; streaming storage keeps only the leading fraction of the current
    trajectory's samples.
    """
    if not history:
        raise ValueError("user history is empty")
    if policy.kind == "traditional":
        recent = history[-policy.n_trajectories :]
        return [s for traj in recent for s in traj]
    current = history[-1]
    return current[: int(policy.fraction * len(current))]


class LocalStore:
    """Per-user sample storage with streaming consumption semantics."""

    def __init__(self, policy: StoragePolicy) -> None:
        self.policy = policy
        self.trajectories: list[list[Sample]] = []

    def add_trajectory(self, samples: list[Sample]) -> None:
        self.trajectories.append(list(samples))

    def training_set(self) -> list[Sample]:
        if not self.trajectories:
            return []
        return assemble_local_set(self.trajectories, self.policy)

    def mark_consumed(self) -> None:
        """Streaming samples are discarded once used; traditional ones persist."""
        if self.policy.kind == "streaming":
            self.trajectories.clear()


def storage_growth_ratio(n_regions: int, n_trajectories: int, streaming_fraction: float) -> float:
    """Stored-sample ratio of traditional FL over streaming FL after n regions."""
    if n_regions <= 0 or n_trajectories <= 0 or not 0.0 < streaming_fraction <= 1.0:
        raise ValueError("invalid storage comparison inputs")
    return n_regions * n_trajectories / streaming_fraction


def local_update(
    global_params: MlpParams,
    X: np.ndarray,
    Y: np.ndarray,
    epochs: int,
    learning_rate: float,
    rng: np.random.Generator,
    batch_size: int = 1,
) -> MlpParams:
    """Initialize from the global model and run seeded SGD epochs."""
    if len(X) == 0:
        raise ValueError("local dataset is empty")
    cfg = TrainConfig(
        learning_rate=learning_rate,
        epochs=epochs,
        batch_size=batch_size,
        shuffle_seed=int(rng.integers(0, 2**63)),
    )
    return sgd_train(global_params, X, Y, cfg)


@dataclass
class FlRun:
    """Bindings shared by every round of one federated run."""

    scenario: Scenario
    cfg: FlConfig
    seed: int
    scaler: Scaler
    arrivals: ArrivalSchedule


def _participant_uploads(
    run: FlRun, global_params: MlpParams, round_index: int
) -> tuple[list[tuple[float, int, MlpParams, int]], int]:
    """Local updates of the users who finish before leaving or the deadline."""
    cfg = run.cfg
    start = round_index * cfg.round_duration_s
    end = start + cfg.round_duration_s
    candidates = run.arrivals.in_window(start, end)
    part_rng = generator(run.seed, "participation", round_index)
    uploads: list[tuple[float, int, MlpParams, int]] = []
    for j, (t_arrive, road) in enumerate(candidates):
        if part_rng.random() >= cfg.participation:
            continue
        user_rng = generator(run.seed, "user", round_index, j)
        current = run.scenario.sample_trajectory(road, user_rng)
        depart = t_arrive + current.sojourn_s
        if cfg.storage.kind == "streaming":
            trace = run.scenario.trace(current, user_rng)
            all_samples = extract_samples(trace, run.scenario.window, run.scenario.gamma_th)
            samples = assemble_local_set([all_samples], cfg.storage)
            data_ready = t_arrive + cfg.storage.fraction * current.sojourn_s
        else:
            history = user_history(
                run.scenario, road, cfg.storage.n_trajectories, cfg.iid, user_rng
            )
            samples = assemble_local_set(history, cfg.storage)
            data_ready = t_arrive
        if not samples:
            continue
        upload_t = data_ready + cfg.compute_time_s
        if upload_t > min(depart, end):
            continue
        X = run.scaler.transform(np.stack([s.x for s in samples]))
        Y = np.stack([s.y for s in samples])
        train_rng = generator(run.seed, "local-train", round_index, j)
        model_k = local_update(
            global_params, X, Y, cfg.local_epochs, cfg.learning_rate, train_rng, cfg.batch_size
        )
        uploads.append((upload_t, j, model_k, len(samples)))
    uploads.sort(key=lambda u: (u[0], u[1]))
    return uploads, len(candidates)


def run_round(
    global_params: MlpParams, round_index: int, run: FlRun
) -> tuple[MlpParams, RoundLog]:
    """One communication round; the global model carries over when nobody uploads."""
    uploads, passing = _participant_uploads(run, global_params, round_index)
    sizes = [u[3] for u in uploads]
    if uploads:
        if run.cfg.aggregation == "batch":
            new_global = aggregate_batch([u[2] for u in uploads], sizes)
        else:
            state = AsyncAggState()
            for _, _, model_k, size in uploads:
                state = aggregate_stream_step(state, model_k, size)
            new_global = state.model
        total = sum(sizes)
        weights = [s / total for s in sizes]
    else:
        new_global = global_params
        weights = []
    log = RoundLog(
        round_index=round_index,
        participants=len(uploads),
        sample_counts=sizes,
        weights=weights,
        test_accuracy=float("nan"),
        sim_time_s=(round_index + 1) * run.cfg.round_duration_s,
        passing_users=passing,
    )
    return new_global, log


def run_offline(
    scenario: Scenario,
    cfg: FlConfig,
    seed: int,
    test_X: np.ndarray,
    test_Y: np.ndarray,
    scaler: Scaler,
    init: MlpParams | None = None,
    on_round: Callable[[MlpModel, RoundLog], None] | None = None,
) -> tuple[MlpModel, list[RoundLog]]:
    """Federated training from scratch (or from init) with per-round evaluation."""
    dims = (scenario.input_dim, cfg.hidden_nodes, scenario.topology.n_sbs)
    if init is None:
        global_params = init_params(dims, generator(seed, "init"))
    else:
        global_params = init.copy()
    arrivals = generate_arrivals(
        scenario.mobility.arrival_rate_per_min,
        len(scenario.topology.roads),
        max(cfg.rounds, 1) * cfg.round_duration_s,
        generator(seed, "arrivals"),
    )
    run = FlRun(scenario=scenario, cfg=cfg, seed=seed, scaler=scaler, arrivals=arrivals)
    logs: list[RoundLog] = []
    for t in range(cfg.rounds):
        global_params, log = run_round(global_params, t, run)
        model = MlpModel(params=global_params, scaler=scaler)
        log.test_accuracy = model.accuracy(test_X, test_Y)
        logs.append(log)
        if on_round is not None:
            on_round(model, log)
    return MlpModel(params=global_params, scaler=scaler), logs


def run_online(
    offline_model: MlpModel,
    scenario: Scenario,
    cfg: FlConfig,
    seed: int,
    test_X: np.ndarray,
    test_Y: np.ndarray,
) -> tuple[MlpModel, list[RoundLog]]:
    """Continue training from the offline model under the shifted mobility.

    The offline scaler stays frozen so the transferred parameters keep
    seeing inputs in the representation they were trained on.
    """
    return run_offline(
        scenario,
        cfg,
        seed,
        test_X,
        test_Y,
        offline_model.scaler,
        init=offline_model.params,
    )


def time_average_accuracy(logs: list[RoundLog], horizon_s: float) -> float:
    """Mean per-round accuracy over rounds completing within the horizon."""
    window = [log.test_accuracy for log in logs if log.sim_time_s <= horizon_s]
    if not window:
        raise ValueError("no rounds inside the averaging horizon")
    return float(np.mean(window))


def write_curve_csv(logs: list[RoundLog], path: str | Path) -> None:
    lines = ["round,participants,total_samples,test_accuracy"]
    for log in logs:
        lines.append(
            f"{log.round_index},{log.participants},{log.total_samples},{log.test_accuracy:.6f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
