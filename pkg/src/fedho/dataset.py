"""Samples for next-SBS prediction: traces, oracle labels, grouped datasets.

A sample pairs the stacked observation windows of every SBS with a one-hot
label naming the SBS a perfect predictor would hand over to.  Labels come
from replaying the trace with the proactive selection rule applied to the
true future SNRs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import (
    ChannelParams,
    SnrTrace,
    ar_coefficient,
    ar_series,
    pathloss_db,
    smooth_columns,
)
from .mobility import MobilityConfig, Trajectory, generate_trajectory
from .rng import generator
from .topology import LinkState, RegionTopology, segments_intersect_rect


@dataclass(frozen=True)
class WindowConfig:
    n_obs: int = 3
    n_pred: int = 5

    def __post_init__(self) -> None:
        if self.n_obs < 1 or self.n_pred < 1:
            raise ValueError("window lengths must be at least one frame")


@dataclass(frozen=True)
class StoragePolicy:
    """How much trajectory history a user keeps for local training."""

    kind: str  # "traditional" | "streaming"
    n_trajectories: int = 1
    fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in ("traditional", "streaming"):
            raise ValueError(f"unknown storage policy {self.kind!r}")
        if self.kind == "traditional" and self.n_trajectories < 1:
            raise ValueError("traditional storage needs at least one trajectory")
        if self.kind == "streaming" and not 0.0 < self.fraction <= 1.0:
            raise ValueError("streaming fraction must be in (0, 1]")

    @classmethod
    def traditional(cls, n_trajectories: int) -> "StoragePolicy":
        return cls(kind="traditional", n_trajectories=n_trajectories)

    @classmethod
    def streaming(cls, fraction: float = 0.5) -> "StoragePolicy":
        return cls(kind="streaming", fraction=fraction)


@dataclass
class Sample:
    x: np.ndarray  # (n_sbs * n_obs,) SNR dB, one window per SBS
    y: np.ndarray  # (n_sbs,) one-hot next-SBS label
    group_id: int

    @property
    def label(self) -> int:
        return int(np.argmax(self.y))


@dataclass
class Dataset:
    samples: list[Sample]
    split: str = "train"

    def __len__(self) -> int:
        return len(self.samples)

    def group_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for s in self.samples:
            counts[s.group_id] = counts.get(s.group_id, 0) + 1
        return counts

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        X = np.stack([s.x for s in self.samples])
        Y = np.stack([s.y for s in self.samples])
        return X, Y

    def write_csv(self, path: str | Path) -> None:
        dim = len(self.samples[0].x) if self.samples else 0
        header = "group_id," + ",".join(f"x_{i}" for i in range(dim)) + ",label"
        lines = [header]
        for s in self.samples:
            xs = ",".join(f"{v:.6f}" for v in s.x)
            lines.append(f"{s.group_id},{xs},{s.label}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read_csv(cls, path: str | Path, n_sbs: int, split: str = "train") -> "Dataset":
        text = Path(path).read_text().strip().splitlines()
        samples = []
        for line in text[1:]:
            parts = line.split(",")
            group = int(parts[0])
            x = np.asarray([float(v) for v in parts[1:-1]])
            label = int(parts[-1])
            y = np.zeros(n_sbs)
            y[label] = 1.0
            samples.append(Sample(x=x, y=y, group_id=group))
        return cls(samples=samples, split=split)


def nlos_matrix(topology: RegionTopology, positions: np.ndarray) -> np.ndarray:
    """(n_frames, n_sbs) mask: True where the link to each SBS is NLOS."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    n_frames = positions.shape[0]
    n_sbs = topology.n_sbs
    starts = np.repeat(positions, n_sbs, axis=0)
    ends = np.tile(topology.sbs_positions, (n_frames, 1))
    blocked = np.zeros(n_frames * n_sbs, dtype=np.bool_)
    for rect in topology.obstacles:
        segments_intersect_rect(starts, ends, rect, blocked)
    return blocked.reshape(n_frames, n_sbs)


def trace_from_trajectory(
    topology: RegionTopology,
    params: ChannelParams,
    traj: Trajectory,
    rng: np.random.Generator,
) -> SnrTrace:
    """Filtered SNR trace of one traversal.

    Per SBS: classify every frame's link, evaluate pathloss at the
    user-SBS distance, advance the shadowing process by the inter-frame
    displacement (re-initialized from the stationary law on LOS/NLOS
    flips), assemble the link budget, then smooth.
    """
    pos = traj.positions
    if pos.shape[0] == 0:
        raise ValueError("trajectory is empty")
    n_frames = pos.shape[0]
    steps = np.zeros((n_frames, 1))
    if n_frames > 1:
        steps[1:, 0] = np.linalg.norm(np.diff(pos, axis=0), axis=1)

    nlos = nlos_matrix(topology, pos)
    dist = np.linalg.norm(pos[:, None, :] - topology.sbs_positions[None, :, :], axis=2)
    pl = np.where(
        nlos,
        pathloss_db(dist, LinkState.NLOS, params),
        pathloss_db(dist, LinkState.LOS, params),
    )
    sigma = np.where(nlos, params.shadow_std_nlos_db, params.shadow_std_los_db)
    corr = np.where(nlos, params.corr_dist_nlos_m, params.corr_dist_los_m)
    rho = np.asarray(ar_coefficient(steps, corr))
    noise_scale = np.sqrt(1.0 - rho * rho) * sigma
    reset = np.empty(nlos.shape, dtype=bool)
    reset[0] = True
    reset[1:] = nlos[1:] != nlos[:-1]
    z = rng.standard_normal(nlos.shape)
    shadow = ar_series(rho, noise_scale, sigma, reset, z)
    raw = params.tx_power_dbm + params.beam_gain_db - pl - shadow - params.noise_power_dbm

    smoothed = smooth_columns(raw, params.filter_coeff)
    return SnrTrace(
        values=smoothed,
        frame_duration_s=traj.frame_s,
        group_id=traj.road_id + 1,
    )


def oracle_next_sbs(
    trace: SnrTrace,
    frame: int,
    current_sbs: int,
    cfg: WindowConfig,
    gamma_th: float,
) -> int:
    """Next SBS under perfect prediction of the coming n_pred frames.

    Candidates keep every future frame at or above the threshold; the pick
    maximizes the mean future SNR over candidates, falling back to all SBSs
    when no candidate exists.  Ties break to the lowest index.
    """
    del current_sbs  # selection does not depend on the serving SBS
    future = trace.values[frame + 1 : frame + 1 + cfg.n_pred]
    if future.shape[0] < cfg.n_pred:
        raise ValueError("prediction window exceeds trace length")
    means = future.mean(axis=0)
    candidates = np.all(future >= gamma_th, axis=0)
    if candidates.any():
        masked = np.where(candidates, means, -np.inf)
        return int(np.argmax(masked))
    return int(np.argmax(means))


def extract_samples(trace: SnrTrace, cfg: WindowConfig, gamma_th: float) -> list[Sample]:
    """Replay the trace and emit one sample per acted-on trigger.

    Association starts on the strongest first-frame SBS.  Whenever the
    serving SNR drops below the threshold (and no freeze is active), the
    observation windows become a sample labeled by the oracle choice; the
    chosen SBS is adopted and triggering is suppressed for n_pred frames.
    """
    vals = trace.values
    n_frames, n_sbs = vals.shape
    if n_frames < cfg.n_obs + cfg.n_pred:
        raise ValueError("trace too short for the configured windows")
    serving = int(np.argmax(vals[0]))
    samples: list[Sample] = []
    next_eval = cfg.n_obs - 1
    for f in range(cfg.n_obs - 1, n_frames - cfg.n_pred):
        if f < next_eval:
            continue
        if vals[f, serving] >= gamma_th:
            continue
        x = vals[f - cfg.n_obs + 1 : f + 1].T.reshape(-1).copy()
        target = oracle_next_sbs(trace, f, serving, cfg, gamma_th)
        y = np.zeros(n_sbs)
        y[target] = 1.0
        samples.append(Sample(x=x, y=y, group_id=trace.group_id))
        serving = target
        next_eval = f + cfg.n_pred
    return samples


@dataclass(frozen=True)
class Scenario:
    """World bundle: geometry, channel, windows and mobility for one setting."""

    topology: RegionTopology
    channel: ChannelParams
    window: WindowConfig
    mobility: MobilityConfig

    @property
    def gamma_th(self) -> float:
        return self.channel.snr_threshold_db

    @property
    def input_dim(self) -> int:
        return self.topology.n_sbs * self.window.n_obs

    def sample_trajectory(self, road_index: int, rng: np.random.Generator) -> Trajectory:
        road = self.topology.roads[road_index]
        return generate_trajectory(
            road,
            self.mobility.speed_range,
            self.mobility.accel_std_mps2,
            self.mobility.frame_s,
            rng,
            self.mobility.speed_floor_mps,
            self.mobility.speed_ceil_mps,
        )

    def trace(self, traj: Trajectory, rng: np.random.Generator) -> SnrTrace:
        return trace_from_trajectory(self.topology, self.channel, traj, rng)

    def trajectory_samples(
        self, road_index: int, rng: np.random.Generator
    ) -> tuple[Trajectory, SnrTrace, list[Sample]]:
        traj = self.sample_trajectory(road_index, rng)
        trace = self.trace(traj, rng)
        return traj, trace, extract_samples(trace, self.window, self.gamma_th)


def user_history(
    scenario: Scenario,
    home_road: int,
    n_trajectories: int,
    iid: bool,
    rng: np.random.Generator,
) -> list[list[Sample]]:
    """Sample lists of a user's stored trajectories, oldest first.

    Non-IID users drive their home road only; IID users alternate roads
    starting from the home road.
    """
    history = []
    for i in range(n_trajectories):
        road = (home_road + i) % 2 if iid else home_road
        _, _, samples = scenario.trajectory_samples(road, rng)
        history.append(samples)
    return history


def build_test_set(scenario: Scenario, test_size: int, seed: int) -> Dataset:
    """Balanced test set: equal sample counts from each road group.

    Raises when the scenario cannot produce enough samples within a bounded
    trajectory budget (for example when triggering is too rare).
    """
    if test_size % 2 != 0:
        raise ValueError("test_size must split evenly across the two groups")
    per_group = test_size // 2
    rng = generator(seed, "gen-test")
    groups: dict[int, list[Sample]] = {1: [], 2: []}
    budget = max(200, 4 * per_group)
    t = 0
    while (len(groups[1]) < per_group or len(groups[2]) < per_group) and t < budget:
        road = t % 2
        _, _, samples = scenario.trajectory_samples(road, rng)
        groups[road + 1].extend(samples)
        t += 1
    if len(groups[1]) < per_group or len(groups[2]) < per_group:
        raise ValueError("insufficient generated trajectories for the requested test size")
    interleaved: list[Sample] = []
    for i in range(per_group):
        interleaved.append(groups[1][i])
        interleaved.append(groups[2][i])
    return Dataset(samples=interleaved, split="test")


def build_datasets(
    scenario: Scenario,
    n_users: int,
    storage: StoragePolicy,
    iid: bool,
    test_size: int,
    seed: int,
) -> tuple[list[Dataset], Dataset]:
    """Per-user local sets plus the balanced two-group test set.

    Test trajectories come from a dedicated stream, so they are disjoint
    from every user's training trajectories.
    """
    users: list[Dataset] = []
    for u in range(n_users):
        rng = generator(seed, "gen-user", u)
        home_road = u % 2
        if storage.kind == "traditional":
            history = user_history(scenario, home_road, storage.n_trajectories, iid, rng)
            samples = [s for traj_samples in history for s in traj_samples]
        else:
            _, _, samples = scenario.trajectory_samples(home_road, rng)
            samples = samples[: int(storage.fraction * len(samples))]
        users.append(Dataset(samples=samples, split="train"))
    return users, build_test_set(scenario, test_size, seed)
