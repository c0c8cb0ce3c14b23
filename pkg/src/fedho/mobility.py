"""Vehicle trajectories along the roads and the Poisson user-arrival process."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .topology import Road


@dataclass(frozen=True)
class MobilityConfig:
    speed_min_mps: float = 15.0
    speed_max_mps: float = 20.0
    accel_std_mps2: float = 1.0
    frame_s: float = 0.1
    speed_floor_mps: float = 12.5
    speed_ceil_mps: float = 25.0
    arrival_rate_per_min: float = 50.0

    @property
    def speed_range(self) -> tuple[float, float]:
        return (self.speed_min_mps, self.speed_max_mps)


@dataclass
class Trajectory:
    """Per-frame positions of one traversal; ends when the road end is passed."""

    positions: np.ndarray  # (n_frames, 2), meters
    road_id: int
    entry_time_s: float = 0.0
    frame_s: float = 0.1

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=float)

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def sojourn_s(self) -> float:
        return self.n_frames * self.frame_s

    def write_csv(self, path: str | Path) -> None:
        lines = ["frame,x,y"]
        for f, (x, y) in enumerate(self.positions):
            lines.append(f"{f},{x:.4f},{y:.4f}")
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class ArrivalSchedule:
    """Merged arrival process over the roads, sorted by time."""

    arrivals: list[tuple[float, int]]  # (entry_time_s, road_id)
    rate_per_min_per_road: float
    horizon_s: float

    def in_window(self, start_s: float, end_s: float) -> list[tuple[float, int]]:
        return [a for a in self.arrivals if start_s <= a[0] < end_s]


def generate_trajectory(
    road: Road,
    speed_range_mps: tuple[float, float],
    accel_std_mps2: float,
    frame_s: float,
    rng: np.random.Generator,
    speed_floor_mps: float = 12.5,
    speed_ceil_mps: float = 25.0,
) -> Trajectory:
    """Random walk in speed along the road, sampled once per frame.

    Initial speed is uniform in speed_range_mps; each frame adds a Gaussian
    acceleration impulse and clamps the speed to the configured bounds.
    """
    lo, hi = speed_range_mps
    if not (0.0 < lo <= hi):
        raise ValueError("speed range must satisfy 0 < min <= max")
    if accel_std_mps2 < 0.0:
        raise ValueError("acceleration std must be non-negative")
    speed = float(rng.uniform(lo, hi))
    length = road.length
    # Pre-draw one acceleration per possible frame (bounded by the floor speed).
    max_steps = int(length / (speed_floor_mps * frame_s)) + 2
    accels = rng.normal(0.0, accel_std_mps2, size=max_steps)
    arcs = [0.0]
    arc = 0.0
    for accel in accels:
        speed = min(max(speed + accel * frame_s, speed_floor_mps), speed_ceil_mps)
        arc += speed * frame_s
        if arc > length:
            break
        arcs.append(arc)
    start = np.asarray(road.start, dtype=float)
    positions = start[None, :] + np.asarray(arcs)[:, None] * road.unit[None, :]
    return Trajectory(positions=positions, road_id=road.group_id - 1, frame_s=frame_s)


def generate_arrivals(
    rate_per_min_per_road: float,
    roads: int,
    horizon_s: float,
    rng: np.random.Generator,
) -> ArrivalSchedule:
    """Homogeneous Poisson arrivals per road, merged and time-sorted."""
    if rate_per_min_per_road < 0.0:
        raise ValueError("arrival rate must be non-negative")
    if horizon_s <= 0.0:
        raise ValueError("horizon must be positive")
    arrivals: list[tuple[float, int]] = []
    rate_per_s = rate_per_min_per_road / 60.0
    for road_id in range(roads):
        if rate_per_s == 0.0:
            continue
        t = 0.0
        while True:
            t += float(rng.exponential(1.0 / rate_per_s))
            if t >= horizon_s:
                break
            arrivals.append((t, road_id))
    arrivals.sort()
    return ArrivalSchedule(
        arrivals=arrivals,
        rate_per_min_per_road=rate_per_min_per_road,
        horizon_s=horizon_s,
    )
