"""Region geometry: SBS rows, travel roads, rectangular obstacles, LOS/NLOS.

The default region holds eight SBSs in two hexagonally pitched rows of four,
two straight 800 m roads between the rows, and four rectangular obstacles
placed at random in the strips between each road and the SBS row it faces.
A user-SBS link is NLOS exactly when the connecting segment crosses (or
touches) an obstacle rectangle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from numba import njit


class LinkState(Enum):
    LOS = "los"
    NLOS = "nlos"


class RoadDirection(Enum):
    RIGHT = "right"
    LEFT = "left"


@dataclass(frozen=True)
class Road:
    """Straight road segment; travel runs from start to end."""

    start: tuple[float, float]
    end: tuple[float, float]
    direction: RoadDirection
    group_id: int

    def __post_init__(self) -> None:
        if self.length <= 0.0:
            raise ValueError("road length must be positive")
        dx = self.end[0] - self.start[0]
        expected = RoadDirection.RIGHT if dx > 0 else RoadDirection.LEFT
        if dx != 0.0 and expected is not self.direction:
            raise ValueError("road direction inconsistent with endpoints")

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)

    @property
    def unit(self) -> np.ndarray:
        v = np.asarray(self.end, dtype=float) - np.asarray(self.start, dtype=float)
        return v / self.length

    def point_at(self, arc_m: float) -> np.ndarray:
        """Position after traveling arc_m meters from the start."""
        return np.asarray(self.start, dtype=float) + arc_m * self.unit


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle with strictly positive extent."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("rectangle must have positive width and height")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0


@dataclass(frozen=True)
class TopologyConfig:
    n_sbs: int = 8
    cell_radius_m: float = 100.0
    road_length_m: float = 800.0
    road_gap_m: float = 30.0
    sbs_road_clearance_m: float = 60.0
    n_obstacles: int = 4
    obstacle_min_m: float = 20.0
    obstacle_max_m: float = 60.0
    max_placement_attempts: int = 1000


@dataclass(frozen=True)
class RegionTopology:
    """Immutable region geometry; safe to share across workers."""

    sbs_positions: np.ndarray  # (n_sbs, 2), meters
    roads: tuple[Road, ...]
    obstacles: tuple[Rect, ...]
    cell_radius_m: float

    def __post_init__(self) -> None:
        self.sbs_positions.setflags(write=False)

    @property
    def n_sbs(self) -> int:
        return self.sbs_positions.shape[0]


def _segment_point_distance(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(a + t * ab - p))


@njit(cache=True)
def _slab_test_kernel(
    starts: np.ndarray,
    ends: np.ndarray,
    x0: float,
    y0: float,
    x1: float,
    y1: float,
    blocked: np.ndarray,
) -> None:
    """Mark segments whose closed parameter interval meets the rectangle."""
    for i in range(starts.shape[0]):
        if blocked[i]:
            continue
        ax = starts[i, 0]
        ay = starts[i, 1]
        dx = ends[i, 0] - ax
        dy = ends[i, 1] - ay
        if dx == 0.0 and dy == 0.0:
            continue
        tmin = 0.0
        tmax = 1.0
        if dx == 0.0:
            if ax < x0 or ax > x1:
                continue
        else:
            t0 = (x0 - ax) / dx
            t1 = (x1 - ax) / dx
            if t0 > t1:
                t0, t1 = t1, t0
            if t0 > tmin:
                tmin = t0
            if t1 < tmax:
                tmax = t1
        if dy == 0.0:
            if ay < y0 or ay > y1:
                continue
        else:
            t0 = (y0 - ay) / dy
            t1 = (y1 - ay) / dy
            if t0 > t1:
                t0, t1 = t1, t0
            if t0 > tmin:
                tmin = t0
            if t1 < tmax:
                tmax = t1
        if tmin <= tmax:
            blocked[i] = True


def segments_intersect_rect(
    starts: np.ndarray,
    ends: np.ndarray,
    rect: Rect,
    blocked: np.ndarray | None = None,
) -> np.ndarray:
    """Slab test: do segments meet the closed rectangle?

    starts/ends are (n, 2).  Touching the boundary counts as intersecting;
    zero-length segments never intersect.  When ``blocked`` is given, hits
    are OR-ed into it in place (rows already True are skipped).
    """
    starts = np.ascontiguousarray(np.atleast_2d(np.asarray(starts, dtype=float)))
    ends = np.ascontiguousarray(np.atleast_2d(np.asarray(ends, dtype=float)))
    if blocked is None:
        blocked = np.zeros(len(starts), dtype=np.bool_)
    _slab_test_kernel(starts, ends, rect.x0, rect.y0, rect.x1, rect.y1, blocked)
    return blocked


def segment_intersects_rect(
    a: tuple[float, float] | np.ndarray, b: tuple[float, float] | np.ndarray, rect: Rect
) -> bool:
    return bool(
        segments_intersect_rect(np.asarray([a], dtype=float), np.asarray([b], dtype=float), rect)[0]
    )


def build_region(config: TopologyConfig, seed: int) -> RegionTopology:
    """Construct the region deterministically from (config, seed).

    Obstacles are sampled uniformly in the strips between each road and the
    SBS row it faces, and resampled while they intersect a road.  Raises
    ValueError when a slot cannot be placed within the attempt budget.
    """
    if config.n_sbs <= 0:
        raise ValueError("n_sbs must be positive")
    if not (0.0 < config.obstacle_min_m <= config.obstacle_max_m):
        raise ValueError("obstacle size range must be positive and ordered")
    rng = np.random.default_rng(seed)

    length = config.road_length_m
    gap = config.road_gap_m
    clear = config.sbs_road_clearance_m
    road_top = Road((0.0, 0.0), (length, 0.0), RoadDirection.RIGHT, group_id=1)
    road_bot = Road((length, -gap), (0.0, -gap), RoadDirection.LEFT, group_id=2)
    roads = (road_top, road_bot)

    pitch = config.cell_radius_m * math.sqrt(3.0)
    n_top = (config.n_sbs + 1) // 2
    n_bot = config.n_sbs - n_top
    y_top = clear
    y_bot = -gap - clear
    positions = []
    for i in range(n_top):
        x = length / 2.0 + (i - (n_top - 1) / 2.0) * pitch
        positions.append((x, y_top))
    for i in range(n_bot):
        # Bottom row staggered by half a pitch (hexagonal lattice).
        x = length / 2.0 + (i - (n_bot - 1) / 2.0) * pitch + pitch / 2.0
        positions.append((x, y_bot))
    sbs = np.asarray(positions, dtype=float)

    for road in roads:
        a = np.asarray(road.start, dtype=float)
        b = np.asarray(road.end, dtype=float)
        for p in sbs:
            if _segment_point_distance(a, b, p) < clear - 1e-9:
                raise ValueError("SBS closer to a road than the configured clearance")

    strips = (
        (0.0, y_top),  # between the top road and the top SBS row
        (y_bot, -gap),  # between the bottom SBS row and the bottom road
    )
    obstacles: list[Rect] = []
    for k in range(config.n_obstacles):
        lo, hi = strips[k % 2]
        placed = False
        for _ in range(config.max_placement_attempts):
            w = rng.uniform(config.obstacle_min_m, config.obstacle_max_m)
            h = rng.uniform(config.obstacle_min_m, config.obstacle_max_m)
            cx = rng.uniform(0.0, length)
            cy = rng.uniform(lo, hi)
            rect = Rect(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
            if any(segment_intersects_rect(r.start, r.end, rect) for r in roads):
                continue
            obstacles.append(rect)
            placed = True
            break
        if not placed:
            raise ValueError(
                f"obstacle placement failed after {config.max_placement_attempts} attempts"
            )

    return RegionTopology(
        sbs_positions=sbs,
        roads=roads,
        obstacles=tuple(obstacles),
        cell_radius_m=config.cell_radius_m,
    )


def nlos_mask(topology: RegionTopology, positions: np.ndarray, sbs_index: int) -> np.ndarray:
    """Boolean mask over positions: True where the link to the SBS is NLOS."""
    if not 0 <= sbs_index < topology.n_sbs:
        raise ValueError(f"sbs_index {sbs_index} out of range")
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    target = np.broadcast_to(topology.sbs_positions[sbs_index], positions.shape)
    blocked = np.zeros(len(positions), dtype=np.bool_)
    for rect in topology.obstacles:
        segments_intersect_rect(positions, target, rect, blocked)
    return blocked


def nlos_matrix(topology: RegionTopology, positions: np.ndarray) -> np.ndarray:
    """(n_positions, n_sbs) mask: True where the link to each SBS is NLOS."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    n_pos = positions.shape[0]
    n_sbs = topology.n_sbs
    starts = np.repeat(positions, n_sbs, axis=0)
    ends = np.tile(topology.sbs_positions, (n_pos, 1))
    blocked = np.zeros(n_pos * n_sbs, dtype=np.bool_)
    for rect in topology.obstacles:
        segments_intersect_rect(starts, ends, rect, blocked)
    return blocked.reshape(n_pos, n_sbs)


def classify_link(
    topology: RegionTopology, user_pos: tuple[float, float] | np.ndarray, sbs_index: int
) -> LinkState:
    """LOS unless the open user-SBS segment meets an obstacle rectangle."""
    blocked = nlos_mask(topology, np.asarray([user_pos], dtype=float), sbs_index)[0]
    return LinkState.NLOS if blocked else LinkState.LOS


def topology_to_dict(topology: RegionTopology) -> dict:
    """JSON-friendly dump with positions rounded to centimeters."""
    return {
        "cell_radius_m": round(topology.cell_radius_m, 2),
        "sbs_positions": [[round(x, 2), round(y, 2)] for x, y in topology.sbs_positions],
        "roads": [
            {
                "start": [round(v, 2) for v in r.start],
                "end": [round(v, 2) for v in r.end],
                "direction": r.direction.value,
                "group_id": r.group_id,
            }
            for r in topology.roads
        ],
        "obstacles": [
            [round(r.x0, 2), round(r.y0, 2), round(r.x1, 2), round(r.y1, 2)]
            for r in topology.obstacles
        ],
    }


def dump_topology_json(topology: RegionTopology, path: str | Path) -> None:
    Path(path).write_text(json.dumps(topology_to_dict(topology), indent=2, sort_keys=True))
