"""Per-frame SNR model: log-distance pathloss, correlated shadowing, smoothing.

Everything is computed in dB.  Shadowing follows a first-order autoregressive
process in traveled distance with state-dependent standard deviation and
correlation distance; the measurement filter is the single-coefficient
exponential recursion applied per SBS column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .topology import LinkState


@dataclass(frozen=True)
class ChannelParams:
    tx_power_dbm: float = 30.0
    beam_gain_db: float = 18.0
    noise_power_dbm: float = -77.0
    snr_threshold_db: float = 22.0
    pl_los: tuple[float, float] = (61.4, 20.0)  # intercept dB, slope per decade
    pl_nlos: tuple[float, float] = (72.0, 29.2)
    shadow_std_los_db: float = 5.8
    shadow_std_nlos_db: float = 8.7
    corr_dist_los_m: float = 10.0
    corr_dist_nlos_m: float = 13.0
    filter_coeff: float = 0.5

    def shadow_std_db(self, state: LinkState) -> float:
        return self.shadow_std_los_db if state is LinkState.LOS else self.shadow_std_nlos_db

    def corr_dist_m(self, state: LinkState) -> float:
        return self.corr_dist_los_m if state is LinkState.LOS else self.corr_dist_nlos_m


@dataclass
class SnrTrace:
    """Filtered SNR matrix, frames by SBSs, in dB."""

    values: np.ndarray  # (n_frames, n_sbs)
    frame_duration_s: float = 0.1
    group_id: int = 0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("trace values must be a 2-D matrix")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("trace values must be finite")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_sbs(self) -> int:
        return self.values.shape[1]

    def write_csv(self, path: str | Path) -> None:
        header = "frame," + ",".join(f"sbs_{b}" for b in range(self.n_sbs))
        lines = [header]
        for f in range(self.n_frames):
            lines.append(f"{f}," + ",".join(f"{v:.4f}" for v in self.values[f]))
        Path(path).write_text("\n".join(lines) + "\n")


def pathloss_db(
    distance_m: float | np.ndarray, state: LinkState, params: ChannelParams
) -> float | np.ndarray:
    """Log-distance pathloss for the given link state; distance must be > 0."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0.0):
        raise ValueError("distance must be positive")
    intercept, slope = params.pl_los if state is LinkState.LOS else params.pl_nlos
    out = intercept + slope * np.log10(d)
    return float(out) if np.isscalar(distance_m) else out


def ar_coefficient(step_dist_m: float | np.ndarray, corr_dist_m: float | np.ndarray):
    """Autocorrelation of the shadowing process over a traveled distance."""
    return np.exp(-np.asarray(step_dist_m, dtype=float) / np.asarray(corr_dist_m, dtype=float))


def shadowing_step(
    prev_db: float,
    step_dist_m: float,
    state: LinkState,
    params: ChannelParams,
    rng: np.random.Generator,
) -> float:
    """Advance the shadowing process by one displacement.

    Stationary standard deviation equals the configured std for the state;
    a zero step returns prev_db unchanged.
    """
    if step_dist_m < 0.0:
        raise ValueError("step distance must be non-negative")
    if not math.isfinite(prev_db):
        raise ValueError("previous shadowing value must be finite")
    rho = float(ar_coefficient(step_dist_m, params.corr_dist_m(state)))
    sigma = params.shadow_std_db(state)
    return rho * prev_db + math.sqrt(1.0 - rho * rho) * sigma * rng.standard_normal()


def stationary_shadowing(
    state: LinkState, params: ChannelParams, rng: np.random.Generator
) -> float:
    """Draw from the stationary shadowing distribution of the state."""
    return params.shadow_std_db(state) * rng.standard_normal()


def snr_db(
    params: ChannelParams,
    pathloss: float | np.ndarray,
    shadow: float | np.ndarray,
) -> float | np.ndarray:
    """Link budget in dB: tx power + beam gain - pathloss - shadow - noise."""
    out = (
        params.tx_power_dbm
        + params.beam_gain_db
        - np.asarray(pathloss, dtype=float)
        - np.asarray(shadow, dtype=float)
        - params.noise_power_dbm
    )
    return float(out) if np.isscalar(pathloss) and np.isscalar(shadow) else out


@njit(cache=True)
def _smooth_kernel(raw: np.ndarray, coeff: float, out: np.ndarray) -> None:
    n_rows, n_cols = raw.shape
    keep = 1.0 - coeff
    for c in range(n_cols):
        prev = raw[0, c]
        out[0, c] = prev
        for r in range(1, n_rows):
            prev = coeff * raw[r, c] + keep * prev
            out[r, c] = prev


@njit(cache=True)
def _ar_series_kernel(
    rho: np.ndarray,
    noise_scale: np.ndarray,
    init_scale: np.ndarray,
    reset: np.ndarray,
    z: np.ndarray,
    out: np.ndarray,
) -> None:
    """Columnwise AR recursion with re-initialization at reset rows.

    All arrays are (n_frames, n_cols); rows marked reset draw fresh from
    the stationary law (init_scale * z), other rows apply the first-order
    update rho * prev + noise_scale * z.
    """
    n_rows, n_cols = z.shape
    for c in range(n_cols):
        prev = 0.0
        for r in range(n_rows):
            if reset[r, c]:
                prev = init_scale[r, c] * z[r, c]
            else:
                prev = rho[r, c] * prev + noise_scale[r, c] * z[r, c]
            out[r, c] = prev


def ar_series(
    rho: np.ndarray,
    noise_scale: np.ndarray,
    init_scale: np.ndarray,
    reset: np.ndarray,
    z: np.ndarray,
) -> np.ndarray:
    """Shadowing series over (n_frames, n_cols) precomputed coefficients."""
    out = np.empty_like(z)
    _ar_series_kernel(
        np.ascontiguousarray(rho, dtype=float),
        np.ascontiguousarray(noise_scale, dtype=float),
        np.ascontiguousarray(init_scale, dtype=float),
        np.ascontiguousarray(reset),
        np.ascontiguousarray(z, dtype=float),
        out,
    )
    return out


def smooth_columns(raw: np.ndarray, coeff: float) -> np.ndarray:
    """Exponential smoothing down each column; first row passes through."""
    if not 0.0 < coeff <= 1.0:
        raise ValueError("filter coefficient must be in (0, 1]")
    raw = np.ascontiguousarray(raw, dtype=float)
    out = np.empty_like(raw)
    _smooth_kernel(raw, float(coeff), out)
    return out


def smooth_trace(raw: SnrTrace, coeff: float) -> SnrTrace:
    """Apply the measurement filter per SBS column; shape is preserved."""
    return SnrTrace(
        values=smooth_columns(raw.values, coeff),
        frame_duration_s=raw.frame_duration_s,
        group_id=raw.group_id,
    )
