"""Handover policy replay and the uplink communication-cost arithmetic.

Four policies share the same trigger condition (serving SNR below the
threshold at a frame boundary) and differ in when and where they switch:
immediately to the strongest current SBS, after a time-to-trigger run,
or proactively to a predicted SBS with the association frozen for the
prediction window.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .channel import SnrTrace
from .dataset import WindowConfig, oracle_next_sbs
from .neural import MlpModel


class PolicyKind(Enum):
    REACTIVE_NO_TTT = "reactive_no_ttt"
    REACTIVE_TTT = "reactive_ttt"
    PROACTIVE_MODEL = "proactive_model"
    PROACTIVE_PERFECT = "proactive_perfect"


class CommScheme(Enum):
    CENTRALIZED = "centralized"
    FEDERATED = "federated"


@dataclass(frozen=True)
class PolicySpec:
    kind: PolicyKind
    gamma_th_db: float = 22.0
    window: WindowConfig = WindowConfig()
    ttt_s: float = 0.5
    frame_s: float = 0.1
    model: MlpModel | None = None

    @property
    def ttt_frames(self) -> int:
        return max(1, round(self.ttt_s / self.frame_s))


@dataclass
class HandoverMetrics:
    handover_count: int
    avg_snr_db: float
    trigger_count: int


def evaluate_policy(trace: SnrTrace, policy: PolicySpec) -> HandoverMetrics:
    """Replay one traversal under the policy and collect its metrics.

    Association starts on the strongest first-frame SBS; decisions taken at
    the end of frame f serve from frame f+1.  The average SNR is the mean
    serving-SBS value over every frame of the traversal.
    """
    vals = trace.values
    n_frames, n_sbs = vals.shape
    if n_frames < 1:
        raise ValueError("trace is empty")
    proactive = policy.kind in (PolicyKind.PROACTIVE_MODEL, PolicyKind.PROACTIVE_PERFECT)
    if proactive and n_frames < policy.window.n_obs + policy.window.n_pred:
        raise ValueError("trace too short for proactive replay")
    if policy.kind is PolicyKind.PROACTIVE_MODEL:
        if policy.model is None:
            raise ValueError("proactive_model policy needs a model")
        if policy.model.params.dims[0] != n_sbs * policy.window.n_obs:
            raise ValueError("model input size does not match the trace")

    gamma = policy.gamma_th_db
    n_obs = policy.window.n_obs
    n_pred = policy.window.n_pred
    serving = int(np.argmax(vals[0]))
    served = np.empty(n_frames)
    handovers = 0
    triggers = 0
    ttt_run = 0
    next_eval = 0
    for f in range(n_frames):
        served[f] = vals[f, serving]
        if f == n_frames - 1:
            break  # a decision here would never serve a frame

        if policy.kind is PolicyKind.REACTIVE_NO_TTT:
            if vals[f, serving] < gamma:
                triggers += 1
                target = int(np.argmax(vals[f]))
                if target != serving:
                    handovers += 1
                    serving = target
        elif policy.kind is PolicyKind.REACTIVE_TTT:
            if vals[f, serving] < gamma:
                triggers += 1
                ttt_run += 1
                if ttt_run >= policy.ttt_frames:
                    target = int(np.argmax(vals[f]))
                    if target != serving:
                        handovers += 1
                        serving = target
                    ttt_run = 0
            else:
                ttt_run = 0
        else:
            if f < next_eval or vals[f, serving] >= gamma:
                continue
            triggers += 1
            if f < n_obs - 1:
                continue  # not enough history to form the observation input
            if policy.kind is PolicyKind.PROACTIVE_PERFECT:
                if f + n_pred > n_frames - 1:
                    continue  # future window runs past the trace
                target = oracle_next_sbs(trace, f, serving, policy.window, gamma)
            else:
                x = vals[f - n_obs + 1 : f + 1].T.reshape(-1)
                target = int(policy.model.predict(x)[0])
            if target != serving:
                handovers += 1
                serving = target
            next_eval = f + n_pred

    return HandoverMetrics(
        handover_count=handovers,
        avg_snr_db=float(served.mean()),
        trigger_count=triggers,
    )


def comm_cost(
    scheme: CommScheme,
    n_sbs: int,
    sojourn_s: float,
    frame_s: float,
    n_params: int,
    bits: int,
) -> tuple[float, float]:
    """Uplink load per user: (total kilobits, average rate in kbps).

    Centralized learning uploads every per-frame SNR measurement over the
    sojourn; federated learning uploads one quantized model instead.
    """
    if sojourn_s <= 0.0:
        raise ValueError("sojourn time must be positive")
    if frame_s <= 0.0:
        raise ValueError("frame duration must be positive")
    if n_sbs < 0 or n_params < 0 or bits < 0:
        raise ValueError("counts must be non-negative")
    if scheme is CommScheme.CENTRALIZED:
        total_bits = n_sbs * (sojourn_s / frame_s) * bits
    else:
        total_bits = n_params * bits
    total_kbits = total_bits / 1000.0
    return total_kbits, total_kbits / sojourn_s


def write_metrics_csv(
    rows: list[tuple[str, str, int, HandoverMetrics]], path: str | Path
) -> None:
    """Per-trace metrics: policy, scenario, trace_id, handovers, avg SNR."""
    lines = ["policy,scenario,trace_id,handovers,avg_snr_db"]
    for policy_name, scenario_name, trace_id, m in rows:
        lines.append(
            f"{policy_name},{scenario_name},{trace_id},{m.handover_count},{m.avg_snr_db:.4f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def summarize_metrics(
    rows: list[tuple[str, str, int, HandoverMetrics]]
) -> list[dict]:
    """Aggregate means per (scenario, policy), ordered deterministically."""
    buckets: dict[tuple[str, str], list[HandoverMetrics]] = {}
    for policy_name, scenario_name, _, m in rows:
        buckets.setdefault((scenario_name, policy_name), []).append(m)
    summary = []
    for (scenario_name, policy_name), ms in sorted(buckets.items()):
        summary.append(
            {
                "scenario": scenario_name,
                "policy": policy_name,
                "traces": len(ms),
                "mean_handovers": float(np.mean([m.handover_count for m in ms])),
                "mean_avg_snr_db": float(np.mean([m.avg_snr_db for m in ms])),
            }
        )
    return summary


def write_summary_json(summary: list[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True))
