"""Run configuration: one YAML tree, strict keys, defaults for every knob.

Unknown keys fail loudly with their full path; omitted keys fall back to
the built-in defaults.  The master seed deterministically derives every
per-module stream, so one (config, seed) pair pins every artifact byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields, replace
from pathlib import Path

import yaml

from .channel import ChannelParams
from .dataset import Scenario, StoragePolicy, WindowConfig
from .federated import FlConfig
from .mobility import MobilityConfig
from .rng import derived_seed
from .topology import TopologyConfig, build_region


class ConfigError(Exception):
    """Invalid, unknown, or missing configuration content."""


@dataclass(frozen=True)
class DatasetSection:
    test_size: int = 24000
    n_users: int = 100
    iid: bool = False


@dataclass(frozen=True)
class TrainSection:
    learning_rate: float = 0.05
    epochs: int = 2000
    batch_size: int = 1
    pool_size: int = 1400
    hidden_nodes: int = 20


@dataclass(frozen=True)
class StorageSection:
    policy: str = "traditional"
    n_trajectories: int = 1
    fraction: float = 0.5


@dataclass(frozen=True)
class FlSection:
    rounds: int = 300
    round_duration_s: float = 60.0
    local_epochs: int = 10
    learning_rate: float = 0.05
    participation: float = 0.10
    aggregation: str = "streaming_async"
    compute_time_s: float = 5.0
    batch_size: int = 1
    iid: bool = False
    checkpoint_every: int = 0
    storage: StorageSection = StorageSection()


@dataclass(frozen=True)
class OnlineSection:
    rounds: int = 60
    round_duration_s: float = 60.0
    speed_min_mps: float = 20.0
    speed_max_mps: float = 25.0
    local_epochs: int = 10
    learning_rate: float = 0.05
    participation: float = 0.10
    compute_time_s: float = 5.0
    fraction: float = 0.5
    test_size: int = 24000


@dataclass(frozen=True)
class EvalScenario:
    name: str
    speed_min_mps: float
    speed_max_mps: float


@dataclass(frozen=True)
class PolicySection:
    ttt_s: float = 0.5
    eval_traces: int = 1000
    comm_sojourn_s: float = 40.0
    comm_bits: int = 16
    scenarios: tuple[EvalScenario, ...] = (
        EvalScenario("base", 15.0, 20.0),
        EvalScenario("shifted", 20.0, 25.0),
    )


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    seed: int
    out_dir: str
    topology: TopologyConfig = TopologyConfig()
    channel: ChannelParams = ChannelParams()
    mobility: MobilityConfig = MobilityConfig()
    window: WindowConfig = WindowConfig()
    dataset: DatasetSection = DatasetSection()
    train: TrainSection = TrainSection()
    fl: FlSection = FlSection()
    online: OnlineSection = OnlineSection()
    policy: PolicySection = PolicySection()

    def storage_policy(self) -> StoragePolicy:
        s = self.fl.storage
        if s.policy == "traditional":
            return StoragePolicy.traditional(s.n_trajectories)
        if s.policy == "streaming":
            return StoragePolicy.streaming(s.fraction)
        raise ConfigError(f"unknown storage policy '{s.policy}'")

    def fl_config(self) -> FlConfig:
        return FlConfig(
            rounds=self.fl.rounds,
            storage=self.storage_policy(),
            round_duration_s=self.fl.round_duration_s,
            local_epochs=self.fl.local_epochs,
            learning_rate=self.fl.learning_rate,
            participation=self.fl.participation,
            aggregation=self.fl.aggregation,
            compute_time_s=self.fl.compute_time_s,
            batch_size=self.fl.batch_size,
            iid=self.fl.iid,
            hidden_nodes=self.train.hidden_nodes,
            checkpoint_every=self.fl.checkpoint_every,
        )

    def online_fl_config(self) -> FlConfig:
        o = self.online
        return FlConfig(
            rounds=o.rounds,
            storage=StoragePolicy.streaming(o.fraction),
            round_duration_s=o.round_duration_s,
            local_epochs=o.local_epochs,
            learning_rate=o.learning_rate,
            participation=o.participation,
            aggregation=self.fl.aggregation,
            compute_time_s=o.compute_time_s,
            batch_size=self.fl.batch_size,
            iid=False,
            hidden_nodes=self.train.hidden_nodes,
        )

    def online_mobility(self) -> MobilityConfig:
        return replace(
            self.mobility,
            speed_min_mps=self.online.speed_min_mps,
            speed_max_mps=self.online.speed_max_mps,
        )

    def build_scenario(self, mobility: MobilityConfig | None = None) -> Scenario:
        region = build_region(self.topology, derived_seed(self.seed, "topology"))
        return Scenario(
            topology=region,
            channel=self.channel,
            window=self.window,
            mobility=mobility if mobility is not None else self.mobility,
        )

    def config_hash(self) -> str:
        payload = dataclasses.asdict(self)
        payload.pop("out_dir")
        canon = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


_SECTION_TYPES = {
    "topology": TopologyConfig,
    "channel": ChannelParams,
    "mobility": MobilityConfig,
    "window": WindowConfig,
    "dataset": DatasetSection,
    "train": TrainSection,
    "fl": FlSection,
    "online": OnlineSection,
    "policy": PolicySection,
}

_NESTED = {
    (FlSection, "storage"): StorageSection,
}


def _coerce(value, default, path: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"key '{path}' must be a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"key '{path}' must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key '{path}' must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"key '{path}' must be a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"key '{path}' must be a list")
        return tuple(value)
    raise ConfigError(f"key '{path}' has an unsupported type")


def _build_section(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{path}' must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key '{path}.{unknown[0]}'")
    kwargs = {}
    for name, value in data.items():
        key_path = f"{path}.{name}"
        nested = _NESTED.get((cls, name))
        if nested is not None:
            kwargs[name] = _build_section(nested, value, key_path)
            continue
        if cls is PolicySection and name == "scenarios":
            kwargs[name] = _build_eval_scenarios(value, key_path)
            continue
        default = getattr(cls(), name) if _has_all_defaults(cls) else known[name].default
        kwargs[name] = _coerce(value, default, key_path)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section '{path}': {exc}") from exc


def _has_all_defaults(cls) -> bool:
    return all(
        f.default is not dataclasses.MISSING or f.default_factory is not dataclasses.MISSING
        for f in fields(cls)
    )


def _build_eval_scenarios(value, path: str) -> tuple[EvalScenario, ...]:
    if not isinstance(value, list):
        raise ConfigError(f"key '{path}' must be a list of scenarios")
    out = []
    for i, entry in enumerate(value):
        entry_path = f"{path}[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"entry '{entry_path}' must be a mapping")
        allowed = {"name", "speed_min_mps", "speed_max_mps"}
        unknown = sorted(set(entry) - allowed)
        if unknown:
            raise ConfigError(f"unknown key '{entry_path}.{unknown[0]}'")
        missing = sorted(allowed - set(entry))
        if missing:
            raise ConfigError(f"missing key '{entry_path}.{missing[0]}'")
        out.append(
            EvalScenario(
                name=str(entry["name"]),
                speed_min_mps=float(entry["speed_min_mps"]),
                speed_max_mps=float(entry["speed_max_mps"]),
            )
        )
    return tuple(out)


def load_config(
    path: str | Path,
    seed_override: int | None = None,
    out_override: str | None = None,
) -> RunConfig:
    """Parse and validate the YAML run configuration."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")

    allowed_top = {"scenario", "seed", "out_dir"} | set(_SECTION_TYPES)
    unknown = sorted(set(data) - allowed_top)
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}'")

    sections = {}
    for name, cls in _SECTION_TYPES.items():
        if name in data:
            sections[name] = _build_section(cls, data[name], name)

    seed = seed_override if seed_override is not None else data.get("seed")
    out_dir = out_override if out_override is not None else data.get("out_dir")
    scenario = data.get("scenario")
    if scenario is None:
        raise ConfigError("missing required section 'scenario'")
    if seed is None:
        raise ConfigError("missing required section 'seed'")
    if out_dir is None:
        raise ConfigError("missing required section 'out_dir'")
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("key 'seed' must be an integer")

    try:
        return RunConfig(
            scenario=str(scenario), seed=int(seed), out_dir=str(out_dir), **sections
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
