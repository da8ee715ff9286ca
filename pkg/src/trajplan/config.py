"""Single versioned run configuration: every tunable in one place.

Precedence when planning from the CLI: explicit flag > config file > the
built-in defaults below.  Sections are plain frozen dataclasses that validate
their own ranges on construction, so a bad file fails at load time.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .gnn import GnnConfig, TrainConfig
from .hybrid_astar import DEFAULT_NODE_BUDGET, GridSpec
from .ocp import OcpConfig
from .rrt_star import RrtConfig
from .solver import SolveOptions
from .vehicle import VehicleParams

CONFIG_VERSION = 1

MAP_STYLES = ("mixed-sparse", "mixed-dense", "irregular-sparse", "irregular-dense")


@dataclass(frozen=True)
class AstarConfig:
    node_budget: int = DEFAULT_NODE_BUDGET
    reverse_penalty: float = 1.5
    switch_penalty: float = 0.5
    steer_change_penalty: float = 0.1
    heuristic_weight: float = 1.5

    def __post_init__(self):
        if self.node_budget < 1:
            raise ConfigError("node_budget must be positive")
        if self.reverse_penalty < 1.0 or self.switch_penalty < 0 or self.steer_change_penalty < 0:
            raise ConfigError("search penalties out of range")
        if self.heuristic_weight < 1.0:
            raise ConfigError("heuristic_weight must be >= 1")


@dataclass(frozen=True)
class DatasetConfig:
    map_count: int = 60
    tasks_per_map: int = 10
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 40.0, 40.0)
    obstacles_min: int = 4
    obstacles_max: int = 10
    style: str = "cycle"  # one of MAP_STYLES or "cycle"
    min_clearance: float = 0.3  # footprint-to-obstacle margin for sampled poses
    min_separation: float = 5.0  # start-goal distance
    obstacle_separation: float = 0.8  # keeps corridors drivable

    def __post_init__(self):
        if self.map_count < 1 or self.tasks_per_map < 1:
            raise ConfigError("map/task counts must be positive")
        if self.obstacles_min < 0 or self.obstacles_max < self.obstacles_min:
            raise ConfigError("bad obstacle count range")
        if self.style != "cycle" and self.style not in MAP_STYLES:
            raise ConfigError(f"unknown map style {self.style!r}")
        x0, y0, x1, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("dataset bounds are empty")


@dataclass(frozen=True)
class RunConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    grid: GridSpec = field(default_factory=GridSpec)
    astar: AstarConfig = field(default_factory=AstarConfig)
    rrt: RrtConfig = field(default_factory=RrtConfig)
    ocp: OcpConfig = field(default_factory=OcpConfig)
    solver: SolveOptions = field(default_factory=SolveOptions)
    gnn: GnnConfig = field(default_factory=GnnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    def to_json_dict(self) -> dict:
        d = {"version": CONFIG_VERSION}
        for f in dataclasses.fields(self):
            d[f.name] = dataclasses.asdict(getattr(self, f.name))
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "RunConfig":
        if d.get("version") != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {d.get('version')!r}")
        kwargs = {}
        sections = {f.name: f for f in dataclasses.fields(RunConfig)}
        for name, f in sections.items():
            if name in d:
                cls = _SECTION_TYPES[name]
                try:
                    kwargs[name] = _from_dict(cls, d[name])
                except TypeError as e:
                    raise ConfigError(f"bad config section {name!r}: {e}") from e
        return RunConfig(**kwargs)

    def replace_section(self, name: str, **updates) -> "RunConfig":
        """New config with one section's fields overridden (CLI precedence)."""
        section = getattr(self, name)
        return dataclasses.replace(self, **{name: dataclasses.replace(section, **updates)})


_SECTION_TYPES = {
    "vehicle": VehicleParams,
    "grid": GridSpec,
    "astar": AstarConfig,
    "rrt": RrtConfig,
    "ocp": OcpConfig,
    "solver": SolveOptions,
    "gnn": GnnConfig,
    "train": TrainConfig,
    "dataset": DatasetConfig,
}


def _from_dict(cls, d: dict):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - fields
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} for {cls.__name__}")
    clean = dict(d)
    for f in dataclasses.fields(cls):
        # JSON turns tuples into lists; restore them
        if f.name in clean and isinstance(clean[f.name], list):
            clean[f.name] = tuple(clean[f.name])
    return cls(**clean)


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return RunConfig.from_json_dict(data)


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(cfg.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
