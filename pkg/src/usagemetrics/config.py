"""Run configuration: a YAML file plus command-line overrides."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .cohort import CohortConfig, Entity
from .corpus import MAIN_JOURNALS, JournalSet
from .indicators import DENOMINATORS

OUTPUT_DIR_ENV = "USAGEMETRICS_OUTPUT_DIR"
CORRELATIONS = ("pearson", "spearman")
_PATH_KEYS = ("corpus", "robot_policy", "entity_map", "aux_series", "output_dir")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    logs: list[Path] = field(default_factory=list)
    corpus: Path | None = None
    robot_policy: Path | None = None
    entity_map: Path | None = None
    aux_series: Path | None = None
    output_dir: Path = Path("reports")
    lower: int = 100
    upper: int = 1000
    journals: dict[str, list[str]] = field(default_factory=lambda: {MAIN_JOURNALS.name: sorted(MAIN_JOURNALS.members)})
    main_set: str = MAIN_JOURNALS.name
    years: tuple[int, int] = (2005, 2015)
    window_start: int = 1980
    overlap_denominator: str = "cited"
    samples: int = 10
    seed: int = 0
    correlation: str = "pearson"
    base_year: int = 2005
    workers: int = 1
    entities: list[Entity] = field(default_factory=list)
    fig7_entity: str | None = None
    fig7_year: int | None = None

    def __post_init__(self):
        self.years = tuple(self.years)
        self.entities = [e if isinstance(e, Entity) else Entity(**e) for e in self.entities]

    def validate(self) -> None:
        if self.years[0] > self.years[1]:
            raise ConfigError(f"empty year range {self.years}")
        if self.window_start > self.years[0]:
            raise ConfigError(f"window_start {self.window_start} is after the first year {self.years[0]}")
        if self.overlap_denominator not in DENOMINATORS:
            raise ConfigError(f"overlap_denominator must be one of {DENOMINATORS}")
        if self.correlation not in CORRELATIONS:
            raise ConfigError(f"correlation must be one of {CORRELATIONS}")
        if self.samples < 1:
            raise ConfigError("samples must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.main_set not in self.journals:
            raise ConfigError(f"main journal set {self.main_set!r} is not defined")
        try:
            self.cohort()
            self.journal_sets()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        ids = [e.id for e in self.entities]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate entity ids")

    def cohort(self) -> CohortConfig:
        return CohortConfig(self.lower, self.upper)

    def journal_sets(self) -> list[JournalSet]:
        return [JournalSet(name, frozenset(members)) for name, members in sorted(self.journals.items())]

    def main_journals(self) -> JournalSet:
        return next(s for s in self.journal_sets() if s.name == self.main_set)

    def year_range(self) -> range:
        return range(self.years[0], self.years[1] + 1)

    def require(self, *names: str) -> None:
        """Fail with a config error naming the first required path that is unset or missing."""
        for name in names:
            value = getattr(self, name)
            paths = value if isinstance(value, list) else [value]
            if value is None or not paths:
                raise ConfigError(f"{name} is not configured")
            for p in paths:
                if not Path(p).exists():
                    raise ConfigError(f"{name} not found: {p}")


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` (relative paths resolve against its directory).

    Precedence, lowest first: file, the output-dir environment variable, non-None ``overrides``.
    """
    data: dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        base = path.parent
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if isinstance(data.get("logs"), str):
        data["logs"] = [data["logs"]]
    data["logs"] = [base / p for p in data.get("logs", [])]
    for key in _PATH_KEYS:
        if data.get(key) is not None:
            data[key] = base / data[key]
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir:
        data["output_dir"] = Path(env_dir)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "logs":
            value = [Path(p) for p in value]
        elif key in _PATH_KEYS:
            value = Path(value)
        data[key] = value
    try:
        cfg = RunConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg
