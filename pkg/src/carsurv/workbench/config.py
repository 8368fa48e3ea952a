"""Scenario configuration for the command line tools."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from ..coarsening import FUZZ_FAMILIES, gen_fuzz_law, gen_scar_law
from ..errors import ConfigError
from ..estimators import METHODS
from ..finite_law import FiniteLaw, load_law
from ..worlds import WORLDS

MUTANTS = (None, "ordinary-risk")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a simulate, estimate or verify run needs.

    ``law`` is a path to a law JSON file, ``{"fixture": "W2"}``, or a
    generator spec such as ``{"generator": "scar", "seed": 3, "grid": 4}``.
    ``cases`` overrides fuzz budgets, either one count for every suite or a
    ``{suite: count}`` map.  ``tolerance`` overrides every suite tolerance.
    """

    law: Any = field(default_factory=lambda: {"fixture": "W2"})
    tau: int | None = None
    t: tuple[int, ...] = (2,)
    a: tuple[int, ...] = (1,)
    methods: tuple[str, ...] = ("aipw-onestep",)
    n: int = 1000
    replicates: int = 1
    seed: int = 0
    epsilon_floor: float = 0.01
    z: float = 1.96
    tolerance: float | None = None
    cases: Any = None
    mutant: str | None = None
    base_dir: Path = Path(".")

    def __post_init__(self) -> None:
        for name in ("t", "a", "methods"):
            value = getattr(self, name)
            if isinstance(value, (int, str)):
                value = (value,)
            object.__setattr__(self, name, tuple(value))
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n!r}")
        if isinstance(self.replicates, bool) or not isinstance(self.replicates, int) or self.replicates < 1:
            raise ConfigError(f"replicates must be a positive integer, got {self.replicates!r}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if any(a not in (0, 1) for a in self.a):
            raise ConfigError(f"a entries must be 0 or 1, got {list(self.a)}")
        if any(not isinstance(t, int) or t < 0 for t in self.t):
            raise ConfigError(f"t entries must be non-negative ticks, got {list(self.t)}")
        if self.tau is not None and any(t > self.tau for t in self.t):
            raise ConfigError(f"t entries {list(self.t)} exceed tau={self.tau}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        if not (0.0 <= self.epsilon_floor < 1.0):
            raise ConfigError(f"epsilon_floor must lie in [0, 1), got {self.epsilon_floor!r}")
        if self.tolerance is not None and self.tolerance < 0:
            raise ConfigError(f"tolerance must be non-negative, got {self.tolerance!r}")
        if self.mutant not in MUTANTS:
            raise ConfigError(f"mutant must be one of {MUTANTS}, got {self.mutant!r}")

    @classmethod
    def from_mapping(cls, doc: Mapping[str, Any], base_dir: Path | str = ".") -> "ScenarioConfig":
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**dict(doc), base_dir=Path(base_dir))

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_mapping(doc, base_dir=path.parent)

    def cases_for(self, suite: str, default: int) -> int:
        if self.cases is None:
            return default
        if isinstance(self.cases, int):
            return self.cases
        return int(self.cases.get(suite, default))

    def load_law(self) -> FiniteLaw:
        return resolve_law(self.law, self.base_dir)


def resolve_law(source: Any, base_dir: Path | str = ".") -> FiniteLaw:
    """Turn a law source (path, fixture name or generator spec) into a law."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.is_absolute():
            path = Path(base_dir) / path
        return load_law(path)
    if not isinstance(source, Mapping):
        raise ConfigError(f"cannot interpret law source {source!r}")
    if "fixture" in source:
        name = source["fixture"]
        if name not in WORLDS:
            raise ConfigError(f"unknown fixture {name!r}; choose from {sorted(WORLDS)}")
        return WORLDS[name]()
    kind = source.get("generator")
    opts = {k: v for k, v in source.items() if k != "generator"}
    if kind == "scar":
        return gen_scar_law(**opts)
    if kind == "fuzz":
        if opts.get("family") not in (None, *FUZZ_FAMILIES):
            raise ConfigError(f"unknown family {opts['family']!r}")
        return gen_fuzz_law(**opts)
    raise ConfigError(f"law source needs 'fixture' or generator 'scar'/'fuzz', got {dict(source)!r}")
