"""Pipeline configuration: YAML files, bundled presets and a stable hash.

Top-level keys (all optional except ``name``)::

    name: str
    seed: int
    dataset:    {tables, cpi, external, anchor_year, anchor_mean, closure_multiple}
    year_map:   {round_a, year_a, round_b, year_b}
    model:      {alpha, y0, C0, V0, K0}
    trends:     {V: trend, K: trend, C: trend}     # trend = {kind, a, b, c, valid_range}
    pipeline:   {t_start, rounds: {start, stop, step}, C_source, density,
                 fp_time_per_round, data_end_year, poverty_line, plateau_threshold,
                 report_years}
    solver:     {grid_points, y_max, dt, method}
    simulation: {N, t1, dt, snapshot_every, initial, workers, ks_gate, D0, floor_policy}

Dataset paths starting with ``bundled:`` resolve to the files shipped in
``povdyn/data``; other relative paths resolve against the config file.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path

import numpy as np
import yaml

from .engel import TrendModel
from .exceptions import ConfigError
from .fpdist import SteadyStateParams
from .indices import YearMap

PRESETS = ("paper-1960-1992", "paper-forecast-2005", "matched-validation", "frozen-trends",
           "synthetic-fit")
_SECTIONS = ("dataset", "year_map", "model", "trends", "pipeline", "solver", "simulation")

DEFAULTS = {
    "seed": 20240601,
    "dataset": {"tables": None, "cpi": None, "external": None, "anchor_year": None,
                "anchor_mean": 64.84, "closure_multiple": 5.0},
    "year_map": {"round_a": 6.0, "year_a": 1959.5, "round_b": 31.5, "year_b": 2005.0},
    "model": {"alpha": 1.6, "y0": 30.0, "C0": 64.84, "V0": 73.19, "K0": 95.0},
    "trends": {},
    "pipeline": {"t_start": 0.0, "rounds": {"start": 6.0, "stop": 24.5, "step": 0.5},
                 "C_source": "self-consistent", "density": "evolve",
                 "fp_time_per_round": 1.0, "data_end_year": 1992.0, "poverty_line": None,
                 "plateau_threshold": 1e-4, "report_years": [2005.0, 2010.0]},
    "solver": {"grid_points": 2048, "y_max": None, "dt": 0.05, "method": "implicit"},
    "simulation": {"N": 100000, "t1": 200.0, "dt": 0.005, "snapshot_every": 10.0,
                   "initial": "mean", "workers": 1, "ks_gate": 0.02, "D0": 2.0,
                   "floor_policy": "reflect"},
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return int(obj)
    return obj


@dataclass(frozen=True)
class PipelineConfig:
    """Validated configuration mapping plus the directory it was loaded from."""

    data: dict
    base_dir: Path | None = None

    def __post_init__(self):
        d = _merge(DEFAULTS, self.data)
        if not d.get("name"):
            raise ConfigError("config needs a 'name'")
        unknown = set(d) - set(_SECTIONS) - {"name", "seed"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        object.__setattr__(self, "data", _canonical(d))
        self._validate()

    def __getitem__(self, key):
        return self.data[key]

    @property
    def name(self):
        return self.data["name"]

    @property
    def seed(self):
        return int(self.data["seed"])

    def config_hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def with_overrides(self, **sections):
        return PipelineConfig(_merge(self.data, sections), self.base_dir)

    def _validate(self):
        try:
            self.steady_params()
            self.year_map()
            for name in self.data["trends"]:
                self.trend(name)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        for key in ("tables", "cpi", "external"):
            if self.data["dataset"].get(key) is not None:
                p = self.resolve(self.data["dataset"][key])
                if not Path(p).is_file():
                    raise ConfigError(f"dataset file {p} does not exist")
        sim = self.data["simulation"]
        if int(sim["N"]) < 1 or not float(sim["dt"]) > 0:
            raise ConfigError("simulation needs N >= 1 and dt > 0")
        if int(self.data["solver"]["grid_points"]) < 3 or not float(self.data["solver"]["dt"]) > 0:
            raise ConfigError("solver needs grid_points >= 3 and dt > 0")

    def resolve(self, path):
        if path is None:
            return None
        path = str(path)
        if path.startswith("bundled:"):
            return Path(str(files("povdyn") / "data" / path[len("bundled:"):]))
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p

    def steady_params(self) -> SteadyStateParams:
        m = self.data["model"]
        return SteadyStateParams(m["alpha"], m["C0"], m["V0"], m["K0"], m["y0"])

    def year_map(self) -> YearMap:
        return YearMap(**{k: float(v) for k, v in self.data["year_map"].items()})

    def trend(self, name):
        """``TrendModel`` for ``V``, ``K`` or ``C``, or ``None`` if not configured."""
        d = self.data["trends"].get(name)
        if d is None:
            return None
        if d.get("kind") == "constant":
            return float(d["value"])
        d = dict(d)
        d.setdefault("positivity_floor", None if d["kind"] == "linear" else 1e-6)
        return TrendModel.from_dict(d)

    def rounds(self):
        r = self.data["pipeline"]["rounds"]
        if isinstance(r, list):
            return np.asarray(r, dtype=float)
        n = int(round((r["stop"] - r["start"]) / r["step"]))
        return r["start"] + r["step"] * np.arange(n + 1)

    def grid(self):
        s = self.data["solver"]
        m = self.data["model"]
        y_max = s["y_max"] if s["y_max"] is not None else 1e3 * m["K0"]
        return np.geomspace(m["y0"], y_max, int(s["grid_points"]))


def preset_path(name) -> Path:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return Path(str(files("povdyn") / "presets" / f"{name}.yaml"))


def load_config(path=None, preset=None) -> PipelineConfig:
    """Load a YAML config, a preset, or a preset overridden by a YAML file."""
    if path is None and preset is None:
        raise ConfigError("need --config or --preset")
    data = {}
    base = None
    if preset is not None:
        data = _read_yaml(preset_path(preset))
    if path is not None:
        path = Path(path)
        data = _merge(data, _read_yaml(path))
        base = path.resolve().parent
    return PipelineConfig(data, base)


def _read_yaml(path):
    try:
        with open(path, encoding="utf-8") as fh:
            out = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    if not isinstance(out, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return out
