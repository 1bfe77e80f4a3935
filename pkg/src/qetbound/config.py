"""Experiment configuration files (YAML).

Schema::

    model:
      name: tfim            # tfim | field_only | terms
      n_sites: 12
      params: {g: 2.0}      # model parameters; ``terms`` takes a term list
    region_A: [0]
    region_B:
      rule: sweep           # sweep | fixed
      distances: "2..8"     # sweep only: "lo..hi" or an explicit list
      width: 1              # sweep only: B = {max(A)+d, ..., max(A)+d+width-1}
      sites: [5]            # fixed only
    protocol:
      scheme: projective_pair
      budget: 2000
      seed: 0
      restarts: 8
      params: null          # explicit parameter point for single runs
    clustering:
      window: auto          # auto | [lo, hi]
    output:
      directory: results
      format: csv           # csv | json

Unknown keys are rejected so typos do not silently fall back to defaults.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import yaml

from .model import MODELS, Region
from .optimize import SCHEMES

FORMATS = ("csv", "json")


class ConfigError(ValueError):
    pass


_DEFAULTS = {
    "region_B": {"rule": "sweep", "width": 1},
    "protocol": {"scheme": "projective_pair", "budget": 2000, "seed": 0, "restarts": 8, "params": None},
    "clustering": {"window": "auto"},
    "output": {"directory": "results", "format": "csv"},
}
_KEYS = {
    "": {"model", "region_A", "region_B", "protocol", "clustering", "output"},
    "model": {"name", "n_sites", "params"},
    "region_B": {"rule", "distances", "width", "sites"},
    "protocol": {"scheme", "budget", "seed", "restarts", "params"},
    "clustering": {"window"},
    "output": {"directory", "format"},
}


def _parse_distances(raw) -> list[int]:
    if isinstance(raw, str) and ".." in raw:
        lo, hi = raw.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    if isinstance(raw, list) and all(isinstance(x, int) for x in raw):
        return sorted(set(raw))
    raise ConfigError(f"region_B.distances: expected 'lo..hi' or a list of integers, got {raw!r}")


def _int(section: str, key: str, value, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{section}.{key}: expected an integer >= {minimum}, got {value!r}")
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    model_name: str
    n_sites: int
    model_params: dict
    region_A: tuple[int, ...]
    B_rule: str
    B_distances: tuple[int, ...]
    B_width: int
    B_sites: tuple[int, ...]
    scheme: str
    budget: int
    seed: int
    restarts: int
    params: tuple[float, ...] | None
    window: tuple[int, int] | None
    out_dir: str
    out_format: str

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("top level: expected a mapping")
        for section, allowed in _KEYS.items():
            node = data if not section else data.get(section, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{section}: expected a mapping")
            extra = sorted(set(node) - allowed)
            if extra:
                where = f"{section}.{extra[0]}" if section else extra[0]
                raise ConfigError(f"{where}: unknown key")
        merged = copy.deepcopy(_DEFAULTS)
        for key, val in data.items():
            if isinstance(val, dict) and key in merged:
                merged[key].update(val)
            else:
                merged[key] = val
        for key in ("model", "region_A"):
            if key not in merged:
                raise ConfigError(f"{key}: required")
        model = merged["model"]
        name = model.get("name")
        if name not in MODELS:
            raise ConfigError(f"model.name: expected one of {MODELS}, got {name!r}")
        n = _int("model", "n_sites", model.get("n_sites"), 2)
        params = model.get("params") or {}
        if not isinstance(params, dict):
            raise ConfigError("model.params: expected a mapping")

        def sites(key, raw):
            if not isinstance(raw, list) or not raw or not all(isinstance(s, int) and not isinstance(s, bool) for s in raw):
                raise ConfigError(f"{key}: expected a nonempty list of site indices")
            bad = [s for s in raw if not 0 <= s < n]
            if bad:
                raise ConfigError(f"{key}: site {bad[0]} outside the {n}-site chain")
            return tuple(sorted(set(raw)))

        A = sites("region_A", merged["region_A"])
        rb = merged["region_B"]
        rule = rb.get("rule")
        if rule not in ("sweep", "fixed"):
            raise ConfigError(f"region_B.rule: expected 'sweep' or 'fixed', got {rule!r}")
        width = _int("region_B", "width", rb.get("width", 1), 1)
        dists: tuple[int, ...] = ()
        B_sites: tuple[int, ...] = ()
        if rule == "sweep":
            if "distances" not in rb:
                raise ConfigError("region_B.distances: required for rule 'sweep'")
            dists = tuple(_parse_distances(rb["distances"]))
            if not dists or dists[0] < 1:
                raise ConfigError("region_B.distances: separations must be >= 1")
            last = max(A) + dists[-1] + width - 1
            if last >= n:
                raise ConfigError(f"region_B.distances: separation {dists[-1]} places B at site {last}, outside the {n}-site chain")
        else:
            B_sites = sites("region_B.sites", rb.get("sites"))
            if set(A) & set(B_sites):
                raise ConfigError("region_B.sites: overlaps region_A")
        proto = merged["protocol"]
        if proto.get("scheme") not in SCHEMES:
            raise ConfigError(f"protocol.scheme: expected one of {SCHEMES}, got {proto.get('scheme')!r}")
        budget = _int("protocol", "budget", proto.get("budget"), 1)
        seed = _int("protocol", "seed", proto.get("seed"), 0)
        restarts = _int("protocol", "restarts", proto.get("restarts"), 1)
        pp = proto.get("params")
        if pp is not None:
            if not isinstance(pp, list) or not all(isinstance(x, (int, float)) for x in pp):
                raise ConfigError("protocol.params: expected a list of numbers or null")
            pp = tuple(float(x) for x in pp)
        win = merged["clustering"].get("window")
        if win == "auto" or win is None:
            window = None
        elif isinstance(win, list) and len(win) == 2 and all(isinstance(x, int) for x in win) and 1 <= win[0] <= win[1] < n:
            window = (win[0], win[1])
        else:
            raise ConfigError(f"clustering.window: expected 'auto' or [lo, hi] within 1..{n - 1}, got {win!r}")
        out = merged["output"]
        if out.get("format") not in FORMATS:
            raise ConfigError(f"output.format: expected one of {FORMATS}, got {out.get('format')!r}")
        if not isinstance(out.get("directory"), str):
            raise ConfigError("output.directory: expected a path string")
        return cls(
            name, n, dict(params), A, rule, dists, width, B_sites, proto["scheme"], budget, seed,
            restarts, pp, window, out["directory"], out["format"],
        )

    def to_dict(self) -> dict:
        rb: dict = {"rule": self.B_rule}
        if self.B_rule == "sweep":
            rb.update(distances=list(self.B_distances), width=self.B_width)
        else:
            rb["sites"] = list(self.B_sites)
        return {
            "model": {"name": self.model_name, "n_sites": self.n_sites, "params": copy.deepcopy(self.model_params)},
            "region_A": list(self.region_A),
            "region_B": rb,
            "protocol": {
                "scheme": self.scheme, "budget": self.budget, "seed": self.seed, "restarts": self.restarts,
                "params": None if self.params is None else list(self.params),
            },
            "clustering": {"window": "auto" if self.window is None else list(self.window)},
            "output": {"directory": self.out_dir, "format": self.out_format},
        }

    @property
    def A(self) -> Region:
        return Region(self.region_A)

    def placements(self) -> list[tuple[int, Region]]:
        """``(d, B)`` pairs in ascending ``d``."""
        if self.B_rule == "fixed":
            B = Region(self.B_sites)
            return [(min(abs(a - b) for a in self.region_A for b in B), B)]
        start = max(self.region_A)
        return [(d, Region(range(start + d, start + d + self.B_width))) for d in self.B_distances]


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ConfigError(f"parse error: {where}{getattr(exc, 'problem', exc)}") from exc
    if data is None:
        raise ConfigError("parse error: empty configuration")
    return ExperimentConfig.from_dict(data)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
