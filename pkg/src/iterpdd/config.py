"""Run configuration: flat ``key = value`` files with command-line overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

from .problems import REGISTRY

A0_SANITY_CAP = 100.0


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str = "manufactured"
    domain: Optional[Tuple[float, float, float, float]] = None   # xmin, xmax, ymin, ymax
    m: int = 4
    nodes_per_interface: int = 6
    q: int = 2
    delta: float = 1.0
    a0: Optional[float] = None
    eps: Optional[float] = None
    gamma_r: Optional[float] = None
    q_max: Optional[float] = None
    s: Optional[int] = None
    fit_M: int = 100
    fit_N: int = 1000
    h_min: float = 1e-3
    h_max: float = 1e-2
    stop_threshold: float = 1.5
    kappa: Optional[float] = None
    cells_per_unit: int = 160
    seed: int = 0
    threads: int = 1
    out: str = "out"
    plain: bool = False
    constants: Optional[str] = None
    sweep_a1: Tuple[float, ...] = (0.02, 0.04, 0.06, 0.10, 0.14, 0.18, 0.22, 0.26, 0.30, 0.34,
                                   0.38, 0.42, 0.46, 0.50, 0.54, 0.58, 0.62)
    sweep_observed: bool = False
    nsr_samples: int = 100_000
    dump_fields: bool = False

    def validate(self) -> "RunConfig":
        if self.problem not in REGISTRY:
            raise ConfigError(f"unknown problem {self.problem!r}")
        for name in ("m", "nodes_per_interface", "fit_M", "fit_N", "cells_per_unit", "threads",
                     "nsr_samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.q not in (1, 2, 3):
            raise ConfigError("q must be 1, 2 or 3")
        if not 0 < self.h_min < self.h_max:
            raise ConfigError("need 0 < h_min < h_max")
        if not self.stop_threshold > 1:
            raise ConfigError("stop_threshold must exceed 1")
        if self.kappa is not None and self.kappa < 1:
            raise ConfigError("kappa must be >= 1")
        if self.a0 is not None and self.eps is not None:
            raise ConfigError("give exactly one of a0 and eps")
        if self.a0 is not None and not 0 < self.a0 < A0_SANITY_CAP:
            raise ConfigError(f"a0 must lie in (0, {A0_SANITY_CAP})")
        if self.eps is not None:
            if not self.eps > 0:
                raise ConfigError("eps must be positive")
            if None in (self.gamma_r, self.q_max, self.s):
                raise ConfigError("eps requires gamma_r, q_max and s")
        if self.domain is not None:
            x0, x1, y0, y1 = self.domain
            if not (x0 < x1 and y0 < y1):
                raise ConfigError("domain bounds must be increasing")
        return self

    def require_tolerance(self) -> None:
        if self.a0 is None and self.eps is None:
            raise ConfigError("a0 or eps is required")


def _convert(name: str, tp, raw: str):
    raw = raw.strip()
    try:
        if raw.lower() in ("none", "") and tp not in ("str", str):
            return None
        base = str(tp)
        if "Tuple" in base or "tuple" in base:
            return tuple(float(t) for t in raw.replace(",", " ").split())
        if "bool" in base:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if "int" in base and "float" not in base:
            return int(raw)
        if "float" in base:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def apply(cfg: RunConfig, pairs: dict) -> RunConfig:
    for k, v in pairs.items():
        key = k.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {k!r}")
        setattr(cfg, key, _convert(key, _FIELDS[key], v) if isinstance(v, str) else v)
    return cfg


def parse_text(text: str) -> dict:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return apply(RunConfig(), parse_text(text))


def dump(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = " ".join(repr(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
