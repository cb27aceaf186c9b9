"""Run configuration: a flat ``key = value`` text file with typed keys.

Blank lines and lines starting with ``#`` are ignored.  Unknown keys,
duplicate keys and values of the wrong type are errors, and every value is
re-validated against the module it feeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .errors import ConfigError, DomainError
from .operators import SpaceParams


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    text = text.strip()
    return tuple(float(v) for v in text.split(",")) if text else ()


@dataclass(frozen=True)
class RunConfig:
    n: int = 2
    p: float = 2.0
    alpha: float = 0.0
    s: float = 1.0
    r: float = 0.1
    R_max: float = 0.9
    seed: int = 0
    radial_order: int = 200
    sphere_order: int = 0  # 0 selects the per-dimension default
    backend: str = "zonal"
    K_trunc: int = 0  # 0 sizes the zonal series from R_max
    tol: float = 1e-6
    max_iter: int = 200
    norm_radius: float = 0.8
    function: str = "x1"
    interp_r: float = 0.9
    interp_R_max: float = 0.9
    interp_tol: float = 1e-10
    targets: str = "unit:0"
    schur_r_values: tuple = (0.9, 0.95)
    frontier_r_values: tuple = (0.6, 0.7, 0.8, 0.9, 0.95)
    gamma_values: tuple = ()
    gamma_radii: tuple = (0.9, 0.95, 0.99)
    gamma_r: float = 0.3
    radii: tuple = ()
    b: float = 0.0
    c: float = 1.0
    probes: int = 100_000
    grid_size: int = 50
    experimental: bool = False

    @property
    def space(self):
        return SpaceParams(self.p, self.alpha, self.s, self.n)

    @property
    def sphere(self):
        return self.sphere_order or None

    def items(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            yield f.name, v

    def validate(self):
        try:
            sp = self.space
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        checks = [
            (sp.condition_holds, "kernel order s too small for (p, alpha): need alpha+1 < p(s+1), "
                                 "or alpha+n < p(s+n) when p < 1"),
            (self.n in (2, 3) or self.experimental, "n must be 2 or 3 (higher n needs experimental = true)"),
            (0.0 < self.r < 1.0, "r must lie in (0, 1)"),
            (0.0 < self.R_max < 1.0, "R_max must lie in (0, 1)"),
            (0.0 < self.interp_r < 1.0, "interp_r must lie in (0, 1)"),
            (0.0 < self.interp_R_max < 1.0, "interp_R_max must lie in (0, 1)"),
            (self.seed >= 0, "seed must be nonnegative"),
            (self.radial_order >= 1, "radial_order must be positive"),
            (self.sphere_order == 0 or self.sphere_order >= 2, "sphere_order must be 0 or at least 2"),
            (self.backend in ("zonal", "power"), "backend must be 'zonal' or 'power'"),
            (self.backend != "zonal" or self.n == 2, "the zonal backend needs n = 2"),
            (self.K_trunc >= 0, "K_trunc must be nonnegative"),
            (self.tol > 0 and self.interp_tol > 0, "tolerances must be positive"),
            (self.max_iter >= 1, "max_iter must be positive"),
            (0.0 < self.norm_radius <= 1.0, "norm_radius must lie in (0, 1]"),
            (all(0.0 < v < 1.0 for v in self.schur_r_values), "schur_r_values must lie in (0, 1)"),
            (all(0.0 < v < 1.0 for v in self.frontier_r_values), "frontier_r_values must lie in (0, 1)"),
            (all(0.0 < v < 1.0 for v in self.gamma_radii), "gamma_radii must lie in (0, 1)"),
            (all(0.0 < v < 1.0 for v in self.radii), "radii must lie in (0, 1)"),
            (0.0 < self.gamma_r < 1.0, "gamma_r must lie in (0, 1)"),
            (self.b > -1.0, "b must exceed -1"),
            (self.probes >= 1 and self.grid_size >= 2, "probes and grid_size must be positive"),
            (all(math.isfinite(v) for v in (self.p, self.alpha, self.s, self.tol)), "values must be finite"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return sp


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key, text):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            return _bool(text)
        if kind == "tuple":
            return _floats(text)
        return text.strip()
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def parse_config(text, base=None):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, value)
    cfg = replace(base or RunConfig(), **values)
    cfg.validate()
    return cfg


def load_config(path=None, **overrides):
    text = ""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config(text)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        cfg = replace(cfg, **overrides)
        cfg.validate()
    return cfg
