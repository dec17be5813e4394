"""Run configuration: flat ``key = value`` text with repeated-key lists.

Blank lines and ``#`` comments are ignored. A key given more than once
collects its values into a list in file order. Matrices are written as
rows separated by ``;`` (``A = 2 0; 0 1``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .bodies import Ball, Ellipsoid, Polygon
from .errors import ConfigError
from .functions import MaxAffineFn, PNormFn, QuadraticFn, SlopeGrid, SmoothMaxAffineFn

__all__ = ["FUNCTION_FAMILIES", "BODY_FAMILIES", "RunConfig", "load_config", "make_body", "make_function", "parse_matrix"]

FUNCTION_FAMILIES = ("quadratic", "gaussian", "pnorm", "maxaffine", "smoothmax")
BODY_FAMILIES = ("ball", "ellipsoid", "square", "polygon")


@dataclass
class RunConfig:
    """Ordered mapping of keys to a string or a list of strings."""

    entries: dict[str, str | list[str]] = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        entries: dict[str, str | list[str]] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ConfigError(f"line {lineno}: empty key")
            if key in entries:
                prev = entries[key]
                entries[key] = (prev if isinstance(prev, list) else [prev]) + [value]
            else:
                entries[key] = value
        cfg = cls(entries)
        cfg.validate()
        return cfg

    def emit(self) -> str:
        lines = []
        for key, value in self.entries.items():
            for v in value if isinstance(value, list) else [value]:
                lines.append(f"{key} = {v}")
        return "\n".join(lines) + "\n"

    def validate(self) -> None:
        family = self.entries.get("family")
        body = self.entries.get("body")
        if family is not None and family not in FUNCTION_FAMILIES:
            raise ConfigError(f"unknown function family {family!r}")
        if body is not None and body not in BODY_FAMILIES:
            raise ConfigError(f"unknown body family {body!r}")

    # -- typed access ------------------------------------------------------------------

    def get(self, key: str, default=None):
        return self.entries.get(key, default)

    def has(self, key: str) -> bool:
        return key in self.entries

    def set(self, key: str, value) -> None:
        if isinstance(value, (list, tuple)):
            self.entries[key] = [str(v) for v in value]
        else:
            self.entries[key] = str(value)

    def scalar(self, key: str, default=None, kind=float):
        value = self.entries.get(key)
        if value is None:
            if default is None:
                raise ConfigError(f"missing key {key!r}")
            return default
        if isinstance(value, list):
            raise ConfigError(f"key {key!r} given more than once")
        try:
            return kind(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc

    def floats(self, key: str) -> list[float]:
        value = self.entries.get(key)
        if value is None:
            return []
        items = value if isinstance(value, list) else value.replace(",", " ").split()
        try:
            return [float(v) for v in items]
        except ValueError as exc:
            raise ConfigError(f"bad number in {key!r}") from exc

    def deltas(self) -> list[float]:
        """Explicit ``delta`` values, or a geometric sweep from ``delta_start``, ``delta_ratio``, ``delta_count``."""
        explicit = self.floats("delta")
        if explicit:
            return explicit
        if self.has("delta_start"):
            start = self.scalar("delta_start")
            ratio = self.scalar("delta_ratio")
            count = self.scalar("delta_count", kind=int)
            if not (start > 0 and ratio > 1 and count > 0):
                raise ConfigError("need delta_start > 0, delta_ratio > 1, delta_count > 0")
            return [start * ratio**-k for k in range(count)]
        raise ConfigError("no delta values configured")

    def slope_grid(self, dim: int) -> SlopeGrid | None:
        if not self.has("grid_step"):
            return None
        return SlopeGrid.uniform(self.scalar("grid_extent"), self.scalar("grid_step"), dim)

    @property
    def threads(self) -> int:
        return self.scalar("threads", 1, int)

    @property
    def seed(self) -> int:
        return self.scalar("seed", 0, int)


def load_config(path: str | os.PathLike) -> RunConfig:
    """Read a config file; bare names fall back to the bundled ``configs`` directory."""
    p = Path(path)
    if not p.exists():
        bundled = resources.files("ulamfloat") / "configs" / p.name
        if not bundled.is_file():
            raise ConfigError(f"config file not found: {path}")
        return RunConfig.parse(bundled.read_text())
    return RunConfig.parse(p.read_text())


def parse_matrix(text: str | list[str], dim: int | None = None) -> np.ndarray:
    """``"2 0; 0 1"`` to a 2D array; a single number with ``dim`` gives a multiple of the identity."""
    if isinstance(text, list):
        text = ";".join(text)
    try:
        rows = [[float(v) for v in row.replace(",", " ").split()] for row in text.split(";") if row.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad matrix {text!r}") from exc
    if len(rows) == 1 and len(rows[0]) == 1 and dim is not None:
        return rows[0][0] * np.eye(dim)
    if any(len(r) != len(rows[0]) for r in rows):
        raise ConfigError(f"ragged matrix {text!r}")
    return np.array(rows)


def make_function(cfg: RunConfig):
    """Build the convex function named by ``family``."""
    family = cfg.get("family")
    if family is None:
        raise ConfigError("missing key 'family'")
    n = cfg.scalar("n", 1, int)
    if family in ("quadratic", "gaussian"):
        A = parse_matrix(cfg.get("A", "1"), n)
        b = cfg.floats("b") or None
        return QuadraticFn(A, b, cfg.scalar("c", 0.0))
    if family == "pnorm":
        return PNormFn(cfg.scalar("p"), cfg.scalar("scale", 1.0), n)
    slopes = parse_matrix(cfg.get("slopes", "-1; 1"))
    offsets = cfg.floats("offsets") or [0.0] * slopes.shape[0]
    if family == "maxaffine":
        return MaxAffineFn(slopes, offsets)
    return SmoothMaxAffineFn(slopes, offsets, beta=cfg.scalar("beta", 100.0), mu=cfg.scalar("mu", 1e-6))


def make_body(cfg: RunConfig):
    """Build the convex body named by ``body``."""
    body = cfg.get("body")
    if body is None:
        raise ConfigError("missing key 'body'")
    if body == "ball":
        return Ball(cfg.scalar("radius", 1.0), cfg.scalar("m", 2, int))
    if body == "ellipsoid":
        return Ellipsoid(cfg.floats("axes"))
    if body == "square":
        return Polygon.square(cfg.scalar("half_width", 1.0))
    return Polygon(parse_matrix(cfg.get("vertices")))
