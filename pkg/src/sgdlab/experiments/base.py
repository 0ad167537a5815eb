"""Experiment specs, reports, parameter schemas and the run harness."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from ..analysis import TestResult
from ..errors import ParameterDomainError, UsageError
from ..io import write_csv, write_gnuplot, write_json, write_manifest
from ..seeding import hash64

_DOMAINS = {
    "positive": lambda v: v > 0,
    "nonneg": lambda v: v >= 0,
    "unit": lambda v: 0 < v < 1,
    "level": lambda v: v in (0.01, 0.05),
    "any": lambda v: True,
}


@dataclass(frozen=True)
class Param:
    """One experiment parameter: kind is int, float, str, or a tuple of floats / ints."""

    default: object
    kind: str = "float"
    domain: str = "positive"
    choices: tuple | None = None
    help: str = ""

    def parse(self, key, raw):
        try:
            if isinstance(raw, str):
                raw = raw.strip()
                if self.kind in ("floats", "ints"):
                    parts = [p for p in raw.replace("(", "").replace(")", "").split(",") if p.strip()]
                    conv = float if self.kind == "floats" else int
                    value = tuple(conv(p) for p in parts)
                elif self.kind == "int":
                    f = float(raw)
                    if f != int(f):
                        raise ValueError(raw)
                    value = int(f)
                elif self.kind == "float":
                    value = float(raw)
                else:
                    value = raw
            else:
                value = raw
                if self.kind in ("floats", "ints"):
                    value = tuple(float(v) if self.kind == "floats" else int(v) for v in value)
                elif self.kind == "int":
                    if float(value) != int(value):
                        raise ValueError(value)
                    value = int(value)
                elif self.kind == "float":
                    value = float(value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"malformed value for {key!r}: {raw!r} (expected {self.kind})") from exc
        self.validate(key, value)
        return value

    def validate(self, key, value):
        if self.choices is not None:
            if value not in self.choices:
                raise ParameterDomainError(f"{key}={value!r} not in {self.choices}")
            return
        if self.kind == "str":
            return
        values = value if isinstance(value, tuple) else (value,)
        if self.kind in ("floats", "ints") and len(values) == 0:
            raise ParameterDomainError(f"{key} needs at least one value")
        check = _DOMAINS[self.domain]
        for v in values:
            if not np.isfinite(v) or not check(v):
                raise ParameterDomainError(f"{key}={value!r} violates domain '{self.domain}'")


@dataclass(frozen=True)
class ExperimentEntry:
    name: str
    description: str
    anchors: tuple
    params: dict
    outputs: tuple
    runner: object
    criteria: tuple = ()

    def defaults(self):
        return {k: p.default for k, p in self.params.items()}


@dataclass
class ExperimentSpec:
    name: str
    parameters: dict
    outputs: tuple
    master_seed: int = 0

    def to_dict(self):
        return {"name": self.name, "parameters": self.parameters, "outputs": list(self.outputs),
                "master_seed": self.master_seed}


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    results: list
    artifacts: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self):
        # wall time is kept out of report.json so reruns hash identically
        return {"spec": self.spec.to_dict(), "results": [r.as_dict() for r in self.results],
                "passed": self.passed}


class RunContext:
    """Seeds, thread count and artifact sink for one experiment run."""

    def __init__(self, spec: ExperimentSpec, out_dir=None, threads=1):
        self.spec = spec
        self.p = spec.parameters
        self.threads = threads
        self.out_dir = None if out_dir is None else FsPath(out_dir) / spec.name
        self.files: list = []
        self.results: list = []

    def seed(self, *keys) -> int:
        """Stream seed in this experiment's namespace."""
        return hash64(self.spec.master_seed, self.spec.name, *keys)

    def rng(self, *keys):
        return np.random.Generator(np.random.PCG64(self.seed(*keys)))

    def csv(self, fname, header, rows, plot=None):
        """Write a CSV artifact (skipped when no output directory is set).

        ``plot`` = (x_col, y_cols[, style]) also writes a gnuplot script.
        """
        if self.out_dir is None:
            return None
        path = write_csv(self.out_dir / fname, header, rows)
        self.files.append(path)
        if plot is not None:
            x_col, y_cols, *rest = plot
            self.files.append(write_gnuplot(path, x_col, y_cols, title=fname, style=rest[0] if rest else "lines"))
        return path

    def add(self, result: TestResult):
        self.results.append(result)
        return result


def build_spec(entry: ExperimentEntry, overrides: dict | None = None, master_seed: int = 0) -> ExperimentSpec:
    params = entry.defaults()
    for key, raw in (overrides or {}).items():
        if key not in entry.params:
            raise UsageError(f"unknown parameter {key!r} for {entry.name}; known: {sorted(entry.params)}")
        params[key] = entry.params[key].parse(key, raw)
    return ExperimentSpec(entry.name, params, entry.outputs, int(master_seed))


def execute(entry: ExperimentEntry, spec: ExperimentSpec, out_dir=None, threads=1) -> ExperimentReport:
    ctx = RunContext(spec, out_dir, threads)
    t0 = time.perf_counter()
    entry.runner(ctx)
    wall = time.perf_counter() - t0
    report = ExperimentReport(spec, ctx.results, wall_time=wall)
    if ctx.out_dir is not None:
        report_path = write_json(ctx.out_dir / "report.json", report.to_dict())
        report.artifacts = write_manifest(ctx.out_dir, ctx.files + [report_path])
        write_json(ctx.out_dir / "timing.json", {"wall_time_s": wall})
    return report
