"""Command-line entry point: list, run, oracle eval, all."""

from __future__ import annotations

import argparse
import configparser
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path as FsPath

from .analysis import resolve_threads
from .errors import ParameterDomainError, SgdLabError, UsageError
from .experiments import REGISTRY, get_entry, list_experiments, run_experiment
from .io import ArtifactIOError, file_sha256, format_float, write_json
from .oracles import ORACLE_NAMES, evaluate

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
RUN_SECTION = "run"
N_CRITERIA = 10
SUITE_BUDGET_S = 30 * 60


@dataclass
class RunConfig:
    experiment: str | None
    overrides: dict = field(default_factory=dict)
    master_seed: int = 0
    out_dir: str = "out"
    threads: int = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_seed(raw) -> int:
    try:
        seed = int(str(raw), 0)
    except ValueError as exc:
        raise UsageError(f"malformed seed {raw!r}") from exc
    if seed < 0:
        raise ParameterDomainError("seed must be non-negative")
    return seed


def _parse_threads(raw) -> int:
    if raw is None or str(raw).strip().lower() == "auto":
        return resolve_threads("auto")
    try:
        return resolve_threads(int(raw))
    except ValueError as exc:
        if isinstance(exc, ParameterDomainError):
            raise
        raise UsageError(f"malformed thread count {raw!r}") from exc


def _split_set(item: str):
    if "=" not in item:
        raise UsageError(f"--set expects key=value, got {item!r}")
    key, value = item.split("=", 1)
    key = key.strip()
    if not key:
        raise UsageError(f"--set expects key=value, got {item!r}")
    return key, value.strip()


def read_config(path):
    """Sections per experiment plus an optional [run] section (seed, out, threads)."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ArtifactIOError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise UsageError(f"malformed config {path}: {exc}") from exc
    run, per_exp = {}, {}
    for section in cp.sections():
        items = dict(cp.items(section))
        if section == RUN_SECTION:
            unknown = set(items) - {"seed", "out", "threads"}
            if unknown:
                raise UsageError(f"unknown keys in [{RUN_SECTION}]: {sorted(unknown)}")
            run = items
        else:
            entry = get_entry(section)
            for key in items:
                if key not in entry.params:
                    raise UsageError(f"unknown parameter {key!r} in config section [{section}]")
            per_exp[section] = items
    return run, per_exp


def parse_config(args, config_file=None) -> list[RunConfig]:
    """Resolve one RunConfig per experiment: command line > config file > registry defaults.

    ``args`` is the parsed namespace of ``run`` or ``all``.
    """
    run_cfg, per_exp = ({}, {}) if config_file is None else read_config(config_file)
    seed = _parse_seed(args.seed if args.seed is not None else run_cfg.get("seed", 0))
    out = args.out if args.out is not None else run_cfg.get("out", "out")
    threads = _parse_threads(args.threads if args.threads is not None else run_cfg.get("threads"))

    names = [args.experiment] if args.command == "run" else sorted(REGISTRY)
    for name in names:
        get_entry(name)
    cli_sets: dict = {n: {} for n in names}
    for item in args.set or []:
        key, value = _split_set(item)
        if args.command == "run" and "." not in key:
            target, key = names[0], key
        elif "." in key:
            target, key = key.split(".", 1)
            if target not in cli_sets:
                raise UsageError(f"--set {item!r}: experiment {target!r} is not part of this run")
        else:
            raise UsageError(f"--set {item!r}: use experiment.key=value with 'all'")
        if key not in get_entry(target).params:
            raise UsageError(f"unknown parameter {key!r} for {target}; known: {sorted(get_entry(target).params)}")
        cli_sets[target][key] = value

    configs = []
    for name in names:
        merged = {**per_exp.get(name, {}), **cli_sets[name]}
        configs.append(RunConfig(name, merged, seed, out, threads))
    return configs


def _result_line(r) -> str:
    tag = "PASS" if r.passed else "FAIL"
    crit = f"[criterion {r.criterion}] " if r.criterion is not None else ""
    return f"{tag} {crit}{r.name}: {format_float(r.statistic)} vs {format_float(r.threshold)} ({r.description})"


def cmd_list(_args, out=sys.stdout) -> int:
    for entry in list_experiments():
        print(f"{entry.name}: {entry.description}", file=out)
        print(f"  anchors: {'; '.join(entry.anchors)}", file=out)
        defaults = ", ".join(f"{k}={_fmt_value(v)}" for k, v in sorted(entry.defaults().items()))
        print(f"  defaults: {defaults}", file=out)
    return EXIT_OK


def _fmt_value(v):
    if isinstance(v, tuple):
        return "(" + ",".join(format_float(x) for x in v) + ")"
    return format_float(v) if isinstance(v, (int, float)) else str(v)


def cmd_run(args, out=sys.stdout) -> int:
    (cfg,) = parse_config(args, args.config)
    report = run_experiment(cfg.experiment, cfg.overrides, cfg.master_seed, cfg.out_dir, cfg.threads)
    for r in report.results:
        print(_result_line(r), file=out)
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} {cfg.experiment} ({report.wall_time:.1f} s) -> {FsPath(cfg.out_dir) / cfg.experiment}", file=out)
    return EXIT_OK if report.passed else EXIT_FAIL


def criterion_summary(reports, total_time):
    """Per-criterion verdicts; criterion 10 covers the suite as a whole."""
    verdicts = {}
    for c in range(1, N_CRITERIA):
        rs = [r for rep in reports for r in rep.results if r.criterion == c]
        verdicts[c] = (bool(rs) and all(r.passed for r in rs), len(rs))
    every = all(rep.passed for rep in reports)
    verdicts[N_CRITERIA] = (every and total_time < SUITE_BUDGET_S, len(reports))
    return verdicts


def cmd_all(args, out=sys.stdout) -> int:
    configs = parse_config(args, args.config)
    out_dir = FsPath(configs[0].out_dir)
    reports, timing = [], {}
    t0 = time.perf_counter()
    for cfg in configs:
        rep = run_experiment(cfg.experiment, cfg.overrides, cfg.master_seed, cfg.out_dir, cfg.threads)
        reports.append(rep)
        timing[cfg.experiment] = rep.wall_time
        print(f"{'PASS' if rep.passed else 'FAIL'} {cfg.experiment} ({rep.wall_time:.1f} s)", file=out)
        for r in rep.results:
            if not r.passed:
                print("  " + _result_line(r), file=out)
    total = time.perf_counter() - t0
    verdicts = criterion_summary(reports, total)
    for c, (ok, n) in verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} criterion {c} ({n} checks)", file=out)

    files = {}
    for cfg, rep in zip(configs, reports):
        for rel, digest in sorted(rep.artifacts.items()):
            files[f"{cfg.experiment}/{rel}"] = digest
        files[f"{cfg.experiment}/manifest.json"] = file_sha256(out_dir / cfg.experiment / "manifest.json")
    write_json(out_dir / "manifest.json", {"files": files,
                                           "criteria": {str(c): ok for c, (ok, _) in verdicts.items()}})
    write_json(out_dir / "timing.json", {"total_s": total, "experiments_s": timing})
    print(f"total {total:.1f} s; manifest {out_dir / 'manifest.json'}", file=out)
    return EXIT_OK if all(ok for ok, _ in verdicts.values()) else EXIT_FAIL


def cmd_oracle(args, out=sys.stdout) -> int:
    if args.action != "eval":
        raise UsageError(f"unknown oracle action {args.action!r}; expected 'eval'")
    if args.name not in ORACLE_NAMES:
        raise UsageError(f"unknown oracle {args.name!r}; available: {', '.join(ORACLE_NAMES)}")
    try:
        vals = [float(a) for a in args.values]
    except ValueError as exc:
        raise UsageError(f"oracle arguments must be numbers: {args.values}") from exc
    try:
        res = evaluate(args.name, *vals)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParameterDomainError):
            raise
        raise UsageError(f"bad arguments for {args.name}: {exc}") from exc
    print(f"{args.name}({', '.join(format_float(v) for v in vals)}) = {format_float(float(res.value))}", file=out)
    print(f"method={res.method} est_error={format_float(float(res.est_error))}", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sgdlab", description="Continuum limits of gradient descent and SGD: experiments and oracles.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    sub.add_parser("list", help="list registered experiments")

    def common(p):
        p.add_argument("--seed", default=None, help="master seed (default 0)")
        p.add_argument("--out", default=None, help="output directory (default ./out)")
        p.add_argument("--threads", default=None, help="worker threads or 'auto' (default)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="parameter override (repeatable)")
        p.add_argument("--config", default=None, help="INI file with a section per experiment")

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("experiment")
    common(p_run)
    p_all = sub.add_parser("all", help="run every experiment and report each acceptance criterion")
    common(p_all)
    p_or = sub.add_parser("oracle", help="evaluate a closed-form oracle")
    p_or.add_argument("action")
    p_or.add_argument("name")
    p_or.add_argument("values", nargs=argparse.REMAINDER)
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        handler = {"list": cmd_list, "run": cmd_run, "all": cmd_all, "oracle": cmd_oracle}[args.command]
        return handler(args, out=out)
    except (UsageError, ParameterDomainError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArtifactIOError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SgdLabError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
