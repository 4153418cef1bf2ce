"""Configuration parsing, subcommand dispatch, and bit-stable CSV output.

Config grammar: line-oriented ``section.key = value`` text.  Blank lines and
lines starting with ``#`` are ignored.  Unknown keys are a hard error;
parsing is independent of key order.  All keys have documented defaults
except ``kernel.family`` and ``experiment.name``.

    kernel.family        gaussian | cauchy            (required)
    kernel.sigma2        1.0
    kernel.length_scale  1.0                          (gaussian)
    kernel.lambda        0.5                          (cauchy)
    kernel.dim           1
    env.mode             spectral | exact-cholesky    (default spectral)
    env.k_features       512
    run.dt               0.01
    run.n_steps          800
    run.n_paths          256
    run.n_envs           200
    run.seed             12345
    run.x0               0.0                          (comma list for dim > 1)
    experiment.name      (required)
    experiment.beta      0.5                          (comma list)
    experiment.checkpoints 1,2,4                      (grid times)
    experiment.slope_epsilon 0.01
    experiment.p         2.0
    experiment.alpha     1.2
    experiment.s_max     50.0
    experiment.c_grid    0.05,0.1,0.2,0.4
    experiment.n_mc_samples 100000
    experiment.n_probe_paths 10000
    experiment.probe_t_grid 1,2,4,8
    experiment.output    (empty: derive from subcommand)

Seed derivation (see ``seeding``): child = splitmix64_mix(master XOR
(tag * 0x9E3779B97F4A7C15 + index)) mod 2**64, with the tag registry
paths=1, environment=2, frequencies=3, coefficients=4, resampling=5.  The
derivation is bit-exact; the generator consuming the child seed is an
implementation choice.

Exit codes: 0 all verdicts pass or informational, 1 config error,
2 numerical failure, 3 at least one verdict fail.
"""

from __future__ import annotations

import argparse
import math
import sys
from typing import List, Optional, Sequence

from .errors import (
    CholeskyError,
    ConfigError,
    PolymerLabError,
    QuadratureError,
    WeightDegeneracyError,
)
from .experiments import (
    ExperimentConfig,
    SummaryRecord,
    run_annealed_check,
    run_concentration_check,
    run_fractional_moment_check,
    run_free_energy_scan,
    run_martingale_check,
    run_regime_experiment,
    run_sampler_validation,
    run_second_moment_check,
    run_theory_table,
)
from .kernels import CovarianceKernel

CSV_HEADER = "experiment,beta,t,estimate,std_error,bound,target,verdict,heuristic,n_envs,n_paths,seed"

SUBCOMMANDS = (
    "validate-sampler",
    "annealed",
    "martingale",
    "free-energy",
    "concentration",
    "second-moment",
    "regime",
    "fractional",
    "theory",
)


def _parse_float(raw, line):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"expected a real number, got {raw!r}", line)


def _parse_int(raw, line):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"expected an integer, got {raw!r}", line)


def _parse_float_list(raw, line):
    items = [s.strip() for s in raw.split(",") if s.strip()]
    if not items:
        raise ConfigError("expected a comma-separated list of reals", line)
    return tuple(_parse_float(s, line) for s in items)


def _parse_enum(options):
    def parse(raw, line):
        if raw not in options:
            raise ConfigError(f"expected one of {options}, got {raw!r}", line)
        return raw

    return parse


def _parse_str(raw, line):
    return raw


_KEY_PARSERS = {
    "kernel.family": _parse_enum(("gaussian", "cauchy")),
    "kernel.sigma2": _parse_float,
    "kernel.length_scale": _parse_float,
    "kernel.lambda": _parse_float,
    "kernel.dim": _parse_int,
    "env.mode": _parse_enum(("spectral", "exact-cholesky")),
    "env.k_features": _parse_int,
    "run.dt": _parse_float,
    "run.n_steps": _parse_int,
    "run.n_paths": _parse_int,
    "run.n_envs": _parse_int,
    "run.seed": _parse_int,
    "run.x0": _parse_float_list,
    "experiment.name": _parse_str,
    "experiment.beta": _parse_float_list,
    "experiment.checkpoints": _parse_float_list,
    "experiment.slope_epsilon": _parse_float,
    "experiment.p": _parse_float,
    "experiment.alpha": _parse_float,
    "experiment.s_max": _parse_float,
    "experiment.c_grid": _parse_float_list,
    "experiment.n_mc_samples": _parse_int,
    "experiment.n_probe_paths": _parse_int,
    "experiment.probe_t_grid": _parse_float_list,
    "experiment.output": _parse_str,
}

_DEFAULTS = {
    "kernel.sigma2": 1.0,
    "kernel.length_scale": 1.0,
    "kernel.lambda": 0.5,
    "kernel.dim": 1,
    "env.mode": "spectral",
    "env.k_features": 512,
    "run.dt": 0.01,
    "run.n_steps": 800,
    "run.n_paths": 256,
    "run.n_envs": 200,
    "run.seed": 12345,
    "run.x0": (0.0,),
    "experiment.beta": (0.5,),
    "experiment.checkpoints": (1.0, 2.0, 4.0),
    "experiment.slope_epsilon": 0.01,
    "experiment.p": 2.0,
    "experiment.alpha": 1.2,
    "experiment.s_max": 50.0,
    "experiment.c_grid": (0.05, 0.1, 0.2, 0.4),
    "experiment.n_mc_samples": 100000,
    "experiment.n_probe_paths": 10000,
    "experiment.probe_t_grid": (1.0, 2.0, 4.0, 8.0),
    "experiment.output": "",
}

_REQUIRED = ("kernel.family", "experiment.name")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate config text into an ExperimentConfig.

    Raises ConfigError with a line number on any syntax problem, unknown key,
    duplicate key, or out-of-range value.
    """
    values = dict(_DEFAULTS)
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'section.key = value', got {line!r}", lineno)
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in _KEY_PARSERS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        seen.add(key)
        values[key] = _KEY_PARSERS[key](raw_value, lineno)
    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    if not values["experiment.name"]:
        raise ConfigError("experiment.name must be non-empty")
    return build_config(values)


def build_config(values: dict) -> ExperimentConfig:
    """Assemble the kernel and experiment config from parsed key values."""
    try:
        kernel = CovarianceKernel(
            family=values["kernel.family"],
            sigma2=values["kernel.sigma2"],
            length_scale=values["kernel.length_scale"],
            exponent_lambda=values["kernel.lambda"],
            dim=values["kernel.dim"],
        )
        x0 = values["run.x0"]
        if len(x0) == 1 and kernel.dim > 1:
            x0 = tuple([x0[0]] * kernel.dim)
        return ExperimentConfig(
            name=values["experiment.name"],
            kernel=kernel,
            beta_list=values["experiment.beta"],
            dt=values["run.dt"],
            n_steps=values["run.n_steps"],
            n_paths=values["run.n_paths"],
            n_envs=values["run.n_envs"],
            env_mode=values["env.mode"],
            k_features=values["env.k_features"],
            master_seed=values["run.seed"],
            x0=x0,
            checkpoints=values["experiment.checkpoints"],
            slope_epsilon=values["experiment.slope_epsilon"],
            p=values["experiment.p"],
            alpha=values["experiment.alpha"],
            s_max=values["experiment.s_max"],
            c_grid=values["experiment.c_grid"],
            n_mc_samples=values["experiment.n_mc_samples"],
            n_probe_paths=values["experiment.n_probe_paths"],
            probe_t_grid=values["experiment.probe_t_grid"],
            output=values["experiment.output"],
        )
    except (ValueError, PolymerLabError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical config text that parses back to the same configuration."""

    def fmt(v):
        if isinstance(v, tuple):
            return ",".join(fmt(x) for x in v)
        if isinstance(v, float):
            return f"{v:.17g}"
        return str(v)

    lines = [
        f"kernel.family = {cfg.kernel.family}",
        f"kernel.sigma2 = {fmt(cfg.kernel.sigma2)}",
        f"kernel.length_scale = {fmt(cfg.kernel.length_scale)}",
        f"kernel.lambda = {fmt(cfg.kernel.exponent_lambda)}",
        f"kernel.dim = {cfg.kernel.dim}",
        f"env.mode = {cfg.env_mode}",
        f"env.k_features = {cfg.k_features}",
        f"run.dt = {fmt(cfg.dt)}",
        f"run.n_steps = {cfg.n_steps}",
        f"run.n_paths = {cfg.n_paths}",
        f"run.n_envs = {cfg.n_envs}",
        f"run.seed = {cfg.master_seed}",
        f"run.x0 = {fmt(cfg.x0)}",
        f"experiment.name = {cfg.name}",
        f"experiment.beta = {fmt(cfg.beta_list)}",
        f"experiment.checkpoints = {fmt(cfg.checkpoints)}",
        f"experiment.slope_epsilon = {fmt(cfg.slope_epsilon)}",
        f"experiment.p = {fmt(cfg.p)}",
        f"experiment.alpha = {fmt(cfg.alpha)}",
        f"experiment.s_max = {fmt(cfg.s_max)}",
        f"experiment.c_grid = {fmt(cfg.c_grid)}",
        f"experiment.n_mc_samples = {cfg.n_mc_samples}",
        f"experiment.n_probe_paths = {cfg.n_probe_paths}",
        f"experiment.probe_t_grid = {fmt(cfg.probe_t_grid)}",
        f"experiment.output = {cfg.output}",
    ]
    return "\n".join(lines) + "\n"


def _csv_float(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def _sort_key(r: SummaryRecord):
    beta = r.beta if not math.isnan(r.beta) else math.inf
    t = r.t if not math.isnan(r.t) else math.inf
    return (r.experiment, beta, t)


def emit_csv(records: Sequence[SummaryRecord], path) -> None:
    """Write records sorted by (experiment, beta, t) with round-trip float
    formatting; identical inputs produce byte-identical files."""
    lines = [CSV_HEADER]
    for r in sorted(records, key=_sort_key):
        lines.append(
            ",".join(
                [
                    r.experiment,
                    _csv_float(r.beta),
                    _csv_float(r.t),
                    _csv_float(r.estimate),
                    _csv_float(r.std_error),
                    _csv_float(r.bound),
                    _csv_float(r.target),
                    r.verdict,
                    "true" if r.heuristic else "false",
                    str(r.n_envs),
                    str(r.n_paths),
                    str(r.seed),
                ]
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


_RUNNERS = {
    "validate-sampler": run_sampler_validation,
    "annealed": run_annealed_check,
    "martingale": run_martingale_check,
    "free-energy": run_free_energy_scan,
    "concentration": run_concentration_check,
    "second-moment": run_second_moment_check,
    "fractional": run_fractional_moment_check,
    "theory": run_theory_table,
}


def dispatch(subcommand: str, cfg: ExperimentConfig, out_dir: str = ".", quiet: bool = False) -> int:
    """Run one subcommand, write its CSV, print a summary, return the exit code."""
    import os

    try:
        if subcommand == "regime":
            records, verdicts = run_regime_experiment(cfg)
        elif subcommand in _RUNNERS:
            records = _RUNNERS[subcommand](cfg)
            verdicts = None
        else:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
    except (CholeskyError, QuadratureError, WeightDegeneracyError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    filename = cfg.output or f"{cfg.name}_{subcommand}.csv"
    path = os.path.join(out_dir, filename)
    emit_csv(records, path)

    n_fail = sum(1 for r in records if r.verdict == "fail")
    n_pass = sum(1 for r in records if r.verdict == "pass")
    if not quiet:
        print(f"{subcommand}: {len(records)} rows -> {path}")
        print(f"  pass={n_pass} fail={n_fail} "
              f"info={sum(1 for r in records if r.verdict == 'info')} "
              f"inconclusive={sum(1 for r in records if r.verdict == 'inconclusive')}")
        if verdicts is not None:
            for beta, verdict in verdicts.items():
                print(f"  regime verdict (finite-t heuristic) at beta={beta:g}: {verdict}")
        for r in sorted(records, key=_sort_key):
            if r.verdict == "fail":
                print(f"  FAIL {r.experiment} beta={r.beta:g} t={r.t:g} "
                      f"estimate={r.estimate:.6g} se={r.std_error:.3g} "
                      f"bound={r.bound} target={r.target}")
    return 3 if n_fail else 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="polymerlab",
        description="Monte Carlo checks for a Brownian polymer in a Gaussian random environment",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="path to a section.key = value config file")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("--out", default=".", help="output directory for CSV files")
    parser.add_argument(
        "--mode", choices=("spectral", "exact-cholesky"), default=None, help="override env.mode"
    )
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(text)
        if args.seed is not None:
            cfg = ExperimentConfig(
                **{**cfg.__dict__, "master_seed": args.seed}
            )
        if args.mode is not None:
            cfg = ExperimentConfig(**{**cfg.__dict__, "env_mode": args.mode})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        return dispatch(args.subcommand, cfg, out_dir=args.out, quiet=args.quiet)
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
