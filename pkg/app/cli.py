"""
Command-line front-end.

    python -m app.cli stats    --input prices.csv [--output stats.txt]
    python -m app.cli rolling  --input prices.csv --output rolling.csv [--window 80 --alpha 0.01]
    python -m app.cli fit      --input prices.csv --model tvar1 --output fit.txt
    python -m app.cli compare  --fit-a fit_tvar1.txt --fit-b fit_trend.txt
    python -m app.cli simulate --model tvar1 --theta0 0.0004,0.00284,0.2 --seed 7 --output sim.csv

Exit codes: 0 success, 2 input error, 3 configuration error, 4 numerical divergence.
"""
from __future__ import annotations

import argparse
import functools
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from app.config import DEFAULT_ALPHA, DEFAULT_OBS_NOISE, DEFAULT_SEPARATOR, DEFAULT_WINDOW
from app.errors import ConfigurationError, ToolkitError
from app.services import calibration, diagnostics, ingest, reports, simulation
from app.services.models import ModelKind, TvAr1GarchParams, TvAr1Params, TvAr1TrendParams

logger = logging.getLogger(__name__)

COMMANDS = ("stats", "rolling", "fit", "compare", "simulate")
MODEL_CHOICES = ("tvar1", "tvar1-trend", "tvar1-garch", "tvar1-kf", "tvar1-trend-kf", "tvar1-garch-kf")

# True parameters for `simulate` when --theta0 is omitted.
SIMULATION_DEFAULTS = {
    ModelKind.TVAR1: (0.0004, 0.00284, 0.2),
    ModelKind.TVAR1_TREND: (0.0004, 0.00284, 0.2, 0.0),
    ModelKind.TVAR1_GARCH: (0.2, 0.0003, 0.1, 0.8, 0.0004),
}

# The classical formulations share the data-generating process of their EKF model.
SIMULATED_AS = {
    ModelKind.TVAR1_KF: ModelKind.TVAR1,
    ModelKind.TVAR1_TREND_KF: ModelKind.TVAR1_TREND,
    ModelKind.TVAR1_GARCH_KF: ModelKind.TVAR1_GARCH,
}


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    command: str
    input: Path | None = None
    model_kind: ModelKind = ModelKind.TVAR1
    window: int = DEFAULT_WINDOW
    alpha: float = DEFAULT_ALPHA
    obs_noise: float = DEFAULT_OBS_NOISE
    theta0: tuple[float, ...] | None = None
    output: Path | None = None
    seed: int = 0
    n_obs: int = 1100
    fit_a: Path | None = None
    fit_b: Path | None = None
    separator: str = DEFAULT_SEPARATOR

    @model_validator(mode="after")
    def check_ranges(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}")
        if self.window < 2:
            raise ConfigurationError(f"window must be >= 2, got {self.window}")
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.obs_noise > 0:
            raise ConfigurationError(f"obs-noise must be > 0, got {self.obs_noise}")
        return self

    def effective_theta0(self) -> tuple[float, ...] | None:
        return calibration.default_theta0(self.model_kind, self.theta0)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def _theta(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", type=Path)
    common.add_argument("--model", choices=MODEL_CHOICES, default="tvar1")
    common.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    common.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    common.add_argument("--obs-noise", type=float, default=DEFAULT_OBS_NOISE)
    common.add_argument("--theta0", type=_theta)
    common.add_argument("--output", type=Path)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--separator", default=DEFAULT_SEPARATOR)

    parser = _Parser(prog="efficiency", description="Evolving market efficiency toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("stats", parents=[common], help="summary statistics and Ljung-Box tests")
    sub.add_parser("rolling", parents=[common], help="moving-window autocorrelation path")
    sub.add_parser("fit", parents=[common], help="maximum-likelihood fit and filtered coefficient path")
    compare = sub.add_parser("compare", parents=[common], help="AIC ranking and likelihood-ratio test")
    compare.add_argument("--fit-a", type=Path, required=True)
    compare.add_argument("--fit-b", type=Path, required=True)
    simulate = sub.add_parser("simulate", parents=[common], help="write a synthetic price file")
    simulate.add_argument("--n-obs", type=int, default=1100)
    return parser


def parse_config(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = {
        "command": args.command,
        "input": args.input,
        "model_kind": ModelKind.parse(args.model),
        "window": args.window,
        "alpha": args.alpha,
        "obs_noise": args.obs_noise,
        "theta0": args.theta0,
        "output": args.output,
        "seed": args.seed,
        "separator": args.separator,
    }
    for name in ("fit_a", "fit_b", "n_obs"):
        if hasattr(args, name):
            values[name] = getattr(args, name)
    try:
        return RunConfig(**values)
    except ValidationError as err:
        raise ConfigurationError(str(err)) from err


def _exit_code(command):
    """Run a command, turning toolkit errors into exit codes and a message on stderr."""
    @functools.wraps(command)
    def wrapper(config, *args, **kwargs) -> int:
        try:
            return command(config, *args, **kwargs)
        except ToolkitError as err:
            print(f"error: {err}", file=sys.stderr)
            return err.exit_code
    return wrapper


def _require_input(config: RunConfig) -> Path:
    if config.input is None:
        raise ConfigurationError("--input is required")
    return config.input


def _returns(config: RunConfig) -> ingest.ReturnSeries:
    prices = ingest.load_prices(_require_input(config), config.separator)
    return ingest.log_returns(prices)


@_exit_code
def cmd_stats(config: RunConfig) -> int:
    returns = _returns(config)
    fields = reports.stats_fields(diagnostics.summary_stats(returns), diagnostics.lag_table(returns))
    reports.write_report(fields, config.output)
    return 0


@_exit_code
def cmd_rolling(config: RunConfig) -> int:
    returns = _returns(config)
    result = diagnostics.rolling_autocorrelation(returns, config.window, 1, config.alpha)
    frame = reports.rolling_frame(result, returns.labels)
    if config.output is None:
        sys.stdout.write(frame.to_csv(index=False, na_rep="", float_format="%.12g", lineterminator="\n"))
    else:
        reports.write_frame(frame, config.output)
    return 0


def _path_file(output: Path) -> Path:
    return output.with_name(f"{output.stem}_path.csv")


@_exit_code
def cmd_fit(config: RunConfig) -> int:
    returns = ingest.mean_adjust(_returns(config))
    spec = calibration.default_spec(config.model_kind, config.effective_theta0(), obs_noise=config.obs_noise)
    fit = calibration.fit_mle(spec, returns)
    run, _ = calibration.filter_at(spec, fit.theta_full, returns)
    beta = run.state_path(0)

    rho = np.full(len(returns), np.nan)
    extra = {"window": config.window, "reconstruction_error": None}
    if config.window <= len(returns):
        rolling = diagnostics.rolling_autocorrelation(returns, config.window, 1, config.alpha)
        rho[config.window - 1:] = rolling.rho1_path
        extra["reconstruction_error"] = calibration.reconstruction_error(beta, rolling.rho1_path, config.window)
    else:
        logger.warning("window %d exceeds %d returns; reconstruction error skipped", config.window, len(returns))
    if spec.model_kind in (ModelKind.TVAR1_GARCH, ModelKind.TVAR1_GARCH_KF):
        extra["unconditional_variance"] = spec.params(fit.theta_full).unconditional_variance

    reports.write_report(reports.fit_fields(fit, **extra), config.output)
    if config.output is None:
        logger.info("no --output given; filtered path not written")
        return 0
    frame = pd.DataFrame({
        "date": list(returns.labels),
        "beta1": beta,
        "beta1_var": run.variance_path(0),
        "rho1": rho,
    })
    reports.write_frame(frame, _path_file(config.output))
    return 0


@_exit_code
def cmd_compare(config: RunConfig, fit_a=None, fit_b=None) -> int:
    if fit_a is None or fit_b is None:
        if config.fit_a is None or config.fit_b is None:
            raise ConfigurationError("compare needs --fit-a and --fit-b")
        fit_a = reports.read_fit_report(config.fit_a)
        fit_b = reports.read_fit_report(config.fit_b)
    comparison = calibration.compare_models(fit_a, fit_b, config.alpha)
    text = reports.render_report(reports.comparison_fields(comparison))
    sys.stdout.write(text)
    if config.output is not None:
        config.output.write_text(text, encoding="utf-8")
    return 0


@_exit_code
def cmd_simulate(config: RunConfig) -> int:
    if config.output is None:
        raise ConfigurationError("simulate needs --output")
    kind = SIMULATED_AS.get(config.model_kind, config.model_kind)
    theta = config.theta0 if config.theta0 is not None else SIMULATION_DEFAULTS[kind]
    if kind is ModelKind.TVAR1_GARCH:
        params = TvAr1GarchParams.from_theta(theta)
        values, beta, _ = simulation.simulate_tvar1_garch(params, config.n_obs, config.seed)
    else:
        params_type = TvAr1TrendParams if kind is ModelKind.TVAR1_TREND else TvAr1Params
        values, beta = simulation.simulate_tvar1(params_type.from_theta(theta), config.n_obs, config.seed)

    prices = simulation.prices_from_returns(values)
    ingest.write_prices(prices, config.output, config.separator)
    truth = pd.DataFrame({"date": list(prices.labels[1:]), "beta1": beta, "return": values})
    reports.write_frame(truth, config.output.with_name(f"{config.output.stem}_truth.csv"))
    return 0


HANDLERS = {
    "stats": cmd_stats,
    "rolling": cmd_rolling,
    "fit": cmd_fit,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    try:
        config = parse_config(argv)
    except ToolkitError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    return HANDLERS[config.command](config)


if __name__ == "__main__":
    sys.exit(main())
