"""
Text serialization for command outputs.

Scalar reports are ``key: value`` lines, vectors comma-joined, undefined values
left empty. Paths are comma-delimited files written through pandas.
"""
from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from app.errors import InputError, ParseError
from app.services.calibration import FitResult, FitSummary, ModelComparison
from app.services.diagnostics import LagRow, RollingResult, SummaryStats
from app.services.models import ModelKind


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else format(float(value), ".12g")
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def to_jsonable(value):
    """NaN becomes None, numpy containers become lists."""
    if isinstance(value, dict):
        return {k: to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return None if math.isnan(value) else float(value)
    if isinstance(value, ModelKind):
        return value.value
    return value


def render_report(fields: dict) -> str:
    return "".join(f"{key}: {format_value(value)}\n" for key, value in fields.items())


def write_report(fields: dict, path: str | Path | None) -> None:
    text = render_report(fields)
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).write_text(text, encoding="utf-8")


def read_report(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"report not found: {path}")
    fields = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ParseError(f"expected 'key: value' in {path}", line_no)
        fields[key.strip()] = value.strip()
    return fields


def write_frame(frame: pd.DataFrame, path: str | Path) -> None:
    frame.to_csv(path, index=False, na_rep="", float_format="%.12g", lineterminator="\n")


def stats_fields(stats: SummaryStats, rows: list[LagRow]) -> dict:
    fields = {
        "n_obs": stats.n_obs,
        "mean": stats.mean,
        "median": stats.median,
        "std_dev": stats.std_dev,
        "skewness": stats.skewness,
        "excess_kurtosis": stats.excess_kurtosis,
    }
    for row in rows:
        fields[f"rho_{row.lag}"] = row.rho
        fields[f"q_{row.lag}"] = row.q
        fields[f"p_{row.lag}"] = row.p
    return fields


def rolling_frame(result: RollingResult, labels) -> pd.DataFrame:
    bound = result.confidence_bound
    return pd.DataFrame({
        "date": [labels[k - 1] for k in result.start_indices],
        "rho1": result.rho1_path,
        "lower": np.full(len(result), -bound),
        "upper": np.full(len(result), bound),
        "pvalue": result.pvalue_path,
    })


def fit_fields(fit: FitResult, **extra) -> dict:
    fields = {
        "model": fit.model_kind.value,
        "names": list(fit.names),
        "theta_hat": fit.theta_hat,
        "stderr": fit.stderr,
        "max_loglik": fit.max_loglik,
        "aic": fit.aic,
        "k": fit.k,
        "n_obs": fit.n_obs,
        "converged": fit.converged,
        "iterations": fit.iterations,
    }
    if fit.fixed:
        fields["fixed"] = [f"{name}={format_value(value)}" for name, value in fit.fixed.items()]
    fields.update(extra)
    return fields


def comparison_fields(comparison: ModelComparison) -> dict:
    fields = {
        "model_a": comparison.model_a,
        "model_b": comparison.model_b,
        "aic_a": comparison.aic_a,
        "aic_b": comparison.aic_b,
        "preferred": comparison.preferred,
    }
    if comparison.lr_statistic is None:
        fields["lr"] = comparison.note
    else:
        fields.update({
            "lr_restricted": comparison.restricted,
            "lr_dof": comparison.dof,
            "lr_statistic": comparison.lr_statistic,
            "lr_pvalue": comparison.lr_pvalue,
            "lr_decision": comparison.decision,
        })
    return fields


def read_fit_report(path: str | Path) -> FitSummary:
    fields = read_report(path)
    missing = {"model", "names", "max_loglik", "k"} - set(fields)
    if missing:
        raise ParseError(f"fit report {path} lacks {sorted(missing)}")
    try:
        return FitSummary(
            model=ModelKind.parse(fields["model"]),
            names=tuple(n for n in fields["names"].split(",") if n),
            max_loglik=float(fields["max_loglik"]),
            k=int(fields["k"]),
            aic=float(fields["aic"]) if fields.get("aic") else None,
        )
    except ValueError as err:
        raise ParseError(f"fit report {path}: {err}") from err
