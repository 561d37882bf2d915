from fastapi import APIRouter, Depends
from pydantic import BaseModel

from app.config import settings
from app.dependencies import get_price_series, raise_http
from app.errors import ToolkitError
from app.services import calibration, diagnostics, ingest, reports
from app.services.calibration import FitSummary
from app.services.ingest import PriceSeries
from app.services.models import ModelKind

router = APIRouter(prefix="/estimation", tags=["Estimation"])


class CompareRequest(BaseModel):
    fit_a: FitSummary
    fit_b: FitSummary
    alpha: float = settings.ALPHA


@router.post("/fit")
def fit(
    model: str = "tvar1",
    obs_noise: float = settings.OBS_NOISE,
    window: int = settings.WINDOW,
    prices: PriceSeries = Depends(get_price_series),
):
    """
    Fit a model by maximum likelihood on the mean-adjusted returns and return the
    estimates with the filtered coefficient path.
    """
    try:
        kind = ModelKind.parse(model)
        returns = ingest.mean_adjust(ingest.log_returns(prices))
        theta0 = calibration.default_theta0(kind, configured=settings.THETA0_TVAR1)
        spec = calibration.default_spec(kind, theta0, obs_noise=obs_noise)
        result = calibration.fit_mle(
            spec, returns, max_iter=settings.MAX_ITER, xtol=settings.XTOL, ftol=settings.FTOL
        )
        run, _ = calibration.filter_at(spec, result.theta_full, returns)
        beta = run.state_path(0)
        extra = {"reconstruction_error": None}
        if window <= len(returns):
            rolling = diagnostics.rolling_autocorrelation(returns, window, 1, settings.ALPHA)
            extra["reconstruction_error"] = calibration.reconstruction_error(beta, rolling.rho1_path, window)
        if kind in (ModelKind.TVAR1_GARCH, ModelKind.TVAR1_GARCH_KF):
            extra["unconditional_variance"] = spec.params(result.theta_full).unconditional_variance
    except ToolkitError as err:
        raise_http(err)

    body = reports.fit_fields(result, **extra)
    body["path"] = {"date": list(returns.labels), "beta1": beta}
    return reports.to_jsonable(body)


@router.post("/compare")
def compare(request: CompareRequest):
    """
    AIC ranking of two fits and, for nested models, the likelihood-ratio test.
    """
    try:
        comparison = calibration.compare_models(request.fit_a, request.fit_b, request.alpha)
    except ToolkitError as err:
        raise_http(err)
    return reports.to_jsonable(reports.comparison_fields(comparison))
