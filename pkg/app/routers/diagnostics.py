from fastapi import APIRouter, Depends

from app.config import settings
from app.dependencies import get_price_series, raise_http
from app.errors import ToolkitError
from app.services import diagnostics, ingest, reports
from app.services.ingest import PriceSeries

router = APIRouter(prefix="/diagnostics", tags=["Diagnostics"])


@router.post("/stats")
def stats(prices: PriceSeries = Depends(get_price_series)):
    """
    Summary statistics of the log returns plus autocorrelations and Ljung-Box tests
    at lags 1, 10 and 15.
    """
    try:
        returns = ingest.log_returns(prices)
        summary = diagnostics.summary_stats(returns)
        rows = diagnostics.lag_table(returns)
    except ToolkitError as err:
        raise_http(err)
    return reports.to_jsonable(reports.stats_fields(summary, rows))


@router.post("/rolling")
def rolling(
    window: int = settings.WINDOW,
    alpha: float = settings.ALPHA,
    prices: PriceSeries = Depends(get_price_series),
):
    """
    Moving-window lag-1 autocorrelation with confidence bounds and Q-test p-values.
    """
    try:
        returns = ingest.log_returns(prices)
        result = diagnostics.rolling_autocorrelation(returns, window, 1, alpha)
    except ToolkitError as err:
        raise_http(err)
    frame = reports.rolling_frame(result, returns.labels)
    return {
        "window": window,
        "confidence_bound": result.confidence_bound,
        "points": reports.to_jsonable(frame.to_dict(orient="records")),
    }
