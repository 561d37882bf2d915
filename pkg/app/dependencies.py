import logging

from fastapi import File, HTTPException, UploadFile

from app.config import settings
from app.errors import ToolkitError
from app.services.ingest import PriceSeries, parse_prices

logger = logging.getLogger(__name__)


def raise_http(err: ToolkitError):
    logger.info(str(err))
    raise HTTPException(status_code=err.status_code, detail=str(err))


async def get_price_series(file: UploadFile = File(...)) -> PriceSeries:
    """
    Dependency that parses an uploaded `date,close` file into a PriceSeries.
    """
    raw = await file.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise HTTPException(status_code=400, detail="Upload must be UTF-8 text")
    try:
        return parse_prices(text, settings.CSV_SEPARATOR)
    except ToolkitError as err:
        raise_http(err)
