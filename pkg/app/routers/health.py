import numpy as np
import scipy
from fastapi import APIRouter

from app.config import settings

router = APIRouter()


@router.get("/health", tags=["Health"])
def health_check():
    """
    Health check endpoint reporting the numerical stack and the filter defaults in use.
    """
    return {
        "status": "ok",
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "obs_noise": settings.OBS_NOISE,
        "window": settings.WINDOW,
        "alpha": settings.ALPHA,
    }
