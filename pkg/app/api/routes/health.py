"""Health check API route."""

import logging

import networkx
import numpy
import scipy
from fastapi import APIRouter

from app.config import get_settings
from app.models.schemas import HealthResponse

logger = logging.getLogger(__name__)
router = APIRouter(tags=["Health"])


@router.get(
    "/health",
    response_model=HealthResponse
)
async def health_check():
    """
    Check the health status of the API and its numerical stack.

    Returns the versions of numpy, scipy and networkx and the configured worker count.
    """
    settings = get_settings()
    return HealthResponse(
        status="healthy",
        numpy_version=numpy.__version__,
        scipy_version=scipy.__version__,
        networkx_version=networkx.__version__,
        n_jobs=settings.n_jobs,
        version=settings.api_version,
    )
