"""Graph distance API route."""

import logging

from fastapi import APIRouter, HTTPException, status

from app.exceptions import DimensionError, GraphError, NumericalError
from app.models.schemas import DistanceRequest, DistanceResponse, ErrorResponse
from app.services.distances import distance_matrix
from app.services.graphs import from_rows

logger = logging.getLogger(__name__)
router = APIRouter(tags=["Distances"])


@router.post(
    "/distances",
    response_model=DistanceResponse,
    responses={
        400: {"model": ErrorResponse, "description": "Invalid graphs"},
        500: {"model": ErrorResponse, "description": "Numerical failure"}
    }
)
async def compute_distances(request: DistanceRequest):
    """
    Compute the pairwise distance matrix over posted adjacency matrices.

    Graphs are validated like graph files (square, symmetric, zero diagonal, one order).
    An unsigned spectral kind on graphs with negative weights falls back to the signed
    Laplacian; the response reports the kind actually used.
    """
    try:
        graphs = [from_rows(rows, name=f"graph {i}") for i, rows in enumerate(request.graphs)]
        D = distance_matrix(graphs, request.kind)
    except (GraphError, DimensionError) as e:
        logger.warning(f"Rejected distance request: {e}")
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(e)
        )
    except NumericalError as e:
        logger.error(f"Distance computation failed: {e}")
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Failed to compute distances: {str(e)}"
        )

    return DistanceResponse(kind=D.kind, m=D.m, distances=D.values.tolist())
