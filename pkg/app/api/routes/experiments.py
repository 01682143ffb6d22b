"""Experiment API routes."""

import logging

from fastapi import APIRouter, HTTPException, status
from fastapi.concurrency import run_in_threadpool
from pydantic import ValidationError

from app.exceptions import NetGPError, NumericalError, SamplerAbort
from app.models.schemas import ErrorResponse, ExperimentConfig, Task, TaskResult
from app.services.runner import experiment_runner

logger = logging.getLogger(__name__)
router = APIRouter(prefix="/experiments", tags=["Experiments"])


@router.post(
    "/{task}",
    response_model=TaskResult,
    responses={
        400: {"model": ErrorResponse, "description": "Invalid dataset or configuration"},
        422: {"model": ErrorResponse, "description": "Invalid configuration"},
        500: {"model": ErrorResponse, "description": "Sampler or numerical failure"}
    }
)
async def run_experiment(task: Task, body: dict):
    """
    Run one task with the same runner as the command line.

    The body holds ExperimentConfig fields other than `task`. The sampler runs in a
    worker thread so the event loop stays responsive.
    """
    try:
        cfg = ExperimentConfig(**{**body, "task": task})
    except ValidationError as e:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=e.errors(include_url=False, include_context=False)
        )

    try:
        return await run_in_threadpool(experiment_runner.run, cfg)
    except (NumericalError, SamplerAbort) as e:
        logger.error(f"Task '{task.value}' failed: {e}")
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Task failed: {str(e)}"
        )
    except (NetGPError, ValueError) as e:
        logger.warning(f"Task '{task.value}' rejected: {e}")
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(e)
        )
