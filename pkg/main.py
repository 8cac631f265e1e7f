"""
GaborNet Lab - Main Application

FastAPI service for training CNNs with fixed or partially trained Gabor
kernels and reporting their compute, memory and storage costs.
"""
import logging
import os
from contextlib import asynccontextmanager
from datetime import datetime, timezone

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from app.api.routes import api_router
from app.config import DATA_DIR, RESULTS_DIR, configure_logging
from app.errors import GaborNetError
from app.services.dataset import mnist_available

logger = logging.getLogger(__name__)


# =============================================================================
# LIFESPAN
# =============================================================================

@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan handler."""
    # Startup
    configure_logging()
    logger.info("=" * 60)
    logger.info("GaborNet Lab - Starting")
    logger.info("=" * 60)

    RESULTS_DIR.mkdir(parents=True, exist_ok=True)

    if mnist_available(DATA_DIR):
        logger.info(f"MNIST files found in {DATA_DIR}")
    else:
        logger.warning(f"MNIST files not found in {DATA_DIR}; only synthetic runs will work")

    yield

    # Shutdown
    logger.info("Shutting down...")


# =============================================================================
# APP SETUP
# =============================================================================

app = FastAPI(
    title="GaborNet Lab",
    description="CNN training with fixed Gabor kernels and training-cost accounting",
    version="1.0.0",
    lifespan=lifespan,
)

app.include_router(api_router)


@app.exception_handler(GaborNetError)
async def gabornet_error_handler(request: Request, exc: GaborNetError):
    return JSONResponse(status_code=400, content={"detail": str(exc)})


# =============================================================================
# HEALTH CHECK (root level)
# =============================================================================

@app.api_route("/health", methods=["GET", "HEAD"])
async def health():
    """Health check endpoint."""
    return {
        "status": "healthy",
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "service": "gabornet-lab"
    }


# =============================================================================
# RUN
# =============================================================================

if __name__ == "__main__":
    import uvicorn
    port = int(os.environ.get("PORT", 8000))
    uvicorn.run("main:app", host="0.0.0.0", port=port, reload=True)
