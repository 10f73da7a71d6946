from contextlib import asynccontextmanager
from typing import List, Optional

from fastapi import FastAPI, HTTPException, Query
from pydantic import ValidationError

from config.logging_config import configure_logging
from config.settings import get_settings
from models.errors import BudgetExhausted, CircleIfsError, PreconditionViolation
from models.schemas import CatalogEntry, CertificateFile, HealthResponse, ProbeName, ReplayResult, RunConfig, RunReport
from services.catalog_service import get_catalog_service
from services.report_service import get_report_service
from services.run_service import get_run_service

# Initialize services
settings = get_settings()
catalog_service = get_catalog_service()
run_service = get_run_service()
report_service = get_report_service()


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Lifespan context manager for startup and shutdown events."""
    configure_logging()
    print("Starting circle IFS API...")
    try:
        entries = catalog_service.list_entries()
        print(f"✓ Catalog warmed: {len(entries)} systems")
    except Exception as e:
        print(f"✗ Catalog warm-up failed: {e}")

    yield

    print("Application shutdown complete")


app = FastAPI(
    title="Circle IFS API",
    version="1.0.0",
    lifespan=lifespan
)


def _raise_for(e: Exception):
    if isinstance(e, HTTPException):
        raise e
    if isinstance(e, (PreconditionViolation, ValidationError)):
        raise HTTPException(status_code=422, detail=str(e))
    if isinstance(e, BudgetExhausted):
        partial = e.partial.model_dump(mode="json") if hasattr(e.partial, "model_dump") else None
        raise HTTPException(status_code=409, detail={"message": str(e), "partial": partial})
    if isinstance(e, CircleIfsError):
        raise HTTPException(status_code=400, detail=str(e))
    raise HTTPException(status_code=500, detail=str(e))


@app.get("/catalog", response_model=List[CatalogEntry])
async def list_catalog():
    """Named systems with the probes they carry expected verdicts for."""
    try:
        return catalog_service.list_entries()
    except Exception as e:
        _raise_for(e)


@app.post("/catalog/{name}/run", response_model=List[RunReport])
async def run_catalog(
    name: str,
    probe: Optional[ProbeName] = Query(None, description="Only run this probe"),
    rng_seed: int = Query(0, description="Seed for every random choice")
):
    """Reproduce the expected verdicts recorded for a catalog system."""
    try:
        configs = run_service.catalog_configs(name, rng_seed)
        if probe is not None:
            configs = [c for c in configs if c.probe.name == probe]
        if not configs:
            raise HTTPException(status_code=404, detail=f"no expected verdicts for {name!r}")
        return [run_service.execute(c).report for c in configs]
    except Exception as e:
        _raise_for(e)


@app.post("/run", response_model=RunReport)
async def run_probe(config: RunConfig):
    """Run one probe; the body is a RunConfig."""
    try:
        return run_service.execute(config).report
    except Exception as e:
        _raise_for(e)


@app.post("/verify", response_model=ReplayResult)
async def verify_certificate(certificate: CertificateFile):
    """Replay a certificate file."""
    try:
        return report_service.replay(certificate)
    except Exception as e:
        _raise_for(e)


@app.get("/healthy", response_model=HealthResponse)
async def health_check():
    """Health check endpoint"""
    try:
        if catalog_service.names():
            return HealthResponse(success="running")
        return HealthResponse(failure="empty catalog")
    except Exception:
        return HealthResponse(failure="internal error!")


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host=settings.api_host, port=settings.api_port)
