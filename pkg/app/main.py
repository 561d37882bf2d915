import logging

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from app.config import settings
from app.routers import diagnostics, estimation, health

logging.basicConfig(level=settings.LOG_LEVEL)

app = FastAPI(title="Evolving Market Efficiency Toolkit")

# Configure CORS (adjust allow_origins as needed for production)
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include the routers
app.include_router(health.router)
app.include_router(diagnostics.router)
app.include_router(estimation.router)

# Serve with: uvicorn app.main:app --reload (batch runs use python -m app.cli)
