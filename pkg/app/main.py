import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from . import api
from .config import setup_logging

logger = logging.getLogger(__name__)


# --- GESTOR DE CICLO DE VIDA ---
@asynccontextmanager
async def lifespan(app: FastAPI):
    setup_logging()
    logger.info("Iniciando API de dividendos óptimos...")
    yield
    logger.info("Apagando API.")


# --- Instancia de FastAPI ---
app = FastAPI(
    title="Hawkes Dividends API",
    description="Dividendos óptimos e inyecciones de capital con siniestros de Hawkes (HJB + RL)",
    version="1.0.0",
    lifespan=lifespan,
)

origins = [
    "http://localhost:3000",
    "http://localhost:5173",
]
app.add_middleware(
    CORSMiddleware,
    allow_origins=origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(api.router, prefix="/api/v1", tags=["Solver"])


@app.get("/")
def read_root():
    return {"status": "online", "message": "API de dividendos óptimos en línea"}
