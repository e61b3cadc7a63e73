import logging

from fastapi import APIRouter, HTTPException, status
from fastapi.concurrency import run_in_threadpool

from .evaluation import mc_value, pde_policy_source
from .exceptions import HawkesDividendError, NumericalError
from .hjb_solver import build_grid, extract_barriers, howard_solve, value_at
from .schemas import BarrierRow, EvalReport, EvaluateRequest, SolveRequest, SolveResult

logger = logging.getLogger(__name__)

# --- Definición del Router ---
router = APIRouter()


def _solve_sync(request: SolveRequest) -> SolveResult:
    """Función SÍNCRONA: Howard completo + tabla de barreras."""
    g = build_grid(request.grid, request.model)
    result = howard_solve(g, request.model)
    barriers = extract_barriers(g, request.model, result.value, result.policy)
    return SolveResult(
        values=[(x, y, float(value_at(result.value, x, y))) for x, y in request.states],
        outer_iterations=result.outer_iterations,
        barriers=[
            BarrierRow(y=float(y), kappa_star=float(k), x_star=float(xs))
            for y, k, xs in zip(barriers.ys, barriers.kappa_table, barriers.x_table)
        ],
    )


def _evaluate_sync(request: EvaluateRequest) -> EvalReport:
    g = build_grid(request.grid, request.model)
    result = howard_solve(g, request.model)
    barriers = extract_barriers(g, request.model, result.value, result.policy)
    rows = mc_value(pde_policy_source(barriers), request.model, request.eval, pde_value=result.value)
    return EvalReport(rows=rows)


async def _run(fn, request):
    """Ejecuta en el threadpool y traduce los errores del dominio a HTTP."""
    try:
        return await run_in_threadpool(fn, request)
    except NumericalError as e:
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=f"Fallo numérico: {e}")
    except (HawkesDividendError, ValueError) as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=f"Error de validación: {e}")
    except Exception as e:
        logger.exception("Error inesperado en %s", fn.__name__)
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=f"Error interno del servidor: {e}")


@router.post("/solve", response_model=SolveResult)
async def solve(request: SolveRequest):
    """Resuelve la HJB por iteración de Howard y devuelve V en los estados pedidos."""
    return await _run(_solve_sync, request)


@router.post("/evaluate", response_model=EvalReport)
async def evaluate(request: EvaluateRequest):
    """Evalúa por Monte Carlo las barreras extraídas de la solución PDE."""
    return await _run(_evaluate_sync, request)


@router.get("/health")
async def health_check():
    return {"status": "ok", "service": "hawkes-dividends", "version": "1.0.0"}
