"""
Evaluación Monte Carlo de políticas de barreras, tabla comparativa PDE / MC
y orquestación de barridos de sensibilidad.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from .hawkes_sim import BarrierFn, PathBatch, run_chunked, simulate_barrier_paths
from .hjb_solver import (
    BarrierPolicy,
    HowardResult,
    PolicyGrid,
    ValueGrid,
    extract_barriers,
    regime_areas,
    sensitivity_sweep,
    value_at,
)
from .neural import MlpParams
from .rl import ActorBarrierPolicy, KappaFn
from .schemas import TABLE_STATES, EvalRow, EvalSpec, GridSpec, ModelParams, State

logger = logging.getLogger(__name__)

Z_95 = 1.96


# --- 1. FUENTES DE POLÍTICA ---

@dataclass
class PolicySource:
    """
    Política evaluable. make_barriers recibe el generador del bloque, de modo que
    una política estocástica comparte stream con la simulación.
    """
    name: str
    make_barriers: Callable[[np.random.Generator], BarrierFn]


def pde_policy_source(barriers: BarrierPolicy) -> PolicySource:
    return PolicySource("pde_barriers", lambda gen: barriers)


def actor_policy_source(
    actor: MlpParams,
    sigma_min: float = 1e-3,
    deterministic: bool = True,
    kappa_fn: Optional[KappaFn] = None,
) -> PolicySource:
    return PolicySource(
        "learned_actor",
        lambda gen: ActorBarrierPolicy(actor, sigma_min, deterministic, gen, kappa_fn),
    )


# --- 2. MONTE CARLO ---

def confidence_interval(samples: np.ndarray) -> Tuple[float, float, float]:
    """Media e intervalo asintótico al 95 %: media +- 1.96 SE."""
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / np.sqrt(len(samples)))
    return mean, mean - Z_95 * se, mean + Z_95 * se


def relative_error_pct(mc_mean: float, pde_value: Optional[float]) -> Optional[float]:
    if pde_value is None or pde_value == 0:
        return None
    return (mc_mean - pde_value) / pde_value * 100


def simulate_state(
    source: PolicySource,
    p: ModelParams,
    s0: State,
    spec: EvalSpec,
    n_paths: int,
    seed,
    workers: Optional[int] = None,
) -> PathBatch:
    return PathBatch.concat(run_chunked(
        lambda n, gen: simulate_barrier_paths(p, s0, spec.h, spec.horizon_T, source.make_barriers(gen), gen, n),
        n_paths, seed, workers=workers,
    ))


def mc_value(
    source: PolicySource,
    p: ModelParams,
    spec: EvalSpec,
    states: Optional[Sequence[Tuple[float, float]]] = None,
    n_paths: Optional[int] = None,
    seed: Optional[int] = None,
    pde_value: Optional[ValueGrid] = None,
    workers: Optional[int] = None,
) -> List[EvalRow]:
    """
    n_paths episodios por estado inicial. El estado k usa la semilla (seed, k),
    así dos políticas evaluadas con la misma semilla comparten ruido.
    """
    states = list(states if states is not None else spec.states)
    n_paths = n_paths or spec.n_paths
    seed = spec.seed if seed is None else seed
    if n_paths < 2:
        raise ValueError("mc_value necesita al menos 2 trayectorias")

    rows = []
    for k, (x0, y0) in enumerate(states):
        batch = simulate_state(source, p, State(x=x0, y=y0), spec, n_paths, (seed, k), workers)
        mean, low, high = confidence_interval(batch.discounted_totals)
        ref = float(value_at(pde_value, x0, y0)) if pde_value is not None else None
        rows.append(EvalRow(
            x0=x0, y0=y0, pde_value=ref, mc_mean=mean, mc_ci95=(low, high),
            rel_err_pct=relative_error_pct(mean, ref), n_paths=n_paths, policy_source=source.name,
        ))
        logger.info(
            "MC %s (x=%.2f, y=%.2f): %.4f [%.4f, %.4f], ruina %.1f%%",
            source.name, x0, y0, mean, low, high, 100 * batch.ruined.mean(),
        )
    return rows


def report_frame(rows: List[EvalRow]) -> pd.DataFrame:
    return pd.DataFrame([{
        "x0": r.x0, "y0": r.y0, "pde_value": r.pde_value, "mc_mean": r.mc_mean,
        "ci_low": r.mc_ci95[0], "ci_high": r.mc_ci95[1], "rel_err_pct": r.rel_err_pct,
        "n_paths": r.n_paths, "policy_source": r.policy_source,
    } for r in rows])


# --- 3. TABLA COMPARATIVA ---

def compare_table(
    pde_solution: HowardResult,
    actor: Optional[MlpParams],
    p: ModelParams,
    spec: EvalSpec,
    states: Sequence[Tuple[float, float]] = TABLE_STATES,
    sigma_min: float = 1e-3,
    kappa_fn: Optional[KappaFn] = None,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """Columnas PDE, MC(Opt) y MC(RL) con sus intervalos y errores relativos."""
    g = pde_solution.grid
    barriers = extract_barriers(g, p, pde_solution.value, pde_solution.policy)
    opt = mc_value(pde_policy_source(barriers), p, spec, states, pde_value=pde_solution.value, workers=workers)

    df = pd.DataFrame({
        "x": [r.x0 for r in opt],
        "y": [r.y0 for r in opt],
        "pde": [r.pde_value for r in opt],
        "mc_opt": [r.mc_mean for r in opt],
        "mc_opt_low": [r.mc_ci95[0] for r in opt],
        "mc_opt_high": [r.mc_ci95[1] for r in opt],
        "rel_err_opt_pct": [r.rel_err_pct for r in opt],
    })
    if actor is not None:
        source = actor_policy_source(actor, sigma_min, spec.deterministic, kappa_fn)
        rl = mc_value(source, p, spec, states, pde_value=pde_solution.value, workers=workers)
        df["mc_rl"] = [r.mc_mean for r in rl]
        df["mc_rl_low"] = [r.mc_ci95[0] for r in rl]
        df["mc_rl_high"] = [r.mc_ci95[1] for r in rl]
        df["rel_err_rl_pct"] = [r.rel_err_pct for r in rl]
    return df


def render_compare_table(df: pd.DataFrame, console: Optional[Console] = None) -> Table:
    table = Table(title="Valor: PDE frente a Monte Carlo")
    table.add_column("x", justify="right")
    table.add_column("y", justify="right")
    table.add_column("PDE", justify="right")
    table.add_column("MC (Opt.)", justify="right")
    table.add_column("IC 95%", justify="center")
    table.add_column("Err. rel.", justify="right")
    has_rl = "mc_rl" in df.columns
    if has_rl:
        table.add_column("MC (RL)", justify="right")
        table.add_column("IC 95%", justify="center")
        table.add_column("Err. rel.", justify="right")

    def pct(v):
        return "-" if v is None or pd.isna(v) else f"{v:+.2f}%"

    for row in df.itertuples(index=False):
        cells = [
            f"{row.x:.1f}", f"{row.y:.0f}", f"{row.pde:.4f}", f"{row.mc_opt:.4f}",
            f"[{row.mc_opt_low:.4f}, {row.mc_opt_high:.4f}]", pct(row.rel_err_opt_pct),
        ]
        if has_rl:
            cells += [f"{row.mc_rl:.4f}", f"[{row.mc_rl_low:.4f}, {row.mc_rl_high:.4f}]", pct(row.rel_err_rl_pct)]
        table.add_row(*cells)

    if console is not None:
        console.print(table)
    return table


# --- 4. BARRIDOS ---

def run_sweep(
    base: ModelParams,
    spec: GridSpec,
    param_name: str,
    values: Sequence[float],
    workers: Optional[int] = None,
) -> Tuple[Dict[float, PolicyGrid], pd.DataFrame]:
    """Mapas de régimen por valor y resumen de áreas por régimen."""
    runs = sensitivity_sweep(base, spec, param_name, values, workers)
    maps: Dict[float, PolicyGrid] = {}
    summary = []
    for value, (p, policy) in zip(values, runs):
        maps[float(value)] = policy
        summary.append({"param": param_name, "value": float(value), **regime_areas(policy.grid, policy)})
    return maps, pd.DataFrame(summary)


def render_sweep_summary(df: pd.DataFrame, console: Optional[Console] = None) -> Table:
    table = Table(title="Barrido de sensibilidad: fracción de nodos por régimen")
    for col in ("param", "value", "continuation", "dividend", "injection", "ruin"):
        table.add_column(col, justify="right")
    for row in df.itertuples(index=False):
        table.add_row(
            row.param, f"{row.value:g}", f"{row.continuation:.3f}", f"{row.dividend:.3f}",
            f"{row.injection:.3f}", f"{row.ruin:.3f}",
        )
    if console is not None:
        console.print(table)
    return table
