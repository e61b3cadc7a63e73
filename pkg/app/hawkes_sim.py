"""
Simulación exacta de la intensidad de Hawkes y del excedente controlado
por barreras (thinning de Ogata dentro de cada paso h).

Las trayectorias se simulan vectorizadas sobre caminos. Un lote de n caminos
se parte en bloques de tamaño fijo; el bloque c usa RngStream(seed, c), así
que las estadísticas no dependen del número de workers.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Tuple, TypeVar, Union

import numpy as np
import pandas as pd

from .config import settings
from .exceptions import ModelError, PolicyContractError
from .model_core import ClaimDist, make_claim_dist, pre_claim_intensity
from .schemas import ModelParams, State

logger = logging.getLogger(__name__)

# y -> (x*(y), kappa*(y)), vectorizado sobre y
BarrierFn = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]
# Semilla entera o tupla de enteros (p. ej. (seed, epoch))
SeedLike = Union[int, Tuple[int, ...]]
T = TypeVar("T")


@dataclass(frozen=True)
class RngStream:
    """Stream reproducible: mismo (seed, stream_id) => misma secuencia."""
    seed: SeedLike
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,)))


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    return rng.generator() if isinstance(rng, RngStream) else rng


class ExitKind(str, Enum):
    RUIN = "ruin"
    HORIZON = "horizon"


@dataclass
class Trajectory:
    times: np.ndarray
    surplus: np.ndarray           # X_{t_i} antes de aplicar la barrera
    intensity: np.ndarray
    actions: np.ndarray           # > 0 dividendo, < 0 inyección
    rewards: np.ndarray           # sin descontar
    discounted_rewards: np.ndarray
    exit_index: int
    exit_kind: ExitKind
    n_claims: int = 0

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.discounted_rewards))


@dataclass
class PathBatch:
    discounted_totals: np.ndarray
    exit_index: np.ndarray
    ruined: np.ndarray
    n_steps: int = 0
    trajectories: List[Trajectory] = field(default_factory=list)

    @property
    def n_paths(self) -> int:
        return len(self.discounted_totals)

    @classmethod
    def concat(cls, parts: List["PathBatch"]) -> "PathBatch":
        if not parts:
            return cls(np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool))
        return cls(
            discounted_totals=np.concatenate([b.discounted_totals for b in parts]),
            exit_index=np.concatenate([b.exit_index for b in parts]),
            ruined=np.concatenate([b.ruined for b in parts]),
            n_steps=parts[0].n_steps,
        )


# --- 1. PRIMER SINIESTRO Y AVANCE DE UN PASO ---

def next_claim_time(p: ModelParams, y: float, rng: RngLike) -> float:
    """
    Primer salto de un Hawkes que arranca con intensidad y >= b, por thinning.
    La intensidad no crece entre saltos, así que la actual domina siempre.
    """
    if y < p.b:
        raise ModelError(f"La intensidad debe ser >= b={p.b}")
    gen = as_generator(rng)
    t = 0.0
    lam_bar = y
    while True:
        t += gen.exponential(1.0 / lam_bar)
        lam_t = pre_claim_intensity(p, y, t)
        if gen.uniform() * lam_bar <= lam_t:
            return t
        lam_bar = lam_t


def advance(
    p: ModelParams,
    dist: ClaimDist,
    x: np.ndarray,
    lam: np.ndarray,
    h: float,
    gen: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Avanza (X, lambda) de todos los caminos sobre [t, t+h] sin acciones.
    Devuelve (X', lambda', total de siniestros, número de siniestros).
    """
    n = x.shape[0]
    t = np.zeros(n)
    lam_cur = np.array(lam, dtype=float)
    claims = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)

    while active.any():
        idx = np.flatnonzero(active)
        lam_bar = lam_cur[idx]
        w = gen.exponential(1.0, size=idx.size) / lam_bar
        u = gen.uniform(size=idx.size)

        remaining = h - t[idx]
        beyond = w >= remaining
        # caminos cuya propuesta cae fuera del paso: decaen hasta t+h y terminan
        end = idx[beyond]
        lam_cur[end] = p.b + (lam_bar[beyond] - p.b) * np.exp(-p.a * remaining[beyond])
        t[end] = h
        active[end] = False

        inside = ~beyond
        sub = idx[inside]
        lam_prop = p.b + (lam_bar[inside] - p.b) * np.exp(-p.a * w[inside])
        accept = u[inside] * lam_bar[inside] <= lam_prop
        t[sub] += w[inside]
        lam_cur[sub] = lam_prop + p.eta * accept

        hit = sub[accept]
        if hit.size:
            claims[hit] += dist.sample(gen, size=hit.size)
            counts[hit] += 1

    return x + p.c * h - claims, lam_cur, claims, counts


def step(p: ModelParams, s: State, h: float, net_action: float, rng: RngLike) -> Tuple[State, float, int]:
    """Un paso del excedente controlado: dividendo si net_action > 0, inyección si < 0."""
    if h <= 0:
        raise ModelError("El paso h debe ser positivo")
    if s.y < p.b:
        raise ModelError(f"La intensidad debe ser >= b={p.b}")
    gen = as_generator(rng)
    x_new, lam_new, claims, counts = advance(
        p, make_claim_dist(p.claim), np.array([s.x - net_action]), np.array([s.y]), h, gen
    )
    return State(x=float(x_new[0]), y=float(lam_new[0])), float(claims[0]), int(counts[0])


# --- 2. POLÍTICAS DE BARRERAS ---

def check_barriers(x_star: np.ndarray, kappa_star: np.ndarray) -> None:
    if np.any(x_star < 0) or np.any(kappa_star > 0) or np.any(np.isnan(x_star)) or np.any(np.isnan(kappa_star)):
        raise PolicyContractError("La política devolvió x* < 0 o kappa* > 0")


def apply_barriers(
    delta: float, x: np.ndarray, x_star: np.ndarray, kappa_star: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Acción de la política de dos barreras sobre el excedente x.
    Devuelve (recompensa sin descontar, acción neta de caja, ruina).
    """
    ruin = x < kappa_star
    div = ~ruin & (x >= x_star)
    inj = ~ruin & ~div & (x < 0)
    action = np.where(div, x - x_star, np.where(inj, x, 0.0))
    reward = np.where(div, x - x_star, np.where(inj, delta * x, 0.0))
    return reward, action, ruin


def constant_barriers(x_star: float, kappa_star: float) -> BarrierFn:
    def barriers(y: np.ndarray):
        return np.full(np.shape(y), x_star, dtype=float), np.full(np.shape(y), kappa_star, dtype=float)
    return barriers


def simulate_barrier_paths(
    p: ModelParams,
    s0: State,
    h: float,
    horizon_T: float,
    barriers: BarrierFn,
    rng: RngLike,
    n_paths: int,
    record: bool = False,
) -> PathBatch:
    """
    Simula n_paths caminos bajo la política de barreras. En cada t_i: primero
    los siniestros del paso anterior, luego la barrera; ruina si X < kappa*(y).
    Recompensa e^{-rho t_i} [(X - x*) 1{X >= x*} + delta X 1{kappa* <= X < 0}].
    """
    if h <= 0:
        raise ModelError("El paso h debe ser positivo")
    if record and n_paths != 1:
        raise ValueError("record=True solo admite un camino")
    gen = as_generator(rng)
    dist = make_claim_dist(p.claim)
    n_steps = int(round(horizon_T / h))

    x = np.full(n_paths, s0.x, dtype=float)
    lam = np.full(n_paths, s0.y, dtype=float)
    alive = np.ones(n_paths, dtype=bool)
    totals = np.zeros(n_paths)
    exit_index = np.full(n_paths, n_steps, dtype=np.int64)
    ruined = np.zeros(n_paths, dtype=bool)
    n_claims = np.zeros(n_paths, dtype=np.int64)

    rec = {k: [] for k in ("t", "x", "lam", "action", "reward", "disc")} if record else None

    for i in range(n_steps + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        t_i = i * h
        x_star, kappa_star = barriers(lam[idx])
        x_star = np.asarray(x_star, dtype=float)
        kappa_star = np.asarray(kappa_star, dtype=float)
        check_barriers(x_star, kappa_star)

        reward, action, ruin = apply_barriers(p.delta, x[idx], x_star, kappa_star)
        disc_reward = np.exp(-p.rho * t_i) * reward
        totals[idx] += disc_reward

        if record:
            rec["t"].append(t_i)
            rec["x"].append(x[idx][0])
            rec["lam"].append(lam[idx][0])
            rec["action"].append(action[0])
            rec["reward"].append(reward[0])
            rec["disc"].append(disc_reward[0])

        gone = idx[ruin]
        alive[gone] = False
        ruined[gone] = True
        exit_index[gone] = i
        if i == n_steps:
            break

        cont = idx[~ruin]
        x_next, lam_next, _, counts = advance(p, dist, x[cont] - action[~ruin], lam[cont], h, gen)
        x[cont] = x_next
        lam[cont] = lam_next
        n_claims[cont] += counts

    batch = PathBatch(discounted_totals=totals, exit_index=exit_index, ruined=ruined, n_steps=n_steps)
    if record:
        batch.trajectories.append(Trajectory(
            times=np.array(rec["t"]),
            surplus=np.array(rec["x"]),
            intensity=np.array(rec["lam"]),
            actions=np.array(rec["action"]),
            rewards=np.array(rec["reward"]),
            discounted_rewards=np.array(rec["disc"]),
            exit_index=int(exit_index[0]),
            exit_kind=ExitKind.RUIN if ruined[0] else ExitKind.HORIZON,
            n_claims=int(n_claims[0]),
        ))
    return batch


def simulate_barrier_trajectory(
    p: ModelParams,
    s0: State,
    h: float,
    horizon_T: float,
    barriers: BarrierFn,
    rng: RngLike,
) -> Trajectory:
    """Una trayectoria completa (tiempos, excedente, intensidad, acciones, recompensas)."""
    return simulate_barrier_paths(p, s0, h, horizon_T, barriers, rng, n_paths=1, record=True).trajectories[0]


def trajectory_frame(traj: Trajectory) -> pd.DataFrame:
    """Volcado CSV: t, X, lambda, action, reward, cum_discounted_reward."""
    return pd.DataFrame({
        "t": traj.times,
        "X": traj.surplus,
        "lambda": traj.intensity,
        "action": traj.actions,
        "reward": traj.rewards,
        "cum_discounted_reward": np.cumsum(traj.discounted_rewards),
    })


# --- 3. LOTES EN PARALELO ---

def run_chunked(
    fn: Callable[[int, np.random.Generator], T],
    n_paths: int,
    seed: SeedLike,
    chunk_size: int | None = None,
    workers: int | None = None,
) -> List[T]:
    """
    Ejecuta fn(n, generador) por bloques de tamaño fijo; devuelve los resultados
    en orden de bloque. El bloque c usa RngStream(seed, c).
    """
    chunk_size = chunk_size or settings.CHUNK_SIZE
    workers = workers or settings.WORKERS
    sizes = [min(chunk_size, n_paths - start) for start in range(0, n_paths, chunk_size)]
    jobs = [(n, RngStream(seed, c).generator()) for c, n in enumerate(sizes)]

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda job: fn(*job), jobs))
    return [fn(*job) for job in jobs]


def simulate_barrier_batch(
    p: ModelParams,
    s0: State,
    h: float,
    horizon_T: float,
    barriers: BarrierFn,
    n_paths: int,
    seed: SeedLike,
    chunk_size: int | None = None,
    workers: int | None = None,
) -> PathBatch:
    """simulate_barrier_paths repartido en bloques reproducibles."""
    return PathBatch.concat(run_chunked(
        lambda n, gen: simulate_barrier_paths(p, s0, h, horizon_T, barriers, gen, n),
        n_paths, seed, chunk_size, workers,
    ))


# --- 4. ELECCIÓN DEL HORIZONTE ---

def ruin_free_probability(
    p: ModelParams, s0: State, h: float, horizon_T: float, n_paths: int, seed: int
) -> float:
    """P(sin ruina hasta T) bajo la política de no intervenir (x* = inf, kappa* = 0)."""
    batch = simulate_barrier_batch(p, s0, h, horizon_T, constant_barriers(np.inf, 0.0), n_paths, seed)
    return float(np.mean(~batch.ruined))


def check_horizon(
    p: ModelParams, s0: State, h: float, horizon_T: float,
    eps: float = 0.01, n_paths: int = 1024, seed: int = 0,
) -> float:
    """Estima P(sin ruina hasta T) y avisa si supera eps."""
    prob = ruin_free_probability(p, s0, h, horizon_T, n_paths, seed)
    if prob > eps:
        logger.warning(
            "Horizonte T=%.1f corto: P(sin ruina hasta T) = %.3f > %.3f sin intervenir",
            horizon_T, prob, eps,
        )
    else:
        logger.info("Horizonte T=%.1f: P(sin ruina hasta T) = %.4f", horizon_T, prob)
    return prob
