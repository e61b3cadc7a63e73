"""
Entorno MDP de barreras y bucles de entrenamiento (REINFORCE con línea base y
actor-crítico). El actor recibe la intensidad y devuelve (mu1, s1, mu2, s2);
de cada gaussiana se extrae una muestra y se mapea a x* = softplus(g1) >= 0,
kappa* = -softplus(g2) <= 0.

El descuento va dentro de las recompensas (e^{-rho t_i}); el crítico estima el
valor sin descontar v(x, lambda) y el valor de la cadena en t_i es e^{-rho t_i} v.
"""
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .exceptions import DivergenceError
from .hawkes_sim import (
    RngLike,
    RngStream,
    advance,
    apply_barriers,
    as_generator,
    check_barriers,
    check_horizon,
    run_chunked,
)
from .hjb_solver import Regime
from .model_core import make_claim_dist
from .neural import (
    ForwardCache,
    GaussianPolicyHead,
    MlpParams,
    OptimizerConfig,
    OptimizerState,
    add_into,
    backward,
    forward,
    gaussian_entropy,
    gaussian_entropy_grad,
    gaussian_log_prob,
    gaussian_log_prob_grad,
    init_mlp,
    optimizer_step,
    save_checkpoint,
    softplus,
)
from .schemas import ModelParams, State, TrainConfig

logger = logging.getLogger(__name__)

# Registros por bloque en los pases hacia atrás (acota la memoria)
GRAD_CHUNK = 65_536

KappaFn = Callable[[np.ndarray], np.ndarray]


class Algo(str, Enum):
    REINFORCE = "reinforce"
    ACTOR_CRITIC = "actor_critic"


# --- 1. POLÍTICA ---

@dataclass
class BarrierSample:
    x_star: np.ndarray
    kappa_star: np.ndarray
    logp: np.ndarray
    raw: np.ndarray          # (n, 2) muestras gaussianas antes del mapeo
    head: GaussianPolicyHead


def sample_barriers(
    actor: MlpParams,
    y,
    rng: Optional[RngLike] = None,
    sigma_min: float = 1e-3,
    deterministic: bool = False,
    kappa_fn: Optional[KappaFn] = None,
) -> BarrierSample:
    """
    Barreras para cada intensidad de y. logp es la densidad de las muestras
    crudas; con kappa_fn (kappa* congelado) solo cuenta la componente de x*.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    head = GaussianPolicyHead.from_outputs(forward(actor, y[:, None]), sigma_min)
    if deterministic:
        g1, g2 = head.mu1.copy(), head.mu2.copy()
    else:
        noise = as_generator(rng).standard_normal((y.size, 2))
        g1 = head.mu1 + head.sigma1 * noise[:, 0]
        g2 = head.mu2 + head.sigma2 * noise[:, 1]

    x_star = softplus(g1)
    if kappa_fn is None:
        kappa_star = -softplus(g2)
        logp = gaussian_log_prob(head, g1, g2)
    else:
        kappa_star = np.minimum(np.asarray(kappa_fn(y), dtype=float), 0.0)
        logp = gaussian_log_prob(head, g1)
    return BarrierSample(x_star, kappa_star, logp, np.stack([g1, g2], axis=1), head)


class ActorBarrierPolicy:
    """Adapta un actor entrenado a la interfaz y -> (x*, kappa*) del simulador."""

    def __init__(
        self,
        actor: MlpParams,
        sigma_min: float = 1e-3,
        deterministic: bool = True,
        rng: Optional[RngLike] = None,
        kappa_fn: Optional[KappaFn] = None,
    ):
        self.actor = actor
        self.sigma_min = sigma_min
        self.deterministic = deterministic
        self.rng = as_generator(rng) if rng is not None else None
        self.kappa_fn = kappa_fn

    def __call__(self, y):
        s = sample_barriers(self.actor, y, self.rng, self.sigma_min, self.deterministic, self.kappa_fn)
        return s.x_star, s.kappa_star


def tabulate_barriers(
    actor: MlpParams,
    ys: Sequence[float],
    sigma_min: float = 1e-3,
    deterministic: bool = True,
    rng: Optional[RngLike] = None,
) -> pd.DataFrame:
    s = sample_barriers(actor, np.asarray(ys, dtype=float), rng, sigma_min, deterministic)
    return pd.DataFrame({"y": np.asarray(ys, dtype=float), "x_star": s.x_star, "kappa_star": s.kappa_star})


def learned_regime_map(
    actor: MlpParams, xs: Sequence[float], ys: Sequence[float], sigma_min: float = 1e-3
) -> pd.DataFrame:
    """Regiones de control de las barreras aprendidas (modo determinista) sobre una malla (x, y)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    s = sample_barriers(actor, ys, sigma_min=sigma_min, deterministic=True)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    x_star = np.broadcast_to(s.x_star[None, :], X.shape)
    kappa = np.broadcast_to(s.kappa_star[None, :], X.shape)
    regime = np.select(
        [X < kappa, X < 0, X < x_star],
        [Regime.RUIN, Regime.INJECTION, Regime.CONTINUATION],
        default=Regime.DIVIDEND,
    )
    return pd.DataFrame({"x": X.ravel(), "y": Y.ravel(), "regime": regime.ravel().astype(int)})


# --- 2. EPISODIOS ---

@dataclass
class EpisodeBatch:
    """
    Lote de trayectorias. Por camino: recompensa total descontada, índice y tipo
    de salida. Por paso registrado (ordenados por camino y paso): estado antes de
    la barrera, muestras crudas, logp y recompensa descontada.
    """
    totals: np.ndarray
    exit_index: np.ndarray
    ruined: np.ndarray
    path: np.ndarray
    step: np.ndarray
    x: np.ndarray
    y: np.ndarray
    raw: np.ndarray
    logp: np.ndarray
    reward: np.ndarray
    h: float
    frozen_kappa: bool = False
    critic_values: Optional[np.ndarray] = None

    @property
    def n_paths(self) -> int:
        return len(self.totals)

    @property
    def n_records(self) -> int:
        return len(self.path)

    @property
    def times(self) -> np.ndarray:
        return self.step * self.h

    @classmethod
    def concat(cls, parts: List["EpisodeBatch"]) -> "EpisodeBatch":
        offsets = np.cumsum([0] + [b.n_paths for b in parts[:-1]])
        return cls(
            totals=np.concatenate([b.totals for b in parts]),
            exit_index=np.concatenate([b.exit_index for b in parts]),
            ruined=np.concatenate([b.ruined for b in parts]),
            path=np.concatenate([b.path + off for b, off in zip(parts, offsets)]),
            step=np.concatenate([b.step for b in parts]),
            x=np.concatenate([b.x for b in parts]),
            y=np.concatenate([b.y for b in parts]),
            raw=np.concatenate([b.raw for b in parts]),
            logp=np.concatenate([b.logp for b in parts]),
            reward=np.concatenate([b.reward for b in parts]),
            h=parts[0].h,
            frozen_kappa=parts[0].frozen_kappa,
        )


def run_batch(
    actor: MlpParams,
    p: ModelParams,
    cfg: TrainConfig,
    rng: RngLike,
    n_paths: int,
    s0: Optional[State] = None,
    kappa_fn: Optional[KappaFn] = None,
    deterministic: bool = False,
) -> EpisodeBatch:
    """Simula n_paths episodios en paralelo (vectorizados) con el actor actual."""
    gen = as_generator(rng)
    dist = make_claim_dist(p.claim)
    s0 = s0 or State(x=cfg.x0, y=cfg.y0)
    n_steps = cfg.n_steps

    x = np.full(n_paths, s0.x, dtype=float)
    lam = np.full(n_paths, s0.y, dtype=float)
    alive = np.ones(n_paths, dtype=bool)
    totals = np.zeros(n_paths)
    exit_index = np.full(n_paths, n_steps, dtype=np.int64)
    ruined = np.zeros(n_paths, dtype=bool)
    rec: Dict[str, list] = {k: [] for k in ("path", "step", "x", "y", "raw", "logp", "reward")}

    for i in range(n_steps + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        s = sample_barriers(actor, lam[idx], gen, cfg.sigma_min, deterministic, kappa_fn)
        check_barriers(s.x_star, s.kappa_star)
        reward, action, ruin = apply_barriers(p.delta, x[idx], s.x_star, s.kappa_star)
        disc_reward = np.exp(-p.rho * i * cfg.h) * reward
        totals[idx] += disc_reward

        rec["path"].append(idx)
        rec["step"].append(np.full(idx.size, i, dtype=np.int64))
        rec["x"].append(x[idx].copy())
        rec["y"].append(lam[idx].copy())
        rec["raw"].append(s.raw)
        rec["logp"].append(s.logp)
        rec["reward"].append(disc_reward)

        gone = idx[ruin]
        alive[gone] = False
        ruined[gone] = True
        exit_index[gone] = i
        if i == n_steps:
            break
        cont = idx[~ruin]
        x[cont], lam[cont], _, _ = advance(p, dist, x[cont] - action[~ruin], lam[cont], cfg.h, gen)

    data = {k: np.concatenate(v) for k, v in rec.items()}
    order = np.lexsort((data["step"], data["path"]))
    data = {k: v[order] for k, v in data.items()}
    if not np.all(np.isfinite(data["logp"])):
        raise DivergenceError("log-probabilidad no finita en el lote")
    return EpisodeBatch(
        totals=totals, exit_index=exit_index, ruined=ruined, h=cfg.h,
        frozen_kappa=kappa_fn is not None, **data,
    )


def run_episode(
    actor: MlpParams, p: ModelParams, cfg: TrainConfig, rng: RngLike, kappa_fn: Optional[KappaFn] = None
) -> EpisodeBatch:
    return run_batch(actor, p, cfg, rng, n_paths=1, kappa_fn=kappa_fn)


def collect_batch(
    actor: MlpParams,
    p: ModelParams,
    cfg: TrainConfig,
    epoch: int,
    kappa_fn: Optional[KappaFn] = None,
    workers: Optional[int] = None,
) -> EpisodeBatch:
    """Lote de K episodios por bloques; el bloque c de la época e usa RngStream((seed, e + 1), c)."""
    parts = run_chunked(
        lambda n, gen: run_batch(actor, p, cfg, gen, n, kappa_fn=kappa_fn),
        cfg.batch_size, (cfg.seed, epoch + 1), workers=workers,
    )
    return EpisodeBatch.concat(parts)


# --- 3. GRADIENTES ---

def _policy_gradient(
    actor: MlpParams, batch: EpisodeBatch, weights: np.ndarray, ent_weight: float, sigma_min: float
) -> Tuple[MlpParams, float]:
    """
    sum_i weights_i grad logp_i + ent_weight sum_i grad H_i, por bloques.
    Devuelve también la entropía media del lote.
    """
    comps = 1 if batch.frozen_kappa else 2
    grads = actor.zeros_like()
    ent_sum = 0.0
    for start in range(0, batch.n_records, GRAD_CHUNK):
        sl = slice(start, start + GRAD_CHUNK)
        cache = ForwardCache()
        head = GaussianPolicyHead.from_outputs(forward(actor, batch.y[sl][:, None], cache), sigma_min)
        sample2 = None if batch.frozen_kappa else batch.raw[sl, 1]
        upstream = weights[sl, None] * gaussian_log_prob_grad(head, batch.raw[sl, 0], sample2)
        if ent_weight:
            upstream = upstream + ent_weight * gaussian_entropy_grad(head, comps)
        add_into(grads, backward(actor, cache, upstream))
        ent_sum += float(np.sum(gaussian_entropy(head, comps)))
    return grads, ent_sum / max(batch.n_records, 1)


def reinforce_gradient(
    actor: MlpParams, batch: EpisodeBatch, cfg: TrainConfig, entropy_coef: Optional[float] = None
) -> Tuple[MlpParams, float]:
    """(1/K) sum_k (G_k - media) Lambda_k + coef * grad(entropía media)."""
    coef = cfg.entropy_coef if entropy_coef is None else entropy_coef
    adv = batch.totals - batch.totals.mean()
    weights = adv[batch.path] / batch.n_paths
    return _policy_gradient(actor, batch, weights, coef / max(batch.n_records, 1), cfg.sigma_min)


def _optimizer_config(cfg: TrainConfig, lr: float) -> OptimizerConfig:
    return OptimizerConfig(lr=lr, kind=cfg.optimizer, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)


def reinforce_update(
    actor: MlpParams,
    batch: EpisodeBatch,
    cfg: TrainConfig,
    state: Optional[OptimizerState] = None,
    entropy_coef: Optional[float] = None,
) -> MlpParams:
    if batch.n_paths == 0:
        raise ValueError("Lote vacío")
    grads, _ = reinforce_gradient(actor, batch, cfg, entropy_coef)
    return optimizer_step(actor, grads, _optimizer_config(cfg, cfg.lr_actor), state or OptimizerState())


def critic_inputs(batch: EpisodeBatch) -> np.ndarray:
    return np.stack([batch.x, batch.y], axis=1)


def critic_values(critic: MlpParams, batch: EpisodeBatch, rho: float) -> np.ndarray:
    """q_i = e^{-rho t_i} v(x_i, lambda_i)."""
    inputs = critic_inputs(batch)
    v = np.concatenate([
        forward(critic, inputs[s: s + GRAD_CHUNK])[:, 0] for s in range(0, batch.n_records, GRAD_CHUNK)
    ]) if batch.n_records else np.zeros(0)
    return np.exp(-rho * batch.times) * v


def next_in_path(batch: EpisodeBatch, values: np.ndarray) -> np.ndarray:
    """Valor del paso siguiente del mismo camino; 0 tras la salida."""
    nxt = np.zeros_like(values)
    same = batch.path[1:] == batch.path[:-1]
    nxt[:-1][same] = values[1:][same]
    return nxt


def td_residuals(batch: EpisodeBatch, q: np.ndarray) -> np.ndarray:
    """delta_i = r_i + q_{i+1} - q_i."""
    return batch.reward + next_in_path(batch, q) - q


def returns_to_go(batch: EpisodeBatch) -> np.ndarray:
    """sum_{l >= i} r_l dentro de cada camino, solo a partir de las recompensas."""
    if batch.n_records == 0:
        return np.zeros(0)
    rev = np.cumsum(batch.reward[::-1])[::-1]
    starts = np.r_[0, np.flatnonzero(batch.path[1:] != batch.path[:-1]) + 1]
    lengths = np.diff(np.r_[starts, batch.n_records])
    # lo que queda a partir del camino siguiente
    tail = np.r_[rev, 0.0][np.r_[starts[1:], batch.n_records]]
    return rev - np.repeat(tail, lengths)


def actor_critic_gradients(
    actor: MlpParams,
    critic: MlpParams,
    batch: EpisodeBatch,
    cfg: TrainConfig,
    rho: float,
    entropy_coef: Optional[float] = None,
) -> Tuple[MlpParams, MlpParams, float]:
    """
    Actor: (1/K) sum_i delta_i grad logp_i + entropía.
    Crítico: (1/K) sum_i (objetivo_i - q_i) grad q_i, objetivo TD o retorno completo.
    """
    coef = cfg.entropy_coef if entropy_coef is None else entropy_coef
    q = critic_values(critic, batch, rho)
    batch.critic_values = q
    delta = td_residuals(batch, q)
    g_actor, mean_ent = _policy_gradient(
        actor, batch, delta / batch.n_paths, coef / max(batch.n_records, 1), cfg.sigma_min
    )

    target = batch.reward + next_in_path(batch, q) if cfg.critic_target == "td" else returns_to_go(batch)
    upstream = ((target - q) * np.exp(-rho * batch.times) / batch.n_paths)[:, None]
    inputs = critic_inputs(batch)
    g_critic = critic.zeros_like()
    for start in range(0, batch.n_records, GRAD_CHUNK):
        sl = slice(start, start + GRAD_CHUNK)
        cache = ForwardCache()
        forward(critic, inputs[sl], cache)
        add_into(g_critic, backward(critic, cache, upstream[sl]))
    return g_actor, g_critic, mean_ent


def actor_critic_update(
    actor: MlpParams,
    critic: MlpParams,
    batch: EpisodeBatch,
    cfg: TrainConfig,
    rho: float,
    states: Optional[Tuple[OptimizerState, OptimizerState]] = None,
    entropy_coef: Optional[float] = None,
) -> Tuple[MlpParams, MlpParams]:
    g_actor, g_critic, _ = actor_critic_gradients(actor, critic, batch, cfg, rho, entropy_coef)
    s_actor, s_critic = states or (OptimizerState(), OptimizerState())
    new_actor = optimizer_step(actor, g_actor, _optimizer_config(cfg, cfg.lr_actor), s_actor)
    new_critic = optimizer_step(critic, g_critic, _optimizer_config(cfg, cfg.lr_critic), s_critic)
    return new_actor, new_critic


# --- 4. ENTRENAMIENTO ---

@dataclass
class TrainResult:
    actor: MlpParams
    critic: Optional[MlpParams]
    metrics: List[Dict[str, float]] = field(default_factory=list)


def init_networks(cfg: TrainConfig, algo: Algo) -> Tuple[MlpParams, Optional[MlpParams]]:
    actor = init_mlp((1, *cfg.hidden, 4), RngStream(cfg.seed, 0).generator())
    critic = init_mlp((2, *cfg.hidden, 1), RngStream(cfg.seed, 1).generator()) if algo == Algo.ACTOR_CRITIC else None
    return actor, critic


def train(
    p: ModelParams,
    cfg: TrainConfig,
    algo: Algo = Algo.ACTOR_CRITIC,
    kappa_fn: Optional[KappaFn] = None,
    pde_value: Optional[float] = None,
    checkpoint_dir: Optional[Path] = None,
    workers: Optional[int] = None,
) -> TrainResult:
    """
    E épocas de K episodios + una actualización. Con una divergencia se guarda
    el último actor (y crítico) válido en checkpoint_dir y se relanza el error.
    """
    algo = Algo(algo)
    actor, critic = init_networks(cfg, algo)
    result = TrainResult(actor, critic)
    if cfg.epochs == 0:
        return result

    check_horizon(p, State(x=cfg.x0, y=cfg.y0), cfg.h, cfg.horizon_T, n_paths=min(cfg.batch_size, 1024), seed=cfg.seed)
    s_actor, s_critic = OptimizerState(), OptimizerState()
    start = time.perf_counter()

    for epoch in range(cfg.epochs):
        coef = cfg.entropy_coef * (1 - epoch / cfg.epochs) if cfg.entropy_anneal else cfg.entropy_coef
        try:
            batch = collect_batch(actor, p, cfg, epoch, kappa_fn, workers)
            if not np.all(np.isfinite(batch.totals)):
                raise DivergenceError("Recompensa no finita en el lote")
            if algo == Algo.REINFORCE:
                grads, mean_ent = reinforce_gradient(actor, batch, cfg, coef)
                new_actor = optimizer_step(actor, grads, _optimizer_config(cfg, cfg.lr_actor), s_actor)
                new_critic = None
            else:
                g_actor, g_critic, mean_ent = actor_critic_gradients(actor, critic, batch, cfg, p.rho, coef)
                new_actor = optimizer_step(actor, g_actor, _optimizer_config(cfg, cfg.lr_actor), s_actor)
                new_critic = optimizer_step(critic, g_critic, _optimizer_config(cfg, cfg.lr_critic), s_critic)
            if not new_actor.is_finite() or (new_critic is not None and not new_critic.is_finite()):
                raise DivergenceError("Parámetros no finitos tras la actualización")
        except DivergenceError:
            logger.error("Entrenamiento divergente en la época %d", epoch + 1)
            if checkpoint_dir is not None:
                save_checkpoint(actor, Path(checkpoint_dir) / "actor_last_good.json")
                if critic is not None:
                    save_checkpoint(critic, Path(checkpoint_dir) / "critic_last_good.json")
            raise

        actor, critic = new_actor, new_critic
        row = {
            "epoch": epoch + 1,
            "mean_G": float(batch.totals.mean()),
            "std_G": float(batch.totals.std(ddof=1)) if batch.n_paths > 1 else 0.0,
            "mean_entropy": mean_ent,
            "entropy_coef": coef,
            "wall_time": time.perf_counter() - start,
        }
        if pde_value is not None:
            row["pde_value"] = pde_value
        result.metrics.append(row)
        logger.info(
            "Época %d/%d: G medio %.4f (sd %.4f), entropía %.3f",
            epoch + 1, cfg.epochs, row["mean_G"], row["std_G"], mean_ent,
        )

    result.actor, result.critic = actor, critic
    return result
