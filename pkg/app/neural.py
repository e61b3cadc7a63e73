"""
Perceptrón multicapa en numpy con retropropagación manual, optimizadores
Adam / SGD (en sentido de ascenso) y la cabeza gaussiana de la política.

Convención: las entradas son lotes (B, n_in); los pesos de cada capa tienen
forma (n_in, n_out). Capas ocultas ReLU, capa de salida lineal.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.special import expit

from .exceptions import DivergenceError, ModelError

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2 * np.pi))


def softplus(x):
    return np.logaddexp(0.0, x)


# --- 1. RED ---

@dataclass
class MlpParams:
    layer_sizes: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ModelError("Número de capas inconsistente con layer_sizes")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_sizes[k], self.layer_sizes[k + 1]) or b.shape != (self.layer_sizes[k + 1],):
                raise ModelError(f"Forma incorrecta en la capa {k}: W{W.shape}, b{b.shape}")

    def copy(self) -> "MlpParams":
        return MlpParams(self.layer_sizes, [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> List[np.ndarray]:
        """Pesos y sesgos intercalados (W0, b0, W1, b1, ...)."""
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def zeros_like(self) -> "MlpParams":
        return MlpParams(self.layer_sizes, [np.zeros_like(W) for W in self.weights], [np.zeros_like(b) for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, layer_sizes: Sequence[int], flat: np.ndarray) -> "MlpParams":
        weights, biases, pos = [], [], 0
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            weights.append(np.asarray(flat[pos: pos + n_in * n_out], dtype=float).reshape(n_in, n_out))
            pos += n_in * n_out
            biases.append(np.asarray(flat[pos: pos + n_out], dtype=float))
            pos += n_out
        if pos != len(flat):
            raise ModelError(f"Vector plano de longitud {len(flat)}, se esperaban {pos}")
        return cls(tuple(layer_sizes), weights, biases)


def init_mlp(layer_sizes: Sequence[int], rng: np.random.Generator) -> MlpParams:
    """Pesos uniformes en [-1/sqrt(fan_in), 1/sqrt(fan_in)], sesgos a cero."""
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return MlpParams(tuple(layer_sizes), weights, biases)


@dataclass
class ForwardCache:
    inputs: List[np.ndarray] = field(default_factory=list)   # entrada de cada capa
    pre: List[np.ndarray] = field(default_factory=list)      # preactivaciones ocultas


def _as_batch(params: MlpParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :] if params.layer_sizes[0] > 1 or x.shape[0] == 1 else x[:, None]
    if x.ndim != 2 or x.shape[1] != params.layer_sizes[0]:
        raise ModelError(f"Entrada de forma {x.shape}, se esperaban {params.layer_sizes[0]} columnas")
    return x


def forward(params: MlpParams, x, cache: Optional[ForwardCache] = None) -> np.ndarray:
    """Cadena afín-ReLU; la última capa es afín. Devuelve (B, n_out)."""
    h = _as_batch(params, x)
    last = len(params.weights) - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        if cache is not None:
            cache.inputs.append(h)
        z = h @ W + b
        if k < last:
            if cache is not None:
                cache.pre.append(z)
            h = np.maximum(z, 0.0)
        else:
            h = z
    return h


def backward(params: MlpParams, cache: ForwardCache, upstream: np.ndarray) -> MlpParams:
    """Gradiente exacto de sum(salida * upstream) respecto de todos los parámetros."""
    grads = params.zeros_like()
    delta = np.asarray(upstream, dtype=float)
    for k in range(len(params.weights) - 1, -1, -1):
        grads.weights[k] = cache.inputs[k].T @ delta
        grads.biases[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params.weights[k].T) * (cache.pre[k - 1] > 0)
    return grads


def add_into(acc: MlpParams, other: MlpParams, scale: float = 1.0) -> None:
    for a, b in zip(acc.arrays(), other.arrays()):
        a += scale * b


# --- 2. CABEZA GAUSSIANA ---

@dataclass
class GaussianPolicyHead:
    """Salidas de la red (mu1, s1, mu2, s2) con sigma = softplus(s) + sigma_min."""
    mu1: np.ndarray
    sigma1: np.ndarray
    mu2: np.ndarray
    sigma2: np.ndarray
    raw_sigma1: np.ndarray
    raw_sigma2: np.ndarray

    @classmethod
    def from_outputs(cls, out: np.ndarray, sigma_min: float) -> "GaussianPolicyHead":
        out = np.atleast_2d(out)
        if out.shape[1] != 4:
            raise ModelError("La cabeza gaussiana necesita 4 salidas")
        return cls(
            mu1=out[:, 0], sigma1=softplus(out[:, 1]) + sigma_min,
            mu2=out[:, 2], sigma2=softplus(out[:, 3]) + sigma_min,
            raw_sigma1=out[:, 1], raw_sigma2=out[:, 3],
        )

    def output_gradient(self, d_mu1, d_sigma1, d_mu2, d_sigma2) -> np.ndarray:
        """Regla de la cadena de (mu, sigma) a las 4 salidas crudas."""
        return np.stack([
            d_mu1 * np.ones_like(self.mu1),
            d_sigma1 * expit(self.raw_sigma1),
            d_mu2 * np.ones_like(self.mu2),
            d_sigma2 * expit(self.raw_sigma2),
        ], axis=1)


def _normal_log_density(a, mu, sigma):
    return -0.5 * LOG_2PI - np.log(sigma) - (a - mu) ** 2 / (2 * sigma ** 2)


def gaussian_log_prob(head: GaussianPolicyHead, sample1, sample2=None):
    """Suma de log-densidades normales; sin sample2 solo cuenta la primera componente."""
    out = _normal_log_density(sample1, head.mu1, head.sigma1)
    if sample2 is not None:
        out = out + _normal_log_density(sample2, head.mu2, head.sigma2)
    return out


def gaussian_log_prob_grad(head: GaussianPolicyHead, sample1, sample2=None) -> np.ndarray:
    """d logp / d(salidas crudas), forma (B, 4)."""
    z1 = sample1 - head.mu1
    d_mu1 = z1 / head.sigma1 ** 2
    d_s1 = -1.0 / head.sigma1 + z1 ** 2 / head.sigma1 ** 3
    if sample2 is None:
        d_mu2 = d_s2 = np.zeros_like(head.mu2)
    else:
        z2 = sample2 - head.mu2
        d_mu2 = z2 / head.sigma2 ** 2
        d_s2 = -1.0 / head.sigma2 + z2 ** 2 / head.sigma2 ** 3
    return head.output_gradient(d_mu1, d_s1, d_mu2, d_s2)


def gaussian_entropy(head: GaussianPolicyHead, components: int = 2):
    """sum_k 1/2 ln(2 pi e sigma_k^2)."""
    out = 0.5 * (LOG_2PI + 1.0) + np.log(head.sigma1)
    if components == 2:
        out = out + 0.5 * (LOG_2PI + 1.0) + np.log(head.sigma2)
    return out


def gaussian_entropy_grad(head: GaussianPolicyHead, components: int = 2) -> np.ndarray:
    zeros = np.zeros_like(head.mu1)
    d_s2 = 1.0 / head.sigma2 if components == 2 else zeros
    return head.output_gradient(zeros, 1.0 / head.sigma1, zeros, d_s2)


# --- 3. OPTIMIZADORES ---

@dataclass
class OptimizerConfig:
    lr: float = 1e-3
    kind: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class OptimizerState:
    t: int = 0
    m: Optional[List[np.ndarray]] = None
    v: Optional[List[np.ndarray]] = None


def optimizer_step(
    params: MlpParams, grads: MlpParams, cfg: OptimizerConfig, state: Optional[OptimizerState] = None
) -> MlpParams:
    """Un paso de ascenso. Adam guarda sus momentos en `state`."""
    if not grads.is_finite():
        raise DivergenceError("Gradiente no finito")
    new = params.copy()
    if cfg.kind == "sgd":
        add_into(new, grads, cfg.lr)
        return new
    if cfg.kind != "adam":
        raise ModelError(f"Optimizador '{cfg.kind}' no soportado")
    if state is None:
        raise ModelError("Adam necesita un OptimizerState")

    if state.m is None:
        state.m = [np.zeros_like(a) for a in params.arrays()]
        state.v = [np.zeros_like(a) for a in params.arrays()]
    state.t += 1
    corr1 = 1 - cfg.beta1 ** state.t
    corr2 = 1 - cfg.beta2 ** state.t
    for p_arr, g, m, v in zip(new.arrays(), grads.arrays(), state.m, state.v):
        m *= cfg.beta1
        m += (1 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1 - cfg.beta2) * g * g
        p_arr += cfg.lr * (m / corr1) / (np.sqrt(v / corr2) + cfg.eps)
    return new


# --- 4. CHECKPOINTS ---

class MlpCheckpoint(BaseModel):
    layer_sizes: List[int]
    hidden_activation: str = "relu"
    output_activation: str = "linear"
    weights: List[List[float]]
    biases: List[List[float]]


def save_checkpoint(params: MlpParams, path: Path) -> Path:
    ckpt = MlpCheckpoint(
        layer_sizes=list(params.layer_sizes),
        weights=[W.ravel().tolist() for W in params.weights],
        biases=[b.tolist() for b in params.biases],
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(ckpt.model_dump_json(), encoding="utf-8")
    logger.info("Checkpoint guardado en %s", path)
    return path


def load_checkpoint(path: Path) -> MlpParams:
    ckpt = MlpCheckpoint.model_validate_json(Path(path).read_text(encoding="utf-8"))
    sizes = ckpt.layer_sizes
    weights = [np.array(w, dtype=float).reshape(n_in, n_out) for w, n_in, n_out in zip(ckpt.weights, sizes[:-1], sizes[1:])]
    biases = [np.array(b, dtype=float) for b in ckpt.biases]
    return MlpParams(tuple(sizes), weights, biases)
