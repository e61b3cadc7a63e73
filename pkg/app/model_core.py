"""
Cantidades cerradas del modelo de Cramér-Lundberg con llegadas de Hawkes:
intensidad antes del primer siniestro, probabilidad de supervivencia,
valor en la región de inyección y cotas del valor.

Todas las funciones aceptan escalares o arrays de numpy.
"""
import logging
from abc import ABC, abstractmethod
from typing import Optional, Tuple, Union

import numpy as np
from scipy import stats

from .exceptions import ModelError, SupercriticalModelError
from .schemas import ClaimDistSpec, ModelParams

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


# --- 1. DISTRIBUCIONES DE SINIESTROS (MODULARES) ---

class ClaimDist(ABC):
    """
    Contrato de una distribución de tamaños de siniestro (soporte en (0, inf)).
    """

    @abstractmethod
    def density(self, z: ArrayLike) -> ArrayLike:
        pass

    @abstractmethod
    def cdf(self, z: ArrayLike) -> ArrayLike:
        pass

    @abstractmethod
    def sample(self, rng: np.random.Generator, size=None) -> ArrayLike:
        pass

    @property
    @abstractmethod
    def mean(self) -> float:
        pass

    def boundary_integral(self, v0: ArrayLike, delta: float, shift: ArrayLike = 0.0) -> Optional[ArrayLike]:
        """
        Forma cerrada de  int_s^{s + v0/delta} (v0 - delta (z - s)) f(z) dz, si existe.
        Con s = 0 es la integral de la frontera x = 0. None indica que hay que
        usar la cuadratura.
        """
        return None

    def cell_weights(self, dx: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Pesos de la integral de f contra la interpolante lineal a trozos, celda
        a celda sobre [m dx, (m+1) dx], m = 0..n-1:
          w0_m = int f(z) (1 - (z - m dx)/dx) dz  (nodo a distancia m dx)
          w1_m = int f(z) (z - m dx)/dx dz        (nodo a distancia (m+1) dx)
        Gauss-Legendre por celda; las subclases pueden dar la forma cerrada.
        """
        nodes, weights = np.polynomial.legendre.leggauss(_CELL_GAUSS_POINTS)
        u = 0.5 * (nodes + 1.0)                          # en [0, 1]
        z = (np.arange(n)[:, None] + u[None, :]) * dx
        fz = self.density(z) * (0.5 * weights[None, :]) * dx
        w1 = fz @ u
        w0 = fz.sum(axis=1) - w1
        return w0, w1


_CELL_GAUSS_POINTS = 16


class ExponentialClaims(ClaimDist):
    def __init__(self, beta: float):
        if beta <= 0:
            raise ModelError(f"beta debe ser positivo (beta={beta})")
        self.beta = beta
        self._dist = stats.expon(scale=1.0 / beta)
        self.name = f"Exponential({beta})"

    def density(self, z):
        return self._dist.pdf(z)

    def cdf(self, z):
        return self._dist.cdf(z)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.beta, size=size)

    @property
    def mean(self) -> float:
        return 1.0 / self.beta

    def boundary_integral(self, v0, delta, shift=0.0):
        # sin memoria: desplazar el origen a s solo escala por P(Z > s)
        v0 = np.asarray(v0, dtype=float)
        out = v0 - (delta / self.beta) * (-np.expm1(-self.beta * v0 / delta))
        out = out * np.exp(-self.beta * np.asarray(shift, dtype=float))
        return out if out.ndim else float(out)

    def cell_weights(self, dx, n):
        q = self.beta * dx
        decay = np.exp(-q * np.arange(n))
        w1 = decay * (-np.expm1(-q) - q * np.exp(-q)) / q
        w0 = decay * (-np.expm1(-q)) - w1
        return w0, w1


# Registro de distribuciones disponibles
CLAIM_REGISTRY = {
    "exponential": lambda spec: ExponentialClaims(spec.beta),
}


def make_claim_dist(spec: ClaimDistSpec) -> ClaimDist:
    factory = CLAIM_REGISTRY.get(spec.kind)
    if factory is None:
        raise ModelError(f"Distribución de siniestros '{spec.kind}' no encontrada.")
    return factory(spec)


def boundary_integral_quadrature(
    dist: ClaimDist, v0: float, delta: float, n: int = 10_000, shift: float = 0.0
) -> float:
    """Regla del punto medio para int_s^{s + v0/delta} (v0 - delta (z - s)) f(z) dz."""
    if v0 <= 0:
        return 0.0
    upper = v0 / delta
    dz = upper / n
    u = (np.arange(n) + 0.5) * dz
    return float(np.sum((v0 - delta * u) * dist.density(shift + u)) * dz)


def boundary_integral(dist: ClaimDist, v0: ArrayLike, delta: float, shift: ArrayLike = 0.0) -> ArrayLike:
    """
    I(v0; s): valor esperado de la parte del salto que cae en la región de
    inyección desde x = s >= 0. Forma cerrada si la distribución la ofrece;
    si no, cuadratura.
    """
    v0 = np.maximum(np.asarray(v0, dtype=float), 0.0)
    closed = dist.boundary_integral(v0, delta, shift)
    if closed is not None:
        return closed
    v0, s = np.broadcast_arrays(v0, np.asarray(shift, dtype=float))
    if v0.ndim == 0:
        return boundary_integral_quadrature(dist, float(v0), delta, shift=float(s))
    out = [boundary_integral_quadrature(dist, float(a), delta, shift=float(b)) for a, b in zip(v0.ravel(), s.ravel())]
    return np.array(out).reshape(v0.shape)


def boundary_integral_slope(dist: ClaimDist, v0: ArrayLike, delta: float, shift: ArrayLike = 0.0) -> ArrayLike:
    """d I(v0; s) / d v0 = F(s + v0/delta) - F(s)."""
    v0 = np.maximum(np.asarray(v0, dtype=float), 0.0)
    s = np.asarray(shift, dtype=float)
    return dist.cdf(s + v0 / delta) - dist.cdf(s)


# --- 2. FORMAS CERRADAS DEL MODELO ---

def _check_intensity(p: ModelParams, y: ArrayLike) -> None:
    if np.any(np.asarray(y) < p.b):
        raise ModelError(f"La intensidad debe ser >= b={p.b}")


def pre_claim_intensity(p: ModelParams, y: ArrayLike, t: ArrayLike) -> ArrayLike:
    """lambda~_t = b - (b - y) e^{-a t}: intensidad en ausencia de siniestros."""
    _check_intensity(p, y)
    if np.any(np.asarray(t) < 0):
        raise ModelError("El tiempo debe ser no negativo")
    # escrito como b + (y - b) e^{-at} para que nunca baje de b por redondeo
    out = p.b + (np.asarray(y, dtype=float) - p.b) * np.exp(-p.a * np.asarray(t, dtype=float))
    return out if out.ndim else float(out)


def integrated_intensity(p: ModelParams, y: ArrayLike, h: ArrayLike) -> ArrayLike:
    """int_0^h lambda~_s ds."""
    return p.b * h + (np.asarray(y) - p.b) / p.a * (-np.expm1(-p.a * np.asarray(h)))


def survival_probability(p: ModelParams, y: ArrayLike, h: ArrayLike) -> ArrayLike:
    """P(tau_1 >= h) = exp(-b h - (y - b)/a (1 - e^{-a h}))."""
    _check_intensity(p, y)
    if np.any(np.asarray(h) < 0):
        raise ModelError("El horizonte h debe ser no negativo")
    out = np.exp(-integrated_intensity(p, y, h))
    return out if np.ndim(out) else float(out)


def stationary_mean_intensity(p: ModelParams) -> float:
    """Media estacionaria a b / (a - eta); exige a > eta."""
    if not p.is_subcritical:
        raise SupercriticalModelError(f"Modelo supercrítico: a={p.a} <= eta={p.eta}")
    return p.a * p.b / (p.a - p.eta)


def injection_region_value(v0: ArrayLike, x: ArrayLike, delta: float) -> ArrayLike:
    """v(x, y) = max(0, v(0, y) + delta x) para x <= 0."""
    out = np.maximum(0.0, np.asarray(v0, dtype=float) + delta * np.asarray(x, dtype=float))
    return out if out.ndim else float(out)


def injection_threshold(v0: ArrayLike, delta: float) -> ArrayLike:
    """kappa*(y) = -v(0, y)/delta."""
    out = -np.asarray(v0, dtype=float) / delta
    return out if out.ndim else float(out)


def value_bounds(x: ArrayLike, p: ModelParams) -> Tuple[ArrayLike, ArrayLike]:
    """x+ <= v(x, y) <= x+ + c/rho."""
    lower = np.maximum(np.asarray(x, dtype=float), 0.0)
    upper = lower + p.c / p.rho
    if lower.ndim == 0:
        return float(lower), float(upper)
    return lower, upper


def asymptotic_value(x: ArrayLike) -> ArrayLike:
    """Límite de v(x, y) cuando y -> inf: x+."""
    out = np.maximum(np.asarray(x, dtype=float), 0.0)
    return out if out.ndim else float(out)
