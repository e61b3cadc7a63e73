"""
Jerarquía de errores del proyecto.

La CLI y la API traducen estas excepciones a códigos de salida / HTTP:
ConfigError -> 1 / 400, NumericalError -> 2 / 500.
"""


class HawkesDividendError(Exception):
    """Base de todos los errores propios del proyecto."""


class ConfigError(HawkesDividendError, ValueError):
    """Configuración inválida, incompleta o con claves desconocidas."""


class ModelError(HawkesDividendError, ValueError):
    """Violación de una precondición del modelo (y < b, t < 0, h <= 0, ...)."""


class SupercriticalModelError(ModelError):
    """El proceso de Hawkes es supercrítico (a <= eta): no hay media estacionaria."""


class PolicyContractError(HawkesDividendError):
    """Una política de barreras devolvió x* < 0 o kappa* > 0."""


class NumericalError(HawkesDividendError):
    """Fallo numérico (no convergencia, divergencia)."""


class ConvergenceError(NumericalError):
    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message} (iteraciones={iterations}, residuo={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class DivergenceError(NumericalError):
    """Gradientes, pérdidas o parámetros no finitos."""
