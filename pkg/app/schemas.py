import math
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Frozen(BaseModel):
    # Inmutables y sin claves desconocidas: un typo en el JSON es un error
    model_config = ConfigDict(frozen=True, extra="forbid")


# --- Modelo económico ---

class ClaimDistSpec(_Frozen):
    """Distribución del tamaño de los siniestros. Solo 'exponential' por ahora."""
    kind: Literal["exponential"] = "exponential"
    beta: float = Field(3.0, gt=0, description="Tasa de la exponencial (media 1/beta)")


class ModelParams(_Frozen):
    """
    Constantes del modelo. Unidades: a, b, eta, rho en 1/tiempo;
    c en caja/tiempo; delta adimensional.
    """
    a: float = Field(2.0, gt=0, description="Velocidad de reversión de la intensidad")
    b: float = Field(2.0, gt=0, description="Intensidad base")
    eta: float = Field(0.4, ge=0, description="Salto de la intensidad en cada siniestro")
    rho: float = Field(0.1, gt=0, description="Tasa de descuento")
    c: float = Field(1.0, gt=0, description="Tasa de primas")
    delta: float = Field(1.8, gt=1, description="Penalización de las inyecciones de capital")
    claim: ClaimDistSpec = Field(default_factory=ClaimDistSpec)

    @property
    def beta(self) -> float:
        return self.claim.beta

    @property
    def is_subcritical(self) -> bool:
        return self.a > self.eta

    def with_param(self, name: str, value: float) -> "ModelParams":
        """Copia con un parámetro cambiado ('beta' se refiere a la distribución)."""
        data = self.model_dump()
        if name == "beta":
            data["claim"]["beta"] = value
        elif name in ("a", "b", "eta", "rho", "c", "delta"):
            data[name] = value
        else:
            raise ValueError(f"Parámetro desconocido: '{name}'")
        return ModelParams.model_validate(data)


class State(_Frozen):
    x: float = Field(..., description="Excedente (caja)")
    y: float = Field(..., description="Intensidad de siniestros")


# --- Malla de diferencias finitas ---

class GridSpec(_Frozen):
    x_min: float = Field(-5.0, lt=0)
    x_max: float = Field(4.0, gt=0)
    y_max: float = 25.0
    n_eta: int = Field(8, ge=1, description="Pasos de malla por salto eta")
    M: int = Field(80, ge=1, description="Intervalos de cuadratura")
    z_max: float = Field(5.0, gt=0, description="Truncamiento del soporte de los siniestros")
    quadrature: Literal["cell", "midpoint"] = Field(
        "cell", description="Regla del término de saltos: celdas exactas o punto medio truncado en z_max"
    )


# --- Aprendizaje por refuerzo ---

class TrainConfig(_Frozen):
    h: float = Field(1 / 50, gt=0)
    horizon_T: float = Field(50.0, gt=0)
    batch_size: int = Field(2048, ge=1)
    epochs: int = Field(200, ge=0)
    lr_actor: float = Field(1e-3, gt=0)
    lr_critic: float = Field(1e-3, gt=0)
    entropy_coef: float = Field(1e-3, ge=0)
    entropy_anneal: bool = True
    sigma_min: float = Field(1e-3, gt=0)
    hidden: Tuple[int, ...] = (64, 64)
    optimizer: Literal["adam", "sgd"] = "adam"
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    # Congela kappa* = -v(0, y)/delta a partir de una solución PDE
    freeze_kappa: bool = False
    critic_target: Literal["td", "return"] = "td"
    seed: int = 0
    x0: float = 1.0
    y0: float = 2.8

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_T / self.h))

    @model_validator(mode="after")
    def _horizon_multiple_of_h(self):
        ratio = self.horizon_T / self.h
        if not math.isclose(ratio, round(ratio), rel_tol=0, abs_tol=1e-9 * max(1.0, ratio)):
            raise ValueError("horizon_T debe ser múltiplo entero de h")
        return self


# --- Evaluación Monte Carlo ---

TABLE_STATES: List[Tuple[float, float]] = [
    (x, y) for x in (0.0, 0.5, 1.0) for y in (2.0, 3.0, 4.0)
]


class EvalSpec(_Frozen):
    n_paths: int = Field(4096, ge=2)
    states: List[Tuple[float, float]] = Field(default_factory=lambda: list(TABLE_STATES))
    h: float = Field(1 / 50, gt=0)
    horizon_T: float = Field(50.0, gt=0)
    seed: int = 1234
    deterministic: bool = True
    ruin_free_eps: float = Field(0.01, gt=0, lt=1)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_T / self.h))


class RunConfig(_Frozen):
    model: ModelParams = Field(default_factory=ModelParams)
    grid: GridSpec = Field(default_factory=GridSpec)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalSpec = Field(default_factory=EvalSpec)
    output_dir: str = "outputs"

    @field_validator("output_dir")
    @classmethod
    def _non_empty(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("output_dir no puede estar vacío")
        return v


# --- Resultados ---

class EvalRow(BaseModel):
    x0: float
    y0: float
    pde_value: Optional[float] = None
    mc_mean: float
    mc_ci95: Tuple[float, float]
    rel_err_pct: Optional[float] = None
    n_paths: int
    policy_source: Literal["pde_barriers", "learned_actor"]


class EvalReport(BaseModel):
    rows: List[EvalRow]


# --- API ---

class SolveRequest(BaseModel):
    model: ModelParams = Field(default_factory=ModelParams)
    grid: GridSpec = Field(default_factory=GridSpec)
    states: List[Tuple[float, float]] = Field(default_factory=lambda: list(TABLE_STATES))


class BarrierRow(BaseModel):
    y: float
    kappa_star: float
    x_star: float


class SolveResult(BaseModel):
    values: List[Tuple[float, float, float]]
    outer_iterations: int
    barriers: List[BarrierRow]


class EvaluateRequest(BaseModel):
    model: ModelParams = Field(default_factory=ModelParams)
    grid: GridSpec = Field(default_factory=GridSpec)
    eval: EvalSpec = Field(default_factory=EvalSpec)
