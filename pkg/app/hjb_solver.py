"""
Esquema upwind monótono para la desigualdad variacional HJB del problema de
dividendos con inyecciones de capital, e iteración de políticas de Howard.

Convenciones de la malla:
  - V tiene forma (n_x, n_y), índice (i, j) <-> (x_i, y_j).
  - x_{i0} = 0 exactamente; dx = z_max / (M + 1/2); dy = eta / n_eta.
  - La fila superior j = n_y - 1 es la asintótica V = x+ (fija).
  - Para x < 0 el valor es max(0, V_{i0,j} + delta x) (impuesto, no resuelto).
  - Término de saltos (JumpRule): por defecto integra exactamente la densidad
    contra la interpolante lineal de V en cada celda; la regla de punto medio
    truncada en z_max queda como opción y pierde masa del orden de (beta dx)^2.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded

from .config import settings
from .exceptions import ConfigError, ConvergenceError, ModelError
from .model_core import (
    ClaimDist,
    boundary_integral,
    boundary_integral_slope,
    injection_region_value,
    make_claim_dist,
)
from .schemas import GridSpec, ModelParams

logger = logging.getLogger(__name__)

SWEEP_PARAMS = ("a", "eta", "c", "beta", "rho", "delta")


class Regime(IntEnum):
    RUIN = 0
    INJECTION = 1
    CONTINUATION = 2
    DIVIDEND = 3


# --- 1. MALLA ---

@dataclass(frozen=True)
class Grid:
    dx: float
    dy: float
    xs: np.ndarray
    ys: np.ndarray
    i0: int
    n_eta: int
    M: int
    quadrature: str = "cell"

    @property
    def n_x(self) -> int:
        return len(self.xs)

    @property
    def n_y(self) -> int:
        return len(self.ys)

    @property
    def top(self) -> int:
        return self.n_y - 1

    @property
    def n_pos(self) -> int:
        """Columnas con x >= 0."""
        return self.n_x - self.i0

    def jump_row(self, j):
        """Fila destino de un salto de intensidad, truncada a la fila superior."""
        return np.minimum(np.asarray(j) + self.n_eta, self.top)


def build_grid(spec: GridSpec, p: ModelParams) -> Grid:
    if p.eta <= 0:
        raise ConfigError("La malla en y necesita eta > 0 (dy = eta / n_eta)")
    dx = spec.z_max / (spec.M + 0.5)
    dy = p.eta / spec.n_eta
    if spec.y_max <= p.b + dy:
        raise ConfigError(f"y_max={spec.y_max} debe superar b + dy = {p.b + dy:.4f}")

    # Bordes ajustados hacia afuera a múltiplos de dx (x = 0 en la malla)
    n_left = int(np.ceil(-spec.x_min / dx - 1e-9))
    n_right = int(np.ceil(spec.x_max / dx - 1e-9))
    n_up = int(np.ceil((spec.y_max - p.b) / dy - 1e-9))

    xs = np.arange(-n_left, n_right + 1) * dx
    ys = p.b + np.arange(n_up + 1) * dy

    if not np.isclose(xs[0], spec.x_min) or not np.isclose(xs[-1], spec.x_max):
        logger.info("Bordes en x ajustados a [%.4f, %.4f]", xs[0], xs[-1])
    if not np.isclose(ys[-1], spec.y_max):
        logger.info("y_max ajustado a %.4f", ys[-1])

    return Grid(dx=dx, dy=dy, xs=xs, ys=ys, i0=n_left, n_eta=spec.n_eta, M=spec.M,
                quadrature=spec.quadrature)


@dataclass
class ValueGrid:
    grid: Grid
    v: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        X, Y = np.meshgrid(self.grid.xs, self.grid.ys, indexing="ij")
        return pd.DataFrame({"x": X.ravel(), "y": Y.ravel(), "V": self.v.ravel()})


@dataclass
class PolicyGrid:
    grid: Grid
    regime: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        X, Y = np.meshgrid(self.grid.xs, self.grid.ys, indexing="ij")
        return pd.DataFrame({"x": X.ravel(), "y": Y.ravel(), "regime": self.regime.ravel().astype(int)})


def quadrature_weights(g: Grid, dist: ClaimDist) -> np.ndarray:
    """Punto medio: w_m = f((m + 1/2) dx) dx, m = 0..M (el último punto medio es z_max)."""
    return dist.density((np.arange(g.M + 1) + 0.5) * g.dx) * g.dx


class JumpRule:
    """
    Pesos del término de saltos Q_h sobre las columnas x >= 0 (k = i - i0).

    Q_h[V]_{k,j} = sum_m (w0_m V_{k-m} + w1_m V_{k-m-1}) + N_k(V_{0, j+n_eta}),
    con la parte x - z >= 0 sobre la interpolante lineal en x y N_k la parte
    que cae en la región de inyección. Reglas:
      - "cell": integral exacta de f contra la interpolante en cada celda
        [m dx, (m+1) dx], m < k, y N_k = I(V_0; x_k) cerrada. Sin truncamiento.
      - "midpoint": puntos medios (m + 1/2) dx hasta z_max; el valor en el
        punto medio es el promedio de los dos nodos vecinos.
    En x = 0 ambas reglas dan exactamente I(V_0).
    """

    def __init__(self, g: Grid, p: ModelParams):
        self.g = g
        self.p = p
        self.dist = make_claim_dist(p.claim)
        if g.quadrature == "cell":
            self.w0, self.w1 = self.dist.cell_weights(g.dx, max(g.n_pos - 1, 1))
        elif g.quadrature == "midpoint":
            self.w_mid = quadrature_weights(g, self.dist)
            self.w0 = self.w1 = 0.5 * self.w_mid
        else:
            raise ConfigError(f"Regla de cuadratura '{g.quadrature}' no soportada")

    def positive_row(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """Columnas y pesos de la parte x - z >= 0 en la columna k."""
        m = np.arange(min(k, len(self.w0)))
        return np.r_[k - m, k - m - 1], np.r_[self.w0[m], self.w1[m]]

    def matrix(self) -> np.ndarray:
        K = self.g.n_pos
        T = np.zeros((K, K))
        for k in range(1, K):
            cols, w = self.positive_row(k)
            np.add.at(T[k], cols, w)
        return T

    def negative(self, v0: np.ndarray, ks: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Parte de inyección N_k(v0) y su derivada en v0 para las columnas ks y
        los valores v0 en x = 0. Forma (len(ks), len(v0)).
        """
        g, p = self.g, self.p
        v0 = np.maximum(np.asarray(v0, dtype=float), 0.0)
        ks = np.asarray(ks)
        if g.quadrature == "cell":
            xk = (ks * g.dx)[:, None]
            level = np.asarray(boundary_integral(self.dist, v0[None, :], p.delta, shift=xk), dtype=float)
            slope = np.asarray(boundary_integral_slope(self.dist, v0[None, :], p.delta, shift=xk), dtype=float)
        else:
            m = np.arange(g.M + 1)
            shift = (ks[:, None] - m[None, :] - 0.5) * g.dx
            w = np.where(m[None, :] >= ks[:, None], self.w_mid[None, :], 0.0)
            arg = v0[None, None, :] + p.delta * shift[:, :, None]
            active = arg > 0
            level = np.einsum("km,kmj->kj", w, np.where(active, arg, 0.0))
            slope = np.einsum("km,kmj->kj", w, active)
        level = np.broadcast_to(level, (len(ks), len(v0))).copy()
        slope = np.broadcast_to(slope, (len(ks), len(v0))).copy()
        # frontera x = 0: integral cerrada
        at_origin = ks == 0
        if at_origin.any():
            level[at_origin] = boundary_integral(self.dist, v0, p.delta)
            slope[at_origin] = boundary_integral_slope(self.dist, v0, p.delta)
        return level, slope


def lower_bound_grid(g: Grid) -> np.ndarray:
    return np.repeat(np.maximum(g.xs, 0.0)[:, None], g.n_y, axis=1)


# --- 2. OPERADORES LOCALES (NODO A NODO) ---

def _check_positive_node(g: Grid, i: int, j: int) -> None:
    if not (g.i0 <= i < g.n_x - 1) or not (0 <= j < g.top):
        raise ModelError(f"Nodo ({i}, {j}) fuera del interior con x >= 0")


def jump_quadrature(g: Grid, p: ModelParams, v: np.ndarray, i: int, j: int) -> float:
    """
    Q_h[V]_{i,j}: valor esperado de V(x_i - Z, y_j + eta) con la regla de la
    malla (ver JumpRule). Argumento negativo: región de inyección.
    """
    if g.xs[i] < 0:
        raise ModelError("La cuadratura de saltos solo se evalúa en x >= 0")
    rule = JumpRule(g, p)
    jp = int(g.jump_row(j))
    k = i - g.i0
    cols, w = rule.positive_row(k)
    level, _ = rule.negative(np.array([v[g.i0, jp]]), np.array([k]))
    return float(w @ v[g.i0 + cols, jp] + level[0, 0])


def _advection(g: Grid, p: ModelParams, j: int) -> float:
    """a (y_j - b) / dy >= 0; nulo en la fila y = b."""
    return p.a * (g.ys[j] - p.b) / g.dy


def discrete_generator(g: Grid, p: ModelParams, v: np.ndarray, i: int, j: int) -> float:
    """-L_h V en el nodo (i, j) con diferencias upwind."""
    _check_positive_node(g, i, j)
    y = g.ys[j]
    out = (p.rho + y) * v[i, j] - p.c * (v[i + 1, j] - v[i, j]) / g.dx
    if j > 0:
        out += _advection(g, p, j) * (v[i, j] - v[i, j - 1])
    return float(out - y * jump_quadrature(g, p, v, i, j))


def continuation_update(g: Grid, p: ModelParams, v: np.ndarray, i: int, j: int) -> float:
    _check_positive_node(g, i, j)
    y = g.ys[j]
    adv = _advection(g, p, j)
    num = p.c / g.dx * v[i + 1, j] + y * jump_quadrature(g, p, v, i, j)
    if j > 0:
        num += adv * v[i, j - 1]
    return float(num / (p.rho + y + p.c / g.dx + adv))


def dividend_update(g: Grid, v: np.ndarray, i: int, j: int) -> float:
    """Condición de primer orden D-_x V = 1."""
    if i <= g.i0:
        raise ModelError("La actualización de dividendos exige x_i > 0")
    return float(v[i - 1, j] + g.dx)


def apply_negative_region(g: Grid, p: ModelParams, v: np.ndarray) -> np.ndarray:
    out = np.array(v, dtype=float)
    out[: g.i0] = injection_region_value(out[g.i0][None, :], g.xs[: g.i0][:, None], p.delta)
    return out


def boundary_x0_update(g: Grid, p: ModelParams, v: np.ndarray, j: int) -> float:
    """
    Frontera x = 0: todo siniestro lleva a x < 0, así que el término de saltos
    es la integral cerrada I(V_{i0, j + n_eta}). Misma forma de punto fijo que
    continuation_update.
    """
    if not (0 <= j < g.top):
        raise ModelError(f"Fila j={j} fuera de rango para la frontera x = 0")
    y = g.ys[j]
    adv = _advection(g, p, j)
    i0 = g.i0
    v0 = v[i0, int(g.jump_row(j))]
    num = p.c / g.dx * v[i0 + 1, j] + y * boundary_integral(make_claim_dist(p.claim), v0, p.delta)
    if j > 0:
        num += adv * v[i0, j - 1]
    return float(num / (p.rho + y + p.c / g.dx + adv))


def boundary_ymax(g: Grid, v: np.ndarray) -> np.ndarray:
    out = np.array(v, dtype=float)
    out[:, g.top] = np.maximum(g.xs, 0.0)
    return out


# --- 3. OPERADORES VECTORIZADOS ---

class _Discretization:
    """Coeficientes precalculados del esquema sobre la malla completa."""

    def __init__(self, g: Grid, p: ModelParams):
        self.g = g
        self.p = p
        self.rule = JumpRule(g, p)

        self.rows = np.arange(g.top)             # filas con incógnitas
        self.jp = g.jump_row(self.rows)
        self.y = g.ys[: g.top]
        self.adv = p.a * (self.y - p.b) / g.dy
        self.diag = p.rho + self.y + p.c / g.dx + self.adv

        # Parte con x - z >= 0: matriz T (K x K) sobre los nodos vecinos
        self.T = self.rule.matrix()
        self.ks = np.arange(g.n_pos)

    def jump_all(self, v: np.ndarray) -> np.ndarray:
        """Q_h para todas las columnas x >= 0 y filas j < top. Forma (K, top)."""
        g = self.g
        level, _ = self.rule.negative(v[g.i0, self.jp], self.ks)
        return self.T @ v[g.i0:, self.jp] + level

    def residuals(self, v: np.ndarray) -> Dict[str, np.ndarray]:
        """
        Los tres términos de la DV en columnas x >= 0 (sin la última) y filas j < top:
        dividendos D-_x V - 1, inyección delta - D+_x V, continuación -L_h V.
        En x = 0 no se puede pagar: el término de dividendos vale +inf y la
        continuación usa la integral cerrada de la frontera.
        """
        g, p = self.g, self.p
        vp = v[g.i0:, : g.top]
        dplus = (v[g.i0 + 1:, : g.top] - vp[:-1]) / g.dx
        dminus = (vp[:-1] - v[g.i0 - 1: -2, : g.top]) / g.dx
        dy_minus = np.zeros_like(vp[:-1])
        dy_minus[:, 1:] = vp[:-1, 1:] - vp[:-1, :-1]
        cont = (
            (p.rho + self.y) * vp[:-1]
            - p.c * dplus
            + self.adv * dy_minus
            - self.y * self.jump_all(v)[:-1]
        )
        dividend = dminus - 1.0
        dividend[0] = np.inf
        return {"dividend": dividend, "injection": p.delta - dplus, "continuation": cont}

    def improve(self, v: np.ndarray, tie_tol: float) -> np.ndarray:
        """Etiquetas que minimizan los términos de la DV (empates: continuación)."""
        g = self.g
        regime = np.empty((g.n_x, g.n_y), dtype=np.int8)
        res = self.residuals(v)
        best = np.minimum(res["continuation"], res["dividend"])
        pos = np.where(res["continuation"] <= best + tie_tol, Regime.CONTINUATION, Regime.DIVIDEND)
        regime[g.i0: -1, : g.top] = pos
        regime[g.i0, :] = Regime.CONTINUATION
        regime[-1, :] = Regime.DIVIDEND
        regime[g.i0 + 1:, g.top] = Regime.DIVIDEND
        label_negative_region(g, self.p, v, regime)
        return regime

    # --- sistema lineal de la política congelada ---

    def _index(self, k, j):
        return np.asarray(j) * self.g.n_pos + np.asarray(k)

    def assemble(self, is_div: np.ndarray, v: np.ndarray) -> Tuple[sparse.coo_matrix, np.ndarray]:
        """
        Linealiza (Newton semiliso) las reglas de la política alrededor de v.
        is_div: (K, top) booleano. Incógnitas u = j * K + k.
        """
        g, p = self.g, self.p
        K, J = g.n_pos, g.top
        N = K * J
        rows: List[np.ndarray] = []
        cols: List[np.ndarray] = []
        vals: List[np.ndarray] = []
        rhs = np.zeros(N)

        def add(r, c, x):
            r, c, x = np.broadcast_arrays(r, c, x)
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(x.ravel())

        kk, jj = np.meshgrid(np.arange(K), np.arange(J), indexing="ij")
        div = is_div.copy()
        div[0] = False
        div[-1] = True
        cont = ~div
        cont[0] = False
        bnd = np.zeros_like(div)
        bnd[0] = True

        # Dividendos: V_k - V_{k-1} = dx
        kd, jd = kk[div], jj[div]
        add(self._index(kd, jd), self._index(kd, jd), 1.0)
        add(self._index(kd, jd), self._index(kd - 1, jd), -1.0)
        rhs[self._index(kd, jd)] = g.dx

        # Parte local de continuación y frontera: diag, c/dx hacia la derecha, advección hacia abajo
        local = cont | bnd
        kl, jl = kk[local], jj[local]
        ul = self._index(kl, jl)
        add(ul, ul, self.diag[jl])
        add(ul, self._index(kl + 1, jl), -p.c / g.dx)
        down = jl > 0
        add(ul[down], self._index(kl[down], jl[down] - 1), -self.adv[jl[down]])

        inner = self.jp < g.top        # filas cuyo destino es incógnita
        x_top = g.xs[g.i0:]
        v0 = v[g.i0, self.jp]

        # Continuación, x - z >= 0
        tk, tkp = np.nonzero(self.T[1:])
        tk = tk + 1
        tv = self.T[tk, tkp]
        for j in np.flatnonzero(inner):
            sel = cont[tk, j]
            if not sel.any():
                continue
            add(self._index(tk[sel], j), self._index(tkp[sel], self.jp[j]), -self.y[j] * tv[sel])
        top_rows = np.flatnonzero(~inner)
        if top_rows.size:
            top_jump = self.T @ x_top
            for j in top_rows:
                ks = np.flatnonzero(cont[:, j])
                rhs[self._index(ks, j)] += self.y[j] * top_jump[ks]

        # Parte de inyección (x - z < 0, y la frontera x = 0) linealizada en v0
        v0c = np.maximum(v0, 0.0)
        level, slope = self.rule.negative(v0c, self.ks)
        sel = local & inner[None, :]
        ks, js = np.nonzero(sel)
        add(self._index(ks, js), self._index(0, self.jp[js]), -self.y[js] * slope[ks, js])
        rhs[self._index(ks, js)] += self.y[js] * (level[ks, js] - slope[ks, js] * v0c[js])

        A = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
        )
        return A, rhs

    def solve(self, A: sparse.coo_matrix, rhs: np.ndarray) -> np.ndarray:
        """Sistema en banda: K diagonales por debajo, n_eta * K por encima."""
        K = self.g.n_pos
        lower, upper = K, self.g.n_eta * K
        A = A.tocsr().tocoo()   # suma duplicados
        ab = np.zeros((lower + upper + 1, A.shape[1]))
        ab[upper + A.row - A.col, A.col] = A.data
        return solve_banded((lower, upper), ab, rhs, overwrite_ab=True, check_finite=False)

    def unpack(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        g = self.g
        out = np.array(v, dtype=float)
        out[g.i0:, : g.top] = u.reshape(g.top, g.n_pos).T
        return apply_negative_region(g, self.p, boundary_ymax(g, out))


def label_negative_region(g: Grid, p: ModelParams, v: np.ndarray, regime: np.ndarray) -> None:
    """x < 0: inyección si V_{i0,j} + delta x >= 0, ruina si no."""
    inject = v[g.i0][None, :] + p.delta * g.xs[: g.i0][:, None] >= 0
    regime[: g.i0] = np.where(inject, Regime.INJECTION, Regime.RUIN)


def _check_policy(g: Grid, regime: np.ndarray) -> None:
    pos = regime[g.i0:]
    neg = regime[: g.i0]
    if not np.isin(pos, (Regime.CONTINUATION, Regime.DIVIDEND)).all():
        raise ModelError("Para x >= 0 la política solo admite continuación o dividendos")
    if not np.isin(neg, (Regime.INJECTION, Regime.RUIN)).all():
        raise ModelError("Para x < 0 la política solo admite inyección o ruina")


# --- 4. EVALUACIÓN Y MEJORA DE POLÍTICAS (HOWARD) ---

def default_tol(p: ModelParams) -> float:
    return 1e-8 * p.c / p.rho


def _evaluate(
    disc: _Discretization, regime: np.ndarray, v_init: np.ndarray, tol: float, max_iter: int
) -> Tuple[np.ndarray, int]:
    g = disc.g
    is_div = regime[g.i0:, : g.top] == Regime.DIVIDEND
    v = apply_negative_region(g, disc.p, boundary_ymax(g, v_init))
    change = np.inf
    for it in range(1, max_iter + 1):
        A, rhs = disc.assemble(is_div, v)
        new = disc.unpack(disc.solve(A, rhs), v)
        if not np.all(np.isfinite(new)):
            raise ConvergenceError("La evaluación de la política produjo valores no finitos", it, np.inf)
        change = float(np.max(np.abs(new - v)))
        v = new
        logger.debug("Evaluación: iteración %d, cambio %.3e", it, change)
        if change < tol:
            return v, it
    raise ConvergenceError("La evaluación de la política no convergió", max_iter, change)


def policy_evaluation(
    g: Grid,
    p: ModelParams,
    policy: PolicyGrid,
    v_init: ValueGrid,
    tol: Optional[float] = None,
    max_iter: int = 50,
) -> ValueGrid:
    """
    Valor de una política congelada: punto fijo de las reglas de actualización
    de cada régimen. No se itera Gauss-Seidel nodo a nodo: cada paso resuelve
    el sistema lineal completo en banda con la parte de inyección linealizada
    (Newton semiliso), y se repite hasta que el cambio máximo entre pasos
    sucesivos, en norma del supremo sobre toda la malla, es menor que tol
    (por defecto 1e-8 c/rho). Con la política fija el punto fijo es el mismo
    que el de Gauss-Seidel; solo cambia el camino.
    """
    _check_policy(g, policy.regime)
    v, _ = _evaluate(_Discretization(g, p), policy.regime, v_init.v, tol or default_tol(p), max_iter)
    return ValueGrid(g, v)


@dataclass
class HowardResult:
    value: ValueGrid
    policy: PolicyGrid
    outer_iterations: int
    history: List[Dict[str, int]] = field(default_factory=list)

    @property
    def grid(self) -> Grid:
        return self.value.grid


def howard_solve(
    g: Grid,
    p: ModelParams,
    tol: Optional[float] = None,
    max_outer: int = 100,
    tie_tol: Optional[float] = None,
    max_inner: int = 50,
) -> HowardResult:
    """Alterna evaluación y mejora puntual hasta que la política no cambia."""
    tol = tol or default_tol(p)
    tie_tol = tol if tie_tol is None else tie_tol
    disc = _Discretization(g, p)

    v = lower_bound_grid(g)
    regime = disc.improve(v, tie_tol)
    history: List[Dict[str, int]] = []
    prev_changed = None

    for outer in range(1, max_outer + 1):
        v, inner = _evaluate(disc, regime, v, tol, max_inner)
        new_regime = disc.improve(v, tie_tol)
        changed = int(np.sum(new_regime[g.i0:] != regime[g.i0:]))
        history.append({"iteration": outer, "changed": changed, "inner_iterations": inner})
        logger.info("Howard: iteración %d, %d nodos cambiados (%d pasos internos)", outer, changed, inner)
        if prev_changed is not None and changed >= prev_changed > 0:
            logger.debug("Howard: el número de nodos cambiados no decreció (%d -> %d)", prev_changed, changed)
        prev_changed = changed
        regime = new_regime
        if changed == 0:
            return HowardResult(ValueGrid(g, v), PolicyGrid(g, regime), outer, history)

    raise ConvergenceError("Howard no convergió", max_outer, float(prev_changed or 0))


# --- 5. BARRERAS ---

@dataclass
class BarrierPolicy:
    """
    Barreras tabuladas en ys con interpolación lineal:
    x*(y) >= 0 nivel de pago, kappa*(y) <= 0 umbral de inyección.
    """
    ys: np.ndarray
    x_table: np.ndarray
    kappa_table: np.ndarray
    inner_zones: Dict[float, List[Tuple[float, float]]] = field(default_factory=dict)

    def x_star(self, y):
        return np.interp(y, self.ys, self.x_table)

    def kappa_star(self, y):
        return np.interp(y, self.ys, self.kappa_table)

    def __call__(self, y):
        return self.x_star(y), self.kappa_star(y)

    @classmethod
    def constant(cls, x_star: float, kappa_star: float) -> "BarrierPolicy":
        ys = np.array([0.0, 1.0])
        return cls(ys, np.full(2, float(x_star)), np.full(2, float(kappa_star)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"y": self.ys, "kappa_star": self.kappa_table, "x_star": self.x_table})


def extract_barriers(g: Grid, p: ModelParams, v: ValueGrid, policy: PolicyGrid) -> BarrierPolicy:
    """
    kappa*(y_j) = -V_{i0,j}/delta; x*(y_j) = nivel al que paga la racha final de
    dividendos. Zonas de dividendos interiores quedan como diagnóstico.

    Si la racha final empieza en el nodo x_{i*}, se toma x* = x_{i*} - dx y no
    x_{i*}: la regla de dividendos V_i = V_{i-1} + dx en x_{i*} paga hasta
    x_{i*-1}, que es el último nivel en continuación. El valor nunca baja de 0.
    """
    kappa = -v.v[g.i0] / p.delta
    x_star = np.zeros(g.n_y)
    zones: Dict[float, List[Tuple[float, float]]] = {}

    for j in range(g.n_y):
        is_div = policy.regime[g.i0 + 1:, j] == Regime.DIVIDEND
        not_div = np.flatnonzero(~is_div)
        # en las políticas de Howard la última columna es siempre dividendo
        start = 0 if not_div.size == 0 else not_div[-1] + 1
        x_star[j] = max(0.0, g.xs[min(g.i0 + 1 + start, g.n_x - 1)] - g.dx)

        inner = np.flatnonzero(is_div[:start])
        if inner.size:
            breaks = np.flatnonzero(np.diff(inner) > 1)
            firsts = np.r_[inner[0], inner[breaks + 1]]
            lasts = np.r_[inner[breaks], inner[-1]]
            zones[float(g.ys[j])] = [
                (float(g.xs[g.i0 + 1 + a]), float(g.xs[g.i0 + 1 + b])) for a, b in zip(firsts, lasts)
            ]

    if zones:
        logger.info("Zonas de dividendos interiores en %d filas de y", len(zones))
    return BarrierPolicy(ys=g.ys.copy(), x_table=x_star, kappa_table=kappa, inner_zones=zones)


# --- 6. DIAGNÓSTICOS ---

def vi_residuals(g: Grid, p: ModelParams, v: ValueGrid) -> Dict[str, np.ndarray]:
    """Términos de la DV en los nodos interiores con x >= 0 (forma (K - 1, n_y - 1))."""
    res = _Discretization(g, p).residuals(v.v)
    res["min"] = np.minimum(np.minimum(res["dividend"], res["injection"]), res["continuation"])
    return res


def check_properties(g: Grid, p: ModelParams, result: HowardResult, tol: Optional[float] = None) -> Dict[str, bool]:
    """Cotas, pendientes en x, monotonía en y e identidad de la región negativa."""
    tol = tol or default_tol(p)
    v = result.value.v
    lower = lower_bound_grid(g)
    pos = v[g.i0:]
    steps = np.diff(pos, axis=0)
    checks = {
        "lower_bound": bool(np.all(v >= lower - tol)),
        "upper_bound": bool(np.all(v <= lower + p.c / p.rho + tol)),
        "x_slope_min": bool(np.all(steps >= g.dx - tol)),
        "x_slope_max": bool(np.all(steps <= p.delta * g.dx + tol)),
        "y_monotone": bool(np.all(np.diff(v, axis=1) <= tol)),
        "negative_region": bool(np.allclose(v, apply_negative_region(g, p, v), rtol=0, atol=1e-12)),
    }
    for name, ok in checks.items():
        if not ok:
            logger.warning("Propiedad '%s' no verificada", name)
    return checks


def regime_areas(g: Grid, policy: PolicyGrid) -> Dict[str, float]:
    """Fracción de nodos de cada régimen (x >= 0 para continuación/dividendos, x < 0 para el resto)."""
    pos = policy.regime[g.i0:, : g.top]
    neg = policy.regime[: g.i0, : g.top]
    return {
        "continuation": float(np.mean(pos == Regime.CONTINUATION)),
        "dividend": float(np.mean(pos == Regime.DIVIDEND)),
        "injection": float(np.mean(neg == Regime.INJECTION)),
        "ruin": float(np.mean(neg == Regime.RUIN)),
    }


def value_at(v: ValueGrid, x, y):
    """Interpolación bilineal de V; fuera de la malla se recorta al borde."""
    g = v.grid
    interp = RegularGridInterpolator((g.xs, g.ys), v.v, method="linear")
    x = np.clip(np.asarray(x, dtype=float), g.xs[0], g.xs[-1])
    y = np.clip(np.asarray(y, dtype=float), g.ys[0], g.ys[-1])
    x, y = np.broadcast_arrays(x, y)
    out = interp(np.stack([x.ravel(), y.ravel()], axis=-1)).reshape(x.shape)
    return out if out.ndim else float(out)


# --- 7. SENSIBILIDAD ---

def sensitivity_sweep(
    base: ModelParams,
    spec: GridSpec,
    param_name: str,
    values: Sequence[float],
    workers: Optional[int] = None,
) -> List[Tuple[ModelParams, PolicyGrid]]:
    """Un howard_solve por valor; los valores se resuelven en paralelo."""
    if param_name not in SWEEP_PARAMS:
        raise ConfigError(f"Parámetro de barrido '{param_name}' no soportado. Opciones: {SWEEP_PARAMS}")
    params = [base.with_param(param_name, float(val)) for val in values]

    def run(p: ModelParams) -> Tuple[ModelParams, PolicyGrid]:
        logger.info("Barrido %s = %s", param_name, getattr(p, param_name))
        return p, howard_solve(build_grid(spec, p), p).policy

    workers = workers or settings.WORKERS
    if workers > 1 and len(params) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, params))
    return [run(p) for p in params]
