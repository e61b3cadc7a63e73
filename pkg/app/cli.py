"""
Línea de comandos:

    python -m app.cli solve    --config configs/baseline.json
    python -m app.cli train    --config ... --algo actor-critic
    python -m app.cli evaluate --config ... --policy pde|checkpoint [--checkpoint actor.json]
    python -m app.cli compare  --config ... --checkpoint actor.json
    python -m app.cli sweep    --config ... --param eta --values 0.1,0.4

Códigos de salida: 0 éxito, 1 error de configuración, 2 fallo numérico.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from rich.console import Console

from . import artifacts
from .config import load_run_config, resolve_output_dir, setup_logging
from .evaluation import (
    actor_policy_source,
    compare_table,
    mc_value,
    pde_policy_source,
    render_compare_table,
    render_sweep_summary,
    report_frame,
    run_sweep,
)
from .exceptions import ConfigError, HawkesDividendError, NumericalError
from .hawkes_sim import RngStream, check_horizon, simulate_barrier_trajectory, trajectory_frame
from .hjb_solver import HowardResult, build_grid, extract_barriers, howard_solve, value_at
from .neural import load_checkpoint, save_checkpoint
from .rl import Algo, KappaFn, learned_regime_map, tabulate_barriers, train
from .schemas import RunConfig, State

logger = logging.getLogger(__name__)
console = Console()

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _solve(cfg: RunConfig) -> HowardResult:
    g = build_grid(cfg.grid, cfg.model)
    logger.info("Malla: %d x %d nodos (dx=%.5f, dy=%.4f)", g.n_x, g.n_y, g.dx, g.dy)
    return howard_solve(g, cfg.model)


def _frozen_kappa(cfg: RunConfig, result: HowardResult) -> Optional[KappaFn]:
    """kappa* de la PDE cuando el entrenamiento lo congeló; la evaluación debe usar el mismo."""
    if not cfg.train.freeze_kappa:
        return None
    return extract_barriers(result.grid, cfg.model, result.value, result.policy).kappa_star


def _with_seed(cfg: RunConfig, seed: Optional[int]) -> RunConfig:
    if seed is None:
        return cfg
    return cfg.model_copy(update={
        "train": cfg.train.model_copy(update={"seed": seed}),
        "eval": cfg.eval.model_copy(update={"seed": seed}),
    })


# --- Subcomandos ---

def cmd_solve(cfg: RunConfig, args, out_dir: Path) -> None:
    result = _solve(cfg)
    barriers = extract_barriers(result.grid, cfg.model, result.value, result.policy)
    artifacts.write_solution(result, barriers, cfg.model, out_dir)
    for x, y in cfg.eval.states:
        console.print(f"V({x:g}, {y:g}) = {value_at(result.value, x, y):.4f}")


def cmd_train(cfg: RunConfig, args, out_dir: Path) -> None:
    algo = Algo.REINFORCE if args.algo == "reinforce" else Algo.ACTOR_CRITIC
    kappa_fn = None
    pde_value = None
    if cfg.train.freeze_kappa or args.pde_reference:
        result = _solve(cfg)
        pde_value = float(value_at(result.value, cfg.train.x0, cfg.train.y0))
        kappa_fn = _frozen_kappa(cfg, result)

    res = train(cfg.model, cfg.train, algo, kappa_fn=kappa_fn, pde_value=pde_value, checkpoint_dir=out_dir)
    artifacts.write_jsonl(res.metrics, out_dir, "train_metrics.jsonl")
    save_checkpoint(res.actor, out_dir / "actor.json")
    if res.critic is not None:
        save_checkpoint(res.critic, out_dir / "critic.json")

    grid = build_grid(cfg.grid, cfg.model)
    artifacts.write_csv(tabulate_barriers(res.actor, grid.ys, cfg.train.sigma_min), out_dir, "learned_barriers.csv")
    artifacts.write_csv(
        learned_regime_map(res.actor, grid.xs, grid.ys, cfg.train.sigma_min), out_dir, "learned_regime_map.csv"
    )
    if res.metrics:
        last = res.metrics[-20:]
        console.print(f"G medio (últimas {len(last)} épocas): {sum(m['mean_G'] for m in last) / len(last):.4f}")


def cmd_evaluate(cfg: RunConfig, args, out_dir: Path) -> None:
    ev = cfg.eval
    first = State(x=ev.states[0][0], y=ev.states[0][1])
    check_horizon(cfg.model, first, ev.h, ev.horizon_T, ev.ruin_free_eps, seed=ev.seed)

    reference = None
    if args.policy == "pde":
        result = _solve(cfg)
        reference = result.value
        source = pde_policy_source(extract_barriers(result.grid, cfg.model, result.value, result.policy))
    else:
        if args.checkpoint is None:
            raise ConfigError("--policy checkpoint necesita --checkpoint")
        kappa_fn = None
        if args.pde_reference or cfg.train.freeze_kappa:
            result = _solve(cfg)
            kappa_fn = _frozen_kappa(cfg, result)
            if args.pde_reference:
                reference = result.value
        actor = load_checkpoint(args.checkpoint)
        source = actor_policy_source(
            actor, cfg.train.sigma_min, deterministic=not args.stochastic, kappa_fn=kappa_fn
        )

    rows = mc_value(source, cfg.model, ev, pde_value=reference)
    artifacts.write_csv(report_frame(rows), out_dir, f"eval_{source.name}.csv")

    if args.dump_trajectory:
        traj = simulate_barrier_trajectory(
            cfg.model, first, ev.h, ev.horizon_T,
            source.make_barriers(RngStream(ev.seed, 10_000).generator()), RngStream(ev.seed, 10_001),
        )
        artifacts.write_csv(trajectory_frame(traj), out_dir, f"trajectory_{source.name}.csv")


def cmd_compare(cfg: RunConfig, args, out_dir: Path) -> None:
    result = _solve(cfg)
    actor = load_checkpoint(args.checkpoint) if args.checkpoint else None
    df = compare_table(
        result, actor, cfg.model, cfg.eval, cfg.eval.states, cfg.train.sigma_min, kappa_fn=_frozen_kappa(cfg, result)
    )
    artifacts.write_csv(df, out_dir, "compare_table.csv")
    render_compare_table(df, console)


def cmd_sweep(cfg: RunConfig, args, out_dir: Path) -> None:
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"--values debe ser una lista separada por comas: {args.values}") from e
    maps, summary = run_sweep(cfg.model, cfg.grid, args.param, values)
    for value, policy in maps.items():
        artifacts.write_csv(policy.to_frame(), out_dir, f"regime_map_{args.param}_{value:g}.csv")
    artifacts.write_csv(summary, out_dir, f"sweep_{args.param}_summary.csv")
    render_sweep_summary(summary, console)


COMMANDS = {
    "solve": cmd_solve,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON de configuración")
    common.add_argument("--seed", type=int, default=None, help="Sobrescribe train.seed y eval.seed")
    common.add_argument("--log-level", default=None)

    parser = argparse.ArgumentParser(prog="hawkes-dividends", description="Dividendos óptimos con siniestros de Hawkes")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("solve", parents=[common], help="Resuelve la HJB (Howard) y exporta CSVs")

    p_train = sub.add_parser("train", parents=[common], help="Entrena el actor (y crítico)")
    p_train.add_argument("--algo", choices=["reinforce", "actor-critic"], default="actor-critic")
    p_train.add_argument("--pde-reference", action="store_true", help="Añade el valor PDE a las métricas")

    p_eval = sub.add_parser("evaluate", parents=[common], help="Evaluación Monte Carlo")
    p_eval.add_argument("--policy", choices=["pde", "checkpoint"], default="pde")
    p_eval.add_argument("--checkpoint", type=Path, default=None)
    p_eval.add_argument("--stochastic", action="store_true", help="Muestrea de la política en vez de usar mu")
    p_eval.add_argument("--pde-reference", action="store_true")
    p_eval.add_argument("--dump-trajectory", action="store_true")

    p_cmp = sub.add_parser("compare", parents=[common], help="Tabla PDE / MC(Opt.) / MC(RL)")
    p_cmp.add_argument("--checkpoint", type=Path, default=None)

    p_sweep = sub.add_parser("sweep", parents=[common], help="Barrido de sensibilidad")
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True, help="Lista separada por comas, p. ej. 0.1,0.4")
    return parser


def cli_main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse sale con 2, que aquí significa fallo numérico
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    setup_logging(args.log_level)
    try:
        cfg = _with_seed(load_run_config(args.config), args.seed)
        out_dir = resolve_output_dir(cfg.output_dir)
        COMMANDS[args.command](cfg, args, out_dir)
    except ConfigError as e:
        logger.error("Error de configuración: %s", e)
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error("Fallo numérico: %s", e)
        return EXIT_NUMERICAL
    except HawkesDividendError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_CONFIG
    except (ValueError, FileNotFoundError) as e:
        logger.error("Entrada inválida: %s", e)
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
