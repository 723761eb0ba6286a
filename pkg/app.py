import sys
import signal
import logging
import argparse
import threading
from dataclasses import replace

from src.logger import setup_logger
from src.config import CONFIG_FILE, load_config, save_config, validate_config
from src.errors import CellFailure, ConfigError, ParameterError
from src.experiments import (SCENARIOS, cell_for, detect_bench_from_config, oracle_report, run_cell,
                             run_sweep)
from src.output_format import format_number

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_CELL_FAILED = 2

shutdown_event = threading.Event()


def signal_handler(sig, frame):
    """Let a running sweep finish its current cells and stop."""
    logger.info(f"[SHUTDOWN] Received signal {sig}, stopping after the running cells...")
    shutdown_event.set()


def setup_signal_handlers():
    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _add_config_flags(parser):
    parser.add_argument("--scenario", choices=sorted(SCENARIOS), default="stationary",
                        help="Scenario preset used when no --config is given")
    parser.add_argument("--config", help="JSON config file; overrides --scenario")
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument("--horizon", type=int)
    parser.add_argument("--schedule", help="Segments as start:p1:p2,start:p1:p2")
    parser.add_argument("--v-values", dest="v_values", type=_float_list, help="Comma separated V values")
    parser.add_argument("--e-w-values", dest="e_w_values", type=_float_list)
    parser.add_argument("--error-curve", dest="error_curve", type=_float_list)
    parser.add_argument("--seeds", type=_int_list)
    parser.add_argument("--c", type=float)
    parser.add_argument("--w", type=int)
    parser.add_argument("--eps-d", dest="eps_d", type=float)
    parser.add_argument("--delta-sim", dest="delta_sim", type=float)
    parser.add_argument("--theta-mode", dest="theta_mode", choices=["simulation", "analytic"])
    parser.add_argument("--detection-norm", dest="detection_norm", choices=["l1", "half_l1"])
    parser.add_argument("--zeta", type=float)
    parser.add_argument("--dual-iters", dest="dual_iters", type=int)
    parser.add_argument("--warm-iters", dest="warm_iters", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--export-traces", dest="export_traces", action="store_true", default=None)


OVERRIDE_KEYS = ("out_dir", "horizon", "schedule", "v_values", "e_w_values", "error_curve", "seeds", "c", "w",
                 "eps_d", "delta_sim", "theta_mode", "detection_norm", "zeta", "dual_iters", "warm_iters",
                 "workers", "export_traces")


def build_config(args):
    """Scenario preset or config file, with command line flags on top."""
    config = load_config(args.config) if args.config else SCENARIOS[args.scenario]()
    overrides = {key: getattr(args, key) for key in OVERRIDE_KEYS if getattr(args, key, None) is not None}
    if "v_values" in overrides:
        # keep integral V values integral so file names and CSV cells stay short
        overrides["v_values"] = [int(v) if float(v).is_integer() else v for v in overrides["v_values"]]
    config = replace(config, **overrides)
    return validate_config(config)


def cmd_run(args):
    config = build_config(args)
    config = replace(config, export_traces=True)
    V = args.V if args.V is not None else config.v_values[0]
    e_w = args.e_w if args.e_w is not None else config.e_w_values[-1]
    cell = cell_for(args.controller, V, e_w, args.seed)
    metrics = run_cell(config, cell)
    logger.info(f"[OK] {cell.controller} V={format_number(cell.V)} seed={cell.seed}: "
                f"cost {metrics.avg_cost:.4f}, backlog {metrics.avg_backlog:.2f}, "
                f"trimmed delay {metrics.trimmed_delay:.2f}, drop rate {metrics.drop_rate:.4f}")
    return EXIT_OK


def cmd_sweep(args):
    config = build_config(args)
    result = run_sweep(config, shutdown_event=shutdown_event)
    return EXIT_OK if result.ok else EXIT_CELL_FAILED


def cmd_detect_bench(args):
    config = build_config(args)
    result = detect_bench_from_config(config, trials=args.trials, seed=args.seed)
    logger.info(f"[OK] d={result.d}, norm={result.norm}: detection rate {result.detection_rate:.4f}, "
                f"false-positive rate {result.false_positive_rate:.4f} over {result.trials} trials")
    return EXIT_OK


def cmd_oracle(args):
    config = build_config(args)
    rows = oracle_report(config, v_values=args.oracle_v, grid_step=args.grid_step)
    worst = max(row.linf_gap for row in rows)
    logger.info(f"[OK] Oracle comparison for {len(rows)} V values, largest L-inf gap {worst:.4f}")
    return EXIT_OK


def cmd_init_config(args):
    config = build_config(args)
    save_config(config, args.path)
    logger.info(f"[CONFIG] Wrote {config.scenario} config to {args.path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(description="Predictive learning-aided control simulations")
    parser.add_argument("--log-level", default="INFO")
    parser.add_argument("--log-dir", default="logs")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Simulate one controller/V/seed cell and export its trace")
    _add_config_flags(run)
    run.add_argument("--controller", choices=["plc", "bp"], default="plc")
    run.add_argument("--V", type=float)
    run.add_argument("--e-w", dest="e_w", type=float)
    run.add_argument("--seed", type=int, required=True)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="Run every controller/V/seed cell of a scenario")
    _add_config_flags(sweep)
    sweep.set_defaults(func=cmd_sweep)

    bench = sub.add_parser("detect-bench", help="Monte Carlo of the change detector")
    _add_config_flags(bench)
    bench.add_argument("--trials", type=int, default=2000)
    bench.add_argument("--seed", type=int, default=0)
    bench.set_defaults(func=cmd_detect_bench)

    oracle = sub.add_parser("oracle", help="Compare the multiplier solver with the grid oracle and the LP")
    _add_config_flags(oracle)
    oracle.add_argument("--oracle-v", dest="oracle_v", type=_float_list, default=[20.0, 100.0])
    oracle.add_argument("--grid-step", dest="grid_step", type=float, default=0.25)
    oracle.set_defaults(func=cmd_oracle)

    init = sub.add_parser("init-config", help="Write a scenario config file")
    _add_config_flags(init)
    init.add_argument("--path", default=CONFIG_FILE)
    init.set_defaults(func=cmd_init_config)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logger(log_dir=args.log_dir, level=args.log_level.upper())
    setup_signal_handlers()
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as e:
        logger.error(f"[ERROR] {e}")
        return EXIT_INVALID
    except CellFailure as e:
        logger.exception(f"[ERROR] {e}")
        return EXIT_CELL_FAILED


if __name__ == "__main__":
    sys.exit(main())
