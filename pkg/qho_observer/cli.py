"""
Command-line interface for QhoObserver.

This module provides the ``qho`` command with the moments, backaction,
synthesize and check subcommands. Each run writes its tables, a summary and a
manifest into an output directory.
"""

import argparse
import os
import sys
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from config import (
    BACKACTION_TABLE, CHECK_SEED, CHECKS_TABLE, DEFAULT_MU_MAX, DEFAULT_SCALE_GRID,
    DEFAULT_TAU_END, DEFAULT_TAU_MARGIN_FACTOR, DEFAULT_TAU_POINTS, DEFAULT_TAU_START,
    EXIT_CONFIG_ERROR, EXIT_NUMERICAL_ERROR, EXIT_OK, EXIT_VIOLATION, HOMOTOPY_STEPS,
    MOMENTS_TABLE, OUTPUT_DIR, SYNTHESIS_TABLE
)
from qho_observer import export, logger
from qho_observer.analysis import checks
from qho_observer.coupling import backaction
from qho_observer.data_loading import loader
from qho_observer.errors import AllFrequenciesZero, ConfigError, NumericalError, QhoError
from qho_observer.oscillator import qho
from qho_observer.synthesis import autonomous

COMMANDS = ("moments", "backaction", "synthesize", "check")


def parse_grid(text: str, name: str = "grid", allow_zero: bool = False) -> np.ndarray:
    """
    Parse ``a:b:n`` into n evenly spaced points from a to b.

    Raises:
    -------
    ConfigError
        If the text is malformed or the range is invalid.
    """
    if not isinstance(text, str):
        raise TypeError(f"{name} must be a string, got {type(text).__name__}")
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"expected start:stop:count, got {text!r}", key=name)
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"expected start:stop:count, got {text!r}", key=name)
    if count < 1:
        raise ConfigError(f"count must be at least 1, got {count}", key=name)
    if not (np.isfinite(start) and np.isfinite(stop)) or stop < start:
        raise ConfigError(f"need finite start <= stop, got {start:g} and {stop:g}", key=name)
    if start < 0.0 or (start == 0.0 and not allow_zero):
        raise ConfigError(f"start must be {'nonnegative' if allow_zero else 'positive'}, got {start:g}",
                          key=name)
    return np.linspace(start, stop, count)


def parse_args(args: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command-line arguments.

    Parameters:
    -----------
    args : List[str], optional
        Command-line arguments. If None, sys.argv[1:] is used.

    Returns:
    --------
    argparse.Namespace
        Parsed arguments.

    Raises:
    -------
    TypeError
        If args is not a list of strings or None.
    """
    if args is not None:
        if not isinstance(args, list):
            raise TypeError(f"args must be a list or None, got {type(args).__name__}")
        if not all(isinstance(arg, str) for arg in args):
            raise TypeError("all elements in args must be strings")

    parser = argparse.ArgumentParser(
        prog="qho",
        description="QhoObserver - moments, back-action and observer synthesis for quantum harmonic oscillators"
    )

    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default="INFO",
        help="Set the logging level"
    )
    parser.add_argument(
        "--log-file",
        help="Path to the log file"
    )
    parser.add_argument(
        "--no-progress", action="store_true", help="Hide progress bars"
    )

    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    def add_common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument(
            "--config", required=True,
            help="Path to a YAML problem file, or a bundled fixture (EX1, EX2)"
        )
        sub.add_argument(
            "--out",
            help=f"Output directory (default: {OUTPUT_DIR}/<command>)"
        )

    moments_parser = subparsers.add_parser(
        "moments", help="Discounted second moments of a single oscillator over a tau grid"
    )
    add_common(moments_parser)
    moments_parser.add_argument(
        "--tau-grid",
        help=f"Grid start:stop:count (default: {DEFAULT_TAU_START}:{DEFAULT_TAU_MARGIN_FACTOR:g}*tau_*:"
             f"{DEFAULT_TAU_POINTS})"
    )

    backaction_parser = subparsers.add_parser(
        "backaction", help="Gramian deviations caused by the coupling and their bounds"
    )
    add_common(backaction_parser)
    backaction_parser.add_argument(
        "--mu-max", type=float,
        help=f"Trace the optimal coupling up to this mu (autonomous configs, default: {DEFAULT_MU_MAX:g})"
    )
    backaction_parser.add_argument(
        "--steps", type=int, default=HOMOTOPY_STEPS,
        help=f"Number of mu grid intervals (default: {HOMOTOPY_STEPS})"
    )
    backaction_parser.add_argument(
        "--scale-grid",
        help=f"Scale the configured coupling L by c over start:stop:count (default for general "
             f"composite configs: {DEFAULT_SCALE_GRID})"
    )
    backaction_parser.add_argument(
        "--skip-gains", action="store_true", help="Skip the frequency-domain gains"
    )

    synthesize_parser = subparsers.add_parser(
        "synthesize", help="Optimal coupling of an autonomous-error observer by homotopy in mu"
    )
    add_common(synthesize_parser)
    synthesize_parser.add_argument(
        "--mu-max", type=float, default=DEFAULT_MU_MAX,
        help=f"Largest mu = 1/lambda (default: {DEFAULT_MU_MAX:g})"
    )
    synthesize_parser.add_argument(
        "--steps", type=int, default=HOMOTOPY_STEPS,
        help=f"Number of mu grid intervals (default: {HOMOTOPY_STEPS})"
    )

    check_parser = subparsers.add_parser(
        "check", help="Run the invariant suites for a problem"
    )
    add_common(check_parser)

    return parser.parse_args(args)


def main(args: Optional[List[str]] = None) -> int:
    """
    Main entry point for the command-line interface.

    Parameters:
    -----------
    args : List[str], optional
        Command-line arguments. If None, sys.argv[1:] is used.

    Returns:
    --------
    int
        Exit code: 0 on success, 1 for configuration errors, 2 for numerical
        failures and 3 for violated invariants or bounds.
    """
    try:
        parsed_args = parse_args(args)
    except SystemExit as e:
        return EXIT_OK if not e.code else EXIT_CONFIG_ERROR
    except Exception as e:
        print(f"Error parsing arguments: {str(e)}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    try:
        log = logger.setup_logger(level=parsed_args.log_level, log_file=parsed_args.log_file)
    except Exception as e:
        print(f"Error setting up logger: {str(e)}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    handlers = {
        "moments": cmd_moments,
        "backaction": cmd_backaction,
        "synthesize": cmd_synthesize,
        "check": cmd_check,
    }
    if parsed_args.command not in handlers:
        log.error("No command specified. Use --help for usage information.")
        return EXIT_CONFIG_ERROR
    try:
        return handlers[parsed_args.command](parsed_args, log)
    except QhoError as e:
        log.error(f"{type(e).__name__}: {str(e)}")
        return e.exit_code
    except IOError as e:
        log.error(f"Error: {str(e)}")
        return EXIT_CONFIG_ERROR
    except Exception as e:
        log.error(f"Error: {str(e)}")
        return EXIT_NUMERICAL_ERROR


def _validate(args: argparse.Namespace, log) -> None:
    if not isinstance(args, argparse.Namespace):
        raise TypeError(f"args must be an argparse.Namespace, got {type(args).__name__}")
    if not isinstance(log, logger.logging.Logger):
        raise TypeError(f"log must be a logging.Logger, got {type(log).__name__}")


def _out_dir(args: argparse.Namespace) -> str:
    return args.out if getattr(args, "out", None) else os.path.join(OUTPUT_DIR, args.command)


def _options(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k not in ("log_level", "log_file", "command")}


def _matrix_columns(prefix: str, m: np.ndarray) -> Dict[str, float]:
    """Upper-triangular entries named prefix_j_k with 1-based indices."""
    n = m.shape[0]
    return {f"{prefix}_{j + 1}_{k + 1}": float(m[j, k]) for j in range(n) for k in range(j, n)}


def _require_kind(problem: loader.ProblemConfig, kinds, command: str) -> None:
    if problem.kind not in kinds:
        raise ConfigError(f"{command} needs a {' or '.join(kinds)} config, got {problem.kind}",
                          problem.source)


def cmd_moments(args: argparse.Namespace, log: logger.logging.Logger) -> int:
    """
    Tabulate discounted moments over a tau grid, with the tau = 0 and tau = inf rows.

    Returns:
    --------
    int
        Exit code.
    """
    _validate(args, log)
    problem = loader.load_problem(args.config)
    model, init = problem.model, problem.init
    log.info(f"Loaded {problem.kind} problem from {problem.source}")

    spec = None
    try:
        spec = qho.spectral_decompose(model)
    except NumericalError as e:
        log.warning(f"spectral route unavailable ({type(e).__name__}: {e}); tau=inf row omitted")

    if args.tau_grid:
        taus = parse_grid(args.tau_grid, "tau-grid")
    else:
        stop = DEFAULT_TAU_END
        if spec is not None:
            try:
                stop = DEFAULT_TAU_MARGIN_FACTOR * qho.convergence_margin(spec)
            except AllFrequenciesZero:
                log.info("all frequencies vanish; using the fallback tau range")
        taus = np.linspace(DEFAULT_TAU_START, max(stop, DEFAULT_TAU_START), DEFAULT_TAU_POINTS)

    rows = [{"tag": "tau=0", "tau": 0.0, **_matrix_columns("P", init.sigma)}]
    with tqdm(total=len(taus), desc="Discounted moments", disable=args.no_progress) as pbar:
        for tau in taus:
            moments = qho.discounted_moments_ale(model, init, float(tau))
            rows.append({"tag": "discounted", "tau": float(tau), **_matrix_columns("P", moments.p_real)})
            pbar.update(1)
    summary: Dict[str, Any] = {"command": "moments", "kind": problem.kind, "n": model.n,
                               "tau_points": len(taus)}
    if spec is not None:
        limit = qho.infinite_horizon_moments(spec, init)
        rows.append({"tag": "tau=inf", "tau": float("inf"), **_matrix_columns("P", limit.p_real)})
        summary["frequencies"] = spec.positive_frequencies
        summary["trace_inf"] = float(np.trace(limit.p_real))
        try:
            summary["tau_star"] = qho.convergence_margin(spec)
        except AllFrequenciesZero:
            summary["tau_star"] = float("inf")

    out_dir = _out_dir(args)
    export.write_table(pd.DataFrame(rows), out_dir, MOMENTS_TABLE)
    export.write_summary(summary, out_dir)
    export.write_manifest(out_dir, "moments", problem.source, problem.document, _options(args))
    log.info(f"Moments written to {out_dir}")
    return EXIT_OK


def _backaction_row(system, label: Dict[str, float], with_gains: bool, log) -> Dict[str, Any]:
    try:
        report = backaction.deviation_bounds(system, with_gains=with_gains)
    except NumericalError as e:
        log.warning(f"back-action evaluation failed at {label}: {type(e).__name__}: {e}")
        return {**label, "status": type(e).__name__}
    violations = report.violations()
    if violations:
        status = "violation:" + "+".join(violations)
    elif not report.applicable:
        status = "inapplicable"
    else:
        status = "ok"
    return {**label, **report.as_row(), "status": status}


def cmd_backaction(args: argparse.Namespace, log: logger.logging.Logger) -> int:
    """
    Evaluate the back-action bounds along the optimal coupling path (autonomous
    configs) or along scaled copies c L of the configured coupling.

    Returns:
    --------
    int
        Exit code, EXIT_VIOLATION when an observed deviation exceeds its bound.
    """
    _validate(args, log)
    problem = loader.load_problem(args.config)
    _require_kind(problem, (loader.KIND_COMPOSITE, loader.KIND_AUTONOMOUS), "backaction")
    with_gains = not args.skip_gains

    rows = []
    summary: Dict[str, Any] = {"command": "backaction", "kind": problem.kind}
    trace = None
    if problem.kind == loader.KIND_AUTONOMOUS and not args.scale_grid:
        mu_max = DEFAULT_MU_MAX if args.mu_max is None else args.mu_max
        trace = autonomous.homotopy_solve(problem.autonomous, mu_max, args.steps,
                                          progress=not args.no_progress)
        points = [({"mu": mu}, problem.system.with_coupling(coupling))
                  for mu, coupling in zip(trace.mu_grid, trace.l_path)]
        summary["mu_max"] = mu_max
    else:
        scales = parse_grid(args.scale_grid or DEFAULT_SCALE_GRID, "scale-grid", allow_zero=True)
        points = [({"scale": float(c)}, problem.system.with_coupling(c * problem.system.coupling))
                  for c in scales]

    with tqdm(total=len(points), desc="Back-action bounds", disable=args.no_progress) as pbar:
        for label, system in points:
            rows.append(_backaction_row(system, label, with_gains, log))
            pbar.update(1)

    frame = pd.DataFrame(rows)
    violated = int(frame["status"].str.startswith("violation").sum())
    summary.update({"points": len(rows), "violations": violated,
                    "inapplicable": int((frame["status"] == "inapplicable").sum())})
    out_dir = _out_dir(args)
    export.write_table(frame, out_dir, BACKACTION_TABLE)
    export.write_summary(summary, out_dir)
    export.write_manifest(out_dir, "backaction", problem.source, problem.document, _options(args))
    log.info(f"Back-action table written to {out_dir}")

    if trace is not None:
        trace.raise_for_status()
    if violated:
        log.error(f"{violated} grid points violate a back-action bound")
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_synthesize(args: argparse.Namespace, log: logger.logging.Logger) -> int:
    """
    Trace the optimal symmetric coupling over mu in [0, mu_max].

    Returns:
    --------
    int
        Exit code, EXIT_NUMERICAL_ERROR when the continuation stops early.
    """
    _validate(args, log)
    problem = loader.load_problem(args.config)
    _require_kind(problem, (loader.KIND_AUTONOMOUS,), "synthesize")
    prob = problem.autonomous

    l_prime = autonomous.weak_coupling_direction(prob)
    trace = autonomous.homotopy_solve(prob, args.mu_max, args.steps, progress=not args.no_progress)
    summary: Dict[str, Any] = {
        "command": "synthesize",
        "kind": problem.kind,
        "mu_max": args.mu_max,
        "steps": args.steps,
        "points": len(trace.mu_grid),
        "completed": trace.completed,
        "reached_mu": trace.mu_grid[-1],
        "error_ms_at_zero": trace.error_path[0],
        "L_prime": l_prime,
        "slope_defect": trace.slope_defect(l_prime),
        "slope_defect_raw": trace.slope_defect(l_prime, fitted=False),
        "max_residual": max(trace.residual_path),
    }
    out_dir = _out_dir(args)
    export.write_table(trace.to_frame(), out_dir, SYNTHESIS_TABLE)
    export.write_summary(summary, out_dir)
    export.write_manifest(out_dir, "synthesize", problem.source, problem.document, _options(args))
    log.info(f"Synthesis path written to {out_dir}")
    trace.raise_for_status()
    return EXIT_OK


def cmd_check(args: argparse.Namespace, log: logger.logging.Logger) -> int:
    """
    Run every invariant suite that applies to the config.

    Returns:
    --------
    int
        Exit code, EXIT_VIOLATION on any failed check.
    """
    _validate(args, log)
    problem = loader.load_problem(args.config)
    suites = ["oscillator"]
    if problem.system is not None:
        suites.append("composite")
    if problem.autonomous is not None:
        suites.append("autonomous")

    results = []
    with tqdm(total=len(suites), desc="Invariant checks", disable=args.no_progress) as pbar:
        for suite in suites:
            pbar.set_description(f"Checking {suite} invariants")
            if suite == "oscillator":
                results.extend(checks.run_oscillator_checks(problem.model, problem.init))
            elif suite == "composite":
                results.extend(checks.run_composite_checks(problem.system, seed=CHECK_SEED))
            else:
                results.extend(checks.run_autonomous_checks(problem.autonomous))
            pbar.update(1)

    frame = checks.to_frame(results)
    failed = len(checks.failed_checks(results))
    summary = {"command": "check", "kind": problem.kind, "suites": suites,
               "checks": len(results), "failed": failed}
    out_dir = _out_dir(args)
    export.write_table(frame, out_dir, CHECKS_TABLE)
    export.write_summary(summary, out_dir)
    export.write_manifest(out_dir, "check", problem.source, problem.document, _options(args), seed=CHECK_SEED)
    if failed:
        log.error(f"{failed} of {len(results)} checks failed")
        return EXIT_VIOLATION
    log.info(f"All {len(results)} checks passed")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
