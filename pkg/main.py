#!/usr/bin/env python3
"""
Main entry point for the QhoObserver application.

Without arguments this script runs the invariant suites on the bundled
fixtures and reports the EX2 weak-coupling slope. With arguments it
hands over to the ``qho`` command-line interface.
"""

import sys

import numpy as np
from tqdm import tqdm

from qho_observer import cli, logger
from qho_observer.analysis import checks
from qho_observer.data_loading import loader
from qho_observer.errors import QhoError
from qho_observer.synthesis import autonomous
from config import EXIT_NUMERICAL_ERROR, EXIT_OK, EXIT_VIOLATION


def main():
    """
    Check both fixtures and log the results.

    Returns:
    --------
    int
        Exit code.
    """
    log = logger.setup_logger()
    log.info("Starting QhoObserver fixture checks")

    try:
        with tqdm(total=3, desc="QhoObserver workflow") as pbar:
            pbar.set_description("Checking the single-oscillator fixture")
            ex1 = loader.load_problem("EX1")
            results = checks.run_oscillator_checks(ex1.model, ex1.init)
            pbar.update(1)

            pbar.set_description("Checking the observer fixture")
            ex2 = loader.load_problem("EX2")
            results += checks.run_oscillator_checks(ex2.model, ex2.init)
            results += checks.run_composite_checks(ex2.system)
            results += checks.run_autonomous_checks(ex2.autonomous)
            pbar.update(1)

            pbar.set_description("Weak-coupling slope")
            slope = autonomous.weak_coupling_direction(ex2.autonomous)
            log.info(f"EX2 weak-coupling slope L' = {np.array2string(slope, precision=4)}")
            pbar.update(1)

            pbar.set_description("Workflow complete")

        failed = checks.failed_checks(results)
        if failed:
            log.error(f"Failed checks: {', '.join(failed)}")
            return EXIT_VIOLATION
        log.info(f"All {len(results)} fixture checks passed")
        return EXIT_OK
    except QhoError as e:
        log.error(f"{type(e).__name__}: {str(e)}")
        return e.exit_code
    except Exception as e:
        log.error(f"Error: {str(e)}")
        return EXIT_NUMERICAL_ERROR


if __name__ == "__main__":
    # If command-line arguments are provided, use the CLI module
    if len(sys.argv) > 1:
        sys.exit(cli.main())
    else:
        sys.exit(main())
