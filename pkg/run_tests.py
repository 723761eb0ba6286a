import sys
import argparse

import pytest

SUITES = {
    "model": ["tests/test_model.py", "tests/test_state_process.py"],
    "prediction": ["tests/test_prediction.py"],
    "ade": ["tests/test_ade.py"],
    "dual": ["tests/test_dual.py"],
    "control": ["tests/test_controller.py"],
    "sim": ["tests/test_ledger.py", "tests/test_simulator.py"],
    "harness": ["tests/test_experiments.py", "tests/test_config.py", "tests/test_app.py"],
    "all": ["tests"],
}


def main(argv=None):
    parser = argparse.ArgumentParser(description="Run the test suites")
    parser.add_argument("suite", choices=sorted(SUITES), nargs="?", default="all")
    parser.add_argument("--quick", action="store_true", help="Skip slow Monte Carlo tests")
    args, extra = parser.parse_known_args(argv)

    pytest_args = list(SUITES[args.suite])
    if args.quick:
        pytest_args += ["-m", "not slow"]
    return pytest.main(pytest_args + extra)


if __name__ == "__main__":
    sys.exit(main())
