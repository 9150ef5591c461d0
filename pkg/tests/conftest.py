import numpy as np
import pytest


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance lines recorded by tests/test_acceptance.py."""
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            for key, value in getattr(rep, "user_properties", ()):
                if key == "acceptance" and getattr(rep, "when", "call") == "call":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory):
    """Small CIFAR-format synthetic dataset shared by data/trainer/cli tests."""
    from lowmode.data import synthetic_cifar10

    return synthetic_cifar10(tmp_path_factory.mktemp("synthetic"), train_per_class=20, val_per_class=10, seed=0)
