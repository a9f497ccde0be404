import numpy as np
import pytest

from flowsde.flow import (GaussianEndpoint, GaussianMixtureEndpoint, mixture_field, toy_endpoints,
                          two_gaussian_field)


@pytest.fixture
def toy():
    return toy_endpoints()


@pytest.fixture
def toy_field(toy):
    return two_gaussian_field(*toy)


@pytest.fixture
def mixture():
    """0.3 N(-1, 0.3) + 0.7 N(2, 0.5)."""
    return GaussianMixtureEndpoint(((0.3, GaussianEndpoint(-1.0, 0.3)),
                                    (0.7, GaussianEndpoint(2.0, 0.5))))


@pytest.fixture
def std_normal():
    return GaussianEndpoint(0.0, 1.0)


@pytest.fixture
def mix_field(mixture, std_normal):
    return mixture_field(mixture, std_normal)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for the terminal summary."""
    lines = request.config.acceptance_lines

    def record(label, passed, detail):
        lines.append(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in config.acceptance_lines:
            terminalreporter.write_line(line)
