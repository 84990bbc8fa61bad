import pytest

from slabcbs import InteractionParams, LadderConfig, solve_ladder


@pytest.fixture(scope="session")
def small_ladder():
    """Thin slab with interactions, cheap enough for many crossed solves."""
    cfg = LadderConfig(params=InteractionParams(alpha=0.01, beta=0.1), b=4.0, n_cells=40,
                       n_energy=40, e_max=4.0)
    return solve_ladder(cfg)


@pytest.fixture(scope="session")
def linear_ladder():
    cfg = LadderConfig(params=InteractionParams(alpha=0.0, beta=0.0), b=4.0, n_cells=40,
                       n_energy=40, e_max=4.0)
    return solve_ladder(cfg)


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects one line per acceptance criterion for the terminal summary."""
    lines = getattr(request.config, "_acceptance_lines", None)
    if lines is None:
        lines = request.config._acceptance_lines = {}
    return lines


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
