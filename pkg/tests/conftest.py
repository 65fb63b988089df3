from __future__ import annotations

import time

import numpy as np
import pytest

from couette_ep import FrequencyGrid, PlasmaParams, compute_series, make_initial, propagate_grid
from couette_ep.fields import resolved_n_xi

#: criterion number -> (passed, message), filled by test_acceptance
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}

DEFAULT_T_MAX = 200.0
DEFAULT_OUTPUTS = 401


class RunCache:
    """Lazily built default-data runs shared across test modules."""

    def __init__(self):
        self._store = {}
        self.build_seconds = {}

    def get(self, species: str, refine: int = 1, n_outputs: int = DEFAULT_OUTPUTS, t_max: float = DEFAULT_T_MAX,
            keep_propagator: bool = True):
        """Default Gaussian run on the auto-resolved grid with spacing divided by ``refine``."""
        key = (species, refine, n_outputs, t_max)
        if key not in self._store or (keep_propagator and self._store[key][2] is None):
            start = time.perf_counter()
            params = PlasmaParams.all_ones(species)
            n_xi = (resolved_n_xi(-32.0, 32.0, t_max, params) - 1) * refine + 1
            grid = FrequencyGrid(n_xi=n_xi)
            spec = make_initial(grid, "gaussian_bump")
            prop = propagate_grid(grid, params, np.linspace(0.0, t_max, n_outputs))
            series = compute_series(spec, prop)
            self._store[key] = (params, spec, prop if keep_propagator else None, series)
            self.build_seconds[key] = time.perf_counter() - start
        return self._store[key]


@pytest.fixture(scope="session")
def runs():
    return RunCache()


@pytest.fixture(params=["ion", "electron"])
def species(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        ok, message = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {message}")
