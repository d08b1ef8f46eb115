import sys

import numpy as np
import pytest

from ccdispatch import model, scenario


@pytest.fixture(scope="session")
def paper_doc():
    return model.load_yaml(model.preset_path("paper_case"))


@pytest.fixture(scope="session")
def paper_cfg(paper_doc):
    return model.config_from_dict(paper_doc["microgrid"])


@pytest.fixture(scope="session")
def paper_wind(paper_doc):
    w = paper_doc["wind"]
    wecs = scenario.WecsParams(**w["wecs"])
    corr = scenario.CorrelationSpec(np.array(w["spatial"]), np.array(w["temporal"]))
    return wecs, corr


def small_cfg(base_load=(30.0, 34.0), spin=0.0):
    """Two generators, one flexible load, no storage."""
    gens = [model.GeneratorParams(5, 25, 12, 12, 0.02, 0.6),
            model.GeneratorParams(0, 20, 20, 20, 0.05, 0.3)]
    loads = [model.LoadParams(2, 10, -0.01, 0.5)]
    return model.MicrogridConfig(len(base_load), gens, loads, [], list(base_load), spin)


def sset_from(rows, cap=None):
    rows = np.asarray(rows, dtype=float)
    cap = float(rows.max()) if cap is None else cap
    return scenario.ScenarioSet(rows, meta={"capacity": max(cap, 0.0)})


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
