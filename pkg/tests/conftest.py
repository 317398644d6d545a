import numpy as np
import pytest

from bendersplan.instance import GENERATION, STORAGE, ProblemInstance, Scenario, Technology


def shifting_storage_instance(solar_cost=10.0, power_cost=1.0, energy_cost=1.0, lol=1000.0):
    """Two hours, demand 1 in each, solar only in the first hour plus one storage.

    Building 2 MW solar, 1 MW storage power and 1 MWh energy serves both hours,
    costing 2*solar_cost + power_cost + energy_cost (22 with the defaults).
    """
    y = 2030
    solar = Technology("solar", GENERATION, {y: solar_cost}, variable_cost={(y, "s0"): 0.0})
    store = Technology("battery", STORAGE, {y: power_cost}, invest_cost_energy={y: energy_cost},
                       energy_power_ratio_bounds=(1.0, 1000.0))
    scen = Scenario("s0", 1.0, {y: np.array([1.0, 1.0])}, {(y, "solar"): np.array([1.0, 0.0])})
    return ProblemInstance([y], {y: {y}}, [solar, store], [scen], 2, lol)


@pytest.fixture
def storage_instance():
    return shifting_storage_instance()


ACCEPTANCE_REPORT: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_REPORT, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
