import json
from pathlib import Path

import pytest

from procforge import parse_inventory, resolve_dynamic_domains, build_template
from procforge.sampling import OracleSpec

REPO = Path(__file__).resolve().parent.parent
BENCHMARK = REPO / "benchmark"

# Canonical action keys and variable ids for the pipette fixture.
DRAW = "transfer_material:ddh2o_bottle->electronic_pipette:ddH2O"
POUR = "transfer_material:electronic_pipette->erlenmeyer_flask:ddH2O"
POWER_ON = "electronic_pipette.power_button.set(value=on)"
POWER_OFF = "electronic_pipette.power_button.set(value=off)"
OPEN_CAP = "ddh2o_bottle.cap.open"
V_POWER = "electronic_pipette.power_button.power"
V_MATERIAL = "electronic_pipette.material"
V_CAP = "ddh2o_bottle.cap.state"
V_FLASK = "erlenmeyer_flask.material"


@pytest.fixture(scope="session")
def pipette_inventory_text():
    return (BENCHMARK / "pipette_inventory.json").read_text()


@pytest.fixture(scope="session")
def pipette_inventory(pipette_inventory_text):
    return resolve_dynamic_domains(parse_inventory(pipette_inventory_text))


@pytest.fixture(scope="session")
def pipette_template(pipette_inventory):
    return build_template(pipette_inventory, "electronic_pipette")


@pytest.fixture(scope="session")
def bottle_template(pipette_inventory):
    return build_template(pipette_inventory, "ddh2o_bottle")


@pytest.fixture(scope="session")
def pipette_oracles():
    doc = json.loads((BENCHMARK / "pipette_oracles.json").read_text())
    return {obj: OracleSpec.from_dict(spec) for obj, spec in doc.items()}


@pytest.fixture(scope="session")
def benchmark_dir():
    return BENCHMARK
