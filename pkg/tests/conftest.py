import copy
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = REPO_ROOT / "scenarios"


@pytest.fixture
def scenarios_dir():
    return SCENARIOS


def minimal_doc():
    return {
        "duration_ms": 1000,
        "clients": [
            {"id": 0, "entities": [
                {"id": 0, "motion": {"kind": "constant_velocity",
                                     "pos": [0, 0], "vel": [0, 0]}}]}],
    }


def two_client_doc(**overrides):
    """A small two-client template the runner tests specialize."""
    doc = {
        "duration_ms": 5000,
        "tick_ms": 50,
        "seed": 11,
        "clients": [
            {"id": 0, "entities": [
                {"id": 0, "class": "car",
                 "motion": {"kind": "constant_velocity",
                            "pos": [0, 0], "vel": [10, 0]}}]},
            {"id": 1, "entities": [
                {"id": 1, "class": "car",
                 "motion": {"kind": "constant_velocity",
                            "pos": [50, 20], "vel": [0, 0]}}]},
        ],
        "links": [{"id": 0, "endpoints": [0, 1], "base_delay_ms": 250}],
        "policies": {
            "default": {"threshold_m": 0.5, "convergence_ms": 0, "lag_ms": 0},
        },
        "toggles": {},
    }
    doc.update(copy.deepcopy(overrides))
    return doc
