import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rawdev.develop import develop_image
from rawdev.paramsample import DevRecipe
from rawdev.rawio import simulate_cfa
from rawdev.synthetic import synthetic_scene

settings.register_profile(
    "repo", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("repo")

ACCEPTANCE_LINES = []


def record_acceptance(line: str):
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def developed():
    """One developed image (DCB, bicubic, denoise + micro-contrast)."""
    rgb = synthetic_scene(768, 1152, seed=11)
    recipe = DevRecipe(demosaic="DCB", resize_kernel="Bicubic", denoise_intensity=30.0,
                       denoise_detail=10, microcontrast_enabled=True, mc_strength=40.0,
                       mc_uniformity=30)
    return develop_image(simulate_cfa(rgb), recipe, "fixture")


@pytest.fixture(scope="session")
def grey_tile(developed):
    return developed.grey.tiles[5]


@pytest.fixture(scope="session")
def colour_tile(developed):
    return developed.colour.tiles[5]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
