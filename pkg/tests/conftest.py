"""
Pytest Configuration
Provides seeded generators, temporary directories, small shared meshes and
isolated Settings for every test.
"""

import asyncio
import os
import tempfile
from pathlib import Path
from typing import Generator

import numpy as np
import pytest

from backend.config import reset_settings
from helmdd.fem import FemSpace
from helmdd.mesh import RectMesh, build_uniform_rect_mesh

# Set deterministic seed for all tests
RNG_SEED = int(os.getenv("RNG_SEED", "1337"))


@pytest.fixture
def rng() -> np.random.Generator:
    """Fresh seeded generator per test."""
    return np.random.default_rng(RNG_SEED)


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> Generator[None, None, None]:
    """Keep logs out of the repo and re-read HELMDD_* for every test."""
    monkeypatch.setenv("HELMDD_LOG_DIR", str(tmp_path / "logs"))
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def unit_mesh() -> RectMesh:
    """Unit square, h = 1/8."""
    return build_uniform_rect_mesh(1.0, 1.0, 0.125)


@pytest.fixture
def unit_space(unit_mesh: RectMesh) -> FemSpace:
    return FemSpace(unit_mesh)


@pytest.fixture
def strip_space() -> FemSpace:
    """[0, 4] x [0, 1] with the interface lines of two strips at r = 1/4 (delta = 1)."""
    mesh = build_uniform_rect_mesh(4.0, 1.0, 0.125, [1.5, 2.5])
    return FemSpace(mesh)


# Pytest configuration
def pytest_configure(config: pytest.Config) -> None:
    """Configure pytest with deterministic settings."""
    # Add custom markers
    config.addinivalue_line("markers", "slow: marks tests as slow (acceptance reproductions)")
    config.addinivalue_line("markers", "integration: marks tests as integration tests")
    config.addinivalue_line("markers", "deterministic: marks tests as deterministic")


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    """Modify test collection to add markers."""
    for item in items:
        function = getattr(item, "function", None)
        # Mark async tests
        if function is not None and asyncio.iscoroutinefunction(function):
            item.add_marker(pytest.mark.asyncio)

        # Mark deterministic tests
        if "deterministic" in item.name:
            item.add_marker(pytest.mark.deterministic)
