"""Shared pytest fixtures for paeekit tests."""
import shutil
import tempfile
from pathlib import Path
from typing import Generator, List

import numpy as np
import pytest

from paeekit.config import GeneratorConfig
from paeekit.data import Dataset, load_dataset
from paeekit.pipeline import PreparedSubject, prepare_dataset
from paeekit.synthgen import generate_dataset


# ============================================================================
# PYTEST CONFIGURATION
# ============================================================================


def pytest_configure(config):
    """Configure custom markers."""
    config.addinivalue_line("markers", "unit: Fast unit tests")
    config.addinivalue_line("markers", "integration: Full preprocessing and evaluation chain")
    config.addinivalue_line("markers", "e2e: Command-line tests over generated datasets")
    config.addinivalue_line("markers", "slow: Tests that take >10 seconds")


def pytest_collection_modifyitems(config, items):
    """Auto-mark tests based on path."""
    for item in items:
        rel_path = str(item.fspath)

        if "/unit/" in rel_path:
            item.add_marker(pytest.mark.unit)
        elif "/integration/" in rel_path:
            item.add_marker(pytest.mark.integration)
        elif "/e2e/" in rel_path:
            item.add_marker(pytest.mark.e2e)


# ============================================================================
# DIRECTORY FIXTURES
# ============================================================================


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create a temporary directory for test isolation."""
    temp_path = Path(tempfile.mkdtemp(prefix="paeekit_test_"))
    yield temp_path
    shutil.rmtree(temp_path, ignore_errors=True)


@pytest.fixture
def project_root() -> Path:
    """Get the project root directory."""
    return Path(__file__).parent.parent


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


# ============================================================================
# SYNTHETIC DATA FIXTURES
# ============================================================================


@pytest.fixture(scope="session")
def small_generator_config() -> GeneratorConfig:
    """Three subjects with shortened activities, enough for every LOSO code path."""
    return GeneratorConfig(n_subjects=3, seed=7, duration_scale=0.2)


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory, small_generator_config: GeneratorConfig) -> Path:
    root = tmp_path_factory.mktemp("synthetic")
    generate_dataset(small_generator_config, root)
    return root


@pytest.fixture(scope="session")
def synthetic_dataset(synthetic_root: Path) -> Dataset:
    return load_dataset(synthetic_root)


@pytest.fixture(scope="session")
def prepared_subjects(synthetic_dataset: Dataset) -> List[PreparedSubject]:
    return prepare_dataset(synthetic_dataset)
