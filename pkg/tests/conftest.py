import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from deepwaste.engine import available_backends, use_backend


@pytest.fixture(params=available_backends())
def kernel_backend(request):
    """Run a test under every available kernel backend."""
    with use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)


@pytest.fixture(scope="session")
def paper_store_root(tmp_path_factory):
    """Corpus with the published class counts (395/427/396), built once."""
    from helpers import build_paper_store

    root = tmp_path_factory.mktemp("paper-dataset")
    build_paper_store(root)
    return root
