import os
from pathlib import Path

import numpy as np
import pytest

from dcembed.dataset import ChoiceDataset, SplitSpec, filter_and_derive, load_raw, split
from dcembed.encoders import CategoryMap

from synthdata import write_synthetic_swissmetro


def toy_dataset(cats, choice=None, avail=None, features=None):
    """Hand-built three-alternative ChoiceDataset for unit tests."""
    cats = {k: np.array([str(x) for x in v], dtype=object) for k, v in cats.items()}
    n = len(next(iter(cats.values())))
    if choice is None:
        choice = np.zeros(n, dtype=np.int64)
    if avail is None:
        avail = np.ones((n, 3), dtype=bool)
    return ChoiceDataset(
        features={k: np.asarray(v, dtype=np.float64) for k, v in (features or {}).items()},
        cats=cats,
        choice=np.asarray(choice, dtype=np.int64),
        avail=np.asarray(avail, dtype=bool),
        obs_id=np.arange(n, dtype=np.int64),
        resp_id=np.arange(n, dtype=np.int64),
        category_maps={k: CategoryMap.from_values(k, v) for k, v in cats.items()},
    )

REAL_DATA = Path(
    os.environ.get("SWISSMETRO_DAT", Path(__file__).resolve().parent.parent / "data" / "swissmetro.dat")
)

requires_swissmetro = pytest.mark.skipif(
    not REAL_DATA.exists(),
    reason="real swissmetro.dat not available; place it at data/swissmetro.dat "
    "or point SWISSMETRO_DAT at it",
)


@pytest.fixture(scope="session")
def synth_file(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("synth") / "synthetic.dat"
    return write_synthetic_swissmetro(path, n_rows=1800, seed=123)


@pytest.fixture(scope="session")
def synth_data(synth_file):
    return filter_and_derive(load_raw(synth_file))


@pytest.fixture(scope="session")
def synth_splits(synth_data):
    return split(synth_data, SplitSpec((0.6, 0.2, 0.2), seed=7))


@pytest.fixture(scope="session")
def real_data():
    if not REAL_DATA.exists():
        pytest.skip("real swissmetro.dat not available")
    return filter_and_derive(load_raw(REAL_DATA))
