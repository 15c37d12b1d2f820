import numpy as np
import pytest

from hddrul import dataset as ds


@pytest.fixture(scope="session")
def small_cohort():
    """Five synthetic drives, 30-day lookback, uncapped labels."""
    config = ds.SynthConfig(n_drives=5, lookback_days=30, jump_day=10, seed=101)
    return ds.generate_synthetic(config)


@pytest.fixture(scope="session")
def small_frames(small_cohort):
    capped = [ds.cap_rul(s, 12) for s in small_cohort]
    return ds.materialize_cohort(capped, ds.synthetic_attribute_ids(5))


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
