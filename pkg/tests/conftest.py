import csv

import numpy as np
import pytest

from phaseformer.model import ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_config():
    # l_in=24 with l_phase=6 gives p_in=4; l_out=6 gives p_out=1.
    return ModelConfig(l_in=24, l_out=6, l_phase=6, embed_dim=4, n_routers=2,
                       n_layers=1, n_heads=1, seed=3)


def write_csv(path, values, channels=None, name_header="date"):
    """Write a (T, C) array as an ETT-style CSV file."""
    values = np.asarray(values)
    channels = channels or [f"ch{i}" for i in range(values.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([name_header, *channels])
        for i, row in enumerate(values):
            writer.writerow([f"2016-01-01 {i:05d}", *[repr(float(v)) for v in row]])
    return path


@pytest.fixture
def csv_writer():
    return write_csv
