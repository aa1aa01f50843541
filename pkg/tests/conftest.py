import numpy as np
import pytest

from hawkesneuro.core import SpikeDataset


def write_csv(path, rows, header="trial,neuron,time"):
    path.write_text(header + "\n" + "".join(",".join(str(v) for v in r) + "\n" for r in rows))
    return path


@pytest.fixture
def spike_csv(tmp_path):
    def make(rows, name="spikes.csv", header="trial,neuron,time"):
        return write_csv(tmp_path / name, rows, header)

    return make


def dataset(trains, t_max):
    """Build a dataset from nested lists of times."""
    return SpikeDataset(tuple(tuple(np.asarray(t, float) for t in row) for row in trains), t_max)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
