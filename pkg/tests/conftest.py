import numpy as np
import pytest


def bootstrap_se(values, statistic, seed, replicates=200):
    """Standard error of a statistic by nonparametric bootstrap."""
    rng = np.random.default_rng(seed)
    values = np.asarray(values)
    out = np.empty(replicates)
    for i in range(replicates):
        out[i] = statistic(values[rng.integers(0, values.size, values.size)])
    return float(np.std(out, ddof=1))


@pytest.fixture
def price_csv(tmp_path):
    """Write ticker/date/price rows to a temp CSV and return its path."""

    def _write(rows, name="prices.csv", header="ticker,date,adj_close"):
        path = tmp_path / name
        lines = [header] + [",".join(str(part) for part in row) for row in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _write
