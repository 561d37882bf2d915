import numpy as np
import pytest

from app.services.ingest import write_prices
from app.services.models import TvAr1Params
from app.services.simulation import prices_from_returns, simulate_tvar1

TRUE_TVAR1 = TvAr1Params(sigma_w2=0.0004, sigma_eps2=0.00284, beta1_0=0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def simulated_returns():
    """300 returns from the random-walk AR(1) at its reference parameters."""
    returns, _ = simulate_tvar1(TRUE_TVAR1, 300, seed=3)
    return returns


@pytest.fixture
def write_csv(tmp_path):
    """Write ``rows`` of (date, close) under a header and return the path."""
    def _write(rows, name="prices.csv", header="date,close"):
        path = tmp_path / name
        body = "".join(f"{date},{close}\n" for date, close in rows)
        path.write_text(f"{header}\n{body}", encoding="utf-8")
        return path
    return _write


@pytest.fixture
def price_file(tmp_path, simulated_returns):
    path = tmp_path / "simulated.csv"
    write_prices(prices_from_returns(simulated_returns), path)
    return path
