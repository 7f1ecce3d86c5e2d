import numpy as np
import pandas as pd
import pytest

from hho_afem.fem import settings


@pytest.fixture(scope="function")
def rng():
    return np.random.default_rng(2024)


@pytest.fixture(scope="function")
def sample_history():
    ndof = np.array([10.0, 40.0, 160.0, 640.0, 2560.0])
    energy = -1.0
    history = pd.DataFrame({column: np.nan for column in settings.CSV_COLUMNS}, index=range(5))
    history["level"] = np.arange(5)
    history["ndof"] = ndof
    history["Eh"] = energy + 0.5 * 0.5 ** np.arange(5)
    history["LEB"] = energy - ndof**-0.5
    history["RHS"] = 3.0 * ndof**-1.0
    history["gap"] = ndof**-1.5
    history["eta_sum"] = 2.0 * ndof**-1.0
    return history
