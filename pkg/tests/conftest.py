import numpy as np
import pytest

from noir.mi import csp_features, fit_csp, fit_qda
from noir.signal import select_channels
from noir.synth import MiProfile, gen_calibration_session


@pytest.fixture(scope="session")
def mi_session():
    """One 4-class calibration session at +6 dB, motor channels only."""
    epochs = gen_calibration_session(MiProfile(modulation_db=6.0), seed=100)
    return [select_channels(e, "motor") for e in epochs]


@pytest.fixture(scope="session")
def mi_models(mi_session):
    csp = fit_csp(mi_session)
    qda = fit_qda(
        [csp_features(csp, e).f for e in mi_session], [e.label for e in mi_session]
    )
    return csp, qda


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)
