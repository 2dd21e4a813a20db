import numpy as np
import pytest

from flutterlife.derivatives import TheodorsenDerivatives
from flutterlife.flutter import BridgeModel
from flutterlife.ingest import scaled_fft
from flutterlife.synth import SyntheticModeSpec, simulate_modal_response

PHI2 = np.array([1.0, 0.6]) / np.linalg.norm([1.0, 0.6])


@pytest.fixture(scope="session")
def flat_plate():
    return TheodorsenDerivatives()


@pytest.fixture(scope="session")
def bridge():
    # Xihoumen-like deck: 36 m wide, 1650 m main span
    return BridgeModel(B=36.0, span=1650.0, m0=27000.0, I0=3.0e6)


def synthetic_fft(seed, f=0.095, zeta=0.005, S=1e-6, sigma2=1e-8, duration=3600.0, fs=50.0,
                  phi=PHI2):
    mode = SyntheticModeSpec(f, zeta, phi, S)
    return scaled_fft(simulate_modal_response([mode], sigma2, duration, fs, seed))


@pytest.fixture(scope="session")
def single_mode_fft():
    return synthetic_fft(seed=7)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one acceptance verdict: ``acceptance(n, passed, detail, seconds)``."""
    def record(n, passed, detail, seconds):
        _ACCEPTANCE[n] = (passed, detail, seconds)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        passed, detail, seconds = _ACCEPTANCE[n]
        terminalreporter.write_line(
            f"ACCEPTANCE {n} {'PASS' if passed else 'FAIL'} {detail} runtime={seconds:.2f}s")
