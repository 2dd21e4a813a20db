import numpy as np
import pytest

from flutterlife.errors import DomainError
from flutterlife.ingest import scaled_fft
from flutterlife.synth import (CampaignMode, SyntheticModeSpec, modal_psd, simulate_campaign,
                               simulate_modal_response)

PHI = np.array([1.0, 0.0])


def test_input_validation():
    with pytest.raises(DomainError):
        SyntheticModeSpec(0.1, 0.01, np.array([1.0, 1.0]), 1e-6)
    mode = SyntheticModeSpec(0.1, 0.01, PHI, 1e-6)
    with pytest.raises(DomainError, match="20x"):
        simulate_modal_response([mode], 0.0, 3600, 2.0, 0)
    with pytest.raises(DomainError, match="4096"):
        simulate_modal_response([mode], 0.0, 100, 5.0, 0)
    with pytest.raises(DomainError):
        simulate_modal_response([mode], 0.0, 3600, 5.0, 0, substeps=5)


def test_seed_determinism():
    mode = SyntheticModeSpec(0.1, 0.01, PHI, 1e-6)
    a = simulate_modal_response([mode], 1e-8, 1000, 5.0, 11)
    b = simulate_modal_response([mode], 1e-8, 1000, 5.0, 11)
    c = simulate_modal_response([mode], 1e-8, 1000, 5.0, 12)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_noise_only_level():
    # white measurement noise of one-sided PSD sigma2 has variance sigma2 * fs / 2
    mode = SyntheticModeSpec(0.1, 0.01, PHI, 0.0)
    seg = simulate_modal_response([mode], 2e-6, 3600, 10.0, 1)
    assert np.var(seg.samples[:, 0]) == pytest.approx(2e-6 * 10.0 / 2, rel=0.02)
    assert np.var(seg.samples[:, 1]) == pytest.approx(2e-6 * 10.0 / 2, rel=0.02)


def test_averaged_band_power_matches_model():
    # band-integrated power is insensitive to finite-record leakage between bins
    f0, zeta, S, s2 = 0.095, 0.005, 1e-6, 1e-8
    mode = SyntheticModeSpec(f0, zeta, np.array([0.6, 0.8]), S)
    acc = 0.0
    for seed in range(10):
        fft = scaled_fft(simulate_modal_response([mode], s2, 3600, 10.0, seed))
        acc = acc + np.sum(fft.Z**2, axis=1)  # trace of the PSD matrix: S*D + n*sigma2
    acc /= 10
    theory = modal_psd(fft.freqs, f0, zeta, S) + 2 * s2
    for lo, hi, tol in ((0.085, 0.105, 0.08), (0.06, 0.13, 0.08), (0.5, 2.0, 0.02)):
        sel = (fft.freqs >= lo) & (fft.freqs <= hi)
        assert acc[sel].sum() / theory[sel].sum() == pytest.approx(1.0, abs=tol)


def test_modal_psd_resonance():
    assert modal_psd(0.2, 0.2, 0.01, 1.0) == pytest.approx(1 / (4 * 0.01**2))


def test_campaign_structure():
    modes = [CampaignMode(0.095, -1e-4, 0.008, np.array([1.0, 0.5]), 1e-6, 0.001, 0.1),
             CampaignMode(0.237, 0.0, 0.003, np.array([0.3, -1.0]), 1e-6)]
    camp = simulate_campaign(modes, 1e-8, months=3, segments_per_month=2, fs=5.0, seed=4)
    assert len(camp.segments) == 3 * 4
    assert len(camp.winds) == len(camp.segments)
    hours = sorted({s.start_time.hour for s in camp.segments})
    assert hours == [2, 3, 12]
    months = sorted({(s.start_time.year, s.start_time.month) for s in camp.segments})
    assert months == [(2010, 1), (2010, 2), (2010, 3)]
    assert len(camp.truth) == 6
    # zero fluctuation and zero trend -> the torsional truth is constant
    assert {round(r[2], 12) for r in camp.truth if r[1] == 1} == {0.237}
