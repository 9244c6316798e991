import math

import numpy as np
import pytest
from scipy import stats

from fdnoma.analytic import best_channel_cdf, ordered_gain_cdf, outage_analytic
from fdnoma.params import ChannelRealization, PowerAllocation, SystemParams, batch_rng, sample_gains
from fdnoma.simulator import (
    OutageEstimate,
    estimate_outage,
    estimate_throughput,
    instantaneous_rates,
    outage_failures,
    sinr_matrix,
)

# failure counts at the default operating point, 1e7 trials, seed 42
GOLDEN_FD_M9 = (1246265, 1093547, 1090953)


def test_sinr_matrix_by_hand():
    alpha = (0.6, 0.3, 0.1)
    s = sinr_matrix(alpha, 2.0, np.array([1.0, 3.0, 5.0]), 0.5)
    x = 0.5 * 2.0 * 3.0
    assert s[1, 0] == pytest.approx(0.6 * x / (0.4 * x + 1))
    assert s[1, 1] == pytest.approx(0.3 * x / (0.1 * x + 1))
    assert s[2, 2] == pytest.approx(0.1 * 5.0 / 1.0)


def test_relay_failure_fails_everyone():
    p = SystemParams()
    fail = outage_failures(np.array([1e-3]), np.array([[1e3, 1e3, 1e3]]), p)
    assert fail.tolist() == [[True, True, True]]


def test_strong_channels_never_fail():
    p = SystemParams()
    fail = outage_failures(np.array([1e3]), np.array([[1e3, 2e3, 3e3]]), p)
    assert not fail.any()


def test_sic_failure_propagates_downstream():
    # alpha_1/alpha_2 stays below SR1's threshold at any SNR, so x_1 never
    # comes off and SR2 fails with it
    p = SystemParams(alpha=PowerAllocation((0.6, 0.21, 0.19)), target_rates=(0.5, 1.5, 0.5))
    fail = outage_failures(np.array([1e3]), np.array([[1e3, 2e3, 3e3]]), p)
    assert fail.tolist() == [[False, True, True]]


def test_oma_decodes_own_slot_only():
    # alpha_0/(alpha_1+alpha_2) < 2^1 - 1: NOMA cannot separate x_0, OMA does not need to
    p = SystemParams(alpha=PowerAllocation((0.4, 0.3, 0.3)), target_rates=(1.0, 0.5, 0.5))
    gains = np.array([[1e3, 2e3, 3e3]])
    assert outage_failures(np.array([1e3]), gains, p, "fd").all()
    assert not outage_failures(np.array([1e3]), gains, p, "oma").any()


def test_instantaneous_rates():
    p = SystemParams(snr_db=0.0)
    real = ChannelRealization(40.0, (10.0, 20.0, 30.0))
    prof = instantaneous_rates(real, p.alpha, p, "fd")
    assert prof.st_decoded
    x = 0.7513310106347306 * 40.0 * 30.0
    assert prof.r_node[2] == pytest.approx(math.log2(1 + 0.1 * x))
    blocked = instantaneous_rates(ChannelRealization(1e-4, (1.0, 2.0, 3.0)), p.alpha, p, "fd")
    assert not blocked.st_decoded and blocked.r_node == (0.0, 0.0, 0.0)


def test_estimate_validation():
    with pytest.raises(ValueError):
        estimate_outage(SystemParams(), trials=0)


def test_merge_is_associative():
    a, b, c = OutageEstimate(10, (1, 2, 3)), OutageEstimate(5, (0, 1, 1)), OutageEstimate(7, (2, 2, 2))
    assert a.merge(b).merge(c) == a.merge(b.merge(c)) == OutageEstimate(22, (3, 5, 6))
    with pytest.raises(ValueError):
        a.merge(OutageEstimate(1, (0, 0)))


def test_deterministic_and_independent_of_workers():
    p = SystemParams()
    one = estimate_outage(p, "fd", 50_000, 9, batch_size=4096)
    again = estimate_outage(p, "fd", 50_000, 9, batch_size=4096)
    pooled = estimate_outage(p, "fd", 50_000, 9, batch_size=4096, n_jobs=3)
    assert one == again == pooled
    assert estimate_outage(p, "fd", 50_000, 10, batch_size=4096) != one


def test_ci_halfwidth():
    est = OutageEstimate(10_000, (2500,))
    assert est.ci_halfwidth[0] == pytest.approx(1.96 * math.sqrt(0.25 * 0.75 / 10_000))


def test_best_gain_distribution_ks():
    p = SystemParams()
    best, _ = sample_gains(p, batch_rng(3, 0), 200_000)
    cdf = np.vectorize(lambda x: best_channel_cdf(x, p.n_sts, p.n_antennas, p.lambda_ps))
    assert stats.kstest(best, cdf).statistic < 4e-3


def test_ordered_gains_distribution_ks():
    p = SystemParams()
    _, gains = sample_gains(p, batch_rng(4, 0), 200_000)
    for q in range(1, 4):
        cdf = np.vectorize(lambda x, q=q: ordered_gain_cdf(x, q, 3, p.lambda_sr))
        assert stats.kstest(gains[:, q - 1], cdf).statistic < 4e-3


def test_frozen_counts_at_default_point():
    est = estimate_outage(SystemParams(), "fd", 10 ** 7, 42, n_jobs=4)
    assert est.failures == GOLDEN_FD_M9


@pytest.mark.parametrize("mode", ["fd", "hd"])
def test_monte_carlo_matches_closed_form(mode):
    p = SystemParams()
    est = estimate_outage(p, mode, 400_000, 11)
    ana = outage_analytic(p, mode)
    assert np.all(np.abs(ana - est.probability) <= np.maximum(0.02, 0.1 * est.probability))


def test_throughput_from_mc():
    nu_p, nu_s = estimate_throughput(SystemParams(snr_db=10.0), "fd", 100_000, 1)
    assert nu_p == pytest.approx(0.5, abs=0.01)
    assert nu_s == pytest.approx(1.0, abs=0.02)


def test_outage_invariant_to_gain_snr_scaling():
    # only products rho*snr*g*g_i and (1-beta)*snr*g matter: scale lambda_ps up, snr down
    p = SystemParams()
    q = p.replace(lambda_ps=p.lambda_ps * 10.0, snr_db=p.snr_db - 10.0)
    assert np.allclose(outage_analytic(p), outage_analytic(q), rtol=1e-9)
    a = estimate_outage(p, "fd", 100_000, 5)
    b = estimate_outage(q, "fd", 100_000, 5)
    assert np.abs(np.array(a.failures) - np.array(b.failures)).max() <= 2
