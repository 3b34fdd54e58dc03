"""Unit tests for metrics."""

import math

import numpy as np
import pytest

from mimofas.channel import TrialSeed
from mimofas.coupling import Coupling
from mimofas.errors import DomainError
from mimofas.geometry import SurfaceGeometry
from mimofas.metrics import (
    DmtCurve,
    LinkModel,
    LinkScenario,
    OutageEstimate,
    RateEstimate,
    db_to_linear,
    dmt_antenna_selection,
    dmt_eval,
    dmt_mimo_fas,
    dmt_subset_selection,
    dmt_traditional,
    half_wavelength_count,
    mean_rate,
    optimal_q,
    outage_fixed_rate,
    outage_multiplexing,
    q_outage_capacity,
    q_outage_curve,
    q_outage_gain,
    resolve_scenario,
    sample_rates,
)
from mimofas.selection import Strategy

#: Surface of 10x10 ports on one square wavelength.
SURFACE = SurfaceGeometry(10, 10, 1.0, 1.0)

#: Small surface used by fast simulations.
SMALL = SurfaceGeometry(2, 3, 1.0, 1.0)


def test_unit_conversions() -> None:
    """Test dB conversion and half wavelength counts.

    It must follow the usual definitions.
    """
    assert db_to_linear(30.0) == pytest.approx(1000.0)
    assert db_to_linear(0.0) == 1.0
    assert half_wavelength_count(0.0) == 1
    assert half_wavelength_count(1.0) == 3
    assert half_wavelength_count(1.5) == 4
    assert half_wavelength_count(1.2) == 3


def test_invalid_scenario() -> None:
    """Test scenarios with invalid SNR or port counts.

    It must raise a domain error.
    """
    with pytest.raises(DomainError, match="SNR"):
        LinkScenario(SMALL, SMALL, 1, 1, 0.0)
    with pytest.raises(DomainError, match="exceed"):
        LinkScenario(SMALL, SMALL, 7, 1, 10.0)
    with pytest.raises(DomainError, match="at least 1"):
        LinkScenario(SMALL, SMALL, 0, 1, 10.0)


def test_resolve_traditional_mimo() -> None:
    """Test the traditional MIMO baseline.

    It must use as many fixed antennas as streams over the same aperture.
    """
    scenario = LinkScenario(SURFACE, SURFACE, 4, 6, 10.0, Strategy.MIMO)
    resolved = resolve_scenario(scenario)
    assert resolved.geom_tx == SurfaceGeometry(2, 2, 1.0, 1.0)
    assert resolved.geom_rx == SurfaceGeometry(2, 3, 1.0, 1.0)


def test_resolve_antenna_selection() -> None:
    """Test the antenna selection baseline.

    It must use a half wavelength grid over the aperture.
    """
    geom = SurfaceGeometry(10, 10, 1.2, 1.0)
    scenario = LinkScenario(geom, geom, 4, 4, 10.0, Strategy.MIMO_AS)
    resolved = resolve_scenario(scenario)
    assert resolved.geom_rx == SurfaceGeometry(3, 3, 1.0, 1.0)
    assert resolve_scenario(scenario.with_snr(1.0)).snr == 1.0


def test_link_model_effective_channel() -> None:
    """Test the effective channel of every strategy and coupling.

    It must have the active port shape.
    """
    for strategy in Strategy:
        for coupling in Coupling:
            scenario = LinkScenario(
                SMALL,
                SMALL,
                2,
                2,
                100.0,
                strategy=strategy,
                coupling=coupling,
                separation=0.3,
            )
            model = LinkModel(scenario)
            H = model.effective_channel(TrialSeed(0, 1))
            assert H.shape == (2, 2)
            assert model.trial_rate(TrialSeed(0, 1)) > 0


def test_sample_rates_are_thread_independent() -> None:
    """Test trials run with different numbers of threads.

    It must give exactly the same rates in trial order.
    """
    scenario = LinkScenario(SMALL, SMALL, 2, 2, 100.0)
    single = sample_rates(scenario, 37, 5, threads=1)
    several = sample_rates(scenario, 37, 5, threads=3)
    assert single.shape == (37,)
    np.testing.assert_array_equal(single, several)
    np.testing.assert_array_equal(
        single[:10],
        sample_rates(scenario, 10, 5, threads=2),
    )


def test_sample_rates_without_trials() -> None:
    """Test a simulation without trials.

    It must raise a domain error.
    """
    with pytest.raises(DomainError, match="trial"):
        sample_rates(LinkScenario(SMALL, SMALL, 1, 1, 1.0), 0, 0)


def test_rate_estimate() -> None:
    """Test the summary of known rates.

    It must give their mean and the normal confidence interval.
    """
    estimate = RateEstimate.from_rates(np.array([1.0, 2.0, 3.0, 4.0]))
    assert estimate.mean == 2.5
    assert estimate.trials == 4
    std = np.std([1.0, 2.0, 3.0, 4.0], ddof=1)
    assert estimate.half_width_95 == pytest.approx(1.96 * std / 2)


def test_outage_estimate_is_strict() -> None:
    """Test rates equal to the target.

    They must not be counted as outages.
    """
    estimate = OutageEstimate.from_rates(np.array([1.0, 2.0, 3.0]), 2.0)
    assert estimate.probability == pytest.approx(1 / 3)
    assert not estimate.is_rare
    assert OutageEstimate.from_rates(np.array([1.0]), 0.5).is_rare


@pytest.mark.parametrize("q", [2.0, 3.0, 4.0])
def test_selection_outage_oracle(q) -> None:
    """Test one port selected out of four uncorrelated ports.

    The outage must follow the distribution of the strongest of four
    exponential gains.
    """
    rx = SurfaceGeometry(1, 4, 0.0, 1.5)
    tx = SurfaceGeometry(1, 1)
    snr = 10.0
    scenario = LinkScenario(tx, rx, 1, 1, snr)
    estimate = outage_fixed_rate(scenario, q, 20_000, 17)
    expected = (1 - math.exp(-(2**q - 1) / snr)) ** 4
    assert estimate.probability == pytest.approx(expected, abs=0.015)


def test_mean_rate_ordering() -> None:
    """Test QR selection against random selection at 30 dB.

    It must give a higher mean rate.
    """
    qr = mean_rate(LinkScenario(SURFACE, SURFACE, 4, 4, 1000.0), 2000, 1)
    random = mean_rate(
        LinkScenario(SURFACE, SURFACE, 4, 4, 1000.0, Strategy.RANDOM),
        2000,
        1,
    )
    assert qr.mean - qr.half_width_95 > random.mean + random.half_width_95


def test_outage_ordering_against_traditional_mimo() -> None:
    """Test QR selection against 4x4 MIMO near the QR median rate.

    It must have a lower outage with separated confidence intervals.
    """
    scenario = LinkScenario(SURFACE, SURFACE, 4, 4, 1000.0)
    rates = sample_rates(scenario, 2000, 2)
    q = float(np.median(rates))
    qr = OutageEstimate.from_rates(rates, q)
    mimo = outage_fixed_rate(
        LinkScenario(SURFACE, SURFACE, 4, 4, 1000.0, Strategy.MIMO),
        q,
        2000,
        2,
    )
    assert qr.probability + qr.half_width_95 < (
        mimo.probability - mimo.half_width_95
    )


def test_two_dimensional_surface_outage() -> None:
    """Test a single active port out of 100 as a grid or as a line.

    The grid must not be in outage more often, and strictly less at 20 dB.
    """
    tx = SurfaceGeometry(1, 1)
    grid = SurfaceGeometry(10, 10, 1.0, 1.0)
    line = SurfaceGeometry(100, 1, 1.0, 0.0)
    for snr_db in (0.0, 20.0, 30.0):
        snr = db_to_linear(snr_db)
        on_grid = outage_fixed_rate(
            LinkScenario(tx, grid, 1, 1, snr),
            7.0,
            2000,
            8,
        )
        on_line = outage_fixed_rate(
            LinkScenario(tx, line, 1, 1, snr),
            7.0,
            2000,
            8,
        )
        assert on_grid.probability <= on_line.probability
        if snr_db == 20.0:
            assert on_grid.probability + on_grid.half_width_95 < (
                on_line.probability - on_line.half_width_95
            )


def test_outage_diversity_slope() -> None:
    """Test the outage of one port out of four uncorrelated ports.

    Doubling the SNR at a fixed rate must divide the outage as the
    selection formula does, whose slope tends to -4.
    """
    rx = SurfaceGeometry(1, 4, 0.0, 1.5)
    tx = SurfaceGeometry(1, 1)
    q = math.log2(6.0)

    def expected(snr: float) -> float:
        return (-math.expm1(-(2**q - 1) / snr)) ** 4

    probabilities = []
    for snr in (10.0, 20.0):
        scenario = LinkScenario(tx, rx, 1, 1, snr)
        r = q / math.log2(snr)
        estimate = outage_multiplexing(scenario, r, 40_000, 19)
        probabilities.append(estimate.probability)
    measured = math.log2(probabilities[1] / probabilities[0])
    reference = math.log2(expected(20.0) / expected(10.0))
    assert measured == pytest.approx(reference, abs=0.5)
    asymptotic = math.log2(expected(2e6) / expected(1e6))
    assert asymptotic == pytest.approx(-4.0, abs=0.01)


def test_outage_multiplexing() -> None:
    """Test the outage against a rate scaling with the SNR.

    A null multiplexing gain must never be in outage.
    """
    scenario = LinkScenario(SMALL, SMALL, 2, 2, 100.0)
    assert outage_multiplexing(scenario, 0.0, 50, 3).probability == 0.0
    high = outage_multiplexing(scenario, 2.0, 50, 3)
    assert high.probability == pytest.approx(
        outage_fixed_rate(scenario, 2 * math.log2(100.0), 50, 3).probability,
    )
    with pytest.raises(DomainError, match="nonnegative"):
        outage_multiplexing(scenario, -1.0, 50, 3)


def test_q_outage_capacity() -> None:
    """Test the q-outage capacity and gain.

    It must combine the target rate with the outage probability.
    """
    scenario = LinkScenario(SMALL, SMALL, 2, 2, 100.0)
    outage = outage_fixed_rate(scenario, 8.0, 200, 4)
    capacity = q_outage_capacity(scenario, 8.0, 200, 4)
    assert capacity == pytest.approx(8.0 * (1 - outage.probability))
    assert q_outage_gain(scenario, scenario, 8.0, 200, 4) == 0.0
    with pytest.raises(DomainError, match="nonnegative"):
        q_outage_capacity(scenario, -1.0, 200, 4)


def test_q_outage_gain_against_traditional_mimo() -> None:
    """Test the q-outage gain of QR selection over 4x4 MIMO at 30 dB.

    It must be positive beyond the 95 % confidence intervals.
    """
    fas = LinkScenario(SURFACE, SURFACE, 4, 4, 1000.0)
    mimo = LinkScenario(SURFACE, SURFACE, 4, 4, 1000.0, Strategy.MIMO)
    q = float(np.median(sample_rates(fas, 2000, 2)))
    gain = q_outage_gain(fas, mimo, q, 2000, 2)
    fas_outage = outage_fixed_rate(fas, q, 2000, 2)
    mimo_outage = outage_fixed_rate(mimo, q, 2000, 2)
    margin = q * (fas_outage.half_width_95 + mimo_outage.half_width_95)
    assert gain == pytest.approx(
        q * (mimo_outage.probability - fas_outage.probability),
    )
    assert gain > margin > 0.0


def test_greedy_beats_qr_at_low_snr() -> None:
    """Test 8 active ports out of 100 at -10 dB.

    Greedy selection with a 0.3 wavelength separation must reach a higher
    mean rate than QR selection.
    """
    snr = db_to_linear(-10.0)
    qr = mean_rate(LinkScenario(SURFACE, SURFACE, 8, 8, snr), 300, 41)
    greedy = mean_rate(
        LinkScenario(
            SURFACE,
            SURFACE,
            8,
            8,
            snr,
            Strategy.GREEDY,
            separation=0.3,
        ),
        300,
        41,
    )
    assert greedy.mean > qr.mean


@pytest.mark.parametrize("coupling", [Coupling.LIQUID, Coupling.PIXEL])
def test_coupled_rate_close_to_uncoupled(coupling) -> None:
    """Test QR selection on coupled 3x4 surfaces at 30 dB.

    The mean rate must stay within 10 % of the uncoupled one.
    """
    grid = SurfaceGeometry(3, 4, 1.0, 1.0)
    uncoupled = mean_rate(LinkScenario(grid, grid, 2, 2, 1000.0), 300, 11)
    coupled = mean_rate(
        LinkScenario(grid, grid, 2, 2, 1000.0, coupling=coupling),
        300,
        11,
    )
    assert coupled.mean == pytest.approx(uncoupled.mean, rel=0.1)


def test_q_outage_curve_and_optimum() -> None:
    """Test the q-outage capacity over a grid of target rates.

    It must match point estimates and peak inside the grid.
    """
    scenario = LinkScenario(SMALL, SMALL, 2, 2, 100.0)
    qs = [2.0, 6.0, 10.0, 14.0, 40.0]
    curve = q_outage_curve(scenario, qs, 300, 6)
    assert [q for q, _ in curve] == qs
    assert curve[2][1] == pytest.approx(
        q_outage_capacity(scenario, 10.0, 300, 6),
    )
    best_q, best_capacity = optimal_q(curve)
    assert best_capacity == max(capacity for _, capacity in curve)
    assert curve[-1][1] == 0.0
    assert best_q < 40.0


def test_optimal_q_ties() -> None:
    """Test a curve with two maxima.

    It must keep the smallest target rate.
    """
    assert optimal_q([(1.0, 0.5), (2.0, 1.0), (3.0, 1.0)]) == (2.0, 1.0)
    with pytest.raises(DomainError, match="empty"):
        optimal_q([])


def test_dmt_endpoints() -> None:
    """Test the extreme points of the tradeoff curves.

    It must give the exact diversity gains.
    """
    assert dmt_mimo_fas(23, 23, 4).max_diversity == 529
    assert dmt_antenna_selection(1.0, 1.0, 4).max_diversity == 81
    traditional = dmt_traditional(4, 4)
    assert dmt_eval(traditional, 0.0) == 16
    assert dmt_eval(traditional, 4.0) == 0
    assert dmt_mimo_fas(23, 23, 4).max_multiplexing == 4


def test_dmt_traditional_breakpoints() -> None:
    """Test the traditional tradeoff.

    It must interpolate between integer breakpoints.
    """
    curve = dmt_traditional(4, 4)
    assert curve.breakpoints == (
        (0.0, 16.0),
        (1.0, 9.0),
        (2.0, 4.0),
        (3.0, 1.0),
        (4.0, 0.0),
    )
    assert dmt_eval(curve, 0.5) == pytest.approx(12.5)


def test_dmt_subset_selection_shapes() -> None:
    """Test subset selection with many and with few antennas.

    It must collapse to a line with many antennas and to the traditional
    curve without spare antennas.
    """
    many = dmt_subset_selection(9, 9, 4)
    assert many.breakpoints == ((0.0, 81.0), (4.0, 0.0))
    assert dmt_eval(many, 1.0) == pytest.approx(60.75)
    assert dmt_subset_selection(4, 4, 4) == dmt_traditional(4, 4)


def test_dmt_subset_selection_invalid() -> None:
    """Test more streams than antennas.

    It must raise a domain error.
    """
    with pytest.raises(DomainError, match="Stream count"):
        dmt_subset_selection(3, 5, 4)


def test_dmt_antenna_selection_caps_streams() -> None:
    """Test a point aperture with a single antenna.

    It must cap the streams at the antenna count.
    """
    curve = dmt_antenna_selection(0.0, 0.0, 4)
    assert curve.breakpoints == ((0.0, 1.0), (1.0, 0.0))


def test_dmt_eval_out_of_range() -> None:
    """Test a multiplexing gain beyond the curve.

    It must raise a domain error.
    """
    curve = DmtCurve(((0.0, 4.0), (2.0, 0.0)))
    with pytest.raises(DomainError, match="outside"):
        dmt_eval(curve, 2.5)
