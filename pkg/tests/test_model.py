import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rld.model import (
    CostModel,
    ForecastErrorCurve,
    ForecastModel,
    MarketLadder,
    ParseError,
    ValidationError,
    load_curve,
    load_scenario,
    scenario_from_dict,
    stage_error_variance,
    validate_ladder,
)
from conftest import DEFAULT_CURVE, make_scenario


def ladder_of(prices, leads=None, directions=None):
    n = len(prices)
    leads = leads or [24.0 / (i + 1) for i in range(n)]
    directions = directions or ["buy"] * n
    return MarketLadder.from_rows(zip(leads, prices, directions))


class TestValidateLadder:
    def test_vi_prices_ok(self):
        lad = ladder_of([52.0, 60.0, 72.0], leads=[24.0, 1.0, 0.25])
        assert validate_ladder(lad, CostModel(1000.0)) == []

    def test_decreasing_buy_prices_flagged(self):
        lad = ladder_of([60.0, 52.0], leads=[24.0, 1.0])
        violations = validate_ladder(lad)
        assert any("buy prices must increase" in v for v in violations)

    def test_buy_then_cheaper_sell_is_arbitrage_free(self):
        lad = MarketLadder.from_rows([(24.0, 52.0, "buy"), (1.0, 60.0, "sell")])
        violations = validate_ladder(lad)
        assert any("no-arbitrage" in v for v in violations)

    def test_sell_prices_must_decrease(self):
        lad = MarketLadder.from_rows([(24.0, 80.0, "sell"), (1.0, 90.0, "sell")])
        assert any("sell prices" in v for v in validate_ladder(lad))

    def test_lead_times_must_decrease(self):
        lad = ladder_of([52.0, 60.0], leads=[1.0, 24.0])
        assert any("lead times" in v for v in validate_ladder(lad))

    def test_voll_must_exceed_ladder(self):
        lad = ladder_of([52.0, 60.0], leads=[24.0, 1.0])
        assert any("voll" in v for v in validate_ladder(lad, CostModel(60.0)))
        assert validate_ladder(lad, CostModel(61.0)) == []

    def test_empty_ladder_rejected(self):
        with pytest.raises(ValueError):
            validate_ladder(MarketLadder(()))

    @given(st.lists(st.floats(1.0, 500.0), min_size=2, max_size=6, unique=True))
    @settings(max_examples=60, deadline=None)
    def test_ok_iff_strictly_increasing(self, prices):
        lad = ladder_of(prices, leads=[100.0 - i for i in range(len(prices))])
        ok = validate_ladder(lad) == []
        assert ok == all(a < b for a, b in zip(prices, prices[1:]))


class TestCurve:
    def test_interpolation_linear_in_variance(self):
        curve = ForecastErrorCurve.from_table([[10.0, 0.2], [2.0, 0.1]])
        mid = curve.variance_at(6.0)
        assert mid == pytest.approx(0.5 * (0.2**2 + 0.1**2), rel=1e-12)
        # interpolating the std directly would give a different number
        assert mid != pytest.approx(((0.2 + 0.1) / 2) ** 2, rel=1e-3)

    def test_outside_range_raises(self):
        curve = ForecastErrorCurve.from_table([[10.0, 0.2], [2.0, 0.1]])
        with pytest.raises(ValueError):
            curve.sigma_at(11.0)
        with pytest.raises(ValueError):
            curve.sigma_at(1.0)

    def test_monotonicity_enforced(self):
        with pytest.raises(ValidationError):
            ForecastErrorCurve.from_table([[10.0, 0.1], [2.0, 0.2]])
        with pytest.raises(ValidationError):
            ForecastErrorCurve.from_table([[2.0, 0.2], [10.0, 0.1]])


class TestStageErrorVariance:
    def test_difference_of_squares(self):
        curve = ForecastErrorCurve.from_table([[24.0, 0.2], [1.0, 0.15]])
        lad = ladder_of([52.0, 60.0], leads=[24.0, 1.0])
        assert stage_error_variance(curve, 2, lad) == pytest.approx(0.0175, abs=1e-12)

    def test_no_information_gain_is_zero(self):
        curve = ForecastErrorCurve.from_table([[24.0, 0.2], [1.0, 0.2]])
        lad = ladder_of([52.0, 60.0], leads=[24.0, 1.0])
        assert stage_error_variance(curve, 2, lad) == 0.0

    def test_stage_one_uses_curve_start(self):
        curve = ForecastErrorCurve.from_table([[30.0, 0.25], [24.0, 0.2], [1.0, 0.1]])
        lad = ladder_of([52.0, 60.0], leads=[24.0, 1.0])
        assert stage_error_variance(curve, 1, lad) == pytest.approx(0.25**2 - 0.2**2)

    def test_telescoping_sum(self):
        curve = ForecastErrorCurve.from_table(DEFAULT_CURVE)
        lad = ladder_of([52.0, 60.0, 72.0], leads=[24.0, 1.0, 0.25])
        total = sum(stage_error_variance(curve, r, lad) for r in (1, 2, 3))
        expect = curve.variance_at(curve.max_horizon) - curve.variance_at(0.25)
        assert total == pytest.approx(expect, abs=1e-15)

    def test_delivery_split_uses_mean_share(self):
        scn = make_scenario(mean_share=0.2)
        sigma_final = scn.curve.sigma_at(0.25)
        assert scn.delivery_fluctuation_variance == pytest.approx(0.8 * sigma_final**2)
        stds = scn.inter_stage_stds()
        assert stds[-1] == pytest.approx(np.sqrt(0.2) * sigma_final)


class TestScenarioLoading:
    def test_shipped_scenario(self):
        from importlib import resources

        path = resources.files("rld").joinpath("data/vi_scenario.json")
        scn = load_scenario(str(path))
        assert scn.ladder.n_stages == 3
        assert scn.T == 60
        assert scn.d_total == pytest.approx(0.4)
        assert scn.cost.voll == 1000.0
        assert scn.mean_share == 0.2

    def test_negative_capacity_rejected(self):
        with pytest.raises(ValidationError):
            make_scenario(B=-0.5)

    def test_missing_sigma_column(self, tmp_path):
        curve = tmp_path / "curve.csv"
        curve.write_text("horizon_hours,stddev\n24,0.2\n1,0.1\n")
        with pytest.raises(ParseError):
            load_curve(curve)

    def test_bad_json(self, tmp_path):
        f = tmp_path / "scn.json"
        f.write_text("{not json")
        with pytest.raises(ParseError):
            load_scenario(f)

    def test_missing_field_path_in_error(self):
        with pytest.raises(ParseError, match="voll"):
            scenario_from_dict({"ladder": [{"lead_time_hours": 24, "price": 52}]})

    def test_d_hat_array_roundtrip(self):
        doc = {
            "ladder": [{"lead_time_hours": 24.0, "price": 52.0, "direction": "buy"},
                       {"lead_time_hours": 0.25, "price": 72.0, "direction": "buy"}],
            "voll": 500.0,
            "storage": {"B": 0.001},
            "T": 3,
            "d_hat": [0.1, 0.2, 0.3],
            "curve": DEFAULT_CURVE,
        }
        scn = scenario_from_dict(doc)
        assert np.allclose(scn.d_hat_stage, [0.1, 0.2, 0.3])
        assert scn.d_total == pytest.approx(0.6)
        with pytest.raises(ValidationError):
            scenario_from_dict({**doc, "d_hat": [0.1, 0.2]})

    def test_scalar_d_hat_spread_per_stage(self):
        scn = make_scenario(T=10, d=0.5)
        assert np.allclose(scn.d_hat_stage, 0.05)

    def test_mean_share_bounds(self):
        with pytest.raises(ValidationError):
            make_scenario(mean_share=1.5)

    def test_lead_time_outside_curve_rejected(self):
        with pytest.raises(ValidationError, match="curve range"):
            make_scenario(leads=(48.0, 1.0, 0.25))

    def test_price_inversion_rejected(self):
        with pytest.raises(ValidationError):
            make_scenario(prices=(72.0, 60.0, 52.0))

    def test_arrays_immutable(self):
        scn = make_scenario(T=4)
        with pytest.raises(ValueError):
            scn.d_hat_stage[0] = 99.0
        fc = scn.delivery_forecast()
        with pytest.raises(ValueError):
            fc.sigma[0] = 1.0


class TestForecastModel:
    def test_constant_profile_flag(self):
        assert ForecastModel.constant(4, 0.1, 0.2).constant_profile
        varied = ForecastModel(3, np.array([0.1, 0.2, 0.1]), np.full(3, 0.2))
        assert not varied.constant_profile

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValidationError):
            ForecastModel(2, np.zeros(2), np.array([0.1, -0.1]))
