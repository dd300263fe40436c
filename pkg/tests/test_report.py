"""Tests for src.report -- format filters and template rendering."""

import math

import pytest

from src.report import ReportRenderer, format_db, format_hz, format_sci
from src.scenarios import CheckResult, PredictionCase, PredictionReport, SensitivityRow, ValidationReport


# ============================================================================
# Filters
# ============================================================================

class TestFilters:

    @pytest.mark.parametrize("value,expected", [
        (1.26e-5, "1.260e-05"),
        (0.0, "0.000e+00"),
        (None, "n/a"),
        (math.nan, "n/a"),
    ])
    def test_format_sci(self, value, expected):
        assert format_sci(value) == expected

    def test_format_sci_digits(self):
        assert format_sci(1.0 / 3.0, 5) == "3.33333e-01"

    @pytest.mark.parametrize("value,expected", [
        (0.5, "-3.01 dB"),
        (1.0, "0.00 dB"),
        (0.0, "-inf dB"),
        (-1.0, "n/a"),
    ])
    def test_format_db(self, value, expected):
        assert format_db(value) == expected

    @pytest.mark.parametrize("value,expected", [
        (1.7e6, "1.700 MHz"),
        (5.186e9, "5.186 GHz"),
        (-75e3, "-75.000 kHz"),
        (12.0, "12.000 Hz"),
    ])
    def test_format_hz(self, value, expected):
        assert format_hz(value) == expected


# ============================================================================
# Templates
# ============================================================================

class TestRenderer:

    @pytest.fixture(scope="class")
    def renderer(self):
        return ReportRenderer()

    def test_validate_report(self, renderer):
        report = ValidationReport(
            checks=[CheckResult("weights", True, "sum 1"), CheckResult("flux", False, "negative")],
            config_hash="f" * 64,
        )
        text = renderer.render("validate.txt.j2", report=report, source="paper-2017")
        assert "[PASS] weights" in text
        assert "[FAIL] flux" in text
        assert "Some checks FAILED" in text

    def test_predict_report(self, renderer):
        cases = [
            PredictionCase("current", 4.6, 75e3, 1e-6, 0.6772),
            PredictionCase("matched", 4.6, 772e3, 3e-6, 0.0),
            PredictionCase("current", 0.05, 75e3, 2e-6, 0.6772),
            PredictionCase("matched", 0.05, 772e3, 6e-6, 0.0),
        ]
        report = PredictionReport(
            p_mw_dbm=-60.0, cases=cases, boost_warm=3.0, boost_cold=3.0, mk_prediction=6e-6,
            ground_fraction_warm=0.51353, ground_fraction_cold=0.99316, low_power_change=1e-4,
            config_hash="0" * 64,
        )
        text = renderer.render("predict.txt.j2", report=report, sensitivity=[SensitivityRow(0.1, 1.1e-3, 2e-6)])
        assert "772.000 kHz" in text
        assert "3.000 (4.77 dB, warm)" in text
        assert "6.000e-06" in text
        assert "T1_opt sensitivity" in text

    def test_custom_template_dir(self, tmp_path):
        (tmp_path / "hello.txt.j2").write_text("{{ 1.5e6 | hz }}", encoding="utf-8")
        renderer = ReportRenderer(tmp_path)
        assert renderer.render("hello.txt.j2") == "1.500 MHz"
