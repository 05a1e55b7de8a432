import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from microgrid_dobc.metrics import COLUMNS, PerformanceReport, compute_indices, render_report, settling_time


def decay(dt=1e-3, horizon=20.0, a=1.0):
    t = np.arange(0, horizon + dt / 2, dt)
    return t, np.exp(-a * t)


class TestIndices:
    def test_exponential_oracle(self):
        _, e = decay()
        r = compute_indices(e, 1e-3)
        assert r.ise == pytest.approx(0.5, abs=1e-3)
        assert r.itse == pytest.approx(0.25, abs=1e-3)
        assert r.iae == pytest.approx(1.0, abs=1e-3)
        assert r.itae == pytest.approx(1.0, abs=1e-3)
        assert r.settling_time == pytest.approx(math.log(20), abs=1e-3)
        assert r.settled

    def test_time_weighting_starts_at_onset(self):
        dt = 1e-3
        _, e = decay(dt)
        shifted = np.concatenate([np.zeros(2000), e])
        a, b = compute_indices(e, dt), compute_indices(shifted, dt, t0=2.0)
        assert b.itae == pytest.approx(a.itae, rel=1e-12)
        assert b.settling_time == pytest.approx(a.settling_time)

    @given(st.floats(0.2, 5.0), st.floats(0.1, 3.0))
    def test_scaling_laws(self, a, k):
        # e = k exp(-a t): ISE k^2/2a, IAE k/a, ITAE k/a^2
        dt = 1e-3
        _, e = decay(dt, horizon=40.0 / a, a=a)
        r = compute_indices(k * e, dt)
        assert r.ise == pytest.approx(k * k / (2 * a), rel=2e-3)
        assert r.iae == pytest.approx(k / a, rel=2e-3)
        assert r.itae == pytest.approx(k / a**2, rel=2e-3)

    def test_peak_from_response(self):
        r = compute_indices(np.array([1.0, -0.2, 0.0]), 0.1, response=np.array([0.0, 1.2, 1.0]))
        assert r.max_overshoot == 1.2

    def test_peak_abs_error(self):
        assert compute_indices(np.array([0.0, -0.7, 0.1]), 0.1).max_overshoot == 0.7

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compute_indices(np.array([]), 0.1)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            compute_indices(np.ones(3), 0.0)


class TestSettling:
    def test_never_leaves_band(self):
        assert settling_time(np.ones(10), 1.0, 0.05, 0.1, scale=1.0) == (0.0, True)

    def test_unsettled_reports_horizon(self):
        y = np.sin(np.arange(100) * 0.3)
        ts, ok = settling_time(y, 0.0, 0.05, 0.01)
        assert not ok and ts == pytest.approx(0.99)

    def test_regulation_uses_peak(self):
        # excursion away from zero and back; starts exactly at the final value
        t = np.arange(0, 10, 1e-3)
        y = t * np.exp(-t)
        ts, ok = settling_time(y, 0.0, 0.05, 1e-3)
        assert ok
        assert y[int(ts / 1e-3)] <= 0.05 * np.exp(-1) + 1e-12

    def test_noise_at_onset_does_not_shrink_band(self):
        t = np.arange(0, 10, 1e-3)
        y = t * np.exp(-t) + 1e-4
        ts, ok = settling_time(y, 0.0, 0.05, 1e-3)
        assert ok and ts < 6

    def test_bad_band(self):
        with pytest.raises(ValueError):
            settling_time(np.ones(3), 1.0, 0.0, 0.1)

    def test_t0_past_end(self):
        with pytest.raises(ValueError):
            settling_time(np.ones(3), 1.0, 0.05, 0.1, t0=1.0)


class TestRender:
    def report(self):
        return PerformanceReport(0.1, 0.2, 0.3, 0.4, 1.05, 2.5)

    def test_csv_columns_fixed(self):
        _, csv = render_report({"pid": self.report(), "dobc": self.report()})
        lines = csv.splitlines()
        assert lines[0] == "controller," + ",".join(COLUMNS) + ",settled"
        assert lines[1].startswith("pid,0.1,0.2,0.3,0.4,1.05,2.5")
        assert "\r" not in csv

    def test_text_marks_unsettled(self):
        r = PerformanceReport(0.1, 0.2, 0.3, 0.4, 1.05, 40.0, settled=False)
        text, _ = render_report({"x": r}, title="case")
        assert "not settled" in text and text.startswith("case")
