import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgrlab.records import (CSV_HEADER, ConvergenceRecord, DivergenceMonitor, IterationTrace,
                            records_from_csv, records_to_csv, relative_l2_error)


class TestRelativeError:
    def test_identical(self):
        assert relative_l2_error([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_doubled(self):
        assert relative_l2_error([2.0, 4.0], [1.0, 2.0]) == pytest.approx(1.0)

    def test_hand_case(self):
        assert relative_l2_error([4.0, 4.0], [3.0, 4.0]) == pytest.approx(0.2, rel=1e-15)

    def test_zero_reference(self):
        with pytest.raises(ValueError):
            relative_l2_error([1.0], [0.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            relative_l2_error([1.0, 2.0], [1.0])


def test_csv_roundtrip(tmp_path):
    recs = [ConvergenceRecord(0, 1.5, 0.25, 0.1, 3.0), ConvergenceRecord(10, 1e-300, 0.0, 0.05)]
    text = records_to_csv(recs, tmp_path / "r.csv")
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    back = records_from_csv(tmp_path / "r.csv")
    assert [(r.iter, r.loss, r.rel_error, r.lr) for r in back] == \
        [(r.iter, r.loss, r.rel_error, r.lr) for r in recs]


class TestTrace:
    def test_steps_strictly_increase(self):
        tr = IterationTrace()
        tr.append(0, 1.0)
        with pytest.raises(ValueError):
            tr.append(0, 0.5)

    def test_first_below(self):
        tr = IterationTrace()
        for k, e in enumerate([1.0, 0.5, 0.05, 0.2, 0.01]):
            tr.append(k, e, e)
        assert tr.first_below(0.1) == 2
        assert tr.first_below(1e-9) is None
        assert tr.iterations == 4


class TestDivergenceMonitor:
    def test_nonfinite(self):
        assert DivergenceMonitor()(math.nan)
        assert DivergenceMonitor()(math.inf)

    def test_growth_over_running_minimum(self):
        mon = DivergenceMonitor()
        assert not any(mon(v) for v in (1.0, 1e-3, 1e2))
        assert mon(1e-3 * 1e6 * 1.01)

    @given(st.lists(st.floats(1e-12, 1e3), min_size=1, max_size=50))
    def test_bounded_sequences_never_flag(self, values):
        mon = DivergenceMonitor()
        lo = min(values)
        flagged = [mon(v) for v in values]
        if max(values) <= 1e6 * lo:
            assert not any(flagged)
