import numpy as np
import pytest

from core.exceptions import DivergenceError
from core.sweep_utils import SweepMonitor, map_charts, relative_increment


def test_map_charts_keeps_chart_order():
    def work(index):
        return index * index

    assert map_charts(work, list(range(12)), threads=4) == [i * i for i in range(12)]
    assert map_charts(work, [3], threads=8) == [9]


def test_relative_increment():
    new = np.array([3.0, 4.0])
    assert relative_increment(new, new) == 0.0
    assert relative_increment(new, np.zeros(2)) == pytest.approx(1.0)
    assert relative_increment(np.zeros(2), np.array([1.0, 0.0])) == pytest.approx(1.0)


def test_first_sweep_is_never_accepted():
    monitor = SweepMonitor(tol=1e-6, max_iter=10, label="test")
    assert not monitor.record(1, 0.0, {}, charts=1)
    assert monitor.record(2, 0.0, {}, charts=1)
    assert monitor.accepted_sweeps == 1


def test_contracting_sweeps_record_factors():
    monitor = SweepMonitor(tol=1e-6, max_iter=20, label="test")
    increment, sweep = 1.0, 1
    while not monitor.record(sweep, increment, {"divergence": 1e-9}, charts=4):
        increment *= 0.1
        sweep += 1
    assert monitor.contraction == pytest.approx(0.1)
    assert monitor.history[0].contraction is None
    assert monitor.history[-1].divergence_residual == 1e-9
    assert monitor.accepted_sweeps == len(monitor.history) - 1


def test_three_growing_sweeps_raise():
    monitor = SweepMonitor(tol=1e-6, max_iter=20, label="test", delta=0.7)
    monitor.record(1, 1.0, {}, charts=2)
    monitor.record(2, 2.0, {}, charts=2)
    monitor.record(3, 4.0, {}, charts=2)
    with pytest.raises(DivergenceError) as excinfo:
        monitor.record(4, 8.0, {}, charts=2)
    assert excinfo.value.factor == pytest.approx(2.0)
    assert excinfo.value.delta == 0.7


def test_a_contracting_sweep_resets_the_count():
    monitor = SweepMonitor(tol=1e-9, max_iter=20, label="test")
    for sweep, increment in enumerate([1.0, 2.0, 4.0, 1.0, 2.0, 4.0], start=1):
        assert not monitor.record(sweep, increment, {}, charts=1)


def test_settled_increments_with_a_large_residual_stall():
    monitor = SweepMonitor(tol=1e-6, max_iter=10, label="test", residual_tol=1e-4)
    monitor.record(1, 1.0, {"momentum": 0.3, "divergence": 1e-9}, charts=2)
    assert monitor.record(2, 1e-9, {"momentum": 0.3, "divergence": 1e-9}, charts=2)
    assert monitor.stalled
    assert monitor.history[-1].momentum_residual == 0.3


def test_settled_increments_with_small_residuals_converge():
    monitor = SweepMonitor(tol=1e-6, max_iter=10, label="test", residual_tol=1e-4)
    monitor.record(1, 1.0, {"momentum": 1e-7}, charts=2)
    assert monitor.record(2, 1e-9, {"momentum": 1e-7}, charts=2)
    assert not monitor.stalled
