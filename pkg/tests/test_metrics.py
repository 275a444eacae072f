import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmbench.core_types import Pose2D
from mmbench.global_planner import GlobalPath
from mmbench.metrics import (EmptyGlobalPath, InsufficientSamples, TrajectoryLog, distance_travelled,
                             ee_stability, final_accuracy, mean_report, path_divergence,
                             path_smoothness, report, total_time, turn_angles)


def make_log(xy, t=None, ee_exp=None, ee_act=None, path=None, goal=None, success=True):
    xy = np.asarray(xy, dtype=float)
    n = len(xy)
    t = np.arange(n) * 0.1 if t is None else np.asarray(t, dtype=float)
    base = np.column_stack([xy, np.zeros(n)])
    ee_exp = np.zeros((n, 3)) if ee_exp is None else ee_exp
    ee_act = ee_exp if ee_act is None else ee_act
    gp = None if path is None else GlobalPath(np.column_stack([path, np.zeros(len(path))]))
    return TrajectoryLog(t, base, np.zeros((n, 2)), ee_exp, ee_act, gp, goal, success)


# --- independent oracles -------------------------------------------------

def oracle_turn_sum(xy):
    """Turn angles by atan2 differences of non-degenerate segments."""
    total, prev = 0.0, None
    for a, b in zip(xy[:-1], xy[1:]):
        d = b - a
        if math.hypot(*d) <= 1e-9:
            continue
        h = math.atan2(d[1], d[0])
        if prev is not None:
            total += abs(math.remainder(h - prev, 2 * math.pi))
        prev = h
    return total


def oracle_resample(xy, m):
    """Walk the polyline segment by segment to find equally spaced stations."""
    xy = [np.asarray(p, dtype=float) for p in xy]
    lengths = [math.dist(a, b) for a, b in zip(xy[:-1], xy[1:])]
    L = sum(lengths)
    out = []
    for k in range(m):
        target = L * k / (m - 1) if m > 1 else 0.0
        acc = 0.0
        for (a, b), ln in zip(zip(xy[:-1], xy[1:]), lengths):
            if ln > 0 and acc + ln >= target - 1e-15:
                u = min(max((target - acc) / ln, 0.0), 1.0)
                out.append(a + u * (b - a))
                break
            acc += ln
        else:
            out.append(xy[-1])
    return np.array(out)


# --- path smoothness ------------------------------------------------------

def test_smoothness_straight_is_zero():
    assert path_smoothness(make_log([(0, 0), (1, 0), (2, 0), (3, 0)])) == 0.0


def test_smoothness_right_angle():
    assert path_smoothness(make_log([(0, 0), (1, 0), (1, 1)])) == pytest.approx(math.pi / 2, abs=1e-12)


def test_smoothness_skips_idle_samples():
    xy = [(0, 0), (1, 0), (1, 0), (1, 0), (1, 1)]
    assert path_smoothness(make_log(xy)) == pytest.approx(math.pi / 2, abs=1e-12)


def test_smoothness_random_matches_oracle():
    rng = np.random.default_rng(3)
    xy = rng.uniform(-5, 5, (100, 2))
    assert path_smoothness(make_log(xy)) == pytest.approx(oracle_turn_sum(xy), abs=1e-9)


def test_smoothness_needs_three_samples():
    with pytest.raises(InsufficientSamples):
        path_smoothness(make_log([(0, 0), (1, 0)]))


def test_turn_angles_corner_sample():
    a = turn_angles(np.array([(0, 0), (1, 0), (1, 1), (1, 2)], dtype=float))
    np.testing.assert_allclose(a, [0, math.pi / 2, 0, 0], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100))
def test_smoothness_scale_invariant(seed, scale):
    xy = np.random.default_rng(seed).uniform(-3, 3, (20, 2))
    a = path_smoothness(make_log(xy))
    b = path_smoothness(make_log(xy * scale))
    assert abs(a - b) < 1e-9


# --- end-effector stability ------------------------------------------------

def test_ee_perfect_tracking():
    e = np.random.default_rng(0).normal(size=(20, 3))
    assert tuple(ee_stability(make_log(np.zeros((20, 2)), ee_exp=e))) == (0.0, 0.0, 0.0)


def test_ee_constant_error_rectangle():
    t = np.linspace(0, 10, 101)
    exp = np.zeros((101, 3))
    act = exp.copy()
    act[:, 0] = -0.1
    pe = ee_stability(make_log(np.zeros((101, 2)), t=t, ee_exp=exp, ee_act=act))
    assert pe.x == pytest.approx(1.0, abs=1e-12)
    assert pe.y == 0.0 and pe.z == 0.0


def test_ee_sinusoid_vs_oversampled_quadrature():
    f = lambda t: np.column_stack([0.05 * np.sin(0.7 * t), 0.02 * np.cos(1.3 * t) + 0.01,
                                   0.01 * np.sin(2.1 * t + 0.3)])
    t = np.arange(0, 30.0 + 1e-9, 0.1)
    pe = ee_stability(make_log(np.zeros((len(t), 2)), t=t, ee_exp=f(t), ee_act=np.zeros((len(t), 3))))
    tf = np.linspace(0, 30.0, 100 * (len(t) - 1) + 1)
    ef = np.abs(f(tf))
    oracle = ((ef[1:] + ef[:-1]) / 2 * np.diff(tf)[:, None]).sum(axis=0)
    np.testing.assert_allclose(pe, oracle, rtol=0.01)


def test_ee_needs_two_samples():
    with pytest.raises(InsufficientSamples):
        ee_stability(make_log([(0, 0)]))


# --- distance travelled ----------------------------------------------------

def test_distance_three_four_legs():
    assert distance_travelled(make_log([(0, 0), (3, 0), (3, 4)])) == 7.0


def test_distance_stationary():
    assert distance_travelled(make_log(np.ones((10, 2)))) == 0.0


def test_distance_random_walk_oracle():
    xy = np.cumsum(np.random.default_rng(5).normal(size=(200, 2)), axis=0)
    oracle = sum(math.dist(a, b) for a, b in zip(xy[:-1], xy[1:]))
    assert distance_travelled(make_log(xy)) == pytest.approx(oracle, rel=1e-12)


def test_distance_additive_under_concatenation():
    xy = np.cumsum(np.random.default_rng(6).normal(size=(50, 2)), axis=0)
    whole = distance_travelled(make_log(xy))
    parts = distance_travelled(make_log(xy[:20])) + distance_travelled(make_log(xy[19:]))
    assert whole == pytest.approx(parts, rel=1e-12)


# --- path divergence -------------------------------------------------------

def test_divergence_coincident_is_zero():
    pts = np.array([(0, 0), (2, 0), (2, 3)], dtype=float)
    xy = np.vstack([np.linspace(pts[0], pts[1], 21), np.linspace(pts[1], pts[2], 31)[1:]])
    assert path_divergence(make_log(xy, path=pts)) == pytest.approx(0.0, abs=1e-24)


def test_divergence_parallel_offset():
    L, d, m = 4.0, 0.3, 9
    xy = np.column_stack([np.linspace(0, L, m), np.full(m, d)])
    gp = np.column_stack([np.linspace(0, L, m), np.zeros(m)])
    # d_between = m d^2, A = d_between * L / m = d^2 L
    assert path_divergence(make_log(xy, path=gp)) == pytest.approx(d * d * L, rel=1e-12)


def test_divergence_random_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        xy = np.cumsum(rng.normal(size=(rng.integers(5, 60), 2)), axis=0)
        gp = np.cumsum(rng.normal(size=(rng.integers(2, 12), 2)), axis=0)
        m = min(len(xy), len(gp))
        d_between = np.sum((oracle_resample(xy, m) - oracle_resample(gp, m)) ** 2)
        d_trav = sum(math.dist(a, b) for a, b in zip(xy[:-1], xy[1:]))
        assert path_divergence(make_log(xy, path=gp)) == pytest.approx(d_between * d_trav / m, rel=1e-9, abs=1e-12)


def test_divergence_needs_global_path():
    with pytest.raises(EmptyGlobalPath):
        path_divergence(make_log([(0, 0), (1, 0)]))


# --- final accuracy and total time -----------------------------------------

def test_accuracy_exact_arrival():
    assert final_accuracy(make_log([(0, 0), (1, 1)], goal=Pose2D(1, 1, 2.0))) == 0.0


def test_accuracy_squared_norm():
    assert final_accuracy(make_log([(5, 5), (1, 1)], goal=Pose2D(0, 0))) == 2.0


def test_accuracy_random_pair():
    rng = np.random.default_rng(2)
    for _ in range(20):
        p, g = rng.uniform(-9, 9, 2), rng.uniform(-9, 9, 2)
        got = final_accuracy(make_log([(0, 0), p], goal=Pose2D(*g)))
        assert got == pytest.approx(np.linalg.norm(p - g) ** 2, rel=1e-12)


def test_total_time_reported_value():
    # published DWB run in the open world: 33.88 s
    assert total_time(make_log([(0, 0), (1, 0)], t=[0.0, 33.88])) == pytest.approx(33.88, abs=1e-12)


def test_total_time_degenerate_and_random():
    assert total_time(make_log([(0, 0)], t=[4.2])) == 0.0
    rng = np.random.default_rng(4)
    for _ in range(10):
        t = np.sort(rng.uniform(0, 100, 5))
        assert total_time(make_log(np.zeros((5, 2)), t=t)) == t[-1] - t[0]


# --- report -----------------------------------------------------------------

def _synthetic():
    t = np.linspace(0, 5, 51)
    xy = np.column_stack([t, np.sin(t)])
    exp = np.column_stack([t, np.zeros(51), np.ones(51)])
    act = exp + 0.01 * np.column_stack([np.sin(t), np.cos(t), t / 5])
    return make_log(xy, t=t, ee_exp=exp, ee_act=act, path=np.array([(0, 0), (5, 0)]),
                    goal=Pose2D(5, 0))


def test_report_matches_individual_ops():
    log = _synthetic()
    rep = report(log)
    pe = ee_stability(log)
    assert rep.success
    assert (rep.p_s, rep.p_e_x, rep.p_e_y, rep.p_e_z) == (path_smoothness(log), *pe)
    assert rep.d_travelled == distance_travelled(log)
    assert rep.A_between == path_divergence(log)
    assert rep.p_acc == final_accuracy(log)
    assert rep.T_taken == total_time(log)
    assert rep.meta["p_acc_distance"] == pytest.approx(math.sqrt(rep.p_acc))


def test_report_failed_trial_has_dashes():
    log = _synthetic()
    log.success = False
    rep = report(log)
    assert not rep.success and rep.T_taken == 5.0
    assert all(v is None for k, v in rep.values().items() if k != "T_taken")


def test_mean_report_oracle():
    rng = np.random.default_rng(8)
    reps = []
    for _ in range(6):
        log = _synthetic()
        log.base[:, 1] += rng.normal(0, 0.1, log.n)
        reps.append(report(log))
    m = mean_report(reps)
    for k, v in m.values().items():
        assert v == pytest.approx(sum(getattr(r, k) for r in reps) / len(reps), rel=1e-12)
