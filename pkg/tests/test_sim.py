import math

import numpy as np
import pytest

from bcsa.floor import StoppingSetClass, alpha, beta_exact, build_catalog, floor_prediction, induced_distribution
from bcsa.graph import Pattern
from bcsa.model import DegreeDistribution
from bcsa.sim import BcsaScenario, harvest_stopping_sets, run_bcsa, run_bcsa_sweep, wilson_interval

X2 = DegreeDistribution.parse("x^2")
REF = DegreeDistribution.parse("0.86x^3+0.14x^8")


def test_wilson_interval_against_closed_form():
    lo, hi = wilson_interval(10, 100)
    assert lo == pytest.approx(0.05522, abs=1e-4)
    assert hi == pytest.approx(0.17437, abs=1e-4)
    assert wilson_interval(0, 50)[0] == 0.0


def test_scenario_validation():
    with pytest.raises(ValueError):
        BcsaScenario(10, 1, X2)
    with pytest.raises(ValueError):
        BcsaScenario(10, 5, X2, receiver_k=11)
    sc = BcsaScenario(172, 86, REF)
    assert sc.g == 0.5


def test_estimate_invariants():
    est = run_bcsa(BcsaScenario(40, 20, X2, trials=3000, seed=1))
    assert est.plr_mean == pytest.approx(est.unresolved_mean / 19)
    lo, hi = est.ci95
    assert lo <= est.plr_mean <= hi
    assert est.trials >= 3000


def test_determinism_and_thread_invariance():
    sc = BcsaScenario(60, 40, REF, trials=5000, seed=42)
    a = run_bcsa(sc)
    b = run_bcsa(sc)
    c = run_bcsa(sc, threads=3)
    assert a == b == c


def test_sweep_single_point_equals_run():
    sc = BcsaScenario(50, 20, X2, trials=2000, seed=3)
    assert run_bcsa_sweep([sc]) == [run_bcsa(sc)]
    with pytest.raises(ValueError):
        run_bcsa_sweep([BcsaScenario(50, 30, X2), BcsaScenario(50, 20, X2)])


def test_min_errors_extends_the_run():
    sc = BcsaScenario(172, 52, REF, trials=1024, seed=5, min_errors=30)
    est = run_bcsa(sc)
    assert est.unresolved_total >= 30 or est.trials >= sc.max_trials


def test_two_user_limit_matches_floor():
    # m = 2: the only failure is the neighbor landing on the receiver's slots or
    # duplicating them, both of which the union bound counts exactly
    n = 200
    sc = BcsaScenario(n, 2, X2, receiver_k=0, trials=200_000, seed=9, min_errors=0)
    est = run_bcsa(sc)
    pred = floor_prediction(X2, n, 2, build_catalog(), extra_k=[0]).per_k[0]
    assert pred == 0.0
    assert est.unresolved_total == 0
    sc = BcsaScenario(n, 3, X2, receiver_k=0, trials=10 ** 6, seed=9, min_errors=0)
    est = run_bcsa(sc)
    pred = floor_prediction(X2, n, 3, build_catalog(), extra_k=[0]).per_k[0]
    sigma = math.sqrt(pred * 2 / est.trials)
    assert abs(est.plr_mean - pred) < 4 * sigma


def test_plr_grows_with_load():
    n = 172
    ests = run_bcsa_sweep([BcsaScenario(n, round(g * n), REF, trials=4096, seed=1, min_errors=200)
                           for g in (0.5, 0.7, 0.8, 0.9)])
    plr = [e.plr_mean for e in ests]
    assert all(b > a for a, b in zip(plr, plr[1:]))


def test_receiver_degree_ordering():
    n, m = 172, 86
    p = {}
    for k in (3, 8):
        est = run_bcsa(BcsaScenario(n, m, REF, receiver_k=k, trials=4096, seed=17, min_errors=400))
        p[k] = est
    assert p[3].ci95[1] < p[8].ci95[0]


def test_harvest_dominant_class_for_x2():
    sc = BcsaScenario(100, 10, X2, trials=20000, seed=2)
    res = harvest_stopping_sets(sc)
    top, count = res.classes[0]
    assert top == Pattern((2, 2), (3, 3))
    assert top.degree_vector() == (0, 0, 2)
    # occurrences per frame against alpha * beta of the same class
    S = StoppingSetClass.from_pattern(top)
    rate = alpha(S, 10, induced_distribution(X2, 100, 2)) * beta_exact(S, 98)
    se = math.sqrt(rate / res.trials)
    assert abs(res.frequency(top) - rate) < 3 * se


def test_harvest_without_failures_is_empty():
    sc = BcsaScenario(1000, 2, DegreeDistribution.parse("x"), trials=100, seed=0)
    assert harvest_stopping_sets(sc).classes == []
