import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcsa.acceptance import beta_monte_carlo, exact_plr
from bcsa.floor import (StoppingSetClass, alpha, alpha_from_vector, beta_exact, build_catalog,
                        catalog_from_text, catalog_to_text, de_threshold, floor_prediction,
                        induced_distribution, optimize_distribution)
from bcsa.graph import Pattern
from bcsa.model import DegreeDistribution, mean_degree

X2 = DegreeDistribution.parse("x^2")
REF = DegreeDistribution.parse("0.86x^3+0.14x^8")
SAME_PAIR = StoppingSetClass.from_slot_sets([{0, 1}, {0, 1}])


@pytest.fixture(scope="module")
def catalog():
    return build_catalog()


# --- induced distribution ------------------------------------------------------

def test_no_erasure_is_identity():
    assert induced_distribution(REF, 172, 0).coefficients == REF.coefficients


def test_small_hand_example():
    induced = induced_distribution(X2, 4, 1)
    assert induced[1] == pytest.approx(0.5) and induced[2] == pytest.approx(0.5)
    assert induced[0] == 0.0


def test_mean_identity_reference():
    induced = induced_distribution(REF, 172, 8)
    assert induced.mean == pytest.approx(3.70 * 164 / 172, abs=1e-12)


def test_receiver_degree_beyond_frame():
    with pytest.raises(ValueError):
        induced_distribution(X2, 4, 5)


dists = st.lists(st.integers(0, 9), min_size=2, max_size=31).filter(lambda w: any(w[1:]))


@settings(max_examples=200)
@given(dists, st.integers(0, 200), st.data())
def test_induced_normalization_and_mean(weights, extra, data):
    total = sum(weights)
    dist = DegreeDistribution(tuple(w / total for w in weights))
    n = dist.max_degree + extra
    k = data.draw(st.integers(0, n))
    induced = induced_distribution(dist, n, k)
    assert all(c >= 0 for c in induced.coefficients)
    assert math.fsum(induced.coefficients) == pytest.approx(1.0, abs=1e-12)
    assert induced.mean == pytest.approx(mean_degree(dist) * (n - k) / n, abs=1e-12)


def test_induced_against_rational_arithmetic():
    from fractions import Fraction

    n, k = 40, 7
    lam = {3: Fraction(86, 100), 8: Fraction(14, 100)}
    for d in range(9):
        exact = sum(Fraction(math.comb(n - k, d) * math.comb(k, l - d), math.comb(n, l)) * p
                    for l, p in lam.items() if 0 <= l - d <= k)
        assert induced_distribution(REF, n, k)[d] == pytest.approx(float(exact), rel=1e-10, abs=1e-300)


def test_large_frame_convergence():
    induced = induced_distribution(REF, 10_000, 8)
    assert max(abs(induced[d] - REF[d]) for d in range(9)) < 5e-3


# --- alpha / beta ----------------------------------------------------------------

def test_alpha_examples():
    x2 = induced_distribution(X2, 100, 0)
    assert alpha(SAME_PAIR, 3, x2) == pytest.approx(1.0)
    assert alpha_from_vector((0, 0, 0), 3, x2) == 1.0
    half = DegreeDistribution.parse("0.5x+0.5x^2")
    assert alpha_from_vector((0, 0, 2), 11, induced_distribution(half, 100, 0)) == pytest.approx(11.25)


def test_alpha_vanishes_without_the_degree():
    assert alpha_from_vector((0, 1, 1), 5, induced_distribution(X2, 50, 0)) == 0.0


def test_beta_same_pair_brute_force():
    pairs = list(itertools.combinations(range(4), 2))
    hits = sum(a == b for a in pairs for b in pairs)
    assert beta_exact(SAME_PAIR, 4) == pytest.approx(hits / len(pairs) ** 2)
    assert beta_exact(SAME_PAIR, 4) == pytest.approx(1 / 6)
    assert beta_exact(SAME_PAIR, 164) == pytest.approx(1 / math.comb(164, 2))


def test_lone_user_is_not_a_stopping_set():
    with pytest.raises(ValueError):
        StoppingSetClass.from_slot_sets([{0}])
    with pytest.raises(ValueError):
        StoppingSetClass.from_slot_sets([{0, 1}, {1, 2}])


def test_beta_against_enumeration(catalog):
    # every placement of the members on 6 slots, classified by canonical pattern
    from bcsa.graph import canonical_pattern

    n_eff = 6
    checked = 0
    for S in catalog:
        choices = [list(itertools.combinations(range(n_eff), l)) for l in S.pattern.degrees]
        if math.prod(len(c) for c in choices) > 50_000:
            continue
        checked += 1
        total = hits = 0
        for combo in itertools.product(*choices):
            total += 1
            hits += canonical_pattern([set(c) for c in combo]) == S.pattern
        assert beta_exact(S, n_eff) == pytest.approx(hits / total, rel=1e-12, abs=1e-15)
    assert checked >= 30


@pytest.mark.slow
def test_beta_against_placement_sampling(catalog):
    rng = np.random.default_rng(12)
    samples = 200_000
    by_degrees = {}
    for S in catalog:
        by_degrees.setdefault(S.pattern.degrees, []).append(S)
    z = []
    for n_eff in (8, 12, 20):
        for degrees in sorted(by_degrees):
            for S, c in beta_monte_carlo(by_degrees[degrees], n_eff, samples, rng).items():
                b = beta_exact(S, n_eff)
                if samples * b > 30:
                    z.append((c - samples * b) / math.sqrt(samples * b * (1 - b)))
    z = np.array(z)
    assert abs(z.mean()) < 0.3 and 0.7 < z.std() < 1.3


# --- catalog ----------------------------------------------------------------------

def test_catalog_small_cases():
    (only,) = build_catalog(2, (2,))
    assert only.pattern == Pattern((2, 2), (3, 3))
    assert build_catalog(1, (2, 3)) == []
    cycle = StoppingSetClass.from_slot_sets([{0, 1}, {1, 2}, {0, 2}])
    assert cycle in build_catalog(3, (2,))


def test_catalog_entries_are_unique_and_connected(catalog):
    assert len({S.pattern for S in catalog}) == len(catalog)
    for S in catalog:
        assert S.v()[0] == 0 and 2 <= S.size <= 4


def test_catalog_text_round_trip(catalog):
    text = catalog_to_text(catalog)
    assert len(text.splitlines()) == len(catalog) + 1
    assert catalog_from_text(text) == catalog
    line = text.splitlines()[1].split("\t")
    assert len(line) == 5


# --- floor prediction -----------------------------------------------------------

def test_brute_force_two_neighbors(catalog):
    pred = floor_prediction(X2, 4, 3, catalog, extra_k=[0])
    assert pred.per_k[0] == pytest.approx(1 / 6)
    assert pred.per_degree_unresolved[(0, 0)] == 0.0


def test_average_is_weighted_per_k(catalog):
    pred = floor_prediction(REF, 172, 86, catalog)
    assert pred.averaged == pytest.approx(math.fsum(REF[k] * p for k, p in pred.per_k.items()), abs=1e-12)
    assert set(pred.per_k) == {3, 8}
    assert pred.per_k[3] < pred.per_k[8]
    assert pred.catalog_size == len(catalog)


def test_floor_needs_catalog_and_neighbors(catalog):
    with pytest.raises(ValueError):
        floor_prediction(X2, 10, 3, [])
    with pytest.raises(ValueError):
        floor_prediction(X2, 10, 1, catalog)


@pytest.mark.parametrize("text, n, m", [("x^2", 8, 3), ("x^2", 6, 4), ("0.5x^2+0.5x^3", 8, 3)])
def test_floor_against_exact_enumeration(catalog, text, n, m):
    dist = DegreeDistribution.parse(text)
    exact = exact_plr(dist, n, m)
    pred = floor_prediction(dist, n, m, catalog).averaged
    assert pred >= exact * (1 - 1e-9)
    assert pred == pytest.approx(exact, rel=0.2)


# --- threshold and optimizer ------------------------------------------------------

def test_threshold_of_regular_distributions():
    # fixed-point thresholds of regular repetition: 0.5 for x^2, 0.818 for x^3
    assert de_threshold(X2) == pytest.approx(0.5, abs=1e-3)
    assert de_threshold(DegreeDistribution.parse("x^3")) == pytest.approx(0.8184, abs=1e-3)


def test_threshold_of_reference_distributions():
    g = de_threshold(REF)
    assert 0.84 < g < 0.86
    assert de_threshold(DegreeDistribution.parse("0.87x^3+0.13x^8")) == pytest.approx(g, abs=2e-3)


def test_threshold_rejects_low_degrees():
    with pytest.raises(ValueError):
        de_threshold(DegreeDistribution.parse("0.5x+0.5x^3"))
    with pytest.raises(ValueError):
        de_threshold(X2, tol=0)


def test_threshold_matches_large_frame_simulation():
    from bcsa.sim import BcsaScenario, run_bcsa

    n = 10_000
    below = run_bcsa(BcsaScenario(n, int(0.45 * n), X2, trials=5, seed=1, min_errors=0))
    above = run_bcsa(BcsaScenario(n, int(0.6 * n), X2, trials=5, seed=1, min_errors=0))
    assert below.plr_mean < 5e-3 and above.plr_mean > 5e-2


def test_optimizer_single_point(catalog):
    dist, value = optimize_distribution((3,), 1.0, 0.5, 172, catalog=catalog)
    assert dist == DegreeDistribution.parse("x^3")
    assert value == pytest.approx(floor_prediction(dist, 172, 86, catalog).averaged)


def test_optimizer_candidates_and_tie_break(catalog):
    cands = [(0.0, 0.9, 0.1), (0.0, 0.86, 0.14)]
    dist, _ = optimize_distribution((2, 3, 8), 0.01, 0.5, 172, catalog=catalog, candidates=cands)
    assert dist[3] == 0.86
    tie = [(0.0, 1.0, 0.0), (0.0, 1.0, 0.0)]
    assert optimize_distribution((2, 3, 8), candidates=tie, catalog=catalog)[0][3] == 1.0


def test_optimizer_threshold_constraint(catalog):
    cands = [(0.0, 0.5, 0.5), (0.0, 0.86, 0.14), (0.0, 1.0, 0.0)]
    free, _ = optimize_distribution((2, 3, 8), candidates=cands, catalog=catalog)
    bound, _ = optimize_distribution((2, 3, 8), candidates=cands, catalog=catalog, min_threshold=0.85)
    assert free[3] == 0.5
    assert bound[3] == 0.86


def test_optimizer_step_must_divide_one(catalog):
    with pytest.raises(ValueError):
        optimize_distribution(step=0.3, catalog=catalog)
