"""Regression suite for the headline numbers and the oracle equivalences.

Each criterion returns a :class:`CriterionResult` carrying the measured
values and the tolerance it was judged against.  Results depend only on the
master seed, the budget mode and the tolerance scale, so a re-run with the
same arguments produces an identical report.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .csma import CsmaConfig, simulate_csma
from .floor import (beta_exact, build_catalog, de_threshold, floor_prediction,
                    induced_distribution, optimize_distribution)
from .graph import ReceiverView, generate_frame, peel_oracle, receiver_view, sic_decode
from .model import (DegreeDistribution, PhyParams, mean_degree, packet_duration_ns, slot_count,
                    slot_duration_ns)
from .sim import BcsaScenario, run_bcsa

__all__ = ["CriterionResult", "CRITERIA", "run_suite", "crossing", "exact_plr", "beta_monte_carlo"]

DIST_172 = DegreeDistribution.parse("0.86x^3+0.14x^8")
DIST_315 = DegreeDistribution.parse("0.87x^3+0.13x^8")
TARGET_PLR = 1e-3


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    tolerance: str = ""

    def as_dict(self) -> dict:
        return {"criterion": self.number, "name": self.name, "passed": bool(self.passed),
                "measured": _rounded(self.measured), "tolerance": self.tolerance}


@dataclass(frozen=True)
class Context:
    seed: int = 20240601
    quick: bool = False
    tol_scale: float = 1.0
    threads: int = 1

    def sub_seed(self, *tags: int) -> int:
        return int(np.random.SeedSequence([self.seed, *tags]).generate_state(1, np.uint64)[0])

    def budget(self, full, quick):
        return quick if self.quick else full


def _rounded(value):
    if isinstance(value, float):
        return float(f"{value:.6g}")
    if isinstance(value, dict):
        return {str(k): _rounded(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_rounded(v) for v in value]
    return value


def crossing(points, target: float = TARGET_PLR):
    """Load at which the PLR curve first reaches ``target`` (log-linear interpolation)."""
    for (g0, p0), (g1, p1) in zip(points, points[1:]):
        if p0 < target <= p1:
            if p0 <= 0:
                return g1
            t = (math.log10(target) - math.log10(p0)) / (math.log10(p1) - math.log10(p0))
            return g0 + t * (g1 - g0)
    if points and points[0][1] >= target:
        return points[0][0]
    return None


def _within(value, center, half_width) -> bool:
    return value is not None and center - half_width - 1e-12 <= value <= center + half_width + 1e-12


# --- 1 ---------------------------------------------------------------------

def criterion_table1(ctx: Context) -> CriterionResult:
    expected = {200: (312, 317, 315), 400: (576, 581, 172)}
    measured = {}
    ok = True
    for payload, want in expected.items():
        phy = PhyParams.table1(payload)
        got = (packet_duration_ns(phy) / 1000, slot_duration_ns(phy) / 1000, slot_count(phy))
        measured[f"{payload}B"] = list(got)
        ok &= got == want
    return CriterionResult(1, "table1", ok, measured, "exact integer match")


# --- 2 ---------------------------------------------------------------------

def criterion_threshold(ctx: Context) -> CriterionResult:
    half = 0.01 * ctx.tol_scale
    measured = {str(d): de_threshold(d) for d in (DIST_172, DIST_315)}
    ok = all(_within(v, 0.87, half) for v in measured.values())
    return CriterionResult(2, "de_threshold", ok, measured, f"[{0.87 - half:.4f}, {0.87 + half:.4f}]")


# --- 3 ---------------------------------------------------------------------

def _bcsa_curve(ctx, n, dist, loads, min_errors, tag):
    points = []
    for i, g in enumerate(loads):
        m = round(g * n)
        sc = BcsaScenario(n, m, dist, trials=2048, seed=ctx.sub_seed(tag, i), min_errors=min_errors)
        est = run_bcsa(sc, ctx.threads)
        points.append((m / n, est.plr_mean))
    return points


def criterion_bcsa_crossing(ctx: Context) -> CriterionResult:
    min_errors = ctx.budget(1000, 200)
    half = 0.03 * ctx.tol_scale
    cases = [(172, DIST_172, 0.68), (315, DIST_315, 0.73)]
    measured = {}
    ok = True
    for n, dist, want in cases:
        loads = [round(want - 0.06 + 0.01 * i, 2) for i in range(13)]
        points = _bcsa_curve(ctx, n, dist, loads, min_errors, tag=3000 + n)
        g = crossing(points)
        measured[f"n={n}"] = g
        ok &= _within(g, want, half)
    return CriterionResult(3, "bcsa_crossing", ok, measured,
                           f"0.68 +/- {half:.3f} (n=172), 0.73 +/- {half:.3f} (n=315)")


# --- 4 ---------------------------------------------------------------------

def _csma_curve(ctx, phy, loads, u, runs, tag):
    n = slot_count(phy)
    out = []
    for i, g in enumerate(loads):
        m = max(1, round(g * n))
        cfg = CsmaConfig.from_phy(phy, m, u=u, seed=ctx.sub_seed(tag, i), runs=runs)
        out.append((g, simulate_csma(cfg, ctx.threads)))
    return out


def criterion_csma_crossing(ctx: Context) -> CriterionResult:
    runs = ctx.budget(4000, 1000)
    half = 0.05 * ctx.tol_scale
    loads = [round(0.10 + 0.05 * i, 2) for i in range(10)]
    measured = {}
    ok = True
    for payload, want in ((400, 0.40), (200, 0.35)):
        phy = PhyParams.table1(payload)
        curve = _csma_curve(ctx, phy, loads, 11, runs, tag=4000 + payload)
        g = crossing([(g, o.plr) for g, o in curve])
        measured[f"n={slot_count(phy)}"] = g
        ok &= _within(g, want, half)
    return CriterionResult(4, "csma_crossing", ok, measured,
                           f"0.40 +/- {half:.3f} (n=172), 0.35 +/- {half:.3f} (n=315)")


# --- 5 ---------------------------------------------------------------------

def criterion_csma_windows(ctx: Context) -> CriterionResult:
    runs = ctx.budget(4000, 1000)
    loads = (0.3, 0.4, 0.5, 0.6)
    phy = PhyParams.table1(400)
    curves = {u: _csma_curve(ctx, phy, loads, u, runs, tag=5000) for u in (10, 11, 12, 13)}
    measured = {}
    ok = True
    for i, g in enumerate(loads):
        o = {u: curves[u][i][1] for u in curves}
        order = o[11].plr <= o[10].plr and o[11].plr <= o[12].plr
        no_drops = o[10].dropped == 0 and o[11].dropped == 0
        drop_dominated = o[13].dropped > o[13].collided
        ok &= order and no_drops and drop_dominated
        measured[f"g={g}"] = {f"u{u}": {"plr": o[u].plr, "dropped": o[u].dropped,
                                         "collided": o[u].collided} for u in o}
    return CriterionResult(5, "csma_window_ordering", ok, measured,
                           "plr(u11) <= plr(u10), plr(u12); no drops for u<=11; drops > collisions for u13")


# --- 6 ---------------------------------------------------------------------

def criterion_floor_agreement(ctx: Context) -> CriterionResult:
    min_errors = ctx.budget(8000, 500)
    factor = 1 + ctx.tol_scale
    loads = (0.3, 0.4, 0.5)
    catalog = build_catalog()
    measured = {}
    ok = True
    spread = {}
    for n, dist in ((172, DIST_172), (315, DIST_315)):
        ratios = []
        for i, g in enumerate(loads):
            m = round(g * n)
            sc = BcsaScenario(n, m, dist, trials=2048, seed=ctx.sub_seed(6000 + n, i),
                              min_errors=min_errors)
            mc = run_bcsa(sc, ctx.threads).plr_mean
            ratios.append(floor_prediction(dist, n, m, catalog).averaged / mc)
        measured[f"floor/mc n={n}"] = ratios
        spread[n] = math.fsum(abs(math.log(r)) for r in ratios) / len(ratios)
        if n == 172:
            ok &= all(1 / factor <= r <= factor for r in ratios)
    measured["mean |log ratio|"] = {f"n={n}": v for n, v in spread.items()}
    ok &= spread[315] < spread[172]

    # receiver degree ordering at the top load
    n, g = 172, loads[-1]
    m = round(g * n)
    per_k = {}
    for k in (3, 8):
        sc = BcsaScenario(n, m, DIST_172, receiver_k=k, trials=2048,
                          seed=ctx.sub_seed(6100, k), min_errors=ctx.budget(2000, 300))
        per_k[k] = run_bcsa(sc, ctx.threads).plr_mean
    pred = floor_prediction(DIST_172, n, m, catalog)
    measured["mc p(k)"] = per_k
    measured["floor p(k)"] = {k: pred.per_k[k] for k in (3, 8)}
    ok &= per_k[3] < per_k[8] and pred.per_k[3] < pred.per_k[8]
    return CriterionResult(6, "floor_agreement", ok, measured,
                           f"ratio within factor {factor:g} at n=172; n=315 closer to 1; p(3) < p(8)")


# --- 7 ---------------------------------------------------------------------

def _random_view(rng):
    n = int(rng.integers(1, 21))
    m = int(rng.integers(2, 13))
    q = int(rng.integers(1, min(n, 5) + 1))
    weights = rng.integers(0, 4, size=q + 1)
    weights[rng.integers(q + 1)] += 1
    dist = DegreeDistribution(tuple(float(w) for w in weights / weights.sum()))
    return receiver_view(generate_frame(m, n, dist, rng), 0)


def beta_monte_carlo(classes, n_eff: int, samples: int, rng) -> dict:
    """Frequency with which independently placed users realize each class.

    All ``classes`` must share one degree tuple.  Each user picks a uniform
    subset of its degree by rejection; a placement is keyed by its sorted
    column bitmasks, and a class matches through any relabeling of users of
    equal degree.
    """
    degrees = classes[0].pattern.degrees
    D = len(degrees)
    width = sum(degrees)
    masks = np.zeros((samples, n_eff), dtype=np.int64)
    rows = np.arange(samples)
    for u, l in enumerate(degrees):
        picks = rng.integers(0, n_eff, size=(samples, l))
        while True:
            srt = np.sort(picks, axis=1)
            bad = (srt[:, 1:] == srt[:, :-1]).any(axis=1) if l > 1 else np.zeros(samples, bool)
            if not bad.any():
                break
            picks[bad] = rng.integers(0, n_eff, size=(int(bad.sum()), l))
        for i in range(l):
            masks[rows, picks[:, i]] |= 1 << u
    top = np.sort(masks, axis=1)[:, -width:]
    keys = np.zeros(samples, dtype=np.int64)
    for i in range(top.shape[1]):
        keys = keys << D | top[:, i]
    out = {}
    for S in classes:
        orbit = set()
        groups = [list(g) for _, g in itertools.groupby(range(D), key=lambda i: degrees[i])]
        for perm in itertools.product(*(itertools.permutations(g) for g in groups)):
            mapping = [u for block in perm for u in block]
            cols = sorted(sum(1 << mapping[b] for b in range(D) if c >> b & 1) for c in S.pattern.columns)
            cols = [0] * (width - len(cols)) + cols
            key = 0
            for c in cols:
                key = key << D | c
            orbit.add(key)
        out[S] = int(np.isin(keys, np.fromiter(orbit, dtype=np.int64)).sum())
    return out


def exact_plr(dist: DegreeDistribution, n: int, m: int) -> float:
    """Average PLR by enumerating every slot choice of every neighbor.

    The receiver's slots are fixed to ``{0..k-1}`` (all choices are
    equivalent by symmetry); neighbor configurations are weighted by
    ``lambda_l / C(n, l)``.
    """
    options = [(dist[l] / math.comb(n, l), frozenset(s))
               for l in dist.support() for s in itertools.combinations(range(n), l)]
    total = 0.0
    for k in dist.support():
        rx = frozenset(range(k))
        acc = 0.0
        for combo in itertools.product(options, repeat=m - 1):
            w = math.prod(p for p, _ in combo)
            view = ReceiverView.from_slot_sets([s for _, s in combo], rx)
            acc += w * len(sic_decode(view).unresolved)
        total += dist[k] * acc / (m - 1)
    return total


EXACT_CASES = (
    ("x^2", 8, 3), ("x^2", 8, 4), ("x^2", 6, 4),
    ("0.5x^2+0.5x^3", 8, 3), ("0.5x^2+0.5x^3", 6, 4), ("0.5x^2+0.5x^3", 7, 4),
    ("x^3", 8, 4),
)


def criterion_oracles(ctx: Context) -> CriterionResult:
    measured = {}
    # (a) peeling against exhaustive stopping-set search
    rng = np.random.default_rng(ctx.sub_seed(7001))
    count = ctx.budget(10_000, 2000)
    mismatches = 0
    for _ in range(count):
        view = _random_view(rng)
        if sic_decode(view).resolved != peel_oracle(view):
            mismatches += 1
    measured["a_mismatches"] = mismatches
    measured["a_instances"] = count
    ok_a = mismatches == 0

    # (b) beta against placement sampling
    samples = ctx.budget(1_000_000, 100_000)
    catalog = build_catalog()
    by_degrees: dict = {}
    for S in catalog:
        by_degrees.setdefault(S.pattern.degrees, []).append(S)
    # "within k sigma" as a two-sided binomial tail mass, exact for small counts
    alpha_b = 2 * stats.norm.sf(3 * ctx.tol_scale)
    worst_p = 1.0
    z_values = []
    rng = np.random.default_rng(ctx.sub_seed(7002))
    for n_eff in (8, 12, 20):
        for degrees in sorted(by_degrees):
            hits = beta_monte_carlo(by_degrees[degrees], n_eff, samples, rng)
            for S, c in hits.items():
                b = beta_exact(S, n_eff)
                if b == 0.0:
                    p = 1.0 if c == 0 else 0.0
                else:
                    tail = min(stats.binom.cdf(c, samples, b), stats.binom.sf(c - 1, samples, b))
                    p = min(1.0, 2 * tail)
                    z_values.append((c - samples * b) / math.sqrt(samples * b * (1 - b)))
                worst_p = min(worst_p, p)
    ok_b = worst_p >= alpha_b
    z = np.array(z_values)
    measured["b_min_p_value"] = worst_p
    measured["b_z_mean"] = float(z.mean())
    measured["b_z_std"] = float(z.std())
    measured["b_classes"] = len(catalog)
    measured["b_samples"] = samples

    # (c) union bound against exhaustive enumeration
    ratios = {}
    cases = EXACT_CASES if not ctx.quick else EXACT_CASES[:4]
    for text, n, m in cases:
        dist = DegreeDistribution.parse(text)
        ratios[f"{text} n={n} m={m}"] = floor_prediction(dist, n, m, catalog).averaged / exact_plr(dist, n, m)
    rel = 0.2 * ctx.tol_scale
    ok_c = all(abs(r - 1) <= rel for r in ratios.values())
    measured["c_floor_over_exact"] = ratios

    # (d) induced distribution identities
    worst_norm = worst_mean = 0.0
    n_max = ctx.budget(500, 120)
    for dist in (DIST_172, DegreeDistribution.parse("x^2")):
        L = mean_degree(dist)
        for n in range(dist.max_degree, n_max + 1):
            for k in range(n + 1):
                I = induced_distribution(dist, n, k)
                worst_norm = max(worst_norm, abs(math.fsum(I.coefficients) - 1))
                worst_mean = max(worst_mean, abs(I.mean - L * (n - k) / n))
    tol_d = 1e-12 * ctx.tol_scale
    ok_d = worst_norm <= tol_d and worst_mean <= tol_d
    measured["d_max_norm_error"] = worst_norm
    measured["d_max_mean_error"] = worst_mean
    return CriterionResult(7, "oracle_equivalences", ok_a and ok_b and ok_c and ok_d, measured,
                           f"(a) 0 mismatches; (b) p >= {alpha_b:.3g} ({3 * ctx.tol_scale:g} sigma); (c) within {rel:.0%}; "
                           f"(d) <= {tol_d:g}")


# --- 8 ---------------------------------------------------------------------

def criterion_optimizer(ctx: Context) -> CriterionResult:
    half = 0.015 * ctx.tol_scale
    catalog = build_catalog()
    measured = {}
    ok = True
    for n in (172, 315):
        dist, value = optimize_distribution((2, 3, 8), 0.01, 0.5, n, catalog=catalog)
        measured[f"n={n}"] = {"dist": str(dist), "floor": value}
        ok &= dist[2] == 0 and _within(dist[3], 0.865, half)
    return CriterionResult(8, "optimizer", ok, measured,
                           f"lambda_3 in [{0.865 - half:.3f}, {0.865 + half:.3f}], lambda_2 = 0")


# --- 9 ---------------------------------------------------------------------

def criterion_crossover(ctx: Context) -> CriterionResult:
    loads = (0.70, 0.72, 0.74, 0.76, 0.78, 0.80)
    runs = ctx.budget(2000, 500)
    measured = {}
    ok = False
    for payload, dist in ((400, DIST_172), (200, DIST_315)):
        phy = PhyParams.table1(payload)
        n = slot_count(phy)
        bcsa = _bcsa_curve(ctx, n, dist, loads, ctx.budget(500, 100), tag=9000 + n)
        csma = _csma_curve(ctx, phy, loads, 11, runs, tag=9100 + n)
        above = [g for g, (_, pb), (_, oc) in zip(loads, bcsa, csma) if pb > oc.plr]
        measured[f"n={n}"] = {"bcsa": [p for _, p in bcsa], "csma": [o.plr for _, o in csma],
                              "bcsa_worse_at": above}
        if n == 172:
            ok = bool(above)
    return CriterionResult(9, "crossover", ok, measured,
                           "B-CSA PLR above CSMA PLR at some g in [0.70, 0.80] (n=172)")


CRITERIA = {
    1: criterion_table1,
    2: criterion_threshold,
    3: criterion_bcsa_crossing,
    4: criterion_csma_crossing,
    5: criterion_csma_windows,
    6: criterion_floor_agreement,
    7: criterion_oracles,
    8: criterion_optimizer,
    9: criterion_crossover,
}


def run_suite(seed: int = 20240601, quick: bool = False, tol_scale: float = 1.0, threads: int = 1,
              only=None, callback=None) -> list:
    """Run the selected criteria in order; ``callback`` sees each result as it lands."""
    ctx = Context(seed, quick, tol_scale, threads)
    results = []
    for number, fn in CRITERIA.items():
        if only is not None and number not in only:
            continue
        res = fn(ctx)
        results.append(res)
        if callback is not None:
            callback(res)
    return results
