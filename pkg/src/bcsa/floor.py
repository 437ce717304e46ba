"""Error-floor analysis: induced distributions, stopping sets, union bound,
density-evolution threshold and degree-distribution optimization.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

from .graph import Pattern, ReceiverView, canonical_pattern, is_stopping_set, sic_decode
from .model import DegreeDistribution, mean_degree

__all__ = [
    "InducedDistribution",
    "StoppingSetClass",
    "FloorPrediction",
    "induced_distribution",
    "alpha",
    "alpha_from_vector",
    "beta_exact",
    "build_catalog",
    "floor_prediction",
    "de_threshold",
    "optimize_distribution",
    "catalog_to_text",
    "catalog_from_text",
]

CATALOG_MAX_USERS = 4
DEFAULT_CATALOG_DEGREES = (1, 2, 3)


@dataclass(frozen=True)
class InducedDistribution:
    base: DegreeDistribution
    k: int
    n: int
    coefficients: tuple

    def __getitem__(self, d: int) -> float:
        return self.coefficients[d] if 0 <= d < len(self.coefficients) else 0.0

    @property
    def mean(self) -> float:
        return math.fsum(d * p for d, p in enumerate(self.coefficients))


@lru_cache(maxsize=4096)
def _transfer(n: int, k: int, q: int) -> tuple:
    """Matrix ``T[d][l]``: probability a degree-l user keeps d of its slots
    when a degree-k receiver blanks k of the n slots (hypergeometric)."""
    rows = []
    for d in range(q + 1):
        row = []
        for l in range(q + 1):
            if l < d or l - d > k or l > n:
                row.append(0.0)
            else:
                # exact big-integer ratio, correctly rounded by int true division
                row.append(math.comb(n - k, d) * math.comb(k, l - d) / math.comb(n, l))
        rows.append(tuple(row))
    return tuple(rows)


def induced_distribution(dist: DegreeDistribution, n: int, k: int) -> InducedDistribution:
    """Degree distribution seen by a receiver that transmits in ``k`` of ``n`` slots."""
    q = dist.max_degree
    if not 0 <= k <= n:
        raise ValueError(f"receiver degree {k} outside [0, {n}]")
    if q > n:
        raise ValueError(f"maximum degree {q} exceeds frame length {n}")
    T = _transfer(n, k, q)
    lam = dist.coefficients
    coeffs = tuple(math.fsum(T[d][l] * lam[l] for l in range(d, q + 1)) for d in range(q + 1))
    return InducedDistribution(dist, k, n, coeffs)


def _labelings(pattern: Pattern) -> int:
    """Distinct user-labeled placements of ``pattern`` on a fixed set of its slots."""
    groups = [list(g) for _, g in itertools.groupby(range(pattern.size), key=lambda i: pattern.degrees[i])]
    seen = set()
    D = pattern.distinct_slots
    total = 0
    for perm in itertools.product(*(itertools.permutations(g) for g in groups)):
        mapping = [u for block in perm for u in block]
        cols = tuple(sorted(sum(1 << mapping[i] for i in range(pattern.size) if c >> i & 1)
                            for c in pattern.columns))
        if cols in seen:
            continue
        seen.add(cols)
        ways = math.factorial(D)
        for _, same in itertools.groupby(cols):
            ways //= math.factorial(len(list(same)))
        total += ways
    return total


def _connected(slot_sets) -> bool:
    if not slot_sets:
        return False
    reached = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j, other in enumerate(slot_sets):
            if j not in reached and slot_sets[i] & other:
                reached.add(j)
                frontier.append(j)
    return len(reached) == len(slot_sets)


@dataclass(frozen=True)
class StoppingSetClass:
    """A connected slot-overlap pattern that peeling cannot resolve."""

    pattern: Pattern
    labelings: int = field(compare=False)

    def __post_init__(self):
        sets = self.pattern.slot_sets()
        view = ReceiverView.from_slot_sets(sets)
        if sic_decode(view).resolved or not is_stopping_set(sets):
            raise ValueError(f"pattern {self.pattern} is resolvable")

    @classmethod
    def from_pattern(cls, pattern: Pattern) -> "StoppingSetClass":
        return cls(pattern, _labelings(pattern))

    @classmethod
    def from_slot_sets(cls, slot_sets) -> "StoppingSetClass":
        return cls.from_pattern(canonical_pattern(slot_sets))

    @property
    def size(self) -> int:
        return self.pattern.size

    @property
    def distinct_slots(self) -> int:
        return self.pattern.distinct_slots

    @property
    def structure_id(self) -> str:
        degs = ".".join(map(str, self.pattern.degrees))
        cols = ".".join(format(c, "x") for c in self.pattern.columns)
        return f"{degs}/{cols}"

    def v(self, q: int | None = None) -> tuple:
        return self.pattern.degree_vector(q)

    def v_d(self, d: int) -> int:
        return self.pattern.degrees.count(d)


def alpha(S: StoppingSetClass, m: int, induced: InducedDistribution) -> float:
    """Expected number of neighbor subsets whose induced degrees match ``S``."""
    return alpha_from_vector(S.v(), m, induced)


def alpha_from_vector(v, m: int, induced: InducedDistribution) -> float:
    """``alpha`` for a bare degree-count vector ``v`` (``v[d]`` users of degree d)."""
    size = sum(v)
    out = math.factorial(size) * math.comb(m - 1, size)
    for d, count in enumerate(v):
        if count:
            out *= induced[d] ** count / math.factorial(count)
    return float(out)


def beta_exact(S: StoppingSetClass, n_eff: int) -> float:
    """Probability that ``S``'s members alone, each picking uniform slot sets
    among ``n_eff`` slots, land exactly in the pattern of ``S``."""
    if S.size > CATALOG_MAX_USERS:
        raise ValueError(f"beta_exact limited to {CATALOG_MAX_USERS} users")
    return _beta_cached(S.pattern.degrees, S.distinct_slots, S.labelings, n_eff)


@lru_cache(maxsize=1 << 16)
def _beta_cached(degrees, D, labelings, n_eff):
    if n_eff < D or any(l > n_eff for l in degrees):
        return 0.0
    denom = 1
    for l in degrees:
        denom *= math.comb(n_eff, l)
    return math.comb(n_eff, D) * labelings / denom


def _column_multisets(degrees):
    """All multisets of slot columns (user bitmasks with >= 2 members) meeting the row sums."""
    s = len(degrees)
    types = [mask for mask in range(1, 1 << s) if bin(mask).count("1") >= 2]

    def rec(ti, need, chosen):
        if not any(need):
            yield tuple(chosen)
            return
        if ti == len(types):
            return
        mask = types[ti]
        members = [i for i in range(s) if mask >> i & 1]
        top = min(need[i] for i in members)
        for c in range(top, -1, -1):
            nxt = list(need)
            for i in members:
                nxt[i] -= c
            yield from rec(ti + 1, nxt, chosen + [mask] * c)

    yield from rec(0, list(degrees), [])


def build_catalog(max_users: int = CATALOG_MAX_USERS, degrees=DEFAULT_CATALOG_DEGREES) -> list:
    """Every connected stopping-set pattern with at most ``max_users`` users.

    Patterns are deduplicated up to user and slot relabeling and ordered by
    (size, degrees, columns).
    """
    if max_users > CATALOG_MAX_USERS:
        raise ValueError(f"catalog limited to {CATALOG_MAX_USERS} users")
    degrees = sorted(set(int(d) for d in degrees if d >= 1))
    found = {}
    for size in range(2, max_users + 1):
        for degs in itertools.combinations_with_replacement(degrees, size):
            for cols in _column_multisets(degs):
                sets = [frozenset(j for j, c in enumerate(cols) if c >> i & 1) for i in range(size)]
                if not _connected(sets):
                    continue
                pat = canonical_pattern(sets)
                if pat not in found:
                    found[pat] = StoppingSetClass.from_pattern(pat)
    return [found[p] for p in sorted(found, key=lambda p: (p.size, p.degrees, p.columns))]


@dataclass(frozen=True)
class FloorPrediction:
    per_k: dict
    averaged: float
    per_degree_unresolved: dict
    catalog_size: int


def _unresolved_per_degree(dist, n, m, catalog, k):
    q = dist.max_degree
    induced = induced_distribution(dist, n, k)
    w = [0.0] * (q + 1)
    w[0] = (m - 1) * induced[0]
    for S in catalog:
        if max(S.pattern.degrees) > q:
            continue
        rho = alpha(S, m, induced) * beta_exact(S, n - k)
        if rho == 0.0:
            continue
        for d in set(S.pattern.degrees):
            w[d] += S.v_d(d) * rho
    return w


def floor_prediction(dist: DegreeDistribution, n: int, m: int, catalog,
                     extra_k=()) -> FloorPrediction:
    """Union-bound PLR approximation, per receiver degree and averaged.

    ``per_k`` covers every degree in the support of ``dist`` plus any
    receiver degrees listed in ``extra_k``; only the former enter the average.
    """
    if not catalog:
        raise ValueError("empty stopping-set catalog")
    if m < 2:
        raise ValueError("need at least one neighbor (m >= 2)")
    per_k = {}
    per_deg = {}
    for k in sorted(set(dist.support()) | set(extra_k)):
        w = _unresolved_per_degree(dist, n, m, catalog, k)
        for d, value in enumerate(w):
            per_deg[(k, d)] = value
        per_k[k] = math.fsum(w) / (m - 1)
    averaged = math.fsum(dist[k] * p for k, p in per_k.items())
    return FloorPrediction(per_k, averaged, per_deg, len(catalog))


def _de_converges(rho_edge, mean_l, g, max_iter=10_000, target=1e-8):
    p = 1.0
    for _ in range(max_iter):
        qs = 1.0 - math.exp(-g * mean_l * p)
        p_new = math.fsum(c * qs ** (l - 1) for l, c in rho_edge)
        if p_new > p + 1e-15:
            raise AssertionError("density evolution iterate increased")
        if p_new < target:
            return True
        if p - p_new < 1e-15:
            return False
        p = p_new
    return False


def de_threshold(dist: DegreeDistribution, tol: float = 1e-4) -> float:
    """Asymptotic load threshold of peeling by density evolution (bisection on g)."""
    if dist[0] > 0 or dist[1] > 0:
        raise ValueError("threshold undefined with mass on degrees 0 or 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    L = mean_degree(dist)
    rho_edge = [(l, l * p / L) for l, p in enumerate(dist.coefficients) if p > 0]
    lo, hi = 0.0, 1.0
    while _de_converges(rho_edge, L, hi):
        lo, hi = hi, 2 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _de_converges(rho_edge, L, mid):
            lo = mid
        else:
            hi = mid
    return lo


def optimize_distribution(degrees=(2, 3, 8), step: float = 0.01, g: float = 0.5, n: int = 172,
                          m: int | None = None, catalog=None, candidates=None,
                          min_threshold: float | None = None):
    """Grid search over distributions on ``degrees`` minimizing the averaged floor.

    Ties go to the lexicographically smallest coefficient tuple.  With
    ``min_threshold`` only distributions whose density-evolution threshold
    reaches that load are admissible.  Returns ``(distribution, floor)``.
    """
    degrees = tuple(degrees)
    m = round(g * n) if m is None else m
    catalog = build_catalog() if catalog is None else catalog
    if candidates is None:
        N = round(1 / step)
        if abs(N * step - 1) > 1e-9:
            raise ValueError("step must divide 1")
        candidates = [tuple(c / N for c in combo)
                      for combo in _compositions(N, len(degrees))]
    scored = []
    for weights in sorted(candidates):
        dist = DegreeDistribution.from_mapping(dict(zip(degrees, weights)))
        scored.append((floor_prediction(dist, n, m, catalog).averaged, weights, dist))
    # stable sort keeps the lexicographic tie-break
    scored.sort(key=lambda item: item[0])
    for value, _, dist in scored:
        if min_threshold is None or (dist[0] == dist[1] == 0 and de_threshold(dist) >= min_threshold):
            return dist, value
    raise ValueError("no admissible distribution on the grid")


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def catalog_to_text(catalog) -> str:
    """One class per line: degree vector, distinct slots, canonical pattern, beta coefficients.

    The beta coefficients ``labelings`` and ``degrees`` define
    ``beta(n) = C(n, slots) * labelings / prod_u C(n, degree_u)``.
    """
    lines = ["# v\tslots\tpattern\tlabelings\tdegrees"]
    for S in catalog:
        v = ",".join(map(str, S.v()))
        degs = ",".join(map(str, S.pattern.degrees))
        lines.append(f"{v}\t{S.distinct_slots}\t{S.structure_id}\t{S.labelings}\t{degs}")
    return "\n".join(lines) + "\n"


def catalog_from_text(text: str) -> list:
    out = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        _, _, sid, labelings, _ = line.split("\t")
        degs, cols = sid.split("/")
        pat = Pattern(tuple(int(x) for x in degs.split(".")), tuple(int(x, 16) for x in cols.split(".")))
        S = StoppingSetClass.from_pattern(pat)
        if S.labelings != int(labelings):
            raise ValueError(f"labelings mismatch for {sid}")
        out.append(S)
    return out
