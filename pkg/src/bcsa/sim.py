"""Monte-Carlo estimation of B-CSA packet loss rate."""
from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .graph import FrameInstance, receiver_view, sic_decode
from .kernels import _draw_slots_numpy, decode_batch
from .model import DegreeDistribution, sample_degrees

__all__ = [
    "BcsaScenario",
    "PlrEstimate",
    "HarvestResult",
    "wilson_interval",
    "chunk_rng",
    "run_bcsa",
    "run_bcsa_sweep",
    "harvest_stopping_sets",
]

CHUNK_TRIALS = 1024
DEFAULT_MIN_ERRORS = 50
DEFAULT_MAX_TRIALS = 10_000_000


def wilson_interval(errors: int, total: int, z: float = 1.959963984540054) -> tuple:
    if total <= 0:
        return (0.0, 1.0)
    p = errors / total
    denom = 1 + z * z / total
    center = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    lo = 0.0 if errors == 0 else max(0.0, center - half)
    hi = 1.0 if errors == total else min(1.0, center + half)
    return (lo, hi)


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    """Generator for one chunk of trials, derived only from (seed, chunk)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))


@dataclass(frozen=True)
class BcsaScenario:
    n: int
    m: int
    dist: DegreeDistribution
    receiver_k: int | None = None
    """Forced receiver degree, or ``None`` to sample it from ``dist``."""
    trials: int = 10_000
    """Minimum number of frames; more are added until ``min_errors`` is reached."""
    seed: int = 0
    min_errors: int = DEFAULT_MIN_ERRORS
    max_trials: int = DEFAULT_MAX_TRIALS

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("need the receiver and at least one neighbor (m >= 2)")
        if self.dist.max_degree > self.n:
            raise ValueError("maximum degree exceeds frame length")
        if self.receiver_k is not None and not 0 <= self.receiver_k <= self.n:
            raise ValueError(f"forced receiver degree {self.receiver_k} outside [0, {self.n}]")

    @property
    def g(self) -> float:
        return self.m / self.n

    @property
    def qmax(self) -> int:
        return max(self.dist.max_degree, self.receiver_k or 0)

    @property
    def chunk_trials(self) -> int:
        return min(CHUNK_TRIALS, self.trials)


@dataclass
class PlrEstimate:
    n: int
    m: int
    dist: DegreeDistribution
    receiver_k: int | None
    seed: int
    trials: int
    unresolved_total: int
    per_receiver_degree: dict = field(default_factory=dict)
    """k -> (plr, trials) for each receiver degree observed."""
    errors_by_receiver_degree: dict = field(default_factory=dict)
    """k -> unresolved neighbors summed over the trials with that receiver degree."""
    unresolved_by_degree: tuple = ()
    """Total unresolved neighbors per perceived degree."""

    @property
    def g(self) -> float:
        return self.m / self.n

    @property
    def unresolved_mean(self) -> float:
        return self.unresolved_total / self.trials

    @property
    def plr_mean(self) -> float:
        return self.unresolved_mean / (self.m - 1)

    @property
    def ci95(self) -> tuple:
        return wilson_interval(self.unresolved_total, self.trials * (self.m - 1))


def _draw_chunk(sc: BcsaScenario, chunk: int):
    rng = chunk_rng(sc.seed, chunk)
    T = sc.chunk_trials
    degrees = sample_degrees(sc.dist, rng.random((T, sc.m)))
    if sc.receiver_k is not None:
        degrees[:, 0] = sc.receiver_k
    u_slot = rng.random((T, sc.m, sc.qmax))
    return degrees, u_slot


def _run_chunk(sc: BcsaScenario, chunk: int):
    degrees, u_slot = _draw_chunk(sc, chunk)
    out = decode_batch(degrees, u_slot, sc.n, sc.qmax)
    return degrees[:, 0].copy(), out


def _chunks(sc: BcsaScenario, threads: int):
    """Yield chunk results in chunk order; ``threads`` only changes the schedule."""
    chunk = 0
    if threads <= 1:
        while True:
            yield chunk, _run_chunk(sc, chunk)
            chunk += 1
    with ThreadPoolExecutor(threads) as pool:
        while True:
            wave = list(pool.map(lambda c: _run_chunk(sc, c), range(chunk, chunk + threads)))
            for res in wave:
                yield chunk, res
                chunk += 1


def run_bcsa(scenario: BcsaScenario, threads: int = 1) -> PlrEstimate:
    """Estimate the PLR seen by user 0 over independent frames.

    Chunks of trials are added until at least ``scenario.trials`` frames and
    ``scenario.min_errors`` unresolved neighbors have been seen, or the trial
    cap is hit.  Results depend only on the scenario, never on ``threads``.
    """
    sc = scenario
    trials = 0
    errors = 0
    by_deg = np.zeros(sc.qmax + 1, dtype=np.int64)
    k_trials: Counter = Counter()
    k_errors: Counter = Counter()
    for _, (rx_deg, out) in _chunks(sc, threads):
        per_trial = out.sum(axis=1)
        trials += len(per_trial)
        errors += int(per_trial.sum())
        by_deg += out.sum(axis=0)
        for k in np.unique(rx_deg):
            mask = rx_deg == k
            k_trials[int(k)] += int(mask.sum())
            k_errors[int(k)] += int(per_trial[mask].sum())
        if trials >= sc.trials and (errors >= sc.min_errors or trials >= sc.max_trials):
            break
    per_k = {k: (k_errors[k] / (k_trials[k] * (sc.m - 1)), k_trials[k]) for k in sorted(k_trials)}
    return PlrEstimate(sc.n, sc.m, sc.dist, sc.receiver_k, sc.seed, trials, errors,
                       per_k, dict(sorted(k_errors.items())), tuple(int(x) for x in by_deg))


def run_bcsa_sweep(scenarios, threads: int = 1) -> list:
    """One estimate per load point; the scenarios must be ordered by load."""
    scenarios = list(scenarios)
    loads = [sc.g for sc in scenarios]
    if any(b < a for a, b in zip(loads, loads[1:])):
        raise ValueError("load grid must be non-decreasing")
    return [run_bcsa(sc, threads) for sc in scenarios]


@dataclass
class HarvestResult:
    trials: int
    classes: list
    """(Pattern, occurrences) sorted by decreasing occurrences."""
    oversized: int = 0
    """Residual components too large to canonicalize."""

    def frequency(self, pattern) -> float:
        """Occurrences per frame."""
        for p, c in self.classes:
            if p == pattern:
                return c / self.trials
        return 0.0


def harvest_stopping_sets(scenario: BcsaScenario, trials: int | None = None) -> HarvestResult:
    """Classify residual components of every failed frame by slot-overlap pattern.

    Frames are screened with the batched kernel; the few with unresolved
    neighbors are rebuilt from the same variates and decoded with
    :func:`bcsa.graph.sic_decode` to extract their structure.
    """
    sc = scenario
    trials = sc.trials if trials is None else trials
    counts: Counter = Counter()
    oversized = 0
    done = 0
    chunk = 0
    while done < trials:
        degrees, u_slot = _draw_chunk(sc, chunk)
        take = min(len(degrees), trials - done)
        degrees, u_slot = degrees[:take], u_slot[:take]
        out = decode_batch(degrees, u_slot, sc.n, sc.qmax)
        bad = np.flatnonzero(out[:, 1:].sum(axis=1))
        if bad.size:
            slots = _draw_slots_numpy(degrees[bad], u_slot[bad], sc.n)
            for row, t in enumerate(bad):
                frame = FrameInstance.from_slot_sets(
                    sc.n, [slots[row, u, :degrees[t, u]] for u in range(sc.m)])
                for pat in sic_decode(receiver_view(frame, 0)).residual_structure:
                    if pat is None:
                        oversized += 1
                    else:
                        counts[pat] += 1
        done += take
        chunk += 1
    classes = sorted(counts.items(), key=lambda pc: (-pc[1], pc[0].degrees, pc[0].columns))
    return HarvestResult(done, classes, oversized)
