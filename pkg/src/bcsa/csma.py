"""CSMA/CA broadcast baseline: every node in range of every other, no ACKs,
one transmission attempt per packet, backoff frozen while the medium is busy.

Time is kept in integer nanoseconds so simultaneous events compare exactly.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit
from .model import PhyParams, packet_duration_ns, slot_count, slot_duration_ns, to_ns
from .sim import chunk_rng, wilson_interval

__all__ = [
    "CsmaConfig",
    "CsmaOutcome",
    "simulate_csma",
    "csma_sweep",
    "csma_kernel_numba",
    "csma_kernel_python",
]

RUNS_PER_CHUNK = 64

IDLE, SENSING, BACKOFF = 0, 1, 2
NEVER = np.iinfo(np.int64).max


def csma_kernel_python(tau, backoff, observer, aifs, slot, pack, frame, t0, t_end):
    """Event loop for a batch of independent runs.

    Args:
        tau: (R, m) first offer time of every node, ns in [0, frame).
        backoff: (R, m, P) backoff counter drawn for packet p of each node.
        observer: (R,) node whose neighbors are scored in each run.
        aifs, slot, pack, frame: durations in ns.
        t0, t_end: measurement window [t0, t_end) in ns.

    Returns:
        (R, 4) int64: summed over the observer's neighbors, the dropped and
        collided packets in the window, the number of delivered packets in the
        window, and the largest per-node loss count.
    """
    R, m = tau.shape
    P = backoff.shape[2]
    out = np.zeros((R, 4), dtype=np.int64)
    phase = np.zeros(m, dtype=np.int64)
    sense_start = np.zeros(m, dtype=np.int64)
    counter = np.zeros(m, dtype=np.int64)
    next_pkt = np.zeros(m, dtype=np.int64)
    transmitting = np.zeros(m, dtype=np.bool_)
    dropped = np.zeros(m, dtype=np.int64)
    collided = np.zeros(m, dtype=np.int64)
    delivered = np.zeros(m, dtype=np.int64)
    for r in range(R):
        phase[:] = IDLE
        next_pkt[:] = 0
        transmitting[:] = False
        dropped[:] = 0
        collided[:] = 0
        delivered[:] = 0
        busy = False
        busy_until = 0
        idle_since = -(1 << 40)
        while True:
            # earliest packet offer
            offer_t = NEVER
            offer_j = -1
            for j in range(m):
                if next_pkt[j] < P:
                    t = tau[r, j] + next_pkt[j] * frame
                    if t < offer_t:
                        offer_t = t
                        offer_j = j
            if busy:
                if offer_t < busy_until:
                    now = offer_t
                else:
                    # transmissions end together: all began at the same instant
                    for j in range(m):
                        transmitting[j] = False
                    busy = False
                    idle_since = busy_until
                    continue
            else:
                tx_t = NEVER
                for j in range(m):
                    if phase[j] == SENSING:
                        t = sense_start[j] + aifs
                    elif phase[j] == BACKOFF:
                        t = idle_since + aifs + counter[j] * slot
                    else:
                        continue
                    if t < tx_t:
                        tx_t = t
                if tx_t <= offer_t:
                    if tx_t >= t_end:
                        break
                    starters = 0
                    for j in range(m):
                        if phase[j] == SENSING:
                            t = sense_start[j] + aifs
                        elif phase[j] == BACKOFF:
                            t = idle_since + aifs + counter[j] * slot
                        else:
                            continue
                        if t == tx_t:
                            # medium must have been idle for a full AIFS
                            assert tx_t - idle_since >= aifs
                            transmitting[j] = True
                            phase[j] = IDLE
                            starters += 1
                    in_window = t0 <= tx_t < t_end
                    for j in range(m):
                        if transmitting[j] and in_window:
                            if starters > 1:
                                collided[j] += 1
                            else:
                                delivered[j] += 1
                        elif phase[j] == SENSING:
                            # busy during AIFS: defer with a fresh backoff
                            phase[j] = BACKOFF
                            counter[j] = backoff[r, j, next_pkt[j] - 1]
                        elif phase[j] == BACKOFF:
                            elapsed = tx_t - idle_since - aifs
                            if elapsed > 0:
                                counter[j] -= elapsed // slot
                            assert counter[j] >= 1
                    busy = True
                    busy_until = tx_t + pack
                    continue
                if offer_t >= t_end:
                    break
                now = offer_t
            # packet offer at `now`
            j = offer_j
            if phase[j] != IDLE and t0 <= now < t_end:
                dropped[j] += 1
            p = next_pkt[j]
            next_pkt[j] += 1
            if busy:
                phase[j] = BACKOFF
                counter[j] = backoff[r, j, p]
            else:
                phase[j] = SENSING
                sense_start[j] = now
        obs = observer[r]
        worst = 0
        for j in range(m):
            e = dropped[j] + collided[j]
            if e > worst:
                worst = e
            if j != obs:
                out[r, 0] += dropped[j]
                out[r, 1] += collided[j]
                out[r, 2] += delivered[j]
        out[r, 3] = worst
    return out


csma_kernel_numba = njit(cache=True, nogil=True)(csma_kernel_python)


def csma_kernel(*args):
    if _accel.USE_NUMBA:
        return csma_kernel_numba(*args)
    return csma_kernel_python(*args)


@dataclass(frozen=True)
class CsmaConfig:
    m: int
    u: int = 11
    aifs: float = 58e-6
    backoff_slot: float = 13e-6
    frame_duration: float = 100e-3
    packet_duration: float = 576e-6
    t0: float | None = None
    """Start of the measurement window; defaults to two frames."""
    measure_window: float | None = None
    """Length of the measurement window; defaults to one frame."""
    seed: int = 0
    runs: int = 1000

    def __post_init__(self):
        if self.u < 1:
            raise ValueError("contention window exponent u must be >= 1")
        if self.m < 1:
            raise ValueError("need at least one node")
        if self.t0 is not None and self.t0 < 0:
            raise ValueError("t0 must be non-negative")

    @property
    def c(self) -> int:
        return 2 ** self.u - 1

    @classmethod
    def from_phy(cls, phy: PhyParams, m: int, **kw) -> "CsmaConfig":
        return cls(m=m, aifs=phy.aifs, backoff_slot=phy.csma_slot,
                   frame_duration=phy.frame_duration,
                   packet_duration=packet_duration_ns(phy) / 1e9, **kw)

    def window_ns(self) -> tuple:
        frame = to_ns(self.frame_duration)
        t0 = 2 * frame if self.t0 is None else to_ns(self.t0)
        width = frame if self.measure_window is None else to_ns(self.measure_window)
        return t0, t0 + width


@dataclass
class CsmaOutcome:
    m: int
    runs: int
    dropped: int
    collided: int
    delivered: int
    max_node_losses: int

    @property
    def losses(self) -> int:
        return self.dropped + self.collided

    @property
    def plr(self) -> float:
        if self.m < 2:
            return 0.0
        return self.losses / (self.runs * (self.m - 1))

    @property
    def ci95(self) -> tuple:
        if self.m < 2:
            return (0.0, 0.0)
        return wilson_interval(min(self.losses, self.runs * (self.m - 1)), self.runs * (self.m - 1))


def _csma_chunk(cfg: CsmaConfig, chunk: int, runs: int):
    rng = chunk_rng(cfg.seed, chunk)
    frame = to_ns(cfg.frame_duration)
    t0, t_end = cfg.window_ns()
    P = -(-t_end // frame) + 1
    tau = rng.integers(0, frame, size=(runs, cfg.m), dtype=np.int64)
    backoff = rng.integers(0, cfg.c + 1, size=(runs, cfg.m, P), dtype=np.int64)
    observer = rng.integers(0, cfg.m, size=runs, dtype=np.int64)
    return csma_kernel(tau, backoff, observer, to_ns(cfg.aifs), to_ns(cfg.backoff_slot),
                       to_ns(cfg.packet_duration), frame, t0, t_end)


def simulate_csma(config: CsmaConfig, threads: int = 1) -> CsmaOutcome:
    """Average the neighbor loss count of a random observer over independent runs.

    Runs are split into fixed chunks with their own sub-seeds, so ``threads``
    changes the schedule but not the result.
    """
    cfg = config
    sizes = [min(RUNS_PER_CHUNK, cfg.runs - lo) for lo in range(0, cfg.runs, RUNS_PER_CHUNK)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            outs = list(pool.map(lambda c: _csma_chunk(cfg, c, sizes[c]), range(len(sizes))))
    else:
        outs = [_csma_chunk(cfg, c, size) for c, size in enumerate(sizes)]
    out = np.concatenate(outs)
    totals = out[:, :3].sum(axis=0)
    worst = int(out[:, 3].max())
    if worst > 2:
        raise AssertionError(f"a node lost {worst} packets within one frame window")
    return CsmaOutcome(cfg.m, cfg.runs, int(totals[0]), int(totals[1]), int(totals[2]), worst)


@dataclass
class CsmaPoint:
    g: float
    u: int
    outcome: CsmaOutcome


def csma_sweep(phy: PhyParams, loads, windows=(11,), runs: int = 1000, seed: int = 0,
               threads: int = 1, n: int | None = None) -> list:
    """CSMA loss over a load grid for each contention-window exponent.

    The load counts users per B-CSA slot so both protocols share an x-axis:
    ``m = round(g * n)`` with ``n`` the slot count of ``phy`` unless given.
    """
    n = slot_count(phy) if n is None else n
    points = []
    for u in windows:
        for g in loads:
            m = max(1, round(g * n))
            cfg = CsmaConfig.from_phy(phy, m, u=u, seed=seed, runs=runs)
            points.append(CsmaPoint(g, u, simulate_csma(cfg, threads)))
    return points


def load_from_users(phy: PhyParams, m: int) -> float:
    return m / (to_ns(phy.frame_duration) / slot_duration_ns(phy))

