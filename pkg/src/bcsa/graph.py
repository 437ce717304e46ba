"""Frame realizations as user/slot bipartite graphs and the SIC peeling decoder.

These are the reference, set-based implementations.  The Monte-Carlo harness
uses the batched array kernels in :mod:`bcsa.kernels`, which are tested
against the functions here.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .model import DegreeDistribution, sample_degree

__all__ = [
    "UserTx",
    "FrameInstance",
    "ReceiverView",
    "DecodeResult",
    "Pattern",
    "generate_frame",
    "receiver_view",
    "sic_decode",
    "peel_oracle",
    "canonical_pattern",
    "is_stopping_set",
]

ORACLE_MAX_USERS = 12
ORACLE_MAX_SLOTS = 20
# components above this size are summarized by their degree vector only
CANONICAL_MAX_USERS = 6


@dataclass(frozen=True)
class UserTx:
    user_id: int
    degree: int
    slots: frozenset

    def __post_init__(self):
        if len(self.slots) != self.degree:
            raise ValueError(f"user {self.user_id}: {len(self.slots)} slots for degree {self.degree}")


@dataclass(frozen=True)
class FrameInstance:
    n: int
    users: tuple
    seed: int | None = None

    def __post_init__(self):
        for u in self.users:
            if any(not 0 <= s < self.n for s in u.slots):
                raise ValueError(f"user {u.user_id} has a slot outside [0, {self.n})")

    @property
    def m(self) -> int:
        return len(self.users)

    @classmethod
    def from_slot_sets(cls, n: int, slot_sets, seed=None) -> "FrameInstance":
        users = tuple(UserTx(i, len(set(s)), frozenset(s)) for i, s in enumerate(slot_sets))
        return cls(n, users, seed)


@dataclass(frozen=True)
class Pattern:
    """Slot-overlap structure of a set of users, up to relabeling.

    ``degrees`` is sorted ascending; ``columns`` holds one bitmask per slot
    over the user positions in ``degrees``.
    """

    degrees: tuple
    columns: tuple

    @property
    def size(self) -> int:
        return len(self.degrees)

    @property
    def distinct_slots(self) -> int:
        return len(self.columns)

    def degree_vector(self, q: int | None = None) -> tuple:
        q = max(self.degrees, default=0) if q is None else q
        counts = Counter(self.degrees)
        return tuple(counts.get(d, 0) for d in range(q + 1))

    def slot_sets(self) -> list:
        return [frozenset(j for j, col in enumerate(self.columns) if col >> i & 1)
                for i in range(self.size)]


def canonical_pattern(slot_sets) -> Pattern:
    """Canonical form of the overlap pattern of the given slot sets.

    Users are ordered by degree; among users of equal degree every ordering is
    tried and the lexicographically smallest sorted column tuple wins.
    """
    slot_sets = [frozenset(s) for s in slot_sets]
    order = sorted(range(len(slot_sets)), key=lambda i: len(slot_sets[i]))
    degrees = tuple(len(slot_sets[i]) for i in order)
    groups = [list(g) for _, g in itertools.groupby(order, key=lambda i: len(slot_sets[i]))]
    slots = sorted(set().union(*slot_sets)) if slot_sets else []
    best = None
    for perm in itertools.product(*(itertools.permutations(g) for g in groups)):
        users = [u for block in perm for u in block]
        cols = tuple(sorted(
            sum(1 << pos for pos, u in enumerate(users) if s in slot_sets[u]) for s in slots))
        if best is None or cols < best:
            best = cols
    return Pattern(degrees, best or ())


def is_stopping_set(slot_sets) -> bool:
    """True if every slot touched by the users holds at least two of them."""
    if not slot_sets:
        return False
    counts = Counter(s for ss in slot_sets for s in ss)
    return all(c >= 2 for c in counts.values())


@dataclass(frozen=True)
class ReceiverView:
    receiver_id: int
    receiver_slots: frozenset
    perceived: dict
    """Neighbor id -> slots not erased by the receiver's own transmissions."""

    @property
    def neighbors(self) -> list:
        return sorted(self.perceived)

    def perceived_degree(self, user_id: int) -> int:
        return len(self.perceived[user_id])

    @property
    def residual(self) -> dict:
        """Slot -> ids of neighbors transmitting there (receiver slots excluded)."""
        out: dict = {}
        for u in sorted(self.perceived):
            for s in self.perceived[u]:
                out.setdefault(s, []).append(u)
        return {s: tuple(out[s]) for s in sorted(out)}

    @classmethod
    def from_slot_sets(cls, slot_sets, receiver_slots=()) -> "ReceiverView":
        """Build a view directly from neighbor slot sets (ids 1..len)."""
        rx = frozenset(receiver_slots)
        return cls(0, rx, {i + 1: frozenset(s) - rx for i, s in enumerate(slot_sets)})


@dataclass(frozen=True)
class DecodeResult:
    resolved: frozenset
    unresolved: frozenset
    residual_structure: tuple
    """One :class:`Pattern` per connected residual component (``None`` when too large to canonicalize)."""


def generate_frame(m: int, n: int, dist: DegreeDistribution, rng) -> FrameInstance:
    """Draw one frame: every user picks a degree and that many distinct slots uniformly."""
    if m < 1:
        raise ValueError("m must be >= 1")
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    users = []
    for uid in range(m):
        l = sample_degree(dist, rng)
        if l > n:
            raise ValueError(f"sampled degree {l} exceeds frame length {n}")
        slots = rng.choice(n, size=l, replace=False)
        users.append(UserTx(uid, l, frozenset(int(s) for s in slots)))
    return FrameInstance(n, tuple(users), seed)


def receiver_view(frame: FrameInstance, receiver_id: int) -> ReceiverView:
    """What ``receiver_id`` can observe: everything except its own transmit slots."""
    if not 0 <= receiver_id < frame.m:
        raise ValueError(f"no user {receiver_id} in frame")
    rx = frame.users[receiver_id].slots
    perceived = {u.user_id: u.slots - rx for u in frame.users if u.user_id != receiver_id}
    return ReceiverView(receiver_id, rx, perceived)


def _components(users: list, perceived: dict) -> list:
    by_slot: dict = {}
    for u in users:
        for s in perceived[u]:
            by_slot.setdefault(s, []).append(u)
    parent = {u: u for u in users}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for members in by_slot.values():
        for other in members[1:]:
            ra, rb = find(members[0]), find(other)
            if ra != rb:
                parent[rb] = ra
    comps: dict = {}
    for u in users:
        comps.setdefault(find(u), []).append(u)
    return sorted(comps.values())


def sic_decode(view: ReceiverView, rng: np.random.Generator | None = None) -> DecodeResult:
    """Iterative interference cancellation to the fixed point.

    A slot holding exactly one remaining replica reveals that user, whose other
    replicas are then cancelled.  With ``rng`` the singleton slots are
    processed in a random order; the outcome does not depend on it.
    """
    slot_users: dict = {}
    for u, slots in view.perceived.items():
        for s in slots:
            slot_users.setdefault(s, set()).add(u)
    resolved: set = set()
    queue = [s for s in sorted(slot_users) if len(slot_users[s]) == 1]
    while queue:
        if rng is not None:
            i = int(rng.integers(len(queue)))
            queue[i], queue[-1] = queue[-1], queue[i]
        s = queue.pop()
        if len(slot_users[s]) != 1:
            continue
        (u,) = slot_users[s]
        resolved.add(u)
        for t in view.perceived[u]:
            slot_users[t].discard(u)
            if len(slot_users[t]) == 1:
                queue.append(t)
    unresolved = frozenset(view.perceived) - resolved
    active = [u for u in sorted(unresolved) if view.perceived[u]]
    structure = []
    for comp in _components(active, view.perceived):
        if len(comp) <= CANONICAL_MAX_USERS:
            structure.append(canonical_pattern([view.perceived[u] for u in comp]))
        else:
            structure.append(None)
    return DecodeResult(frozenset(resolved), unresolved, tuple(structure))


def peel_oracle(view: ReceiverView) -> frozenset:
    """Resolvable neighbors by exhaustive search, independent of the peeling loop.

    The peeling decoder stalls exactly on the largest stopping set, which is
    the union of all stopping sets.  Every subset of neighbors is tested with
    slot bitmasks, so the cost is ``2**(m - 1)`` per view.
    """
    if len(view.perceived) + 1 > ORACLE_MAX_USERS:
        raise ValueError(f"oracle limited to {ORACLE_MAX_USERS} users")
    slots = set().union(view.receiver_slots, *view.perceived.values())
    if slots and max(slots) >= ORACLE_MAX_SLOTS:
        raise ValueError(f"oracle limited to {ORACLE_MAX_SLOTS} slots")
    users = [u for u in sorted(view.perceived) if view.perceived[u]]
    if not users:
        return frozenset()
    slot_masks = np.array([sum(1 << s for s in view.perceived[u]) for u in users], dtype=np.int64)
    subsets = np.arange(1 << len(users), dtype=np.int64)
    once = np.zeros_like(subsets)
    twice = np.zeros_like(subsets)
    for i, mask in enumerate(slot_masks):
        member = (subsets >> i) & 1 == 1
        twice = np.where(member, twice | (once & mask), twice)
        once = np.where(member, once | mask, once)
    stopping = subsets[(once == twice) & (subsets != 0)]
    stuck = int(np.bitwise_or.reduce(stopping)) if stopping.size else 0
    return frozenset(u for i, u in enumerate(users) if not stuck >> i & 1)
