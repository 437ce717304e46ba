"""Batched hot loops for the Monte-Carlo harnesses.

Each kernel has a numba implementation and a numpy implementation that
consume the same uniform variates and return identical results.  The public
entry points dispatch on :data:`bcsa._accel.USE_NUMBA`.
"""
from __future__ import annotations

import numpy as np

from . import _accel
from ._accel import njit

__all__ = ["decode_batch", "decode_batch_numba", "decode_batch_numpy"]

# rows of the (trial*user, n) permutation scratch per numpy sub-batch
_NUMPY_ROWS = 1 << 14


@njit(cache=True, nogil=True)
def decode_batch_numba(degrees, u_slot, n, qmax):
    """Draw slots for every user and peel every trial from user 0's viewpoint.

    Args:
        degrees: (T, m) int array of user degrees; user 0 is the receiver.
        u_slot: (T, m, qmax) uniforms driving a partial Fisher-Yates shuffle.
        n: slots per frame.
        qmax: maximum degree (last axis of ``u_slot``).

    Returns:
        (T, qmax + 1) int64 array: unresolved neighbors per perceived degree.
    """
    T, m = degrees.shape
    out = np.zeros((T, qmax + 1), dtype=np.int64)
    perm = np.empty(n, dtype=np.int64)
    erased = np.zeros(n, dtype=np.bool_)
    count = np.zeros(n, dtype=np.int64)
    xor = np.zeros(n, dtype=np.int64)
    slots = np.empty((m, qmax), dtype=np.int64)
    nalive = np.zeros(m, dtype=np.int64)
    resolved = np.zeros(m, dtype=np.bool_)
    stack = np.empty(m * qmax + n, dtype=np.int64)
    swaps = np.empty(qmax, dtype=np.int64)
    for s in range(n):
        perm[s] = s
    for t in range(T):
        erased[:] = False
        count[:] = 0
        xor[:] = 0
        for u in range(m):
            l = degrees[t, u]
            for i in range(l):
                j = i + int(u_slot[t, u, i] * (n - i))
                swaps[i] = j
                tmp = perm[i]
                perm[i] = perm[j]
                perm[j] = tmp
                slots[u, i] = perm[i]
            # undo the swaps so perm is the identity again
            for i in range(l - 1, -1, -1):
                j = swaps[i]
                tmp = perm[i]
                perm[i] = perm[j]
                perm[j] = tmp
        for i in range(degrees[t, 0]):
            erased[slots[0, i]] = True
        for u in range(1, m):
            k = 0
            for i in range(degrees[t, u]):
                s = slots[u, i]
                if not erased[s]:
                    slots[u, k] = s
                    k += 1
                    count[s] += 1
                    xor[s] ^= u
            nalive[u] = k
            resolved[u] = False
        top = 0
        for s in range(n):
            if count[s] == 1:
                stack[top] = s
                top += 1
        while top > 0:
            top -= 1
            s = stack[top]
            if count[s] != 1:
                continue
            u = xor[s]
            resolved[u] = True
            for i in range(nalive[u]):
                r = slots[u, i]
                count[r] -= 1
                xor[r] ^= u
                if count[r] == 1:
                    stack[top] = r
                    top += 1
        for u in range(1, m):
            if not resolved[u]:
                out[t, nalive[u]] += 1
    return out


def _draw_slots_numpy(degrees, u_slot, n):
    rows = degrees.size
    qmax = u_slot.shape[-1]
    flat_u = u_slot.reshape(rows, qmax)
    slots = np.empty((rows, qmax), dtype=np.int64)
    for lo in range(0, rows, _NUMPY_ROWS):
        hi = min(lo + _NUMPY_ROWS, rows)
        perm = np.broadcast_to(np.arange(n, dtype=np.int64), (hi - lo, n)).copy()
        r = np.arange(hi - lo)
        for i in range(qmax):
            j = i + (flat_u[lo:hi, i] * (n - i)).astype(np.int64)
            j = np.minimum(j, n - 1)
            a, b = perm[r, i].copy(), perm[r, j].copy()
            perm[r, j] = a
            perm[r, i] = b
        slots[lo:hi] = perm[:, :qmax]
    return slots.reshape(u_slot.shape)


def decode_batch_numpy(degrees, u_slot, n, qmax):
    """Vectorized twin of :func:`decode_batch_numba` (all trials peeled in lockstep)."""
    T, m = degrees.shape
    slots = _draw_slots_numpy(degrees, u_slot, n)
    pos = np.arange(qmax)
    used = pos[None, None, :] < degrees[:, :, None]

    rx_used = used[:, 0, :]
    erased = np.zeros((T, n), dtype=bool)
    tt = np.broadcast_to(np.arange(T)[:, None], rx_used.shape)
    erased[tt[rx_used], slots[:, 0, :][rx_used]] = True

    nb_slots = slots[:, 1:, :]
    tix = np.broadcast_to(np.arange(T)[:, None, None], nb_slots.shape)
    alive = used[:, 1:, :] & ~erased[tix, np.where(used[:, 1:, :], nb_slots, 0)]
    perceived = alive.sum(axis=2)
    flat = tix * n + nb_slots
    count = np.bincount(flat[alive], minlength=T * n).reshape(T, n)
    unresolved = np.ones(perceived.shape, dtype=bool)
    while True:
        single = count.reshape(-1)[np.where(alive, flat, 0)] == 1
        hit = unresolved & (single & alive).any(axis=2)
        if not hit.any():
            break
        unresolved &= ~hit
        drop = alive & hit[:, :, None]
        count -= np.bincount(flat[drop], minlength=T * n).reshape(T, n)
        alive &= ~drop
    out = np.zeros((T, qmax + 1), dtype=np.int64)
    for d in range(qmax + 1):
        out[:, d] = (unresolved & (perceived == d)).sum(axis=1)
    return out


def decode_batch(degrees, u_slot, n, qmax):
    degrees = np.ascontiguousarray(degrees, dtype=np.int64)
    u_slot = np.ascontiguousarray(u_slot, dtype=np.float64)
    if _accel.USE_NUMBA:
        return decode_batch_numba(degrees, u_slot, n, qmax)
    return decode_batch_numpy(degrees, u_slot, n, qmax)
