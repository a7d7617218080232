"""Slow, obviously-correct reference computations used by tests and ``selftest``."""

from __future__ import annotations

import itertools
import math

import numpy as np


def chamfer_bruteforce(P, Q) -> float:
    """Double loop over both clouds, summed in index order."""
    P = np.asarray(getattr(P, "points", P), dtype=np.float64)
    Q = np.asarray(getattr(Q, "points", Q), dtype=np.float64)

    def sq(p, q):
        d = p - q
        return d[0] * d[0] + d[1] * d[1] + d[2] * d[2]

    total_p = 0.0
    for p in P:
        total_p += min(sq(p, q) for q in Q)
    total_q = 0.0
    for q in Q:
        total_q += min(sq(p, q) for p in P)
    return total_p + total_q


def emd_bruteforce(P, Q) -> float:
    """Minimum over all n! bijections of the summed Euclidean distances."""
    P = np.asarray(getattr(P, "points", P), dtype=np.float64)
    Q = np.asarray(getattr(Q, "points", Q), dtype=np.float64)
    n = len(P)
    if len(Q) != n:
        raise ValueError("size mismatch")
    diff = P[:, None, :] - Q[None, :, :]
    dist = np.sqrt(diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2])
    best = math.inf
    for perm in itertools.permutations(range(n)):
        total = 0.0
        for i, j in enumerate(perm):
            total += float(dist[i, j])
        best = min(best, total)
    return best


def chebyshev_ball_dilation(bits: np.ndarray, radius: int) -> np.ndarray:
    """Every pixel within Chebyshev distance ``radius`` of an ink pixel."""
    h, w = bits.shape
    out = np.zeros_like(bits, dtype=bool)
    for r, c in zip(*np.nonzero(bits)):
        out[max(r - radius, 0):min(r + radius + 1, h), max(c - radius, 0):min(c + radius + 1, w)] = True
    return out


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def hausdorff(a: set, b: set) -> float:
    """Symmetric Hausdorff distance between two finite 2D pixel sets."""
    if not a and not b:
        return 0.0
    if not a or not b:
        return math.inf
    A = np.array(sorted(a), dtype=float)
    B = np.array(sorted(b), dtype=float)
    d = np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(-1))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))
