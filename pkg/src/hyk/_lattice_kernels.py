"""Inner loops for finite-volume lattice sums.

The triple sum over (p, r, r') couples r and r' only through the integer
energy transfers alpha = |r+p|^2 - |r|^2 and beta = |r'-p|^2 - |r'|^2
(in units of (2 pi / L)^2), so for each p the Pauli-allowed pairs reduce to
two integer histograms whose cross sum is O(alpha_max^2) instead of
O(N_up * N_down).  This is exact; a direct triple loop is kept as the
reference oracle for small lattices.
"""

from __future__ import annotations

import numpy as np


def near_sum_histogram(
    pvecs: np.ndarray,
    ball1: np.ndarray,
    n1: np.ndarray,
    ball2: np.ndarray,
    n2: np.ndarray,
    kf1su: float,
    kf2su: float,
    eps2: float,
    amax: int,
    out: np.ndarray,
):
    """Per-p inner sum over Pauli-allowed (r, r') via transfer histograms.

    ``pvecs``: (m,3) int64; ``ball1``/``ball2``: (N,3) int64 Fermi-ball modes
    with integer norms ``n1``/``n2``; ``kf*su``: squared Fermi radii in
    integer units (ties counted inside); ``eps2``: 2*eps in units of
    (2 pi/L)^2.  Fills out[i] = sum 1/(alpha + beta + eps2).
    """
    m = pvecs.shape[0]
    h1 = np.zeros(amax + 1)
    h2 = np.zeros(amax + 1)
    for ip in range(m):
        px, py, pz = pvecs[ip, 0], pvecs[ip, 1], pvecs[ip, 2]
        for j in range(amax + 1):
            h1[j] = 0.0
            h2[j] = 0.0
        a_lo, a_hi = amax + 1, -1
        for j in range(ball1.shape[0]):
            qx = ball1[j, 0] + px
            qy = ball1[j, 1] + py
            qz = ball1[j, 2] + pz
            nq = qx * qx + qy * qy + qz * qz
            if nq > kf1su:
                alpha = nq - n1[j]
                h1[alpha] += 1.0
                if alpha < a_lo:
                    a_lo = alpha
                if alpha > a_hi:
                    a_hi = alpha
        if a_hi < 0:
            out[ip] = 0.0
            continue
        b_lo, b_hi = amax + 1, -1
        for j in range(ball2.shape[0]):
            qx = ball2[j, 0] - px
            qy = ball2[j, 1] - py
            qz = ball2[j, 2] - pz
            nq = qx * qx + qy * qy + qz * qz
            if nq > kf2su:
                beta = nq - n2[j]
                h2[beta] += 1.0
                if beta < b_lo:
                    b_lo = beta
                if beta > b_hi:
                    b_hi = beta
        if b_hi < 0:
            out[ip] = 0.0
            continue
        acc = 0.0
        for alpha in range(a_lo, a_hi + 1):
            ca = h1[alpha]
            if ca == 0.0:
                continue
            for beta in range(b_lo, b_hi + 1):
                cb = h2[beta]
                if cb != 0.0:
                    acc += ca * cb / (alpha + beta + eps2)
        out[ip] = acc
    return 0


def near_sum_direct(
    pvecs: np.ndarray,
    ball1: np.ndarray,
    n1: np.ndarray,
    ball2: np.ndarray,
    n2: np.ndarray,
    kf1su: float,
    kf2su: float,
    eps2: float,
    out: np.ndarray,
):
    """Reference fused triple loop (exact, slow); for tests and tiny lattices."""
    m = pvecs.shape[0]
    for ip in range(m):
        px, py, pz = pvecs[ip, 0], pvecs[ip, 1], pvecs[ip, 2]
        acc = 0.0
        for j in range(ball1.shape[0]):
            qx = ball1[j, 0] + px
            qy = ball1[j, 1] + py
            qz = ball1[j, 2] + pz
            nq = qx * qx + qy * qy + qz * qz
            if nq <= kf1su:
                continue
            alpha = nq - n1[j]
            for i in range(ball2.shape[0]):
                sx = ball2[i, 0] - px
                sy = ball2[i, 1] - py
                sz = ball2[i, 2] - pz
                ns = sx * sx + sy * sy + sz * sz
                if ns <= kf2su:
                    continue
                acc += 1.0 / (alpha + (ns - n2[i]) + eps2)
        out[ip] = acc
    return 0
