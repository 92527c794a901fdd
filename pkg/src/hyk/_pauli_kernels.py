"""Per-sample momentum integrals for the Pauli-blocked correction.

For a sampled pair (r, r') inside the two Fermi balls the 3-d momentum
integral of

    weight(|p|) * [ 1/(2|p|^2) - u(p) / (2|p|^2 + 2 p.(r-r') + 2 eps) ]

is evaluated by angular quadrature with per-ray radial handling.  Along a
ray the Pauli factor u switches on at the exit radius rho* = max(rho1, rho2)
of the union of the two displaced Fermi balls, and beyond rho* the
unit-weight radial integral is elementary (log/arctan antiderivatives), so
for constant weight the only numerical error is angular.  The angular
integrand has a single derivative kink along the curve rho1 = rho2; the
quadrature locates it (monotonicity in cos(phi) gives at most one kink per
meridian) and splits panels there.

Rays are regularized individually: the divergent (c/2) log B piece of the
unit-weight tail cancels exactly between opposite rays of the symmetric
angular rule, so it is simply dropped.

The frame is chosen with the polar axis along d = r - r', which puts both
r and r' in the phi = 0 plane; integrands are then even in phi.

Everything here is written in scalar numba-compatible style; the module
exposes jitted and pure-python variants of the chunk drivers, selected by
the HYK_DISABLE_NUMBA environment flag in hyk._accel.
"""

from __future__ import annotations

import math

import numpy as np

FOUR_PI = 4.0 * math.pi


def _k_int(y1: float, y2: float, m: float, to_inf: bool) -> float:
    """integral of dy / (y^2 + m) from y1 to y2 (or to infinity).

    Requires y^2 + m > 0 on the path.  Stable for any sign of m via
    atan2 / log / series branches.
    """
    scale = y1 * y1 + abs(m)
    if scale <= 0.0:
        return 0.0
    s = m / scale
    if s > 1e-7:
        sm = math.sqrt(m)
        if to_inf:
            return math.atan2(sm, y1) / sm
        num = (y2 - y1) * sm
        den = m + y1 * y2
        return math.atan2(num, den) / sm
    if s < -1e-7:
        sm = math.sqrt(-m)
        d1 = y1 - sm
        if d1 <= 0.0:
            d1 = 1e-300
        if to_inf:
            return 0.5 / sm * math.log((y1 + sm) / d1)
        d2 = y2 - sm
        if d2 <= 0.0:
            d2 = 1e-300
        return 0.5 / sm * (math.log((y1 + sm) / d1) - math.log((y2 + sm) / d2))
    # |m| << y1^2: series of the antiderivative -1/y + m/(3y^3) - m^2/(5y^5)
    iy = 1.0 / y1
    lower = -iy + m * iy**3 / 3.0 - m * m * iy**5 / 5.0
    if to_inf:
        return -lower
    iy = 1.0 / y2
    upper = -iy + m * iy**3 / 3.0 - m * m * iy**5 / 5.0
    return upper - lower


def _j_unit_reg(c: float, eps: float, rho_s: float) -> float:
    """Regularized integral of (c rho + eps)/(2 Q) on (rho*, inf), Q = rho^2+c rho+eps.

    The (c/2) ln B divergence is dropped; opposite rays cancel it exactly.
    """
    q = rho_s * rho_s + c * rho_s + eps
    if q < 1e-300:
        q = 1e-300
    y1 = rho_s + 0.5 * c
    m = eps - 0.25 * c * c
    return 0.5 * (-0.5 * c * math.log(q) + (eps - 0.5 * c * c) * _k_int(y1, 0.0, m, True))


def _j_unit_between(c: float, eps: float, r1: float, r2: float) -> float:
    """integral of (c rho + eps)/(2 Q) on (r1, r2)."""
    if r2 <= r1:
        return 0.0
    q1 = r1 * r1 + c * r1 + eps
    q2 = r2 * r2 + c * r2 + eps
    if q1 < 1e-300:
        q1 = 1e-300
    m = eps - 0.25 * c * c
    k = _k_int(r1 + 0.5 * c, r2 + 0.5 * c, m, False)
    return 0.5 * (0.5 * c * math.log(q2 / q1) + (eps - 0.5 * c * c) * k)


def _j_rho2_between(c: float, eps: float, r1: float, r2: float) -> float:
    """integral of rho^2/(2 Q) on (r1, r2): rho^2/Q = 1 - (c rho + eps)/Q."""
    if r2 <= r1:
        return 0.0
    return 0.5 * (r2 - r1) - _j_unit_between(c, eps, r1, r2)


def _w_interp(rho: float, dp: float, wtab: np.ndarray) -> float:
    x = rho / dp
    j = int(x)
    if j >= wtab.shape[0] - 1:
        return 0.0
    f = x - j
    return wtab[j] * (1.0 - f) + wtab[j + 1] * f


def _cw_interp(rho: float, dp: float, cwtab: np.ndarray) -> float:
    x = rho / dp
    j = int(x)
    if j >= cwtab.shape[0] - 1:
        return cwtab[cwtab.shape[0] - 1]
    f = x - j
    return cwtab[j] * (1.0 - f) + cwtab[j + 1] * f


def _rho_exit(a1: float, b1: float, a2: float, b2: float):
    """Exit radii of the two displaced balls along the ray."""
    r1 = -a1 + math.sqrt(a1 * a1 + b1)
    r2 = a2 + math.sqrt(a2 * a2 + b2)
    return r1, r2


def _ray_gap(st: float, ct: float, w: float, rt: float, z1: float, z2: float, b1: float, b2: float) -> float:
    """rho1 - rho2 along the direction (theta, phi) with w = cos(phi)."""
    a1 = rt * st * w + z1 * ct
    a2 = rt * st * w + z2 * ct
    r1, r2 = _rho_exit(a1, b1, a2, b2)
    return r1 - r2


def _sample_pair(
    rx: float,
    ry: float,
    rz: float,
    px: float,
    py: float,
    pz: float,
    k1: float,
    k2: float,
    eps_c: float,
    eps_w: float,
    want_w: int,
    s_split: float,
    dp: float,
    wtab: np.ndarray,
    cwtab: np.ndarray,
    b_split: float,
    m1: float,
    m2: float,
    m3: float,
    m4: float,
    glx_t: np.ndarray,
    glw_t: np.ndarray,
    glx_p: np.ndarray,
    glw_p: np.ndarray,
):
    """Angular-quadrature momentum integral for one sampled (r, r') pair.

    Returns (unit-weight bracket at eps_c, weighted bracket at eps_w, and the
    weighted Pauli term restricted to |p| <= s_split when s_split > 0).
    """
    dx = rx - px
    dy = ry - py
    dz = rz - pz
    dm = math.sqrt(dx * dx + dy * dy + dz * dz)
    rr = rx * rx + ry * ry + rz * rz
    pp = px * px + py * py + pz * pz
    b1 = k1 * k1 - rr
    if b1 < 0.0:
        b1 = 0.0
    b2 = k2 * k2 - pp
    if b2 < 0.0:
        b2 = 0.0
    if dm > 1e-14 * (k1 + k2):
        ex, ey, ez = dx / dm, dy / dm, dz / dm
    else:
        dm = 0.0
        ex, ey, ez = 0.0, 0.0, 1.0
    z1 = rx * ex + ry * ey + rz * ez
    z2 = px * ex + py * ey + pz * ez
    t2 = rr - z1 * z1
    rt = math.sqrt(t2) if t2 > 0.0 else 0.0

    # theta breakpoints: kink curve crossing the phi = 0 / phi = pi meridians
    nscan = 33
    brk = np.empty(10)
    nbrk = 0
    for meridian in range(2):
        w = 1.0 if meridian == 0 else -1.0
        tprev = 0.0
        gprev = _ray_gap(0.0, 1.0, w, rt, z1, z2, b1, b2)
        for i in range(1, nscan):
            t = math.pi * i / (nscan - 1.0)
            g = _ray_gap(math.sin(t), math.cos(t), w, rt, z1, z2, b1, b2)
            if (gprev < 0.0) != (g < 0.0) and nbrk < 10:
                lo, hi = tprev, t
                glo = gprev
                for _ in range(44):
                    mid = 0.5 * (lo + hi)
                    gm = _ray_gap(math.sin(mid), math.cos(mid), w, rt, z1, z2, b1, b2)
                    if (glo < 0.0) == (gm < 0.0):
                        lo = mid
                        glo = gm
                    else:
                        hi = mid
                brk[nbrk] = 0.5 * (lo + hi)
                nbrk += 1
            tprev = t
            gprev = g
    # sorted unique panel edges (0 and pi are not kink onsets)
    edges = np.empty(24)
    isbrk = np.empty(24, dtype=np.int64)
    edges[0] = 0.0
    isbrk[0] = 0
    ne = 1
    for _ in range(nbrk):
        # insertion of the smallest remaining break
        best = math.pi
        for j in range(nbrk):
            if brk[j] > edges[ne - 1] + 1e-12 and brk[j] < best:
                best = brk[j]
        if best < math.pi:
            edges[ne] = best
            isbrk[ne] = 1
            ne += 1
    edges[ne] = math.pi
    isbrk[ne] = 0
    ne += 1
    # split panels with breaks at both ends so each panel has at most one
    j = 0
    while j < ne - 1 and ne < 23:
        if isbrk[j] == 1 and isbrk[j + 1] == 1:
            for k in range(ne, j + 1, -1):
                edges[k] = edges[k - 1]
                isbrk[k] = isbrk[k - 1]
            edges[j + 1] = 0.5 * (edges[j] + edges[j + 2])
            isbrk[j + 1] = 0
            ne += 1
        j += 1

    nt = glx_t.shape[0]
    npn = glx_p.shape[0]
    acc_c = 0.0
    acc_w = 0.0
    acc_s = 0.0
    for ie in range(ne - 1):
        t0, t1 = edges[ie], edges[ie + 1]
        ht = 0.5 * (t1 - t0)
        mt = 0.5 * (t1 + t0)
        # sqrt map towards a kink end restores smoothness of the panel integrand
        map_left = isbrk[ie] == 1
        map_right = isbrk[ie + 1] == 1
        for it in range(nt):
            if map_left and not map_right:
                xi = 0.5 + 0.5 * glx_t[it]
                th = t0 + (t1 - t0) * xi * xi
                wt_t = glw_t[it] * (t1 - t0) * xi
            elif map_right and not map_left:
                xi = 0.5 + 0.5 * glx_t[it]
                th = t1 - (t1 - t0) * xi * xi
                wt_t = glw_t[it] * (t1 - t0) * xi
            else:
                th = mt + ht * glx_t[it]
                wt_t = glw_t[it] * ht
            st = math.sin(th)
            ct = math.cos(th)
            c = dm * ct
            # kink location in phi (monotone in cos(phi))
            gp = _ray_gap(st, ct, 1.0, rt, z1, z2, b1, b2)
            gm = _ray_gap(st, ct, -1.0, rt, z1, z2, b1, b2)
            if (gp < 0.0) != (gm < 0.0):
                lo, hi = -1.0, 1.0
                # sign(g(lo)) == sign(gm): root stays in [mid, hi] while signs match
                for _ in range(44):
                    mid = 0.5 * (lo + hi)
                    gmid = _ray_gap(st, ct, mid, rt, z1, z2, b1, b2)
                    if (gmid < 0.0) == (gm < 0.0):
                        lo = mid
                    else:
                        hi = mid
                wk = 0.5 * (lo + hi)
                if wk > 1.0:
                    wk = 1.0
                elif wk < -1.0:
                    wk = -1.0
                phik = math.acos(wk)
                nseg = 2
            else:
                phik = math.pi
                nseg = 1
            # weighted-channel theta-level tail moments (region beyond b_split)
            if want_w == 1:
                cc = c * c
                reg2 = (
                    0.5 * c * m1
                    + 0.5 * (eps_w - cc) * m2
                    + (0.5 * c * cc - c * eps_w) * m3
                    + (-0.5 * cc * cc + 1.5 * cc * eps_w - 0.5 * eps_w * eps_w) * m4
                )
            else:
                reg2 = 0.0
            for iseg in range(nseg):
                if nseg == 1:
                    p0, p1 = 0.0, math.pi
                elif iseg == 0:
                    p0, p1 = 0.0, phik
                else:
                    p0, p1 = phik, math.pi
                hp = 0.5 * (p1 - p0)
                if hp <= 0.0:
                    continue
                mp = 0.5 * (p1 + p0)
                for ip in range(npn):
                    ph = mp + hp * glx_p[ip]
                    wgt = wt_t * glw_p[ip] * hp * st * 2.0  # even in phi
                    w = math.cos(ph)
                    a1 = rt * st * w + z1 * ct
                    a2 = rt * st * w + z2 * ct
                    r1, r2 = _rho_exit(a1, b1, a2, b2)
                    rs = r1 if r1 > r2 else r2
                    acc_c += wgt * (0.5 * rs + _j_unit_reg(c, eps_c, rs))
                    if want_w == 1:
                        ws = _w_interp(rs, dp, wtab)
                        val = 0.5 * _cw_interp(rs, dp, cwtab)
                        val += ws * _j_unit_between(c, eps_w, rs, b_split)
                        # correction quadrature: (W - W(rho*)) * (c rho + eps)/(2Q)
                        npan = 6
                        for ipan in range(npan):
                            q0 = rs + (b_split - rs) * ipan / npan
                            q1 = rs + (b_split - rs) * (ipan + 1) / npan
                            hq = 0.5 * (q1 - q0)
                            mq = 0.5 * (q1 + q0)
                            for iq in range(npn):
                                rho = mq + hq * glx_p[iq]
                                qq = rho * rho + c * rho + eps_w
                                if qq < 1e-300:
                                    qq = 1e-300
                                val += (
                                    glw_p[iq]
                                    * hq
                                    * (_w_interp(rho, dp, wtab) - ws)
                                    * (c * rho + eps_w)
                                    / (2.0 * qq)
                                )
                        val += reg2
                        acc_w += wgt * val
                        if s_split > 0.0 and s_split > rs:
                            sv = ws * _j_rho2_between(c, eps_w, rs, s_split)
                            for ipan in range(4):
                                q0 = rs + (s_split - rs) * ipan / 4.0
                                q1 = rs + (s_split - rs) * (ipan + 1) / 4.0
                                hq = 0.5 * (q1 - q0)
                                mq = 0.5 * (q1 + q0)
                                for iq in range(npn):
                                    rho = mq + hq * glx_p[iq]
                                    qq = rho * rho + c * rho + eps_w
                                    if qq < 1e-300:
                                        qq = 1e-300
                                    sv += (
                                        glw_p[iq]
                                        * hq
                                        * (_w_interp(rho, dp, wtab) - ws)
                                        * rho
                                        * rho
                                        / (2.0 * qq)
                                    )
                            acc_s += wgt * sv
    return acc_c, acc_w, acc_s


def pauli_chunk(
    u6: np.ndarray,
    i_up: int,
    i_dn: int,
    nshell: int,
    k1: float,
    k2: float,
    eps_c: float,
    eps_w: float,
    want_w: int,
    s_split: float,
    dp: float,
    wtab: np.ndarray,
    cwtab: np.ndarray,
    b_split: float,
    m1: float,
    m2: float,
    m3: float,
    m4: float,
    glx_t: np.ndarray,
    glw_t: np.ndarray,
    glx_p: np.ndarray,
    glw_p: np.ndarray,
    out_c: np.ndarray,
    out_w: np.ndarray,
    out_s: np.ndarray,
):
    """Evaluate one chunk of stratified samples; fills the out arrays in order."""
    m = u6.shape[0]
    for i in range(m):
        fr1 = (i_up + u6[i, 0]) / nshell
        rad1 = k1 * fr1 ** (1.0 / 3.0)
        cz = 2.0 * u6[i, 1] - 1.0
        sz = math.sqrt(max(1.0 - cz * cz, 0.0))
        ph = 2.0 * math.pi * u6[i, 2]
        rx = rad1 * sz * math.cos(ph)
        ry = rad1 * sz * math.sin(ph)
        rz = rad1 * cz
        fr2 = (i_dn + u6[i, 3]) / nshell
        rad2 = k2 * fr2 ** (1.0 / 3.0)
        cz2 = 2.0 * u6[i, 4] - 1.0
        sz2 = math.sqrt(max(1.0 - cz2 * cz2, 0.0))
        ph2 = 2.0 * math.pi * u6[i, 5]
        px = rad2 * sz2 * math.cos(ph2)
        py = rad2 * sz2 * math.sin(ph2)
        pz = rad2 * cz2
        gc, gw, gs = _sample_pair(
            rx, ry, rz, px, py, pz, k1, k2, eps_c, eps_w, want_w, s_split,
            dp, wtab, cwtab, b_split, m1, m2, m3, m4,
            glx_t, glw_t, glx_p, glw_p,
        )
        out_c[i] = gc
        out_w[i] = gw
        out_s[i] = gs
    return 0
