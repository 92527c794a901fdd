"""Exact second quantization on small momentum mode sets.

Operators are sparse matrices on the 2^M occupation basis with the
Jordan-Wigner sign convention, modes ordered by (spin, lexicographic k).
Momentum-space displays are assembled by a small translator from their
configuration-space form: every factor a^(*)_sigma(f_x) or a^(*)_sigma(f_y)
contributes one momentum sum with weight f_hat restricted to the mode set,
and the x/y integrals enforce momentum conservation against the radial
kernel table.  All identities verified here are exact on any
inversion-symmetric mode set, so residuals at machine precision are the
expected outcome.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .lattice import MomentumLattice

__all__ = [
    "FockSpace",
    "OperatorHandle",
    "build_fock",
    "kernel_tables",
    "particle_hole",
    "particle_hole_relation_check",
    "build_correlation_terms",
    "verify_vphi_square_identity",
    "verify_tt_anticommutator",
    "verify_rr_decomposition",
    "conjugation_lower_bound_check",
    "tiny_ed",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class OperatorHandle:
    matrix: object
    label: str = ""
    hermitian: bool = False


@dataclass(frozen=True)
class FockSpace:
    """Explicit fermionic modes (k, spin) with sparse ladder operators."""

    L: float
    k_fermi: tuple  # (up, down)
    kvecs: np.ndarray  # (M,3) int64 in units 2 pi/L
    spins: np.ndarray  # (M,) 0=up 1=down
    in_ball: np.ndarray  # (M,) bool
    dim: int
    ann: list = field(repr=False)  # sparse a_j
    cre: list = field(repr=False)
    index: dict = field(repr=False)  # (kx,ky,kz,spin) -> mode id

    @property
    def n_modes(self) -> int:
        return len(self.spins)

    def mode_id(self, kvec, spin) -> int | None:
        return self.index.get((int(kvec[0]), int(kvec[1]), int(kvec[2]), int(spin)))

    def u(self, kvec, spin) -> float:
        """Mode-restricted outside-ball indicator."""
        j = self.mode_id(kvec, spin)
        if j is None:
            return 0.0
        return 0.0 if self.in_ball[j] else 1.0

    def v(self, kvec, spin) -> float:
        """Mode-restricted Fermi-ball indicator."""
        j = self.mode_id(kvec, spin)
        if j is None:
            return 0.0
        return 1.0 if self.in_ball[j] else 0.0

    def modes_of(self, spin, ball=None) -> list:
        out = []
        for j in range(self.n_modes):
            if self.spins[j] != spin:
                continue
            if ball is True and not self.in_ball[j]:
                continue
            if ball is False and self.in_ball[j]:
                continue
            out.append(self.kvecs[j])
        return out

    def k2(self, kvec) -> float:
        sp_ = TWO_PI / self.L
        return sp_**2 * float(kvec[0] ** 2 + kvec[1] ** 2 + kvec[2] ** 2)

    def h0_weight(self, kvec, spin) -> float:
        kf = self.k_fermi[spin]
        return abs(self.k2(kvec) - kf * kf)

    def number_op(self, spin=None, ball=None):
        tot = sp.csr_matrix((self.dim, self.dim))
        for j in range(self.n_modes):
            if spin is not None and self.spins[j] != spin:
                continue
            if ball is True and not self.in_ball[j]:
                continue
            if ball is False and self.in_ball[j]:
                continue
            tot = tot + self.cre[j] @ self.ann[j]
        return tot


def _jw_operators(n_modes: int):
    dim = 1 << n_modes
    states = np.arange(dim, dtype=np.int64)
    ann = []
    for j in range(n_modes):
        bit = 1 << j
        occ = (states & bit) != 0
        cols = states[occ]
        rows = cols ^ bit
        below = cols & (bit - 1)
        # parity of occupied modes with index < j
        par = np.zeros_like(below)
        x = below.copy()
        while np.any(x):
            par ^= x & 1
            x >>= 1
        data = np.where(par == 1, -1.0, 1.0)
        a = sp.csr_matrix((data, (rows, cols)), shape=(dim, dim))
        ann.append(a)
    cre = [a.T.tocsr() for a in ann]
    return ann, cre


def build_fock(lat: MomentumLattice, selected_modes) -> FockSpace:
    """Fock space over the selected (kvec, spin) modes of the lattice.

    ``selected_modes``: iterable of (kvec, spin).  Each spin's set must be
    inversion symmetric (required by every identity verified here); at most
    16 modes.
    """
    sel = [((int(k[0]), int(k[1]), int(k[2])), int(s)) for k, s in selected_modes]
    if len(sel) > 16:
        raise ValueError("mode set too large (max 16 modes)")
    if len(set(sel)) != len(sel):
        raise ValueError("duplicate modes")
    sel.sort(key=lambda ks: (ks[1], ks[0]))
    for k, s in sel:
        if ((-k[0], -k[1], -k[2]), s) not in sel:
            raise ValueError("mode set must be inversion symmetric per spin")
    kvecs = np.array([k for k, _ in sel], dtype=np.int64)
    spins = np.array([s for _, s in sel], dtype=np.int64)
    spacing = TWO_PI / lat.L
    kf = (lat.k_fermi_up, lat.k_fermi_down)
    norms = spacing * np.sqrt((kvecs * kvecs).sum(axis=1).astype(float))
    in_ball = np.array([norms[j] <= kf[spins[j]] * (1 + 1e-12) for j in range(len(sel))])
    ann, cre = _jw_operators(len(sel))
    index = {(*k, s): j for j, (k, s) in enumerate(sel)}
    return FockSpace(lat.L, kf, kvecs, spins, in_ball, 1 << len(sel), ann, cre, index)


def car_residuals(fock: FockSpace) -> dict:
    """Max deviations of the canonical anticommutation relations."""
    m = fock.n_modes
    eye = sp.identity(fock.dim, format="csr")
    worst_mixed = 0.0
    worst_aa = 0.0
    for i in range(m):
        for j in range(m):
            acc = fock.ann[i] @ fock.cre[j] + fock.cre[j] @ fock.ann[i]
            target = eye if i == j else sp.csr_matrix((fock.dim, fock.dim))
            worst_mixed = max(worst_mixed, _spnorm(acc - target))
            worst_aa = max(worst_aa, _spnorm(fock.ann[i] @ fock.ann[j] + fock.ann[j] @ fock.ann[i]))
    return {"mixed": worst_mixed, "aa": worst_aa}


def _spnorm(a) -> float:
    if sp.issparse(a):
        return float(np.sqrt((a.multiply(a)).sum())) if a.nnz else 0.0
    return float(np.linalg.norm(a))


def _rel_residual(a, b) -> float:
    diff = _spnorm(a - b)
    scale = max(_spnorm(a), _spnorm(b), 1e-300)
    return diff / scale


# --- kernel tables -----------------------------------------------------------------

def kernel_tables(sol, L: float, n_max: int) -> dict:
    """Radial coefficient tables on integer shells 0..n_max for the box L.

    Returns dicts keyed by shell n for: 'v' (bare potential), 'vf', 'vphi',
    'vphi2' and 'phi' (periodized profile, phi[0] = 0).
    """
    from .scattering import v_hat, vf_hat, vphi2_hat, fourier_phi

    spc = TWO_PI / L
    ns = np.arange(n_max + 1)
    ps = spc * np.sqrt(ns.astype(float))
    v = v_hat(sol.potential, ps)
    vf = vf_hat(sol, ps)
    vphi2 = vphi2_hat(sol, ps)
    phi = np.empty_like(ps)
    phi[0] = 0.0
    if n_max >= 1:
        phi[1:] = fourier_phi(sol, ps[1:])
    return {
        "v": {int(n): float(v[i]) for i, n in enumerate(ns)},
        "vf": {int(n): float(vf[i]) for i, n in enumerate(ns)},
        "vphi": {int(n): float(v[i] - vf[i]) for i, n in enumerate(ns)},
        "vphi2": {int(n): float(vphi2[i]) for i, n in enumerate(ns)},
        "phi": {int(n): float(phi[i]) for i, n in enumerate(ns)},
    }


# --- display translator -------------------------------------------------------------

def _slot_modes(fock: FockSpace, weight: str, spin: int):
    if weight == "u":
        return fock.modes_of(spin, ball=False)
    if weight == "v":
        return fock.modes_of(spin, ball=True)
    return fock.modes_of(spin)


def assemble_display(fock: FockSpace, kernel: dict, slots, prefactor: float = 1.0,
                     spin_pairs=((0, 1), (1, 0)), add_hc: bool = False):
    """Translate sum_{sigma != sigma'} int dx dy g(x-y) * (slot product) to a matrix.

    Each slot is (dagger, role, weight, pos): dagger in {'c','a'}, role 0/1
    mapped onto the spin pair, weight in {'u','v','one'}, pos in {'x','y'}.
    Creation slots carry phase exp(-i k x), annihilation exp(+i k x); the two
    integrals enforce sum_x eta k = -p and sum_y eta k = +p against the
    kernel shell table g[|p|^2].  A missing shell raises KeyError.
    """
    nslots = len(slots)
    acc = sp.csr_matrix((fock.dim, fock.dim))
    for pair in spin_pairs:
        spin_of = lambda role: pair[role]
        cand = [_slot_modes(fock, w, spin_of(rl)) for (_, rl, w, _) in slots]
        if any(len(c) == 0 for c in cand):
            continue
        acc = acc + _assemble_pair(fock, kernel, slots, cand, spin_of)
    acc = prefactor * acc
    if add_hc:
        acc = acc + acc.T
    return acc


def _assemble_pair(fock: FockSpace, kernel: dict, slots, cand, spin_of):
    nslots = len(slots)
    etas = [1 if d == "a" else -1 for (d, _, _, _) in slots]
    on_x = [pos == "x" for (_, _, _, pos) in slots]
    acc = sp.csr_matrix((fock.dim, fock.dim))

    # iterate free slots 0..n-2; solve the last momentum from conservation
    def rec(i, sum_all, sum_x, chosen):
        nonlocal acc
        if i == nslots - 1:
            kj = (-etas[i] * sum_all[0], -etas[i] * sum_all[1], -etas[i] * sum_all[2])
            d, rl, w, _ = slots[i]
            spin = spin_of(rl)
            j = fock.index.get((*kj, spin))
            if j is None:
                return
            if w == "u" and fock.in_ball[j]:
                return
            if w == "v" and not fock.in_ball[j]:
                return
            if on_x[i]:
                sum_x = (sum_x[0] + etas[i] * kj[0], sum_x[1] + etas[i] * kj[1], sum_x[2] + etas[i] * kj[2])
            n_p = sum_x[0] ** 2 + sum_x[1] ** 2 + sum_x[2] ** 2
            if n_p not in kernel:
                raise KeyError(f"kernel table missing shell {n_p}")
            g = kernel[n_p]
            if g == 0.0:
                return
            mat = None
            for (dd, rr, _, _), kv in zip(slots[:-1], chosen):
                jj = fock.index[(*kv, spin_of(rr))]
                op = fock.cre[jj] if dd == "c" else fock.ann[jj]
                mat = op if mat is None else mat @ op
            op_last = fock.cre[j] if d == "c" else fock.ann[j]
            mat = op_last if mat is None else mat @ op_last
            acc = acc + (g / fock.L**3) * mat
            return
        for kv in cand[i]:
            kt = (int(kv[0]), int(kv[1]), int(kv[2]))
            new_all = (sum_all[0] + etas[i] * kt[0], sum_all[1] + etas[i] * kt[1], sum_all[2] + etas[i] * kt[2])
            if on_x[i]:
                new_x = (sum_x[0] + etas[i] * kt[0], sum_x[1] + etas[i] * kt[1], sum_x[2] + etas[i] * kt[2])
            else:
                new_x = sum_x
            rec(i + 1, new_all, new_x, chosen + [kt])

    rec(0, (0, 0, 0), (0, 0, 0), [])
    return acc

# --- correlation Hamiltonian pieces ---------------------------------------------------

def build_correlation_terms(fock: FockSpace, tables: dict) -> dict:
    """Matrices for H0, Q2, Q3, Q4, the four residual interaction pieces, and H.

    ``tables`` must hold shell dicts 'v', 'vphi', 'vphi2' (see kernel_tables).
    The quartic displays are translated from their configuration-space form;
    all coefficients are real in this basis.
    """
    v = tables["v"]
    dim = fock.dim
    h0 = sp.csr_matrix((dim, dim))
    kin = sp.csr_matrix((dim, dim))
    for j in range(fock.n_modes):
        n_op = fock.cre[j] @ fock.ann[j]
        h0 = h0 + fock.h0_weight(fock.kvecs[j], fock.spins[j]) * n_op
        kin = kin + fock.k2(fock.kvecs[j]) * n_op
    q2 = assemble_display(
        fock, v,
        [("c", 0, "u", "x"), ("c", 1, "u", "y"), ("c", 1, "v", "y"), ("c", 0, "v", "x")],
        prefactor=0.5, add_hc=True,
    )
    q3 = assemble_display(
        fock, v,
        [("c", 1, "u", "y"), ("c", 0, "u", "x"), ("c", 0, "v", "x"), ("a", 1, "u", "y")],
        prefactor=1.0, add_hc=True,
    )
    q4 = assemble_display(
        fock, v,
        [("c", 0, "u", "x"), ("c", 1, "u", "y"), ("a", 1, "u", "y"), ("a", 0, "u", "x")],
        prefactor=0.5,
    )
    e1 = assemble_display(
        fock, v,
        [("c", 0, "v", "x"), ("c", 1, "v", "y"), ("a", 1, "v", "y"), ("a", 0, "v", "x")],
        prefactor=0.5,
    )
    e2 = assemble_display(
        fock, v,
        [("c", 0, "u", "x"), ("c", 0, "v", "x"), ("a", 1, "v", "y"), ("a", 1, "u", "y")],
        prefactor=1.0,
    )
    e3 = assemble_display(
        fock, v,
        [("c", 0, "u", "x"), ("c", 1, "v", "y"), ("a", 1, "v", "y"), ("a", 0, "u", "x")],
        prefactor=-1.0,
    )
    e4 = assemble_display(
        fock, v,
        [("c", 0, "u", "x"), ("c", 1, "v", "y"), ("c", 0, "v", "x"), ("a", 1, "v", "y")],
        prefactor=1.0, add_hc=True,
    )
    # full interactions for the conjugation check
    int_opp = assemble_display(
        fock, v,
        [("c", 0, "one", "x"), ("c", 1, "one", "y"), ("a", 1, "one", "y"), ("a", 0, "one", "x")],
        prefactor=0.5,
    )
    int_same = assemble_display(
        fock, v,
        [("c", 0, "one", "x"), ("c", 0, "one", "y"), ("a", 0, "one", "y"), ("a", 0, "one", "x")],
        prefactor=0.5, spin_pairs=((0, 0), (1, 1)),
    )
    e_corr = e1 + e2 + e3 + e4
    return {
        "H0": h0,
        "kinetic": kin,
        "Q2": q2,
        "Q3": q3,
        "Q4": q4,
        "Ecorr_vvvv": e1,
        "Ecorr_uvvu": e2,
        "Ecorr_uvvu_neg": e3,
        "Ecorr_uvvv": e4,
        "Ecorr": e_corr,
        "H_corr": h0 + q2 + q3 + q4 + e_corr,
        "int_opp": int_opp,
        "int_same": int_same,
        "H_opp": kin + int_opp,
        "H": kin + int_opp + int_same,
    }


def q_term(fock: FockSpace, table: dict, which: str):
    """Q2/Q3/Q4/Q0 with an arbitrary radial kernel table."""
    if which == "Q2":
        return assemble_display(
            fock, table,
            [("c", 0, "u", "x"), ("c", 1, "u", "y"), ("c", 1, "v", "y"), ("c", 0, "v", "x")],
            prefactor=0.5, add_hc=True,
        )
    if which == "Q3":
        return assemble_display(
            fock, table,
            [("c", 1, "u", "y"), ("c", 0, "u", "x"), ("c", 0, "v", "x"), ("a", 1, "u", "y")],
            prefactor=1.0, add_hc=True,
        )
    if which == "Q4":
        return assemble_display(
            fock, table,
            [("c", 0, "u", "x"), ("c", 1, "u", "y"), ("a", 1, "u", "y"), ("a", 0, "u", "x")],
            prefactor=0.5,
        )
    if which == "Q0":
        return assemble_display(
            fock, table,
            [("c", 0, "v", "x"), ("c", 1, "v", "y"), ("a", 1, "v", "y"), ("a", 0, "v", "x")],
            prefactor=0.5,
        )
    raise ValueError(which)


# --- particle-hole transformation ------------------------------------------------------

def particle_hole(fock: FockSpace) -> dict:
    """The unitary R with R Omega = Psi_FFG and R* a*_k R = a_{-k} inside the ball.

    Built column by column from the conjugated generators; returns the dense
    matrix together with the verification residuals of the defining law.
    """
    dim = fock.dim
    m = fock.n_modes
    # Psi_FFG: all ball modes filled, ascending creation order gives + sign
    ffg_bits = 0
    for j in range(m):
        if fock.in_ball[j]:
            ffg_bits |= 1 << j
    psi_ffg = np.zeros(dim)
    psi_ffg[ffg_bits] = 1.0
    # conjugated generators R a*_j R*
    conj = []
    for j in range(m):
        if fock.in_ball[j]:
            kv = fock.kvecs[j]
            j_inv = fock.mode_id((-kv[0], -kv[1], -kv[2]), fock.spins[j])
            conj.append(fock.ann[j_inv].toarray())
        else:
            conj.append(fock.cre[j].toarray())
    r = np.zeros((dim, dim))
    for s in range(dim):
        vec = psi_ffg
        for j in range(m - 1, -1, -1):
            if s & (1 << j):
                vec = conj[j] @ vec
        r[:, s] = vec
    rt = r.T
    unitarity = float(np.linalg.norm(rt @ r - np.eye(dim)))
    law = 0.0
    for j in range(m):
        lhs = rt @ fock.cre[j].toarray() @ r
        if fock.in_ball[j]:
            kv = fock.kvecs[j]
            j_inv = fock.mode_id((-kv[0], -kv[1], -kv[2]), fock.spins[j])
            rhs = fock.ann[j_inv].toarray()
        else:
            rhs = fock.cre[j].toarray()
        law = max(law, float(np.linalg.norm(lhs - rhs)))
    r_omega = r[:, 0]
    omega_res = float(np.linalg.norm(r_omega - psi_ffg))
    return {"R": r, "unitarity": unitarity, "law": law, "r_omega": omega_res}


def particle_hole_relation_check(fock: FockSpace, psi: np.ndarray) -> float:
    """Residual of N_inside psi = N_outside psi = N/2 psi per spin."""
    worst = 0.0
    for spin in (0, 1):
        n_in = fock.number_op(spin=spin, ball=True)
        n_out = fock.number_op(spin=spin, ball=False)
        n_tot = n_in + n_out
        worst = max(worst, float(np.linalg.norm((n_in - n_out) @ psi)))
        worst = max(worst, float(np.linalg.norm((n_in - 0.5 * n_tot) @ psi)))
    return worst


# --- completion of the square for V*phi --------------------------------------------------

def _square_factors():
    """Slot lists for A = uu + T + S and its adjoint, with phi powers and signs."""
    a_fact = [
        (0, 1.0, [("a", 1, "u", "y"), ("a", 0, "u", "x")]),
        (1, 1.0, [("c", 1, "v", "y"), ("c", 0, "v", "x")]),
        (1, 1.0, [("c", 1, "v", "y"), ("a", 0, "u", "x")]),
        (1, -1.0, [("c", 0, "v", "x"), ("a", 1, "u", "y")]),
    ]
    a_dag = [
        (0, 1.0, [("c", 0, "u", "x"), ("c", 1, "u", "y")]),
        (1, 1.0, [("a", 0, "v", "x"), ("a", 1, "v", "y")]),
        (1, 1.0, [("c", 0, "u", "x"), ("a", 1, "v", "y")]),
        (1, -1.0, [("c", 1, "u", "y"), ("a", 0, "v", "x")]),
    ]
    return a_dag, a_fact


def verify_vphi_square_identity(fock: FockSpace, tables: dict) -> dict:
    """Exact operator identity behind the V*phi square completion.

    LHS = Q4 + (Q2+Q3)|_{V phi}; RHS = -(N_u N_d/L^3) (Vphi^2)^(0) + SQUARE
    - Q0|_{V phi^2} - E_S - (E_TS + h.c.) + the retained one-body pieces,
    which cancel only on the particle-hole subspace and are kept here so the
    identity holds on the whole space.  Returns the global relative residual
    plus the sub-display residuals and the subspace-cancellation check.
    """
    v_tab, vphi_tab, vphi2_tab = tables["v"], tables["vphi"], tables["vphi2"]
    phi_pow = {0: v_tab, 1: vphi_tab, 2: vphi2_tab}
    dim = fock.dim
    lhs = q_term(fock, v_tab, "Q4") + q_term(fock, vphi_tab, "Q2") + q_term(fock, vphi_tab, "Q3")

    a_dag, a_fact = _square_factors()
    square = sp.csr_matrix((dim, dim))
    for pw1, s1, sl1 in a_dag:
        for pw2, s2, sl2 in a_fact:
            square = square + assemble_display(
                fock, phi_pow[pw1 + pw2], [*sl1, *sl2], prefactor=0.5 * s1 * s2
            )

    c0 = vphi2_tab[0]
    n_up = int(np.sum(fock.in_ball[fock.spins == 0]))
    n_dn = int(np.sum(fock.in_ball[fock.spins == 1]))
    vol = fock.L**3
    const = c0 * n_up * n_dn / vol
    # retained one-body pieces from normal ordering |T|^2 and |S|^2
    nv = {0: fock.number_op(0, ball=True), 1: fock.number_op(1, ball=True)}
    nu = {0: fock.number_op(0, ball=False), 1: fock.number_op(1, ball=False)}
    rho = {0: n_up / vol, 1: n_dn / vol}
    onebody = sp.csr_matrix((dim, dim))
    for s_, sp_ in ((0, 1), (1, 0)):
        onebody = onebody + c0 * (rho[s_] * nv[sp_] - rho[sp_] * nu[s_])

    e_s = assemble_display(
        fock, vphi2_tab,
        [("c", 0, "u", "x"), ("c", 1, "v", "y"), ("a", 1, "v", "y"), ("a", 0, "u", "x")],
        prefactor=-1.0,
    ) + assemble_display(
        fock, vphi2_tab,
        [("c", 0, "u", "x"), ("c", 0, "v", "x"), ("a", 1, "v", "y"), ("a", 1, "u", "y")],
        prefactor=1.0,
    )
    e_ts = assemble_display(
        fock, vphi2_tab,
        [("c", 1, "v", "y"), ("a", 0, "v", "x"), ("a", 1, "v", "y"), ("a", 0, "u", "x")],
        prefactor=1.0,
    )
    q0 = q_term(fock, vphi2_tab, "Q0")
    rhs = square - const * sp.identity(dim, format="csr") - q0 + onebody - e_s - (e_ts + e_ts.T)
    global_res = _rel_residual(lhs, rhs)

    # sub-displays: normal ordering of |T|^2, |S|^2 and T* S
    t_sq = assemble_display(
        fock, vphi2_tab,
        [("a", 0, "v", "x"), ("a", 1, "v", "y"), ("c", 1, "v", "y"), ("c", 0, "v", "x")],
        prefactor=0.5,
    )
    dec3_rhs = const * sp.identity(dim, format="csr") + q0 - c0 * (rho[0] * nv[1] + rho[1] * nv[0])
    res_t = _rel_residual(t_sq, dec3_rhs)
    s_sq = sp.csr_matrix((dim, dim))
    for pw1, s1, sl1 in a_dag[2:]:
        for pw2, s2, sl2 in a_fact[2:]:
            s_sq = s_sq + assemble_display(fock, vphi2_tab, [*sl1, *sl2], prefactor=0.5 * s1 * s2)
    dec4_rhs = c0 * (rho[1] * nu[0] + rho[0] * nu[1]) + e_s
    res_s = _rel_residual(s_sq, dec4_rhs)
    ts_cross = sp.csr_matrix((dim, dim))
    for pw2, s2, sl2 in a_fact[2:]:
        ts_cross = ts_cross + assemble_display(fock, vphi2_tab, [*a_dag[1][2], *sl2], prefactor=0.5 * s2)
    res_ts = _rel_residual(ts_cross, e_ts)

    # subspace cancellation: N_v - N_u vanishes under the particle-hole projector
    ph = particle_hole(fock)
    r = ph["R"]
    proj = _sector_projector(fock, n_up, n_dn)
    p_ph = r.T @ proj @ r
    canc = 0.0
    for s_ in (0, 1):
        canc = max(canc, float(np.linalg.norm((nv[s_] - nu[s_]).toarray() @ p_ph)))
    return {
        "global": global_res,
        "dec_T": res_t,
        "dec_S": res_s,
        "dec_TS": res_ts,
        "subspace_cancellation": canc,
        "ph_unitarity": ph["unitarity"],
        "ph_law": ph["law"],
    }


def _sector_projector(fock: FockSpace, n_up: int, n_dn: int) -> np.ndarray:
    dim = fock.dim
    diag = np.zeros(dim)
    for s in range(dim):
        cu = cd = 0
        for j in range(fock.n_modes):
            if s & (1 << j):
                if fock.spins[j] == 0:
                    cu += 1
                else:
                    cd += 1
        if cu == n_up and cd == n_dn:
            diag[s] = 1.0
    return np.diag(diag)

# --- ladder-operator anticommutator identities ---------------------------------------------

def _a_of(fock: FockSpace, kvec, spin, dagger=False):
    j = fock.index.get((int(kvec[0]), int(kvec[1]), int(kvec[2]), int(spin)))
    if j is None:
        raise KeyError(f"mode {tuple(kvec)} spin {spin} not in the set")
    return fock.cre[j] if dagger else fock.ann[j]


def admissible_tt_tuples(fock: FockSpace, count: int, seed: int = 0) -> list:
    """Random tuples (sigma, sigma', p, q, r, r', s) obeying the Pauli constraints.

    Constraints: s, r' in the sigma' ball; r'-p, s-q outside it (but in the
    mode set); p-r and q-r in the sigma set.
    """
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
    found = []
    balls = {s: [tuple(k) for k in fock.modes_of(s, ball=True)] for s in (0, 1)}
    outs = {s: [tuple(k) for k in fock.modes_of(s, ball=False)] for s in (0, 1)}
    alls = {s: [tuple(k) for k in fock.modes_of(s)] for s in (0, 1)}
    attempts = 0
    while len(found) < count and attempts < 200000:
        attempts += 1
        sig = int(rng.integers(0, 2))
        sigp = 1 - sig
        if not balls[sigp] or not outs[sigp] or not alls[sig]:
            break
        rp = balls[sigp][int(rng.integers(0, len(balls[sigp])))]
        s_ = balls[sigp][int(rng.integers(0, len(balls[sigp])))]
        rp_m_p = outs[sigp][int(rng.integers(0, len(outs[sigp])))]
        s_m_q = outs[sigp][int(rng.integers(0, len(outs[sigp])))]
        p = tuple(rp[i] - rp_m_p[i] for i in range(3))
        q = tuple(s_[i] - s_m_q[i] for i in range(3))
        pmr = alls[sig][int(rng.integers(0, len(alls[sig])))]
        r = tuple(p[i] - pmr[i] for i in range(3))
        qmr = tuple(q[i] - r[i] for i in range(3))
        if (*qmr, sig) not in fock.index:
            continue
        found.append((sig, sigp, p, q, r, rp, s_))
    return found


def verify_tt_anticommutator(fock: FockSpace, tuples) -> list:
    """Residual of the six-operator anticommutator identity for each tuple.

    LHS = {a_{p-r,s} a_{r'-p,s'} a_{-r',s'} , a*_{-s,s'} a*_{s-q,s'} a*_{q-r,s}};
    RHS = the delta-resolved normal-ordered form.
    """
    out = []
    dim = fock.dim
    eye = sp.identity(dim, format="csr")
    for sig, sigp, p, q, r, rp, s_ in tuples:
        m = lambda *v: tuple(v)
        pmr = m(p[0] - r[0], p[1] - r[1], p[2] - r[2])
        rpmp = m(rp[0] - p[0], rp[1] - p[1], rp[2] - p[2])
        mrp = m(-rp[0], -rp[1], -rp[2])
        ms = m(-s_[0], -s_[1], -s_[2])
        smq = m(s_[0] - q[0], s_[1] - q[1], s_[2] - q[2])
        qmr = m(q[0] - r[0], q[1] - r[1], q[2] - r[2])
        left = _a_of(fock, pmr, sig) @ _a_of(fock, rpmp, sigp) @ _a_of(fock, mrp, sigp)
        right = _a_of(fock, ms, sigp, True) @ _a_of(fock, smq, sigp, True) @ _a_of(fock, qmr, sig, True)
        lhs = left @ right + right @ left
        rhs = sp.csr_matrix((dim, dim))
        if rp == s_ and p == q:
            n1 = _a_of(fock, pmr, sig, True) @ _a_of(fock, pmr, sig)
            n2 = _a_of(fock, rpmp, sigp, True) @ _a_of(fock, rpmp, sigp)
            n3 = _a_of(fock, mrp, sigp, True) @ _a_of(fock, mrp, sigp)
            rhs = rhs + (eye - n1 - n2 - n3)
        if rp == s_:
            rpmq = m(rp[0] - q[0], rp[1] - q[1], rp[2] - q[2])
            if (*rpmq, sigp) in fock.index:
                rhs = rhs + (
                    _a_of(fock, rpmq, sigp, True) @ _a_of(fock, qmr, sig, True)
                    @ _a_of(fock, pmr, sig) @ _a_of(fock, rpmp, sigp)
                )
        if rpmp == smq:
            rhs = rhs + (
                _a_of(fock, ms, sigp, True) @ _a_of(fock, qmr, sig, True)
                @ _a_of(fock, pmr, sig) @ _a_of(fock, mrp, sigp)
            )
        if p == q:
            rhs = rhs + (
                _a_of(fock, ms, sigp, True) @ _a_of(fock, smq, sigp, True)
                @ _a_of(fock, rpmp, sigp) @ _a_of(fock, mrp, sigp)
            )
        out.append(_rel_residual(lhs, rhs))
    return out


# --- the T-kernel decomposition -----------------------------------------------------------

def _omega_eps(fock: FockSpace, phi_tab: dict, p, lam1: float, lam2: float, eps: float) -> float:
    n_p = p[0] ** 2 + p[1] ** 2 + p[2] ** 2
    if n_p not in phi_tab:
        raise KeyError(f"phi table missing shell {n_p}")
    den = lam1 + lam2 + 2.0 * eps
    if den == 0.0:
        raise ZeroDivisionError("vanishing energy denominator")
    sp_ = TWO_PI / fock.L
    p2 = sp_**2 * n_p
    return 2.0 * p2 * phi_tab[n_p] / den


def build_t_operators(fock: FockSpace, phi_tab: dict, eps: float) -> dict:
    """T_sigma(r)* for every mode r, from the regularized ladder kernel."""
    sp_ = TWO_PI / fock.L
    k2 = lambda v: sp_**2 * float(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
    t_ops = {}
    for sig in (0, 1):
        sigp = 1 - sig
        balls_p = [tuple(k) for k in fock.modes_of(sigp, ball=True)]
        all_sig = [tuple(k) for k in fock.modes_of(sig)]
        set_sigp = [tuple(k) for k in fock.modes_of(sigp)]
        for r in all_sig:
            acc = sp.csr_matrix((fock.dim, fock.dim))
            for rp in balls_p:
                mrp = (-rp[0], -rp[1], -rp[2])
                for rpmp in set_sigp:
                    if fock.u(rpmp, sigp) == 0.0:
                        continue
                    p = (rp[0] - rpmp[0], rp[1] - rpmp[1], rp[2] - rpmp[2])
                    pmr = (p[0] - r[0], p[1] - r[1], p[2] - r[2])
                    if (*pmr, sig) not in fock.index:
                        continue
                    lam2 = k2(rpmp) - k2(rp)  # lam_{-p, r'}
                    coeff = 0.0
                    # omega^eps_{-r, r'}(p) u_sig(p-r) v_sig(r)
                    if fock.v(r, sig) == 1.0 and fock.u(pmr, sig) == 1.0:
                        lam1 = k2(pmr) - k2(r)  # lam_{p,-r} = |p-r|^2 - |r|^2
                        coeff += _omega_eps(fock, phi_tab, p, lam1, lam2, eps)
                    # - omega^eps_{r-p, r'}(p) v_sig(r-p) u_sig(r);  note v(r-p) = v(p-r)
                    if fock.u(r, sig) == 1.0 and fock.v(pmr, sig) == 1.0:
                        lam1 = k2(r) - k2(pmr)  # lam_{p, r-p} = |r|^2 - |r-p|^2
                        coeff -= _omega_eps(fock, phi_tab, p, lam1, lam2, eps)
                    if coeff == 0.0:
                        continue
                    b_op = _a_of(fock, rpmp, sigp) @ _a_of(fock, mrp, sigp)
                    acc = acc + coeff * (_a_of(fock, pmr, sig) @ b_op)
            t_ops[(sig, r)] = acc / fock.L**3
    return t_ops


def verify_rr_decomposition(fock: FockSpace, phi_tab: dict, eps: float) -> dict:
    """Residual of the ten-term decomposition of the weighted {T*, T} sum.

    Also returns extremal eigenvalues certifying I_4..I_8 >= 0 and
    I_9, I_10 <= 0.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    t_ops = build_t_operators(fock, phi_tab, eps)
    dim = fock.dim
    lhs = sp.csr_matrix((dim, dim))
    for (sig, r), t_dag in t_ops.items():
        w = fock.h0_weight(np.array(r), sig)
        if w == 0.0 or t_dag.nnz == 0:
            continue
        t = t_dag.T.tocsr()
        lhs = lhs + w * (t_dag @ t + t @ t_dag)
    terms = _rr_terms(fock, phi_tab, eps)
    rhs = sp.csr_matrix((dim, dim))
    for mat in terms.values():
        rhs = rhs + mat
    res = _rel_residual(lhs, rhs)
    eigs = {}
    for name in ("I4", "I5", "I6", "I7", "I8"):
        dense = terms[name].toarray()
        eigs[name] = float(np.linalg.eigvalsh(dense).min())
    for name in ("I9", "I10"):
        dense = terms[name].toarray()
        eigs[name] = float(np.linalg.eigvalsh(dense).max())
    return {"residual": res, "extremal": eigs, "terms": terms, "lhs_norm": _spnorm(lhs)}


def _rr_terms(fock: FockSpace, phi_tab: dict, eps: float) -> dict:
    """The ten displays I_1..I_10 assembled literally."""
    sp_ = TWO_PI / fock.L
    k2 = lambda v: sp_**2 * float(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
    dim = fock.dim
    vol6 = fock.L**6
    eye = sp.identity(dim, format="csr")

    def omega(rr, rrp, pp):
        lam1 = k2((rr[0] + pp[0], rr[1] + pp[1], rr[2] + pp[2])) - k2(rr)
        lam2 = k2((rrp[0] - pp[0], rrp[1] - pp[1], rrp[2] - pp[2])) - k2(rrp)
        return _omega_eps(fock, phi_tab, pp, lam1, lam2, eps)

    terms = {name: sp.csr_matrix((dim, dim)) for name in
             ("I1", "I2", "I3", "I4", "I5", "I6", "I7", "I8", "I9", "I10")}
    for sig in (0, 1):
        sigp = 1 - sig
        kf2_sig = fock.k_fermi[sig] ** 2
        vball = [tuple(k) for k in fock.modes_of(sig, ball=True)]
        vball_p = [tuple(k) for k in fock.modes_of(sigp, ball=True)]
        uout = [tuple(k) for k in fock.modes_of(sig, ball=False)]
        uout_p = [tuple(k) for k in fock.modes_of(sigp, ball=False)]
        # p from r+p in modes: iterate r, r+p
        for r in vball:
            for rpp in uout:  # r+p
                p = (rpp[0] - r[0], rpp[1] - r[1], rpp[2] - r[2])
                for rp in vball_p:
                    rpmp = (rp[0] - p[0], rp[1] - p[1], rp[2] - p[2])
                    if fock.u(rpmp, sigp) == 0.0:
                        continue
                    om = omega(r, rp, p)
                    om2 = om * om
                    lam_r = k2(rpp) - k2(r)
                    w_rpp = abs(k2(rpp) - kf2_sig)
                    w_r = abs(k2(r) - kf2_sig)
                    mr = (-r[0], -r[1], -r[2])
                    mrp = (-rp[0], -rp[1], -rp[2])
                    terms["I1"] = terms["I1"] + (lam_r * om2 / vol6) * eye
                    terms["I2"] = terms["I2"] - (lam_r * om2 / vol6) * (
                        _a_of(fock, mrp, sigp, True) @ _a_of(fock, mrp, sigp))
                    terms["I3"] = terms["I3"] - (w_rpp * om2 / vol6) * (
                        _a_of(fock, mr, sig, True) @ _a_of(fock, mr, sig))
                    terms["I9"] = terms["I9"] - (lam_r * om2 / vol6) * (
                        _a_of(fock, rpmp, sigp, True) @ _a_of(fock, rpmp, sigp))
                    terms["I10"] = terms["I10"] - (w_r * om2 / vol6) * (
                        _a_of(fock, rpp, sig, True) @ _a_of(fock, rpp, sig))
                    # quartic displays with the second transfer q
                    for rppq in vball:  # r+p-q in the sigma ball
                        q = (rpp[0] - rppq[0], rpp[1] - rppq[1], rpp[2] - rppq[2])
                        rpmpq = (rp[0] - p[0] + q[0], rp[1] - p[1] + q[1], rp[2] - p[2] + q[2])
                        if fock.v(rpmpq, sigp) == 1.0:
                            om_b = omega(rppq, rpmpq, q)
                            op = (_a_of(fock, (-rpmpq[0], -rpmpq[1], -rpmpq[2]), sigp, True)
                                  @ _a_of(fock, (q[0] - p[0] - r[0], q[1] - p[1] - r[1], q[2] - p[2] - r[2]), sig, True)
                                  @ _a_of(fock, mr, sig) @ _a_of(fock, mrp, sigp))
                            terms["I4"] = terms["I4"] + (w_rpp * om * om_b / vol6) * op
                    for rpq in uout_p:  # r'-q outside
                        q = (rp[0] - rpq[0], rp[1] - rpq[1], rp[2] - rpq[2])
                        rq = (r[0] + q[0], r[1] + q[1], r[2] + q[2])
                        if fock.u(rq, sig) == 1.0:
                            om_b = omega(r, rp, q)
                            op = (_a_of(fock, rpq, sigp, True) @ _a_of(fock, rq, sig, True)
                                  @ _a_of(fock, rpp, sig) @ _a_of(fock, rpmp, sigp))
                            terms["I5"] = terms["I5"] + (w_r * om * om_b / vol6) * op
                    for s_ in vball_p:
                        smp = (s_[0] - p[0], s_[1] - p[1], s_[2] - p[2])
                        if fock.u(smp, sigp) == 1.0:
                            om_b = omega(r, s_, p)
                            op = (_a_of(fock, (-s_[0], -s_[1], -s_[2]), sigp, True)
                                  @ _a_of(fock, smp, sigp, True)
                                  @ _a_of(fock, rpmp, sigp) @ _a_of(fock, mrp, sigp))
                            terms["I6"] = terms["I6"] + (lam_r * om * om_b / vol6) * op
                    for rpq in uout_p:  # r'-q outside for I7
                        q = (rp[0] - rpq[0], rp[1] - rpq[1], rp[2] - rpq[2])
                        rppq = (rpp[0] - q[0], rpp[1] - q[1], rpp[2] - q[2])  # r+p-q
                        if fock.v(rppq, sig) == 1.0:
                            om_b = omega(rppq, rp, q)
                            op = (_a_of(fock, rpq, sigp, True)
                                  @ _a_of(fock, (q[0] - p[0] - r[0], q[1] - p[1] - r[1], q[2] - p[2] - r[2]), sig, True)
                                  @ _a_of(fock, mr, sig) @ _a_of(fock, rpmp, sigp))
                            terms["I7"] = terms["I7"] + (w_rpp * om * om_b / vol6) * op
                    for rq in uout:  # r+q outside for I8
                        q = (rq[0] - r[0], rq[1] - r[1], rq[2] - r[2])
                        rpmpq = (rp[0] - p[0] + q[0], rp[1] - p[1] + q[1], rp[2] - p[2] + q[2])
                        if fock.v(rpmpq, sigp) == 1.0:
                            om_b = omega(r, rpmpq, q)
                            op = (_a_of(fock, (-rpmpq[0], -rpmpq[1], -rpmpq[2]), sigp, True)
                                  @ _a_of(fock, rq, sig, True)
                                  @ _a_of(fock, rpp, sig) @ _a_of(fock, mrp, sigp))
                            terms["I8"] = terms["I8"] + (w_r * om * om_b / vol6) * op
    return terms


# --- conjugation lower bound and tiny exact diagonalization -------------------------------

def ffg_energy_lattice(fock: FockSpace, v_tab: dict) -> float:
    """<Psi_FFG, H_opp Psi_FFG>: kinetic plus the direct opposite-spin term."""
    kin = 0.0
    n = {0: 0, 1: 0}
    for j in range(fock.n_modes):
        if fock.in_ball[j]:
            kin += fock.k2(fock.kvecs[j])
            n[int(fock.spins[j])] += 1
    return kin + v_tab[0] * n[0] * n[1] / fock.L**3


def conjugation_lower_bound_check(fock: FockSpace, tables: dict, trials: int = 100,
                                  seed: int = 5) -> dict:
    """min over random sector states of <H> - E_FFG - <R* psi, H_corr R* psi>.

    The gap equals the (positive semidefinite) equal-spin interaction
    expectation when the normal-ordered displays are assembled correctly,
    so it must never fall below -1e-10.
    """
    ops = build_correlation_terms(fock, tables)
    ph = particle_hole(fock)
    r = ph["R"]
    n_up = int(np.sum(fock.in_ball[fock.spins == 0]))
    n_dn = int(np.sum(fock.in_ball[fock.spins == 1]))
    e_ffg = ffg_energy_lattice(fock, tables["v"])
    proj = _sector_projector(fock, n_up, n_dn)
    sector = np.nonzero(np.diag(proj))[0]
    h = ops["H"].toarray()
    h_corr = ops["H_corr"].toarray()
    h_same = ops["int_same"].toarray()
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 1], dtype=np.uint64)))
    min_gap = math.inf
    ffg_gap = None
    for t in range(trials):
        coef = rng.normal(size=len(sector)) + 1j * rng.normal(size=len(sector))
        psi = np.zeros(fock.dim, dtype=complex)
        psi[sector] = coef / np.linalg.norm(coef)
        rpsi = r.T @ psi
        gap = float(np.real(psi.conj() @ h @ psi - psi.conj() @ (e_ffg * psi)
                            - rpsi.conj() @ h_corr @ rpsi))
        min_gap = min(min_gap, gap)
    # operator-level identity on the sector: H_opp - E_FFG = R H_corr R*
    lhs = proj @ (ops["H_opp"].toarray() - e_ffg * np.eye(fock.dim)) @ proj
    rhs = proj @ (r @ h_corr @ r.T) @ proj
    op_res = float(np.linalg.norm(lhs - rhs)) / max(float(np.linalg.norm(lhs)), 1e-300)
    psi_ffg = r[:, 0]
    ffg_gap = float(psi_ffg @ h_same @ psi_ffg)
    return {"min_gap": min_gap, "operator_residual": op_res, "ffg_same_spin": ffg_gap,
            "e_ffg": e_ffg}


def tiny_ed(fock: FockSpace, h: OperatorHandle | np.ndarray, n_eigs: int = 4) -> dict:
    """Lowest eigenvalues per (N_up, N_down) sector of a hermitian operator."""
    mat = h.matrix if isinstance(h, OperatorHandle) else h
    if sp.issparse(mat):
        mat = mat.toarray()
    if float(np.linalg.norm(mat - mat.T.conj())) > 1e-10 * max(1.0, float(np.linalg.norm(mat))):
        raise ValueError("operator is not hermitian")
    dim = fock.dim
    cu = np.zeros(dim, dtype=int)
    cd = np.zeros(dim, dtype=int)
    for j in range(fock.n_modes):
        bit = (np.arange(dim) >> j) & 1
        if fock.spins[j] == 0:
            cu += bit
        else:
            cd += bit
    out = {}
    m_up = int(np.sum(fock.spins == 0))
    m_dn = int(np.sum(fock.spins == 1))
    for nu_ in range(m_up + 1):
        for nd_ in range(m_dn + 1):
            idx = np.nonzero((cu == nu_) & (cd == nd_))[0]
            block = mat[np.ix_(idx, idx)]
            vals = np.linalg.eigvalsh(block)
            out[(nu_, nd_)] = vals[: min(n_eigs, len(vals))].tolist()
    return out
