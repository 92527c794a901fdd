import math

import numpy as np
import pytest
import scipy.sparse as sp

from hyk.hyformula import SpinDensities
from hyk import lattice as latmod
from hyk import fockcheck as fs

L = 8.0
SPC = 2 * math.pi / L


def _space(kind):
    """prop34: 3 modes/spin, ball {0}; rr: 4 modes/spin, ball {+-e1}."""
    if kind == "prop34":
        rho = 0.5 * SPC**3 / (6 * math.pi**2)
        modes = [((dx, 0, 0), s) for s in (0, 1) for dx in (-1, 0, 1)]
    else:
        rho = (1.2 * SPC) ** 3 / (6 * math.pi**2)
        modes = [((dx, 0, 0), s) for s in (0, 1) for dx in (-2, -1, 1, 2)]
    d = SpinDensities(rho, rho)
    lat = latmod.build(L, d, 6 * SPC)
    return fs.build_fock(lat, modes)


@pytest.fixture(scope="module")
def f34(well_solution):
    return _space("prop34"), fs.kernel_tables(well_solution, L, 40)


@pytest.fixture(scope="module")
def frr(well_solution):
    return _space("rr"), fs.kernel_tables(well_solution, L, 64)


class TestConstruction:
    def test_dimension(self, f34):
        fock, _ = f34
        assert fock.dim == 64
        assert fock.n_modes == 6

    def test_four_modes_dim_16(self):
        rho = 0.5 * SPC**3 / (6 * math.pi**2)
        lat = latmod.build(L, SpinDensities(rho, rho), 3 * SPC)
        modes = [((dx, 0, 0), s) for s in (0, 1) for dx in (-1, 1)]
        assert fs.build_fock(lat, modes).dim == 16

    def test_too_many_modes(self):
        rho = 0.5 * SPC**3 / (6 * math.pi**2)
        lat = latmod.build(L, SpinDensities(rho, rho), 12 * SPC)
        modes = [((dx, dy, 0), s) for s in (0, 1) for dx in (-2, -1, 0, 1, 2) for dy in (0,)]
        modes += [((0, dy, 0), s) for s in (0, 1) for dy in (-2, -1, 1, 2)]
        with pytest.raises(ValueError):
            fs.build_fock(lat, modes)

    def test_inversion_symmetry_required(self):
        rho = 0.5 * SPC**3 / (6 * math.pi**2)
        lat = latmod.build(L, SpinDensities(rho, rho), 3 * SPC)
        with pytest.raises(ValueError):
            fs.build_fock(lat, [((0, 0, 0), 0), ((1, 0, 0), 0)])

    def test_car(self, f34):
        fock, _ = f34
        res = fs.car_residuals(fock)
        assert res["mixed"] <= 1e-13 and res["aa"] <= 1e-13


class TestParticleHole:
    def test_defining_properties(self, f34):
        fock, _ = f34
        ph = fs.particle_hole(fock)
        assert ph["r_omega"] <= 1e-15
        assert ph["unitarity"] <= 1e-12
        assert ph["law"] <= 1e-12

    def test_relation_on_transformed_states(self, f34):
        fock, _ = f34
        ph = fs.particle_hole(fock)
        rng = np.random.default_rng(3)
        n_up = int(np.sum(fock.in_ball[fock.spins == 0]))
        n_dn = int(np.sum(fock.in_ball[fock.spins == 1]))
        proj = fs._sector_projector(fock, n_up, n_dn)
        sector = np.nonzero(np.diag(proj))[0]
        coef = rng.normal(size=len(sector))
        psi_n = np.zeros(fock.dim)
        psi_n[sector] = coef / np.linalg.norm(coef)
        psi = ph["R"].T @ psi_n
        assert fs.particle_hole_relation_check(fock, psi) <= 1e-12

    def test_vacuum_trivial(self, f34):
        fock, _ = f34
        omega = np.zeros(fock.dim)
        omega[0] = 1.0
        assert fs.particle_hole_relation_check(fock, omega) == 0.0

    def test_negative_control(self, f34):
        fock, _ = f34
        bad = np.zeros(fock.dim)
        # one particle inside the ball only: N_in != N_out
        j = int(np.nonzero(fock.in_ball)[0][0])
        bad[1 << j] = 1.0
        assert fs.particle_hole_relation_check(fock, bad) > 0.5


class TestCorrelationTerms:
    def test_psd_pieces(self, f34):
        fock, tabs = f34
        ops = fs.build_correlation_terms(fock, tabs)
        for name in ("H0", "Q4"):
            assert np.linalg.eigvalsh(ops[name].toarray()).min() >= -1e-10

    def test_q2_hermitian(self, f34):
        fock, tabs = f34
        ops = fs.build_correlation_terms(fock, tabs)
        assert fs._spnorm(ops["Q2"] - ops["Q2"].T) <= 1e-12

    def test_h0_spectrum_enumeration_oracle(self, f34):
        fock, tabs = f34
        ops = fs.build_correlation_terms(fock, tabs)
        eig = np.sort(np.diag(ops["H0"].toarray()))
        weights = [fock.h0_weight(fock.kvecs[j], fock.spins[j]) for j in range(fock.n_modes)]
        achievable = []
        for s in range(fock.dim):
            achievable.append(sum(w for j, w in enumerate(weights) if s & (1 << j)))
        assert np.allclose(eig, np.sort(achievable), atol=1e-12)

    def test_number_conservation(self, f34):
        fock, tabs = f34
        ops = fs.build_correlation_terms(fock, tabs)
        for spin in (0, 1):
            n = fock.number_op(spin=spin)
            assert fs._spnorm(ops["H"] @ n - n @ ops["H"]) <= 1e-11

    def test_uv_complementarity(self, f34):
        fock, _ = f34
        for j in range(fock.n_modes):
            kv, s = fock.kvecs[j], fock.spins[j]
            assert fock.u(kv, s) + fock.v(kv, s) == 1.0
            assert fock.u(kv, s) * fock.v(kv, s) == 0.0

    def test_missing_kernel_shell_raises(self, f34):
        fock, _ = f34
        with pytest.raises(KeyError):
            fs.q_term(fock, {0: 1.0}, "Q4")


class TestVphiIdentity:
    def test_global_residual(self, f34):
        fock, tabs = f34
        rep = fs.verify_vphi_square_identity(fock, tabs)
        assert rep["global"] <= 1e-10
        assert rep["subspace_cancellation"] <= 1e-10

    def test_sub_displays(self, f34):
        fock, tabs = f34
        rep = fs.verify_vphi_square_identity(fock, tabs)
        assert rep["dec_T"] <= 1e-12
        assert rep["dec_S"] <= 1e-12
        assert rep["dec_TS"] <= 1e-12

    def test_zero_potential_trivial(self, f34, well_solution):
        fock, _ = f34
        zero_tabs = {name: {n: 0.0 for n in range(41)} for name in ("v", "vf", "vphi", "vphi2", "phi")}
        lhs = fs.q_term(fock, zero_tabs["v"], "Q4")
        assert fs._spnorm(lhs) == 0.0
        rep = fs.verify_vphi_square_identity(fock, zero_tabs)
        assert rep["global"] == 0.0 or math.isnan(rep["global"]) is False


class TestTTAnticommutator:
    def test_twenty_random_tuples(self, frr):
        fock, _ = frr
        tups = fs.admissible_tt_tuples(fock, 20, seed=4)
        assert len(tups) == 20
        res = fs.verify_tt_anticommutator(fock, tups)
        assert max(res) <= 1e-12

    def test_diagonal_tuple_structure(self, frr):
        fock, _ = frr
        tups = [t for t in fs.admissible_tt_tuples(fock, 200, seed=1) if t[2] == t[3] and t[5] == t[6]]
        assert tups, "no diagonal tuple found"
        res = fs.verify_tt_anticommutator(fock, tups[:5])
        assert max(res) <= 1e-12

    def test_spin_swap(self, frr):
        fock, _ = frr
        tups = fs.admissible_tt_tuples(fock, 10, seed=2)
        swapped = [(1 - s, 1 - sp_, p, q, r, rp, s_) for (s, sp_, p, q, r, rp, s_) in tups]
        res = fs.verify_tt_anticommutator(fock, swapped)
        assert max(res) <= 1e-12


class TestRRDecomposition:
    def test_residual_and_signs(self, frr):
        fock, tabs = frr
        eps = 0.3 * fock.k_fermi[0] ** 2
        rep = fs.verify_rr_decomposition(fock, tabs["phi"], eps)
        assert rep["residual"] <= 1e-9
        assert rep["lhs_norm"] > 0.0
        for name in ("I4", "I5", "I6", "I7", "I8"):
            assert rep["extremal"][name] >= -1e-10, name
        for name in ("I9", "I10"):
            assert rep["extremal"][name] <= 1e-10, name

    def test_terms_nontrivial(self, frr):
        fock, tabs = frr
        eps = 0.3 * fock.k_fermi[0] ** 2
        rep = fs.verify_rr_decomposition(fock, tabs["phi"], eps)
        norms = {k: fs._spnorm(v) for k, v in rep["terms"].items()}
        assert all(n > 0.0 for n in norms.values())

    def test_eps_required(self, frr):
        fock, tabs = frr
        with pytest.raises(ValueError):
            fs.verify_rr_decomposition(fock, tabs["phi"], 0.0)


class TestConjugation:
    def test_lower_bound(self, f34):
        fock, tabs = f34
        rep = fs.conjugation_lower_bound_check(fock, tabs, trials=100, seed=5)
        assert rep["min_gap"] >= -1e-10
        assert rep["operator_residual"] <= 1e-10
        assert rep["ffg_same_spin"] >= -1e-12

    def test_zero_potential_gap(self, f34):
        fock, _ = f34
        zero_tabs = {name: {n: 0.0 for n in range(41)} for name in ("v", "vphi", "vphi2", "phi")}
        rep = fs.conjugation_lower_bound_check(fock, zero_tabs, trials=20, seed=6)
        assert abs(rep["min_gap"]) <= 1e-10


class TestTinyED:
    def test_free_ground_state(self, f34):
        fock, tabs = f34
        kin = fs.build_correlation_terms(fock, {**tabs, "v": {n: 0.0 for n in range(41)}})["kinetic"]
        spec = fs.tiny_ed(fock, kin.toarray())
        # sector (1,1): two particles, lowest kinetic = 0 + 0 (both k=0 modes)
        assert spec[(1, 1)][0] == pytest.approx(0.0, abs=1e-12)
        k2 = fock.k2(np.array([1, 0, 0]))
        # sector (2,1): must use one k = +-e1 mode
        assert spec[(2, 1)][0] == pytest.approx(k2, rel=1e-12)

    def test_variational_vs_ffg(self, f34):
        fock, tabs = f34
        ops = fs.build_correlation_terms(fock, tabs)
        h = ops["H"].toarray()
        n_up = int(np.sum(fock.in_ball[fock.spins == 0]))
        n_dn = int(np.sum(fock.in_ball[fock.spins == 1]))
        spec = fs.tiny_ed(fock, h)
        ph = fs.particle_hole(fock)
        ffg = ph["R"][:, 0]
        assert spec[(n_up, n_dn)][0] <= float(ffg @ h @ ffg) + 1e-12

    def test_repulsion_raises_energy(self, f34):
        fock, tabs = f34
        ops = fs.build_correlation_terms(fock, tabs)
        zero = {n: 0.0 for n in range(41)}
        free = fs.build_correlation_terms(fock, {**tabs, "v": zero})
        for sector_vals, free_vals in zip(
            fs.tiny_ed(fock, ops["H"].toarray()).values(),
            fs.tiny_ed(fock, free["kinetic"].toarray()).values(),
        ):
            assert sector_vals[0] >= free_vals[0] - 1e-12

    def test_non_hermitian_rejected(self, f34):
        fock, _ = f34
        bad = np.zeros((fock.dim, fock.dim))
        bad[0, 1] = 1.0
        with pytest.raises(ValueError):
            fs.tiny_ed(fock, bad)


def test_mode_order_invariance(well_solution):
    """Permuting the mode list must not change any residual verdict."""
    rho = 0.5 * SPC**3 / (6 * math.pi**2)
    lat = latmod.build(L, SpinDensities(rho, rho), 6 * SPC)
    tabs = fs.kernel_tables(well_solution, L, 40)
    base = [((dx, 0, 0), s) for s in (0, 1) for dx in (-1, 0, 1)]
    shuffled = [base[i] for i in (4, 2, 0, 5, 1, 3)]
    reps = []
    for modes in (base, shuffled):
        fock = fs.build_fock(lat, modes)
        reps.append(fs.verify_vphi_square_identity(fock, tabs)["global"])
    assert all(r <= 1e-10 for r in reps)
