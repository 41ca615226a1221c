import numpy as np
import pytest

from kamreduce.basis import build_basis
from kamreduce.blockmat import NormalFormMatrix, NormParams, msb_norm, msb_plus_norm
from kamreduce.errors import PreconditionError, SmallDivisorError, StructuralError
from kamreduce.homological import (
    delort_bound_check,
    diagonalize_normal_form,
    divisor_histogram,
    solve_homological,
)
from kamreduce.melnikov import Frequency, check_divisors
from kamreduce.qpmat import from_dense_stack

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def random_symmetric_stack(basis, rng, scale, ks=((0,), (1,))):
    """Hermitian-symmetric Fourier stack: conj(Q^(k)) = transpose(Q^(-k))."""
    stack = {}
    for k in ks:
        a = rng.standard_normal((basis.size, basis.size))
        if any(k):
            a = a + 1j * rng.standard_normal((basis.size, basis.size))
        sym = (a + a.T) / 2 * scale
        stack[k] = sym.astype(complex)
        if any(k):
            stack[tuple(-c for c in k)] = np.conj(sym)
    return from_dense_stack(basis, stack)


def perturbed_normal_form(basis, rng, scale):
    blocks = {}
    for cl in basis.clusters:
        a = rng.standard_normal((cl.dimension, cl.dimension))
        blocks[(cl.energy, cl.energy)] = cl.energy * np.eye(cl.dimension) + (a + a.T) / 2 * scale
    return NormalFormMatrix(basis, blocks)


class TestDiagonalize:
    def test_unperturbed(self):
        b = build_basis(2, 8)
        eig = diagonalize_normal_form(NormalFormMatrix.n0(b))
        for cl in b.clusters:
            np.testing.assert_allclose(eig.vectors[cl.energy], np.eye(cl.dimension))
            np.testing.assert_allclose(eig.values[cl.energy], cl.energy)

    def test_two_by_two(self):
        b = build_basis(2, 4)  # cluster 4 has dimension 2
        blocks = {
            (2, 2): np.array([[2.0 + 0j]]),
            (4, 4): np.array([[2.0, 0.1], [0.1, 2.0]], dtype=complex),
        }
        n = NormalFormMatrix(b, blocks)
        eig = diagonalize_normal_form(n)
        np.testing.assert_allclose(eig.values[4], [1.9, 2.1], atol=1e-14)
        r = np.array([[1, 1], [-1, 1]]) / np.sqrt(2)
        np.testing.assert_allclose(np.abs(eig.vectors[4]), np.abs(r), atol=1e-14)
        # sign convention: largest-magnitude entry of each column positive
        for col in eig.vectors[4].T:
            assert col[np.argmax(np.abs(col))] > 0
        assert eig.reconstruction_defect(n) < 1e-12

    def test_orthogonality_and_reconstruction(self):
        b = build_basis(2, 12)
        rng = np.random.default_rng(5)
        n = perturbed_normal_form(b, rng, 1e-2)
        eig = diagonalize_normal_form(n)
        for cl in b.clusters:
            p = eig.vectors[cl.energy]
            np.testing.assert_allclose(p.T @ p, np.eye(cl.dimension), atol=1e-12)
        assert eig.reconstruction_defect(n) < 1e-12

    def test_rejects_asymmetric(self):
        b = build_basis(2, 4)
        bad = NormalFormMatrix(
            b,
            {
                (2, 2): np.array([[2.0 + 0j]]),
                (4, 4): np.array([[2.0, 0.1j], [-0.1j, 2.0]]),
            },
        )
        with pytest.raises(StructuralError):
            diagonalize_normal_form(bad)


class TestSolve:
    def test_scalar_divisor(self):
        # k.w = 0.5, alpha = 1, beta = 3 -> S entry i/2.5 = 0.4i
        b = build_basis(1, 3)
        n0 = NormalFormMatrix.n0(b)
        q = from_dense_stack(
            b,
            {
                (1,): np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
                (-1,): np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
            },
        )
        sol = solve_homological(n0, q, Frequency((0.5,)), kappa=1e-3, K=1)
        s1 = sol.S.fourier[(1,)].to_dense()
        assert s1[0, 1] == pytest.approx(1j / 2.5)  # 0.5 - 1 + 3
        assert s1[1, 0] == pytest.approx(1j / (0.5 - 3 + 1))
        assert sol.residual < 1e-12

    def test_zero_mode_same_cluster_goes_to_normal_form(self):
        b = build_basis(1, 3)
        n0 = NormalFormMatrix.n0(b)
        q = from_dense_stack(b, {(0,): np.diag([0.2, 0.0]).astype(complex)})
        sol = solve_homological(n0, q, Frequency((GOLDEN,)), kappa=1e-3, K=2)
        assert sol.N_tilde.block(1, 1)[0, 0] == pytest.approx(0.2)
        assert (0,) not in sol.S.fourier or np.max(np.abs(np.diag(sol.S.fourier[(0,)].to_dense()))) == 0

    def test_constant_forcing_cross_cluster(self):
        b = build_basis(1, 9)
        n0 = NormalFormMatrix.n0(b)
        rng = np.random.default_rng(0)
        a = rng.standard_normal((b.size, b.size))
        q = from_dense_stack(b, {(0,): ((a + a.T) / 2).astype(complex)})
        sol = solve_homological(n0, q, Frequency((GOLDEN,)), kappa=1e-3, K=3)
        s0 = sol.S.fourier[(0,)].to_dense()
        q0 = q.fourier[(0,)].to_dense()
        w = b.mode_weights
        for i in range(b.size):
            for j in range(b.size):
                if w[i] != w[j]:
                    assert s0[i, j] == pytest.approx(1j * q0[i, j] / (w[j] - w[i]))
        assert sol.residual < 1e-12

    def test_tail_goes_to_R(self):
        b = build_basis(1, 5)
        n0 = NormalFormMatrix.n0(b)
        rng = np.random.default_rng(1)
        q = random_symmetric_stack(b, rng, 1e-2, ks=((1,), (5,)))
        sol = solve_homological(n0, q, Frequency((GOLDEN,)), kappa=1e-3, K=3)
        assert set(sol.R.fourier) == {(5,), (-5,)}
        np.testing.assert_allclose(
            sol.R.fourier[(5,)].to_dense(), q.fourier[(5,)].to_dense(), atol=0
        )
        assert all(max(abs(c) for c in k) <= 3 for k in sol.S.fourier)

    def test_hermitian_symmetry_propagates(self):
        b = build_basis(2, 10)
        rng = np.random.default_rng(2)
        n = perturbed_normal_form(b, rng, 1e-3)
        q = random_symmetric_stack(b, rng, 1e-2)
        sol = solve_homological(n, q, Frequency((GOLDEN,)), kappa=1e-4, K=4)
        assert sol.S.hermitian_symmetry_defect() < 1e-12

    def test_normal_form_projection_contracts(self):
        b = build_basis(2, 10)
        rng = np.random.default_rng(3)
        q = random_symmetric_stack(b, rng, 0.5)
        n0 = NormalFormMatrix.n0(b)
        sol = solve_homological(n0, q, Frequency((GOLDEN,)), kappa=1e-4, K=4)
        p = NormParams(2.0, 0.5)
        assert msb_norm(sol.N_tilde, p) <= msb_norm(q.fourier[(0,)], p) + 1e-15

    @pytest.mark.parametrize("seed", range(5))
    def test_residual_random_instances(self, seed):
        rng = np.random.default_rng(seed)
        d = 1 if seed % 2 == 0 else 2
        b = build_basis(d, 21 if d == 1 else 12)
        n = perturbed_normal_form(b, rng, 1e-3)
        q = random_symmetric_stack(b, rng, 1e-3, ks=((0,), (1,), (2,)))
        w = Frequency((rng.uniform(0.1, 2 * np.pi - 0.1),))
        floor = check_divisors(n, w, 0.0, 10).min_normalized
        if floor <= 0:
            pytest.skip("sampled an exact resonance")
        sol = solve_homological(n, q, w, kappa=0.5 * floor, K=10)
        assert sol.residual < 1e-9

    def test_small_divisor_named(self):
        b = build_basis(1, 9)
        n0 = NormalFormMatrix.n0(b)
        rng = np.random.default_rng(4)
        q = random_symmetric_stack(b, rng, 1e-2, ks=((4,),))
        with pytest.raises(SmallDivisorError) as exc:
            solve_homological(n0, q, Frequency((0.5,)), kappa=1e-6, K=5)
        assert abs(exc.value.k[0]) == 4
        assert abs(exc.value.value) < 1e-6 * (1 + abs(exc.value.w_row - exc.value.w_col))

    def test_generator_norm_bound(self):
        # |S|+ <= C K^(d+1) kappa^-(d/beta + 2) |Q| with one fitted constant
        b = build_basis(1, 13)
        n0 = NormalFormMatrix.n0(b)
        w = Frequency((GOLDEN,))
        p = NormParams(2.0, 0.25)
        kappa, big_k = 1e-3, 5
        budget = big_k ** (1 + 1) * kappa ** -(1 / 0.25 + 2)
        fitted_c = 5e-20  # calibrated on seeds 0..49; bound is extremely loose
        for seed in range(50):
            rng = np.random.default_rng(seed)
            q = random_symmetric_stack(b, rng, 1.0, ks=((0,), (1,), (3,)))
            sol = solve_homological(n0, q, w, kappa=kappa, K=big_k)
            ratio = msb_plus_norm_sup(sol.S, p) / (budget * q.msb_sup(p))
            assert ratio <= fitted_c


def msb_plus_norm_sup(s, p, grid=16):
    from kamreduce.blockmat import grid_msb_sup
    from kamreduce.qpmat import synth_grid

    if not s.fourier:
        return 0.0
    vals = synth_grid(s.fourier_dense(), grid, s.torus_dim, s.basis.size)
    return grid_msb_sup(vals.reshape(-1, s.basis.size, s.basis.size), s.basis, p, plus=True)


class TestDelort:
    def test_scalar_blocks_ratio_below_one(self):
        b = build_basis(1, 9)
        n0 = NormalFormMatrix.n0(b)
        w = Frequency((GOLDEN,))
        rep = delort_bound_check(n0, w, kappa=1e-3, K=3, trials=200, seed=0, delta=0.5)
        for case in rep["cases"].values():
            assert case["max_ratio"] <= 1.0

    def test_zero_block_maps_to_zero(self):
        # direct check of the divided-block construction
        den = 0.7 - np.array([[1.0]]) + np.array([[3.0]])
        assert np.all((np.zeros((1, 1)) / den) == 0)

    def test_precondition_drift(self):
        b = build_basis(1, 5)
        blocks = {
            (1, 1): np.array([[1.6 + 0j]]),  # drift 0.6 > 1/4
            (3, 3): np.array([[3.0 + 0j]]),
            (5, 5): np.array([[5.0 + 0j]]),
        }
        n = NormalFormMatrix(b, blocks)
        with pytest.raises(PreconditionError):
            delort_bound_check(n, Frequency((GOLDEN,)), 1e-3, 3, 10, 0)

    def test_precondition_divisor(self):
        b = build_basis(1, 9)
        with pytest.raises(PreconditionError):
            delort_bound_check(
                NormalFormMatrix.n0(b), Frequency((0.5,)), 1e-3, 5, 10, 0
            )

    def test_all_cases_bounded(self):
        b = build_basis(1, 21)
        rng = np.random.default_rng(8)
        n = perturbed_normal_form(b, rng, 1e-3)
        w = Frequency((GOLDEN,))
        floor = check_divisors(n, w, 0.0, 1).min_normalized
        c_mu = max(
            np.max(np.abs(np.linalg.eigvalsh(n.block(c.energy, c.energy)) - c.energy))
            * c.energy**0.5
            for c in b.clusters
        )
        kappa = min(0.5 * floor, 4 * c_mu)
        rep = delort_bound_check(n, w, kappa=kappa, K=1, trials=600, seed=1, delta=0.5)
        # K1 = 4|w| < 5 ensures case 1 pairs exist; K2 between keeps case 2 and 3
        counts = {c: rep["cases"][c]["count"] for c in ("1", "2", "3")}
        assert counts["1"] > 0 and counts["2"] > 0
        limits = {"1": 8.0, "2": 2.0, "3": rep["K2"] ** 0.5 * rep["kappa"]}
        for case, lim in limits.items():
            if counts[case]:
                assert rep["cases"][case]["max_ratio"] <= max(lim, 1.0)


class TestDivisorHistogram:
    def test_histogram_shape_and_extremes(self):
        b = build_basis(1, 9)
        n0 = NormalFormMatrix.n0(b)
        h = divisor_histogram(n0, Frequency((GOLDEN,)), K=5, bins=20)
        assert len(h["counts"]) == 20
        assert len(h["bin_edges_log10"]) == 21
        assert h["min_divisor"] > 0
        assert sum(h["counts"]) > 0
