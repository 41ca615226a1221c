import numpy as np
import pytest

from kamreduce.basis import (
    Mode,
    build_basis,
    eval_eigenfunction,
    gram_matrix,
    hermite_function,
    sobolev_weight,
)
from kamreduce.errors import ParameterError


class TestEnumeration:
    def test_d1_cutoff7(self):
        b = build_basis(1, 7, 32)
        assert [c.energy for c in b.clusters] == [1, 3, 5, 7]
        assert all(c.dimension == 1 for c in b.clusters)

    def test_d2_cutoff6(self):
        b = build_basis(2, 6, 32)
        assert [(c.energy, c.dimension) for c in b.clusters] == [(2, 1), (4, 2), (6, 3)]

    def test_d3_cutoff5(self):
        b = build_basis(3, 5, 32)
        assert [(c.energy, c.dimension) for c in b.clusters] == [(3, 1), (5, 3)]

    def test_dimension_bound(self):
        # card [a] <= w_a^(d-1)
        for d in (1, 2, 3):
            b = build_basis(d, d + 8)
            for c in b.clusters:
                assert c.dimension <= c.energy ** (d - 1)

    def test_parity_rounding(self):
        b = build_basis(1, 8)
        assert b.energy_cutoff == 7

    def test_member_order_lexicographic_and_deterministic(self):
        b1 = build_basis(3, 9)
        b2 = build_basis(3, 9)
        for c1, c2 in zip(b1.clusters, b2.clusters):
            assert [m.multi_index for m in c1.members] == [m.multi_index for m in c2.members]
            assert [m.multi_index for m in c1.members] == sorted(
                m.multi_index for m in c1.members
            )

    def test_invalid_parameters(self):
        with pytest.raises(ParameterError):
            build_basis(0, 5)
        with pytest.raises(ParameterError):
            build_basis(2, 1)
        with pytest.raises(ParameterError):
            build_basis(1, 21, q_pts=10)

    def test_mode_invariants(self):
        with pytest.raises(ParameterError):
            Mode(cluster_energy=4, multiplicity_index=1, multi_index=(1, 2))
        with pytest.raises(ParameterError):
            Mode(cluster_energy=5, multiplicity_index=1, multi_index=(1, 1))
        m = Mode(cluster_energy=5, multiplicity_index=1, multi_index=(1, 3, 1))
        assert m.levels == (0, 1, 0)


class TestEigenfunctions:
    def test_ground_state_value(self):
        b = build_basis(1, 7)
        ground = b.clusters[0].members[0]
        assert eval_eigenfunction(b, ground, [0.0]) == pytest.approx(np.pi**-0.25, abs=1e-12)

    def test_first_excited_odd(self):
        b = build_basis(1, 7)
        first = b.clusters[1].members[0]
        assert eval_eigenfunction(b, first, [0.0]) == pytest.approx(0.0, abs=1e-14)

    def test_d2_ground_at_origin(self):
        b = build_basis(2, 6)
        ground = b.clusters[0].members[0]
        assert eval_eigenfunction(b, ground, [0.0, 0.0]) == pytest.approx(
            np.pi**-0.5, abs=1e-12
        )

    def test_foreign_mode_rejected(self):
        b = build_basis(1, 7)
        alien = Mode(cluster_energy=9, multiplicity_index=1, multi_index=(9,))
        with pytest.raises(IndexError):
            eval_eigenfunction(b, alien, [0.0])

    def test_recurrence_matches_quadrature_orthonormality_high_order(self):
        # stable far beyond raw-polynomial overflow territory
        b = build_basis(1, 61)
        g = (b.reduced_table * b.weights) @ b.reduced_table.T
        assert np.max(np.abs(g - np.eye(b.n_levels))) < 1e-10

    def test_hermite_l2_normalization_on_fine_grid(self):
        x = np.linspace(-12, 12, 20001)
        vals = hermite_function(6, x)
        norms = np.trapezoid(vals**2, x)
        np.testing.assert_allclose(norms, 1.0, atol=1e-8)


class TestWeightsAndGram:
    @pytest.mark.parametrize(
        "idx,s,expected", [((1,), 2, 1.0), ((3,), 2, 9.0), ((1, 3), 0.5, 2.0)]
    )
    def test_sobolev_weight(self, idx, s, expected):
        mode = Mode(cluster_energy=sum(idx), multiplicity_index=1, multi_index=idx)
        assert sobolev_weight(mode, s) == pytest.approx(expected)

    @pytest.mark.parametrize("d,e_max", [(1, 21), (2, 10), (3, 9)])
    def test_gram_identity(self, d, e_max):
        b = build_basis(d, e_max)
        g = gram_matrix(b)
        assert np.max(np.abs(g - np.eye(b.size))) < 1e-10
