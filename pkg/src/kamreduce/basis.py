"""Truncated Hermite eigenbasis of the d-dimensional quantum harmonic oscillator.

The oscillator T = -Laplace + |x|^2 has spectrum {d, d+2, d+4, ...}; the
eigenspace of energy j is spanned by tensor products of 1-d Hermite functions
whose odd 1-d eigenvalues sum to j.  This module enumerates the modes up to an
energy cutoff, groups them into degenerate clusters, and carries the
Gauss-Hermite quadrature data used for all potential integrals downstream.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ResolutionError

__all__ = [
    "Mode",
    "Cluster",
    "Basis",
    "build_basis",
    "eval_eigenfunction",
    "sobolev_weight",
    "hermite_reduced",
    "hermite_function",
]


def hermite_reduced(n_levels, x):
    """Values of psi_n(x) = phi_n(x) * exp(x^2/2) for n = 0..n_levels-1.

    phi_n are the L2-normalized Hermite functions (eigenvalue 2n+1).  The
    Gaussian factor is split off so quadrature against an explicit Gaussian
    weight never under- or overflows; the three-term recurrence on the
    normalized functions stays stable far beyond n ~ 150, unlike raw Hermite
    polynomials with factorial normalization.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n_levels,) + x.shape)
    out[0] = np.pi ** -0.25
    if n_levels > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, n_levels - 1):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def hermite_function(n_levels, x):
    """L2-normalized Hermite functions phi_n(x), n = 0..n_levels-1."""
    x = np.asarray(x, dtype=float)
    return hermite_reduced(n_levels, x) * np.exp(-0.5 * x * x)


@dataclass(frozen=True)
class Mode:
    """One tensor-product eigenfunction of the truncated oscillator.

    ``multi_index`` holds the odd 1-d eigenvalues (i_1, ..., i_d) with
    sum(i_k) = cluster_energy; ``multiplicity_index`` is the 1-based position
    inside the cluster's lexicographic member order.
    """

    cluster_energy: int
    multiplicity_index: int
    multi_index: tuple[int, ...]

    def __post_init__(self):
        if any(i < 1 or i % 2 == 0 for i in self.multi_index):
            raise ParameterError(f"multi-index {self.multi_index} must be odd positive integers")
        if sum(self.multi_index) != self.cluster_energy:
            raise ParameterError(
                f"multi-index {self.multi_index} does not sum to energy {self.cluster_energy}"
            )

    @property
    def levels(self):
        """Conventional 1-d levels n_k = (i_k - 1) / 2 along each axis."""
        return tuple((i - 1) // 2 for i in self.multi_index)


@dataclass(frozen=True)
class Cluster:
    """All modes sharing one oscillator eigenvalue."""

    energy: int
    members: tuple[Mode, ...]

    @property
    def dimension(self):
        return len(self.members)


@dataclass
class Basis:
    """Truncated eigenbasis with cluster layout and quadrature tables.

    Immutable after construction; shared read-only by every other module.
    """

    dimension_d: int
    energy_cutoff: int
    q_pts: int
    clusters: tuple[Cluster, ...]
    nodes: np.ndarray
    weights: np.ndarray
    eigenfunction_table: np.ndarray  # phi_n at nodes, shape (n_levels, q_pts)
    reduced_table: np.ndarray  # psi_n at nodes (Gaussian factored out)
    modes: tuple[Mode, ...] = field(init=False)
    mode_weights: np.ndarray = field(init=False)  # w_a per flat mode index
    cluster_slices: dict = field(init=False)  # energy -> slice into flat order

    def __post_init__(self):
        modes = []
        slices = {}
        for cl in self.clusters:
            start = len(modes)
            modes.extend(cl.members)
            slices[cl.energy] = slice(start, len(modes))
        self.modes = tuple(modes)
        self.mode_weights = np.array([m.cluster_energy for m in self.modes], dtype=float)
        self.cluster_slices = slices

    @property
    def size(self):
        return len(self.modes)

    @property
    def cluster_energies(self):
        return tuple(cl.energy for cl in self.clusters)

    @property
    def n_levels(self):
        return self.eigenfunction_table.shape[0]

    def cluster(self, energy):
        for cl in self.clusters:
            if cl.energy == energy:
                return cl
        raise KeyError(energy)

    def mode_index(self, mode):
        sl = self.cluster_slices.get(mode.cluster_energy)
        if sl is None:
            raise IndexError(f"no cluster of energy {mode.cluster_energy} in this basis")
        idx = sl.start + mode.multiplicity_index - 1
        if self.modes[idx] != mode:
            raise IndexError(f"mode {mode} does not belong to this basis")
        return idx

    def same_layout(self, other):
        return (
            self.dimension_d == other.dimension_d
            and self.energy_cutoff == other.energy_cutoff
            and self.cluster_energies == other.cluster_energies
        )


def _enumerate_cluster(d, energy):
    odd = range(1, energy + 1, 2)
    members = []
    for tup in itertools.product(odd, repeat=d):
        if sum(tup) == energy:
            members.append(tup)
    # itertools.product yields lexicographic order already
    return members


def build_basis(d, e_max, q_pts=None):
    """Build the truncated basis for dimension ``d`` and energy cutoff ``e_max``.

    ``e_max`` is rounded down by one if its parity does not match ``d``.
    ``q_pts`` defaults to 2*e_max, enough to integrate the Gaussian-weighted
    polynomial integrands arising from admissible potentials exactly.
    """
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ParameterError(f"dimension d must be a positive integer, got {d!r}")
    if not isinstance(e_max, (int, np.integer)) or e_max < d:
        raise ParameterError(f"energy cutoff must be an integer >= d, got {e_max!r}")
    e_max = int(e_max)
    if (e_max - d) % 2 != 0:
        e_max -= 1
    if q_pts is None:
        q_pts = 2 * e_max
    if q_pts < e_max:
        raise ParameterError(f"q_pts={q_pts} below cutoff {e_max}: quadrature not exact")

    clusters = []
    for j in range(d, e_max + 1, 2):
        members = tuple(
            Mode(cluster_energy=j, multiplicity_index=i + 1, multi_index=tup)
            for i, tup in enumerate(_enumerate_cluster(d, j))
        )
        clusters.append(Cluster(energy=j, members=members))

    nodes, weights = np.polynomial.hermite.hermgauss(q_pts)
    n_levels = (e_max - d) // 2 + 1
    reduced = hermite_reduced(n_levels, nodes)
    table = reduced * np.exp(-0.5 * nodes * nodes)

    # orthonormality of the tabulated 1-d functions under the rule
    gram = (reduced * weights) @ reduced.T
    err = np.abs(gram - np.eye(n_levels))
    worst = np.unravel_index(np.argmax(err), err.shape)
    if err[worst] > 1e-10:
        raise ResolutionError(
            f"quadrature rule with {q_pts} points fails orthonormality: "
            f"levels {worst} off by {err[worst]:.3e}"
        )

    return Basis(
        dimension_d=d,
        energy_cutoff=e_max,
        q_pts=q_pts,
        clusters=tuple(clusters),
        nodes=nodes,
        weights=weights,
        eigenfunction_table=table,
        reduced_table=reduced,
    )


def eval_eigenfunction(basis, mode, x):
    """Evaluate the tensor eigenfunction of ``mode`` at point(s) ``x``.

    ``x`` is a point in R^d (shape ``(d,)``) or a batch (shape ``(npts, d)``).
    """
    basis.mode_index(mode)  # membership check
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != basis.dimension_d:
        raise ParameterError(f"point dimension {x.shape[1]} != basis dimension {basis.dimension_d}")
    vals = np.ones(x.shape[0])
    for axis, n in enumerate(mode.levels):
        vals = vals * hermite_function(n + 1, x[:, axis])[n]
    return vals if vals.size > 1 else float(vals[0])


def sobolev_weight(mode, s):
    """Weight w_a^s entering the l^2_s norm."""
    return float(mode.cluster_energy) ** s


def gram_matrix(basis):
    """Quadrature Gram matrix of all tabulated tensor eigenfunctions.

    Factorizes over axes, so it is assembled from the 1-d Gram entries rather
    than a d-dimensional tensor grid.
    """
    g1 = (basis.reduced_table * basis.weights) @ basis.reduced_table.T
    size = basis.size
    out = np.ones((size, size))
    for a, ma in enumerate(basis.modes):
        for b, mb in enumerate(basis.modes):
            v = 1.0
            for na, nb in zip(ma.levels, mb.levels):
                v *= g1[na, nb]
            out[a, b] = v
    return out
