"""Quasi-periodic matrix maps on the n-torus and their assembly from potentials.

A QPMatrix is a finite Fourier stack of block matrices Q^(k) together with an
optional cache of values on a uniform torus grid; the two representations are
kept consistent to machine precision.  Potentials are finite Fourier sums of
Gaussian-times-polynomial spatial profiles, which keeps every matrix entry a
closed Gaussian integral that the scaled Gauss-Hermite rule computes exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .basis import hermite_reduced
from .blockmat import BlockMatrix, dense_msb_norm
from .errors import ParameterError, ResolutionError

__all__ = [
    "GaussPolyProfile",
    "FourierTerm",
    "PotentialSpec",
    "QPMatrix",
    "assemble_q",
    "decay_profile",
    "synthesize_on_grid",
]


@dataclass(frozen=True)
class GaussPolyProfile:
    """Spatial profile prod_k p_k(x_k) exp(-gamma_k x_k^2).

    ``poly`` holds ascending polynomial coefficients per axis; ``gamma`` the
    per-axis Gaussian decay rates (> 0).  Such profiles lie in every weighted
    Sobolev space, so admissibility holds by construction.
    """

    poly: tuple[tuple[float, ...], ...]
    gamma: tuple[float, ...]

    def __post_init__(self):
        if len(self.poly) != len(self.gamma):
            raise ParameterError("poly and gamma must have one entry per axis")
        if any(g <= 0 for g in self.gamma):
            raise ParameterError(f"gamma must be positive, got {self.gamma}")

    @property
    def dimension(self):
        return len(self.gamma)

    def value(self, x):
        """Evaluate at points of shape (npts, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.ones(x.shape[0])
        for ax in range(self.dimension):
            c = np.asarray(self.poly[ax], dtype=float)
            out *= np.polynomial.polynomial.polyval(x[:, ax], c) * np.exp(
                -self.gamma[ax] * x[:, ax] ** 2
            )
        return out

    def max_degree(self):
        return max(len(c) - 1 for c in self.poly)


@dataclass(frozen=True)
class FourierTerm:
    k: tuple[int, ...]
    coefficient: complex
    profile: GaussPolyProfile


@dataclass(frozen=True)
class PotentialSpec:
    """Real quasi-periodic potential as a finite Fourier sum of profiles."""

    terms: tuple[FourierTerm, ...]

    def __post_init__(self):
        if not self.terms:
            return
        n = len(self.terms[0].k)
        d = self.terms[0].profile.dimension
        for t in self.terms:
            if len(t.k) != n:
                raise ParameterError("all Fourier indices must share the torus dimension")
            if t.profile.dimension != d:
                raise ParameterError("all profiles must share the space dimension")
        # reality: each term needs the conjugate partner at -k with equal profile
        pool = {}
        for t in self.terms:
            pool.setdefault(t.k, []).append(t)
        for k, ts in pool.items():
            mk = tuple(-c for c in k)
            partners = pool.get(mk)
            if partners is None:
                raise ParameterError(f"missing conjugate term at {mk} for k={k}")
            for t in ts:
                if not any(
                    u.profile == t.profile and abs(u.coefficient - np.conj(t.coefficient)) == 0.0
                    for u in partners
                ):
                    raise ParameterError(
                        f"term at k={k} lacks a conjugate-coefficient partner at {mk}"
                    )

    @property
    def torus_dim(self):
        return len(self.terms[0].k) if self.terms else 1

    @property
    def space_dim(self):
        return self.terms[0].profile.dimension if self.terms else 1

    def max_k(self):
        return max((max(abs(c) for c in t.k) for t in self.terms), default=0)

    def value(self, phi, x):
        """V(phi, x) for diagnostics; real for real phi by construction."""
        phi = np.asarray(phi, dtype=float)
        out = 0j
        for t in self.terms:
            out += t.coefficient * np.exp(1j * np.dot(t.k, phi)) * t.profile.value(x)
        return out

    @staticmethod
    def symmetrized(terms):
        """Complete a term list with missing conjugate partners at -k."""
        have = {}
        for t in terms:
            have.setdefault(t.k, []).append(t)
        full = list(terms)
        for k, ts in have.items():
            mk = tuple(-c for c in k)
            for t in ts:
                partners = have.get(mk, [])
                if not any(
                    u.profile == t.profile and u.coefficient == np.conj(t.coefficient)
                    for u in partners
                ):
                    if k == mk:
                        raise ParameterError(f"zero-mode term at k={k} must have real coefficient")
                    full.append(FourierTerm(mk, complex(np.conj(t.coefficient)), t.profile))
        return PotentialSpec(tuple(full))


@dataclass
class QPMatrix:
    """Fourier stack of block matrices with an optional torus-grid cache.

    Treated as immutable after construction; the packed dense view of the
    stack is memoized on first use.
    """

    basis: object
    fourier: dict  # k tuple -> BlockMatrix
    sigma: float = 1.0
    grid: object = None  # GridCache or None
    _packed: tuple = field(default=None, repr=False, compare=False)

    @property
    def torus_dim(self):
        for k in self.fourier:
            return len(k)
        return self.grid.torus_dim if self.grid is not None else 1

    def max_k(self):
        return max((max(abs(c) for c in k) for k in self.fourier), default=0)

    def coefficient(self, k):
        return self.fourier.get(tuple(k))

    def packed(self):
        """(k-array (nk, n), dense stack (nk, M, M)) view, memoized."""
        if self._packed is None:
            keys = sorted(self.fourier)
            if keys:
                karr = np.asarray(keys, dtype=float).reshape(len(keys), -1)
                stack = np.stack([self.fourier[k].to_dense() for k in keys])
            else:
                karr = np.zeros((0, self.torus_dim))
                stack = np.zeros((0, self.basis.size, self.basis.size), dtype=complex)
            object.__setattr__(self, "_packed", (keys, karr, stack))
        return self._packed

    def fourier_dense(self):
        keys, _, stack = self.packed()
        return {k: stack[i] for i, k in enumerate(keys)}

    def value_at(self, phi):
        """Dense value Q(phi) by Fourier synthesis at one angle."""
        phi = np.asarray(phi, dtype=float)
        keys, karr, stack = self.packed()
        if not keys:
            return np.zeros((self.basis.size, self.basis.size), dtype=complex)
        phases = np.exp(1j * (karr @ phi))
        return np.tensordot(phases, stack, axes=1)

    def scale(self, c):
        return QPMatrix(
            self.basis,
            {k: bm.scale(c) for k, bm in self.fourier.items()},
            sigma=self.sigma,
        )

    def msb_sup(self, p, grid_per_axis=None):
        """sup over a torus grid of the weighted block norm of Q(phi)."""
        if not self.fourier:
            return 0.0
        n = self.torus_dim
        g = grid_per_axis or max(4 * self.max_k() + 1, 8)
        stack = self.fourier_dense()
        vals = synth_grid(stack, g, n, self.basis.size)
        from .blockmat import grid_msb_sup

        return grid_msb_sup(vals.reshape(-1, *vals.shape[-2:]), self.basis, p)

    def hermitian_symmetry_defect(self):
        """max |conj(Q^(k)) - transpose(Q^(-k))| over the stack."""
        worst = 0.0
        for k, bm in self.fourier.items():
            mk = tuple(-c for c in k)
            other = self.fourier.get(mk)
            od = other.to_dense().T if other is not None else 0.0
            worst = max(worst, float(np.max(np.abs(np.conj(bm.to_dense()) - od))))
        return worst


@dataclass
class GridCache:
    points_per_axis: int
    torus_dim: int
    values: np.ndarray  # shape (G,)*n + (M, M)


# -- grid transforms ---------------------------------------------------------


def torus_grid(g, n):
    """Flattened uniform grid on [0, 2pi)^n, shape (g^n, n)."""
    axis = 2 * np.pi * np.arange(g) / g
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([gr.ravel() for gr in grids], axis=-1)


def synth_grid(fourier_dense, g, n, size):
    """Synthesize grid values from a dense Fourier stack; shape (g,)*n+(M,M)."""
    pts = torus_grid(g, n)
    keys = list(fourier_dense)
    if not keys:
        return np.zeros((g,) * n + (size, size), dtype=complex)
    karr = np.asarray(keys, dtype=float).reshape(len(keys), -1)
    stack = np.stack([np.asarray(fourier_dense[k], dtype=complex) for k in keys])
    phases = np.exp(1j * (pts @ karr.T))  # (npts, nk)
    out = np.tensordot(phases, stack, axes=1)
    return out.reshape((g,) * n + (size, size))


def analyze_grid(values, n, kmax, prune=1e-300):
    """Exact inverse transform of band-limited grid data up to |k|_inf <= kmax.

    Returns (fourier stack, kept mask applied); coefficients with magnitude
    below ``prune`` are dropped.
    """
    g = values.shape[0]
    if 2 * kmax + 1 > g:
        raise ParameterError(f"grid with {g} points per axis cannot resolve |k| <= {kmax}")
    coeffs = np.fft.fftn(values, axes=tuple(range(n))) / g**n
    stack = {}
    for k in itertools.product(range(-kmax, kmax + 1), repeat=n):
        idx = tuple(ki % g for ki in k)
        arr = coeffs[idx]
        if np.max(np.abs(arr)) > prune:
            stack[k] = arr.copy()
    return stack


def synthesize_on_grid(q, g):
    """Fill the torus-grid cache of ``q`` with ``g`` points per axis."""
    n = q.torus_dim
    if g <= 2 * q.max_k():
        raise ParameterError(f"grid of {g} points per axis aliases |k| up to {q.max_k()}")
    vals = synth_grid(q.fourier_dense(), g, n, q.basis.size)
    return QPMatrix(
        q.basis,
        dict(q.fourier),
        sigma=q.sigma,
        grid=GridCache(points_per_axis=g, torus_dim=n, values=vals),
    )


def from_dense_stack(basis, stack, sigma=1.0, hermitian_k0=False):
    """Wrap a dense Fourier stack as a QPMatrix of block matrices."""
    fourier = {}
    for k, arr in stack.items():
        if np.max(np.abs(arr)) <= 1e-300:
            continue
        fourier[tuple(k)] = BlockMatrix.from_dense(
            basis, arr, hermitian=hermitian_k0 and all(c == 0 for c in k)
        )
    return QPMatrix(basis, fourier, sigma=sigma)


# -- assembly from a potential ----------------------------------------------


def _axis_integral_table(n_levels, coeffs, gamma, nodes, weights):
    """1-d table I[i, j] = integral p(x) e^(-gamma x^2) phi_i phi_j dx.

    Substituting x = y / sqrt(1 + gamma) turns the integrand into a pure
    polynomial against the e^(-y^2) weight, so the rule is exact whenever
    deg(p) + i + j < 2 * q_pts.
    """
    scale = np.sqrt(1.0 + gamma)
    x = nodes / scale
    psi = hermite_reduced(n_levels, x)
    pv = np.polynomial.polynomial.polyval(x, np.asarray(coeffs, dtype=float))
    w = weights * pv / scale
    return (psi * w) @ psi.T


def _term_matrix(basis, profile, nodes, weights):
    tables = [
        _axis_integral_table(basis.n_levels, profile.poly[ax], profile.gamma[ax], nodes, weights)
        for ax in range(basis.dimension_d)
    ]
    size = basis.size
    out = np.ones((size, size))
    levels = [m.levels for m in basis.modes]
    for a in range(size):
        la = levels[a]
        for b in range(a, size):
            lb = levels[b]
            v = 1.0
            for ax in range(basis.dimension_d):
                v *= tables[ax][la[ax], lb[ax]]
            out[a, b] = v
            out[b, a] = v
    return out


def assemble_q(potential, basis, sigma=1.0, check=True):
    """Matrix elements Q^(k)_ab = c_k * integral f_k(x) Phi_a Phi_b dx.

    With ``check`` the assembly is repeated on a doubled quadrature rule and
    entries must agree to 1e-10 (they agree exactly for polynomial profiles
    within the rule's degree; the check guards misuse).
    """
    if potential.terms and potential.space_dim != basis.dimension_d:
        raise ParameterError(
            f"potential space dimension {potential.space_dim} != basis {basis.dimension_d}"
        )
    stack = {}
    cache = {}
    nodes2 = weights2 = None
    if check:
        nodes2, weights2 = np.polynomial.hermite.hermgauss(2 * basis.q_pts)
    for t in potential.terms:
        if t.profile not in cache:
            mat = _term_matrix(basis, t.profile, basis.nodes, basis.weights)
            if check:
                mat2 = _term_matrix(basis, t.profile, nodes2, weights2)
                err = np.max(np.abs(mat - mat2))
                if err > 1e-10:
                    raise ResolutionError(
                        f"quadrature not converged for profile {t.profile}: "
                        f"doubling the rule moves entries by {err:.3e}"
                    )
            cache[t.profile] = mat
        k = tuple(t.k)
        stack[k] = stack.get(k, 0) + t.coefficient * cache[t.profile]
    fourier = {}
    for k, arr in stack.items():
        if np.max(np.abs(arr)) <= 1e-300:
            continue
        fourier[k] = BlockMatrix.from_dense(basis, arr, hermitian=all(c == 0 for c in k))
    return QPMatrix(basis, fourier, sigma=sigma)


# -- decay diagnostics --------------------------------------------------------


@dataclass
class DecayProfile:
    rows: list  # (w_row, w_col, weighted_norm)
    sup: float
    envelope: dict  # |w_a - w_b| -> max weighted norm
    fitted_exponent: float | None
    monotone_from: int
    monotone_violation: bool


def decay_profile(q, p, monotone_from=4):
    """Weighted block-norm table of the Fourier stack and its decay envelope.

    The fitted exponent is the log-log slope of the envelope against
    1 + |w_a - w_b| over separations >= 2; a violation is flagged when the
    envelope fails to be non-increasing beyond ``monotone_from``.
    """
    from .blockmat import energy_bracket

    rows = []
    table = {}
    for k, bm in q.fourier.items():
        for (wr, wc), blk in bm.blocks.items():
            v = (
                (wr * wc) ** p.beta
                * np.linalg.norm(blk, 2)
                * energy_bracket(wr, wc) ** (p.s / 2)
            )
            key = (wr, wc)
            table[key] = max(table.get(key, 0.0), v)
    for (wr, wc), v in sorted(table.items()):
        rows.append((wr, wc, v))
    sup = max(table.values(), default=0.0)
    envelope = {}
    floor = sup * 1e-12  # quadrature noise on parity-forbidden blocks
    for (wr, wc), v in table.items():
        m = abs(wr - wc)
        envelope[m] = max(envelope.get(m, 0.0), v if v > floor else 0.0)
    ms = sorted(m for m in envelope if m >= 2 and envelope[m] > 0)
    fitted = None
    if len(ms) >= 2:
        xs = np.log([1.0 + m for m in ms])
        ys = np.log([envelope[m] for m in ms])
        fitted = float(np.polyfit(xs, ys, 1)[0])
    # zero entries are absent blocks (parity selection), not decay violations
    viol = False
    tail = sorted(m for m in envelope if m >= monotone_from and envelope[m] > 0)
    for m1, m2 in zip(tail, tail[1:]):
        if envelope[m2] > envelope[m1] * (1 + 1e-12):
            viol = True
    return DecayProfile(
        rows=rows,
        sup=sup,
        envelope=envelope,
        fitted_exponent=fitted,
        monotone_from=monotone_from,
        monotone_violation=viol,
    )


def write_qp_csv(q, path_for_k):
    """Dump each Fourier coefficient as CSV; ``path_for_k(k)`` names the file."""
    from .blockmat import write_block_csv

    paths = {}
    for k in sorted(q.fourier):
        path = path_for_k(k)
        write_block_csv(q.fourier[k], path)
        paths[k] = path
    return paths
