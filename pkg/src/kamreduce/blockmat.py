"""Cluster-block matrices over a truncated basis with the weighted norm calculus.

Matrices are stored as a map from cluster pairs (w_row, w_col) to dense
complex blocks; absent blocks are exactly zero.  The two norms measure
off-diagonal decay across clusters: the "+" variant gains an extra factor
1/(1 + |w_a - w_b|) and is the natural home of homological-equation solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import BasisMismatchError, ParameterError

__all__ = [
    "NormParams",
    "BlockMatrix",
    "NormalFormMatrix",
    "energy_bracket",
    "msb_norm",
    "msb_plus_norm",
    "operator_norm_weighted",
    "block_expm",
    "project_block_diagonal",
    "write_block_csv",
    "read_block_csv",
]

_PRUNE = 1e-300  # blocks below this magnitude are dropped entirely


@dataclass(frozen=True)
class NormParams:
    """Pair (s, beta) parametrizing the weighted block norms."""

    s: float
    beta: float

    def __post_init__(self):
        if self.s < 0:
            raise ParameterError(f"s must be >= 0, got {self.s}")
        if not 0 < self.beta <= 1:
            raise ParameterError(f"beta must lie in (0, 1], got {self.beta}")


def energy_bracket(wa, wb):
    """(sqrt(min) + |wa - wb|) / sqrt(min) for cluster energies wa, wb."""
    m = np.sqrt(min(wa, wb))
    return (m + abs(wa - wb)) / m


class BlockMatrix:
    """Dense-per-block matrix indexed by cluster energies of a fixed basis."""

    def __init__(self, basis, blocks=None, hermitian=False):
        self.basis = basis
        self.blocks = {} if blocks is None else dict(blocks)
        self.hermitian = bool(hermitian)
        for (wr, wc), blk in self.blocks.items():
            dr = basis.cluster_slices[wr]
            dc = basis.cluster_slices[wc]
            shape = (dr.stop - dr.start, dc.stop - dc.start)
            if blk.shape != shape:
                raise ParameterError(f"block ({wr},{wc}) has shape {blk.shape}, expected {shape}")

    # -- constructors ---------------------------------------------------

    @classmethod
    def zeros(cls, basis):
        return cls(basis, {}, hermitian=True)

    @classmethod
    def identity(cls, basis):
        blocks = {}
        for cl in basis.clusters:
            blocks[(cl.energy, cl.energy)] = np.eye(cl.dimension, dtype=complex)
        return cls(basis, blocks, hermitian=True)

    @classmethod
    def from_dense(cls, basis, arr, hermitian=False, prune=_PRUNE):
        arr = np.asarray(arr, dtype=complex)
        if arr.shape != (basis.size, basis.size):
            raise ParameterError(f"dense array shape {arr.shape} != ({basis.size}, {basis.size})")
        blocks = {}
        for cr in basis.clusters:
            sr = basis.cluster_slices[cr.energy]
            for cc in basis.clusters:
                sc = basis.cluster_slices[cc.energy]
                blk = arr[sr, sc]
                if np.max(np.abs(blk)) > prune:
                    blocks[(cr.energy, cc.energy)] = blk.copy()
        return cls(basis, blocks, hermitian=hermitian)

    @classmethod
    def random(cls, basis, rng, hermitian=False, real=False):
        """Dense random matrix with independent standard normal entries."""
        arr = rng.standard_normal((basis.size, basis.size))
        if not real:
            arr = arr + 1j * rng.standard_normal((basis.size, basis.size))
        if hermitian:
            arr = (arr + arr.conj().T) / 2
        return cls.from_dense(basis, arr, hermitian=hermitian)

    # -- views ------------------------------------------------------------

    def block(self, wr, wc):
        return self.blocks.get((wr, wc))

    def to_dense(self):
        out = np.zeros((self.basis.size, self.basis.size), dtype=complex)
        for (wr, wc), blk in self.blocks.items():
            out[self.basis.cluster_slices[wr], self.basis.cluster_slices[wc]] = blk
        return out

    def copy(self):
        return BlockMatrix(
            self.basis, {k: v.copy() for k, v in self.blocks.items()}, self.hermitian
        )

    def max_abs(self):
        if not self.blocks:
            return 0.0
        return max(np.max(np.abs(b)) for b in self.blocks.values())

    def hermiticity_defect(self):
        """max |A - A^dagger| entrywise."""
        d = self.to_dense()
        return float(np.max(np.abs(d - d.conj().T))) if self.blocks else 0.0

    def is_block_diagonal(self):
        return all(wr == wc for (wr, wc) in self.blocks)

    # -- algebra ----------------------------------------------------------

    def _check_basis(self, other):
        if self.basis is not other.basis and not self.basis.same_layout(other.basis):
            raise BasisMismatchError("operands live over different bases")

    def __add__(self, other):
        self._check_basis(other)
        blocks = {k: v.copy() for k, v in self.blocks.items()}
        for k, v in other.blocks.items():
            blocks[k] = blocks[k] + v if k in blocks else v.copy()
        return BlockMatrix(self.basis, blocks, self.hermitian and other.hermitian)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, c):
        return BlockMatrix(
            self.basis, {k: c * v for k, v in self.blocks.items()},
            self.hermitian and (np.imag(c) == 0),
        )

    def __matmul__(self, other):
        self._check_basis(other)
        by_row = {}
        for (wr, wc) in other.blocks:
            by_row.setdefault(wr, []).append(wc)
        blocks = {}
        for (wr, wm), a in self.blocks.items():
            for wc in by_row.get(wm, ()):
                prod = a @ other.blocks[(wm, wc)]
                key = (wr, wc)
                if key in blocks:
                    blocks[key] += prod
                else:
                    blocks[key] = prod
        pruned = {k: v for k, v in blocks.items() if np.max(np.abs(v)) > _PRUNE}
        return BlockMatrix(self.basis, pruned, hermitian=False)

    def dagger(self):
        blocks = {(wc, wr): blk.conj().T.copy() for (wr, wc), blk in self.blocks.items()}
        return BlockMatrix(self.basis, blocks, self.hermitian)

    def transpose(self):
        blocks = {(wc, wr): blk.T.copy() for (wr, wc), blk in self.blocks.items()}
        return BlockMatrix(self.basis, blocks, hermitian=False)

    def conjugate(self):
        blocks = {k: blk.conj() for k, blk in self.blocks.items()}
        return BlockMatrix(self.basis, blocks, hermitian=False)


def commutator(a, b):
    return a @ b - b @ a


# -- norms -----------------------------------------------------------------


def _block_weight(wa, wb, p, plus):
    v = (wa * wb) ** p.beta * energy_bracket(wa, wb) ** (p.s / 2)
    if plus:
        v /= 1 + abs(wa - wb)
    return v


def msb_norm(a, p):
    """sup over cluster pairs of (wa wb)^beta ||block|| bracket^(s/2)."""
    best = 0.0
    for (wr, wc), blk in a.blocks.items():
        op = np.linalg.norm(blk, 2)
        if op == 0.0:
            continue
        best = max(best, _block_weight(wr, wc, p, plus=False) * op)
    return best


def msb_plus_norm(a, p):
    """As ``msb_norm`` with the extra smoothing factor 1/(1+|wa-wb|)."""
    best = 0.0
    for (wr, wc), blk in a.blocks.items():
        op = np.linalg.norm(blk, 2)
        if op == 0.0:
            continue
        best = max(best, _block_weight(wr, wc, p, plus=True) * op)
    return best


def operator_norm_weighted(a, s_from, s_to):
    """Operator norm of A as a map l^2_{s_from} -> l^2_{s_to}.

    Largest singular value of D_to A D_from^{-1} with D_t = diag(w_a^{t/2}).
    """
    if not a.blocks:
        return 0.0
    w = a.basis.mode_weights
    dense = a.to_dense() * (w[:, None] ** (s_to / 2)) * (w[None, :] ** (-s_from / 2))
    return float(np.linalg.norm(dense, 2))


def dense_msb_norm(arr, basis, p, plus=False):
    """Weighted block norm of a dense array without building a BlockMatrix."""
    best = 0.0
    for cr in basis.clusters:
        sr = basis.cluster_slices[cr.energy]
        for cc in basis.clusters:
            blk = arr[sr, basis.cluster_slices[cc.energy]]
            op = np.linalg.norm(blk, 2)
            if op == 0.0:
                continue
            best = max(best, _block_weight(cr.energy, cc.energy, p, plus) * op)
    return best


def grid_msb_sup(values, basis, p, plus=False):
    """sup over a stack of dense matrices of the weighted block norm.

    ``values`` has shape (npts, M, M); the per-block largest singular values
    are computed batched over the grid axis.
    """
    best = 0.0
    for cr in basis.clusters:
        sr = basis.cluster_slices[cr.energy]
        for cc in basis.clusters:
            sub = values[:, sr, basis.cluster_slices[cc.energy]]
            sv = np.linalg.svd(sub, compute_uv=False)
            op = float(np.max(sv))
            if op == 0.0:
                continue
            best = max(best, _block_weight(cr.energy, cc.energy, p, plus) * op)
    return best


# -- exponential and projection --------------------------------------------


def block_expm(s, scale=1.0):
    """Dense matrix exponential exp(scale * S) over the full truncation.

    S couples clusters, so this is a genuine dense exponential (scaling and
    squaring via scipy), not a blockwise one.
    """
    dense = s.to_dense()
    if not np.all(np.isfinite(dense)):
        raise ParameterError("matrix exponential of non-finite entries")
    e = scipy.linalg.expm(scale * dense)
    return BlockMatrix.from_dense(s.basis, e, hermitian=False)


class NormalFormMatrix(BlockMatrix):
    """Hermitian, cluster-block-diagonal matrix.

    ``hermitization_defect`` records how much averaging with the conjugate
    transpose moved the input when it was not already flagged hermitian.
    """

    def __init__(self, basis, blocks=None, hermitization_defect=0.0):
        bad = [k for k in (blocks or {}) if k[0] != k[1]]
        if bad:
            raise ParameterError(f"normal form with off-diagonal cluster blocks {bad}")
        super().__init__(basis, blocks, hermitian=True)
        self.hermitization_defect = float(hermitization_defect)
        for (wr, _), blk in self.blocks.items():
            d = np.max(np.abs(blk - blk.conj().T))
            if d > 1e-12:
                raise ParameterError(f"block {wr} not hermitian: defect {d:.3e}")

    @classmethod
    def n0(cls, basis):
        """Unperturbed normal form diag(w_a)."""
        blocks = {}
        for cl in basis.clusters:
            blocks[(cl.energy, cl.energy)] = cl.energy * np.eye(cl.dimension, dtype=complex)
        return cls(basis, blocks)

    def plus(self, other):
        """Sum of two normal forms, staying in the class."""
        merged = {k: v.copy() for k, v in self.blocks.items()}
        for k, v in other.blocks.items():
            merged[k] = merged[k] + v if k in merged else v.copy()
        # re-symmetrize to kill accumulated roundoff
        merged = {k: (v + v.conj().T) / 2 for k, v in merged.items()}
        return NormalFormMatrix(self.basis, merged)


def project_block_diagonal(a):
    """Projection onto diagonal cluster blocks, hermitized if needed."""
    defect = 0.0
    blocks = {}
    for (wr, wc), blk in a.blocks.items():
        if wr != wc:
            continue
        if a.hermitian:
            blocks[(wr, wc)] = blk.copy()
        else:
            sym = (blk + blk.conj().T) / 2
            defect = max(defect, float(np.max(np.abs(blk - sym))))
            blocks[(wr, wc)] = sym
    return NormalFormMatrix(a.basis, blocks, hermitization_defect=defect)


# -- CSV dump (rows: w_row,l_row,w_col,l_col,re,im) -------------------------


def write_block_csv(a, path):
    lines = ["w_row,l_row,w_col,l_col,re,im"]
    for (wr, wc) in sorted(a.blocks):
        blk = a.blocks[(wr, wc)]
        for i in range(blk.shape[0]):
            for j in range(blk.shape[1]):
                z = complex(blk[i, j])
                lines.append(f"{wr},{i + 1},{wc},{j + 1},{z.real!r},{z.imag!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_block_csv(basis, path, hermitian=False):
    blocks = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "w_row,l_row,w_col,l_col,re,im":
            raise ParameterError(f"{path}: unexpected header {header!r}")
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise ParameterError(f"{path}:{ln}: malformed row")
            wr, lr, wc, lc = (int(p) for p in parts[:4])
            re_, im_ = float(parts[4]), float(parts[5])
            if wr not in basis.cluster_slices or wc not in basis.cluster_slices:
                raise ParameterError(f"{path}:{ln}: unknown cluster pair ({wr},{wc})")
            key = (wr, wc)
            if key not in blocks:
                dr = basis.cluster_slices[wr]
                dc = basis.cluster_slices[wc]
                blocks[key] = np.zeros((dr.stop - dr.start, dc.stop - dc.start), dtype=complex)
            blk = blocks[key]
            if not (1 <= lr <= blk.shape[0] and 1 <= lc <= blk.shape[1]):
                raise ParameterError(f"{path}:{ln}: multiplicity index out of range")
            blk[lr - 1, lc - 1] = re_ + 1j * im_
    return BlockMatrix(basis, blocks, hermitian=hermitian)
