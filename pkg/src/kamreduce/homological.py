"""One homological equation: w.grad_phi S - i[N, S] = N_tilde - Q + R.

Solved coefficient-by-coefficient in Fourier space after diagonalizing each
normal-form cluster: the k = 0 same-cluster part is absorbed into the new
normal form N_tilde, coefficients up to the cutoff are divided by the small
divisors k.w - alpha_j + beta_l, and the Fourier tail beyond the cutoff is
returned untouched as the remainder R.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blockmat import NormalFormMatrix, dense_msb_norm, project_block_diagonal
from .errors import ParameterError, PreconditionError, SmallDivisorError, StructuralError
from .melnikov import check_divisors
from .qpmat import QPMatrix, from_dense_stack, synth_grid

__all__ = [
    "EigenBlocks",
    "HomologicalSolution",
    "diagonalize_normal_form",
    "solve_homological",
    "delort_bound_check",
]


@dataclass
class EigenBlocks:
    """Per-cluster orthogonal eigendecompositions P^T N_[a] P = diag(alpha)."""

    vectors: dict  # energy -> orthogonal matrix P
    values: dict  # energy -> ascending eigenvalues

    def reconstruction_defect(self, n):
        worst = 0.0
        for (wr, wc), blk in n.blocks.items():
            p = self.vectors[wr]
            d = p @ np.diag(self.values[wr]) @ p.T
            worst = max(worst, float(np.max(np.abs(d - blk))))
        return worst


def diagonalize_normal_form(n):
    """Symmetric eigendecomposition of every diagonal cluster block.

    Blocks must be real symmetric (the case for real potentials); eigenvalues
    come out ascending and each eigenvector is normalized so its
    largest-magnitude entry is positive, making runs reproducible.
    """
    vectors = {}
    values = {}
    for cl in n.basis.clusters:
        blk = n.block(cl.energy, cl.energy)
        if blk is None:
            blk = np.zeros((cl.dimension, cl.dimension), dtype=complex)
        asym = np.max(np.abs(blk - blk.T)) if blk.size else 0.0
        imag = np.max(np.abs(blk.imag)) if blk.size else 0.0
        if asym > 1e-10 or imag > 1e-10:
            raise StructuralError(
                f"cluster {cl.energy}: block not real symmetric "
                f"(asymmetry {asym:.3e}, imaginary part {imag:.3e})"
            )
        sym = (blk.real + blk.real.T) / 2
        lam, p = np.linalg.eigh(sym)
        for col in range(p.shape[1]):
            lead = int(np.argmax(np.abs(p[:, col])))
            if p[lead, col] < 0:
                p[:, col] = -p[:, col]
        vectors[cl.energy] = p
        values[cl.energy] = lam
    return EigenBlocks(vectors=vectors, values=values)


@dataclass
class HomologicalSolution:
    S: QPMatrix  # hermitian-symmetric generator, support |k| <= K
    N_tilde: NormalFormMatrix
    R: QPMatrix  # pure Fourier tail beyond the cutoff
    divisor_min: float  # smallest |divisor| actually divided by
    residual: float  # relative defect of the solved identity on a torus grid
    divisor_report: object = None


def _grid_points_for(q):
    return max(2 * q.max_k() + 3, 8)


def solve_homological(n, q, w, kappa, K, check_residual=True, k_scan_cap=None):
    """Solve the homological equation for normal form ``n`` and forcing ``q``.

    Verifies the Melnikov condition over the full scan range first and
    refuses (raises :class:`SmallDivisorError`) rather than regularizing when
    a divisor falls below kappa * (1 + |w_a - w_b|).
    """
    basis = q.basis
    kint = int(np.floor(K))
    if kint < 1:
        raise ParameterError(f"cutoff K must be >= 1, got {K}")
    report = check_divisors(n, w, kappa, kint, k_scan_cap=k_scan_cap)
    if not report.passed:
        k, wa, wb, val, bound = report.violations[0]
        raise SmallDivisorError(k, wa, wb, val, bound)

    eig = diagonalize_normal_form(n)
    om = w.array()
    energies = basis.cluster_energies
    slices = basis.cluster_slices

    s_stack = {}
    r_stack = {}
    n_tilde = None
    divisor_min = np.inf

    zero_k = (0,) * w.n
    for k, bm in q.fourier.items():
        kdotw = float(np.dot(k, om))
        if max(abs(c) for c in k) > kint:
            r_stack[k] = bm.to_dense()
            continue
        dense = bm.to_dense()
        s_dense = np.zeros_like(dense)
        for wa in energies:
            pa = eig.vectors[wa]
            al = eig.values[wa]
            for wb in energies:
                if k == zero_k and wa == wb:
                    continue
                blk = dense[slices[wa], slices[wb]]
                if not np.any(blk):
                    continue
                pb = eig.vectors[wb]
                be = eig.values[wb]
                qp = pa.T @ blk @ pb
                den = kdotw - al[:, None] + be[None, :]
                amin = float(np.min(np.abs(den)))
                bound = kappa * (1.0 + abs(wa - wb))
                if amin < bound or amin == 0.0:
                    i, j = np.unravel_index(np.argmin(np.abs(den)), den.shape)
                    raise SmallDivisorError(k, wa, wb, den[i, j], bound)
                divisor_min = min(divisor_min, amin)
                sp = 1j * qp / den
                s_dense[slices[wa], slices[wb]] = pa @ sp @ pb.T
        if np.max(np.abs(s_dense)) > 0.0:
            s_stack[k] = s_dense
        if k == zero_k:
            n_tilde = project_block_diagonal(bm)

    if n_tilde is None:
        n_tilde = NormalFormMatrix(basis, {})

    sol = HomologicalSolution(
        S=from_dense_stack(basis, s_stack, sigma=q.sigma),
        N_tilde=n_tilde,
        R=from_dense_stack(basis, r_stack, sigma=q.sigma),
        divisor_min=float(divisor_min) if np.isfinite(divisor_min) else np.inf,
        residual=0.0,
        divisor_report=report,
    )
    if check_residual:
        sol.residual = homological_residual(n, q, sol, w)
    return sol


def homological_residual(n, q, sol, w, grid_per_axis=None, p=None):
    """Relative sup over a torus grid of |w.grad S - i[N,S] - Ntilde + Q - R|.

    All terms have finite Fourier support, so the residual is synthesized
    from its exact Fourier coefficients; the scale is the sup of the weighted
    block norm of Q over the same grid.
    """
    from .blockmat import NormParams

    if p is None:
        p = NormParams(s=2.0, beta=0.25)
    basis = q.basis
    om = w.array()
    nd = n.to_dense()
    ntd = sol.N_tilde.to_dense()

    resid_stack = {}

    def add(k, arr):
        if k in resid_stack:
            resid_stack[k] = resid_stack[k] + arr
        else:
            resid_stack[k] = arr.copy()

    zero_k = (0,) * w.n
    for k, bm in sol.S.fourier.items():
        sd = bm.to_dense()
        kdotw = float(np.dot(k, om))
        add(k, 1j * kdotw * sd - 1j * (nd @ sd - sd @ nd))
    add(zero_k, -ntd)
    for k, bm in q.fourier.items():
        add(k, bm.to_dense())
    for k, bm in sol.R.fourier.items():
        add(k, -bm.to_dense())

    kmax = max((max(abs(c) for c in k) for k in resid_stack), default=0)
    g = grid_per_axis or max(2 * kmax + 3, 8)
    from .blockmat import grid_msb_sup

    vals = synth_grid(resid_stack, g, w.n, basis.size).reshape(-1, basis.size, basis.size)
    worst = grid_msb_sup(vals, basis, p)
    qvals = synth_grid(q.fourier_dense(), g, w.n, basis.size).reshape(-1, basis.size, basis.size)
    scale = grid_msb_sup(qvals, basis, p)
    return worst / scale if scale > 0 else worst


def divisor_histogram(n, w, K, bins=40):
    """Histogram of log10 |k.w - alpha_j + beta_l| over the scan range.

    Diagnostic companion to the divisor check: shows how close the frequency
    sits to the excluded set.  Returns (bin_edges, counts) plus the extremes.
    """
    eig = diagonalize_normal_form(n)
    lams = np.concatenate([eig.values[wa] for wa in n.basis.cluster_energies])
    om = w.array()
    K = int(K)
    import itertools

    vals = []
    for k in itertools.product(range(-K, K + 1), repeat=w.n):
        t = float(np.dot(k, om))
        d = np.abs(t - lams[:, None] + lams[None, :])
        if not any(k):
            d = d[~np.eye(len(lams), dtype=bool)]
        vals.append(d.ravel())
    allv = np.concatenate(vals)
    allv = allv[allv > 0]
    logs = np.log10(allv)
    counts, edges = np.histogram(logs, bins=bins)
    return {
        "bin_edges_log10": edges.tolist(),
        "counts": counts.tolist(),
        "min_divisor": float(allv.min()),
        "max_divisor": float(allv.max()),
    }


def delort_bound_check(n, w, kappa, K, trials, seed, delta=0.5, c_mu=None):
    """Ratio suite for the divided-block bound behind the generator estimate.

    For random unit-operator-norm blocks A on random (k, cluster pair), forms
    B_jl = A_jl / (k.w - mu_j + mu_l) in the eigenbasis of ``n`` and reports,
    per case of the scale comparison between the two clusters, the sup of

        ||B|| * kappa^(1 + d/(2 delta)) * (1 + |w_a - w_b|) / (K^(d/2) ||A||).

    ``c_mu`` and ``delta`` describe the eigenvalue drift |mu_a - w_a| <=
    min(c_mu / w_a^delta, 1/4); with ``c_mu=None`` the smallest valid constant
    is measured from ``n`` itself.
    """
    if kappa <= 0:
        raise ParameterError("kappa must be positive")
    K = int(K)
    basis = n.basis
    d = basis.dimension_d
    eig = diagonalize_normal_form(n)
    energies = basis.cluster_energies

    devs = {wa: np.max(np.abs(eig.values[wa] - wa)) if len(eig.values[wa]) else 0.0
            for wa in energies}
    if max(devs.values()) > 0.25:
        raise PreconditionError("eigenvalue drift exceeds 1/4; proximity hypothesis fails")
    measured_c_mu = max((devs[wa] * wa**delta for wa in energies), default=0.0)
    if c_mu is None:
        c_mu = measured_c_mu
    elif measured_c_mu > c_mu:
        raise PreconditionError(
            f"eigenvalue drift needs C_mu >= {measured_c_mu:.3e}, got {c_mu:.3e}"
        )

    report = check_divisors(n, w, kappa, K)
    if not report.passed:
        raise PreconditionError("Melnikov divisor condition fails for these (kappa, K)")

    om_norm = float(np.linalg.norm(w.array()))
    k1 = max(4.0, 4.0 * K * om_norm)
    k2 = k1 * (2.0 * c_mu / kappa) ** (1.0 / delta) if c_mu > 0 else 0.0

    rng = np.random.default_rng(seed)
    om = w.array()
    cases = {1: [0, 0.0], 2: [0, 0.0], 3: [0, 0.0]}  # case -> [count, max ratio]
    kappa_pow = kappa ** (1.0 + d / (2.0 * delta))
    for _ in range(int(trials)):
        k = tuple(int(c) for c in rng.integers(-K, K + 1, size=w.n))
        wa = int(rng.choice(energies))
        wb = int(rng.choice(energies))
        if not any(k) and wa == wb:
            continue
        al = eig.values[wa]
        be = eig.values[wb]
        a = rng.standard_normal((len(al), len(be))) + 1j * rng.standard_normal((len(al), len(be)))
        a /= np.linalg.norm(a, 2)
        den = float(np.dot(k, om)) - al[:, None] + be[None, :]
        b = a / den
        ratio = np.linalg.norm(b, 2) * kappa_pow * (1.0 + abs(wa - wb)) / K ** (d / 2.0)
        hi, lo = max(wa, wb), min(wa, wb)
        if hi > k1 * lo:
            case = 1
        elif hi > k2:
            case = 2
        else:
            case = 3
        cases[case][0] += 1
        cases[case][1] = max(cases[case][1], float(ratio))

    return {
        "delta": float(delta),
        "c_mu": float(c_mu),
        "K1": float(k1),
        "K2": float(k2),
        "kappa": float(kappa),
        "K": K,
        "trials": int(trials),
        "cases": {
            str(c): {"count": cases[c][0], "max_ratio": cases[c][1]} for c in (1, 2, 3)
        },
    }
