"""Small-divisor verification and frequency-exclusion measure estimates.

The second Melnikov condition asks |k.w - alpha_j + beta_l| >= kappa * (1 +
|w_a - w_b|) for all Fourier indices 0 < |k| <= K and all eigenvalue pairs of
the normal-form clusters (plus the k = 0 case across distinct clusters).
Exclusion-set measures are estimated by uniform sampling of the frequency
box; Cantor-set constructions are never represented exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

__all__ = [
    "Frequency",
    "DivisorReport",
    "MeasureEstimate",
    "check_A1",
    "check_divisors",
    "diophantine_member",
    "estimate_excluded_measure",
]

_MAX_RECORDED_VIOLATIONS = 200


@dataclass(frozen=True)
class Frequency:
    """Forcing frequency vector, one angle speed per torus dimension."""

    omega: tuple[float, ...]

    def __post_init__(self):
        om = tuple(float(c) for c in self.omega)
        object.__setattr__(self, "omega", om)
        if any(not (0 <= c < 2 * np.pi) for c in om):
            raise ParameterError(f"omega components must lie in [0, 2pi), got {om}")

    @property
    def n(self):
        return len(self.omega)

    def array(self):
        return np.asarray(self.omega, dtype=float)


@dataclass
class DivisorReport:
    kappa: float
    K: int
    violations: list  # (k tuple, w_a, w_b, divisor, bound)
    passed: bool
    n_violations: int = 0
    min_divisor: float = np.inf  # smallest |divisor| over the scan
    min_normalized: float = np.inf  # smallest |divisor| / (1 + |w_a - w_b|)
    k_scan_truncated: bool = False

    def violations_csv(self):
        lines = []
        for k, wa, wb, div, bound in self.violations:
            ks = ",".join(str(c) for c in k)
            lines.append(f"{ks},{wa},{wb},{div!r},{bound!r}")
        return lines


@dataclass
class MeasureEstimate:
    samples: int
    excluded_fraction: float
    confidence_halfwidth: float
    kappa: float = 0.0
    K: int = 1
    seed: int = 0


def _cluster_eigendata(n):
    """Flat arrays of normal-form eigenvalues and their cluster energies."""
    lams = []
    ws = []
    for (wr, wc), blk in sorted(n.blocks.items()):
        if wr != wc:
            raise ParameterError("normal form expected (off-diagonal block present)")
        ev = np.linalg.eigvalsh(blk)
        lams.extend(ev.real)
        ws.extend([wr] * len(ev))
    return np.asarray(lams, dtype=float), np.asarray(ws, dtype=float)


def check_A1(n):
    """Spectral asymptotics of a normal form: growth and cluster-gap ratios.

    Returns (c0_lower, c0_gap): the infimum of lambda_min(N_[a]) / w_a and the
    infimum over distinct cluster pairs of eigenvalue gap / |w_a - w_b|.
    """
    lams, ws = _cluster_eigendata(n)
    c0_lower = float(np.min(lams / ws))
    c0_gap = np.inf
    energies = np.unique(ws)
    for wa in energies:
        la = lams[ws == wa]
        for wb in energies:
            if wb <= wa:
                continue
            lb = lams[ws == wb]
            gap = np.min(np.abs(la[:, None] - lb[None, :]))
            c0_gap = min(c0_gap, gap / abs(wa - wb))
    return c0_lower, float(c0_gap)


def _k_lattice(n_dim, kmax):
    rng = range(-kmax, kmax + 1)
    for k in itertools.product(rng, repeat=n_dim):
        if any(k):
            yield k


def check_divisors(n, w, kappa, K, k_scan_cap=None):
    """Scan all divisors k.w - alpha_j + beta_l against the Melnikov bound.

    Scans 0 < |k|_inf <= K plus the k = 0 case across distinct clusters.  For
    n = 1 the scan is pruned exactly: once |k w| exceeds every eigenvalue
    difference plus its bound no further k can violate.  For n >= 2 a cap can
    be supplied; the report flags when it bites.
    """
    if kappa < 0:
        raise ParameterError("kappa must be >= 0")
    K = int(K)
    if K < 1:
        raise ParameterError("K must be >= 1")
    om = w.array()
    lams, ws = _cluster_eigendata(n)
    ldiff = (lams[:, None] - lams[None, :]).ravel()  # alpha_j - beta_l
    wdiff = np.abs(ws[:, None] - ws[None, :]).ravel()
    bounds = kappa * (1.0 + wdiff)

    report = DivisorReport(kappa=float(kappa), K=K, violations=[], passed=True)

    def scan(ks):
        t = ks @ om  # (nk,)
        div = t[:, None] - ldiff[None, :]
        absd = np.abs(div)
        norm = absd / (1.0 + wdiff[None, :])
        report.min_divisor = min(report.min_divisor, float(absd.min()))
        report.min_normalized = min(report.min_normalized, float(norm.min()))
        bad = absd < bounds[None, :]
        if bad.any():
            report.passed = False
            report.n_violations += int(bad.sum())
            for i, j in zip(*np.nonzero(bad)):
                if len(report.violations) >= _MAX_RECORDED_VIOLATIONS:
                    break
                p, q = divmod(int(j), len(lams))
                report.violations.append(
                    (
                        tuple(int(c) for c in ks[i]),
                        int(ws[p]),
                        int(ws[q]),
                        float(div[i, j]),
                        float(bounds[j]),
                    )
                )

    # k = 0 across distinct clusters
    mask0 = wdiff > 0
    if mask0.any():
        d0 = np.abs(ldiff[mask0])
        n0 = d0 / (1.0 + wdiff[mask0])
        report.min_divisor = min(report.min_divisor, float(d0.min()))
        report.min_normalized = min(report.min_normalized, float(n0.min()))
        bad0 = d0 < bounds[mask0]
        if bad0.any():
            report.passed = False
            report.n_violations += int(bad0.sum())
            idx = np.nonzero(mask0)[0][bad0]
            for j in idx[: _MAX_RECORDED_VIOLATIONS - len(report.violations)]:
                p, q = divmod(int(j), len(lams))
                report.violations.append(
                    (
                        (0,) * w.n,
                        int(ws[p]),
                        int(ws[q]),
                        float(ldiff[j]),
                        float(bounds[j]),
                    )
                )

    if w.n == 1:
        # exact pruning: |k w| - max|ldiff| grows without bound
        omega0 = abs(om[0])
        span = float(np.max(np.abs(ldiff))) + float(np.max(bounds)) + 1.0
        k_eff = K if omega0 == 0.0 else min(K, int(np.ceil(span / omega0)))
        ks = np.arange(-k_eff, k_eff + 1)
        ks = ks[ks != 0][:, None]
        # chunk to bound memory on very large K
        for lo in range(0, len(ks), 4096):
            scan(ks[lo : lo + 4096])
    else:
        k_eff = K if k_scan_cap is None else min(K, int(k_scan_cap))
        report.k_scan_truncated = k_eff < K
        batch = []
        for k in _k_lattice(w.n, k_eff):
            batch.append(k)
            if len(batch) >= 4096:
                scan(np.asarray(batch, dtype=float))
                batch = []
        if batch:
            scan(np.asarray(batch, dtype=float))

    # name the worst offender first: smallest divisor relative to its bound,
    # ties broken towards small Fourier indices
    report.violations.sort(
        key=lambda v: (abs(v[3]) / v[4], max(abs(c) for c in v[0]), v[0], v[1], v[2])
    )
    return report


def diophantine_member(w, kappa, tau, K):
    """Membership in the diophantine set |w.k + j| >= kappa / |k|^tau up to K.

    ``j`` runs over the integers; only the nearest one can violate.  The
    condition is scanned for 0 < |k|_inf <= K, so membership is certified up
    to that cutoff only.
    """
    if tau <= w.n:
        raise ParameterError(f"tau must exceed the torus dimension, got tau={tau}")
    om = w.array()
    if w.n == 1:
        ks = np.arange(1, K + 1, dtype=float)[:, None]  # sign symmetric
        t = (ks @ om).ravel()
        dist = np.abs(t - np.round(t))
        return bool(np.all(dist >= kappa / ks.ravel() ** tau))
    for k in _k_lattice(w.n, K):
        ka = np.asarray(k, dtype=float)
        t = float(ka @ om)
        dist = abs(t - round(t))
        if dist < kappa / np.max(np.abs(ka)) ** tau:
            return False
    return True


def estimate_excluded_measure(n, kappa, K, samples, seed, box_width=2 * np.pi, n_dim=1):
    """Monte-Carlo measure of frequencies violating the Melnikov condition.

    Frequencies are sampled uniformly over [0, box_width)^n with a seeded
    generator; the excluded fraction carries a 95% binomial half-width.
    """
    if samples < 100:
        raise ParameterError("at least 100 samples required")
    rng = np.random.default_rng(seed)
    lams, ws = _cluster_eigendata(n)
    ldiff = (lams[:, None] - lams[None, :]).ravel()
    wdiff = np.abs(ws[:, None] - ws[None, :]).ravel()
    bounds = kappa * (1.0 + wdiff)

    # k = 0 never depends on omega: either every sample fails or none does
    mask0 = wdiff > 0
    if mask0.any() and bool(np.any(np.abs(ldiff[mask0]) < bounds[mask0])):
        return MeasureEstimate(
            samples=samples,
            excluded_fraction=1.0,
            confidence_halfwidth=0.0,
            kappa=float(kappa),
            K=int(K),
            seed=int(seed),
        )

    ks = np.asarray(list(_k_lattice(n_dim, int(K))), dtype=float)
    failed = 0
    batch = max(1, int(2e6 // max(1, len(ks) * len(ldiff))))
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        om = rng.uniform(0.0, box_width, size=(m, n_dim))
        t = om @ ks.T  # (m, nk)
        div = np.abs(t[:, :, None] - ldiff[None, None, :])
        bad = (div < bounds[None, None, :]).any(axis=(1, 2))
        failed += int(bad.sum())
        done += m
    frac = failed / samples
    half = 1.96 * np.sqrt(max(frac * (1 - frac), 1e-12) / samples)
    return MeasureEstimate(
        samples=samples,
        excluded_fraction=float(frac),
        confidence_halfwidth=float(half),
        kappa=float(kappa),
        K=int(K),
        seed=int(seed),
    )
