"""KAM iteration: parameter schedule, conjugation step, driver, transformation.

Each step solves one homological equation, absorbs the resonant average into
the normal form, and conjugates the remainder by the time-one flow of the
generator; the new perturbation is

    Q+ = R - i * int_0^1 e^(itS) [(1-t)(Ntilde + R) + t Q, S] e^(-itS) dt,

evaluated pointwise on a torus grid with Gauss-Legendre quadrature in t and
transformed back to Fourier coefficients.  An independent oracle re-derives
the transformed generator as e^(iS)(N+Q)e^(-iS) + i e^(iS) d_phi[e^(-iS)]
with the angular derivative taken spectrally, and never touches the integral
above; the match of the two is the central correctness diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .blockmat import (
    NormalFormMatrix,
    NormParams,
    dense_msb_norm,
    grid_msb_sup,
    msb_norm,
    project_block_diagonal,
)
from .errors import ParameterError, SmallDivisorError
from .homological import solve_homological
from .melnikov import check_divisors
from .qpmat import QPMatrix, analyze_grid, from_dense_stack, synth_grid, torus_grid

__all__ = [
    "KamParams",
    "KamState",
    "Transformation",
    "KamResult",
    "make_schedule",
    "kam_step",
    "run_kam",
    "transformation_distance",
    "wab_check",
]


@dataclass
class KamParams:
    """Run parameters and the derived exponents of the iteration.

    ``kappa_delta`` drives the divisor-floor schedule kappa_m =
    eps_{m-1}^kappa_delta.  The theorem-level exponent ``delta`` (bounded by
    ``delta0``) is far too small to be usable at double precision -- eps^delta
    stays within a percent of 1 for any representable eps, which would exclude
    every frequency -- so the divisor schedule is decoupled from it and
    defaults to exponent 1.  ``delta`` keeps its role in the reported measure
    bounds.
    """

    d: int
    n: int
    epsilon0: float
    sigma0: float = 1.0
    s: float = 2.0
    beta: float = 0.25
    alpha1: float = None
    alpha2: float = 1.0
    delta: float = None
    kappa_delta: float = 1.0
    kappa_floor: float = 1e-13
    max_steps: int = 8
    target_qnorm: float = None
    t_quad_nodes: int = 6
    k_rep_cap: int = None
    grid_points: int = None
    k_scan_cap: int = None
    phi_samples: int = 64

    def __post_init__(self):
        if self.epsilon0 <= 0:
            raise ParameterError(f"epsilon0 must be positive, got {self.epsilon0}")
        if self.sigma0 <= 0:
            raise ParameterError(f"sigma0 must be positive, got {self.sigma0}")
        if not 0 < self.beta <= 1:
            raise ParameterError(f"beta must lie in (0, 1], got {self.beta}")
        if self.s < 0:
            raise ParameterError(f"s must be >= 0, got {self.s}")
        if self.alpha1 is None:
            self.alpha1 = self.n + 1
        if self.delta is None:
            self.delta = self.delta0
        if self.delta > self.delta0 * (1 + 1e-12):
            raise ParameterError(f"delta={self.delta} exceeds delta0={self.delta0}")
        if self.target_qnorm is None:
            self.target_qnorm = 1e-12 * self.epsilon0
        if self.k_rep_cap is None:
            self.k_rep_cap = 40 if self.n == 1 else 12
        if self.grid_points is None:
            self.grid_points = 4 * self.k_rep_cap + 5
        if self.grid_points <= 2 * self.k_rep_cap:
            raise ParameterError("grid_points must exceed twice the Fourier cap")
        if self.t_quad_nodes < 2:
            raise ParameterError("need at least 2 quadrature nodes in t")

    @property
    def delta0(self):
        b, a2, d = self.beta, self.alpha2, self.d
        return b * b * a2 / (16 * (2 + d + 2 * b * a2) * (d + 2 * b))

    @property
    def delta0_prime(self):
        return self.beta / (8 * (self.d + 2 * self.beta))

    @property
    def nu(self):
        return 4 * (self.d / self.beta + 2)

    @property
    def alpha_exp(self):
        b, a2, d = self.beta, self.alpha2, self.d
        return b * a2 / (2 + d + 2 * b * a2)

    @property
    def norm_params(self):
        return NormParams(s=self.s, beta=self.beta)


_C_STAR_INV = 2 * np.pi**2 / 6  # 2 * sum_j j^-2


def _sigma_at(p, m):
    partial = sum(1.0 / j**2 for j in range(1, m + 1))
    return p.sigma0 * (1.0 - partial / _C_STAR_INV)


def make_schedule(p, m):
    """Schedule values (sigma_m, K_m, kappa_m, eps_m) for step m >= 1.

    eps_m = eps_0^((3/2)^m); the analyticity widths shrink like sigma_0/m^2
    with total loss sigma_0/2; K_m = 2 ln(1/eps_m) / (sigma_{m-1} - sigma_m);
    kappa_m = eps_{m-1}^kappa_delta floored at ``kappa_floor``.
    """
    if m < 1:
        raise ParameterError("schedule is defined for m >= 1")
    eps_m = p.epsilon0 ** (1.5**m)
    eps_prev = p.epsilon0 ** (1.5 ** (m - 1))
    sig_prev = _sigma_at(p, m - 1)
    sig_m = _sigma_at(p, m)
    k_m = 2.0 * np.log(1.0 / eps_m) / (sig_prev - sig_m)
    kappa_raw = eps_prev**p.kappa_delta
    kappa_m = max(kappa_raw, p.kappa_floor)
    return sig_m, k_m, kappa_m, eps_m


@dataclass
class ScheduleRow:
    m: int
    sigma: float
    K: float
    kappa: float
    eps: float
    kappa_floored: bool


def schedule_row(p, m):
    sig, k, kap, eps = make_schedule(p, m)
    return ScheduleRow(
        m=m, sigma=sig, K=k, kappa=kap, eps=eps,
        kappa_floored=kap == p.kappa_floor and p.epsilon0 ** (1.5 ** (m - 1) * p.kappa_delta) < p.kappa_floor,
    )


@dataclass
class KamState:
    """One rung of the iteration."""

    m: int
    N: NormalFormMatrix
    Q: QPMatrix
    sigma: float
    K: float
    kappa: float
    eps: float
    S_list: tuple = ()
    qnorm_history: tuple = ()
    divisor_min_history: tuple = ()
    defect_history: tuple = ()
    residual_history: tuple = ()
    conj_residual_history: tuple = ()
    kappa_floored_history: tuple = ()


def _grid_eigh(s_vals):
    """Eigendecompositions of a stack of hermitian matrices."""
    lam, u = np.linalg.eigh(s_vals)
    return lam, u


def _unitary_stack(lam, u, t):
    """e^(i t S) for a whole eigendecomposed stack."""
    phase = np.exp(1j * t * lam)
    return (u * phase[:, None, :]) @ np.conj(np.swapaxes(u, -1, -2))


def _spectral_angle_derivative(values, n, omega):
    """w . grad_phi of grid-sampled matrix data, computed through the FFT."""
    g = values.shape[0]
    axes = tuple(range(n))
    coeffs = np.fft.fftn(values, axes=axes)
    freqs = np.rint(np.fft.fftfreq(g) * g).astype(int)
    kd = np.zeros((g,) * n)
    for ax in range(n):
        shape = [1] * n
        shape[ax] = g
        kd = kd + freqs.reshape(shape) * omega[ax]
    return np.fft.ifftn(coeffs * (1j * kd)[..., None, None], axes=axes)


def kam_step(state, w, p, check_conjugation=True):
    """One conjugation step: returns the next :class:`KamState`.

    Raises :class:`SmallDivisorError` when the frequency fails the divisor
    check of the incoming schedule rung; the caller owns the exclusion
    semantics.
    """
    basis = state.Q.basis
    size = basis.size
    row = schedule_row(p, state.m + 1)

    sol = solve_homological(
        state.N, state.Q, w, row.kappa, row.K, check_residual=True, k_scan_cap=p.k_scan_cap
    )
    n_next = state.N.plus(sol.N_tilde)

    # grid-pointwise update of the perturbation
    g = p.grid_points
    n_dim = p.n
    s_grid = synth_grid(sol.S.fourier_dense(), g, n_dim, size).reshape(-1, size, size)
    q_grid = synth_grid(state.Q.fourier_dense(), g, n_dim, size).reshape(-1, size, size)
    if sol.R.fourier:
        r_grid = synth_grid(sol.R.fourier_dense(), g, n_dim, size).reshape(-1, size, size)
    else:
        r_grid = np.zeros_like(q_grid)
    ntil = sol.N_tilde.to_dense()

    x, wts = np.polynomial.legendre.leggauss(p.t_quad_nodes)
    t_nodes = (x + 1.0) / 2.0
    t_wts = wts / 2.0

    lam, u = _grid_eigh(s_grid)
    q_next_grid = np.empty_like(q_grid)
    for gi in range(s_grid.shape[0]):
        s = s_grid[gi]
        x0 = ntil + r_grid[gi]
        x1 = q_grid[gi]
        acc = np.zeros((size, size), dtype=complex)
        for ti, wi in zip(t_nodes, t_wts):
            e = (u[gi] * np.exp(1j * ti * lam[gi])[None, :]) @ u[gi].conj().T
            y = (1.0 - ti) * x0 + ti * x1
            b = y @ s - s @ y
            acc += wi * (e @ b @ e.conj().T)
        q_next_grid[gi] = r_grid[gi] - 1j * acc

    k_rep = min(int(np.floor(row.K)), p.k_rep_cap)
    stack_next = analyze_grid(q_next_grid.reshape((g,) * n_dim + (size, size)), n_dim, k_rep)
    kept_grid = synth_grid(stack_next, g, n_dim, size).reshape(-1, size, size)
    defect = float(np.max(np.abs(q_next_grid - kept_grid))) if q_next_grid.size else 0.0
    q_next = from_dense_stack(basis, stack_next, sigma=row.sigma)
    qnorm = grid_msb_sup(kept_grid, basis, p.norm_params)

    conj_resid = np.nan
    if check_conjugation:
        e_grid = _unitary_stack(lam, u, 1.0)
        e_inv = np.conj(np.swapaxes(e_grid, -1, -2))
        d_grid = _spectral_angle_derivative(
            e_inv.reshape((g,) * n_dim + (size, size)), n_dim, w.array()
        ).reshape(-1, size, size)
        n_prev = state.N.to_dense()
        n_next_d = n_next.to_dense()
        worst = 0.0
        scale = 0.0
        for gi in range(e_grid.shape[0]):
            oracle = e_grid[gi] @ (n_prev + q_grid[gi]) @ e_inv[gi] + 1j * (
                e_grid[gi] @ d_grid[gi]
            )
            diff = oracle - n_next_d - kept_grid[gi]
            worst = max(worst, float(np.linalg.norm(diff, 2)))
            scale = max(scale, float(np.linalg.norm(oracle, 2)))
        conj_resid = worst / scale if scale > 0 else worst

    return KamState(
        m=state.m + 1,
        N=n_next,
        Q=q_next,
        sigma=row.sigma,
        K=row.K,
        kappa=row.kappa,
        eps=row.eps,
        S_list=state.S_list + (sol.S,),
        qnorm_history=state.qnorm_history + (qnorm,),
        divisor_min_history=state.divisor_min_history + (sol.divisor_min,),
        defect_history=state.defect_history + (defect,),
        residual_history=state.residual_history + (sol.residual,),
        conj_residual_history=state.conj_residual_history + (conj_resid,),
        kappa_floored_history=state.kappa_floored_history + (row.kappa_floored,),
    )


@dataclass
class Transformation:
    """Assembled reducing map M(phi) = e^(iS_M(phi)) ... e^(iS_1(phi)).

    Factors are applied in order of construction: the innermost generator is
    the first one, matching the step-by-step change of variables, so the
    reduced propagation below is exact for the truncated system.
    """

    basis: object
    generators: tuple  # QPMatrix, step order

    def evaluate(self, phi):
        acc = np.eye(self.basis.size, dtype=complex)
        for s in self.generators:
            sv = s.value_at(phi)
            if np.max(np.abs(sv - sv.conj().T)) <= 1e-12 * max(1.0, np.max(np.abs(sv))):
                lam, u = np.linalg.eigh(sv)
                e = (u * np.exp(1j * lam)[None, :]) @ u.conj().T
            else:
                # complex angles break hermiticity; fall back to the dense exponential
                e = scipy.linalg.expm(1j * sv)
            acc = e @ acc
        return acc

    def unitarity_defect(self, n_dim, seed=0, samples=50):
        rng = np.random.default_rng(seed)
        worst = 0.0
        eye = np.eye(self.basis.size)
        for _ in range(samples):
            phi = rng.uniform(0.0, 2 * np.pi, size=n_dim)
            m = self.evaluate(phi)
            worst = max(worst, float(np.linalg.norm(m.conj().T @ m - eye, 2)))
        return worst


def transformation_distance(t, s_prime, beta, phi_samples, n_dim=1):
    """max over sampled angles of |M(phi) - Id| as a map l^2_s' -> l^2_(s'+2beta)."""
    w = t.basis.mode_weights
    eye = np.eye(t.basis.size)
    per_axis = max(1, int(round(phi_samples ** (1.0 / n_dim))))
    axis = 2 * np.pi * np.arange(per_axis) / per_axis
    worst = 0.0
    grids = np.meshgrid(*([axis] * n_dim), indexing="ij")
    pts = np.stack([gr.ravel() for gr in grids], axis=-1)
    s_to = s_prime + 2 * beta
    row_w = w[:, None] ** (s_to / 2)
    col_w = w[None, :] ** (-s_prime / 2)
    for phi in pts:
        diff = (t.evaluate(phi) - eye) * row_w * col_w
        worst = max(worst, float(np.linalg.norm(diff, 2)))
    return worst


@dataclass
class KamResult:
    state: KamState
    transformation: Transformation
    status: str  # converged | max_steps | excluded
    excluded_at: int = None
    divisor_violation: dict = None
    qnorm0: float = 0.0


def run_kam(n0, q0, w, p, check_conjugation=True):
    """Iterate the step to convergence and assemble the transformation.

    A frequency failing a divisor check is an outcome, not a crash: the
    result carries status "excluded" with the offending step and divisor.
    """
    basis = q0.basis
    g = p.grid_points
    if q0.fourier:
        vals = synth_grid(q0.fourier_dense(), g, p.n, basis.size).reshape(
            -1, basis.size, basis.size
        )
        qnorm0 = grid_msb_sup(vals, basis, p.norm_params)
    else:
        qnorm0 = 0.0

    state = KamState(
        m=0, N=n0, Q=q0, sigma=p.sigma0, K=0.0, kappa=0.0, eps=p.epsilon0,
        qnorm_history=(qnorm0,),
    )
    status = "converged" if qnorm0 <= p.target_qnorm else None
    excluded_at = None
    violation = None
    while status is None:
        try:
            state = kam_step(state, w, p, check_conjugation=check_conjugation)
        except SmallDivisorError as err:
            status = "excluded"
            excluded_at = state.m + 1
            violation = {
                "k": list(err.k),
                "w_row": err.w_row,
                "w_col": err.w_col,
                "divisor": err.value,
                "bound": err.bound,
            }
            break
        if state.qnorm_history[-1] <= p.target_qnorm:
            status = "converged"
        elif state.m >= p.max_steps:
            status = "max_steps"

    return KamResult(
        state=state,
        transformation=Transformation(basis=basis, generators=state.S_list),
        status=status,
        excluded_at=excluded_at,
        divisor_violation=violation,
        qnorm0=qnorm0,
    )


def wab_check(n_final, q0, eps, p):
    """Distance between the normal-form shift and the resonant average of Q0.

    ``q0`` is the eps-scaled initial perturbation, so the projected k = 0
    coefficient already carries one factor of eps.  Reports the distance in
    the weighted block norm and as an operator on l^2_s, raw and divided by
    eps.
    """
    basis = n_final.basis
    zero_k = (0,) * (q0.torus_dim)
    q0hat = q0.fourier.get(zero_k)
    if q0hat is None:
        from .blockmat import BlockMatrix

        q0hat = BlockMatrix.zeros(basis)
    pi_q0 = project_block_diagonal(q0hat)
    n0 = NormalFormMatrix.n0(basis)
    diff = (n_final - n0) - pi_q0
    w = basis.mode_weights
    dd = diff.to_dense() * (w[:, None] ** (p.s / 2)) * (w[None, :] ** (-p.s / 2))
    op = float(np.linalg.norm(dd, 2))
    msb = msb_norm(diff, p.norm_params)
    return {
        "op_distance": op,
        "msb_distance": msb,
        "op_distance_over_eps": op / eps,
        "msb_distance_over_eps": msb / eps,
    }
