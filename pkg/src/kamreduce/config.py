"""Run configuration: JSON schema, aggregated validation, object assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .basis import build_basis
from .errors import ConfigError, ParameterError
from .kam import KamParams
from .melnikov import Frequency
from .qpmat import FourierTerm, GaussPolyProfile, PotentialSpec, assemble_q

__all__ = ["RunConfig", "load_config"]


@dataclass
class RunConfig:
    d: int = 1
    n: int = 1
    e_max: int = 21
    q_pts: int = None
    s: float = 2.0
    beta: float = 0.25
    sigma0: float = 1.0
    epsilon: float = 1e-3
    omega: list = None
    potential: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    measure: dict = field(default_factory=dict)
    output_dir: str = "out"

    _KNOWN = {
        "d", "n", "e_max", "q_pts", "s", "beta", "sigma0", "epsilon", "omega",
        "potential", "schedule", "seeds", "verify", "measure", "output_dir",
    }
    _SCHEDULE_KEYS = {
        "delta", "kappa_delta", "kappa_floor", "max_steps", "target_qnorm",
        "t_quad_nodes", "k_rep_cap", "grid_points", "k_scan_cap", "alpha1", "alpha2",
    }

    def validate(self, require_omega=False):
        """Collect every violation; raise one aggregated error if any."""
        problems = []
        if not isinstance(self.d, int) or self.d < 1:
            problems.append(f"d must be a positive integer, got {self.d!r}")
        if not isinstance(self.n, int) or self.n < 1:
            problems.append(f"n must be a positive integer, got {self.n!r}")
        if not isinstance(self.e_max, int) or self.e_max < self.d:
            problems.append(f"e_max must be an integer >= d, got {self.e_max!r}")
        if self.q_pts is not None and self.q_pts < self.e_max:
            problems.append(f"q_pts={self.q_pts} below e_max={self.e_max}")
        if self.s < 0:
            problems.append(f"s must be >= 0, got {self.s}")
        if not 0 < self.beta <= 1:
            problems.append(f"beta must lie in (0, 1], got {self.beta}")
        if self.sigma0 <= 0:
            problems.append(f"sigma0 must be positive, got {self.sigma0}")
        if self.epsilon < 0:
            problems.append(f"epsilon must be >= 0, got {self.epsilon}")
        if require_omega:
            if self.omega is None:
                problems.append("omega is required for this command")
            elif len(self.omega) != self.n:
                problems.append(f"omega has {len(self.omega)} components, n={self.n}")
            elif any(not (0 <= c < 2 * np.pi) for c in self.omega):
                problems.append(f"omega components must lie in [0, 2pi), got {self.omega}")
        unknown = set(self.schedule) - self._SCHEDULE_KEYS
        if unknown:
            problems.append(f"unknown schedule keys: {sorted(unknown)}")
        try:
            self.potential_spec()
        except ParameterError as err:
            problems.append(f"potential: {err}")
        if problems:
            raise ConfigError(problems)
        return self

    # -- assembly -----------------------------------------------------------

    def potential_spec(self):
        terms = []
        for t in self.potential.get("terms", []):
            coeff = t["coefficient"]
            coeff = complex(coeff[0], coeff[1]) if isinstance(coeff, list) else complex(coeff)
            prof = t["profile"]
            terms.append(
                FourierTerm(
                    k=tuple(int(c) for c in t["k"]),
                    coefficient=coeff,
                    profile=GaussPolyProfile(
                        poly=tuple(tuple(float(c) for c in ax) for ax in prof["poly"]),
                        gamma=tuple(float(g) for g in prof["gamma"]),
                    ),
                )
            )
        if self.potential.get("symmetrize", True):
            return PotentialSpec.symmetrized(tuple(terms))
        return PotentialSpec(tuple(terms))

    def build_basis(self):
        return build_basis(self.d, self.e_max, self.q_pts)

    def frequency(self):
        return Frequency(tuple(float(c) for c in self.omega))

    def kam_params(self):
        sched = dict(self.schedule)
        return KamParams(
            d=self.d,
            n=self.n,
            epsilon0=self.epsilon,
            sigma0=self.sigma0,
            s=self.s,
            beta=self.beta,
            alpha1=sched.get("alpha1"),
            alpha2=sched.get("alpha2", 1.0),
            delta=sched.get("delta"),
            kappa_delta=sched.get("kappa_delta", 1.0),
            kappa_floor=sched.get("kappa_floor", 1e-13),
            max_steps=sched.get("max_steps", 8),
            target_qnorm=sched.get("target_qnorm"),
            t_quad_nodes=sched.get("t_quad_nodes", 6),
            k_rep_cap=sched.get("k_rep_cap"),
            grid_points=sched.get("grid_points"),
            k_scan_cap=sched.get("k_scan_cap"),
        )

    def initial_perturbation(self, basis):
        """eps-scaled quasi-periodic matrix of the configured potential."""
        q_raw = assemble_q(self.potential_spec(), basis, sigma=self.sigma0)
        return q_raw.scale(self.epsilon), q_raw

    def initial_state(self, basis):
        spec = self.verify.get("xi0", {"type": "uniform"})
        kind = spec.get("type", "uniform")
        if kind == "uniform":
            xi = np.ones(basis.size, dtype=complex)
        elif kind == "ground":
            xi = np.zeros(basis.size, dtype=complex)
            xi[0] = 1.0
        elif kind == "coeffs":
            vals = spec["values"]
            xi = np.array([complex(v[0], v[1]) for v in vals], dtype=complex)
            if xi.shape != (basis.size,):
                raise ParameterError(f"xi0 has {len(xi)} entries, basis has {basis.size}")
        else:
            raise ParameterError(f"unknown xi0 type {kind!r}")
        return xi / np.linalg.norm(xi)


def load_config(path_or_dict):
    if isinstance(path_or_dict, dict):
        raw = dict(path_or_dict)
    else:
        with open(path_or_dict) as fh:
            raw = json.load(fh)
    unknown = set(raw) - RunConfig._KNOWN
    if unknown:
        raise ConfigError([f"unknown top-level keys: {sorted(unknown)}"])
    return RunConfig(**raw)
