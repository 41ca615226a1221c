import numpy as np
import pytest

from kamreduce.basis import build_basis
from kamreduce.blockmat import NormalFormMatrix
from kamreduce.kam import KamParams, run_kam
from kamreduce.melnikov import Frequency
from kamreduce.qpmat import FourierTerm, GaussPolyProfile, PotentialSpec, assemble_q

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def reference_potential():
    """Gaussian zero mode plus a single-cosine forcing with a polynomial bump."""
    prof0 = GaussPolyProfile(poly=((1.0,),), gamma=(1.0,))
    prof1 = GaussPolyProfile(poly=((1.0, 0.0, 0.25),), gamma=(1.0,))
    return PotentialSpec.symmetrized(
        (
            FourierTerm((0,), 0.35 + 0j, prof0),
            FourierTerm((1,), 0.25 + 0j, prof1),
        )
    )


@pytest.fixture(scope="session")
def basis_d1():
    return build_basis(1, 21)


@pytest.fixture(scope="session")
def basis_d1_small():
    return build_basis(1, 9)


@pytest.fixture(scope="session")
def basis_d2():
    return build_basis(2, 12)


@pytest.fixture(scope="session")
def golden():
    return Frequency((GOLDEN,))


@pytest.fixture(scope="session")
def reference_run(basis_d1, golden):
    """Converged deep reference reduction shared across test modules."""
    eps = 1e-3
    q0 = assemble_q(reference_potential(), basis_d1).scale(eps)
    params = KamParams(
        d=1, n=1, epsilon0=eps, sigma0=1.0, s=2.0, beta=0.25,
        target_qnorm=1e-45, max_steps=5,
    )
    n0 = NormalFormMatrix.n0(basis_d1)
    result = run_kam(n0, q0, golden, params, check_conjugation=True)
    assert result.status == "converged"
    return {
        "basis": basis_d1,
        "omega": golden,
        "eps": eps,
        "q0": q0,
        "params": params,
        "result": result,
    }
