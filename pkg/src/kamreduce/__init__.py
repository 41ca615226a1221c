"""KAM reducibility engine for the quasiperiodically forced quantum
harmonic oscillator on R^d.

Builds the truncated Hermite eigenbasis, assembles the quasi-periodic
coupling matrix of a configured potential, runs the quadratic KAM iteration
to a block-diagonal normal form, and verifies the reduction dynamically
(trajectory cross-validation, Sobolev-norm bands, Floquet spectrum).
"""

from .basis import Basis, Cluster, Mode, build_basis, eval_eigenfunction, sobolev_weight
from .blockmat import (
    BlockMatrix,
    NormalFormMatrix,
    NormParams,
    block_expm,
    msb_norm,
    msb_plus_norm,
    operator_norm_weighted,
    project_block_diagonal,
)
from .errors import (
    ConfigError,
    KamreduceError,
    ParameterError,
    PreconditionError,
    ResolutionError,
    SmallDivisorError,
    StructuralError,
)
from .homological import diagonalize_normal_form, solve_homological
from .kam import (
    KamParams,
    KamState,
    Transformation,
    kam_step,
    make_schedule,
    run_kam,
    transformation_distance,
    wab_check,
)
from .melnikov import (
    Frequency,
    check_A1,
    check_divisors,
    diophantine_member,
    estimate_excluded_measure,
)
from .qpmat import (
    FourierTerm,
    GaussPolyProfile,
    PotentialSpec,
    QPMatrix,
    assemble_q,
    decay_profile,
    synthesize_on_grid,
)

__version__ = "0.1.0"
