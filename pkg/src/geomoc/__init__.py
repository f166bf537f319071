"""geomoc: geometric discrete optimal-control toolkit.

Core numerics: :mod:`geomoc.matlie` (so(n)/SO(n) kernels),
:mod:`geomoc.rb_smooth` and :mod:`geomoc.rb_discrete` (smooth and
discrete rigid body in classical and symmetric form),
:mod:`geomoc.ocp` (discrete maximum principle, symplectic checks,
shooting), :mod:`geomoc.learn` (multi-sample terminal-cost sweeps and
trainers), :mod:`geomoc.bracket` (adjoint-orbit extremal and
double-bracket flows). The experiment runner is exposed through a
FastAPI service (:mod:`geomoc.service`) with :mod:`geomoc.cli` as a
thin client.
"""

__version__ = "0.1.0"

from .matlie import (  # noqa: F401
    Rotation,
    SkewMatrix,
    commutator,
    hat,
    killing_pair,
    mat_asinh,
    mat_exp,
    op_norm,
    project_so,
)
from .rb_smooth import InertiaSpec, RBState, SRBState, rb_to_srb, rk4_integrate, srb_to_rb  # noqa: F401
from .rb_discrete import DiscreteRBState, MVState, jd_apply, jd_solve, sdrb_step  # noqa: F401

__all__ = [
    "__version__",
    "Rotation",
    "SkewMatrix",
    "commutator",
    "hat",
    "killing_pair",
    "mat_asinh",
    "mat_exp",
    "op_norm",
    "project_so",
    "InertiaSpec",
    "RBState",
    "SRBState",
    "rb_to_srb",
    "srb_to_rb",
    "rk4_integrate",
    "DiscreteRBState",
    "MVState",
    "jd_apply",
    "jd_solve",
    "sdrb_step",
]
