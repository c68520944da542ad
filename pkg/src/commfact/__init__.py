"""Commutative factorization checks for algebraic matrix functions.

Given a square matrix whose entries are built from ``k``, constants and
(possibly nested) square roots, the package computes the Riemann surface
(branch affixes, sheets, monodromy), tests whether sheet values commute
(branch-commutativity) or whether basic bypass matrices commute
(bypass-commutativity), and builds the corresponding rational objects:
the Ansatz matrix ``A`` or the symmetrizer ``S``.
"""

from .expr import (
    BranchAssignment,
    EvaluationError,
    Expression,
    MatrixFunction,
    ParseError,
    UnboundSymbolError,
    evaluate,
    parse_expression,
)
from .words import Letter, Word, compose, invert, parse_word, truncate, truncation_chain
from .ratrecon import RationalFunction, reconstruct_rational, verify_single_valued
from .surface import (
    BranchAffix,
    SheetAtlas,
    SurfaceConfig,
    build_atlas,
    find_branch_affixes,
    is_balanced,
    monodromy_permutation,
)
from .continuation import (
    basic_bypass_matrices,
    bypass_matrix,
    continue_value,
    qminus_chain,
    qplus_chain,
    value_on_sheet,
)
from .classify import (
    ClassifyConfig,
    build_ansatz,
    build_symmetrizer,
    classify,
    eigen_frame,
    eigenframe_branch_affixes,
    is_branch_commutative,
    is_bypass_commutative,
)

__version__ = "0.1.0"
