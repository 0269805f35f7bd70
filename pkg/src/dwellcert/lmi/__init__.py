"""Matrix-inequality assembly, the feasibility oracle, and certificate checking."""
from .certificate import (Certificate, VerificationReport, condition_margins, duplicate_last_piece,
                          jump_margin, sample_check, verify_certificate)
from .conditions import (ScalarMultipliers, assemble_delta, assemble_fixed_P, assemble_fixed_scalars,
                         condition_matrices, multipliers_from, pieces_from)
from .problem import AffineMatrix, Feasibility, LmiProblem, recheck, solve_feasibility, strict_margin

__all__ = [
    "AffineMatrix", "Certificate", "Feasibility", "LmiProblem", "ScalarMultipliers",
    "VerificationReport", "assemble_delta", "assemble_fixed_P", "assemble_fixed_scalars",
    "condition_margins", "condition_matrices", "duplicate_last_piece", "jump_margin",
    "multipliers_from", "pieces_from", "recheck", "sample_check", "solve_feasibility",
    "strict_margin", "verify_certificate",
]
