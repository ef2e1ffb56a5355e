from app.residual.chf import as_complex, compile_chf, eval_chf_residual
from app.residual.fp import compile_fp, eval_fp_residual, eval_transformed_fp
from app.residual.render import format_residual, residual_from_json, residual_to_json
from app.residual.terms import (
    ChfFactor,
    ChfResidual,
    DerivTerm,
    DilationTerm,
    FpResidual,
    canonical_terms,
)

__all__ = [
    "ChfFactor",
    "ChfResidual",
    "DerivTerm",
    "DilationTerm",
    "FpResidual",
    "as_complex",
    "canonical_terms",
    "compile_chf",
    "compile_fp",
    "eval_chf_residual",
    "eval_fp_residual",
    "eval_transformed_fp",
    "format_residual",
    "residual_from_json",
    "residual_to_json",
]
