"""Truncated-Fock-space workbench for extended Snyder oscillators."""
from .fock_core import (DimensionCapError, FockBasis, ModeId, ModelParams, Operator, PhaseSpace,
                        StructuralError, commutator, enumerate_basis)
from .hamiltonians import ModelKind, build_interaction, build_parts
from .realizations import RealizationKind, algebra_report, realize
from .spectra import FormulaId, closed_form, degenerate_correction, exact_spectrum

__all__ = [
    "DimensionCapError", "FockBasis", "ModeId", "ModelParams", "Operator", "PhaseSpace",
    "StructuralError", "commutator", "enumerate_basis", "ModelKind", "build_interaction",
    "build_parts", "RealizationKind", "algebra_report", "realize", "FormulaId", "closed_form",
    "degenerate_correction", "exact_spectrum",
]
