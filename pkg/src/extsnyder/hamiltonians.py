"""Oscillator Hamiltonians of the extended Snyder and dynamical-Moyal models.

Every model splits as H = H0 + lam**2 * V.  H0 is diagonal in the
occupation basis; V is assembled monomial by monomial from canonical
operators in the operator order of each model definition.  ``build_from_realization``
substitutes realized operators into the defining quadratic form instead
and serves as an independent diagnostic path.
"""
from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fock_core import FockBasis, ModelParams, Operator, PhaseSpace, zero
from .realizations import RealizationKind, realize

log = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12


class ModelKind(enum.Enum):
    COVARIANT_EXTENDED = "covariant_extended"
    SPLIT_EQUAL_FREQUENCY = "split_equal_frequency"
    SPLIT_TWO_FREQUENCY_WEYL = "split_two_frequency_weyl"
    SPLIT_TWO_FREQUENCY_CLASSICAL = "split_two_frequency_classical"
    MOYAL_DYNAMIC = "moyal_dynamic"

    @classmethod
    def parse(cls, name: "str | ModelKind") -> "ModelKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown model {name!r}; expected one of {valid}") from None

    @property
    def two_frequency(self) -> bool:
        """Tensor modes oscillate at omega_tensor rather than omega."""
        return self in (ModelKind.SPLIT_TWO_FREQUENCY_WEYL,
                        ModelKind.SPLIT_TWO_FREQUENCY_CLASSICAL,
                        ModelKind.MOYAL_DYNAMIC)


COMPATIBLE = {
    ModelKind.COVARIANT_EXTENDED: (RealizationKind.WEYL, RealizationKind.WEYL_UNIFIED),
    ModelKind.SPLIT_EQUAL_FREQUENCY: (RealizationKind.WEYL, RealizationKind.WEYL_UNIFIED),
    ModelKind.SPLIT_TWO_FREQUENCY_WEYL: (RealizationKind.WEYL, RealizationKind.WEYL_UNIFIED),
    ModelKind.SPLIT_TWO_FREQUENCY_CLASSICAL: (RealizationKind.CLASSICAL,),
    ModelKind.MOYAL_DYNAMIC: (RealizationKind.MOYAL_DYNAMICAL,),
}


def default_realization(model) -> RealizationKind:
    return COMPATIBLE[ModelKind.parse(model)][0]


def check_compatible(model, realization) -> tuple[ModelKind, RealizationKind]:
    model = ModelKind.parse(model)
    realization = default_realization(model) if realization is None else RealizationKind.parse(realization)
    if realization not in COMPATIBLE[model]:
        allowed = ", ".join(r.value for r in COMPATIBLE[model])
        raise ValueError(f"model {model.value} requires realization {allowed}, got {realization.value}")
    return model, realization


def tensor_frequency(params: ModelParams, model) -> float:
    return params.omega_tensor if ModelKind.parse(model).two_frequency else params.omega


def model_phase(basis: FockBasis, params: ModelParams, model) -> PhaseSpace:
    """Canonical operators whose ladder operators diagonalize the model's H0."""
    return PhaseSpace.for_params(basis, params, tensor_freq=tensor_frequency(params, model))


@dataclass
class HamiltonianParts:
    h0: Operator
    v: Operator
    model: ModelKind

    def total(self, lam: float) -> Operator:
        return self.h0 + self.v * lam**2


def free_energies(basis: FockBasis, params: ModelParams, model) -> np.ndarray:
    """Free energy of every basis state: omega (sum n_i + D/2) + omega_T (sum_{i<j} n_ij + D(D-1)/4)."""
    d = params.d
    wt = tensor_frequency(params, model)
    states = basis.states
    n_vec = states[:, :d].sum(axis=1)
    n_ten = states[:, d:].sum(axis=1)
    return params.omega * (n_vec + d / 2) + wt * (n_ten + d * (d - 1) / 4)


def build_free(basis: FockBasis, params: ModelParams, model) -> Operator:
    return Operator(basis, sp.diags(free_energies(basis, params, model), format="csr"), True)


def _hermitize(op: Operator, label: str) -> Operator:
    defect = op.hermiticity_defect()
    if defect > HERMITIAN_TOL:
        log.warning("%s: verbatim ordering leaves anti-Hermitian part %.3e; symmetrizing", label, defect)
    return op.hermitian_part()


def _covariant_quartic(ph: PhaseSpace, beta: float) -> Operator:
    # sum over all Greek indices of x_mr p_nr (x_ms p_ns - x_ns p_ms)
    top = ph.d + 1
    greek = range(1, top + 1)
    X = {(a, b): ph.xu(a, b, beta) for a in greek for b in greek if a != b}
    P = {(a, b): ph.pu(a, b, beta) for a in greek for b in greek if a != b}
    out = zero(ph.basis)
    for mu, nu in itertools.permutations(greek, 2):
        for rho in greek:
            if rho in (mu, nu):
                continue
            left = X[mu, rho] @ P[nu, rho]
            inner = zero(ph.basis)
            for sg in greek:
                if sg in (mu, nu):
                    continue
                inner = inner + X[mu, sg] @ P[nu, sg] - X[nu, sg] @ P[mu, sg]
            out = out + left @ inner
    return out


def _vector_block(ph: PhaseSpace) -> Operator:
    x, p, r = ph.x, ph.p, range(1, ph.d + 1)
    out = zero(ph.basis)
    for i, j in itertools.product(r, r):
        if i != j:
            out = out + x(i) @ p(j) @ (x(i) @ p(j) - x(j) @ p(i))
    return out


def _tensor_block(ph: PhaseSpace) -> Operator:
    x, p, r = ph.x, ph.p, range(1, ph.d + 1)
    out = zero(ph.basis)
    for i, j in itertools.product(r, r):
        if i == j:
            continue
        for k in r:
            if k in (i, j):
                continue
            left = x(i, k) @ p(j, k)
            inner = zero(ph.basis)
            for h in r:
                if h in (i, j):
                    continue
                inner = inner + x(i, h) @ p(j, h) - x(j, h) @ p(i, h)
            out = out + left @ inner
    return out


def _mixed_block(ph: PhaseSpace) -> Operator:
    # sum_ijk x_i p_j (x_ik p_jk - x_jk p_ik)
    x, p, r = ph.x, ph.p, range(1, ph.d + 1)
    out = zero(ph.basis)
    for i, j in itertools.product(r, r):
        if i == j:
            continue
        inner = zero(ph.basis)
        for k in r:
            if k not in (i, j):
                inner = inner + x(i, k) @ p(j, k) - x(j, k) @ p(i, k)
        out = out + x(i) @ p(j) @ inner
    return out


def _moyal_term(ph: PhaseSpace) -> Operator:
    # sum_ijk x_ij p_j x_ik p_k
    x, p, r = ph.x, ph.p, range(1, ph.d + 1)
    out = zero(ph.basis)
    for i in r:
        c = zero(ph.basis)
        for j in r:
            if j != i:
                c = c + x(i, j) @ p(j)
        out = out + c @ c
    return out


def _vector_tensor_terms(ph: PhaseSpace, beta: float, equal_order: bool) -> Operator:
    """The beta**2, beta**-2 and mixed-ordering terms coupling x_i to p_ij."""
    x, p, r = ph.x, ph.p, range(1, ph.d + 1)
    out = zero(ph.basis)
    for i, j, k in itertools.product(r, r, r):
        if j == i or k == i:
            continue
        out = out + x(i, j) @ p(j) @ x(i, k) @ p(k) * beta**2
        out = out + x(j) @ p(i, j) @ x(k) @ p(i, k) * beta**-2
    for i, j, k in itertools.product(r, r, r):
        if equal_order:
            # - x_i p_j p_jk x_ik - p_j x_i x_ik p_jk
            if k in (i, j):
                continue
            out = out - x(i) @ p(j) @ p(j, k) @ x(i, k) - p(j) @ x(i) @ x(i, k) @ p(j, k)
        else:
            # - x_i p_j p_ik x_jk - p_i x_j x_ik p_jk
            if k in (i, j):
                continue
            out = out - x(i) @ p(j) @ p(i, k) @ x(j, k) - p(i) @ x(j) @ x(i, k) @ p(j, k)
    return out


def build_interaction(basis: FockBasis, params: ModelParams, model, realization=None,
                      phase: PhaseSpace | None = None) -> Operator:
    """The interaction V with H = H0 + lam**2 V, independent of lam."""
    model, realization = check_compatible(model, realization)
    ph = model_phase(basis, params, model) if phase is None else phase
    M, w, W, b = params.tensor_mass, params.omega, params.omega_tensor, params.beta
    m = params.vector_mass

    if model is ModelKind.COVARIANT_EXTENDED:
        v = _covariant_quartic(ph, b) * (M * w**2 / 8)
    elif model is ModelKind.SPLIT_EQUAL_FREQUENCY:
        v = (_vector_block(ph) + _tensor_block(ph) + _mixed_block(ph) * 2
             + _vector_tensor_terms(ph, b, equal_order=True)) * (M * w**2 / 8)
    elif model is ModelKind.SPLIT_TWO_FREQUENCY_WEYL:
        # tensor-potential prefactor M Omega^2 / 8, as the expansion of the
        # tensor potential gives and the equal-frequency limit requires
        v = (_vector_tensor_terms(ph, b, equal_order=False) * (M * w**2 / 8)
             + (_vector_block(ph) + _tensor_block(ph) + _mixed_block(ph) * 2) * (M * W**2 / 8))
    elif model is ModelKind.SPLIT_TWO_FREQUENCY_CLASSICAL:
        v = (_moyal_term(ph) * (M * w**2 * b**2 / 8)
             + (_vector_block(ph) * 4 + _tensor_block(ph) + _mixed_block(ph) * 4) * (M * W**2 / 8))
    else:
        v = _moyal_term(ph) * (m * w**2 / 8)
    return _hermitize(v, f"V[{model.value}]")


def build_parts(basis: FockBasis, params: ModelParams, model, realization=None) -> HamiltonianParts:
    model, realization = check_compatible(model, realization)
    return HamiltonianParts(build_free(basis, params, model),
                            build_interaction(basis, params, model, realization), model)


def covariant_number_form(basis: FockBasis, params: ModelParams) -> Operator:
    """Number-operator reduction of the covariant interaction.

    (M w^2 / 8) (sum_{mu!=nu} sum_rho N_mr N_nr + (D - 1) sum_{mu!=nu} N_mn)
    with unified symmetric occupations N_mn = N_nm, N_mm = 0.
    """
    n = unified_number_array(basis)
    top = params.d + 1
    quad = np.zeros(basis.dim)
    lin = np.zeros(basis.dim)
    for mu, nu in itertools.permutations(range(top), 2):
        lin += n[:, mu, nu]
        for rho in range(top):
            quad += n[:, mu, rho] * n[:, nu, rho]
    diag = params.tensor_mass * params.omega**2 / 8 * (quad + (params.d - 1) * lin)
    return Operator(basis, sp.diags(diag, format="csr"), True)


def unified_number_array(basis: FockBasis) -> np.ndarray:
    """Occupations as a (dim, D+1, D+1) symmetric array; vector i sits at (i, D+1)."""
    d = basis.d
    out = np.zeros((basis.dim, d + 1, d + 1))
    for k, mode in enumerate(basis.modes):
        a = mode.i - 1
        b = d if mode.is_vector else mode.j - 1
        out[:, a, b] = out[:, b, a] = basis.states[:, k]
    return out


def build_from_realization(basis: FockBasis, params: ModelParams, model, realization=None,
                           lam: float | None = None, flip_sign: bool = False) -> Operator:
    """Substitute realized operators directly into the model's quadratic form."""
    model, realization = check_compatible(model, realization)
    ph = model_phase(basis, params, model)
    r = realize(basis, params, realization, phase=ph, lam=lam, flip_sign=flip_sign)
    d = params.d
    M, w, m = params.tensor_mass, params.omega, params.vector_mass
    wt = tensor_frequency(params, model)
    h = zero(basis)
    if model is ModelKind.COVARIANT_EXTENDED:
        top = d + 1
        for mu, nu in itertools.permutations(range(1, top + 1), 2):
            xu, pu = r.xu(mu, nu), r.pu(mu, nu)
            h = h + (pu @ pu) * (1 / (4 * M)) + (xu @ xu) * (M * w**2 / 4)
    else:
        for i in range(1, d + 1):
            h = h + (r.p(i) @ r.p(i)) * (1 / (2 * m)) + (r.x(i) @ r.x(i)) * (m * w**2 / 2)
        for i, j in itertools.permutations(range(1, d + 1), 2):
            h = h + (r.p(i, j) @ r.p(i, j)) * (1 / (4 * M)) + (r.x(i, j) @ r.x(i, j)) * (M * wt**2 / 4)
    return _hermitize(h, f"H_realized[{model.value}]")


def order_lambda_part(basis: FockBasis, params: ModelParams, model, realization=None,
                      lam: float | None = None) -> Operator:
    """(H(lam) - H(-lam)) / (2 lam) of the direct-substitution Hamiltonian."""
    lam = params.lam if lam is None else lam
    if lam == 0:
        raise ValueError("order_lambda_part needs a nonzero lambda probe")
    hp = build_from_realization(basis, params, model, realization, lam=lam)
    hm = build_from_realization(basis, params, model, realization, lam=-lam)
    return (hp - hm) / (2 * lam)


__all__ = [
    "ModelKind", "HamiltonianParts", "build_free", "build_interaction", "build_parts",
    "build_from_realization", "order_lambda_part", "covariant_number_form",
    "free_energies", "model_phase", "tensor_frequency", "default_realization",
    "check_compatible", "unified_number_array",
]
