"""Realizations of the extended Snyder phase space on the canonical Fock operators.

Each realization expresses the deformed coordinates x̂_i, x̂_ij as
polynomials in the canonical x, p of the extended Heisenberg algebra;
momenta stay canonical.  ``algebra_report`` measures how well every
target commutation relation holds on the truncation interior.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .fock_core import (
    FockBasis,
    ModelParams,
    Operator,
    PhaseSpace,
    commutator,
    identity,
    interior_residual_norm,
    sym,
    zero,
)


class RealizationKind(enum.Enum):
    WEYL = "weyl"
    CLASSICAL = "classical"
    MOYAL_DYNAMICAL = "moyal_dynamical"
    WEYL_UNIFIED = "weyl_unified"

    @classmethod
    def parse(cls, name: "str | RealizationKind") -> "RealizationKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"moyal": cls.MOYAL_DYNAMICAL, "unified": cls.WEYL_UNIFIED}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown realization {name!r}; expected one of {valid}") from None


def _pairs(d):
    return list(itertools.combinations(range(1, d + 1), 2))


@dataclass
class RealizedOps:
    """Realized x̂_i, p̂_i, x̂_ij, p̂_ij and rotation generators M_ij."""

    kind: RealizationKind
    lam: float
    beta: float
    phase: PhaseSpace
    xhat_i: dict[int, Operator]
    xhat_ij: dict[tuple[int, int], Operator]
    m_ij: dict[tuple[int, int], Operator] = field(default_factory=dict)

    @property
    def basis(self) -> FockBasis:
        return self.phase.basis

    @property
    def d(self) -> int:
        return self.phase.d

    def x(self, i: int, j: int | None = None) -> Operator:
        if j is None:
            return self.xhat_i[i]
        if i == j:
            return zero(self.basis)
        return self.xhat_ij[(i, j)] if i < j else -self.xhat_ij[(j, i)]

    def p(self, i: int, j: int | None = None) -> Operator:
        return self.phase.p(i, j)

    def m(self, i: int, j: int) -> Operator:
        if i == j:
            return zero(self.basis)
        return self.m_ij[(i, j)] if i < j else -self.m_ij[(j, i)]

    def xu(self, mu: int, nu: int) -> Operator:
        """Unified antisymmetric coordinate with x̂_i = beta x̂_{i,D+1}."""
        top = self.d + 1
        if mu == nu:
            return zero(self.basis)
        if nu == top:
            return self.x(mu) / self.beta
        if mu == top:
            return self.x(nu) * (-1.0 / self.beta)
        return self.x(mu, nu)

    def pu(self, mu: int, nu: int) -> Operator:
        return self.phase.pu(mu, nu, self.beta)

    def phat_i(self) -> dict[int, Operator]:
        return {i: self.phase.p(i) for i in range(1, self.d + 1)}

    def phat_ij(self) -> dict[tuple[int, int], Operator]:
        return {(i, j): self.phase.p(i, j) for i, j in _pairs(self.d)}


def rotation_generators(phase: PhaseSpace) -> dict[tuple[int, int], Operator]:
    """M_ij = x_i p_j - x_j p_i + sum_k (x_ik p_jk - x_jk p_ik), keyed by i < j."""
    x, p, d = phase.x, phase.p, phase.d
    gens = {}
    for i, j in _pairs(d):
        m = x(i) @ p(j) - x(j) @ p(i)
        for k in range(1, d + 1):
            if k not in (i, j):
                m = m + x(i, k) @ p(j, k) - x(j, k) @ p(i, k)
        gens[(i, j)] = Operator(phase.basis, m.matrix, True)
    return gens


def _bilinear(a: Operator, b: Operator) -> Operator:
    # every product appearing in the realizations has commuting factors;
    # symmetrizing keeps the result Hermitian regardless
    return sym(a, b)


def realize(basis: FockBasis, params: ModelParams, kind, phase: PhaseSpace | None = None,
            lam: float | None = None, flip_sign: bool = False) -> RealizedOps:
    """Build the realized coordinates for ``kind`` at deformation ``lam``.

    ``phase`` fixes the canonical operators (mass and frequency per sector);
    by default both sectors oscillate at ``params.omega``.  ``flip_sign``
    negates the first order correction of x̂_i and exists only as a negative
    control for the verification tooling.
    """
    kind = RealizationKind.parse(kind)
    if phase is None:
        phase = PhaseSpace.for_params(basis, params)
    elif not phase.basis.same_as(basis):
        raise ValueError("phase space built on a different basis")
    lam = params.lam if lam is None else lam
    beta = params.beta
    d = params.d
    x, p = phase.x, phase.p
    rng = range(1, d + 1)
    sgn = -1.0 if flip_sign else 1.0

    xi: dict[int, Operator] = {}
    xij: dict[tuple[int, int], Operator] = {}
    if kind is RealizationKind.WEYL:
        for i in rng:
            corr = zero(basis)
            for k in rng:
                if k != i:
                    corr = corr + _bilinear(x(k), p(i, k)) - _bilinear(x(i, k), p(k)) * beta**2
            xi[i] = x(i) + corr * (sgn * lam / 2)
        for i, j in _pairs(d):
            corr = _bilinear(x(i), p(j)) - _bilinear(x(j), p(i))
            for k in rng:
                if k not in (i, j):
                    corr = corr + _bilinear(x(i, k), p(j, k)) - _bilinear(x(j, k), p(i, k))
            xij[(i, j)] = x(i, j) + corr * (lam / 2)
    elif kind is RealizationKind.CLASSICAL:
        for i in rng:
            corr = zero(basis)
            for k in rng:
                if k != i:
                    corr = corr + _bilinear(x(i, k), p(k))
            xi[i] = x(i) - corr * (sgn * lam * beta**2 / 2)
        for i, j in _pairs(d):
            corr = (_bilinear(x(i), p(j)) - _bilinear(x(j), p(i))) * 2
            for k in rng:
                if k not in (i, j):
                    corr = corr + _bilinear(x(i, k), p(j, k)) - _bilinear(x(j, k), p(i, k))
            xij[(i, j)] = x(i, j) + corr * (lam / 2)
    elif kind is RealizationKind.MOYAL_DYNAMICAL:
        for i in rng:
            corr = zero(basis)
            for j in rng:
                if j != i:
                    corr = corr + _bilinear(x(i, j), p(j))
            xi[i] = x(i) - corr * (sgn * lam / 2)
        for i, j in _pairs(d):
            xij[(i, j)] = x(i, j)
    elif kind is RealizationKind.WEYL_UNIFIED:
        top = d + 1
        greek = range(1, top + 1)
        xu = lambda a, b: phase.xu(a, b, beta)  # noqa: E731
        pu = lambda a, b: phase.pu(a, b, beta)  # noqa: E731

        def unified(mu, nu):
            corr = zero(basis)
            for a in greek:
                if a not in (mu, nu):
                    corr = corr + _bilinear(xu(mu, a), pu(nu, a)) - _bilinear(xu(nu, a), pu(mu, a))
            return xu(mu, nu), corr

        for i in rng:
            base, corr = unified(i, top)
            xi[i] = (base + corr * (sgn * lam / 2)) * beta
        for i, j in _pairs(d):
            base, corr = unified(i, j)
            xij[(i, j)] = base + corr * (lam / 2)
    else:  # pragma: no cover
        raise ValueError(kind)

    xi = {k: Operator(basis, v.matrix, True) for k, v in xi.items()}
    xij = {k: Operator(basis, v.matrix, True) for k, v in xij.items()}
    return RealizedOps(kind, lam, beta, phase, xi, xij, rotation_generators(phase))


# ---------------------------------------------------------------------------
# algebra verification


def _delta(a, b):
    return 1.0 if a == b else 0.0


@dataclass(frozen=True)
class Relation:
    """One family of commutation relations; ``defects`` yields LHS - RHS operators."""

    relation_id: str
    expected: str  # "exact" or "order2"
    tol: float
    margin: int
    defects: object = field(repr=False, compare=False)


def _rel_coordinates(r: RealizedOps, moyal: bool):
    d, lam, b = r.d, r.lam, r.beta
    rng = range(1, d + 1)
    j_ = 1j
    out = {}

    def xi_xj():
        scale = lam if moyal else lam * b**2
        for i, j in _pairs(d):
            yield commutator(r.x(i), r.x(j)) - r.x(i, j) * (j_ * scale)

    out["x_i,x_j"] = xi_xj

    if moyal:
        def xij_xk():
            for (i, j), k in itertools.product(_pairs(d), rng):
                yield commutator(r.x(i, j), r.x(k))

        def xij_xkl():
            for (i, j), (k, l) in itertools.product(_pairs(d), _pairs(d)):
                yield commutator(r.x(i, j), r.x(k, l))
    else:
        def xij_xk():
            for (i, j), k in itertools.product(_pairs(d), rng):
                rhs = r.x(j) * _delta(i, k) - r.x(i) * _delta(j, k)
                yield commutator(r.x(i, j), r.x(k)) - rhs * (j_ * lam)

        def xij_xkl():
            for (i, j), (k, l) in itertools.product(_pairs(d), _pairs(d)):
                rhs = (r.x(j, l) * _delta(i, k) - r.x(j, k) * _delta(i, l)
                       - r.x(i, l) * _delta(j, k) + r.x(i, k) * _delta(j, l))
                yield commutator(r.x(i, j), r.x(k, l)) - rhs * (j_ * lam)

    out["x_ij,x_k"] = xij_xk
    out["x_ij,x_kl"] = xij_xkl
    return out


def _rel_momenta(r: RealizedOps):

    def pp():
        ops = list(r.phat_i().values()) + list(r.phat_ij().values())
        for a, b in itertools.combinations(ops, 2):
            yield commutator(a, b)

    return {"p,p": pp}


def _rel_mixed(r: RealizedOps):
    d, lam, b = r.d, r.lam, r.beta
    rng = range(1, d + 1)
    one = identity(r.basis)
    kind = r.kind
    j_ = 1j
    out = {}

    def xi_pj():
        for i, j in itertools.product(rng, rng):
            rhs = one * _delta(i, j)
            if kind in (RealizationKind.WEYL, RealizationKind.WEYL_UNIFIED) and i != j:
                rhs = rhs + r.p(i, j) * (lam / 2)
            yield commutator(r.x(i), r.p(j)) - rhs * j_

    out["x_i,p_j"] = xi_pj

    if kind is RealizationKind.MOYAL_DYNAMICAL:
        def xi_pkl():
            for i, (k, l) in itertools.product(rng, _pairs(d)):
                rhs = r.p(l) * _delta(i, k) - r.p(k) * _delta(i, l)
                yield commutator(r.x(i), r.p(k, l)) + rhs * (j_ * lam / 2)

        def xij_pk():
            for (i, j), k in itertools.product(_pairs(d), rng):
                yield commutator(r.x(i, j), r.p(k))

        def pi_xjk():
            for i, (j, k) in itertools.product(rng, _pairs(d)):
                yield commutator(r.p(i), r.x(j, k))
                yield commutator(r.x(i), r.x(j, k))

        out["x_i,p_kl"] = xi_pkl
        out["x_ij,p_k"] = xij_pk
        out["x_i,x_jk"] = pi_xjk
    else:
        # antisymmetric in (j, k) as the left-hand side requires
        def xi_pjk():
            for i, (j, k) in itertools.product(rng, _pairs(d)):
                rhs = r.p(j) * _delta(i, k) - r.p(k) * _delta(i, j)
                yield commutator(r.x(i), r.p(j, k)) - rhs * (j_ * lam * b**2 / 2)

        coef = lam if kind is RealizationKind.CLASSICAL else lam / 2

        def xij_pk():
            for (i, j), k in itertools.product(_pairs(d), rng):
                rhs = r.p(j) * _delta(i, k) - r.p(i) * _delta(j, k)
                yield commutator(r.x(i, j), r.p(k)) - rhs * (j_ * coef)

        out["x_i,p_jk"] = xi_pjk
        out["x_ij,p_k"] = xij_pk

    def xij_pkl():
        moyal = kind is RealizationKind.MOYAL_DYNAMICAL
        for (i, j), (k, l) in itertools.product(_pairs(d), _pairs(d)):
            rhs = one * (_delta(i, k) * _delta(j, l) - _delta(i, l) * _delta(j, k))
            if not moyal:
                # antisymmetric in both index pairs
                deform = (r.p(j, l) * _delta(i, k) - r.p(j, k) * _delta(i, l)
                          - r.p(i, l) * _delta(j, k) + r.p(i, k) * _delta(j, l))
                rhs = rhs + deform * (lam / 2)
            yield commutator(r.x(i, j), r.p(k, l)) - rhs * j_

    out["x_ij,p_kl"] = xij_pkl
    return out


def _rel_unified(r: RealizedOps):
    top = r.d + 1
    lam = r.lam
    pairs = list(itertools.combinations(range(1, top + 1), 2))

    def xu_xu():
        for (m, n), (a, s) in itertools.product(pairs, pairs):
            rhs = (r.xu(n, s) * _delta(m, a) - r.xu(n, a) * _delta(m, s)
                   - r.xu(m, s) * _delta(n, a) + r.xu(m, a) * _delta(n, s))
            yield commutator(r.xu(m, n), r.xu(a, s)) - rhs * (1j * lam)

    return {"x_mn,x_rs": xu_xu}


def _rel_covariance(r: RealizedOps):
    d = r.d
    rng = range(1, d + 1)
    out = {}

    def m_x():
        for (i, j), k in itertools.product(_pairs(d), rng):
            rhs = r.x(j) * _delta(i, k) - r.x(i) * _delta(j, k)
            yield commutator(r.m(i, j), r.x(k)) - rhs * 1j
            rhs = r.p(j) * _delta(i, k) - r.p(i) * _delta(j, k)
            yield commutator(r.m(i, j), r.p(k)) - rhs * 1j

    def m_xkl():
        for (i, j), (k, l) in itertools.product(_pairs(d), _pairs(d)):
            for get in (r.x, r.p):
                rhs = (get(j, l) * _delta(i, k) - get(j, k) * _delta(i, l)
                       - get(i, l) * _delta(j, k) + get(i, k) * _delta(j, l))
                yield commutator(r.m(i, j), get(k, l)) - rhs * 1j

    def m_m():
        for (i, j), (k, l) in itertools.product(_pairs(d), _pairs(d)):
            rhs = (r.m(j, l) * _delta(i, k) - r.m(j, k) * _delta(i, l)
                   - r.m(i, l) * _delta(j, k) + r.m(i, k) * _delta(j, l))
            yield commutator(r.m(i, j), r.m(k, l)) - rhs * 1j

    out["M_ij,x_k"] = m_x
    out["M_ij,x_kl"] = m_xkl
    out["M_ij,M_kl"] = m_m
    return out


EXACT_TOL = 1e-12
COVARIANCE_TOL = 1e-10


def relations_for(r: RealizedOps, margin: int) -> list[Relation]:
    """Relation families checked for the realization kind of ``r``."""
    moyal = r.kind is RealizationKind.MOYAL_DYNAMICAL
    rels = []
    for rid, fn in _rel_coordinates(r, moyal).items():
        rels.append(Relation(f"coord:{rid}", "exact" if moyal else "order2", EXACT_TOL, margin, fn))
    for rid, fn in _rel_momenta(r).items():
        rels.append(Relation(f"mom:{rid}", "exact", EXACT_TOL, margin, fn))
    for rid, fn in _rel_mixed(r).items():
        rels.append(Relation(f"mixed:{rid}", "exact", EXACT_TOL, margin, fn))
    if not moyal:
        for rid, fn in _rel_unified(r).items():
            rels.append(Relation(f"unified:{rid}", "order2", EXACT_TOL, margin, fn))
    for rid, fn in _rel_covariance(r).items():
        rels.append(Relation(f"cov:{rid}", "exact", COVARIANCE_TOL, margin, fn))
    return rels


def relation_residual(defects, margin: int) -> float:
    return max((interior_residual_norm(op, margin) for op in defects()), default=0.0)


def fit_order(lams, residuals) -> float:
    """Least-squares slope of log(residual) against log(lambda)."""
    lams = np.asarray(lams, dtype=float)
    res = np.asarray(residuals, dtype=float)
    if lams.size < 2:
        raise ValueError("need at least 2 samples for an order fit")
    if np.any(res <= 0) or np.any(lams <= 0):
        raise ValueError("order fit needs strictly positive lambda and residual samples")
    slope, _ = np.polyfit(np.log(lams), np.log(res), 1)
    return float(slope)


@dataclass
class RelationResult:
    relation_id: str
    expected: str
    margin: int
    tol: float
    lambdas: list[float]
    residuals: list[float]
    order: float | None
    passed: bool

    def as_dict(self) -> dict:
        return {
            "relation_id": self.relation_id,
            "expected": self.expected,
            "interior_margin": self.margin,
            "tolerance": self.tol,
            "lambda": self.lambdas,
            "residual": self.residuals,
            "fitted_order": self.order,
            "pass": self.passed,
        }


@dataclass
class AlgebraReport:
    kind: RealizationKind
    d: int
    n_max: int
    results: list[RelationResult]
    order_target: float = 2.0
    order_window: float = 0.2

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def result(self, relation_id: str) -> RelationResult:
        for r in self.results:
            if r.relation_id == relation_id:
                return r
        raise KeyError(relation_id)

    def as_dict(self) -> dict:
        return {
            "realization": self.kind.value,
            "d": self.d,
            "n_max": self.n_max,
            "order_target": self.order_target,
            "order_window": self.order_window,
            "pass": self.passed,
            "relations": [r.as_dict() for r in self.results],
        }


def algebra_report(basis: FockBasis, params: ModelParams, kind, lambda_samples,
                   margin: int | None = None, flip_sign: bool = False,
                   order_target: float = 2.0, order_window: float = 0.2) -> AlgebraReport:
    """Residual of every target relation at each lambda, plus the fitted defect order.

    Relations expected to hold identically pass when every residual is below
    their tolerance.  Relations holding only to first order pass when either
    all residuals are already below tolerance or the log-log slope lies
    within ``order_target +- order_window``.
    """
    kind = RealizationKind.parse(kind)
    lambda_samples = [float(v) for v in lambda_samples]
    if not lambda_samples:
        raise ValueError("at least one lambda sample is required")
    margin = params.interior_margin if margin is None else margin
    phase = PhaseSpace.for_params(basis, params)
    per_lambda = []
    meta = None
    for lam in lambda_samples:
        r = realize(basis, params, kind, phase=phase, lam=lam, flip_sign=flip_sign)
        rels = relations_for(r, margin)
        meta = rels
        per_lambda.append([relation_residual(rel.defects, margin) for rel in rels])
    table = np.array(per_lambda)
    results = []
    for col, rel in enumerate(meta):
        res = table[:, col].tolist()
        order = None
        if max(res) <= rel.tol:
            passed = True
        elif rel.expected == "exact":
            passed = False
        else:
            nonzero = [lam for lam in lambda_samples if lam != 0]
            if len(nonzero) < 2:
                raise ValueError("fewer than 2 nonzero lambda samples; cannot fit a defect order")
            pairs = [(lam, v) for lam, v in zip(lambda_samples, res) if lam != 0]
            try:
                order = fit_order([a for a, _ in pairs], [v for _, v in pairs])
                passed = abs(order - order_target) <= order_window
            except ValueError:
                passed = False
        results.append(RelationResult(rel.relation_id, rel.expected, margin, rel.tol,
                                      lambda_samples, res, order, passed))
    return AlgebraReport(kind, params.d, params.n_max, results, order_target, order_window)


def unified_component_mismatch(basis: FockBasis, params: ModelParams, lam: float | None = None) -> float:
    """Largest entrywise difference between the unified and component Weyl forms."""
    phase = PhaseSpace.for_params(basis, params)
    a = realize(basis, params, RealizationKind.WEYL, phase=phase, lam=lam)
    b = realize(basis, params, RealizationKind.WEYL_UNIFIED, phase=phase, lam=lam)
    diffs = [(a.x(i) - b.x(i)).max_abs() for i in range(1, params.d + 1)]
    diffs += [(a.x(i, j) - b.x(i, j)).max_abs() for i, j in _pairs(params.d)]
    return max(diffs)

