"""Closed-form spectra, first-order corrections and exact diagonalization."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fock_core import FockBasis, ModeId, ModelParams, Operator
from .hamiltonians import ModelKind, free_energies, tensor_frequency

HERMITIAN_TOL = 1e-12
DENSE_LIMIT = 4096


class FormulaId(enum.Enum):
    """Closed-form levels and shifts, plus frequency-resolved shift variants."""

    COVARIANT_LEVEL = "covariant_level"
    COVARIANT_SHIFT = "covariant_shift"
    SPLIT_LEVEL = "split_level"
    SPLIT_SHIFT = "split_shift"
    TWO_FREQUENCY_LEVEL = "two_frequency_level"
    TWO_FREQUENCY_WEYL_SHIFT = "two_frequency_weyl_shift"
    TWO_FREQUENCY_APPROX = "two_frequency_approx"
    TWO_FREQUENCY_CLASSICAL_SHIFT = "two_frequency_classical_shift"
    MOYAL_LEVEL = "moyal_level"
    # exact diagonal expectations for arbitrary omega, omega_tensor, beta
    TWO_FREQUENCY_WEYL_SHIFT_RESOLVED = "two_frequency_weyl_shift_resolved"
    TWO_FREQUENCY_CLASSICAL_SHIFT_RESOLVED = "two_frequency_classical_shift_resolved"
    MOYAL_SHIFT_RESOLVED = "moyal_shift_resolved"


@dataclass(frozen=True)
class Occupations:
    """Vector occupations n_i and the symmetric tensor table n_ij (zero diagonal)."""

    vector: np.ndarray
    tensor: np.ndarray

    @property
    def d(self) -> int:
        return len(self.vector)

    def unified(self) -> np.ndarray:
        """(D+1) x (D+1) symmetric table with n_{i,D+1} = n_i."""
        d = self.d
        u = np.zeros((d + 1, d + 1))
        u[:d, :d] = self.tensor
        u[:d, d] = u[d, :d] = self.vector
        return u

    def as_labels(self) -> dict[str, int]:
        out = {f"v{i + 1}": int(n) for i, n in enumerate(self.vector)}
        for i, j in itertools.combinations(range(self.d), 2):
            out[f"t{i + 1}{j + 1}"] = int(self.tensor[i, j])
        return out


def occupations_from(occupations, d: int) -> Occupations:
    """Accepts a mapping {ModeId | label: n}, an Occupations, or a unified (D+1)^2 table."""
    if isinstance(occupations, Occupations):
        occ = occupations
    elif isinstance(occupations, dict):
        vec = np.zeros(d)
        ten = np.zeros((d, d))
        for key, n in occupations.items():
            mode = _mode_from_key(key)
            if mode.i > d or mode.j > d:
                raise ValueError(f"mode {key!r} outside D={d}")
            if mode.is_vector:
                vec[mode.i - 1] = n
            else:
                ten[mode.i - 1, mode.j - 1] = ten[mode.j - 1, mode.i - 1] = n
        occ = Occupations(vec, ten)
    else:
        u = np.asarray(occupations, dtype=float)
        if u.shape != (d + 1, d + 1):
            raise ValueError(f"unified occupation table must be {(d + 1, d + 1)}, got {u.shape}")
        if not np.allclose(u, u.T) or np.any(np.diag(u) != 0):
            raise ValueError("unified occupation table must be symmetric with zero diagonal")
        occ = Occupations(u[:d, d].copy(), u[:d, :d].copy())
    if np.any(occ.vector < 0) or np.any(occ.tensor < 0):
        raise ValueError("occupation numbers must be nonnegative")
    return occ


def _mode_from_key(key) -> ModeId:
    if isinstance(key, ModeId):
        return key
    if isinstance(key, str):
        s = key.strip().lower()
        if s.startswith("v") and s[1:].isdigit():
            return ModeId.vector(int(s[1:]))
        if s.startswith("t") and s[1:].isdigit() and len(s) == 3:
            return ModeId.tensor(int(s[1]), int(s[2]))
    raise ValueError(f"cannot interpret occupation key {key!r}")


def occupations_of_state(basis: FockBasis, index: int) -> Occupations:
    return occupations_from(basis.occupations(index), basis.d)


def _sums(occ: Occupations):
    nv, nt = occ.vector, occ.tensor
    d = occ.d
    s_tt = sum(nt[i, k] * nt[j, k] for i in range(d) for j in range(d) if i != j for k in range(d))
    s_vv = nv.sum() ** 2 - (nv**2).sum()
    s_vt = float(nv @ nt.sum(axis=0))
    t_ord = nt.sum()  # ordered pairs i != j
    return s_tt, s_vv, s_vt, t_ord, nv.sum()


def closed_form(formula, occupations, params: ModelParams) -> float:
    """Evaluate one closed-form level or shift.  Shifts include the lam**2 factor."""
    formula = FormulaId(formula) if not isinstance(formula, FormulaId) else formula
    d = params.d
    occ = occupations_from(occupations, d)
    lam2 = params.lam**2
    w, W, b = params.omega, params.omega_tensor, params.beta
    m, M = params.vector_mass, params.tensor_mass
    pre = lam2 * b**2 * m / 8
    s_tt, s_vv, s_vt, t_ord, nv = _sums(occ)

    if formula is FormulaId.COVARIANT_LEVEL:
        u = occ.unified()
        return w / 2 * (u.sum() + d * (d + 1) / 2)
    if formula is FormulaId.COVARIANT_SHIFT:
        u = occ.unified()
        col = u.sum(axis=0)
        # sum_{mu != nu} sum_rho n_mr n_nr = sum_rho [(sum_mu n_mr)^2 - sum_mu n_mr^2]
        quad = float((col**2).sum() - (u**2).sum())
        return pre * w**2 * (quad + (d - 1) * u.sum())
    if formula is FormulaId.SPLIT_LEVEL:
        return w * (nv + t_ord / 2 + d * (d + 1) / 4)
    if formula is FormulaId.SPLIT_SHIFT:
        return pre * w**2 * (s_tt + s_vv + 2 * s_vt + (d - 1) * (t_ord + 2 * nv))
    if formula is FormulaId.TWO_FREQUENCY_LEVEL:
        return w * (nv + d / 2) + W / 2 * (t_ord + d * (d - 1) / 2)
    if formula is FormulaId.TWO_FREQUENCY_WEYL_SHIFT:
        return pre * (W**2 * (s_tt + s_vv) + 2 * w**2 * s_vt + (d - 1) * (W**2 + w**2) * nv
                      + ((d - 2) * W**2 + w**2) * t_ord)
    if formula is FormulaId.TWO_FREQUENCY_APPROX:
        if t_ord:
            raise ValueError("the tensor-ground-state approximation needs all tensor occupations zero")
        return (w * nv + (d * w / 2 + d * (d - 1) * W / 4)
                + pre * (2 * (d - 1) * (w**2 + W**2) * nv + W**2 * s_vv))
    if formula is FormulaId.TWO_FREQUENCY_CLASSICAL_SHIFT:
        return pre * (W**2 * (s_tt + 4 * s_vv) + w**2 * (s_vt + d * (d - 1) / 4)
                      + (d - 1) * (4 * W**2 + w**2 / 2) * nv + ((d - 2) * W**2 + w**2 / 2) * t_ord)
    s_pair = s_vt + (d - 1) / 2 * nv + t_ord / 2 + d * (d - 1) / 4
    if formula is FormulaId.MOYAL_LEVEL:
        base = closed_form(FormulaId.TWO_FREQUENCY_LEVEL, occ, params)
        return base + _moyal_closed_shift(occ, params)
    ratio = w / W
    if formula is FormulaId.TWO_FREQUENCY_WEYL_SHIFT_RESOLVED:
        return pre * (W**2 * (s_tt + s_vv + (d - 1) * nv + (d - 2) * t_ord)
                      + w**2 * ((ratio + 1 / ratio) * s_pair - d * (d - 1) / 2))
    if formula is FormulaId.TWO_FREQUENCY_CLASSICAL_SHIFT_RESOLVED:
        return pre * (W**2 * (s_tt + 4 * s_vv + 4 * (d - 1) * nv + (d - 2) * t_ord)
                      + w**2 * ratio * s_pair)
    if formula is FormulaId.MOYAL_SHIFT_RESOLVED:
        return lam2 * m * w**2 / 8 * (m * w / (M * W)) * s_pair
    raise ValueError(formula)  # pragma: no cover


def _moyal_closed_shift(occ: Occupations, params: ModelParams) -> float:
    d = params.d
    _, _, s_vt, t_ord, nv = _sums(occ)
    s_pair = s_vt + (d - 1) / 2 * nv + t_ord / 2 + d * (d - 1) / 4
    return params.lam**2 * params.vector_mass * params.omega**2 / 8 * s_pair


LEVEL_FORMULA = {
    ModelKind.COVARIANT_EXTENDED: FormulaId.COVARIANT_LEVEL,
    ModelKind.SPLIT_EQUAL_FREQUENCY: FormulaId.SPLIT_LEVEL,
    ModelKind.SPLIT_TWO_FREQUENCY_WEYL: FormulaId.TWO_FREQUENCY_LEVEL,
    ModelKind.SPLIT_TWO_FREQUENCY_CLASSICAL: FormulaId.TWO_FREQUENCY_LEVEL,
    ModelKind.MOYAL_DYNAMIC: FormulaId.TWO_FREQUENCY_LEVEL,
}

SHIFT_FORMULA = {
    ModelKind.COVARIANT_EXTENDED: FormulaId.COVARIANT_SHIFT,
    ModelKind.SPLIT_EQUAL_FREQUENCY: FormulaId.SPLIT_SHIFT,
    ModelKind.SPLIT_TWO_FREQUENCY_WEYL: FormulaId.TWO_FREQUENCY_WEYL_SHIFT,
    ModelKind.SPLIT_TWO_FREQUENCY_CLASSICAL: FormulaId.TWO_FREQUENCY_CLASSICAL_SHIFT,
    ModelKind.MOYAL_DYNAMIC: FormulaId.MOYAL_LEVEL,
}


def closed_free(model, occupations, params: ModelParams) -> float:
    return closed_form(LEVEL_FORMULA[ModelKind.parse(model)], occupations, params)


def closed_shift(model, occupations, params: ModelParams) -> float:
    """Closed-form first-order shift for ``model``, lam**2 included."""
    model = ModelKind.parse(model)
    if model is ModelKind.MOYAL_DYNAMIC:
        return _moyal_closed_shift(occupations_from(occupations, params.d), params)
    return closed_form(SHIFT_FORMULA[model], occupations, params)


def diagonal_correction(basis_state, v: Operator) -> float:
    """<n|V|n> for a basis index or occupation mapping."""
    if v.hermiticity_defect() > HERMITIAN_TOL * max(1.0, v.max_abs()):
        raise ValueError("interaction operator is not Hermitian within tolerance")
    idx = basis_state if isinstance(basis_state, (int, np.integer)) else v.basis.index(basis_state)
    return float(v.matrix[idx, idx].real)


@dataclass
class DegenerateBlock:
    level_energy: float
    indices: np.ndarray
    eigenvalues: np.ndarray
    diagonal: np.ndarray = field(repr=False)
    off_diagonal: float = 0.0

    def matched_shifts(self) -> np.ndarray:
        """Block eigenvalues paired with block states by sorted diagonal position."""
        order = np.argsort(self.diagonal, kind="stable")
        out = np.empty_like(self.eigenvalues)
        out[order] = self.eigenvalues
        return out


def degeneracy_groups(energies: np.ndarray, tol: float) -> list[np.ndarray]:
    order = np.argsort(energies, kind="stable")
    groups, current = [], [order[0]]
    for a, b in zip(order[:-1], order[1:]):
        if energies[b] - energies[a] > tol:
            groups.append(np.array(current))
            current = []
        current.append(b)
    groups.append(np.array(current))
    return groups


def degenerate_correction(h0: Operator, v: Operator, degeneracy_tol: float | None = None,
                          states=None) -> list[DegenerateBlock]:
    """Diagonalize V inside every degenerate eigenspace of the diagonal H0.

    ``states`` optionally restricts the search to a subset of basis indices
    (e.g. levels unaffected by the truncation).
    """
    if h0.basis.dim == 0:
        raise ValueError("empty basis")
    if v.hermiticity_defect() > HERMITIAN_TOL * max(1.0, v.max_abs()):
        raise ValueError("interaction operator is not Hermitian within tolerance")
    e0 = h0.diagonal().real
    off = h0.matrix - sp.diags(h0.diagonal())
    if off.count_nonzero():
        raise ValueError("h0 must be diagonal in the occupation basis")
    if degeneracy_tol is None:
        degeneracy_tol = 1e-9 * max(1.0, float(np.abs(e0).max()))
    idx_all = np.arange(h0.basis.dim) if states is None else np.asarray(states)
    blocks = []
    for group in degeneracy_groups(e0[idx_all], degeneracy_tol):
        idx = np.sort(idx_all[group])
        blk = v.matrix[idx][:, idx].toarray()
        blk = (blk + blk.conj().T) / 2
        diag = np.diag(blk).real.copy()
        offd = float(np.abs(blk - np.diag(np.diag(blk))).max()) if len(idx) > 1 else 0.0
        ev = np.linalg.eigvalsh(blk)
        blocks.append(DegenerateBlock(float(e0[idx].mean()), idx, ev, diag, offd))
    return blocks


def exact_spectrum(h: Operator, k: int, method: str = "auto") -> np.ndarray:
    """The k lowest eigenvalues of Hermitian h, ascending.

    Dense ``eigvalsh`` below DENSE_LIMIT states, Lanczos (``eigsh``) above;
    ``method`` forces either path.
    """
    dim = h.basis.dim
    if not 1 <= k <= dim:
        raise ValueError(f"k={k} must be in 1..{dim}")
    if h.hermiticity_defect() > HERMITIAN_TOL * max(1.0, h.max_abs()):
        raise ValueError("operator is not Hermitian within tolerance")
    if method == "auto":
        method = "dense" if dim < DENSE_LIMIT else "sparse"
    if method == "dense" or k >= dim - 1:
        ev = np.linalg.eigvalsh(h.toarray())
        return ev[:k]
    if method != "sparse":
        raise ValueError(f"unknown method {method!r}")
    mat = h.hermitian_part().matrix
    if np.abs(mat.data.imag).max(initial=0) == 0:
        mat = mat.real
    v0 = np.ones(dim) / np.sqrt(dim)
    ev = spla.eigsh(mat, k=k, which="SA", v0=v0, tol=1e-13, maxiter=50 * dim,
                    return_eigenvectors=False)
    return np.sort(ev.real)


def convergence_fit(samples) -> float:
    """Least-squares slope of log(residual) against log(lambda)."""
    samples = list(samples)
    if len(samples) < 3:
        raise ValueError("a convergence fit needs at least 3 samples")
    lam = np.array([s[0] for s in samples], dtype=float)
    res = np.array([s[1] for s in samples], dtype=float)
    if np.any(res <= 0):
        raise ValueError("nonpositive residual: sample at the numerical floor; enlarge lambda")
    if np.any(lam <= 0):
        raise ValueError("lambda samples must be positive")
    slope, _ = np.polyfit(np.log(lam), np.log(res), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# level bookkeeping


QUARTIC_ELEMENT_MARGIN = 2


def resolved_levels(basis: FockBasis, params: ModelParams, model, margin: int = QUARTIC_ELEMENT_MARGIN,
                    tol: float | None = None) -> list[np.ndarray]:
    """Lowest free levels that are complete in the truncated space.

    A level qualifies when every infinite-space state of that free energy
    keeps all occupations <= n_max - margin, so quartic matrix elements
    inside it are free of truncation error.  Stops at the first level
    that does not qualify.
    """
    model = ModelKind.parse(model)
    e0 = free_energies(basis, params, model)
    if tol is None:
        tol = 1e-9 * max(1.0, float(np.abs(e0).max()))
    w, wt = params.omega, tensor_frequency(params, model)
    cap = basis.n_max - margin
    base = params.omega * params.d / 2 + wt * params.d * (params.d - 1) / 4
    levels = []
    for group in degeneracy_groups(e0, tol):
        excitation = e0[group[0]] - base
        nv_max = int(np.floor(excitation / w + 1e-9))
        ok = True
        for nv in range(nv_max + 1):
            rest = excitation - nv * w
            nt = rest / wt
            if abs(nt - round(nt)) * wt <= tol and round(nt) >= 0:
                if nv > cap or round(nt) > cap:
                    ok = False
                    break
        if not ok:
            break
        levels.append(np.sort(group))
    return levels


@dataclass
class SpectrumRecord:
    occupations: dict[ModeId, int]
    e0: float
    de_closed: float
    de_diagonal: float
    de_degenerate: float
    e_exact: float | None = None
    level: int = 0

    def labels(self) -> dict[str, int]:
        return {m.label: n for m, n in self.occupations.items()}


def spectrum_records(params: ModelParams, model, levels: int = 10, realization=None,
                     degeneracy_tol: float | None = None, with_exact: bool = True,
                     basis: FockBasis | None = None) -> list[SpectrumRecord]:
    """Per-state free energies, first-order shifts and exact energies.

    All ``de_*`` fields carry the lam**2 factor, so ``e0 + de_*`` is the
    first-order energy.  Only the lowest ``levels`` free levels that are
    complete in the truncated space are reported.  Exact eigenvalues are
    matched to states by global sorted order of ``e0 + de_degenerate``.
    """
    from .hamiltonians import build_parts

    if levels < 1:
        raise ValueError("levels must be >= 1")
    basis = FockBasis(params) if basis is None else basis
    parts = build_parts(basis, params, model, realization)
    groups = resolved_levels(basis, params, model)[:levels]
    if not groups:
        raise ValueError(f"n_max={params.n_max} leaves no level free of truncation effects")
    lam2 = params.lam**2
    records = []
    for level, idx in enumerate(groups):
        (block,) = degenerate_correction(parts.h0, parts.v, degeneracy_tol, states=idx)
        shifts = block.matched_shifts()
        for k, de_deg in zip(block.indices, shifts):
            occ = basis.occupations(int(k))
            records.append(SpectrumRecord(
                occupations=occ,
                e0=closed_free(model, occ, params),
                de_closed=closed_shift(model, occ, params),
                de_diagonal=lam2 * diagonal_correction(int(k), parts.v),
                de_degenerate=lam2 * float(de_deg),
                level=level,
            ))
    if with_exact:
        exact = exact_spectrum(parts.total(params.lam), len(records))
        order = sorted(range(len(records)),
                       key=lambda r: (records[r].e0 + records[r].de_degenerate, r))
        for rank, r in enumerate(order):
            records[r].e_exact = float(exact[rank])
    records.sort(key=lambda rec: (rec.e0, tuple(rec.occupations[m] for m in basis.modes)))
    return records
