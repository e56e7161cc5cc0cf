"""JSON-configured experiment runner and command-line interface.

Exit codes: 0 success, 1 input or validation error, 2 a scientific
tolerance check failed.
"""
from __future__ import annotations

import argparse
import csv
import difflib
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fock_core import FockBasis, ModelParams
from .hamiltonians import build_parts, check_compatible
from .realizations import algebra_report, fit_order, realize, relation_residual, relations_for
from .spectra import (convergence_fit, degenerate_correction, exact_spectrum, resolved_levels,
                      spectrum_records)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_TOLERANCE = 0, 1, 2

SPECTRUM_HEADER = ["level", "occupations", "e0", "de_closed", "de_diagonal", "de_degenerate",
                   "e_exact", "abs_diag_vs_closed"]
SWEEP_HEADER = ["lambda", "level", "e_exact", "e_pt", "residual"]

REQUIRED = ("model", "d", "lambda", "beta", "tensor_mass", "omega", "n_max")
OPTIONAL = {
    "realization": None,  # the model's default realization
    "omega_tensor": None,  # falls back to omega
    "interior_margin": 4,
    "levels": 10,
    "lambda_sweep": None,
    "tolerances": {},
    "output_path": None,
    "sweep_quantity": "energy",
}
KNOWN_KEYS = REQUIRED + tuple(OPTIONAL)

# tolerance name -> default (None: chosen per command)
TOLERANCES = {
    "order_target": 2.0,
    "order_window": 0.2,
    "slope_target": None,
    "slope_window": None,
    "degeneracy": None,
    "closed_form": None,
}
ENERGY_SLOPE = (4.0, 0.3)
RELATION_SLOPE = (2.0, 0.2)


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 1."""


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


@dataclass
class RunConfig:
    model: str
    realization: str | None
    d: int
    lam: float
    beta: float
    tensor_mass: float
    omega: float
    omega_tensor: float
    n_max: int
    interior_margin: int = 4
    levels: int = 10
    lambda_sweep: list[float] | None = None
    tolerances: dict[str, float] = field(default_factory=dict)
    output_path: str | None = None
    sweep_quantity: str = "energy"

    def params(self, lam: float | None = None) -> ModelParams:
        return ModelParams(d=self.d, lam=self.lam if lam is None else lam, beta=self.beta,
                           tensor_mass=self.tensor_mass, omega=self.omega,
                           omega_tensor=self.omega_tensor, n_max=self.n_max,
                           interior_margin=self.interior_margin)

    def tolerance(self, name: str, default=None):
        value = self.tolerances.get(name)
        if value is None:
            value = TOLERANCES.get(name)
        return default if value is None else value


def _suggest(key: str, known) -> str:
    lowered = {k.lower(): k for k in known}
    if key.lower() in lowered:
        return f"; did you mean {lowered[key.lower()]!r}?"
    close = difflib.get_close_matches(key.lower(), list(known), n=1, cutoff=0.6)
    return f"; did you mean {close[0]!r}?" if close else ""


def _number(obj, name, *, integer=False, positive=False, minimum=None):
    value = obj[name]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{name}: must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{name}: must be positive, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}, got {value!r}")
    return int(value) if integer else float(value)


def config_from_dict(obj) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigError("configuration must be a JSON object")
    for key in obj:
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}{_suggest(key, KNOWN_KEYS)}")
    for key in REQUIRED:
        if key not in obj:
            raise ConfigError(f"{key}: missing required key")
    merged = {**OPTIONAL, **obj}

    try:
        model, realization = check_compatible(merged["model"], merged["realization"])
    except ValueError as exc:
        field_name = "realization" if "realization" in str(exc) and "unknown model" not in str(exc) else "model"
        raise ConfigError(f"{field_name}: {exc}") from None

    d = _number(merged, "d", integer=True)
    if d < 2:
        raise ConfigError("d: must be >= 2 (tensor modes need at least two dimensions)")
    omega = _number(merged, "omega", positive=True)
    if merged["omega_tensor"] is None:
        merged["omega_tensor"] = omega

    sweep = merged["lambda_sweep"]
    if sweep is not None:
        if not isinstance(sweep, list) or not sweep:
            raise ConfigError("lambda_sweep: expected a nonempty list of numbers")
        sweep = [_number({"lambda_sweep": v}, "lambda_sweep") for v in sweep]

    tolerances = merged["tolerances"]
    if not isinstance(tolerances, dict):
        raise ConfigError("tolerances: expected an object")
    for name in tolerances:
        if name not in TOLERANCES:
            raise ConfigError(f"tolerances: unknown tolerance {name!r}{_suggest(name, TOLERANCES)}")
    tolerances = {k: _number(tolerances, k, positive=k != "slope_target") for k in tolerances}

    out = merged["output_path"]
    if out is not None and not isinstance(out, str):
        raise ConfigError("output_path: expected a string")
    quantity = merged["sweep_quantity"]
    if not isinstance(quantity, str) or not (quantity == "energy" or quantity.startswith("relation:")):
        raise ConfigError("sweep_quantity: expected 'energy' or 'relation:<relation_id>'")

    cfg = RunConfig(
        model=model.value, realization=realization.value, d=d,
        lam=_number(merged, "lambda"), beta=_number(merged, "beta", positive=True),
        tensor_mass=_number(merged, "tensor_mass", positive=True), omega=omega,
        omega_tensor=_number(merged, "omega_tensor", positive=True),
        n_max=_number(merged, "n_max", integer=True, minimum=0),
        interior_margin=_number(merged, "interior_margin", integer=True, minimum=0),
        levels=_number(merged, "levels", integer=True, minimum=1),
        lambda_sweep=sweep, tolerances=tolerances, output_path=out, sweep_quantity=quantity,
    )
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"config {path} is not valid UTF-8") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(obj)


# ---------------------------------------------------------------------------
# commands; each returns (text, exit code)


def run_verify_algebra(cfg: RunConfig, flip_sign: bool = False) -> tuple[str, int]:
    params = cfg.params()
    basis = FockBasis(params)
    samples = cfg.lambda_sweep or [cfg.lam]
    report = algebra_report(basis, params, cfg.realization, samples, margin=cfg.interior_margin,
                            flip_sign=flip_sign, order_target=cfg.tolerance("order_target"),
                            order_window=cfg.tolerance("order_window"))
    payload = report.as_dict()
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    return text, EXIT_OK if report.passed else EXIT_TOLERANCE


def run_spectrum(cfg: RunConfig) -> tuple[str, int]:
    params = cfg.params()
    records = spectrum_records(params, cfg.model, cfg.levels, cfg.realization,
                               degeneracy_tol=cfg.tolerance("degeneracy"))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SPECTRUM_HEADER)
    worst = 0.0
    for rec in records:
        gap = abs(rec.de_diagonal - rec.de_closed)
        worst = max(worst, gap)
        occ = json.dumps(rec.labels(), separators=(",", ":"))
        writer.writerow([rec.level, occ, fmt(rec.e0), fmt(rec.de_closed), fmt(rec.de_diagonal),
                         fmt(rec.de_degenerate), fmt(rec.e_exact), fmt(gap)])
    limit = cfg.tolerance("closed_form")
    code = EXIT_TOLERANCE if limit is not None and worst > limit else EXIT_OK
    return buf.getvalue(), code


def _energy_point(parts, groups, lam: float):
    shifts = []
    for idx in groups:
        (block,) = degenerate_correction(parts.h0, parts.v, states=idx)
        e0 = block.level_energy
        shifts.append(e0 + lam**2 * np.sort(block.eigenvalues))
    pt = np.concatenate(shifts)
    order = np.argsort(pt, kind="stable")
    exact = np.empty_like(pt)
    exact[order] = exact_spectrum(parts.total(lam), len(pt))
    rows, start = [], 0
    for level, vals in enumerate(shifts):
        for k in range(len(vals)):
            rows.append((lam, level, exact[start + k], pt[start + k]))
        start += len(vals)
    return rows


def _relation_point(cfg: RunConfig, basis: FockBasis, relation_id: str, lam: float):
    params = cfg.params(lam)
    r = realize(basis, params, cfg.realization, lam=lam)
    rels = {rel.relation_id: rel for rel in relations_for(r, cfg.interior_margin)}
    if relation_id not in rels:
        raise ConfigError(f"sweep_quantity: unknown relation {relation_id!r}; "
                          f"available: {', '.join(sorted(rels))}")
    return relation_residual(rels[relation_id].defects, cfg.interior_margin)


def run_sweep(cfg: RunConfig, assert_slope: bool = False) -> tuple[str, int]:
    sweep = cfg.lambda_sweep
    if not sweep or len(sweep) < 3:
        raise ConfigError("lambda_sweep: a sweep needs at least 3 points")
    params = cfg.params()
    basis = FockBasis(params)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)

    if cfg.sweep_quantity == "energy":
        parts = build_parts(basis, params, cfg.model, cfg.realization)
        groups = resolved_levels(basis, params, cfg.model)[:cfg.levels]
        if not groups:
            raise ConfigError(f"n_max: {cfg.n_max} leaves no level free of truncation effects")
        with ThreadPoolExecutor() as pool:
            points = list(pool.map(lambda lam: _energy_point(parts, groups, lam), sweep))
        ground = []
        for rows in points:
            for lam, level, e_exact, e_pt in rows:
                residual = abs(e_exact - e_pt)
                writer.writerow([fmt(lam), level, fmt(e_exact), fmt(e_pt), fmt(residual)])
                if level == 0:
                    ground.append((lam, residual))
        slope = convergence_fit(ground)
        target, window = ENERGY_SLOPE
    else:
        relation_id = cfg.sweep_quantity.split(":", 1)[1]
        with ThreadPoolExecutor() as pool:
            residuals = list(pool.map(lambda lam: _relation_point(cfg, basis, relation_id, lam), sweep))
        for lam, res in zip(sweep, residuals):
            writer.writerow([fmt(lam), relation_id, "", "", fmt(res)])
        slope = fit_order(sweep, residuals)
        target, window = RELATION_SLOPE
    writer.writerow(["slope", fmt(slope)])

    target = cfg.tolerance("slope_target", target if assert_slope else None)
    window = cfg.tolerance("slope_window", window)
    code = EXIT_OK
    if target is not None and abs(slope - target) > window:
        log.error("fitted slope %.4f outside %.3g +- %.3g", slope, target, window)
        code = EXIT_TOLERANCE
    return buf.getvalue(), code


COMMANDS = {
    "verify-algebra": run_verify_algebra,
    "spectrum": run_spectrum,
    "sweep": run_sweep,
    "convergence": lambda cfg: run_sweep(cfg, assert_slope=True),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extsnyder", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "verify-algebra": "check the commutation relations of a realization (JSON report)",
        "spectrum": "closed-form, perturbative and exact energies per state (CSV)",
        "sweep": "exact vs first-order energies over lambda_sweep (CSV)",
        "convergence": "sweep plus an assertion on the fitted log-log slope",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output file (default: config output_path, else stdout)")
        if name == "verify-algebra":
            # negative control: corrupts one sign in the realization
            p.add_argument("--corrupt-realization", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "verify-algebra":
            text, code = run_verify_algebra(cfg, flip_sign=args.corrupt_realization)
        else:
            text, code = COMMANDS[args.command](cfg)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = args.out or cfg.output_path
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if code == EXIT_TOLERANCE:
        print("tolerance check failed", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
