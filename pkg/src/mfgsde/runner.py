"""Config-driven experiment execution.

Every experiment draws its random inputs from the stream ``inputs.<name>``
under the top-level seed, so adding, removing or reordering experiments never
changes another experiment's numbers. The ensemble and the initial condition
come from their own streams and are shared by all experiments that use the
same ensemble block.
"""

from __future__ import annotations

import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .coefficients import (
    CoefficientBundle,
    ProbeSpec,
    builtin,
    interchange_check,
    probe_assumptions,
)
from .config import FD_TYPES, config_hash
from .distribution import (
    MinAffine,
    PiecewiseLinear,
    SublinearDistribution,
    check_axioms,
    metric_d,
    representative_independence,
)
from .ensemble import (
    RandomVariable,
    ScenarioEnsemble,
    hp_norm,
    lp_norm,
    sublinear_expectation,
)
from .errors import ConfigurationError, DifferentiabilityError, DivergenceError
from .gbrownian import GBrownianPaths
from .rng import seed_sequence, stream
from .solver import concatenate, node_summary, solve_frozen, solve_mean_field
from .tangent import (
    dx_concatenated,
    frechet_xi,
    solve_A,
    solve_C,
    solve_D,
    solve_Y_x,
    solve_Y_xi,
)
from .tensorio import write_csv, write_tensor
from .verify import fd as fdm
from .verify.appendix import appendix_check
from .verify.bounds import AuditProbes, audit_all, ratio_audit

__all__ = ["EXIT_PASS", "EXIT_FAIL", "EXIT_CONFIG", "EXIT_DIVERGENCE", "CSV_COLUMNS",
           "Outcome", "RunResult", "prepare", "run_config", "jsonable"]

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGENCE = 0, 1, 2, 3

CSV_COLUMNS = {
    "summary.csv": ("node", "upper_mean", "lower_mean", "l2_norm"),
    "remainders.csv": ("epsilon", "remainder"),
    "ratios.csv": ("lemma", "p", "probe", "numerator", "denominator", "ratio", "constant",
                   "excluded", "passed"),
    "inequalities.csv": ("p", "inequality", "lhs", "rhs", "holds"),
    "identity.csv": ("quantity", "value"),
    "linearity.csv": ("argument", "residual", "scale"),
    "metric.csv": ("check", "value", "reference", "passed"),
    "certificate.csv": ("left_knot", "right_knot", "slope"),
    "axioms.csv": ("axiom", "worst", "passed"),
    "assumptions.csv": ("inequality", "ratio"),
}


def jsonable(v: Any) -> Any:
    """Plain JSON types; NaN becomes null and infinities become strings."""
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if v is None or isinstance(v, str):
        return v
    return str(v)


def _dump(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# set-up


@dataclass
class Setup:
    """Everything an experiment needs, built before any file is written."""

    name: str
    kind: str
    params: dict
    bundle: CoefficientBundle
    paths: GBrownianPaths
    xi0: RandomVariable
    point: np.ndarray
    seed: int
    tolerances: dict


def _vector(v: Any, d: int, what: str) -> np.ndarray:
    a = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if a.size == 1:
        return np.full(d, float(a[0]))
    if a.shape != (d,):
        raise ConfigurationError(f"{what} has length {a.size}, expected {d}")
    return a


def prepare(cfg: dict) -> list[Setup]:
    """Build bundles, ensembles and initial conditions for every experiment."""
    seed = cfg["seed"]
    ens_cache: dict[str, GBrownianPaths] = {}
    xi_cache: dict[tuple, RandomVariable] = {}
    out = []
    for e in cfg["experiments"]:
        ens_doc = {**cfg["ensemble"], **e.get("ensemble", {}), "seed": seed}
        key = json.dumps(ens_doc, sort_keys=True)
        if key not in ens_cache:
            ens_cache[key] = GBrownianPaths(ScenarioEnsemble.from_dict(ens_doc))
        paths = ens_cache[key]
        coef = e.get("coefficients", cfg["coefficients"])
        bundle = builtin(coef["family"], coef["params"])
        if bundle.dim_n != paths.dim_n:
            raise ConfigurationError(
                f"experiment {e['name']!r}: coefficients use n = {bundle.dim_n} but the "
                f"volatility set has n = {paths.dim_n}")
        d = bundle.dim_d
        init = cfg["initial"]
        mean = _vector(init["mean"], d, "initial.mean")
        xkey = (key, d)
        if xkey not in xi_cache:
            rng = stream(seed, "initial.xi")
            draws = rng.standard_normal((paths.ensemble.n_paths, d))
            xi_cache[xkey] = RandomVariable.from_paths(mean + init["scale"] * draws,
                                                       paths.ensemble.n_scenarios)
        out.append(Setup(e["name"], e["type"], e["params"], bundle, paths, xi_cache[xkey],
                         _vector(init["point"], d, "initial.point"), seed, cfg["tolerances"]))
    return out


def _rng(st: Setup) -> np.random.Generator:
    return stream(st.seed, f"inputs.{st.name}")


def _subseed(st: Setup, purpose: str) -> int:
    return int(seed_sequence(st.seed, f"inputs.{st.name}.{purpose}").generate_state(1)[0])


def _direction_rv(st: Setup, rng: np.random.Generator, scale: float) -> RandomVariable:
    ens = st.paths.ensemble
    v = scale * rng.standard_normal((ens.n_paths, st.bundle.dim_d))
    return RandomVariable.from_paths(v, ens.n_scenarios)


def _direction_point(st: Setup, rng: np.random.Generator, scale: float) -> np.ndarray:
    return scale * rng.standard_normal(st.bundle.dim_d)


# --------------------------------------------------------------------------
# experiments


@dataclass
class Outcome:
    passed: bool
    summary: dict
    files: list = field(default_factory=list)
    report: dict = field(default_factory=dict)


def _exp_solve(st: Setup, out: Path) -> Outcome:
    fwd = solve_mean_field(st.bundle, st.xi0, st.paths)
    s = node_summary(fwd.x_meanfield)
    files = [write_csv(out / "summary.csv", CSV_COLUMNS["summary.csv"],
                       zip(s["node"], s["upper_mean"], s["lower_mean"], s["l2_norm"]))]
    if st.params["save_tensor"]:
        files.append(write_tensor(out / "x_meanfield.mfgt", fwd.x_meanfield,
                                  {"kind": "forward", "experiment": st.name}))
    fin = bool(np.all(np.isfinite(fwd.x_meanfield.values)))
    summ = {"terminal_upper_mean": float(s["upper_mean"][-1]),
            "terminal_lower_mean": float(s["lower_mean"][-1]),
            "terminal_l2_norm": float(s["l2_norm"][-1])}
    return Outcome(fin, summ, files, {"finite": fin, **summ})


def _exp_concatenation(st: Setup, out: Path) -> Outcome:
    fwd = solve_mean_field(st.bundle, st.xi0, st.paths)
    conc = concatenate(st.bundle, st.xi0, fwd)
    err = hp_norm(conc.x_frozen - fwd.x_meanfield, 2)
    tol = st.tolerances["identity"]
    files = [write_csv(out / "identity.csv", CSV_COLUMNS["identity.csv"],
                       [("hp2_difference", err), ("tolerance", tol)])]
    return Outcome(err <= tol, {"hp2_difference": err}, files,
                   {"hp2_difference": err, "tolerance": tol})


def _tangent(st: Setup, kind: str, fwd, frozen, dirs: dict, mixed: str):
    b = st.bundle
    if kind == "A_x":
        return solve_A(b, frozen, dirs["y"])
    if kind == "Dxi_X":
        return frechet_xi(b, fwd, dirs["eta"])
    if kind == "Y_xi_xi":
        return solve_Y_xi(b, fwd, dirs["eta"], dx_concatenated(b, fwd, fwd.xi0, dirs["eta"]))
    if kind == "Y_x_xi":
        return solve_Y_x(b, frozen, dirs["eta"], frechet_xi(b, fwd, dirs["eta"]))
    if kind == "C_xx":
        return solve_C(b, frozen, solve_A(b, frozen, dirs["y"]), solve_A(b, frozen, dirs["z"]))
    if kind == "D_x_xi":
        dxi = frechet_xi(b, fwd, dirs["eta"])
        return solve_D(b, frozen, solve_A(b, frozen, dirs["y"]),
                       solve_Y_x(b, frozen, dirs["eta"], dxi), dxi, mixed)
    raise ConfigurationError(f"unknown tangent kind {kind!r}")


_LINEAR_ARGS = {"A_x": ("y",), "Dxi_X": ("eta",), "Y_xi_xi": ("eta",), "Y_x_xi": ("eta",),
                "C_xx": ("y", "z"), "D_x_xi": ("y", "eta")}


def _exp_tangent(st: Setup, out: Path) -> Outcome:
    kind, scale, mixed = st.params["kind"], st.params["direction_scale"], st.params["mixed"]
    rng = _rng(st)
    fwd = solve_mean_field(st.bundle, st.xi0, st.paths)
    frozen = solve_frozen(st.bundle, st.point, fwd)
    dirs = {"y": _direction_point(st, rng, scale), "z": _direction_point(st, rng, scale),
            "eta": _direction_rv(st, rng, scale)}
    alt = {"y": _direction_point(st, rng, scale), "z": _direction_point(st, rng, scale),
           "eta": _direction_rv(st, rng, scale)}
    a, c = (float(v) for v in rng.uniform(-2.0, 2.0, 2))
    base = _tangent(st, kind, fwd, frozen, dirs, mixed)
    rows, ok = [], True
    tol = st.tolerances["identity"]
    for arg in _LINEAR_ARGS[kind]:
        other = {**dirs, arg: alt[arg]}
        mixd = {**dirs, arg: a * dirs[arg] + c * alt[arg]}
        t2 = _tangent(st, kind, fwd, frozen, other, mixed)
        t3 = _tangent(st, kind, fwd, frozen, mixd, mixed)
        resid = hp_norm(t3.values - a * base.values - c * t2.values, 2)
        ref = max(1.0, hp_norm(base.values, 2), hp_norm(t2.values, 2))
        rows.append((arg, resid, ref))
        ok = ok and resid <= tol * ref
    s = node_summary(base.process)
    files = [write_csv(out / "summary.csv", CSV_COLUMNS["summary.csv"],
                       zip(s["node"], s["upper_mean"], s["lower_mean"], s["l2_norm"])),
             write_csv(out / "linearity.csv", CSV_COLUMNS["linearity.csv"], rows)]
    if st.params["save_tensor"]:
        files.append(write_tensor(out / f"{kind}.mfgt", base.process,
                                  {"kind": kind, "experiment": st.name, "mixed": mixed}))
    summ = {"kind": kind, "max_linearity_residual": max(r[1] for r in rows),
            "terminal_l2_norm": float(s["l2_norm"][-1])}
    return Outcome(bool(ok), summ, files,
                   {**summ, "linearity": [{"argument": r[0], "residual": r[1], "scale": r[2]}
                                          for r in rows], "tolerance": tol})


def _exp_fd(st: Setup, out: Path) -> Outcome:
    p, rng, b = st.params, _rng(st), st.bundle
    scale = p["direction_scale"]
    kw = {"epsilons": p["epsilons"], "window": tuple(st.tolerances["order_window"]),
          "floor": st.tolerances["fp_floor"]}
    x, xi = st.point, st.xi0
    y, z = _direction_point(st, rng, scale), _direction_point(st, rng, scale)
    eta = _direction_rv(st, rng, scale)
    kind = st.kind
    if kind == "fd_check_x":
        rep = fdm.fd_check_x(b, st.paths, x, xi, y, **kw)
    elif kind == "fd_check_xi":
        rep = fdm.fd_check_xi(b, st.paths, xi, eta, start=p["start"], **kw)
    elif kind == "fd_check_xi_frozen":
        rep = fdm.fd_check_xi_frozen(b, st.paths, x, xi, eta, start=p["start"], **kw)
    elif kind == "fd_check_xx":
        rep = fdm.fd_check_xx(b, st.paths, x, xi, y, z, **kw)
    elif kind == "fd_check_x_xi":
        rep = fdm.fd_check_x_xi(b, st.paths, x, xi, y, eta, sweep=p["sweep"], mixed=p["mixed"],
                                start=p["start"], **kw)
    else:
        rep = fdm.fd_check_concatenated(b, st.paths, xi, eta, **kw)
    lo, hi = st.tolerances["ratio_window"]
    files = [write_csv(out / "remainders.csv", CSV_COLUMNS["remainders.csv"], rep.rows())]
    summ = {"fitted_order": rep.fitted_order, "max_remainder": rep.max_remainder}
    doc = rep.to_dict()
    doc["ratio_window"] = [lo, hi]
    return Outcome(bool(rep.passed), summ, files, doc)


def _exp_audit(st: Setup, out: Path) -> Outcome:
    p = st.params
    probes = AuditProbes(p["probes"], p["x_range"], p["xi_scale"], _subseed(st, "audit"))
    sf = st.tolerances["safety_factor"]
    if p["lemma"] == "all":
        audits = audit_all(st.bundle, st.paths, probes, sf)
    else:
        audits = [ratio_audit(p["lemma"], st.bundle, st.paths, probes, p["p"], sf)]
    rows = []
    for a in audits:
        for i, r in enumerate(a.probes):
            ok = r.excluded or r.ratio <= sf * r.constant
            rows.append((a.lemma_id, a.p, i, r.numerator, r.denominator, r.ratio, r.constant,
                         r.excluded, ok))
    files = [write_csv(out / "ratios.csv", CSV_COLUMNS["ratios.csv"], rows)]
    failed = [f"{a.lemma_id}@p={a.p:g}" for a in audits if not a.passed]
    summ = {"audits": len(audits), "failed": failed}
    return Outcome(not failed, summ, files, {"audits": [a.to_dict() for a in audits], **summ})


def _exp_appendix(st: Setup, out: Path) -> Outcome:
    p = st.params
    reps = [appendix_check(st.paths, q, p["probes"], _subseed(st, "appendix"), p["coordinate"])
            for q in p["p"]]
    rows = [(r.p, res.name, res.lhs, res.rhs, res.holds) for r in reps for res in r.results]
    files = [write_csv(out / "inequalities.csv", CSV_COLUMNS["inequalities.csv"], rows)]
    viol = sum(r.violations for r in reps)
    return Outcome(viol == 0, {"violations": viol, "p": list(p["p"])}, files,
                   {"reports": [r.to_dict() for r in reps], "violations": viol})


def _lip1_pair(rng: np.random.Generator, d: int):
    def one():
        j = int(rng.integers(1, 4))
        a = rng.standard_normal((j, d))
        a *= rng.uniform(0.0, 1.0, (j, 1)) / np.linalg.norm(a, axis=1, keepdims=True)
        return MinAffine(a, rng.uniform(-1.0, 1.0, j))
    return one(), one()


def _exp_distribution(st: Setup, out: Path) -> Outcome:
    p, rng, tol = st.params, _rng(st), st.tolerances
    xi = st.xi0.values[..., :1]
    F = SublinearDistribution(xi)
    rows = []
    self_d = metric_d(F, F).value
    rows.append(("self_distance", self_d, 0.0, self_d == 0.0))
    c = p["shift"]
    res = metric_d(F, SublinearDistribution(xi + c))
    rel = abs(res.value - abs(c)) / max(abs(c), 1e-300)
    rows.append(("shift_distance", res.value, abs(c), rel <= tol["shift_relative"]))
    chain_ok = True
    for i in range(p["probes"]):
        pert = rng.uniform(-1.0, 1.0) + rng.uniform(0.0, 1.0) * rng.standard_normal(xi.shape[1])
        other = xi + pert[None, :, None]
        m = metric_d(F, SublinearDistribution(other)).value
        l1, l2 = lp_norm(other - xi, 1), lp_norm(other - xi, 2)
        ok = m <= l1 * (1 + 1e-12) + 1e-12 and l1 <= l2 * (1 + 1e-12) + 1e-12
        chain_ok = chain_ok and ok
        rows.append((f"chain[{i}]", m, l1, ok))
    pairs = [_lip1_pair(rng, 1) for _ in range(p["axiom_probes"])]
    ax = check_axioms(F, [q[0] for q in pairs], [q[1] for q in pairs],
                      seed=_subseed(st, "axioms"), tol=tol["axioms"])

    def good(X):
        return sublinear_expectation(np.sin(X.values[..., 0]) + 0.5 * X.values[..., 0])

    def planted(X):
        return float(np.max(X.values[:, 0, 0] ** 2))

    try:
        ri_good = representative_independence(good, xi, seed=_subseed(st, "perm"))
    except DifferentiabilityError as exc:
        ri_good = {"passed": False, "error": str(exc)}
    ri_bad = representative_independence(planted, xi, seed=_subseed(st, "perm"))
    rows.append(("independence_respecting", float(ri_good["passed"]), 1.0, ri_good["passed"]))
    rows.append(("independence_planted", float(ri_bad["passed"]), 0.0, not ri_bad["passed"]))
    cert = res.certificate
    files = [write_csv(out / "metric.csv", CSV_COLUMNS["metric.csv"], rows),
             write_csv(out / "axioms.csv", CSV_COLUMNS["axioms.csv"],
                       [(k, ax["worst"][k], ax["passed"][k]) for k in sorted(ax["worst"])])]
    if isinstance(cert, PiecewiseLinear):
        files.append(write_csv(out / "certificate.csv", CSV_COLUMNS["certificate.csv"],
                               cert.to_rows()))
    passed = all(r[3] for r in rows) and ax["all_passed"]
    summ = {"shift_distance": res.value, "self_distance": self_d, "axioms": ax["all_passed"]}
    return Outcome(bool(passed), summ, files,
                   {"metric_rows": [list(r) for r in rows], "axioms": ax,
                    "independence_respecting": ri_good, "independence_planted": ri_bad})


def _exp_assumptions(st: Setup, out: Path) -> Outcome:
    p = st.params
    spec = ProbeSpec(count=p["probes"], x_range=p["x_range"], seed=_subseed(st, "probes"))
    rep = probe_assumptions(st.bundle, spec, st.tolerances["assumptions"])
    files = [write_csv(out / "assumptions.csv", CSV_COLUMNS["assumptions.csv"],
                       sorted(rep.ratios.items()))]
    worst = rep.worst
    return Outcome(rep.passed, {"worst": worst[0], "worst_ratio": worst[1]}, files, rep.to_dict())


def _exp_interchange(st: Setup, out: Path) -> Outcome:
    spec = ProbeSpec(count=st.params["probes"], seed=_subseed(st, "probes"))
    rep = interchange_check(st.bundle, spec, st.tolerances["interchange"])
    files = [write_csv(out / "identity.csv", CSV_COLUMNS["identity.csv"],
                       [("max_abs_diff", rep["max_abs_diff"]), ("tolerance", rep["tolerance"])])]
    return Outcome(rep["passed"], {"max_abs_diff": rep["max_abs_diff"]}, files, rep)


_RUNNERS: dict[str, Callable[[Setup, Path], Outcome]] = {
    "solve": _exp_solve,
    "concatenation_identity": _exp_concatenation,
    "tangent": _exp_tangent,
    **dict.fromkeys(FD_TYPES, _exp_fd),
    "ratio_audit": _exp_audit,
    "appendix_check": _exp_appendix,
    "distribution": _exp_distribution,
    "probe_assumptions": _exp_assumptions,
    "interchange": _exp_interchange,
}


# --------------------------------------------------------------------------
# driver


@dataclass
class RunResult:
    status: int
    output_dir: Path
    manifest: dict


def _execute(st: Setup, root: Path) -> dict:
    out = root / st.name
    out.mkdir(parents=True, exist_ok=True)
    entry = {"name": st.name, "type": st.kind, "params": st.params}
    try:
        oc = _RUNNERS[st.kind](st, out)
    except DivergenceError as exc:
        entry.update(status="diverged", passed=False, error=str(exc),
                     step=exc.step, scenario=exc.scenario)
        _dump(out / "report.json", entry)
        return entry
    except ConfigurationError as exc:
        entry.update(status="config_error", passed=False, error=str(exc))
        _dump(out / "report.json", entry)
        return entry
    entry.update(status="pass" if oc.passed else "fail", passed=bool(oc.passed),
                 summary=oc.summary, files=sorted(f.relative_to(root).as_posix() for f in oc.files))
    _dump(out / "report.json", {**entry, "report": oc.report})
    return entry


def _versions() -> dict:
    out = {"mfgsde": __version__, "python": platform.python_version()}
    for dist in ("numpy", "scipy", "scikit-learn", "jsonschema", "pyyaml"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def run_config(cfg: dict, output_dir: str | Path, jobs: int = 1) -> RunResult:
    """Run a normalized config; files are written only after set-up succeeds."""
    setups = prepare(cfg)
    root = Path(output_dir)
    root.mkdir(parents=True, exist_ok=True)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(lambda s: _execute(s, root), setups))
    else:
        entries = [_execute(s, root) for s in setups]
    statuses = [e["status"] for e in entries]
    if "diverged" in statuses:
        status = EXIT_DIVERGENCE
    elif "config_error" in statuses:
        status = EXIT_CONFIG
    elif all(e["passed"] for e in entries):
        status = EXIT_PASS
    else:
        status = EXIT_FAIL
    manifest = {
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "schema_version": cfg["schema_version"],
        "versions": _versions(),
        "experiments": entries,
        "summary": {"total": len(entries), "passed": sum(e["passed"] for e in entries),
                    "failed": [e["name"] for e in entries if not e["passed"]]},
        "exit_status": status,
        "config": cfg,
    }
    _dump(root / "manifest.json", manifest)
    return RunResult(status, root, manifest)
