"""``quadctl`` command-line front end.

Every subcommand reads one JSON problem file, writes one JSON report
(sorted keys, atomic replace) and, where a time grid exists, a CSV trace
next to it named ``<output stem>.trace.csv``. Exit status is 0 on
success, 2 on malformed input and 3 on numerical failure; failures write
``{"error": <name>, "message": ..., "field": ...}``.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, control, mechsys, odecore, qres, riccati, schemas
from .errors import MissingParameter, NumericalError, QuadctlError, SchemaError


# ---------------------------------------------------------------- input


def _nonfinite_path(obj, path=()):
    if isinstance(obj, float) and not math.isfinite(obj):
        return path
    items = obj.items() if isinstance(obj, dict) else enumerate(obj) if isinstance(obj, list) else ()
    for k, v in items:
        found = _nonfinite_path(v, path + (str(k),))
        if found is not None:
            return found
    return None


def parse_json(text, what="input"):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg} at line {exc.lineno}", field=what) from exc
    bad = _nonfinite_path(data)
    if bad is not None:
        field = "/".join(bad) or "<root>"
        raise SchemaError(f"{field}: non-finite numbers are not allowed", field=field)
    return data


def load_input(path, command):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read input: {exc.strerror}", field="input") from exc
    data = parse_json(text)
    validate(data, command)
    return data


def validate(data, command):
    validator = jsonschema.Draft202012Validator(schemas.BY_COMMAND[command])
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        field = "/".join(str(p) for p in err.absolute_path) or _missing_field(err) or "<root>"
        raise SchemaError(f"{field}: {err.message}", field=field)


def _missing_field(err):
    if err.validator == "required":
        for name in err.validator_value:
            if isinstance(err.instance, dict) and name not in err.instance:
                return name
    if err.validator == "anyOf":
        names = [n for sub in err.validator_value for n in sub.get("required", [])]
        return "|".join(names) or None
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        return extra[0] if extra else None
    return None


def _matrix(obj, d=None, name="matrix"):
    if obj is None:
        return None
    if isinstance(obj, dict):
        if d is None:
            raise SchemaError(f"{name}: sparse form needs the dimension 'd'", field=name)
        out = np.zeros((d, d))
        for i, j, v in obj["coo"]:
            if i >= d or j >= d:
                raise SchemaError(f"{name}: index ({i}, {j}) outside {d}x{d}", field=name)
            out[i, j] += v
        return out
    if isinstance(obj, list) and obj and isinstance(obj[0], list) and len({len(r) for r in obj}) != 1:
        raise SchemaError(f"{name}: rows have different lengths", field=name)
    return np.array(obj, dtype=float)


def build_system(data):
    d = data.get("d", len(data["masses"]))
    if d != len(data["masses"]):
        raise SchemaError("d disagrees with the number of masses", field="d")
    damping = _matrix(data.get("damping"), d, "damping")
    forcing = data.get("forcing")
    if "potential" in data:
        return mechsys.MechanicalSystem(
            data["masses"], potential=_matrix(data["potential"], d, "potential"), damping=damping, forcing=forcing
        )
    for j, k, _ in data["springs"]:
        if j >= d or k >= d:
            raise SchemaError(f"springs: index ({j}, {k}) outside dimension {d}", field="springs")
    return mechsys.MechanicalSystem.from_springs(data["masses"], data["springs"], damping=damping, forcing=forcing)


# ---------------------------------------------------------------- output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "is_number"):
        return _clean(float(obj))
    return obj


def dumps(report):
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_path(output):
    p = Path(output)
    return p.with_name(p.stem + ".trace.csv")


def trace_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------- commands


def _eps(args, data, default):
    return args.epsilon if args.epsilon is not None else data.get("epsilon", default)


def _seed(args, data):
    return args.seed if args.seed is not None else data.get("seed", 0)


def cmd_simulate(args, data):
    system = build_system(data)
    basis = mechsys.Basis(data.get("basis", "X"))
    x0 = mechsys.to_basis(system, basis, data["q0"], data["qdot0"])
    ode = mechsys.assemble(system, basis).with_initial(x0, data["T"])
    params = odecore.SolverParams(epsilon=_eps(args, data, 1e-8), m=args.grid)
    hist = odecore.solve_history(ode, params)
    q, qdot = mechsys.from_basis(system, basis, hist.final)
    K, E = mechsys.energies(system, q, qdot)
    report = {
        "command": "simulate",
        "basis": basis.value,
        "x_final": hist.final,
        "x_exact": ode.exact(),
        "q_final": q,
        "qdot_final": qdot,
        "kinetic": K,
        "energy": E,
        "error_bound": hist.error_bound,
        "m": hist.m,
        "k": hist.params.k,
        "h": hist.params.h,
        "path_defect": hist.path_defect,
    }
    n = hist.steps.shape[1]
    trace = (["t"] + [f"x{i}" for i in range(n)], [[t, *x] for t, x in zip(hist.times, hist.steps)])
    return report, trace


def cmd_energy(args, data):
    system = build_system(data)
    basis = mechsys.Basis(data.get("basis", "X"))
    eps = _eps(args, data, 1e-2)
    gamma = args.gamma if args.gamma is not None else data.get("gamma")
    noise = args.noise or data.get("noise", "worst")
    hist, est = odecore.kinetic_pipeline(
        system, basis, data["q0"], data["qdot0"], data["T"], eps, gamma=gamma, noise=noise, seed=_seed(args, data)
    )
    _, E0 = mechsys.energies(system, np.asarray(data["q0"], float), np.asarray(data["qdot0"], float))
    report = {
        "command": "energy",
        "basis": basis.value,
        "epsilon": eps,
        "noise": noise,
        "x_final": hist.final,
        "error_bound": hist.error_bound,
        "K_hat": est.K_hat,
        "K_numeric": est.K_numeric,
        "K_true": est.K_true,
        "delta": est.delta,
        "additive_bound": est.additive_bound,
        "relative_bound": est.relative_bound,
        "energy_initial": E0,
        "m": hist.m,
        "k": hist.params.k,
    }
    return report, None


def cmd_hardness(args, data):
    system = build_system(data)
    ts = data["t"] if isinstance(data["t"], list) else [data["t"]]
    rows = [odecore.hardness_gap(system, t, data.get("q0"), data.get("qdot0")) for t in ts]
    report = {
        "command": "hardness",
        "t": ts,
        "gap": [r.gap for r in rows],
        "bound": [r.bound for r in rows],
        "K": [r.K for r in rows],
        "K_R": [r.K_R for r in rows],
        "energy_initial": rows[0].E,
        "within_bound": all(r.gap <= r.bound * (1 + 1e-9) + 1e-14 for r in rows),
    }
    trace = (["t", "gap", "bound"], [[t, r.gap, r.bound] for t, r in zip(ts, rows)])
    return report, trace


def _check_rows(data, names):
    for n in names:
        if n in data:
            _matrix(data[n], name=n)


def cmd_riccati(args, data):
    _check_rows(data, ("F0", "F1", "F2", "F3", "y0", "w"))
    convention = args.convention or data.get("convention", "minus")
    prob = riccati.RiccatiProblem(
        data["F0"], data["F1"], data["F2"], data["F3"], data["y0"], data["T"],
        mode=data.get("mode", "ivp"), w=data.get("w"), convention=convention,
    )
    params = odecore.SolverParams(epsilon=_eps(args, data, 1e-10), m=args.grid)
    vector = prob.M == 1 and np.ndim(data["F0"]) == 1
    tr = riccati.solve_vector(prob, params) if vector else riccati.solve_matrix(prob, params)
    y_T = tr.y[-1]
    report = {
        "command": "riccati",
        "mode": prob.mode,
        "convention": convention,
        "y_final": y_T[:, 0] if vector else y_T,
        "y_initial": tr.y[0][:, 0] if vector else tr.y[0],
        "kappa_V": tr.kappa_V,
        "sigma_min_v": float(tr.sigma_min_v.min()),
        "y_error_bound": float(tr.y_error_bound.max()),
        "initial_offset": tr.initial_offset,
        "m": tr.history.m,
        "k": tr.history.params.k,
    }
    if vector:
        report.update(
            y_direction=tr.y_direction,
            soln_error_budget=tr.soln_error_budget,
            p_success=tr.success.p,
            p_bound=tr.success.bound,
            g=tr.success.g,
        )
    N, M = prob.N, prob.M
    header = ["t"] + [f"y{i}_{j}" for i in range(N) for j in range(M)] + ["sigma_min_v"]
    rows = [[t, *y.ravel(), s] for t, y, s in zip(tr.times, tr.y, tr.sigma_min_v)]
    return report, (header, rows)


def cmd_lqr(args, data):
    _check_rows(data, ("F", "G", "Q", "R", "Pf"))
    R = data["R"]
    prob = control.LQRProblem(
        data["F"], data["G"], data["Q"], [[R]] if not isinstance(R, list) else R, data["Pf"], data["tf"], data["x0"]
    )
    params = odecore.SolverParams(epsilon=_eps(args, data, 1e-10))
    grid = args.grid or control.DEFAULT_GRID
    sol = control.solve_lqr(prob, params, grid=grid, refine=data.get("refine", 1), two_pass=data.get("two_pass", False))
    report = {
        "command": "lqr",
        "J": sol.J,
        "value": sol.value,
        "value_gap": sol.value_gap,
        "P0": sol.P[0],
        "symmetry_defect": sol.symmetry_defect,
        "two_pass_defect": sol.two_pass_defect,
        "t": sol.times,
        "P": sol.P,
        "K": sol.K,
        "x": sol.x,
        "u": sol.u,
    }
    n, p = prob.n, prob.G.shape[1]
    header = ["t"] + [f"x{i}" for i in range(n)] + [f"u{j}" for j in range(p)] + [f"P{i}_{j}" for i in range(n) for j in range(n)]
    rows = [[t, *x, *u, *P.ravel()] for t, x, u, P in zip(sol.times, sol.x, sol.u, sol.P)]
    return report, (header, rows)


def cmd_conjugate(args, data):
    _check_rows(data, ("Lqq", "Lqdq", "Lqdqd"))
    js = riccati.JacobiSystem(data["Lqq"], data["Lqdq"], data["Lqdqd"])
    pts = riccati.conjugate_points(js, data["interval"], grid=args.grid or 2000)
    return {"command": "conjugate", "interval": data["interval"], "conjugate_points": pts}, None


def cmd_resources(args, data):
    theorem, params = data["theorem"], data["params"]
    if theorem == "matrix_riccati_pipeline":
        need = ("s", "kappa_L", "kappa_V", "N", "M", "epsilon")
        missing = [n for n in need if n not in params]
        if missing:
            raise MissingParameter(f"missing parameter(s): {', '.join(missing)}")
        rep = qres.pipeline_matrix_riccati(*(params[n] for n in need), m=params.get("m", 1))
    else:
        rep = qres.theorem_costs(theorem, params)
    return {"command": "resources", **rep.to_dict()}, None


COMMANDS = {
    "simulate": cmd_simulate,
    "energy": cmd_energy,
    "hardness": cmd_hardness,
    "riccati": cmd_riccati,
    "lqr": cmd_lqr,
    "conjugate": cmd_conjugate,
    "resources": cmd_resources,
}


# ---------------------------------------------------------------- driver


def build_parser():
    parser = argparse.ArgumentParser(prog="quadctl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"quadctl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--input", required=name != "resources")
        sp.add_argument("--output")
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--grid", type=int)
        sp.add_argument("--convention", choices=["minus", "plus"])
        sp.add_argument("--noise", choices=["worst", "random"])
        sp.add_argument("--seed", type=int)
        if name == "resources":
            sp.add_argument("--theorem", choices=schemas.THEOREMS)
            sp.add_argument("--params")
    return parser


def _read_data(args):
    if args.command != "resources":
        return load_input(args.input, args.command)
    if args.input:
        if args.theorem or args.params:
            raise SchemaError("use either --input or --theorem/--params", field="input")
        return load_input(args.input, args.command)
    if not (args.theorem and args.params):
        raise SchemaError("resources needs --input or both --theorem and --params", field="theorem")
    params = load_params(args.params)
    data = {"theorem": args.theorem, "params": params}
    validate(data, "resources")
    return data


def load_params(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read params: {exc.strerror}", field="params") from exc
    return parse_json(text, "params")


def _check_overrides(args):
    if args.epsilon is not None and not 0 < args.epsilon < 1:
        raise SchemaError("--epsilon must lie in (0, 1)", field="epsilon")
    if args.gamma is not None and not 0 <= args.gamma < 1:
        raise SchemaError("--gamma must lie in [0, 1)", field="gamma")
    if args.grid is not None and args.grid < 1:
        raise SchemaError("--grid must be positive", field="grid")
    if args.seed is not None and args.seed < 0:
        raise SchemaError("--seed must be nonnegative", field="seed")


_FIELD_BY_ERROR = {
    "SingularMass": "masses",
    "NonUnitMasses": "masses",
    "NegativeSpring": "springs",
    "MissingSprings": "springs",
    "SingularR": "R",
    "KappaTooSmall": "kappa",
    "MissingParameter": "params",
}


def _field_of(exc):
    field = getattr(exc, "field", None)
    if field:
        return field
    if exc.name in _FIELD_BY_ERROR:
        return _FIELD_BY_ERROR[exc.name]
    # messages from the solvers lead with the offending argument name
    head = str(exc).split(" ", 1)[0].rstrip(":,")
    return head if head.replace("_", "").isalnum() else None


def run(argv=None):
    """Run one command; returns ``(exit_status, report_dict)``."""
    args = build_parser().parse_args(argv)
    trace = None
    try:
        _check_overrides(args)
        data = _read_data(args)
        report, trace = COMMANDS[args.command](args, data)
        status = 0
    except NumericalError as exc:
        report = {"error": exc.name, "message": str(exc)}
        if getattr(exc, "t", None) is not None:
            report["t"] = exc.t
        status = 3
    except QuadctlError as exc:
        report = {"error": exc.name, "message": str(exc), "field": _field_of(exc)}
        status = exc.exit_code
    except (ValueError, TypeError) as exc:
        report = {"error": "InputError", "message": str(exc), "field": None}
        status = 2
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        report = {"error": type(exc).__name__, "message": str(exc)}
        status = 3
    text = dumps(report)
    if args.output:
        _atomic_write(args.output, text)
        if trace is not None:
            _atomic_write(trace_path(args.output), trace_csv(*trace))
    else:
        sys.stdout.write(text)
    if status:
        sys.stderr.write(f"quadctl {args.command}: {report['error']}: {report['message']}\n")
    return status, report


def main(argv=None):
    status, _ = run(argv)
    return status


if __name__ == "__main__":
    sys.exit(main())
