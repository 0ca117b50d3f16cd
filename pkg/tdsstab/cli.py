"""
Command line front end: tdsstab COMMAND SYSTEM_FILE [flags].

System files are JSON documents

    {"n": 2,
     "terms": [{"delay": 0.0, "variable": false, "matrix": [[...], ...]},
               {"delay": 0.0, "variable": true, "matrix": [[...], ...]}],
     "input": {"B": [[1.0], [0.0]]},
     "plant": {"A0": [[...]], "A1": [[...]], "h": 3.2, "B": [[1.0], [0.0]]}}

where "delay" is the fixed part of a term's delay and "variable" adds the
variable delay tau. Either "terms" or "plant" must be present.
"""

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from tdsstab.config import ToleranceConfig
from tdsstab.exceptions import (
    ConfigurationError,
    DegenerateCrossing,
    NoDecomposition,
    PreconditionError,
    ShapeError,
    SystemFileError,
    TDSStabError,
)
from tdsstab.feedback import (
    GainDesign,
    closed_loop_system,
    gain_search,
    is_controllable,
    place_pole_pair,
    stabilizing_intervals,
)
from tdsstab.invariant import decompose_system, find_common_invariant_subspaces
from tdsstab.quasipoly import (
    analyze_system,
    char_function,
    combine_maps,
    crossing_sweep,
    default_omega_max,
    rightmost_roots,
)
from tdsstab.simulate import HistoryFunction, integrate, settling_time
from tdsstab.systems import DelayTerm, Plant, TimeDelaySystem, matrix_from_json

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_SCHEMA = 4
EXIT_VALIDATION = 5
EXIT_DEGENERATE = 6
EXIT_NUMERICAL = 7

COMMANDS = (
    "decompose",
    "crossings",
    "stability",
    "design-stabilize",
    "design-place",
    "simulate",
    "roots",
    "check-controllable",
)


@dataclass
class SystemFile:
    n: int
    system: Optional[TimeDelaySystem] = None
    plant: Optional[Plant] = None


def _schema_error(message, field_name=None):
    return SystemFileError(message, field=field_name, exit_code=EXIT_SCHEMA)


def _validation_error(err, field_name):
    return SystemFileError("{}: {}".format(field_name, err), field=field_name, exit_code=EXIT_VALIDATION)


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _schema_error("{} must be a number".format(name), name)
    return float(value)


def _matrix(value, name, rows=None, cols=None):
    try:
        return matrix_from_json(value, name, rows, cols)
    except ShapeError as err:
        raise _validation_error(err, name) from err


def load_system(path):
    """
    Reads and validates a system file.

    Raises:
        SystemFileError: With exit code 3 for a missing file, 4 for malformed
            JSON or missing fields and 5 for values violating the system invariants.
    """
    try:
        text = Path(path).read_text()
    except FileNotFoundError as err:
        raise SystemFileError("system file {} not found".format(path), exit_code=EXIT_MISSING) from err
    except OSError as err:
        raise SystemFileError("system file {} cannot be read: {}".format(path, err), exit_code=EXIT_MISSING) from err
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise _schema_error("system file is not valid JSON: {}".format(err)) from err
    if not isinstance(data, dict):
        raise _schema_error("system file must contain a JSON object")
    if not isinstance(data.get("n"), int) or isinstance(data.get("n"), bool) or data["n"] < 1:
        raise _schema_error("n must be a positive integer", "n")
    n = data["n"]
    if "terms" not in data and "plant" not in data:
        raise _schema_error("either terms or plant must be given", "terms")

    B = None
    if "input" in data:
        if not isinstance(data["input"], dict) or "B" not in data["input"]:
            raise _schema_error("input must be an object with key B", "input")
        B = _matrix(data["input"]["B"], "input.B", n, 1)

    plant = None
    if "plant" in data:
        block = data["plant"]
        if not isinstance(block, dict) or any(key not in block for key in ("A0", "A1", "h", "B")):
            raise _schema_error("plant needs keys A0, A1, h and B", "plant")
        try:
            plant = Plant(
                _matrix(block["A0"], "plant.A0", n, n),
                _matrix(block["A1"], "plant.A1", n, n),
                _matrix(block["B"], "plant.B", n, 1),
                _number(block["h"], "plant.h"),
            )
        except ShapeError as err:
            raise _validation_error(err, "plant") from err

    system = None
    if "terms" in data:
        if not isinstance(data["terms"], list):
            raise _schema_error("terms must be a list", "terms")
        terms = []
        for i, entry in enumerate(data["terms"]):
            name = "terms[{}]".format(i)
            if not isinstance(entry, dict) or "matrix" not in entry or "delay" not in entry:
                raise _schema_error("{} needs keys delay and matrix".format(name), name)
            variable = entry.get("variable", False)
            if not isinstance(variable, bool):
                raise _schema_error("{}.variable must be a boolean".format(name), name)
            matrix = _matrix(entry["matrix"], name + ".matrix", n, n)
            try:
                terms.append(DelayTerm(matrix, _number(entry["delay"], name + ".delay"), int(variable)))
            except ShapeError as err:
                raise _validation_error(err, name) from err
        try:
            system = TimeDelaySystem(tuple(terms), B if B is not None else (plant.B if plant else None))
        except ShapeError as err:
            raise _validation_error(err, "terms") from err
    else:
        system = plant.to_system()

    return SystemFile(n, system, plant)


def _system_dict(sf):
    data = {"n": sf.n}
    if sf.system is not None:
        data["terms"] = [
            {"delay": term.offset, "variable": bool(term.mult), "matrix": term.matrix.tolist()}
            for term in sf.system.terms
        ]
        if sf.system.B is not None:
            data["input"] = {"B": sf.system.B.tolist()}
    if sf.plant is not None:
        data["plant"] = {
            "A0": sf.plant.A0.tolist(),
            "A1": sf.plant.A1.tolist(),
            "h": sf.plant.h,
            "B": sf.plant.B.tolist(),
        }
    return data


def dump_system(sf, path):
    _atomic_write(path, json.dumps(_system_dict(sf), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(key): _jsonable(val) for key, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(val) for val in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


@dataclass
class Report:
    """Outcome of one command: echo of the inputs, payload and CSV table."""

    command: str
    config: dict
    result: dict
    warnings: list = field(default_factory=list)
    header: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def to_json(self):
        payload = {
            "schema": SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
            "result": self.result,
            "warnings": self.warnings,
        }
        return json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_csv(self):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.header)
        for row in self.rows:
            writer.writerow(["" if val is None else _csv_value(val) for val in row])
        return buffer.getvalue()


def _csv_value(val):
    if isinstance(val, (bool, np.bool_)):
        return "true" if val else "false"
    if isinstance(val, (float, np.floating)):
        return repr(float(val))
    return str(val)


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    with tempfile.NamedTemporaryFile("w", dir=directory, delete=False, suffix=".tmp") as handle:
        handle.write(text)
        tmp_name = handle.name
    os.replace(tmp_name, path)


def emit(report, fmt="json", out_path=None):
    text = report.to_json() if fmt == "json" else report.to_csv()
    if out_path is None:
        sys.stdout.write(text)
    else:
        _atomic_write(out_path, text)


def _config(args, cfg):
    return {
        "tolerances": cfg.to_dict(),
        "tau_max": args.tau_max,
        "omega_max": args.omega_max,
        "grid": args.grid,
        "nodes": args.nodes,
        "tau": args.tau,
        "dt": args.dt,
        "t_end": args.t_end,
        "history": args.history,
        "gain": args.gain,
        "gain_range": args.gain_range,
        "beta": args.beta,
        "pole": args.pole,
        "no_decompose": args.no_decompose,
    }


def _require_system(sf):
    if sf.system is None:
        raise ConfigurationError("the command needs system terms")
    return sf.system


def _require_plant(sf):
    if sf.plant is None:
        raise ConfigurationError("the command needs a plant block")
    return sf.plant


def _run_decompose(sf, args, cfg, report):
    sys_ = _require_system(sf)
    result = decompose_system(sys_, cfg)
    subspaces = find_common_invariant_subspaces(sys_.undelayed, sys_.variable_matrix(), cfg)
    report.result = {
        "dims": result.dims,
        "residual": result.residual,
        "decomposition": result.to_dict(),
        "subspace_dims": [w.k for w in subspaces],
        "subsystems": [
            {"A1": sub.undelayed, "A2": sub.variable_matrix()} for sub in result.subsystems
        ],
    }
    report.header = ["block", "dim", "residual"]
    report.rows = [(i, dim, result.residual) for i, dim in enumerate(result.dims)]


def _crossing_rows(crossings, tau_max):
    rows = []
    for point in crossings:
        delays = point.delays(max(tau_max, point.tau0 + point.period))
        rows.append((point.omega, point.theta, delays[0], delays[1], point.tendency))
    return rows


def _run_crossings(sf, args, cfg, report):
    sys_ = _require_system(sf)
    F = char_function(sys_)
    omega_max = _omega_max(args, sys_)
    report.config["omega_max"] = omega_max
    crossings = crossing_sweep(F, omega_max, args.grid)
    report.result = {
        "omega_max": omega_max,
        "characteristic_function": F.to_dict(),
        "crossings": [p.to_dict(args.tau_max) for p in crossings],
    }
    report.header = ["omega", "theta", "tau_0", "tau_1", "tendency"]
    report.rows = _crossing_rows(crossings, args.tau_max)


def _omega_max(args, sys_):
    return args.omega_max if args.omega_max is not None else default_omega_max(sys_)


def _block_payload(crossings, smap, omega_max):
    return {"omega_max": omega_max, "crossings": [p.to_dict(smap.tau_max) for p in crossings], "map": smap.to_dict()}


def _run_stability(sf, args, cfg, report):
    sys_ = _require_system(sf)
    omega_max = _omega_max(args, sys_)
    report.config["omega_max"] = omega_max
    try:
        _, crossings, smap = analyze_system(sys_, args.tau_max, omega_max, args.grid, args.nodes)
        blocks = [dict(dim=sys_.n, **_block_payload(crossings, smap, omega_max))]
        decomposed = None
    except DegenerateCrossing as err:
        if args.no_decompose or not sys_.is_single_delay:
            raise
        report.warnings.append("degenerate crossing at omega = {:.6g}; decomposed".format(err.omega))
        decomposed = decompose_system(sys_, cfg)
        maps = []
        blocks = []
        for sub in decomposed.subsystems:
            sub_omega = _omega_max(args, sub)
            _, crossings, sub_map = analyze_system(sub, args.tau_max, sub_omega, args.grid, args.nodes)
            maps.append(sub_map)
            blocks.append(dict(dim=sub.n, **_block_payload(crossings, sub_map, sub_omega)))
        smap = combine_maps(maps)

    lowest, windows = smap.minimum_intervals()
    report.result = {
        "decomposed": decomposed is not None,
        "residual": None if decomposed is None else decomposed.residual,
        "blocks": blocks,
        "combined": smap.to_dict(),
        "minimum": {"nu": lowest, "intervals": [list(w) for w in windows]},
    }
    report.header = ["tau_lo", "tau_hi", "NU"]
    report.rows = smap.rows()


def _gain_grid(gain_range, n):
    lo, hi, count = gain_range
    axis = np.linspace(lo, hi, count)
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _run_design_stabilize(sf, args, cfg, report):
    plant = _require_plant(sf)
    gains = [args.gain] if args.gain is not None else _gain_grid(args.gain_range, plant.n)
    bounds = [_omega_max(args, closed_loop_system(plant, K)) for K in gains]
    # largest sweep bound over the scanned gains
    report.config["omega_max"] = max(bounds)
    if args.gain is not None:
        designs = [stabilizing_intervals(plant, args.gain, args.tau_max, args.omega_max, args.grid, args.nodes)]
    else:
        designs = gain_search(plant, gains, args.tau_max, args.beta, args.omega_max, args.grid, args.nodes)
    payload = []
    for design in designs:
        entry = design.to_dict()
        entry["omega_max"] = _omega_max(args, closed_loop_system(plant, design.K))
        entry["crossings"] = [p.to_dict(args.tau_max) for p in design.crossings]
        entry["map"] = design.stability_map.to_dict()
        payload.append(entry)
    report.result = {"designs": payload}
    report.header = ["k{}".format(i + 1) for i in range(plant.n)] + ["tau_lo", "tau_hi"]
    report.rows = [tuple(d.K) + (lo, hi) for d in designs for lo, hi in d.stable_intervals]


def _run_design_place(sf, args, cfg, report):
    plant = _require_plant(sf)
    if args.tau is None or args.pole is None:
        raise ConfigurationError("design-place needs --tau and --pole")
    if args.pole.imag == 0.0:
        raise ConfigurationError("the placed pole must have a nonzero imaginary part")
    K = place_pole_pair(plant, args.tau, args.pole)
    design = GainDesign(K, args.tau, placed_poles=[args.pole, args.pole.conjugate()])
    report.result = {"design": design.to_dict()}
    report.header = ["k{}".format(i + 1) for i in range(plant.n)] + ["tau", "pole_re", "pole_im"]
    report.rows = [tuple(K) + (args.tau, args.pole.real, args.pole.imag)]


def _run_simulate(sf, args, cfg, report):
    if args.gain is not None:
        sys_ = closed_loop_system(_require_plant(sf), args.gain)
    else:
        sys_ = _require_system(sf)
    tau = 0.0 if args.tau is None else args.tau
    history = HistoryFunction.constant(np.full(sys_.n, args.history))
    traj = integrate(sys_, history, args.t_end, args.dt, tau)
    report.result = {
        "tau": tau,
        "settling_time": settling_time(traj),
        "final_state": traj.final_state,
        "times": traj.times,
        "states": traj.states,
    }
    report.header = ["t"] + ["x{}".format(i + 1) for i in range(sys_.n)]
    report.rows = [(t,) + tuple(x) for t, x in zip(traj.times, traj.states)]


def _run_roots(sf, args, cfg, report):
    sys_ = _require_system(sf)
    tau = 0.0 if args.tau is None else args.tau
    roots = rightmost_roots(sys_, tau, args.nodes)
    report.result = {"tau": tau, "roots": list(roots), "unstable": int(np.sum(roots.real > 1.0e-6))}
    report.header = ["re", "im"]
    report.rows = [(r.real, r.imag) for r in roots]


def _run_check_controllable(sf, args, cfg, report):
    if sf.plant is not None:
        A0, A1, B = sf.plant.A0, sf.plant.A1, sf.plant.B
    else:
        sys_ = _require_system(sf)
        if sys_.B is None:
            raise ConfigurationError("check-controllable needs an input matrix")
        A0 = sys_.undelayed
        A1 = sum(term.matrix for term in sys_.delayed_terms) if sys_.delayed_terms else np.zeros_like(A0)
        B = sys_.B
    controllable = is_controllable(A0, A1, B, cfg)
    report.result = {"controllable": controllable}
    report.header = ["controllable"]
    report.rows = [(controllable,)]


RUNNERS = {
    "decompose": _run_decompose,
    "crossings": _run_crossings,
    "stability": _run_stability,
    "design-stabilize": _run_design_stabilize,
    "design-place": _run_design_place,
    "simulate": _run_simulate,
    "roots": _run_roots,
    "check-controllable": _run_check_controllable,
}


def run(command, sf, args):
    """Runs one command on a loaded system file and returns its report."""
    cfg = ToleranceConfig(rank_tol=args.tol, residual_tol=args.tol)
    report = Report(command, _config(args, cfg), {})
    if args.omega_max is None:
        # runners that sweep replace this by the bound they used
        report.config["omega_max"] = default_omega_max(sf.system if sf.system is not None else sf.plant.to_system())
    RUNNERS[command](sf, args, cfg, report)
    return report


def _gain_arg(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as err:
        raise argparse.ArgumentTypeError("gain must be comma separated numbers, got {!r}".format(text)) from err


def _gain_range_arg(text):
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
        if count < 1 or hi < lo:
            raise ValueError(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError("gain range must look like lo:hi:count, got {!r}".format(text)) from err
    return [lo, hi, count]


def _pole_arg(text):
    try:
        return complex(text.replace(" ", ""))
    except ValueError as err:
        raise argparse.ArgumentTypeError("pole must look like a+bj, got {!r}".format(text)) from err


def _history_arg(text):
    kind, _, value = text.partition(":")
    try:
        if kind != "const":
            raise ValueError(kind)
        return float(value)
    except ValueError as err:
        raise argparse.ArgumentTypeError("history must look like const:<value>, got {!r}".format(text)) from err


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tdsstab", description="Stability analysis and delayed feedback design for linear time-delay systems."
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("system_file")
    parser.add_argument("--tau-max", type=float, default=10.0, help="upper bound of the delay sweep")
    parser.add_argument("--omega-max", type=float, default=None, help="frequency bound of the crossing sweep")
    parser.add_argument("--grid", type=int, default=2000, help="frequency grid points")
    parser.add_argument("--tol", type=float, default=1.0e-8, help="rank and residual tolerance")
    parser.add_argument("--nodes", type=int, default=40, help="Chebyshev collocation nodes")
    parser.add_argument("--tau", type=float, default=None, help="value of the variable delay")
    parser.add_argument("--dt", type=float, default=None, help="integration step")
    parser.add_argument("--t-end", type=float, default=100.0, help="integration horizon")
    parser.add_argument("--history", type=_history_arg, default=1.0, help="initial function, const:<value>")
    parser.add_argument("--gain", type=_gain_arg, default=None, help="feedback gain k1,k2,...")
    parser.add_argument("--gain-range", type=_gain_range_arg, default="-10:10:11", help="gain search grid lo:hi:count per entry")
    parser.add_argument("--beta", type=float, default=None, help="frequency bound of the gain screen")
    parser.add_argument("--pole", type=_pole_arg, default=None, help="pole to place, a+bj (use --pole=-a+bj)")
    parser.add_argument("--no-decompose", action="store_true", help="do not decompose on degenerate crossings")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--out", default=None, help="output file (stdout by default)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        sf = load_system(args.system_file)
        report = run(args.command, sf, args)
        emit(report, args.format, args.out)
    except SystemFileError as err:
        logger.error("%s: %s", type(err).__name__, err)
        return err.exit_code
    except (ConfigurationError, ShapeError, PreconditionError) as err:
        logger.error("%s: %s", type(err).__name__, err)
        return EXIT_VALIDATION
    except (DegenerateCrossing, NoDecomposition) as err:
        logger.error("%s: %s", type(err).__name__, err)
        return EXIT_DEGENERATE
    except TDSStabError as err:
        logger.error("%s: %s", type(err).__name__, err)
        return EXIT_NUMERICAL
    except OSError as err:
        logger.error("%s: %s", type(err).__name__, err)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
