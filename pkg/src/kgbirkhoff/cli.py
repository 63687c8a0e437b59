"""Command line entry point.

One JSON config document drives every subcommand; flags override config
fields.  All artifacts land in the output directory stamped with the tool
version, a hash of the merged config, and the seed, and identical configs
produce byte-identical JSON (sorted keys, no timestamps).

Exit codes: 0 success, 1 validation failure (or failed verification),
2 numeric failure (near-resonant mass, divergence); failures also emit a
machine-readable error JSON on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

from . import __version__
from .acceptance import run_all
from .dynamics import (
    DivergenceError,
    FlowError,
    IntegratorConfig,
    drift_experiment,
    integrate,
    random_unit_state,
)
from .kgmodel import Nonlinearity, PolyHamiltonian, taylor_hamiltonian
from .normalform import NearResonantMassError, birkhoff
from .polyalg import State, poly_from_dict, poly_to_dict
from .spectrum import (
    SphereParams,
    build_sphere_spectrum,
    divisor_bound_scan,
    divisor_scan_rows,
    mass_scan,
)


class ConfigError(ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(message)


DEFAULTS = {
    "manifold": {"d": 1, "m": None, "n_max": 8},
    "nonlinearity": {"f": None, "modulation": {}},
    "normal_form": {"r0": 2},
    "integrator": {"dt": 1e-3, "scheme": "strang-split",
                   "local_tol": 1e-10, "t_end": 10.0},
    "experiment": {"eps": [0.1, 0.05, 0.025], "s": 2.0, "r": 1,
                   "seed": 2024, "observe_every": None,
                   "transform_samples": 160, "amplitude": 0.1},
    "scan": {"k": 2, "ell": 1, "nu_bar": None, "masses": [0.5, 1.0, 1.5],
             "max_rows": 10000},
    "threads": 1,
}


def _merge(base, override):
    out = dict(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(args):
    """Merge defaults, config file, and command line flags; validate."""
    cfg = {k: (dict(v) if isinstance(v, dict) else v)
           for k, v in DEFAULTS.items()}
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError("config", f"config file not found: "
                              f"{args.config}")
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"config is not valid JSON: {e}")
        if not isinstance(user, dict):
            raise ConfigError("config", "config root must be an object")
        cfg = _merge(cfg, user)
    for flag, path in (("d", ("manifold", "d")), ("m", ("manifold", "m")),
                       ("n_max", ("manifold", "n_max")),
                       ("seed", ("experiment", "seed")),
                       ("threads", ("threads",))):
        val = getattr(args, flag, None)
        if val is not None:
            node = cfg
            for p in path[:-1]:
                node = node[p]
            node[path[-1]] = val
    if getattr(args, "f", None):
        cfg["nonlinearity"]["f"] = _parse_nonlinearity_flag(args.f)
    _validate(cfg)
    return cfg


def _parse_nonlinearity_flag(text):
    # "3:1.0,4:0.5" -> [[3, 1.0], [4, 0.5]]
    table = []
    for chunk in text.split(","):
        try:
            p, a = chunk.split(":")
            table.append([int(p), float(a)])
        except ValueError:
            raise ConfigError("nonlinearity.f",
                              f"cannot parse term {chunk!r}; use p:a_p")
    return table


def _validate(cfg):
    man = cfg["manifold"]
    if man.get("m") is None:
        raise ConfigError("manifold.m", "mass m is required (no default)")
    if not float(man["m"]) > 0:
        raise ConfigError("manifold.m", "mass m must be > 0")
    if int(man.get("d", 1)) < 1:
        raise ConfigError("manifold.d", "dimension d must be >= 1")
    if int(man.get("n_max", 0)) < 1:
        raise ConfigError("manifold.n_max", "n_max must be >= 1")
    integ = cfg["integrator"]
    if float(integ["dt"]) <= 0:
        raise ConfigError("integrator.dt", "dt must be > 0")
    if integ["scheme"] not in ("strang-split", "rk-adaptive"):
        raise ConfigError("integrator.scheme",
                          "scheme must be strang-split or rk-adaptive")
    exp = cfg["experiment"]
    if len(exp["eps"]) < 1 or any(not e > 0 for e in exp["eps"]):
        raise ConfigError("experiment.eps", "eps grid must be positive")
    if int(cfg["normal_form"]["r0"]) < 1:
        raise ConfigError("normal_form.r0", "r0 must be >= 1")


def _require_nonlinearity(cfg):
    table = cfg["nonlinearity"].get("f")
    if not table:
        raise ConfigError("nonlinearity.f",
                          "nonlinearity table is required (no default)")
    nl = Nonlinearity.from_table(table)
    mod = cfg["nonlinearity"].get("modulation") or {}
    if mod:
        parsed = {int(p): {int(h): complex(c[0], c[1])
                           for h, c in table_p.items()}
                  for p, table_p in mod.items()}
        nl = Nonlinearity(nl.coefficients, parsed)
    return nl


def config_hash(cfg):
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _spectrum(cfg):
    man = cfg["manifold"]
    return build_sphere_spectrum(
        SphereParams(d=int(man["d"]), m=float(man["m"])),
        int(man["n_max"]))


class Workspace:
    def __init__(self, cfg, out_dir):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.stamp = {"tool_version": __version__,
                      "config_hash": config_hash(cfg),
                      "seed": cfg["experiment"]["seed"]}

    def write_json(self, name, payload):
        doc = {**self.stamp, **payload}
        path = self.out / name
        path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
        return path

    def write_csv(self, name, header, rows):
        path = self.out / name
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        return path


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_spectrum(ws, args):
    spec = _spectrum(ws.cfg)
    rows = []
    prev = None
    for n in spec.clusters():
        lam = math.sqrt(n * (n + spec.params.d - 1))
        gap = spec.omega[n] - prev if prev is not None else ""
        rows.append([n, lam, spec.omega[n],
                     len(spec.modes_in_cluster(n)), gap])
        prev = spec.omega[n]
    ws.write_csv("spectrum.csv",
                 ["n", "lambda_n", "omega_n", "multiplicity", "gap"], rows)
    cp = spec.cluster_params
    gaps = [spec.omega[n + 1] - spec.omega[n]
            for n in range(1, spec.n_max)]
    ws.write_json("spectrum.json", {
        "d": spec.params.d, "m": spec.params.m, "n_max": spec.n_max,
        "cluster_params": {"tau": cp.tau, "alpha": cp.alpha, "c0": cp.c0,
                           "delta": cp.delta, "C0": cp.C0, "D": cp.D,
                           "n0": cp.n0},
        "omega_monotone": all(g > 0 for g in gaps),
        "max_gap_defect": max((abs(g - 2 * math.pi / cp.tau)
                               for g in gaps), default=0.0),
    })
    return 0


def cmd_divisor_scan(ws, args):
    cfg = ws.cfg
    spec = _spectrum(cfg)
    k = int(cfg["scan"]["k"])
    ell = int(cfg["scan"]["ell"]) if args.ell is None else args.ell
    nu_bar = cfg["scan"]["nu_bar"]
    nu_bar = float(nu_bar) if nu_bar is not None else float(k + 2)
    rep = divisor_bound_scan(spec, k, ell, nu_bar)
    rows = divisor_scan_rows(spec, k, ell, nu_bar,
                             max_rows=int(cfg["scan"]["max_rows"]))
    ws.write_csv("divisor_scan.csv", ["tuple", "divisor", "mu", "weighted"],
                 [[_tuple_str(plus, minus), d, mu, w]
                  for plus, minus, d, mu, w in rows])
    ws.write_json("divisor_scan.json", {
        "k": k, "ell": ell, "nu_bar": nu_bar, "n_max": spec.n_max,
        "n_tuples": rep.n_tuples,
        "min": rep.min_weighted,
        "argmin": {"plus": list(rep.argmin[0]), "minus": list(rep.argmin[1]),
                   "divisor": rep.argmin_divisor, "mu": rep.argmin_mu}
        if rep.argmin else None,
        "histogram": rep.histogram,
        "flagged": [{**f, "plus": list(f["plus"]),
                     "minus": list(f["minus"])} for f in rep.flagged],
    })
    return 0


def _tuple_str(plus, minus):
    return ",".join(map(str, plus)) + "|" + ",".join(map(str, minus))


def cmd_mass_scan(ws, args):
    cfg = ws.cfg
    k = int(cfg["scan"]["k"])
    nu_bar = cfg["scan"]["nu_bar"]
    nu_bar = float(nu_bar) if nu_bar is not None else float(k + 2)
    masses = cfg["scan"]["masses"]
    rows = mass_scan(int(cfg["manifold"]["d"]), k, masses,
                     int(cfg["manifold"]["n_max"]), nu_bar)
    ws.write_csv("mass_scan.csv", ["m", "divisor", "mu", "weighted"],
                 [[r["m"], r["divisor"], r["mu"], r["c"]] for r in rows])
    ws.write_json("mass_scan.json", {
        "k": k, "nu_bar": nu_bar, "n_max": int(cfg["manifold"]["n_max"]),
        "results": [{"m": r["m"], "c": r["c"], "ell": r["ell"],
                     "argmin": ([list(r["argmin"][0]),
                                 list(r["argmin"][1])]
                                if r["argmin"] else None),
                     "n_flagged": len(r["flagged"])} for r in rows],
    })
    return 0


def cmd_hamiltonian(ws, args):
    cfg = ws.cfg
    spec = _spectrum(cfg)
    nl = _require_nonlinearity(cfg)
    max_degree = int(cfg["normal_form"]["r0"]) + 2
    ham = taylor_hamiltonian(nl, spec, max_degree=max_degree)
    ws.write_json("hamiltonian.json", {
        "manifold": cfg["manifold"],
        "nonlinearity": cfg["nonlinearity"],
        "max_degree": max_degree,
        "parts": [poly_to_dict(p) for p in ham.parts],
    })
    return 0


def _load_or_build_hamiltonian(ws, args):
    cfg = ws.cfg
    spec = _spectrum(cfg)
    if getattr(args, "hamiltonian", None):
        doc = json.loads(Path(args.hamiltonian).read_text())
        parts = [poly_from_dict(p) for p in doc["parts"]]
        return PolyHamiltonian(spec=spec, parts=parts)
    nl = _require_nonlinearity(cfg)
    max_degree = int(cfg["normal_form"]["r0"]) + 2
    return taylor_hamiltonian(nl, spec, max_degree=max_degree)


def cmd_normalform(ws, args):
    cfg = ws.cfg
    ham = _load_or_build_hamiltonian(ws, args)
    nf = birkhoff(ham.parts, ham.spec, r0=int(cfg["normal_form"]["r0"]))
    ws.write_json("normalform.json", {
        "r0": nf.r0,
        "dropped_degree": nf.dropped_degree,
        "z_parts": [poly_to_dict(p) for p in nf.z_parts],
        "generators": [poly_to_dict(p) for p in nf.generators],
        "diagnostics": [{"step": d.step, "degree": d.degree,
                         "residual": d.residual,
                         "min_divisor_used": d.min_divisor_used,
                         "max_divisor_used": d.max_divisor_used,
                         "generator_terms": d.generator_terms,
                         "normalized_terms": d.normalized_terms}
                        for d in nf.diagnostics],
    })
    return 0


def cmd_simulate(ws, args):
    cfg = ws.cfg
    ham = _load_or_build_hamiltonian(ws, args)
    spec = ham.spec
    exp = cfg["experiment"]
    integ = cfg["integrator"]
    icfg = IntegratorConfig(dt=float(integ["dt"]),
                            t_end=float(integ["t_end"]),
                            scheme=integ["scheme"],
                            local_tol=float(integ["local_tol"]))
    unit = random_unit_state(spec, float(exp["s"]), int(exp["seed"]))
    amp = float(exp.get("amplitude", 0.1))
    u0 = State({m: amp * c for m, c in unit.amplitudes.items()})
    obs = exp.get("observe_every") or max(
        1, int(round(0.01 / float(integ["dt"]))))
    traj = integrate(u0, ham, icfg, observe_every=int(obs),
                     s=float(exp["s"]))
    header = ["t", "G", "E"] + [f"J_{n}" for n in spec.clusters()]
    rows = [[traj.times[i], traj.hamiltonian[i], traj.energy[i],
             *traj.actions[i]] for i in range(len(traj.times))]
    ws.write_csv("trajectory.csv", header, rows)
    ws.write_json("simulate.json", {
        "amplitude": amp, "s": exp["s"], "t_end": icfg.t_end,
        "dt": icfg.dt, "scheme": icfg.scheme,
        "energy_drift": traj.energy_drift(),
        "n_samples": len(traj.times),
    })
    return 0


def cmd_drift_scan(ws, args):
    cfg = ws.cfg
    ham = _load_or_build_hamiltonian(ws, args)
    exp = cfg["experiment"]
    integ = cfg["integrator"]
    nf = birkhoff(ham.parts, ham.spec, r0=int(cfg["normal_form"]["r0"]))
    icfg = IntegratorConfig(dt=float(integ["dt"]), t_end=1.0,
                            scheme=integ["scheme"],
                            local_tol=float(integ["local_tol"]))
    table = drift_experiment(
        ham, nf, [float(e) for e in exp["eps"]], r=int(exp["r"]),
        s=float(exp["s"]), cfg=icfg, seed=int(exp["seed"]),
        transform_samples=int(exp["transform_samples"]))
    ws.write_csv("drift.csv",
                 ["eps", "t_end", "raw_drift", "transformed_drift",
                  "raw_bound_ok", "max_energy_increment"],
                 [[r.eps, r.t_end, r.raw_drift, r.transformed_drift,
                   r.raw_bound_ok, r.max_energy_increment]
                  for r in table.rows])
    ws.write_json("drift.json", {
        "r": table.r, "s": table.s,
        "raw_exponent": table.raw_exponent,
        "raw_constant": table.raw_constant,
        "transformed_exponent": table.transformed_exponent,
        "transformed_constant": table.transformed_constant,
        "rows": [{"eps": r.eps, "raw_drift": r.raw_drift,
                  "transformed_drift": r.transformed_drift,
                  "raw_bound_ok": r.raw_bound_ok} for r in table.rows],
    })
    return 0


def cmd_verify(ws, args):
    indices = set(args.only) if args.only else None
    results = run_all(indices=indices)
    ws.write_json("verify.json", {
        "results": [{"index": r.index, "name": r.name, "passed": r.passed,
                     "elapsed_s": round(r.elapsed, 2),
                     "details": {k: (v if not isinstance(v, float)
                                     else float(f"{v:.6g}"))
                                 for k, v in r.details.items()
                                 if not isinstance(v, list)}}
                    for r in results],
        "all_passed": all(r.passed for r in results),
    })
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "spectrum": cmd_spectrum,
    "divisor-scan": cmd_divisor_scan,
    "mass-scan": cmd_mass_scan,
    "hamiltonian": cmd_hamiltonian,
    "normalform": cmd_normalform,
    "simulate": cmd_simulate,
    "drift-scan": cmd_drift_scan,
    "verify": cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kgbirkhoff",
        description="Birkhoff normal forms for truncated Klein-Gordon "
                    "equations on spheres")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None,
                       help="reserved; computations are single-process")
        p.add_argument("--d", type=int, default=None)
        p.add_argument("--m", type=float, default=None)
        p.add_argument("--n-max", dest="n_max", type=int, default=None)
        p.add_argument("--f", help="nonlinearity table, e.g. 3:1.0,4:0.5")
        if name in ("normalform", "simulate", "drift-scan"):
            p.add_argument("--hamiltonian",
                           help="Hamiltonian JSON (skips assembly)")
        if name == "divisor-scan":
            p.add_argument("--ell", type=int, default=None)
        if name == "verify":
            p.add_argument("--only", type=int, nargs="*",
                           help="criterion indices to run")
    return parser


def _error_json(kind, message, field=None):
    doc = {"error": {"type": kind, "message": message}}
    if field:
        doc["error"]["field"] = field
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as e:
        _error_json("validation", str(e), e.field)
        return 1
    ws = Workspace(cfg, args.out)
    try:
        return COMMANDS[args.command](ws, args)
    except ConfigError as e:
        _error_json("validation", str(e), e.field)
        return 1
    except (ValueError, KeyError) as e:
        _error_json("validation", str(e))
        return 1
    except NearResonantMassError as e:
        _error_json("near-resonant-mass", str(e))
        return 2
    except (DivergenceError, FlowError) as e:
        _error_json("numeric", str(e))
        return 2


if __name__ == "__main__":
    sys.exit(main())
