"""Command-line interface: rates, coeffs, sigma-local, sigma-integrate, bench.

Configuration comes from an optional JSON file (--config) with sections
geometry / model / params / run; command-line flags override file values.
Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

import numpy as np

from . import cheb2d, kpm, oracle, poles, quadrature
from .confunc import ConductivityParams, decay_rates
from .geometry import ConfigShift, Parallelogram, enumerate_sites, hexagonal_lattice, make_twisted_pair, square_lattice
from .hamiltonian import HamiltonianModel, assemble, rescale, spectral_bounds, velocity
from .poles import ResolventError

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_DEFAULTS = {
    "geometry": {"lattice": "hexagonal", "twist_degrees": 2.5, "interlayer_gap": 1.0},
    "model": {"r_cut": float(np.sqrt(3.0))},
    "params": {"beta": 1.0, "eta": 0.5, "omega": 0.0, "e_fermi": 0.0},
    "run": {"r": 4, "q": 1, "method": "kpm", "eps": 1e-3, "kmax": None,
            "k_poles": None, "group_size": 1, "threads": 1, "layer": 1,
            "b": [0.0, 0.0]},
}


class ConfigError(Exception):
    pass


def _merge(base: dict, override: dict) -> dict:
    out = {k: dict(v) for k, v in base.items()}
    for section, values in override.items():
        if section not in out:
            raise ConfigError(f"unknown config section '{section}'")
        for key, val in values.items():
            if key not in out[section]:
                raise ConfigError(f"unknown config field '{section}.{key}'")
            out[section][key] = val
    return out


def load_config(path: str | None, args) -> dict:
    cfg = {k: dict(v) for k, v in _DEFAULTS.items()}
    if path:
        try:
            with open(path) as fh:
                cfg = _merge(cfg, json.load(fh))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
    flag_map = {
        "beta": ("params", "beta"), "eta": ("params", "eta"),
        "omega": ("params", "omega"), "efermi": ("params", "e_fermi"),
        "r": ("run", "r"), "q": ("run", "q"), "method": ("run", "method"),
        "eps": ("run", "eps"), "kmax": ("run", "kmax"), "k": ("run", "k_poles"),
        "group": ("run", "group_size"), "threads": ("run", "threads"),
        "layer": ("run", "layer"), "lattice": ("geometry", "lattice"),
        "twist": ("geometry", "twist_degrees"), "gap": ("geometry", "interlayer_gap"),
        "rcut": ("model", "r_cut"), "b": ("run", "b"),
    }
    for flag, (section, key) in flag_map.items():
        val = getattr(args, flag, None)
        if val is not None:
            cfg[section][key] = val
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    p = cfg["params"]
    if p["beta"] < 0:
        raise ConfigError("params.beta must be >= 0")
    if p["eta"] <= 0:
        raise ConfigError("params.eta must be > 0")
    run = cfg["run"]
    if run["method"] not in ("kpm", "poles", "exact"):
        raise ConfigError("run.method must be one of kpm|poles|exact")
    for key in ("r", "q", "threads"):
        if int(run[key]) < 1:
            raise ConfigError(f"run.{key} must be >= 1")
    if run["eps"] <= 0:
        raise ConfigError("run.eps must be > 0")
    if run["layer"] not in (1, 2):
        raise ConfigError("run.layer must be 1 or 2")
    if cfg["geometry"]["lattice"] not in ("hexagonal", "square"):
        raise ConfigError("geometry.lattice must be hexagonal|square")
    if cfg["model"]["r_cut"] <= 0:
        raise ConfigError("model.r_cut must be > 0")
    if cfg["run"]["kmax"] is not None and int(cfg["run"]["kmax"]) < 1:
        raise ConfigError("run.kmax must be >= 1")


def _params(cfg) -> ConductivityParams:
    p = cfg["params"]
    return ConductivityParams(p["beta"], p["eta"], p["omega"], p["e_fermi"])


def _geometry(cfg):
    g = cfg["geometry"]
    base = hexagonal_lattice() if g["lattice"] == "hexagonal" else square_lattice()
    return make_twisted_pair(base, g["twist_degrees"], g["interlayer_gap"])


def _emit(text: str, out_path: str | None):
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _complex_pair(z: complex):
    return [float(np.real(z)), float(np.imag(z))]


def _sigma_json(sigma: np.ndarray):
    return [[_complex_pair(sigma[i, j]) for j in range(2)] for i in range(2)]


def cmd_rates(cfg, args) -> dict:
    params = _params(cfg)
    rates = decay_rates(params)
    return {
        "alpha_max": rates.alpha_max,
        "alpha_min": rates.alpha_min,
        "alpha_diag": rates.alpha_diag,
        "alpha_anti": rates.alpha_anti,
        "class": rates.klass.value,
        "x_star": _complex_pair(rates.x_star),
        "lambda": rates.lam,
    }


def cmd_coeffs(cfg, args):
    params = _params(cfg)
    kmax = int(cfg["run"]["kmax"] or cheb2d.DEFAULT_KMAX)
    coeffs = cheb2d.coeffs_of_F(params, kmax)
    norm = np.abs(coeffs) / abs(coeffs[0, 0])
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["k1", "k2", "re", "im", "normalized_abs"])
    for k1 in range(kmax + 1):
        for k2 in range(kmax + 1):
            writer.writerow([k1, k2, coeffs[k1, k2].real, coeffs[k1, k2].imag,
                             norm[k1, k2]])
    summary = {
        "kmax": kmax,
        "c00_abs": float(abs(coeffs[0, 0])),
        "count_above_1e-3": int(np.count_nonzero(norm >= 1e-3)),
        "count_above_1e-6": int(np.count_nonzero(norm >= 1e-6)),
    }
    return buf.getvalue(), summary


def _local_setup(cfg):
    params = _params(cfg)
    geom = _geometry(cfg)
    model = HamiltonianModel(cfg["model"]["r_cut"])
    run = cfg["run"]
    shift = ConfigShift(np.asarray(run["b"], dtype=float), run["layer"])
    sites = enumerate_sites(geom, Parallelogram(int(run["r"])), shift)
    Ht = assemble(sites, model)
    H, _ = rescale(Ht, spectral_bounds(Ht))
    M1 = velocity(H, sites, 1)
    M2 = velocity(H, sites, 2)
    return params, run, H, M1, M2, sites.seed_index


def cmd_sigma_local(cfg, args) -> dict:
    params, run, H, M1, M2, seed = _local_setup(cfg)
    method = run["method"]
    rates = decay_rates(params)
    kmax = int(run["kmax"] or cheb2d.DEFAULT_KMAX)
    if method == "kpm":
        coeffs = cheb2d.coeffs_of_F(params, kmax)
        K, dropped = cheb2d.truncation_set_greedy(coeffs, run["eps"])
        res = kpm.conductivity_tensor(H, M1, M2, coeffs, K, seed,
                                      truncation_mass_dropped=dropped)
        sigma, counters = res.sigma, res.counters
        r_rec = int(np.ceil((K.max_degree_sum() + 2) / 2))
    elif method == "poles":
        plan = poles.build_pole_plan(params, k=run["k_poles"],
                                     group_size=int(run["group_size"]), eps=run["eps"])
        res = poles.pole_conductivity_tensor(H, M1, M2, params, plan, seed)
        sigma, counters = res.sigma, res.counters
        r_rec = int(run["r"])
    else:
        sigma = oracle.local_conductivity_exact_tensor(H, M1, M2, params, seed)
        counters = kpm.OpCounters()
        r_rec = int(run["r"])
    return {
        "sigma": _sigma_json(sigma),
        "counters": counters.as_dict(),
        "rates": {"alpha_diag": rates.alpha_diag, "alpha_anti": rates.alpha_anti,
                  "alpha_max": rates.alpha_max, "alpha_min": rates.alpha_min},
        "class": rates.klass.value,
        "r_recommended": r_rec,
        "params": {"beta": params.beta, "eta": params.eta, "omega": params.omega,
                   "e_fermi": params.e_fermi},
        "r": int(run["r"]),
        "b": list(map(float, run["b"])),
    }


def cmd_sigma_integrate(cfg, args):
    params = _params(cfg)
    geom = _geometry(cfg)
    model = HamiltonianModel(cfg["model"]["r_cut"])
    run = cfg["run"]
    tensor, records = quadrature.conductivity_integral(
        geom, model, params, int(run["r"]), int(run["q"]), method=run["method"],
        eps=run["eps"], kmax=run["kmax"], k_poles=run["k_poles"],
        group_size=int(run["group_size"]), threads=int(run["threads"]))
    doc = {
        "sigma": _sigma_json(tensor.sigma),
        "nu": tensor.nu,
        "q": int(run["q"]),
        "r": int(run["r"]),
        "method": run["method"],
        "nodes": [
            {"layer": rec.layer, "b": list(map(float, rec.shift)),
             "sigma": _sigma_json(rec.sigma), "counters": rec.counters,
             "wall_ms": rec.wall_ms}
            for rec in records
        ],
    }
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["layer", "b1", "b2", "entry", "re", "im"])
    for rec in records:
        for p in (1, 2):
            for qq in (1, 2):
                writer.writerow([rec.layer, rec.shift[0], rec.shift[1],
                                 f"{p}{qq}", rec.sigma[p - 1, qq - 1].real,
                                 rec.sigma[p - 1, qq - 1].imag])
    return doc, buf.getvalue()


def cmd_bench(cfg, args):
    params_base = cfg["params"]
    betas = [float(b) for b in (args.beta_list.split(",") if args.beta_list else [params_base["beta"]])]
    methods = args.methods.split(",") if args.methods else ["kpm", "poles"]
    rows = []
    for beta in betas:
        cfg_b = {k: dict(v) for k, v in cfg.items()}
        cfg_b["params"]["beta"] = beta
        for method in methods:
            cfg_b["run"]["method"] = method
            t0 = time.perf_counter()
            doc = cmd_sigma_local(cfg_b, args)
            wall = (time.perf_counter() - t0) * 1e3
            c = doc["counters"]
            s00 = doc["sigma"][0][0]
            rows.append([method, beta, cfg_b["params"]["eta"],
                         2 * (2 * int(cfg_b["run"]["r"]) + 1) ** 2,
                         c["matvecs"], c["inner_products"], c["resolvent_solves"],
                         f"{wall:.3f}", s00[0], s00[1]])
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["method", "beta", "eta", "n", "matvecs", "inner_products",
                     "solves", "wall_ms", "sigma_re", "sigma_im"])
    writer.writerows(rows)
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moirecond",
                                     description="Twisted-bilayer Kubo conductivity")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None)
        p.add_argument("--beta", type=float, default=None)
        p.add_argument("--eta", type=float, default=None)
        p.add_argument("--omega", type=float, default=None)
        p.add_argument("--efermi", type=float, default=None)
        p.add_argument("--r", type=int, default=None)
        p.add_argument("--q", type=int, default=None)
        p.add_argument("--method", choices=["kpm", "poles", "exact"], default=None)
        p.add_argument("--eps", type=float, default=None)
        p.add_argument("--kmax", type=int, default=None)
        p.add_argument("--k", type=lambda s: None if s == "auto" else int(s),
                       default=None, help="pole count, integer or 'auto'")
        p.add_argument("--group", dest="group", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--layer", type=int, default=None)
        p.add_argument("--lattice", choices=["hexagonal", "square"], default=None)
        p.add_argument("--twist", type=float, default=None)
        p.add_argument("--gap", type=float, default=None)
        p.add_argument("--rcut", type=float, default=None)
        p.add_argument("--b", type=lambda s: [float(t) for t in s.split(",")],
                       default=None, help="shift as 'b1,b2'")
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=["json", "csv"], default="json")

    for name in ("rates", "coeffs", "sigma-local", "sigma-integrate", "bench"):
        p = sub.add_parser(name)
        common(p)
        if name == "bench":
            p.add_argument("--beta-list", default=None)
            p.add_argument("--methods", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "rates":
            _emit(json.dumps(cmd_rates(cfg, args), indent=2) + "\n", args.out)
        elif args.command == "coeffs":
            csv_text, summary = cmd_coeffs(cfg, args)
            if args.out:
                _emit(csv_text, args.out)
                sys.stdout.write(json.dumps(summary, indent=2) + "\n")
            elif args.format == "csv":
                sys.stdout.write(csv_text)
            else:
                sys.stdout.write(json.dumps(summary, indent=2) + "\n")
        elif args.command == "sigma-local":
            _emit(json.dumps(cmd_sigma_local(cfg, args), indent=2) + "\n", args.out)
        elif args.command == "sigma-integrate":
            doc, csv_text = cmd_sigma_integrate(cfg, args)
            if args.format == "csv":
                _emit(csv_text, args.out)
            else:
                _emit(json.dumps(doc, indent=2) + "\n", args.out)
        elif args.command == "bench":
            _emit(cmd_bench(cfg, args), args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResolventError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
