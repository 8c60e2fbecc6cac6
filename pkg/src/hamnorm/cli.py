"""Batch driver: load inputs, run normalizations, emit series files, norm
histories, section data and summary tables.

Usage::

    hamnorm COMMAND [--config PATH] [--out DIR] [--jobs N] [--print-defaults]

Commands: ``kolmogorov``, ``elliptic``, ``secular``, ``pipeline``,
``poincare``, ``selftest``.  Each command reads one human-editable JSON
config file (``--print-defaults`` shows the full default block) and writes
its outputs under ``--out`` (default: current directory).  All outputs are
deterministic: identical config and inputs give byte-identical files.  Plot
emission is data-only (CSV with named columns); rendering is left to
external tools.

Exit codes
----------
0   success
2   configuration error (unknown keys, out-of-range values, bad JSON)
3   I/O error (missing or unreadable input files)
4   small divisor below the non-resonance floor
5   numeric failure (lost contraction, residual gate, domain errors)

``--jobs N`` (or the ``HAMNORM_JOBS`` environment variable) parallelizes
independent scan points only (the ``poincare`` command's initial conditions);
it never changes any numeric result.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from multiprocessing import Pool

import numpy as np

from . import benchmarks
from .elliptic import MelnikovParams, build_elliptic_state, normalize_elliptic
from .flows import (
    PhasePoint,
    SectionSpec,
    orbit_discrepancy,
    poincare_sections,
    rk4_integrate,
    semi_analytic_orbit,
)
from .io import (
    load_elements,
    load_pert_grid,
    load_series,
    save_series,
    save_state,
    write_history_csv,
    write_section_csv,
)
from .kolmogorov import (
    DiophantineParams,
    SmallDivisorError,
    build_state,
    normalize,
    torus_map,
)
from .secular import (
    average_order2,
    chart_cascade,
    compute_D2,
    elements_to_poincare,
    find_periodic_section_point,
    modulus_from_mutual_inclination,
    mutual_inclination,
    poincare_from_resonant,
    refine_Istar,
    seed_kam,
)
from .series import Signature, norm

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SMALL_DIVISOR = 4
EXIT_NUMERIC = 5

_SQRT2 = math.sqrt(2.0)


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


DEFAULTS = {
    "kolmogorov": {
        "input": None,          # series file; null -> bundled 2-DOF benchmark
        "benchmark": {"eps": 1e-3, "R": 10},
        "steps": 10,
        "divisor_floor": None,
    },
    "elliptic": {
        "input": None,          # series file; null -> bundled n1=1,n2=2 benchmark
        "benchmark": {"eps": 1e-3, "R": 8},
        "steps": 8,
        "divisor_floor": None,
    },
    "secular": {
        "elements": None,       # element file; null -> bundled fixture
        "pert_grid": None,      # grid file; null -> bundled fixture
        "K_F": 9,
        "N_S": 8,
        "center": {             # periodic-point centering on the section
            "mode": "search",   # "search" or "fixed"
            "amplitude": 0.3,
            "aligned": True,
            "tol": 1e-9,
            "n_crossings": 16,
            "x1_star": None,    # used when mode = "fixed"
            "x2_star": None,
        },
        "cascade": {"ell_max": 16, "trig_max": 40, "K": 2, "drop_eps": 1e-22},
    },
    "pipeline": {
        "elements": None,
        "pert_grid": None,
        "K_F": 9,
        "N_S": 8,
        "center": {
            "mode": "search",
            "amplitude": 0.3,
            "aligned": True,
            "tol": 1e-8,
            "n_crossings": 8,
            "x1_star": None,
            "x2_star": None,
        },
        "cascade": {"ell_max": 8, "trig_max": 16, "K": 2, "drop_eps": 1e-22},
        "steps_elliptic": 6,
        "steps_kam": 5,
        "refine_energy": {"enabled": True, "tol": 1e-9, "max_iter": 6},
        "J_star": 1e-4,
        "kam_ell_max": 8,
        "divisor_floor": None,
        "orbit": {"n_periods": 10, "samples": 200},
    },
    "poincare": {
        "hamiltonian": None,    # secular series file; null -> bundled fixture
        "points": [[0.05, 0.3], [0.10605002389513268, 0.29998922799478955]],
        "n_crossings": 100,
        "dt": None,
        "tol_budget": 2_000_000,
    },
    "selftest": {},
}


def _merge(defaults, user, path="config"):
    """Deep merge with unknown-key rejection."""
    if not isinstance(user, dict):
        raise ConfigError(f"{path} must be a JSON object")
    out = dict(defaults)
    for key, val in user.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {path}.{key}")
        if isinstance(defaults[key], dict) and defaults[key]:
            out[key] = _merge(defaults[key], val, f"{path}.{key}")
        else:
            out[key] = val
    return out


def _load_config(command, path):
    if path is None:
        return dict(DEFAULTS[command])
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return _merge(DEFAULTS[command], user)


def _require_file(path, what):
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _write_rows_csv(path, rows):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        for key, val in rows:
            w.writerow([key, repr(float(val)) if isinstance(val, float) else val])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_kolmogorov(cfg, out, jobs=1):
    if int(cfg["steps"]) < 0:
        raise ConfigError("steps must be >= 0")
    if cfg["input"] is not None:
        H = load_series(_require_file(cfg["input"], "input series"))
    else:
        H, _ = benchmarks.kolmogorov_benchmark(**cfg["benchmark"])
    state = build_state(H)
    dio = DiophantineParams(divisor_floor=cfg["divisor_floor"])
    state, hist = normalize(state, int(cfg["steps"]), dio)
    save_state(os.path.join(out, "state.json"), state)
    save_series(os.path.join(out, "hamiltonian.json"), state.hamiltonian())
    write_history_csv(os.path.join(out, "history.csv"), hist)
    return EXIT_OK


def cmd_elliptic(cfg, out, jobs=1):
    if int(cfg["steps"]) < 0:
        raise ConfigError("steps must be >= 0")
    if cfg["input"] is not None:
        H = load_series(_require_file(cfg["input"], "input series"))
    else:
        H, _ = benchmarks.elliptic_benchmark(**cfg["benchmark"])
    state = build_elliptic_state(H)
    mel = MelnikovParams(divisor_floor=cfg["divisor_floor"])
    state, hist = normalize_elliptic(state, int(cfg["steps"]), mel)
    save_state(os.path.join(out, "state.json"), state)
    save_series(os.path.join(out, "hamiltonian.json"), state.hamiltonian())
    write_history_csv(os.path.join(out, "history.csv"), hist)
    return EXIT_OK


def _secular_stage(cfg):
    """Shared front end: elements + grid -> (H_sec, rows of diagnostics)."""
    if cfg["elements"] is not None:
        el = load_elements(_require_file(cfg["elements"], "element file"))
    else:
        el = benchmarks.hd4732_like_elements()
    if cfg["pert_grid"] is not None:
        grid, meta = load_pert_grid(_require_file(cfg["pert_grid"], "grid file"))
        if meta["h_kep2"] is None:
            raise ConfigError("perturbation grid file lacks the h_kep2 block")
        h_kep2, nstar, mu = meta["h_kep2"], meta["nstar"], meta["mu"]
    else:
        h_kep2, grid, nstar, mu = benchmarks.hd4732_like_pert_grid()

    Lam, _, xi, eta = elements_to_poincare(el)
    imut = mutual_inclination(
        el.iota[0], el.iota[1], el.Omega_node[1] - el.Omega_node[0]
    )
    C = modulus_from_mutual_inclination(Lam, el.e, imut)
    D2 = compute_D2(Lam, C)
    H_sec = average_order2(
        h_kep2, grid, nstar, mu, K_F=int(cfg["K_F"]), N_S=int(cfg["N_S"]), D2=D2
    )
    rows = [
        ("i_mut_deg", imut),
        ("C", C),
        ("D2", D2),
        ("Lambda_1", float(Lam[0])),
        ("Lambda_2", float(Lam[1])),
        ("hsec_terms", len(H_sec.coeffs)),
        ("hsec_norm", norm(H_sec)),
    ]
    return H_sec, rows


def _center_on_section(H_sec, center_cfg):
    mode = center_cfg.get("mode", "search")
    if mode == "fixed":
        x1s = center_cfg.get("x1_star")
        x2s = center_cfg.get("x2_star")
        if x1s is None or x2s is None:
            raise ConfigError("center.mode = fixed needs x1_star and x2_star")
        xi, eta = poincare_from_resonant(float(x1s), 0.0, float(x2s), 0.0)
        energy = H_sec.evaluate_complex(z=(xi + 1j * eta) / _SQRT2).real
        return float(x1s), float(x2s), {"energy": energy, "spreads": []}
    if mode != "search":
        raise ConfigError(f"unknown center.mode {mode!r}")
    x_init = benchmarks.mode_section_start(
        H_sec, float(center_cfg["amplitude"]), bool(center_cfg["aligned"])
    )
    return find_periodic_section_point(
        H_sec, x_init, tol=float(center_cfg["tol"]),
        n_crossings=int(center_cfg["n_crossings"]),
    )


def cmd_secular(cfg, out, jobs=1):
    H_sec, rows = _secular_stage(cfg)
    x1s, x2s, info = _center_on_section(H_sec, cfg["center"])
    I_star = 0.5 * (x1s**2 + x2s**2)
    H0, chart = chart_cascade(H_sec, I_star, x1s, **cfg["cascade"])
    save_series(os.path.join(out, "hsec.json"), H_sec)
    save_series(os.path.join(out, "h0.json"), H0)
    rows += [
        ("x1_star", x1s),
        ("x2_star", x2s),
        ("I_star", I_star),
        ("section_energy", info["energy"]),
        ("chart_a", chart.a),
        ("chart_b", chart.b),
        ("Omega0", chart.Omega0),
        ("h0_terms", len(H0.coeffs)),
    ]
    _write_rows_csv(os.path.join(out, "summary.csv"), rows)
    return EXIT_OK


def cmd_pipeline(cfg, out, jobs=1):
    H_sec, rows = _secular_stage(cfg)
    x1s, x2s, info = _center_on_section(H_sec, cfg["center"])
    I_star = 0.5 * (x1s**2 + x2s**2)
    E_target = info["energy"]
    rows += [("x1_star", x1s), ("x2_star", x2s), ("section_energy", E_target)]

    R_e = int(cfg["steps_elliptic"])
    mel = MelnikovParams(divisor_floor=cfg["divisor_floor"])

    def elliptic_at(I):
        H0, chart = chart_cascade(H_sec, I, x1s, **cfg["cascade"])
        st = build_elliptic_state(H0)
        st, hist = normalize_elliptic(st, R_e, mel)
        return st, chart, hist

    ref = cfg["refine_energy"]
    if ref["enabled"]:
        I_star, newton_rows = refine_Istar(
            lambda I: elliptic_at(I)[0].E, I_star, E_target,
            tol=float(ref["tol"]), max_iter=int(ref["max_iter"]),
        )
        rows.append(("newton_iterations", len(newton_rows) - 1))
    est, chart, ehist = elliptic_at(I_star)
    rows += [
        ("I_star", I_star),
        ("Omega0", chart.Omega0),
        ("E_elliptic", est.E),
        ("omega_elliptic", float(est.omega[0])),
        ("Omega_elliptic", float(est.Omega[0])),
        ("final_norm_chi1_elliptic", ehist[-1]["norm_chi1"]),
    ]

    J_star = float(cfg["J_star"])
    seeded, p_star = seed_kam(est, J_star, ell_max=int(cfg["kam_ell_max"]))
    H_seed = seeded.hamiltonian()
    dio = DiophantineParams(divisor_floor=cfg["divisor_floor"])
    kst, khist = normalize(seeded, int(cfg["steps_kam"]), dio)
    rows += [
        ("J_star", J_star),
        ("p_star", p_star),
        ("E_kam", kst.E),
        ("omega_kam_1", float(kst.omega[0])),
        ("omega_kam_2", float(kst.omega[1])),
        ("final_norm_chi2_kam", khist[-1]["norm_chi2"]),
    ]

    # semi-analytic torus orbit vs direct integration of the seeded system
    psi = torus_map(kst.log)
    wmin = float(np.min(np.abs(kst.omega)))
    T = float(cfg["orbit"]["n_periods"]) * 2.0 * math.pi / max(wmin, 1e-12)
    n_samp = int(cfg["orbit"]["samples"])
    t_grid = np.linspace(0.0, T, n_samp + 1)
    Q0 = np.zeros(2)
    orbit_nf = semi_analytic_orbit(psi, kst.omega, Q0, t_grid)
    x0 = PhasePoint.from_vec(Signature(2, 0), orbit_nf[0])
    n_rk = 40 * n_samp
    traj = rk4_integrate(H_seed, x0, T / n_rk, n_rk, record_every=40)
    sup, rms = orbit_discrepancy(orbit_nf, traj.states, Signature(2, 0))
    rows += [
        ("orbit_T", T),
        ("orbit_sup_discrepancy", sup),
        ("orbit_rms_discrepancy", rms),
        ("orbit_energy_drift", traj.energy_drift),
    ]

    save_state(os.path.join(out, "elliptic_state.json"), est)
    save_state(os.path.join(out, "kam_state.json"), kst)
    save_series(os.path.join(out, "hsec.json"), H_sec)
    write_history_csv(os.path.join(out, "elliptic_history.csv"), ehist)
    write_history_csv(os.path.join(out, "kam_history.csv"), khist)
    np.savetxt(
        os.path.join(out, "orbit_comparison.csv"),
        np.column_stack([t_grid, orbit_nf, traj.states]),
        delimiter=",", fmt="%.17g",
        header="t,p1_nf,p2_nf,q1_nf,q2_nf,p1_rk4,p2_rk4,q1_rk4,q2_rk4",
        comments="",
    )
    _write_rows_csv(os.path.join(out, "summary.csv"), rows)
    return EXIT_OK


def _one_section(args):
    H_sec, point, n_crossings, dt, max_steps = args
    x1, x2 = (float(v) for v in point)
    xi, eta = poincare_from_resonant(x1, 0.0, x2, 0.0)
    start = PhasePoint(
        np.zeros(0), np.zeros(0), (xi**2 + eta**2) / 2, np.arctan2(eta, xi)
    )
    spec = SectionSpec(coordinate=3, gate_index=1, gate_sign=1)
    pts, times, ok = poincare_sections(
        H_sec, start, spec, n_crossings, dt, max_steps=max_steps
    )
    return pts, times, ok


def cmd_poincare(cfg, out, jobs=1):
    if cfg["hamiltonian"] is not None:
        H_sec = load_series(_require_file(cfg["hamiltonian"], "series file"))
    else:
        H_sec, _ = benchmarks.hd4732_like_hsec()
    if H_sec.sig.n1 != 0 or H_sec.sig.n2 != 2:
        raise ConfigError("poincare expects a secular (0, 2) Hamiltonian")
    dt = cfg["dt"]
    if dt is None:
        quad = [abs(H_sec.coefficient((), (), a=tuple(r), b=tuple(r)))
                for r in np.eye(2, dtype=int)]
        dt = 2.0 * math.pi / (400.0 * max(max(quad), 1e-8))
    tasks = [
        (H_sec, point, int(cfg["n_crossings"]), float(dt),
         int(cfg["tol_budget"]))
        for point in cfg["points"]
    ]
    if jobs > 1:
        with Pool(jobs) as pool:
            results = pool.map(_one_section, tasks)
    else:
        results = [_one_section(t) for t in tasks]
    for i, (pts, times, ok) in enumerate(results):
        if not ok:
            raise ArithmeticError(
                f"section budget exhausted for initial point {i}"
            )
        write_section_csv(
            os.path.join(out, f"section_{i}.csv"), pts, times, H_sec.sig
        )
    return EXIT_OK


def cmd_selftest(cfg, out, jobs=1):
    checks = []

    H, _ = benchmarks.kolmogorov_benchmark(eps=1e-3, R=3)
    st, hist = normalize(build_state(H), 3, DiophantineParams())
    ok = all(
        cell.norm() < 1e-14 * norm(st.hamiltonian())
        for (ell, s), cell in st.grid.items()
        if ell <= 1 and 1 <= s <= 3
    )
    checks.append(("kolmogorov annihilation (3 steps)", ok))

    H, _ = benchmarks.elliptic_benchmark(eps=1e-3, R=2)
    est, _ = normalize_elliptic(build_elliptic_state(H), 2, MelnikovParams())
    ok = all(
        cell.norm() < 1e-14 * norm(est.hamiltonian())
        for (ell, s), cell in est.grid.items()
        if ell <= 2 and 1 <= s <= 2
    )
    checks.append(("elliptic annihilation (2 steps)", ok))

    h_kep2, grid, nstar, mu = benchmarks.secular_oracle_toy()
    outv = average_order2(h_kep2, grid, nstar, mu)
    expected = 0.7 * (mu * 0.3) ** 2 / (2.0 * nstar[0] ** 2)
    got = outv.coefficient((), ()).real
    checks.append(
        ("order-two averaging toy", abs(got - expected) <= 1e-12 * expected)
    )

    el = benchmarks.hd4732_like_elements()
    imut = mutual_inclination(
        el.iota[0], el.iota[1], el.Omega_node[1] - el.Omega_node[0]
    )
    checks.append(("mutual inclination fixture", abs(imut - 2.0) < 1e-9))

    failed = [name for name, ok in checks if not ok]
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    if failed:
        raise ArithmeticError(f"selftest failures: {', '.join(failed)}")
    return EXIT_OK


COMMANDS = {
    "kolmogorov": cmd_kolmogorov,
    "elliptic": cmd_elliptic,
    "secular": cmd_secular,
    "pipeline": cmd_pipeline,
    "poincare": cmd_poincare,
    "selftest": cmd_selftest,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hamnorm",
        description="Hamiltonian normal-form batch driver",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument(
        "--jobs", type=int,
        default=int(os.environ.get("HAMNORM_JOBS", "1")),
        help="parallel workers for independent scan points",
    )
    parser.add_argument(
        "--print-defaults", action="store_true",
        help="print the command's default config block and exit",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.print_defaults:
        json.dump(DEFAULTS[args.command], sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")
        return EXIT_OK
    try:
        cfg = _load_config(args.command, args.config)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SmallDivisorError as exc:
        print(f"small divisor: {exc}", file=sys.stderr)
        return EXIT_SMALL_DIVISOR
    except (ArithmeticError, ValueError, ZeroDivisionError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
