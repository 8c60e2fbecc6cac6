"""Serialization: the series exchange format, state files, and CSV emission.

A series file is a JSON document with a header fixing the signature and the
truncation policy (``n1, n2, K, ell_max, trig_max``) and one record per term
carrying the integer exponents ``m, k, a, b`` and the coefficient as two
decimal fields ``re, im`` written with :func:`repr` (shortest round-trip
representation, exact on reload).  Files contain no timestamps so identical
runs produce byte-identical outputs.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .series import PoissonSeries, Signature, TruncationPolicy

__all__ = [
    "series_to_dict",
    "series_from_dict",
    "save_series",
    "load_series",
    "save_state",
    "load_state",
    "save_pert_grid",
    "load_pert_grid",
    "save_elements",
    "load_elements",
    "write_history_csv",
    "write_section_csv",
]

_FORMAT = "hamnorm-series-1"


def series_to_dict(f: PoissonSeries) -> dict:
    sig, pol = f.sig, f.policy
    n1, n2 = sig.n1, sig.n2
    terms = []
    for key, c in f.items():
        terms.append(
            {
                "m": list(key.m),
                "k": list(key.k),
                "a": list(key.a),
                "b": list(key.b),
                "re": repr(float(c.real)),
                "im": repr(float(c.imag)),
            }
        )
    return {
        "format": _FORMAT,
        "n1": n1,
        "n2": n2,
        "K": pol.K,
        "ell_max": pol.ell_max,
        "trig_max": pol.trig_max,
        "terms": terms,
    }


def series_from_dict(d: dict) -> PoissonSeries:
    if d.get("format") != _FORMAT:
        raise ValueError(f"not a series file (format={d.get('format')!r})")
    sig = Signature(int(d["n1"]), int(d["n2"]))
    pol = TruncationPolicy(
        ell_max=int(d["ell_max"]), trig_max=int(d["trig_max"]), K=int(d["K"])
    )
    terms = [
        (
            tuple(t["m"]),
            tuple(t["k"]),
            tuple(t["a"]),
            tuple(t["b"]),
            complex(float(t["re"]), float(t["im"])),
        )
        for t in d["terms"]
    ]
    return PoissonSeries.from_terms(sig, pol, terms)


def save_series(path, f: PoissonSeries):
    with open(path, "w") as fh:
        json.dump(series_to_dict(f), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_series(path) -> PoissonSeries:
    with open(path) as fh:
        return series_from_dict(json.load(fh))


def save_state(path, state):
    """Persist a Kolmogorov or elliptic normalization state (detected by the
    presence of an Omega vector) with its generating-function log."""
    doc = {
        "format": "hamnorm-state-1",
        "kind": "elliptic" if hasattr(state, "Omega") else "kolmogorov",
        "E": repr(float(state.E)),
        "omega": [repr(float(w)) for w in state.omega],
        "step": state.step,
        "cells": [
            {"ell": ell, "s": s, "series": series_to_dict(cell)}
            for (ell, s), cell in sorted(state.grid.items())
        ],
        "log": [
            {"r": r, "kind": kind, "series": series_to_dict(chi)}
            for (r, kind, chi) in state.log
        ],
    }
    if hasattr(state, "Omega"):
        doc["Omega"] = [repr(float(w)) for w in state.Omega]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_state(path):
    from .elliptic import EllipticState
    from .kolmogorov import KolmogorovState
    from .series import ClassGrid

    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "hamnorm-state-1":
        raise ValueError("not a state file")
    cells = [
        (c["ell"], c["s"], series_from_dict(c["series"])) for c in doc["cells"]
    ]
    log = [(e["r"], e["kind"], series_from_dict(e["series"])) for e in doc["log"]]
    if cells:
        sig, pol = cells[0][2].sig, cells[0][2].policy
    elif log:
        sig, pol = log[0][2].sig, log[0][2].policy
    else:
        raise ValueError("state file has neither grid cells nor a log")
    grid = ClassGrid(sig, pol)
    for ell, s, cell in cells:
        grid.put(ell, s, cell)
    E = float(doc["E"])
    omega = np.array([float(w) for w in doc["omega"]])
    if doc["kind"] == "elliptic":
        Omega = np.array([float(w) for w in doc["Omega"]])
        return EllipticState(E, omega, Omega, grid, log, doc["step"])
    return KolmogorovState(E, omega, grid, log, doc["step"])


def save_pert_grid(path, grid, nstar, mu, h_kep2=None, extras=None):
    """Persist a perturbation grid: series indexed by ``(s, j1, j2)`` (the
    power of the angular-momentum-deficit parameter, the degree in the fast
    actions and the degree in the secular pair), plus the fast frequencies
    ``nstar``, the mass parameter ``mu`` and optionally the quadratic
    Keplerian part."""
    doc = {
        "format": "hamnorm-pertgrid-1",
        "nstar": [repr(float(w)) for w in nstar],
        "mu": repr(float(mu)),
        "entries": [
            {"s": s, "j1": j1, "j2": j2, "series": series_to_dict(h)}
            for (s, j1, j2), h in sorted(grid.items())
        ],
    }
    if h_kep2 is not None:
        doc["h_kep2"] = series_to_dict(h_kep2)
    if extras:
        doc["extras"] = extras
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_pert_grid(path):
    """Returns ``(grid, meta)`` with ``meta`` carrying ``nstar``, ``mu``,
    ``h_kep2`` (or None) and any extras."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "hamnorm-pertgrid-1":
        raise ValueError("not a perturbation-grid file")
    grid = {
        (e["s"], e["j1"], e["j2"]): series_from_dict(e["series"])
        for e in doc["entries"]
    }
    meta = {
        "nstar": np.array([float(w) for w in doc["nstar"]]),
        "mu": float(doc["mu"]),
        "h_kep2": series_from_dict(doc["h_kep2"]) if "h_kep2" in doc else None,
        "extras": doc.get("extras", {}),
    }
    return grid, meta


def save_elements(path, el, units=None):
    """Persist an orbital-element set; angles in degrees, unit system
    declared in the header (default AU / yr / solar masses)."""
    doc = {
        "format": "hamnorm-elements-1",
        "units": units or {"length": "AU", "time": "yr", "mass": "Msun"},
        "G": repr(float(el.G)),
        "m0": repr(float(el.m0)),
        "m": [repr(float(x)) for x in el.m],
        "a": [repr(float(x)) for x in el.a],
        "e": [repr(float(x)) for x in el.e],
        "iota_deg": [repr(float(x)) for x in el.iota],
        "M_deg": [repr(float(x)) for x in el.M],
        "omega_peri_deg": [repr(float(x)) for x in el.omega_peri],
        "Omega_node_deg": [repr(float(x)) for x in el.Omega_node],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_elements(path):
    from .secular import OrbitalElements

    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "hamnorm-elements-1":
        raise ValueError("not an orbital-element file")

    def arr(key):
        return [float(x) for x in doc[key]]

    return OrbitalElements(
        m0=float(doc["m0"]), m=arr("m"), a=arr("a"), e=arr("e"),
        iota=arr("iota_deg"), M=arr("M_deg"),
        omega_peri=arr("omega_peri_deg"), Omega_node=arr("Omega_node_deg"),
        G=float(doc["G"]),
    )


def _flatten_row(row: dict) -> dict:
    out = {}
    for key, val in row.items():
        if isinstance(val, np.ndarray):
            for i, x in enumerate(val):
                out[f"{key}_{i}"] = repr(float(x))
        elif isinstance(val, float):
            out[key] = repr(val)
        else:
            out[key] = val
    return out


def write_history_csv(path, rows):
    """Norm-history CSV: one row per normalization step; vector-valued
    entries expand to indexed columns."""
    flat = [_flatten_row(r) for r in rows]
    cols = list(flat[0]) if flat else ["r"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in flat:
            w.writerow(r)


def write_section_csv(path, points, times, sig: Signature):
    """Poincare-section CSV: crossing time plus the full state in the
    ``[p, q, x, y]`` layout, with named coordinate columns."""
    names = (
        [f"p{i+1}" for i in range(sig.n1)]
        + [f"q{i+1}" for i in range(sig.n1)]
        + [f"x{i+1}" for i in range(sig.n2)]
        + [f"y{i+1}" for i in range(sig.n2)]
    )
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + names)
        for t, row in zip(times, points):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])
