import numpy as np

from hamnorm.benchmarks import elliptic_benchmark, kolmogorov_benchmark
from hamnorm.elliptic import MelnikovParams, build_elliptic_state, normalize_elliptic
from hamnorm.io import (
    load_series,
    load_state,
    save_series,
    save_state,
    write_history_csv,
    write_section_csv,
)
from hamnorm.kolmogorov import DiophantineParams, build_state, normalize
from hamnorm.series import PoissonSeries, Signature, TruncationPolicy, norm


def test_series_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(3)
    sig = Signature(1, 2)
    pol = TruncationPolicy(ell_max=4, trig_max=6, K=2)
    terms = []
    for _ in range(40):
        m = (int(rng.integers(0, 2)),)
        k = (int(rng.integers(-3, 4)),)
        a = tuple(int(x) for x in rng.integers(0, 2, 2))
        b = tuple(int(x) for x in rng.integers(0, 2, 2))
        terms.append((m, k, a, b, complex(rng.normal(), rng.normal())))
    f = PoissonSeries.from_terms(sig, pol, terms)
    path = tmp_path / "series.json"
    save_series(path, f)
    g = load_series(path)
    assert g.sig == f.sig
    assert np.array_equal(g.exps, f.exps)
    assert np.array_equal(g.coeffs, f.coeffs)  # bit-exact round-trip


def test_series_file_deterministic(tmp_path):
    H, _ = kolmogorov_benchmark(R=4)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_series(p1, H)
    save_series(p2, H)
    assert p1.read_bytes() == p2.read_bytes()


def test_kolmogorov_state_roundtrip(tmp_path):
    H, _ = kolmogorov_benchmark(eps=1e-3, R=4)
    state = build_state(H)
    state, _ = normalize(state, 2, DiophantineParams())
    path = tmp_path / "state.json"
    save_state(path, state)
    back = load_state(path)
    assert back.step == state.step
    assert np.array_equal(back.omega, state.omega)
    assert back.E == state.E
    assert norm(back.hamiltonian() - state.hamiltonian()) == 0.0
    assert [(r, k) for r, k, _ in back.log] == [(r, k) for r, k, _ in state.log]


def test_elliptic_state_roundtrip(tmp_path):
    H, _ = elliptic_benchmark(eps=1e-3, R=3)
    state = build_elliptic_state(H)
    state, _ = normalize_elliptic(state, 1, MelnikovParams())
    path = tmp_path / "state.json"
    save_state(path, state)
    back = load_state(path)
    assert np.array_equal(back.Omega, state.Omega)
    assert norm(back.hamiltonian() - state.hamiltonian()) == 0.0


def test_history_csv(tmp_path):
    rows = [
        {"r": 1, "omega": np.array([1.0, 0.5]), "norm_chi1": 1e-3},
        {"r": 2, "omega": np.array([1.0, 0.5]), "norm_chi1": 1e-6},
    ]
    path = tmp_path / "hist.csv"
    write_history_csv(path, rows)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "r,omega_0,omega_1,norm_chi1"
    assert lines[1].startswith("1,1.0,0.5,")
    assert float(lines[2].split(",")[-1]) == 1e-6


def test_section_csv_header(tmp_path):
    sig = Signature(1, 2)
    pts = np.arange(12.0).reshape(2, 6)
    path = tmp_path / "sec.csv"
    write_section_csv(path, pts, [0.1, 0.2], sig)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,p1,q1,x1,x2,y1,y2"
    assert len(lines) == 3
