"""Release gate: one test per published guarantee, at its stated tolerance.

Each test prints a single line of the form

    criterion NN <name>: PASS (<measured values>)

when it holds (visible with ``pytest -s``); a failed assertion shows up as
a failed test for that criterion and nothing else.  Criteria with a stated
runtime budget assert the measured wall time last, after correctness.
"""
import json
import textwrap
import time
from pathlib import Path

import numpy as np
import pytest

from correlab import (DIM_CAP, LocalOperator, build_hamiltonian,
                      canonical_correlator, chain_lattice, commutator,
                      conditional_expectation, contour_decomposition,
                      eig_hermitian, embed, gibbs_state, kms_function,
                      locality_scan, lr_commutator_scan, ordinary_correlator,
                      residue_identity, sampled_twirl, single_site,
                      spectral_norm, theorem_check, transverse_field_ising)
from correlab import cli


def report(num: int, name: str, detail: str) -> None:
    print(f"criterion {num:02d} {name}: PASS ({detail})")


def random_site_observable(rng, n_sites: int):
    """A random Hermitian observable on a random site of a chain."""
    site = int(rng.integers(n_sites))
    m = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    return single_site(site, (m + m.conj().T) / 2)


@pytest.fixture(scope="module")
def chain6():
    lat = chain_lattice(6)
    inter = transverse_field_ising(lat, 1.0, 1.0)
    dec = eig_hermitian(build_hamiltonian(inter).matrix)
    return lat, inter, dec


# ---------------------------------------------------------------------------
# 1. KMS boundary identity
# ---------------------------------------------------------------------------

def test_criterion_01_kms_boundary_identity(chain6):
    lat, _, dec = chain6
    rng = np.random.default_rng(11)
    pairs = [(random_site_observable(rng, 6), random_site_observable(rng, 6))
             for _ in range(5)]
    ts = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])

    t0 = time.perf_counter()
    worst = 0.0
    for beta in (0.2, 1.0, 2.0):
        state = gibbs_state(dec, beta)
        for a, b in pairs:
            fn = kms_function(state, embed(a, lat), embed(b, lat))
            worst = max(worst, float(np.abs(fn.boundary_gap(ts)).max()))
    elapsed = time.perf_counter() - t0

    assert worst <= 1e-10
    assert elapsed < 30.0
    report(1, "kms boundary identity",
           f"max |F(t+ib) - G(t)| = {worst:.3e} <= 1e-10, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. Scalar residue identity
# ---------------------------------------------------------------------------

def test_criterion_02_residue_identity():
    t0 = time.perf_counter()
    worst = 0.0
    for beta in (0.2, 1.0, 2.0):
        for height in (0.0, beta / 2, beta):
            res = residue_identity(beta, height, half_width=10.0)
            worst = max(worst, abs(res.value - 1.0))
    elapsed = time.perf_counter() - t0

    assert worst <= 1e-8
    assert elapsed < 5.0
    report(2, "residue identity",
           f"max |value - 1| = {worst:.3e} <= 1e-8, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 3. Canonical correlator, closed form vs quadrature
# ---------------------------------------------------------------------------

def test_criterion_03_duhamel_dual_route(chain6):
    lat, _, dec = chain6
    rng = np.random.default_rng(23)
    pairs = [(random_site_observable(rng, 6), random_site_observable(rng, 6))
             for _ in range(10)]

    t0 = time.perf_counter()
    worst = 0.0
    for beta in (0.5, 1.0):
        state = gibbs_state(dec, beta)
        for a, b in pairs:
            ae, be = embed(a, lat), embed(b, lat)
            closed = canonical_correlator(state, ae, be, method="closed_form")
            quad = canonical_correlator(state, ae, be, method="quadrature")
            worst = max(worst, abs(closed - quad))
    elapsed = time.perf_counter() - t0

    assert worst <= 1e-8
    assert elapsed < 60.0
    report(3, "duhamel dual route",
           f"max route gap {worst:.3e} <= 1e-8, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 4. Commuting observable collapses canonical to ordinary
# ---------------------------------------------------------------------------

def test_criterion_04_commuting_case_collapse():
    lat = chain_lattice(6)
    inter = transverse_field_ising(lat, 1.0, 0.0)  # classical: [H, Z_i] = 0
    ham = build_hamiltonian(inter)
    state = gibbs_state(ham.matrix, 1.0)

    b = embed(single_site(3, "Z"), lat)
    assert spectral_norm(commutator(ham, b)) <= 1e-12

    rng = np.random.default_rng(5)
    m = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    a = embed(single_site(1, (m + m.conj().T) / 2), lat)

    ordv = ordinary_correlator(state, a, b)
    gap = 0.0
    for method in ("closed_form", "quadrature"):
        canv = canonical_correlator(state, a, b, method=method)
        gap = max(gap, abs(canv - ordv))
    assert abs(ordv) > 1e-8  # the collapse is exercised on nonzero values
    assert gap <= 1e-12
    report(4, "commuting case collapse",
           f"|canonical - ordinary| = {gap:.3e} <= 1e-12 at |corr| = {abs(ordv):.3f}")


# ---------------------------------------------------------------------------
# 5. Lieb-Robinson commutator scan
# ---------------------------------------------------------------------------

def test_criterion_05_lieb_robinson_scan():
    lat = chain_lattice(10)
    inter = transverse_field_ising(lat, 1.0, 1.0)
    times = [0.05 * k for k in range(41)]  # [0, 2] step 0.05

    t0 = time.perf_counter()
    scan = lr_commutator_scan(inter, single_site(0, "Z"), single_site(9, "Z"),
                              times, mu=1.0)
    elapsed = time.perf_counter() - t0

    assert scan.distance == 9.0
    assert np.isfinite(scan.c_empirical)
    assert scan.violations() == 0
    assert scan.c_empirical <= 10.0
    assert elapsed < 300.0
    report(5, "lieb-robinson scan",
           f"c_emp = {scan.c_empirical:.3e} <= 10, 0 violations, "
           f"v = {scan.velocity:.3f}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 6. Approximate locality of the evolved observable
# ---------------------------------------------------------------------------

def test_criterion_06_approximate_locality():
    lat = chain_lattice(10)
    inter = transverse_field_ising(lat, 1.0, 1.0)
    radii = [1.0, 2.0, 3.0]
    times = [0.0, 0.25, 0.5, 0.75, 1.0]

    scan = locality_scan(inter, single_site(4, "Z"), radii, times, mu=1.0)
    c = scan.c_empirical
    assert np.isfinite(c)

    err = {(m.radius, m.time): m.error for m in scan.measurements}
    env = {(m.radius, m.time): m.envelope for m in scan.measurements}
    for key, e in err.items():
        if env[key] == 0.0:
            assert e <= 1e-12
        else:
            assert e <= c * env[key] * (1 + 1e-9)
    # strictly decreasing in the radius at each fixed time (slack 1e-12)
    for t in times:
        for r_small, r_big in zip(radii, radii[1:]):
            assert err[(r_big, t)] < err[(r_small, t)] + 1e-12

    worst = max(err[(r, times[-1])] for r in radii)
    report(6, "approximate locality",
           f"errors decrease in r at fixed t; max error {worst:.3e} at t=1, "
           f"c_emp = {c:.3e}")


# ---------------------------------------------------------------------------
# 7. Contour decomposition reconstructs the direct value
# ---------------------------------------------------------------------------

def test_criterion_07_contour_reconstruction(chain6):
    lat, _, dec = chain6
    beta = 1.0
    state = gibbs_state(dec, beta)
    a = embed(single_site(0, "Z"), lat)
    b = embed(single_site(5, "Z"), lat)
    delta = 1e-6

    t0 = time.perf_counter()
    worst = 0.0
    for height in (delta, beta / 2, beta - delta):
        d = contour_decomposition(state, a, b, height)
        rel = d.defect / (1 + abs(d.direct))
        worst = max(worst, rel)
        assert d.defect <= 1e-6 * (1 + abs(d.direct))
    elapsed = time.perf_counter() - t0

    assert elapsed < 120.0
    report(7, "contour reconstruction",
           f"max relative defect {worst:.3e} <= 1e-6, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 8. Commutator term inherits the exponential envelope
# ---------------------------------------------------------------------------

def test_criterion_08_commutator_term_envelope():
    lat = chain_lattice(8)
    inter = transverse_field_ising(lat, 1.0, 1.0)
    mu = 1.0
    state = gibbs_state(build_hamiltonian(inter).matrix, 1.0)

    ls = list(range(2, 8))
    mags = []
    for l in ls:
        a = embed(single_site(0, "Z"), lat)
        b = embed(single_site(l, "Z"), lat)
        d = contour_decomposition(state, a, b, 0.5, lattice=lat, mu=mu)
        mags.append(abs(d.term_commutator))
    slope = float(np.polyfit(ls, np.log(mags), 1)[0])

    assert slope <= -mu / 2 + 0.1
    report(8, "commutator term envelope",
           f"slope {slope:.3f} <= {-mu / 2 + 0.1:.2f} over l in {ls}")


# ---------------------------------------------------------------------------
# 9. Decay upgrade, end to end on the largest window
# ---------------------------------------------------------------------------

def test_criterion_09_decay_upgrade_surrogate():
    mu = 1.0
    distances = [2, 3, 4, 5, 6, 7, 8]

    t0 = time.perf_counter()
    results = {}
    for n in (10, 12):
        lat = chain_lattice(n)
        inter = transverse_field_ising(lat, 1.0, 2.0)
        results[n] = theorem_check(inter, 0.5, mu, distances)
    elapsed = time.perf_counter() - t0

    big = results[12]
    assert big.passed
    assert big.ordinary_fit.residual < 0.5
    assert np.isfinite(big.xi)
    bound = 1.2 * max(4.0 * big.xi, 2.0 / mu)
    assert big.xi_prime_empirical <= bound
    ratio = big.c_prime / results[10].c_prime
    assert 0.5 <= ratio <= 2.0
    assert elapsed < 600.0
    report(9, "decay upgrade surrogate",
           f"residual {big.ordinary_fit.residual:.2e} < 0.5, "
           f"xi'_emp {big.xi_prime_empirical:.3f} <= {bound:.3f}, "
           f"c' ratio {ratio:.3f} in [0.5, 2], {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 10. Sampled twirl converges at the Monte-Carlo rate
# ---------------------------------------------------------------------------

def test_criterion_10_twirl_convergence():
    lat = chain_lattice(2)
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0],
                     [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    op = embed(LocalOperator((0, 1), cnot), lat)
    exact = conditional_expectation(op, (0,), lat).matrix

    d_small, d_large = [], []
    for seed in range(20):
        s = sampled_twirl(op, (0,), lat, 4096, seed).matrix
        l = sampled_twirl(op, (0,), lat, 16384, seed).matrix
        d_small.append(float(np.linalg.norm(s - exact)))
        d_large.append(float(np.linalg.norm(l - exact)))
    med_small = float(np.median(d_small))
    med_large = float(np.median(d_large))

    assert med_large > 0.0
    assert med_small <= 4.0 * med_large
    report(10, "twirl convergence",
           f"median dist {med_small:.3e} (M=4096) <= "
           f"4 x {med_large:.3e} (M=16384)")


# ---------------------------------------------------------------------------
# 11. Eigensolver reconstruction and orthonormality
# ---------------------------------------------------------------------------

def test_criterion_11_eigensolver_contract():
    rng = np.random.default_rng(17)
    worst_recon = 0.0
    worst_orth = 0.0
    for k in range(50):
        n = 256 if k == 0 else int(rng.integers(2, 257))
        m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        h = (m + m.conj().T) / 2
        dec = eig_hermitian(h)
        v = dec.eigenvectors
        worst_recon = max(worst_recon,
                          float(np.abs(dec.reconstruct() - h).max()))
        worst_orth = max(worst_orth,
                         float(np.abs(v.conj().T @ v - np.eye(n)).max()))
    assert worst_recon <= 1e-10
    assert worst_orth <= 1e-10
    report(11, "eigensolver contract",
           f"50 matrices up to dim 256: reconstruction {worst_recon:.3e}, "
           f"orthonormality {worst_orth:.3e}, both <= 1e-10")


# ---------------------------------------------------------------------------
# 12. Repeated runs produce byte-identical CSV payloads
# ---------------------------------------------------------------------------

def test_criterion_12_run_determinism(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(textwrap.dedent("""\
        task: theorem_check
        model: {name: transverse_field_ising, n: 6, J: 1.0, h: 2.0}
        beta: 0.5
        mu: 1.0
        distances: [2.0, 3.0, 4.0, 5.0]
        """), encoding="utf-8")
    assert cli.main(["run", str(cfg), "--outdir", str(tmp_path / "one")]) == 0
    assert cli.main(["run", str(cfg), "--outdir", str(tmp_path / "two")]) == 0

    d1 = next((tmp_path / "one").iterdir())
    d2 = next((tmp_path / "two").iterdir())
    payload1 = (d1 / "theorem_check.csv").read_bytes()
    payload2 = (d2 / "theorem_check.csv").read_bytes()
    assert payload1 == payload2

    record = json.loads((d1 / "record.json").read_text())
    assert record["passed"] is True
    report(12, "run determinism",
           f"{len(payload1)} byte CSV payload identical across runs, "
           f"hash {record['config_hash']}")
