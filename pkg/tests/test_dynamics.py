"""Heisenberg evolution, commutator scans, approximants, derivatives."""
import numpy as np
import pytest
import scipy.linalg

from correlab import (chain_lattice, transverse_field_ising, embed,
                      single_site, spectral_norm, build_hamiltonian,
                      derivation_delta, evolution_context, evolve,
                      lr_commutator_scan, locality_scan, local_approximant,
                      approximant_derivative, approximant_derivative_fd,
                      commutator_derivative_bound, certify_locality,
                      conditional_expectation)


def setup(n=4, J=1.0, h=1.0):
    lat = chain_lattice(n)
    inter = transverse_field_ising(lat, J=J, h=h)
    return lat, inter, evolution_context(inter)


# ---------------------------------------------------------------------------
# evolution
# ---------------------------------------------------------------------------

def test_evolve_matches_expm():
    lat, inter, ctx = setup()
    ham = ctx.hamiltonian.matrix
    a = single_site(1, "Z")
    for t in (-0.7, 0.3, 1.9):
        u = scipy.linalg.expm(1j * t * ham)
        ref = u @ embed(a, lat).matrix @ u.conj().T
        assert np.abs(evolve(ctx, a, t).matrix - ref).max() < 1e-11


def test_evolve_time_zero_is_identity_map():
    lat, inter, ctx = setup()
    a = embed(single_site(0, "X"), lat)
    assert np.abs(evolve(ctx, a, 0.0).matrix - a.matrix).max() < 1e-12


def test_heisenberg_equation_of_motion():
    # d/dt tau_t(A) = i tau_t([H, A]); the factor i lives in the equation,
    # not in the derivation
    lat, inter, ctx = setup()
    a = single_site(2, "Z")
    t, dt = 0.4, 1e-6
    lhs = (evolve(ctx, a, t + dt).matrix - evolve(ctx, a, t - dt).matrix) / (2 * dt)
    delta = derivation_delta(embed(a, lat), inter, hamiltonian=ctx.hamiltonian)
    rhs = 1j * evolve(ctx, delta, t).matrix
    assert np.abs(lhs - rhs).max() < 1e-7


def test_complex_time_needs_flag_and_matches_expm():
    lat, inter, ctx = setup(3)
    ham = ctx.hamiltonian.matrix
    a = single_site(0, "Z")
    z = 0.3 + 0.2j
    with pytest.raises(ValueError, match="allow_complex"):
        evolve(ctx, a, z)
    u = scipy.linalg.expm(1j * z * ham)
    uinv = scipy.linalg.expm(-1j * z * ham)
    ref = u @ embed(a, lat).matrix @ uinv
    got = evolve(ctx, a, z, allow_complex=True).matrix
    assert np.abs(got - ref).max() < 1e-10


def test_complex_time_overflow_guard():
    lat = chain_lattice(1)
    inter = transverse_field_ising(lat, J=0.0, h=500.0)
    ctx = evolution_context(inter)
    with pytest.raises(FloatingPointError):
        evolve(ctx, single_site(0, "Z"), 2.0j, allow_complex=True)


def test_evolve_rejects_foreign_window():
    lat, inter, ctx = setup(4)
    sub = embed(single_site(0, "Z"), lat, window=[0, 1])
    with pytest.raises(ValueError, match="window"):
        evolve(ctx, sub, 0.1)


# ---------------------------------------------------------------------------
# commutator scans
# ---------------------------------------------------------------------------

def test_lr_scan_basics():
    lat, inter, ctx = setup(5)
    scan = lr_commutator_scan(inter, single_site(0, "Z"), single_site(4, "Z"),
                              [0.0, 0.2, 0.4], mu=1.0, context=ctx)
    assert scan.distance == 4.0
    cert = certify_locality(inter, 1.0)
    assert abs(scan.velocity - cert.velocity) < 1e-12
    assert scan.measurements[0].commutator_norm < 1e-12  # disjoint at t = 0
    assert scan.measurements[0].envelope == 0.0
    assert np.isfinite(scan.c_empirical)
    assert scan.violations() == 0
    # commutator grows from zero with time
    norms = [m.commutator_norm for m in scan.measurements]
    assert norms[2] > norms[1] > norms[0]


def test_lr_scan_infinite_prefactor_when_supports_touch():
    lat, inter, ctx = setup(3)
    scan = lr_commutator_scan(inter, single_site(0, "X"), single_site(0, "Z"),
                              [0.0], mu=1.0, context=ctx)
    # distance 0 and [Z, X] != 0 at t = 0: no envelope can cover this
    assert scan.c_empirical == float("inf")
    assert scan.violations() >= 1


def test_lr_scan_explicit_velocity_changes_envelope_only():
    lat, inter, ctx = setup(4)
    s1 = lr_commutator_scan(inter, single_site(0, "Z"), single_site(3, "Z"),
                            [0.5], mu=1.0, context=ctx)
    s2 = lr_commutator_scan(inter, single_site(0, "Z"), single_site(3, "Z"),
                            [0.5], mu=1.0, velocity=5.0, context=ctx)
    assert abs(s1.measurements[0].commutator_norm
               - s2.measurements[0].commutator_norm) < 1e-13
    assert s1.measurements[0].envelope != s2.measurements[0].envelope


# ---------------------------------------------------------------------------
# local approximants
# ---------------------------------------------------------------------------

def test_approximant_full_ball_reproduces_evolution():
    lat, inter, ctx = setup(3)
    a = single_site(1, "Z")
    tau = evolve(ctx, a, 0.5)
    approx = local_approximant(ctx, a, 0.5, 10.0)  # ball covers everything
    assert np.abs(approx.matrix - tau.matrix).max() < 1e-12


def test_approximant_radius_zero_projects_to_origin_site():
    lat, inter, ctx = setup(3)
    a = single_site(1, "Z")
    approx = local_approximant(ctx, a, 0.4, 0.0)
    tau = evolve(ctx, a, 0.4)
    ref = conditional_expectation(tau, [1], lat)
    assert np.abs(approx.matrix - ref.matrix).max() < 1e-13
    assert approx.support == (1,)


def test_locality_scan_error_decreases_with_radius():
    lat, inter, ctx = setup(5)
    scan = locality_scan(inter, single_site(2, "Z"), [1.0, 2.0, 3.0],
                         [0.25, 0.5], mu=1.0, context=ctx)
    maxes = scan.max_error_by_radius()
    assert maxes[1.0] > maxes[2.0] > maxes[3.0]
    assert np.isfinite(scan.c_empirical)
    assert scan.c_empirical > 0


def test_locality_scan_envelope_multiplier():
    lat, inter, ctx = setup(4)
    s1 = locality_scan(inter, single_site(1, "Z"), [1.0], [0.5], mu=1.0,
                       context=ctx)
    s2 = locality_scan(inter, single_site(1, "Z"), [1.0], [0.5], mu=1.0,
                       exponent_multiplier=2.0, context=ctx)
    m1, m2 = s1.measurements[0], s2.measurements[0]
    assert abs(m1.error - m2.error) < 1e-13
    assert abs(m2.envelope - m1.envelope * np.exp(-1.0)) < 1e-12


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def test_approximant_derivative_routes_agree():
    lat, inter, ctx = setup(4)
    a = single_site(1, "Z")
    exact = approximant_derivative(ctx, a, 2.0, 0.6)
    fd = approximant_derivative_fd(ctx, a, 2.0, 0.6)  # default step 1e-5
    assert spectral_norm(exact.matrix - fd.matrix) < 1e-8
    finer = approximant_derivative_fd(ctx, a, 2.0, 0.6, step=1e-6)
    assert spectral_norm(exact.matrix - finer.matrix) < 1e-9


def test_derivative_bound_hand_value():
    lat = chain_lattice(3)
    # Y = {1}: shell D(1) = 2 (sites 0 and 2), nothing farther
    got = commutator_derivative_bound(lat, [1], mu=1.0, velocity=2.0,
                                      a_norm=1.0, b_norm=1.0, epsilon=0.2)
    expect = 2.0 * (1.0 + np.expm1(0.4) * 2.0 * np.exp(-1.0))
    assert abs(got - expect) < 1e-12
