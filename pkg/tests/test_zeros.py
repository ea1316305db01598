import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import fd1, fd2, fd3, separated_poly_roots, tracked

from heatgaf.errors import CollisionError, MissingMomentError, NonSimpleZeroError
from heatgaf.funcs import ComplexPoly, ExpQuadPoly, ExpQuadSum, TaylorFunction, taylor_of_expquadpoly
from heatgaf.gaf import sample_gaf
from heatgaf.heatflow import (
    exp_sine_function,
    heat,
    heat_poly,
    heat_taylor,
    sinpisq_function,
    sinpisq_zero,
    theta_coeffs,
)
from heatgaf.zeros import (
    _rounding_scale,
    MomentTable,
    ZeroSet,
    acceleration,
    aux_derivatives,
    cluster_roots,
    default_base_point,
    derivatives,
    find_roots,
    log_derivatives_at,
    moment_derivative,
    moment_table,
    regularized_M2,
    rescaled_velocity,
    third_derivative,
    track_zero,
    track_zeros,
    truncated_system_step,
    velocity_poly,
    velocity_S1,
    velocity_S2,
    weyl_roots,
    zero_velocity_simple,
)


def as_expquad(p):
    return ExpQuadPoly(0, 0, 0, ComplexPoly(p))


def sorted_by_angle(z):
    z = np.asarray(z)
    return z[np.lexsort((z.imag, z.real))]


# ---------------------------------------------------------------- root finding


def test_find_roots_examples():
    assert np.allclose(sorted_by_angle(find_roots(ComplexPoly([1, 0, 1])).zeros), [-1j, 1j], atol=1e-14)
    tau = 0.21
    r = find_roots(heat_poly(ComplexPoly([-1, 0, 1]), tau)).zeros
    assert np.allclose(sorted_by_angle(r), [-1.1, 1.1], atol=1e-14)


def test_find_roots_weyl_residuals():
    g = sample_gaf(60, 0)
    p = g.poly()
    roots = find_roots(p).expanded()
    assert len(roots) == 60
    # backward error: |p(r)| against sum |c_k| |r|^k
    for r in roots:
        bound = np.sum(np.abs(p.coeffs) * np.abs(r) ** np.arange(len(p.coeffs)))
        assert abs(p(r)) < 1e-12 * bound


def test_find_roots_degree_one_and_errors():
    assert np.allclose(find_roots(ComplexPoly([2, 1])).zeros, [-2])
    with pytest.raises(ValueError):
        find_roots(ComplexPoly([3]))


def test_find_roots_zero_at_origin():
    r = find_roots(ComplexPoly([0, 0, -1, 0, 1]))
    assert sorted(r.multiplicities) == [1, 1, 2]


def test_cluster_multiplicity():
    # a double root away from 0 splits by about sqrt(eps); both halves stay close to it
    r = find_roots(ComplexPoly.from_roots([1, 1, 0.5j])).expanded()
    assert np.sum(np.abs(r - 1) < 1e-6) == 2
    zs = cluster_roots([0.3, 0.3 + 1e-11, 2])
    assert sorted(zs.multiplicities) == [1, 2]


def test_weyl_roots_agree_with_find_roots():
    g = sample_gaf(60, 2)
    a = sorted_by_angle(weyl_roots(g.taylor.weyl_coeffs).expanded())
    b = sorted_by_angle(find_roots(g.poly()).expanded())
    assert np.max(np.abs(a - b)) < 1e-9


def test_weyl_roots_high_degree_small_roots_accurate():
    g = sample_gaf(300, 5)
    roots = weyl_roots(g.taylor.weyl_coeffs).expanded()
    assert len(roots) == 300
    small = roots[np.abs(roots) < 3]
    F = g.taylor
    dF = F.deriv()
    for r in small:
        assert abs(F(r) / dF(r)) < 1e-12


# ---------------------------------------------------------------- velocities


def test_zero_velocity_simple_examples():
    F = ComplexPoly([-1, 0, 1])
    assert zero_velocity_simple(lambda z: derivatives(F, z), 1) == 0.5
    G = ComplexPoly([0, 1])
    assert zero_velocity_simple(lambda z: derivatives(G, z), 0) == 0
    with pytest.raises(NonSimpleZeroError):
        zero_velocity_simple(lambda z: derivatives(ComplexPoly([0, 0, 1]), z), 0)


def test_zero_velocity_sinpisq():
    F = sinpisq_function()
    v = zero_velocity_simple(lambda z: derivatives(F, z), 1)
    h = 1e-5
    ref = (sinpisq_zero(1, 1, h) - sinpisq_zero(1, 1, -h)) / (2 * h)
    assert abs(v - ref) < 1e-8


def test_velocity_poly_examples():
    assert velocity_poly([1, -1], 0) == 0.5
    assert velocity_poly([0], 0) == 0
    with pytest.raises(CollisionError):
        velocity_poly([1, 1 + 1e-13], 0)


roots_strategy = st.lists(st.builds(complex, st.floats(-2, 2), st.floats(-2, 2)), min_size=2, max_size=10)


@settings(max_examples=60, deadline=None)
@given(roots_strategy)
def test_velocity_poly_matches_heat_flow_derivative(roots):
    r = np.array(roots)
    d = np.abs(r[:, None] - r[None, :]) + np.eye(len(r))
    if d.min() < 0.05:
        return
    p = ComplexPoly.from_roots(r)
    for j in range(len(r)):
        vals = derivatives(p, r[j])
        scale = max(abs(v) for v in vals)
        ref = zero_velocity_simple(lambda z: derivatives(p, z), r[j], scale)
        assert abs(velocity_poly(r, j) - ref) <= 1e-9 * max(1, abs(ref))


def test_velocity_poly_matches_continuation():
    rng = np.random.default_rng(11)
    r = separated_poly_roots(rng)
    F = as_expquad(ComplexPoly.from_roots(r).coeffs)
    for j in range(3):
        assert abs(fd1(F, r[j], 0, 1e-4) - velocity_poly(r, j)) < 1e-7 * max(1, abs(velocity_poly(r, j)))


def test_acceleration_examples():
    assert acceleration([1, -1], 0) == -0.25
    ref = -2 * (1 / 8 + 1 / (1 - 1j) ** 3 + 1 / (1 + 1j) ** 3)
    zs = [1, -1, 1j, -1j]
    assert abs(acceleration(zs, 0) - ref) < 1e-15
    F = as_expquad(ComplexPoly.from_roots(zs).coeffs)
    assert abs(fd2(F, 1, 5e-4) - ref) < 1e-6
    assert acceleration([0.4], 0) == 0


def test_calogero_moser_on_random_polynomials():
    rng = np.random.default_rng(12)
    for _ in range(4):
        r = separated_poly_roots(rng)
        F = as_expquad(ComplexPoly.from_roots(r).coeffs)
        for j in range(len(r)):
            assert abs(fd2(F, r[j], 1e-3) - acceleration(r, j)) < 1e-5


def test_velocity_S1_examples():
    assert velocity_S1([1, -1], 0, 0, 0) == 0.5
    # the base-point sum includes k = j, so a lone zero contributes 1/(z_j - c)
    assert velocity_S1([0.7], 0, 0.3 - 1j, 5) == 0.3 - 1j + 1 / (0.7 - 5)
    # lone zero w of (z - w) e^{b z}: a1 at c is b + 1/(c - w) and the zero moves at b
    b, w, c = 0.3 - 1j, 0.7, 5
    F = ExpQuadPoly(0, b, 0, ComplexPoly([-w, 1]))
    a1, _ = log_derivatives_at(F, c)
    assert abs(velocity_S1([w], 0, a1, c) - b) < 1e-14
    assert abs(fd1(F, w, 0, 1e-4) - b) < 1e-10
    with pytest.raises(CollisionError):
        velocity_S1([1, 2], 0, 0, 2)


def test_velocity_S1_exp_sine():
    a1 = 0.3 + 0.2j
    F = exp_sine_function(a1)
    N = 2_000_000
    zs = np.arange(-N, N + 1).astype(complex)
    c = default_base_point(F, zs)
    A1, _ = log_derivatives_at(F, c)
    j = N + 1  # the zero at 1
    assert abs(velocity_S1(zs, j, A1, c) - a1) < 1e-6
    assert abs(fd1(F, 1, 0, 1e-4) - a1) < 1e-9


def test_velocity_S2_examples():
    # own base terms: 1/(z_j - c) + (z_j - c)/(z_j - c)^2
    assert velocity_S2([2 + 1j], 0, 0.5, 0.25, 1) == 0.5 + 0.25 * (1 + 1j) + 2 / (1 + 1j)
    F = ExpQuadPoly(0.3, 0.2, 0, ComplexPoly([-(2 + 1j), 1]))
    a1, a2 = log_derivatives_at(F, 1)
    assert abs(velocity_S2([2 + 1j], 0, a1, a2, 1) - fd1(F, 2 + 1j, 0, 1e-4)) < 1e-7


def gaf_setup(n_max=120, seed=3):
    g = sample_gaf(n_max, seed)
    T = g.taylor
    roots = weyl_roots(T.weyl_coeffs).expanded()
    j = int(np.argmin(np.abs(roots)))
    c = default_base_point(T, roots)
    a1, a2 = log_derivatives_at(T, c)
    return T, roots, j, c, a1, a2


def test_velocity_S2_on_truncated_gaf():
    T, roots, j, c, a1, a2 = gaf_setup()
    v = velocity_S2(roots, j, a1, a2, c)
    assert abs(v - fd1(T, roots[j], 0, 1e-3)) < 1e-4


def test_velocity_S2_theta_lattice_drift():
    sigma = 1j
    T = theta_coeffs(sigma, 160)
    R = 400
    m = np.arange(-R, R + 1)
    grid = (m[:, None] + 0.5) + (m[None, :] + 0.5) * sigma
    zs = grid.ravel()
    zs = zs[np.abs(zs) <= R]
    j = int(np.argmin(np.abs(zs - (0.5 + 0.5j))))
    c = 0.25 + 1j / math.e
    a1, a2 = log_derivatives_at(T, c)
    v = velocity_S2(zs, j, a1, a2, c)
    # zero (1/2)(1 + sigma') with sigma' = sigma - 2 pi i tau moves at -pi i
    assert abs(v - (-1j * math.pi)) < 1e-5 * math.pi


# ---------------------------------------------------------------- auxiliary and moment laws


def test_aux_derivatives_examples():
    assert aux_derivatives("S2", [], 0.5, 2.0, 0) == (-1.0, -4.0)
    G = ExpQuadPoly(1, 0, 0, ComplexPoly([1]))
    a1, a2 = log_derivatives_at(G, 0.3)
    assert abs(a2 - 1) < 1e-15
    h = 1e-5
    fd = (log_derivatives_at(heat(G, h), 0.3)[1] - log_derivatives_at(heat(G, -h), 0.3)[1]) / (2 * h)
    assert abs(aux_derivatives("S2", [], a1, a2, 0.3)[1] - fd) < 1e-8
    assert abs(fd + 1) < 1e-8
    with pytest.raises(ValueError):
        aux_derivatives("S0", [], 0)


def test_aux_derivatives_sinpisq():
    F = sinpisq_function()
    N = 1_000_000
    s = np.sqrt(np.arange(1, N + 1))
    zs = ZeroSet(np.concatenate([[0], s, -s, 1j * s, -1j * s]), [2] + [1] * (4 * N))
    c = 0.25
    a1, a2 = log_derivatives_at(F, c)
    da1, _ = aux_derivatives("S2", zs, a1, a2, c)
    h = 1e-5
    fd = (log_derivatives_at(heat(F, h), c)[0] - log_derivatives_at(heat(F, -h), c)[0]) / (2 * h)
    assert abs(da1 - fd) < 1e-5 * max(1, abs(fd))


def test_aux_derivatives_on_gaf_match_finite_differences():
    T, roots, j, c, a1, a2 = gaf_setup()
    da1, da2 = aux_derivatives("S2", roots, a1, a2, c)
    h = 1e-4
    up = log_derivatives_at(heat_taylor(T, h), c)
    dn = log_derivatives_at(heat_taylor(T, -h), c)
    assert abs(da1 - (up[0] - dn[0]) / (2 * h)) < 1e-6
    assert abs(da2 - (up[1] - dn[1]) / (2 * h)) < 1e-6


def test_moment_derivative_examples():
    mt = MomentTable(0, {p: 0j for p in range(2, 7)})
    assert moment_derivative(mt, 2) == 0
    mt = moment_table([1, -1], 0, 6)
    assert mt[2] == 0.25 and mt[3] == 0.125 and mt[4] == 1 / 16
    assert moment_derivative(mt, 2) == -0.25
    # M2 = 1/(4(1+tau)) along z = +-sqrt(1+tau)
    h = 1e-4
    fd = (1 / (4 * (1 + h)) - 1 / (4 * (1 - h))) / (2 * h)
    assert abs(moment_derivative(mt, 2) - fd) < 1e-6
    with pytest.raises(MissingMomentError):
        moment_derivative(moment_table([1, -1], 0, 4), 4)
    with pytest.raises(ValueError):
        moment_derivative(moment_table([1, -1], 0, 6, case="S2"), 2)


def tracked_moments(F, starts, j, tau, p):
    zs = np.array([tracked(F, z0, [tau])[0] for z0 in starts])
    return moment_table(zs, j, p)[p]


def test_moment_derivative_random_polynomials():
    rng = np.random.default_rng(13)
    r = separated_poly_roots(rng)
    F = as_expquad(ComplexPoly.from_roots(r).coeffs)
    h = 1e-4
    mt = moment_table(r, 0, 6)
    for p in (2, 3, 4):
        fd = (tracked_moments(F, r, 0, h, p) - tracked_moments(F, r, 0, -h, p)) / (2 * h)
        assert abs(moment_derivative(mt, p) - fd) <= 1e-5 * abs(fd)


def test_moment_recursion_closes():
    # the acceleration is -2 M3, so its derivative through the recursion is the third derivative
    rng = np.random.default_rng(14)
    r = separated_poly_roots(rng)
    mt = moment_table(r, 2, 8)
    assert abs(acceleration(r, 2) + 2 * mt[3]) < 1e-14
    via_recursion = -2 * moment_derivative(mt, 3)
    direct = third_derivative("S0", mt)
    assert abs(via_recursion - direct) <= 1e-10 * max(1, abs(direct))


def test_third_derivative_examples():
    mt = MomentTable(0, {p: 0j for p in range(2, 7)})
    assert third_derivative("S0", mt) == 0
    assert third_derivative("S2", mt, 0j) == 0
    mt = moment_table([1, -1], 0, 6)
    assert third_derivative("S0", mt) == 0.375
    F = as_expquad([-1, 0, 1])
    assert abs(fd3(F, 1, 2e-3) - 0.375) < 1e-5
    with pytest.raises(MissingMomentError):
        third_derivative("S2", mt)
    with pytest.raises(MissingMomentError):
        third_derivative("S0", moment_table([1, -1], 0, 3))


def test_third_derivative_S2_on_truncated_gaf():
    T, roots, j, c, a1, a2 = gaf_setup()
    mt = moment_table(roots, j, 6, a1, a2, "S2", c)
    z3 = third_derivative("S2", mt, regularized_M2(roots, j, c))
    assert abs(z3 - fd3(T, roots[j], 2.5e-3)) < 1e-3


def test_third_derivative_S1_exp_sine():
    F = exp_sine_function(0.4 - 0.3j)
    N = 20000
    zs = np.arange(-N, N + 1).astype(complex)
    mt = moment_table(zs, N, 6, case="S1")
    # zeros translate rigidly, so every derivative beyond the first vanishes
    assert abs(third_derivative("S1", mt)) < 1e-12
    assert abs(fd3(F, 0, 1e-2)) < 1e-6


# ---------------------------------------------------------------- rescaled flow and truncated system


def test_rescaled_velocity_examples():
    roots = np.array([1 + 1j, -0.5 + 0.2j, 0.3 - 1j])
    v0 = rescaled_velocity(roots, 1, 0.2, -0.1j, 0.0)
    assert abs(v0 - velocity_S2(roots, 1, 0.2, -0.1j, 0)) < 1e-15
    y = 0.7 - 0.2j
    assert abs(rescaled_velocity([y], 0, 0, 0, 0.4) - (y * math.tanh(0.4) + 2 / y)) < 1e-15
    with pytest.raises(CollisionError):
        rescaled_velocity([1, 0], 0, 0, 0, 0.1)


def test_rescaled_velocity_on_truncated_gaf():
    g = sample_gaf(120, 6)
    s = 0.2
    tau = math.tanh(s)
    Ft = heat_taylor(g.taylor, tau)
    z = weyl_roots(Ft.weyl_coeffs).expanded()
    j = int(np.argmin(np.abs(z - 0.5)))
    a1, a2 = log_derivatives_at(Ft, 0)
    v = rescaled_velocity(z * math.cosh(s), j, a1, a2, s)
    h = 1e-4
    zp = track_zero(Ft, z[j], [0, math.tanh(s + h) - tau]).final
    zm = track_zero(Ft, z[j], [0, math.tanh(s - h) - tau]).final
    fd = (zp * math.cosh(s + h) - zm * math.cosh(s - h)) / (2 * h)
    assert abs(v - fd) < 1e-4


def test_truncated_system_examples():
    # zeros +-1 with a1 = a2 = 0 at c = 0 describe (z^2 - 1) e^{z^2}; odd symmetry, speed 5/2
    out = truncated_system_step([1, -1], 0, 0, 0)
    assert np.allclose(out.dzeros, [2.5, -2.5])
    F = ExpQuadPoly(2, 0, 0, ComplexPoly([-1, 0, 1]))
    assert np.allclose(log_derivatives_at(F, 0), (0, 0))
    assert abs(fd1(F, 1, 0, 1e-4) - 2.5) < 1e-7
    u = 0.3 + 0.1j
    out = truncated_system_step([0.4 + 0.1j], 0.3, 0.2j, 0.1)
    assert abs(out.dzeros[0] - (0.3 + 0.2j * u + 2 / u)) < 1e-14
    with pytest.raises(CollisionError):
        truncated_system_step([1, 1 + 1e-14, 3], 0, 0, 0)


def test_truncated_system_matches_velocity_S2():
    T, roots, j, c, a1, a2 = gaf_setup()
    out = truncated_system_step(roots, a1, a2, c)
    for k in (j, 0, 5):
        v = velocity_S2(roots, k, a1, a2, c)
        assert abs(out.dzeros[k] - v) <= 1e-12 * max(1, abs(v))


def truncation_increments(seed):
    T, roots, j, c, a1, a2 = gaf_setup(n_max=400, seed=seed)
    order = np.argsort(np.abs(roots - c))
    vals = []
    for N in (25, 50, 100, 200):
        out = truncated_system_step(roots, a1, a2, c, N)
        vals.append(out.dzeros[0])  # kept zeros are sorted by distance to c
    return np.abs(np.diff(vals))


def test_truncated_system_cauchy_converges():
    # single samples fluctuate; the mean increment over doublings of N shrinks
    diffs = np.mean([truncation_increments(seed) for seed in range(20)], axis=0)
    assert np.all(np.diff(diffs) < 0)
    assert diffs[-1] < 0.5 * diffs[0]


# ---------------------------------------------------------------- continuation


def test_track_quadratic():
    traj = track_zero(as_expquad([-1, 0, 1]), 1, [0, 0.5])
    assert traj.status == "completed"
    assert abs(traj.final - math.sqrt(1.5)) < 1e-10
    taus = [t for t, _ in traj.samples]
    assert all(b.real > a.real for a, b in zip(taus, taus[1:]))


def test_track_sinpisq():
    traj = track_zero(sinpisq_function(), 1, [0, 0.1])
    assert traj.status == "completed"
    assert abs(traj.final - sinpisq_zero(1, 1, 0.1)) < 1e-6
    F = sinpisq_function()
    for t, z in traj.samples:
        Ft = heat(F, t)
        assert abs(Ft(z)) < 1e-10 * max(1, abs(Ft.deriv()(z)))


def test_track_double_zero_and_bad_start():
    with pytest.raises(NonSimpleZeroError):
        track_zero(sinpisq_function(), 0, [0, 0.05])
    with pytest.raises(ValueError):
        track_zero(as_expquad([-1, 0, 1]), 1.1, [0, 0.1])
    out = track_zeros(as_expquad([-1, 0, 1]), [1, 1.1], [0, 0.1])
    assert [t.status for t in out] == ["completed", "newton_fail"]


def test_track_collision_and_domain_boundary():
    traj = track_zero(as_expquad([-1, 0, 1]), 1, [0, -1.5])
    assert traj.status == "collision_abort"
    traj = track_zero(sinpisq_function(), 1, [0, 0.2])
    assert traj.status == "domain_boundary"


def test_track_reversible():
    T, roots, j, *_ = gaf_setup()
    traj = track_zero(T, roots[j], [0, 0.3 + 0.1j, 0])
    assert traj.status == "completed"
    assert abs(traj.path_values[-1] - traj.path_values[0]) < 1e-8


def test_track_sum_and_single_term_agree():
    F = ExpQuadPoly(0.2, 0.1, 0, ComplexPoly([-1, 0, 1]))
    a = track_zero(ExpQuadSum((F,)), 1.0, [0, 0.3]).final
    b = track_zero(F, 1.0, [0, 0.3]).final
    assert abs(a - b) < 1e-12


def test_track_taylor_matches_closed_form():
    F = ExpQuadPoly(0.2, 0.1, 0, ComplexPoly([-1, 0, 1]))
    T = taylor_of_expquadpoly(F, 120)
    T = TaylorFunction(T.weyl_coeffs, 120, 2.0, 0.1)
    a = track_zero(T, 1.0, [0, 0.3]).final
    b = track_zero(F, 1.0, [0, 0.3]).final
    assert abs(a - b) < 1e-10


def test_track_gaf_zeros_at_series_rounding_floor():
    # far along the flow the Taylor series cancels; Newton must accept its rounding floor
    T = sample_gaf(120, 0).taylor
    z = weyl_roots(T.weyl_coeffs).expanded()
    z = z[np.argsort(np.abs(z))]
    path = np.linspace(0, 0.94, 95)
    G = heat(T, 0.94)
    flowed = weyl_roots(G.weyl_coeffs).expanded()
    for z0 in z[np.abs(z) < 3.2]:
        traj = track_zero(T, z0, path)
        assert traj.status == "completed", traj.message
        zf = traj.final
        blur = 8 * np.finfo(float).eps * _rounding_scale(G, zf) / abs(G.deriv()(zf))
        assert np.min(np.abs(flowed - zf)) <= max(1e-9, 10 * blur)


def test_track_reports_unresolvable_zero():
    T = sample_gaf(120, 0).taylor
    z = weyl_roots(T.weyl_coeffs).expanded()
    z0 = z[np.argmin(np.abs(np.abs(z) - 4.73))]
    traj = track_zero(T, z0, np.linspace(0, 0.94, 95))
    assert traj.status == "newton_fail"
    assert "series rounding blurs the zero" in traj.message
