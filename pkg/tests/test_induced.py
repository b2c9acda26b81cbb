import math

import numpy as np
import pytest

from horseshoe import map_core as mc
from horseshoe.map_core import (REF_EX, REF_STRICT, Region, apply,
                                default_certificate, in_A, classify,
                                OutOfDomain, OrbitEscapes, NoReturn)
from horseshoe.splitting import length_scale, direction_field, adapted_norm
from horseshoe import induced as ind
from horseshoe import sampling as sp


# --- escape and approach times --------------------------------------------

def test_escape_time_linear_strip_exit():
    # 0.0036 * 5^3 = 0.45 lands in the middle strip
    assert ind.escape_time(REF_EX, (0.79, 0.0036)) == 3


def test_escape_time_bottom_edge_is_infinite():
    assert ind.escape_time(REF_EX, (0.79, 0.0)) == math.inf


def test_escape_time_rejects_tangency_column():
    with pytest.raises(OutOfDomain):
        ind.escape_time(REF_EX, (REF_EX.q, 0.0))


def test_escape_time_requires_window_point():
    with pytest.raises(OutOfDomain):
        ind.escape_time(REF_EX, (0.5, 0.1))


def test_escape_time_matches_sampler():
    rng = np.random.default_rng(0)
    rp = sp.sample_returning_point(REF_EX, rng, n1=4)
    assert ind.escape_time(REF_EX, rp.M) == 4


def test_approach_time_positive():
    rng = np.random.default_rng(2)
    rp = sp.sample_returning_point(REF_EX, rng)
    assert ind.approach_time(REF_EX, rp.M) >= 1


def test_time_bounds_report_fields():
    rep = ind.time_bounds_report(REF_EX, (0.79, 0.0036))
    assert rep["n1"] == 3 and rep["n2"] >= 1
    assert rep["l"] == pytest.approx(0.04)
    assert rep["escape_bound"] == pytest.approx(
        REF_EX.sigma ** 2 * REF_EX.c * 0.04 ** 2)
    assert isinstance(rep["escape_ok"], bool)
    assert isinstance(rep["approach_ok"], bool)


# --- induced map cases ----------------------------------------------------

def test_induced_map_origin():
    st = ind.induced_map(REF_EX, (0.0, 0.0))
    assert st.case == "origin" and st.k == 0 and st.target == (0.0, 0.0)


def test_induced_map_linear_strips():
    st = ind.induced_map(REF_EX, (0.5, 0.5))
    assert st.case == "linear" and st.k == 1
    assert st.target == pytest.approx((0.45, 0.5))
    st = ind.induced_map(REF_EX, (0.5, 0.99))
    assert st.case == "linear"
    assert st.target == pytest.approx((0.95, 0.95))


def test_induced_map_tangency_entry():
    # x = 0.45 sits in the image column of the middle strip
    st = ind.induced_map(REF_EX, (0.45, 0.7))
    assert st.case == "tangency-entry" and st.k == 1


def test_induced_map_tangency_strip_outside_columns():
    with pytest.raises(OutOfDomain):
        ind.induced_map(REF_EX, (0.1, 0.7))


def test_induced_map_escape_linear():
    st = ind.induced_map(REF_EX, (0.79, 0.0036))
    assert st.case == "escape-linear" and st.k == 3
    assert classify(REF_EX, st.target) is Region.R3


def test_induced_map_return_case():
    rng = np.random.default_rng(5)
    rp = sp.sample_returning_point(REF_EX, rng, n1=3)
    st = ind.induced_map(REF_EX, rp.M)
    assert st.case == "return" and st.k == 4
    assert in_A(REF_EX, st.target)
    assert st.target == pytest.approx(rp.M_return)


def test_induced_map_bottom_edge():
    st = ind.induced_map(REF_EX, (0.79, 0.0))
    assert st.case == "bottom" and st.target == (0.0, 0.0)


def test_induced_map_escaping_orbit_raises():
    # 0.005 * 5^3 = 0.625 falls in the gap above the middle strip
    with pytest.raises(OrbitEscapes):
        ind.induced_map(REF_EX, (0.79, 0.005))


def test_induced_map_outside_domain():
    with pytest.raises(OutOfDomain):
        ind.induced_map(REF_EX, (0.5, 0.1))


# --- polygonal balls and us-balls -----------------------------------------

def test_polygonal_ball_geometry():
    rng = np.random.default_rng(7)
    rp = sp.sample_returning_point(REF_EX, rng)
    fr = direction_field(REF_EX, rp.M)
    ball = ind.PolygonalBall(rp.M, fr, 0.01, 0.02)
    v = ball.vertices()
    assert len(v) == 4
    assert ball.contains(rp.M)
    assert ball.contains(v[0])
    far = np.asarray(rp.M) + 0.05 * fr.e_u
    assert not ball.contains(far)
    s0a, s0b = ball.side_bottom()
    s2a, s2b = ball.side_top()
    # opposite sides, parallel to e_s
    np.testing.assert_allclose(s0b - s0a, s2b - s2a, atol=1e-14)
    seg_a, seg_b = ball.stable_segment(0.5)
    np.testing.assert_allclose(0.5 * (seg_a + seg_b), rp.M, atol=1e-14)


def test_us_ball_in_window():
    cert = default_certificate(REF_EX)
    rng = np.random.default_rng(1)
    rp = sp.sample_returning_point(REF_EX, rng)
    ball = ind.us_ball(REF_EX, rp.M, 1.0, cert)
    r = cert.C3 * length_scale(REF_EX, rp.M)
    assert ball.radius_u == pytest.approx(r)
    assert ball.radius_s == pytest.approx(r)


def test_us_ball_between_visits_capped():
    cert = default_certificate(REF_EX)
    rng = np.random.default_rng(1)
    rp = sp.sample_returning_point(REF_EX, rng)
    mid = apply(REF_EX, rp.M)
    ball = ind.us_ball(REF_EX, mid, 1.0, cert)
    cap = cert.C3 / 3.0
    assert 0.0 < ball.radius_u <= cap + 1e-15
    assert 0.0 < ball.radius_s <= cap + 1e-15


def test_us_ball_no_visits_falls_back_to_cap():
    # the middle-strip fixed line never reaches the window
    cert = default_certificate(REF_EX)
    ball = ind.us_ball(REF_EX, (0.45, 0.5), 1.0, cert)
    assert ball.radius_u == pytest.approx(cert.C3 / 3.0)
    assert ball.radius_s == pytest.approx(cert.C3 / 3.0)


def test_us_ball_rho_validation():
    cert = default_certificate(REF_EX)
    with pytest.raises(ValueError):
        ind.us_ball(REF_EX, (0.79, 0.005), 0.0, cert)


# --- charts ---------------------------------------------------------------

def test_chart_round_trip_and_norm_identity():
    rng = np.random.default_rng(3)
    rp = sp.sample_returning_point(REF_EX, rng)
    ch = ind.chart(REF_EX, rp.M)
    for _ in range(10):
        xi = rng.uniform(-1.0, 1.0, size=2)
        pt = ch.to_plane(xi)
        np.testing.assert_allclose(ch.from_plane(pt), xi, atol=1e-12)
        # the chart isometry: adapted max-norm of the plane vector equals
        # l(M) times the max-norm of the chart coordinates
        v = np.asarray(pt) - np.asarray(rp.M)
        assert adapted_norm(ch.frame, v) == pytest.approx(
            ch.l * np.max(np.abs(xi)), abs=1e-12)


def test_chart_rejects_tangency_column():
    with pytest.raises(OutOfDomain):
        ind.chart(REF_EX, (REF_EX.q, 0.0))


def test_kergodic_fixes_origin():
    rng = np.random.default_rng(4)
    rp = sp.sample_returning_point(REF_EX, rng)
    st = ind.induced_map(REF_EX, rp.M)
    ch_m = ind.chart(REF_EX, rp.M)
    ch_f = ind.chart(REF_EX, st.target)
    z = ind.kergodic_apply(REF_EX, ch_m, ch_f, (0.0, 0.0), st.k)
    np.testing.assert_allclose(z, [0.0, 0.0], atol=1e-9)


@pytest.mark.parametrize("params,seed", [(REF_EX, 10), (REF_STRICT, 11)])
def test_kergodic_derivative_hyperbolicity(params, seed):
    # expansion at least sigma^(k/2) on e1, contraction at least
    # lam^(k/2) on e2 in chart coordinates
    rng = np.random.default_rng(seed)
    for rp in sp.sample_A_points(params, rng, 8):
        st = ind.induced_map(params, rp.M)
        if st.case != "return":
            continue
        ch_m = ind.chart(params, rp.M)
        ch_f = ind.chart(params, st.target)
        d0 = ind.kergodic_derivative(params, ch_m, ch_f, st.k)
        assert np.linalg.norm(d0 @ [1.0, 0.0]) >= params.sigma ** (st.k / 2)
        assert np.linalg.norm(d0 @ [0.0, 1.0]) <= params.lam ** (st.k / 2)


# --- distortion -----------------------------------------------------------

def test_distortion_probe_ref_ex():
    cert = default_certificate(REF_EX)
    rng = np.random.default_rng(0)
    rp = sp.sample_returning_point(REF_EX, rng)
    rep = ind.distortion_probe(REF_EX, rp.M, cert, np.random.default_rng(1))
    assert rep.n_pairs > 0
    assert rep.worst_ratio < 1.0
    assert math.isfinite(rep.C5_est) and rep.C5_est > 0.0


def test_distortion_probe_ref_strict_finite():
    # the stable image differences sit at the float64 noise floor, so the
    # defect ratio saturates near 1; the estimate must stay finite
    cert = default_certificate(REF_STRICT)
    rng = np.random.default_rng(0)
    rp = sp.sample_returning_point(REF_STRICT, rng)
    rep = ind.distortion_probe(REF_STRICT, rp.M, cert,
                               np.random.default_rng(1))
    assert rep.worst_ratio <= 1.0 + 1e-9
    assert math.isfinite(rep.C5_est)


def test_distortion_probe_needs_return_step():
    cert = default_certificate(REF_EX)
    with pytest.raises(OutOfDomain):
        ind.distortion_probe(REF_EX, (0.79, 0.0036), cert,
                             np.random.default_rng(0))


# --- crossing certificates ------------------------------------------------

def test_crossing_probe_angles():
    rng = np.random.default_rng(6)
    rp = sp.sample_returning_point(REF_EX, rng)
    cp = ind.crossing_probe(REF_EX, rp.M)
    l = length_scale(REF_EX, rp.M)
    assert cp.alpha == pytest.approx(math.atan(2.0 * REF_EX.c * l))
    assert cp.delta == pytest.approx(math.atan(math.tan(cp.alpha) / 4.0))
    assert cp.gamma_angle <= cp.alpha


def test_parabola_crosses_segment():
    p = REF_EX
    # vertex parabola against a horizontal segment above the vertex
    assert ind._parabola_crosses_segment(p, 0.0, (0.7, 0.005), (0.8, 0.005))
    # segment entirely below the parabola
    assert not ind._parabola_crosses_segment(p, 0.0, (0.74, -0.01),
                                             (0.76, -0.01))


@pytest.mark.parametrize("params,seed", [(REF_EX, 0), (REF_STRICT, 0)])
def test_u_crossing_certificate_passes(params, seed):
    cert = default_certificate(params)
    rng = np.random.default_rng(seed)
    for rp in sp.sample_A_points(params, rng, 6):
        rep = ind.u_crossing_certificate(params, rp.M, 1.0, cert)
        assert rep.c0_ok and rep.eps0_ok and rep.eta_ok
        assert rep.n_return >= 1


def test_u_crossing_certificate_checks_subset():
    cert = default_certificate(REF_EX)
    rng = np.random.default_rng(0)
    rp = sp.sample_returning_point(REF_EX, rng)
    rep = ind.u_crossing_certificate(REF_EX, rp.M, 1.0, cert,
                                     checks=("c0",))
    assert rep.c0_ok and not rep.eps0_ok and not rep.eta_ok
    assert rep.n_return is None


def test_u_crossing_no_return_raises():
    cert = default_certificate(REF_EX)
    with pytest.raises(NoReturn):
        ind.u_crossing_certificate(REF_EX, (0.79, 0.005), 1.0, cert)


def test_cross_report_csv_row():
    rep = ind.CrossReport(M=(0.79, 0.005), rho=1.0, c0_ok=True,
                          eps0_ok=True, eta_ok=False, n_return=6)
    row = rep.csv_row()
    assert row[3] == "true" and row[5] == "false" and row[6] == "6"


# --- calibration ----------------------------------------------------------

def test_calibrate_certificate_deterministic():
    a = ind.calibrate_certificate(REF_EX, sample_budget=30, seed=2)
    b = ind.calibrate_certificate(REF_EX, sample_budget=30, seed=2)
    assert a.to_json() == b.to_json()


def test_calibrate_certificate_provenance_and_coupling():
    cert = ind.calibrate_certificate(REF_EX, sample_budget=30, seed=2)
    for name in ("chi1", "chi", "C0", "eps0", "eta", "C5"):
        assert cert.provenance[name] == "estimated"
    assert cert.C3 == pytest.approx(cert.rho1 * cert.C0)
    assert cert.chi0 == 4.0


def test_calibrated_constants_pass_on_fresh_strict_samples():
    cert = ind.calibrate_certificate(REF_STRICT, sample_budget=30, seed=2)
    rng = np.random.default_rng(9)
    for rp in sp.sample_A_points(REF_STRICT, rng, 6):
        rep = ind.u_crossing_certificate(REF_STRICT, rp.M, 1.0, cert)
        assert rep.c0_ok and rep.eps0_ok and rep.eta_ok
