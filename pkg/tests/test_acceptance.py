"""Acceptance suite: one test per acceptance criterion, each printing a
pass/fail line (run with -s to see them inline).

Criterion 3's entrywise target for the transported convexity matrix at the
chart origin is implemented verbatim and expected to fail: the pinned
assembly of criterion 2 forces the off-axis diagonal entries of that matrix
to 12, not 4, for a flat surface (the quadratic-form lower bound 4|xi|^2
holds, with the minimal eigenvalue exactly 4; see notes in the decisions
ledger).  The strict xfail keeps the discrepancy visible without hiding it.
"""

import time

import numpy as np
import pytest

from carleman import (
    MatrixField,
    SchrodingerData,
    WaveData,
    build_grid,
    certify_ellipticity,
    check_admissibility,
    conjugation_residual,
    flatten_and_certify_hypersurface,
    green_residual,
    magnetic_expansion_residual,
    make_example_weight,
    observability_experiment,
    riemannian_identity_residual,
    solve_evolution,
    smoothing_bound_check,
    theta_decomposition,
)
from carleman.audit import compare_refinement, default_ensemble, sweep_audit
from carleman.polynomials import Polynomial
from carleman.pseudoconvex import theta_tensors
from conftest import interior_bump_spacetime, sine_mode

_TIMINGS = {}


def _report(criterion, passed, detail=""):
    stamp = "PASS" if passed else "FAIL"
    print(f"[{stamp}] criterion {criterion}: {detail}")


def _timed(criterion, budget, fn):
    t0 = time.time()
    result = fn()
    elapsed = time.time() - t0
    _TIMINGS[criterion] = elapsed
    assert elapsed < budget, f"criterion {criterion} exceeded {budget}s ({elapsed:.2f}s)"
    return result


def random_poly(rng, nvars, degree=3):
    table = {}
    for _ in range(6):
        powers = tuple(int(v) for v in rng.integers(0, degree + 1, size=nvars))
        if sum(powers) <= degree:
            table[powers] = float(rng.normal())
    return Polynomial(nvars, table)


def test_criterion_1_theta_identity_field():
    def body():
        rng = np.random.default_rng(101)
        field = MatrixField.identity(2)
        worst = 0.0
        for _ in range(50):
            h = random_poly(rng, 2)
            x = rng.uniform(-1.0, 1.0, size=2)
            dec = theta_decomposition(field, h, x)
            worst = max(worst, float(np.max(np.abs(dec.Theta - 2.0 * h.eval_hessian(x)))))
        return worst

    worst = _timed(1, 1.0, body)
    ok = worst <= 1e-12
    _report(1, ok, f"max |Theta - 2 hess| = {worst:.3e} over 50 random weights")
    assert ok


def test_criterion_2_scalar_affine_cross_check():
    def body():
        field = MatrixField.scalar_affine(2, 1.0, [0.1, 0.0])
        weight = Polynomial.squared_distance([-1.0, 0.0], scale=0.5)
        rng = np.random.default_rng(202)
        x0 = np.array([-1.0, 0.0])
        grad_a = np.array([0.1, 0.0])
        worst_closed = 0.0
        worst_fd = 0.0
        pts = rng.uniform(0.0, 1.0, size=(100, 2))
        _, ups, _ = theta_tensors(field, weight, pts)
        for i, x in enumerate(pts):
            a = 1.0 + x[0] / 10.0
            d = x - x0
            closed = -a * np.dot(grad_a, d) * np.eye(2) + 2.0 * a * np.outer(grad_a, d)
            worst_closed = max(worst_closed, float(np.max(np.abs(ups[i] - closed))))
            # independent finite-difference assembly of the rank-3 tensor
            step = 1e-6
            av = field(x)
            da = np.empty((2, 2, 2))
            for p in range(2):
                e = np.zeros(2)
                e[p] = step
                da[..., p] = (field(x + e) - field(x - e)) / (2 * step)
            lam_fd = np.empty((2, 2, 2))
            for k in range(2):
                for l in range(2):
                    for m in range(2):
                        lam_fd[k, l, m] = -sum(
                            da[k, l, p] * av[p, m] for p in range(2)
                        ) + 2 * sum(av[k, p] * da[l, m, p] for p in range(2))
            ups_fd = np.einsum("klm,m->kl", lam_fd, weight.eval_gradient(x))
            worst_fd = max(worst_fd, float(np.max(np.abs(ups[i] - ups_fd))))
        point = theta_decomposition(field, weight, [0.5, 0.0])
        point_err = float(np.max(np.abs(point.Theta - np.diag([2.3625, 2.0475]))))
        return worst_closed, worst_fd, point_err

    worst_closed, worst_fd, point_err = _timed(2, 1.0, body)
    ok = worst_closed <= 1e-10 and worst_fd <= 1e-5 and point_err <= 1e-12
    _report(
        2, ok,
        f"closed-form dev {worst_closed:.2e}, fd-assembly dev {worst_fd:.2e}, "
        f"pinned point dev {point_err:.2e}",
    )
    assert worst_closed <= 1e-10
    assert point_err <= 1e-12
    assert worst_fd <= 1e-5  # finite-difference oracle at step 1e-6


@pytest.fixture(scope="module")
def flat_chart():
    field = MatrixField.identity(2)
    return flatten_and_certify_hypersurface(field, Polynomial(1, {}), 0.5)


def test_criterion_3_flattening_supporting_checks(flat_chart):
    def body():
        chart, cert = flat_chart
        return chart, cert

    chart, cert = _timed(3, 1.0, body)
    origin_ok = bool(np.allclose(chart.transported(np.zeros(2)), np.eye(2), atol=1e-12))
    jac_ok = chart.jacobian_bound_ok
    form_ok = abs(chart.theta_origin_min_eig - 4.0) <= 1e-8
    ok = origin_ok and jac_ok and form_ok and cert.passed
    _report(
        3, ok,
        "supporting checks: transported field is I at 0, Jacobian bound holds, "
        f"min eig of Theta at 0 = {chart.theta_origin_min_eig:.9f} (= 4)",
    )
    assert ok


@pytest.mark.xfail(
    strict=True,
    reason="entrywise Theta(0) = 4I conflicts with the Lambda/Upsilon assembly "
    "pinned by criterion 2; the honest value is diag(12, 4) (ledgered)",
)
def test_criterion_3_flattening_entrywise_target(flat_chart):
    chart, _ = flat_chart
    dev = float(np.max(np.abs(chart.theta_origin - 4.0 * np.eye(2))))
    _report(3, dev <= 1e-8, f"entrywise |Theta(0) - 4I| = {dev:.3e} (computed "
            f"{np.diag(chart.theta_origin).tolist()} on the diagonal)")
    assert dev <= 1e-8


def test_criterion_4_conjugation_identity_refinement():
    def body():
        res = []
        for nodes in (17, 33):
            g = build_grid([0, 0], [1, 1], [nodes, nodes], -1.0, 1.0, nodes)
            field = MatrixField.scalar_affine(2, 1.0, [0.1, 0.0], domain=g.domain)
            spec = make_example_weight([-0.5, 0.5], 0.0, 0.25, 0.0, g, lam=1.0)
            u = interior_bump_spacetime(g)
            res.append(conjugation_residual(u, spec, field, "wave", 2.0, g))
        return res

    res = _timed(4, 30.0, body)
    factor = res[0] / res[1]
    ok = 3.0 <= factor <= 5.0
    _report(4, ok, f"residuals {res[0]:.3e} -> {res[1]:.3e}, factor {factor:.2f}")
    assert ok


def test_criterion_5_canonical_wave_audit():
    taus = [2.0, 4.0, 8.0, 16.0]
    lams = [1.0, 2.0, 4.0]

    def run(nodes):
        g = build_grid([0, 0], [1, 1], [nodes, nodes], -1.0, 1.0, 33)
        field = MatrixField.identity(2, domain=g.domain)
        spec = make_example_weight([-0.5, 0.5], 0.0, 0.25, 0.0, g, lam=2.0)
        ens = default_ensemble(g, 20250810, count=20)
        return g, field, sweep_audit(ens, spec, field, None, "wave_full",
                                     taus, lams, g)

    def body():
        g17, field17, coarse = run(17)
        _, _, fine = run(33)
        drift, stable = compare_refinement(coarse, fine)

        # negative controls must name the violated conditions exactly
        ell = certify_ellipticity(field17, g17)
        bad_curvature = make_example_weight([-0.5, 0.5], 0.0, 1.0, 0.0, g17, lam=2.0)
        codes_both = check_admissibility(
            bad_curvature, field17, g17, "wave", ellipticity=ell
        ).codes()
        bad_cone = make_example_weight([-0.5, 0.5], 0.0, 0.5, 0.0, g17, lam=2.0)
        codes_cone = check_admissibility(
            bad_cone, field17, g17, "wave", ellipticity=ell
        ).codes()
        return coarse, fine, stable, codes_both, codes_cone

    coarse, fine, stable, codes_both, codes_cone = _timed(5, 180.0, body)
    i0 = coarse.taus.index(coarse.tau_star)
    positive = bool(np.all(coarse.aleph_emp[i0:, :] > 0.0))
    overall_drift = abs(fine.aleph_overall - coarse.aleph_overall) / coarse.aleph_overall
    controls_ok = (
        "(2.1)" in codes_both and "(2.2)" in codes_both and codes_cone == ["(2.1)"]
    )
    ok = positive and stable and controls_ok
    _report(
        5, ok,
        f"tau* = {coarse.tau_star}, aleph_overall {coarse.aleph_overall:.4f} -> "
        f"{fine.aleph_overall:.4f} (drift {overall_drift:.2%}), "
        f"controls {codes_both} / {codes_cone}",
    )
    assert positive
    assert stable and overall_drift < 0.5
    assert controls_ok


def test_criterion_6_ucp_region_certificate():
    from carleman.weights import UCPGeometry, ucp_region_certificate

    def body():
        geom = UCPGeometry(center=(0.0, 0.0), c=1.0, r=0.5, r0=0.5, rho0=0.125,
                           rho1=0.25, eps=0.1, t_span=3.0)
        cert = ucp_region_certificate(geom, 1.0, 0.0)
        geom2 = UCPGeometry(center=(0.0, 0.0), c=1.0, r=0.5, r0=0.5, rho0=0.125,
                            rho1=0.25, eps=0.1, t_span=2.0)
        cert2 = ucp_region_certificate(geom2, 1.0, 0.0)
        return cert, cert2

    cert, cert2 = _timed(6, 0.1, body)
    exps_ok = np.allclose(cert.exponents, (0.425, 0.4, 0.40625), atol=1e-12)
    ok = exps_ok and cert.passed and not cert2.passed and not cert2.time_threshold_ok
    _report(
        6, ok,
        f"exponents {cert.exponents}, c0 > max(c1, c2): {cert.passed}; "
        f"t=2 fails 24*eps/c: {not cert2.passed}",
    )
    assert ok


def test_criterion_7_wave_observability_oracle():
    def body():
        nodes = 256
        h = 1.0 / (nodes - 1)
        nt = int(np.ceil(2.0 / (0.5 * 0.9 * h))) + 1
        g = build_grid([0.0], [1.0], [nodes], 0.0, 2.0, nt)
        field = MatrixField.identity(1, domain=g.domain)
        x = g.space_points[..., 0]
        datum = WaveData(u0=np.sin(np.pi * x), u1=np.zeros_like(x))
        psi0 = Polynomial.squared_distance([-0.5], scale=0.5)
        report = observability_experiment("wave", field, psi0, 0.5, 2.0, [datum], g)
        return report

    report = _timed(7, 5.0, body)
    ratio = report.samples[0].ratio
    rel = abs(ratio * np.sqrt(2.0) - 1.0)
    ok = rel <= 0.02 and report.gamma_plus_description.startswith("face 1")
    _report(7, ok, f"ratio {ratio:.6f} vs 1/sqrt(2), rel dev {rel:.2%}, "
            f"observed on {report.gamma_plus_description}")
    assert ok


def test_criterion_8_schrodinger_conservation():
    def body():
        g = build_grid([0, 0], [1, 1], [33, 33], 0.0, 1.0, 1001)
        field = MatrixField.identity(2, domain=g.domain)
        u0 = sine_mode(g, (1, 2)) * np.exp(1j * 3.0 * g.space_points[..., 0])
        state = solve_evolution("schrodinger", field, None, SchrodingerData(u0), 1.0, g)
        norms = state.energy.values
        return float(np.max(np.abs(norms - norms[0])) / norms[0])

    drift = _timed(8, 30.0, body)
    ok = drift <= 1e-10
    _report(8, ok, f"relative norm drift over 1000 trapezoidal steps: {drift:.3e}")
    assert ok


def test_criterion_9_smoothing_bound():
    def body():
        g = build_grid([0, 0], [1, 1], [33, 33], 0.0, 1.0, 3)
        field = MatrixField.identity(2, domain=g.domain)
        sweep = smoothing_bound_check(field, g, np.geomspace(1e-5, 1.0, 60))
        t_star = 1.0 / (2.0 * sweep.argmax_mu)
        sharp = smoothing_bound_check(field, g, [t_star])
        return sweep, sharp

    sweep, sharp = _timed(9, 10.0, body)
    envelope = (2.0 * np.e) ** -0.5
    ok = sweep.aleph0_emp <= envelope + 1e-9 and abs(sharp.aleph0_emp - envelope) <= 1e-9
    _report(
        9, ok,
        f"aleph0 = {sweep.aleph0_emp:.9f} <= (2e)^-1/2 = {envelope:.9f}; "
        f"equality at t = 1/(2 mu): {sharp.aleph0_emp:.9f}",
    )
    assert ok


def test_criterion_10_structural_identities():
    def body():
        # green: trivial exactness and asymptotic halving
        g0 = build_grid([0, 0], [1, 1], [17, 17], 0.0, 1.0, 3)
        ident = MatrixField.identity(2, domain=g0.domain)
        trivial_green = green_residual(
            g0.space_points[..., 0] ** 2, np.zeros(g0.space_shape), ident, g0
        )
        greens = []
        for nodes in (65, 129):
            g = build_grid([0, 0], [1, 1], [nodes, nodes], 0.0, 1.0, 3)
            field = MatrixField.scalar_affine(2, 1.0, [0.1, 0.05], domain=g.domain)
            x = g.space_points
            u = np.sin(np.pi * x[..., 0]) * np.cos(0.5 * np.pi * x[..., 1])
            v = sine_mode(g, (1, 1))
            greens.append(green_residual(u, v, field, g))

        # riemannian: trivial cases exact, variable field second order
        g3 = build_grid([0, 0, 0], [1, 1, 1], [9, 9, 9], 0.0, 1.0, 3)
        ident3 = MatrixField.identity(3, domain=g3.domain)
        trivial_riem = riemannian_identity_residual(
            ident3, sine_mode(g3, (1, 1, 1)), g3
        )
        const3 = MatrixField.constant(np.diag([1.0, 1.0, 4.0]), domain=g3.domain)
        trivial_riem_c = riemannian_identity_residual(
            const3, sine_mode(g3, (1, 1, 1)), g3
        )
        riems = []
        for nodes in (9, 17):
            g = build_grid([0, 0, 0], [1, 1, 1], [nodes] * 3, 0.0, 1.0, 3)
            field = MatrixField.scalar_affine(3, 1.0, [0.2, 0.0, 0.1], domain=g.domain)
            riems.append(riemannian_identity_residual(field, sine_mode(g, (1, 1, 1)), g))

        # magnetic: b = 0 exact, variable b second order
        zero_b = [Polynomial(2, {}), Polynomial(2, {})]
        trivial_mag = magnetic_expansion_residual(ident, zero_b, sine_mode(g0, (1, 1)), g0)
        mags = []
        for nodes in (17, 33):
            g = build_grid([0, 0], [1, 1], [nodes, nodes], 0.0, 1.0, 3)
            field = MatrixField.scalar_affine(2, 1.0, [0.1, 0.0], domain=g.domain)
            b = [Polynomial.coordinate(2, 1), Polynomial.coordinate(2, 0) * 0.5]
            u = sine_mode(g, (1, 1)) * np.exp(1j * 2.0 * g.space_points[..., 0])
            mags.append(magnetic_expansion_residual(field, b, u, g))
        return trivial_green, greens, trivial_riem, trivial_riem_c, riems, trivial_mag, mags

    (trivial_green, greens, trivial_riem, trivial_riem_c, riems,
     trivial_mag, mags) = _timed(10, 30.0, body)
    fg = greens[0] / greens[1]
    fr = riems[0] / riems[1]
    fm = mags[0] / mags[1]
    ok = (
        trivial_green == 0.0
        and trivial_riem <= 1e-12
        and trivial_riem_c <= 1e-11
        and trivial_mag <= 1e-12
        and 3.0 <= fg <= 5.0
        and 3.0 <= fr <= 5.0
        and 3.0 <= fm <= 5.0
    )
    _report(
        10, ok,
        f"halving factors: green {fg:.2f}, metric {fr:.2f}, magnetic {fm:.2f}; "
        f"trivial cases {trivial_green:.1e}/{trivial_riem:.1e}/{trivial_mag:.1e}",
    )
    assert ok


def test_criterion_11_suite_budget_bookkeeping():
    # the per-criterion budgets above bound the acceptance share of the
    # suite; the global < 5 min requirement is enforced by the pytest run
    # itself (see README); here we assert the recorded times stay inside
    # their individual budgets with margin
    total = sum(_TIMINGS.values())
    _report(11, total < 300.0, f"acceptance criteria wall time {total:.1f}s")
    assert total < 300.0
