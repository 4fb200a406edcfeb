import math

import numpy as np
import pytest

from parabolic_nonlocal.evolution import l2h_distance, propagate
from parabolic_nonlocal.galerkin import (
    assemble_form_matrix,
    audit_dini,
    build_sine_space,
    default_audit_grid,
    estimate_bounds,
)
from parabolic_nonlocal.models import (
    CoefficientField,
    audit_coefficient_field,
    constant_coefficient,
    cosine_bump_kernel,
    divergence_form_assemble,
    preset_evi,
    preset_heat_timevarying,
    time_power_coefficient,
)
from parabolic_nonlocal.nonlinearity import (
    ConvexFunctional,
    evi_residual,
    quadratic_functional,
)
from parabolic_nonlocal.nonlocal_solver import (
    SolverConfig,
    audit_problem,
    g_constant,
    solve_nonlocal,
)


class TestCoefficientFields:
    def test_constant_field_audits_clean(self):
        field = constant_coefficient(2.0)
        audit = audit_coefficient_field(field, 1.0, math.pi)
        assert audit["ellipticity_ok"] and audit["holder_ok"]

    def test_time_power_field_audits_clean(self):
        field = time_power_coefficient(1.0, 0.5, 0.6)
        audit = audit_coefficient_field(field, 1.0, math.pi)
        assert audit["ellipticity_ok"] and audit["holder_ok"]

    def test_understated_increment_bound_caught(self):
        # rougher-in-time than declared: increments of t^0.4 exceed K t^0.6
        lying = CoefficientField(lambda t, x: 1.0 + 0.5 * t**0.4, nu=1.0,
                                 holder_K=0.5, holder_exponent=0.6)
        audit = audit_coefficient_field(lying, 1.0, math.pi)
        assert not audit["holder_ok"]

    def test_floors_validated(self):
        with pytest.raises(ValueError):
            CoefficientField(lambda t, x: 1.0, nu=0.0, holder_K=1.0, holder_exponent=0.6)
        with pytest.raises(ValueError):
            CoefficientField(lambda t, x: 1.0, nu=1.0, holder_K=1.0, holder_exponent=1.5)


class TestDivergenceFormAssembly:
    def test_unit_coefficient_recovers_energy_gram(self):
        sp = build_sine_space(3, math.pi)
        form = divergence_form_assemble(constant_coefficient(1.0), sp, quad_order=6)
        s = assemble_form_matrix(form, 0.0)
        assert np.allclose(s, np.diag([1.0, 4.0, 9.0]), atol=1e-9)

    def test_linearity_in_coefficient(self):
        sp = build_sine_space(4, math.pi)
        one = divergence_form_assemble(constant_coefficient(1.0), sp, quad_order=6)
        two = divergence_form_assemble(constant_coefficient(2.0), sp, quad_order=6)
        assert np.allclose(assemble_form_matrix(two, 0.3),
                           2.0 * assemble_form_matrix(one, 0.3), atol=1e-13)

    def test_separable_coefficient_scales_and_audits(self):
        sp = build_sine_space(4, math.pi)
        field = time_power_coefficient(1.0, 0.5, 0.6)
        form = divergence_form_assemble(field, sp, quad_order=6)
        t = 1.0
        assert np.allclose(assemble_form_matrix(form, t),
                           1.5 * np.diag([1.0, 4.0, 9.0, 16.0]), atol=1e-8)
        m_hat, a_hat = estimate_bounds(form, default_audit_grid(1.0))
        assert m_hat == pytest.approx(1.5, abs=1e-6)
        assert a_hat == pytest.approx(1.0, abs=1e-6)
        rep = audit_dini(form, np.geomspace(1e-4, 1e-2, 9))
        assert rep.dini_pass
        assert rep.dini_exponent == pytest.approx(0.6, abs=0.05)

    def test_declared_constants_hold(self):
        sp = build_sine_space(4, math.pi)
        form = divergence_form_assemble(time_power_coefficient(1.0, 0.5, 0.6), sp, 6)
        m, a = estimate_bounds(form, default_audit_grid(form.horizon))
        assert m <= form.bound_M * (1 + 1e-6)
        assert a >= form.coercivity_alpha * (1 - 1e-6)

    def test_quadrature_refinement_stable(self):
        sp = build_sine_space(3, math.pi)
        field = time_power_coefficient(1.0, 0.5, 0.6)
        low = divergence_form_assemble(field, sp, quad_order=6)
        high = divergence_form_assemble(field, sp, quad_order=12)
        gap = np.abs(assemble_form_matrix(low, 0.7) - assemble_form_matrix(high, 0.7)).max()
        assert gap <= 1e-8

    def test_order_floor(self):
        sp = build_sine_space(2, math.pi)
        with pytest.raises(ValueError):
            divergence_form_assemble(constant_coefficient(1.0), sp, quad_order=2)


class TestMollifierKernels:
    def test_unit_mass(self):
        k = cosine_bump_kernel(3.0)
        assert k.mass == pytest.approx(1.0, abs=1e-6)

    def test_derivative_mass_scales_inversely_with_width(self):
        for width in (2.5, 4.0, 8.0):
            k = cosine_bump_kernel(width)
            assert k.derivative_mass == pytest.approx(2.0 / width, rel=1e-3)

    def test_bad_support_rejected(self):
        from parabolic_nonlocal.models import MollifierKernel

        with pytest.raises(ValueError):
            MollifierKernel(lambda x: 1.0, support_radius=-1.0, derivative_mass=0.5, mass=1.0)
        with pytest.raises(ValueError):
            MollifierKernel(lambda x: 1.0, support_radius=1.0, derivative_mass=0.5, mass=0.9)


class TestHeatPreset:
    def test_floors(self):
        with pytest.raises(ValueError):
            preset_heat_timevarying(3, 64)
        with pytest.raises(ValueError):
            preset_heat_timevarying(4, 32)

    def test_audits_pass_before_solve(self):
        prob = preset_heat_timevarying(4, 64)
        assert prob.g.bound_params["solver_ok"]
        audit = audit_problem(prob, seed=1)
        assert audit["passed"]

    def test_solve_converges(self):
        prob = preset_heat_timevarying(4, 64)
        rep = solve_nonlocal(prob, SolverConfig(inner_tol=1e-10))
        assert rep.converged
        assert rep.fixed_point_residual <= 1e-8

    def test_zero_data_variant_is_zero(self):
        from dataclasses import replace

        from parabolic_nonlocal.nonlinearity import zero_nonlinearity

        prob = preset_heat_timevarying(4, 64)
        trivial = replace(prob, f=zero_nonlinearity(), g=g_constant(np.zeros(4)))
        rep = solve_nonlocal(trivial)
        assert rep.converged
        assert not rep.solution.values.any()

    def test_refinement_changes_endpoint_at_scheme_order(self):
        cfg = SolverConfig(inner_tol=1e-11)
        coarse = solve_nonlocal(preset_heat_timevarying(4, 64), cfg)
        fine = solve_nonlocal(preset_heat_timevarying(4, 128), cfg)
        finest = solve_nonlocal(preset_heat_timevarying(4, 256), cfg)
        sp = coarse.solution.space
        d1 = sp.h_norm(coarse.solution.values[-1] - fine.solution.values[-1])
        d2 = sp.h_norm(fine.solution.values[-1] - finest.solution.values[-1])
        assert d2 < d1
        # drift at the endpoint shrinks roughly like dt^2
        assert d1 / d2 == pytest.approx(4.0, rel=0.5)


class TestEviPreset:
    def test_quadratic_mode_one_closed_form(self):
        phi = quadratic_functional(4)
        prob = preset_evi(4, 256, phi)
        rep = solve_nonlocal(prob, SolverConfig(inner_tol=1e-10, damping=0.8))
        assert rep.converged
        exact = np.exp(-2.0 * rep.solution.grid.nodes)
        assert np.abs(rep.solution.values[:, 0] - exact).max() < 1e-4
        assert np.abs(rep.solution.values[:, 1:]).max() < 1e-12

    def test_zero_functional_reduces_to_homogeneous_flow(self):
        zero_phi = ConvexFunctional(lambda x: 0.0, lambda x: np.zeros_like(x), 4, 0.0)
        prob = preset_evi(4, 64, zero_phi)
        rep = solve_nonlocal(prob, SolverConfig(inner_tol=1e-12, lambda_steps=2, damping=1.0))
        x0 = np.zeros(4)
        x0[0] = 1.0
        hom = propagate(prob.form, prob.proj, prob.grid, x0)
        assert l2h_distance(rep.solution, hom) <= 1e-10

    def test_variational_inequality_residual(self):
        phi = quadratic_functional(4)
        prob = preset_evi(4, 128, phi)
        rep = solve_nonlocal(prob, SolverConfig(inner_tol=1e-10, damping=0.8))
        res = evi_residual(prob.form, phi, rep.solution, 50, seed=4)
        assert res >= -10.0 * prob.grid.dt

    def test_audit_gate(self):
        concave = ConvexFunctional(lambda x: -0.5 * float(x @ x),
                                   lambda x: -np.asarray(x), 4, 1.0)
        with pytest.raises(ValueError):
            preset_evi(4, 64, concave)
        no_lip = ConvexFunctional(lambda x: 0.5 * float(x @ x),
                                  lambda x: np.asarray(x), 4, None)
        with pytest.raises(ValueError):
            preset_evi(4, 64, no_lip)
