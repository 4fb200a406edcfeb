"""Concrete problem instances: divergence-form coefficients on an interval,
mollifier kernels, and ready-to-solve presets.

Presets are one-dimensional on purpose: every bundled instance has a
closed-form or independently computable oracle at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .evolution import TimeGrid
from .galerkin import GalerkinSpace, Matrix, TimeForm, build_sine_space, project
from .nonlinearity import ConvexFunctional, Nonlinearity, bounded_source, check_monotone, gradient_consistency
from .nonlocal_solver import (
    NonlocalProblem,
    exp_shift,
    g_constant,
    g_mollified_integral,
)


@dataclass(frozen=True)
class CoefficientField:
    """Scalar diffusion coefficient kappa(t, x) with declared floors.

    ``nu`` is the ellipticity floor, ``holder_K``/``holder_exponent`` bound
    the time increments; the exponent must exceed 1/2 for the form's
    time-regularity audit to pass.
    """

    eval: Callable[[float, float], float]
    nu: float
    holder_K: float
    holder_exponent: float

    def __post_init__(self) -> None:
        if self.nu <= 0.0:
            raise ValueError("ellipticity floor nu must be positive")
        if not 0.0 < self.holder_exponent <= 1.0:
            raise ValueError("holder_exponent must lie in (0, 1]")


def constant_coefficient(value: float) -> CoefficientField:
    return CoefficientField(lambda t, x: value, nu=value, holder_K=1e-12, holder_exponent=1.0)


def time_power_coefficient(base: float = 1.0, amp: float = 0.5,
                           exponent: float = 0.6) -> CoefficientField:
    """kappa(t, x) = base + amp * t^exponent; exponent in (0,1] gives the
    matching time-increment bound with constant amp."""
    return CoefficientField(
        eval=lambda t, x: base + amp * t**exponent,
        nu=base,
        holder_K=amp,
        holder_exponent=exponent,
    )


def audit_coefficient_field(field: CoefficientField, horizon: float,
                            domain_length: float, n_samples: int = 400,
                            seed=0) -> dict:
    """Spot-check the declared ellipticity and time-increment bounds."""
    rng = np.random.default_rng(seed)
    ell_worst = math.inf
    holder_worst = -math.inf
    for _ in range(n_samples):
        x = float(rng.uniform(0.0, domain_length))
        t1 = float(rng.uniform(0.0, horizon))
        t2 = float(rng.uniform(0.0, horizon))
        ell_worst = min(ell_worst, field.eval(t1, x))
        gap = abs(field.eval(t1, x) - field.eval(t2, x))
        bound = field.holder_K * abs(t1 - t2) ** field.holder_exponent
        holder_worst = max(holder_worst, gap - bound)
    return {
        "ellipticity_ok": bool(ell_worst >= field.nu - 1e-12),
        "ellipticity_min": ell_worst,
        "holder_ok": bool(holder_worst <= 1e-10),
        "holder_excess": holder_worst,
    }


@dataclass(frozen=True)
class MollifierKernel:
    """A nonnegative, compactly supported, unit-mass smoothing profile.

    ``derivative_mass`` is the L1 mass of the profile's derivative; it must
    stay below 1 for the kernel to be usable in nonlocal solves.
    """

    profile: Callable[[float], float]
    support_radius: float
    derivative_mass: float
    mass: float

    def __post_init__(self) -> None:
        if self.support_radius <= 0.0:
            raise ValueError("support_radius must be positive")
        if not 1.0 - 1e-6 <= self.mass <= 1.0 + 1e-6:
            raise ValueError(f"kernel mass {self.mass} is not 1 within 1e-6")


def _kernel_masses(profile: Callable[[float], float], radius: float,
                   n_points: int = 4001) -> tuple[float, float]:
    xs = np.linspace(-radius, radius, n_points)
    vals = np.array([profile(float(x)) for x in xs])
    mass = float(np.trapezoid(vals, xs))
    deriv = np.gradient(vals, xs)
    deriv_mass = float(np.trapezoid(np.abs(deriv), xs))
    return mass, deriv_mass


def cosine_bump_kernel(width: float) -> MollifierKernel:
    """Raised-cosine bump of the given half-width.

    The derivative mass is 2/width, so widths above 2 are usable for solves.
    """

    def profile(x: float) -> float:
        if abs(x) >= width:
            return 0.0
        return (1.0 + math.cos(math.pi * x / width)) / (2.0 * width)

    mass, deriv_mass = _kernel_masses(profile, width)
    return MollifierKernel(profile=profile, support_radius=width,
                           derivative_mass=deriv_mass, mass=mass)


def divergence_form_assemble(field: CoefficientField, space: GalerkinSpace,
                             quad_order: int, horizon: float = 1.0) -> TimeForm:
    """Stiffness of the 1-D divergence form: entries of kappa against mode
    derivatives by composite Gauss-Legendre quadrature.

    The assembly is verified by comparing against doubled quadrature order at
    three sampled times; disagreement above 1e-8 per entry is an error.
    """
    if quad_order < 4:
        raise ValueError("quad_order must be at least 4")

    length = space.domain_length
    n = space.n_modes

    def quad_points(order: int) -> tuple[np.ndarray, np.ndarray]:
        panels = max(16, 2 * n)
        qn, qw = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(0.0, length, panels + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        halves = 0.5 * np.diff(edges)
        xs = (mids[:, None] + halves[:, None] * qn[None, :]).ravel()
        ws = (halves[:, None] * qw[None, :]).ravel()
        return xs, ws

    def basis_derivatives(xs: np.ndarray) -> np.ndarray:
        k = np.arange(1, n + 1)[:, None]
        return math.sqrt(2.0 / length) * (k * math.pi / length) * np.cos(
            k * math.pi * xs[None, :] / length
        )

    xs, ws = quad_points(quad_order)
    dphi = basis_derivatives(xs)
    xs2, ws2 = quad_points(2 * quad_order)
    dphi2 = basis_derivatives(xs2)

    def assemble(t: float, points, weights, deriv) -> Matrix:
        kappa = np.array([field.eval(t, float(x)) for x in points])
        return (deriv * (weights * kappa)[None, :]) @ deriv.T

    for t in (0.0, 0.5 * horizon, horizon):
        gap = np.abs(assemble(t, xs, ws, dphi) - assemble(t, xs2, ws2, dphi2)).max()
        if gap > 1e-8:
            raise RuntimeError(f"quadrature not converged at t={t}: entry drift {gap:.2e}")

    t_samples = np.linspace(0.0, horizon, 33)
    x_samples = np.linspace(0.0, length, 65)
    sup_kappa = max(field.eval(float(t), float(x)) for t in t_samples for x in x_samples)

    return TimeForm(
        space=space,
        stiffness_at=lambda t: assemble(t, xs, ws, dphi),
        bound_M=sup_kappa,
        coercivity_alpha=field.nu,
        horizon=horizon,
        shift_delta=0.0,
        modulus_omega=lambda h: field.holder_K * h**field.holder_exponent,
    )


def heat_source_pattern(space: GalerkinSpace) -> np.ndarray:
    """Smooth unit-pivot-norm source direction with exponentially decaying modes."""
    raw = np.exp(-np.arange(1, space.n_modes + 1, dtype=float))
    return raw / space.h_norm(raw)


def preset_heat_timevarying(n_modes: int, n_steps: int) -> NonlocalProblem:
    """Linear heat flow with a rough-in-time coefficient and a smoothed
    integral initial condition, pre-shifted so the standing audits pass.

    The returned problem carries ``shift_mu``; map solutions back with
    :func:`parabolic_nonlocal.nonlocal_solver.unshift_trajectory`.
    """
    if n_modes < 4:
        raise ValueError("n_modes must be at least 4")
    if n_steps < 64:
        raise ValueError("n_steps must be at least 64")
    space = build_sine_space(n_modes, math.pi)
    horizon = 1.0
    field = time_power_coefficient(1.0, 0.5, 0.6)
    form = divergence_form_assemble(field, space, quad_order=6, horizon=horizon)

    sup_source = 0.1
    pattern = sup_source * heat_source_pattern(space)
    f = bounded_source(lambda t: math.sin(math.pi * t) * pattern, sup_source,
                       label="heat_source")

    kernel = cosine_bump_kernel(4.0)
    g = g_mollified_integral(kernel, [(0.0, 0.5)], space)

    eps = 0.4
    base = NonlocalProblem(
        form=form,
        proj=project(space, n_modes),
        f=f,
        g=g,
        grid=TimeGrid(horizon, n_steps),
        r0=0.5,
        R0=math.inf,
    )
    return exp_shift(base, eps)


def preset_evi(n_modes: int, n_steps: int, phi: ConvexFunctional) -> NonlocalProblem:
    """Gradient-flow problem u' + A u = -grad phi(u) with classical data.

    The functional must pass the monotonicity and gradient-consistency
    audits; its gradient growth comes from the declared Lipschitz constant.
    """
    if n_modes < 1 or n_steps < 8:
        raise ValueError("need n_modes >= 1 and n_steps >= 8")
    if phi.lipschitz_grad is None:
        raise ValueError("phi must declare a gradient Lipschitz constant")
    if check_monotone(phi, 200) < -1e-10:
        raise ValueError("phi failed the monotonicity audit")
    if gradient_consistency(phi, 100, 1e-5) > 1e-5:
        raise ValueError("phi failed the gradient-consistency audit")

    space = build_sine_space(n_modes, math.pi)
    horizon = 1.0
    form = divergence_form_assemble(constant_coefficient(1.0), space,
                                    quad_order=6, horizon=horizon)
    u0 = np.zeros(n_modes)
    u0[0] = 1.0
    grad0 = np.linalg.norm(np.asarray(phi.gradient(np.zeros(n_modes)), dtype=float))
    f = Nonlinearity(
        eval=lambda t, x: -np.asarray(phi.gradient(x), dtype=float),
        growth_a=float(phi.lipschitz_grad),
        growth_b=lambda t: grad0,
        label="gradient_flow",
    )
    return NonlocalProblem(
        form=form,
        proj=project(space, n_modes),
        f=f,
        g=g_constant(u0),
        grid=TimeGrid(horizon, n_steps),
        r0=space.h_norm(u0) + 1.0,
        R0=math.inf,
    )
