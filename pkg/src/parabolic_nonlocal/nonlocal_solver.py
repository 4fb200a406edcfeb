"""Nonlocal initial conditions and the continuation solver for u(0) = g(u).

The fixed point of the data-to-solution map is found by walking a homotopy
parameter from 0 to 1 with damped Picard iterations (optionally secant
accelerated) warm-started at each stage.  Existence theory gives no
algorithm, so non-convergence is a first-class reported outcome, never an
exception: reports carry a status and the homotopy stage reached.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from .evolution import (
    Propagator,
    TimeGrid,
    Trajectory,
    _march,
    build_propagator,
    duhamel_solve,
    l2h_distance,
    make_trajectory,
    zero_trajectory,
)
from .galerkin import (
    GalerkinSpace,
    Matrix,
    Projection,
    TimeForm,
    Vector,
    projected_stiffness_fn,
)
from .nonlinearity import Nonlinearity, apply_superposition


@dataclass(frozen=True)
class NonlocalCondition:
    """An initial condition depending on the whole path: u(0) = g(u)."""

    eval: Callable[[Trajectory], Vector]
    kind: str
    bound_params: dict


def g_constant(x0: Vector) -> NonlocalCondition:
    """Classical initial data as a degenerate path-dependent condition."""
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    return NonlocalCondition(
        eval=lambda traj: x0.copy(),
        kind="constant",
        bound_params={"h_norm_cap": float(np.linalg.norm(x0))},
    )


def _piecewise_linear_integral(traj: Trajectory, a: float, b: float) -> Vector:
    """Exact integral of the piecewise-linear path over [a, b] subset [0, T]."""
    nodes = traj.grid.nodes
    dt = traj.grid.dt
    total = np.zeros(traj.space.n_modes)
    if b <= a:
        return total

    def value_at(t: float) -> Vector:
        j = min(int(t / dt), traj.grid.n_steps - 1)
        w = (t - nodes[j]) / dt
        return (1.0 - w) * traj.values[j] + w * traj.values[j + 1]

    j_lo = max(int(a / dt), 0)
    j_hi = min(int(math.ceil(b / dt)), traj.grid.n_steps)
    for j in range(j_lo, j_hi):
        lo = max(a, nodes[j])
        hi = min(b, nodes[j + 1])
        if hi > lo:
            total += (hi - lo) * 0.5 * (value_at(lo) + value_at(hi))
    return total


def _kernel_cosine_coefficients(kernel, space: GalerkinSpace) -> np.ndarray:
    """Cosine transform of the kernel at the basis wavenumbers.

    Convolving a Dirichlet sine mode with an even kernel multiplies the mode
    by the kernel's cosine transform at the mode's wavenumber, so the
    convolution acts diagonally in sine coordinates.
    """
    a = kernel.support_radius
    length = space.domain_length
    # panels resolve the fastest oscillation over the support
    panels = max(16, int(math.ceil(8.0 * a * space.n_modes / length)))
    q_nodes, q_weights = np.polynomial.legendre.leggauss(10)
    edges = np.linspace(-a, a, panels + 1)
    coeffs = np.zeros(space.n_modes)
    for i in range(panels):
        mid = 0.5 * (edges[i] + edges[i + 1])
        half = 0.5 * (edges[i + 1] - edges[i])
        ys = mid + half * q_nodes
        ws = half * q_weights
        profile = np.array([kernel.profile(float(y)) for y in ys])
        for k in range(1, space.n_modes + 1):
            coeffs[k - 1] += float(np.sum(ws * profile * np.cos(k * math.pi * ys / length)))
    return coeffs


def g_mollified_integral(kernel, intervals, traj_space: GalerkinSpace) -> NonlocalCondition:
    """Smoothed time-integral condition: u(0) = sum_i int_{s_i}^{t_i} (kernel (*) u)(t) dt.

    The convolution is a matrix on basis coordinates; its squared pivot-to-energy
    operator norm ``theta`` is the audited smoothing bound, with
    ``|g(u)|_V^2 <= theta * int |u(t)|_H^2 dt`` for total interval length <= 1.
    Kernels whose derivative mass reaches 1 are flagged unusable for solves.
    """
    ivals = sorted((float(s), float(t)) for s, t in intervals)
    for (s1, t1), (s2, t2) in zip(ivals, ivals[1:]):
        if t1 > s2:
            raise ValueError("intervals must be disjoint")
    for s, t in ivals:
        if t < s:
            raise ValueError("intervals must be ordered pairs (s, t) with s <= t")

    conv = np.diag(_kernel_cosine_coefficients(kernel, traj_space))
    w = traj_space.inv_sqrt_H @ conv.T @ traj_space.gram_V @ conv @ traj_space.inv_sqrt_H
    theta = float(np.linalg.eigvalsh(w).max())

    def eval_g(traj: Trajectory) -> Vector:
        horizon = traj.grid.horizon
        if ivals and (ivals[0][0] < -1e-12 or ivals[-1][1] > horizon * (1 + 1e-12)):
            raise ValueError("intervals must lie inside the trajectory horizon")
        total = np.zeros(traj_space.n_modes)
        for s, t in ivals:
            total += _piecewise_linear_integral(traj, s, t)
        return conv @ total

    return NonlocalCondition(
        eval=eval_g,
        kind="mollified_integral",
        bound_params={
            "theta": theta,
            "derivative_mass": float(kernel.derivative_mass),
            "interval_length": float(sum(t - s for s, t in ivals)),
            "solver_ok": bool(kernel.derivative_mass < 1.0),
        },
    )


class GBoundAudit(NamedTuple):
    passed: bool
    margin: float


def audit_g_bound(g: NonlocalCondition, r: float, n_samples: int, grid: TimeGrid,
                  space: GalerkinSpace, seed=0) -> GBoundAudit:
    """Sample paths of mean pivot radius r and check ``|g(u)|_H < r``."""
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    target = r * math.sqrt(grid.horizon)
    worst = 0.0
    for _ in range(n_samples):
        vals = rng.standard_normal((grid.n_steps + 1, space.n_modes))
        traj = make_trajectory(space, grid, vals)
        traj = make_trajectory(space, grid, vals * (target / traj.l2_h))
        worst = max(worst, space.h_norm(np.asarray(g.eval(traj), dtype=float)))
    margin = r - worst
    return GBoundAudit(passed=bool(margin > 0.0), margin=margin)


def estimate_g_star(g: NonlocalCondition, radius_cap: float, n_samples: int,
                    grid: TimeGrid, space: GalerkinSpace, seed=0) -> float:
    """Sampled sup of ``|g(u)|_V`` over paths with L2-in-time pivot norm <= cap."""
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    worst = 0.0
    for _ in range(n_samples):
        vals = rng.standard_normal((grid.n_steps + 1, space.n_modes))
        traj = make_trajectory(space, grid, vals)
        scale = rng.uniform(0.0, 1.0) * radius_cap / max(traj.l2_h, 1e-300)
        traj = make_trajectory(space, grid, vals * scale)
        worst = max(worst, space.v_norm(np.asarray(g.eval(traj), dtype=float)))
    return worst


@dataclass(frozen=True)
class NonlocalProblem:
    """Bundle of form, nonlinearity, nonlocal condition, grid, and annulus radii.

    ``shift_mu`` records the exponential-substitution rate applied to reach
    this problem (0 when it is stated in the user's frame); trajectories are
    mapped back with :func:`unshift_trajectory`.
    """

    form: TimeForm
    proj: Projection
    f: Nonlinearity
    g: NonlocalCondition
    grid: TimeGrid
    r0: float
    R0: float
    shift_mu: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.r0 < self.R0:
            raise ValueError("need 0 < r0 < R0")
        if self.grid.horizon > self.form.horizon * (1.0 + 1e-12):
            raise ValueError("grid horizon exceeds the form's horizon")


def audit_problem(prob: NonlocalProblem, n_samples: int = 300, seed=0) -> dict:
    """Run the standing audits: inward-pointing scan and g-bound sampling."""
    from .nonlinearity import scan_transversality

    space = prob.form.space
    t_grid = np.linspace(0.0, prob.grid.horizon, 9)
    scan = scan_transversality(
        prob.f, prob.r0, prob.R0, max(100, n_samples), t_grid,
        dim=space.n_modes, seed=seed, gram_H=space.gram_H,
    )
    cap = prob.R0 if math.isfinite(prob.R0) else 10.0 * prob.r0
    radii = np.geomspace(prob.r0 * 1.0001, cap * 0.9999, 4)
    g_audits = [
        audit_g_bound(prob.g, float(r), max(20, n_samples // 10), prob.grid, space, seed=seed)
        for r in radii
    ]
    g_ok = all(a.passed for a in g_audits)
    return {
        "transversality": scan,
        "transversality_ok": scan.passed,
        "g_bound_margins": [a.margin for a in g_audits],
        "g_bound_ok": g_ok,
        "passed": bool(scan.passed and g_ok),
    }


def homotopy_map(prob: NonlocalProblem, lam: float, w: Trajectory,
                 propagator: Propagator | None = None) -> Trajectory:
    """One application of the data-to-solution map at homotopy stage ``lam``.

    Solves the linear problem with initial value ``lam P g(w)`` and source
    ``lam P f(t, w(t))``; stage 0 returns the zero path.
    """
    if w.grid.n_steps != prob.grid.n_steps or w.grid.horizon != prob.grid.horizon:
        raise ValueError("iterate lives on the wrong grid")
    gw = np.asarray(prob.g.eval(w), dtype=float)
    fv = apply_superposition(prob.f, w)
    p = prob.proj.matrix
    return duhamel_solve(
        prob.form, prob.proj, prob.grid,
        lam * (p @ gw), lam * (fv @ p.T),
        propagator=propagator,
    )


@dataclass(frozen=True)
class SolverConfig:
    """Continuation and inner fixed-point settings."""

    lambda_steps: int = 10
    damping: float = 0.5
    inner_tol: float = 1e-8
    max_inner: int = 500
    secant_depth: int = 0
    fp_tol: float | None = None
    g_star_samples: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.lambda_steps < 1 or self.max_inner < 1:
            raise ValueError("lambda_steps and max_inner must be positive")


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a continuation solve, converged or not."""

    solution: Trajectory
    fixed_point_residual: float
    lambda_path: tuple
    apriori_lhs: float
    apriori_rhs: float
    converged: bool
    status: str
    g_star: float


def _light_s_apply(prob: NonlocalProblem, prop: Propagator, lam: float,
                   w: Trajectory) -> Trajectory:
    # same values as homotopy_map, skipping the operator-image accumulator
    gw = np.asarray(prob.g.eval(w), dtype=float)
    fv = apply_superposition(prob.f, w)
    p = prob.proj.matrix
    vals = _march(prop, lam * (p @ gw), lam * (fv @ p.T))
    return make_trajectory(prob.form.space, prob.grid, vals)


def solve_nonlocal(prob: NonlocalProblem, cfg: SolverConfig | None = None) -> SolveReport:
    """Walk the homotopy stage from 0 to 1, iterating the stage map to a fixed point.

    Each stage runs damped Picard iteration (with optional multisecant
    acceleration) warm-started from the previous stage.  Statuses:
    ``converged``, ``max_iterations`` (stage recorded in the path),
    ``boundary_hit`` (an iterate reached the outer radius, contradicting the
    standing annulus bound), ``non_finite``.
    """
    cfg = cfg or SolverConfig()
    space = prob.form.space
    grid = prob.grid
    prop = build_propagator(prob.form, prob.proj, grid)
    sqrt_t = math.sqrt(grid.horizon)

    w = zero_trajectory(space, grid)
    lambda_path: list[tuple[float, int, float]] = []
    status = "converged"

    for k in range(1, cfg.lambda_steps + 1):
        lam = k / cfg.lambda_steps
        hist_w: deque = deque(maxlen=cfg.secant_depth + 1)
        hist_r: deque = deque(maxlen=cfg.secant_depth + 1)
        res = math.inf
        iterations = 0
        stage_done = False
        while iterations < cfg.max_inner:
            iterations += 1
            try:
                sw = _light_s_apply(prob, prop, lam, w)
            except (ValueError, FloatingPointError):
                status = "non_finite"
                break
            if not np.all(np.isfinite(sw.values)):
                status = "non_finite"
                break
            if sw.mean_radius >= prob.R0:
                status = "boundary_hit"
                break
            res = l2h_distance(w, sw)
            if res <= cfg.inner_tol:
                w = sw
                stage_done = True
                break
            wf = w.values.ravel()
            rf = sw.values.ravel() - wf
            if cfg.secant_depth > 0:
                hist_w.append(wf.copy())
                hist_r.append(rf.copy())
            if cfg.secant_depth > 0 and len(hist_r) >= 2:
                dw = np.column_stack([hist_w[i + 1] - hist_w[i] for i in range(len(hist_w) - 1)])
                dr = np.column_stack([hist_r[i + 1] - hist_r[i] for i in range(len(hist_r) - 1)])
                gamma, *_ = np.linalg.lstsq(dr, rf, rcond=None)
                new = wf + cfg.damping * rf - (dw + cfg.damping * dr) @ gamma
            else:
                new = wf + cfg.damping * rf
            w = make_trajectory(space, grid, new.reshape(w.values.shape))
        if status != "converged":
            lambda_path.append((lam, iterations, res))
            break
        if not stage_done:
            status = "max_iterations"
            lambda_path.append((lam, iterations, res))
            break
        lambda_path.append((lam, iterations, res))

    stiff = projected_stiffness_fn(prob.form, prob.proj)
    solution = make_trajectory(space, grid, w.values, stiff)

    try:
        g_u = np.asarray(prob.g.eval(solution), dtype=float)
        fp_residual = space.h_norm(solution.values[0] - g_u)
    except (ValueError, FloatingPointError):
        fp_residual = math.inf

    g_star = estimate_g_star(prob.g, prob.r0 * sqrt_t, cfg.g_star_samples, grid,
                             space, seed=cfg.seed)
    b_vals = np.array([prob.f.growth_b(float(t)) for t in grid.nodes])
    b_l2 = math.sqrt(float(np.trapezoid(b_vals**2, dx=grid.dt)))
    apriori_rhs = 2.0 * max(prob.f.growth_a * prob.r0 * sqrt_t, b_l2) + g_star
    apriori_lhs = solution.sobolev_h1 + solution.l2_v + solution.au_l2

    fp_tol = cfg.fp_tol if cfg.fp_tol is not None else cfg.inner_tol
    converged = (
        status == "converged"
        and fp_residual <= fp_tol
        and solution.mean_radius < prob.R0
    )
    return SolveReport(
        solution=solution,
        fixed_point_residual=fp_residual,
        lambda_path=tuple(lambda_path),
        apriori_lhs=apriori_lhs,
        apriori_rhs=apriori_rhs,
        converged=converged,
        status=status,
        g_star=g_star,
    )


def exp_shift(prob: NonlocalProblem, mu: float) -> NonlocalProblem:
    """Exponentially substituted problem: v(t) = exp(-mu t) u(t).

    The pivot shift declared on the form (its quasi-coercivity defect) is
    absorbed into the stiffness; the remainder ``eps = mu - delta`` is folded
    into the nonlinearity, which gains the inward-pointing term ``-eps x``.
    The condition g is composed with the inverse scaling so fixed points map
    one-to-one; ``mu = 0`` is the identity.
    """
    if mu < 0.0:
        raise ValueError("mu must be nonnegative")
    if mu == 0.0:
        return replace(prob)
    form = prob.form
    space = form.space
    delta = min(form.shift_delta, mu)
    eps = mu - delta
    gh = space.gram_H

    if delta > 0.0:
        base_stiff = form.stiffness_at

        def shifted_stiff(t: float, _b=base_stiff, _d=delta) -> Matrix:
            return np.asarray(_b(t), dtype=float) + _d * gh

        new_form = TimeForm(
            space=space,
            stiffness_at=shifted_stiff,
            bound_M=form.bound_M + delta * space.embed_const**2,
            coercivity_alpha=form.coercivity_alpha,
            horizon=form.horizon,
            shift_delta=0.0,
            modulus_omega=form.modulus_omega,
        )
    else:
        new_form = form

    f = prob.f

    def f_hat(t: float, x: Vector) -> Vector:
        scale = math.exp(-mu * t)
        return scale * np.asarray(f.eval(t, x / scale), dtype=float) - eps * x

    new_f = Nonlinearity(
        eval=f_hat,
        growth_a=f.growth_a + eps,
        growth_b=lambda t: math.exp(-mu * t) * f.growth_b(t),
        label=f.label + f"+shift({mu:g})",
    )

    g = prob.g
    nodes = prob.grid.nodes

    def g_hat(traj: Trajectory) -> Vector:
        scaled = make_trajectory(space, traj.grid,
                                 traj.values * np.exp(mu * nodes)[:, None])
        return g.eval(scaled)

    new_g = NonlocalCondition(
        eval=g_hat,
        kind=g.kind,
        bound_params={**g.bound_params, "exp_shift_mu": mu},
    )
    return NonlocalProblem(
        form=new_form,
        proj=prob.proj,
        f=new_f,
        g=new_g,
        grid=prob.grid,
        r0=prob.r0,
        R0=prob.R0,
        shift_mu=prob.shift_mu + mu,
    )


def unshift_trajectory(traj: Trajectory, mu: float,
                       stiffness_fn: Callable[[float], Matrix] | None = None) -> Trajectory:
    """Map a substituted path back to the user frame: u(t) = exp(mu t) v(t)."""
    if mu < 0.0:
        raise ValueError("mu must be nonnegative")
    scaled = traj.values * np.exp(mu * traj.grid.nodes)[:, None]
    return make_trajectory(traj.space, traj.grid, scaled, stiffness_fn)


def annulus_energy_check(traj: Trajectory, r0: float, R0: float,
                         tol_coeff: float = 10.0) -> bool:
    """No pivot-norm growth along any stretch of the path inside the annulus.

    The permitted slack is first order in the time step.  Paths that never
    enter the annulus pass vacuously.
    """
    tol = tol_coeff * traj.grid.dt
    inside = (traj.h_norms > r0) & (traj.h_norms < R0)
    running_min = math.inf
    for j, flag in enumerate(inside):
        if not flag:
            running_min = math.inf
            continue
        h = float(traj.h_norms[j])
        if h > running_min + tol:
            return False
        running_min = min(running_min, h)
    return True
