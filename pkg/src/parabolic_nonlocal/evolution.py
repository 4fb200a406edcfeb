"""Time stepping: contractive propagators, source solves, and path norms.

The default one-step factor is the midpoint Cayley transform
``(G_H + dt/2 S)^(-1) (G_H - dt/2 S)``, which is nonexpansive in the pivot
norm whenever the form is accretive, so norm decay of homogeneous solutions
is an exact discrete invariant rather than an asymptotic one.  Implicit
Euler is kept for stiff-robustness comparisons.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .galerkin import (
    GalerkinSpace,
    Matrix,
    Projection,
    TimeForm,
    Vector,
    projected_stiffness_fn,
)

SCHEMES = ("cayley", "implicit_euler")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, horizon] with n_steps intervals."""

    horizon: float
    n_steps: int
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        object.__setattr__(self, "nodes", np.linspace(0.0, self.horizon, self.n_steps + 1))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps


@dataclass(frozen=True)
class Propagator:
    """One-step factors of the discrete evolution family on a grid.

    ``step_factors[j]`` maps data at node j to node j+1; two-parameter
    actions are composed products, so the evolution-family law holds exactly
    at grid nodes.  ``source_factors[j]`` applies the step's source weight
    ``dt * (G_H + c S)^(-1) G_H``.
    """

    space: GalerkinSpace
    grid: TimeGrid
    step_factors: tuple[Matrix, ...]
    source_factors: tuple[Matrix, ...]
    scheme: str

    def compose(self, i_from: int, i_to: int) -> Matrix:
        """Matrix of the propagator from node i_from to node i_to >= i_from."""
        if not 0 <= i_from <= i_to <= self.grid.n_steps:
            raise ValueError("node indices out of range")
        out = np.eye(self.space.n_modes)
        for j in range(i_from, i_to):
            out = self.step_factors[j] @ out
        return out

    def apply(self, x: Vector, i_from: int, i_to: int) -> Vector:
        if not 0 <= i_from <= i_to <= self.grid.n_steps:
            raise ValueError("node indices out of range")
        v = np.asarray(x, dtype=float)
        for j in range(i_from, i_to):
            v = self.step_factors[j] @ v
        return v

    def step_norms_h(self) -> np.ndarray:
        """Pivot-weighted operator norm of every one-step factor."""
        return np.array([self.space.h_op_norm(f) for f in self.step_factors])


def build_propagator(form: TimeForm, proj: Projection | None, grid: TimeGrid,
                     scheme: str = "cayley") -> Propagator:
    """Materialize the one-step factors for the (optionally reduced) form."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if grid.horizon > form.horizon * (1.0 + 1e-12):
        raise ValueError("grid horizon exceeds the form's horizon")
    stiff = projected_stiffness_fn(form, proj)
    gh = form.space.gram_H
    dt = grid.dt
    steps = []
    sources = []
    for j in range(grid.n_steps):
        t_mid = 0.5 * (grid.nodes[j] + grid.nodes[j + 1])
        s = stiff(t_mid)
        if scheme == "cayley":
            lhs = gh + 0.5 * dt * s
            rhs = gh - 0.5 * dt * s
        else:
            lhs = gh + dt * s
            rhs = gh
        sol = np.linalg.solve(lhs, np.hstack([rhs, dt * gh]))
        n = form.space.n_modes
        steps.append(np.ascontiguousarray(sol[:, :n]))
        sources.append(np.ascontiguousarray(sol[:, n:]))
    return Propagator(space=form.space, grid=grid, step_factors=tuple(steps),
                      source_factors=tuple(sources), scheme=scheme)


@dataclass(frozen=True)
class Trajectory:
    """A discrete path in the trial space with its norm accumulators.

    ``sobolev_h1`` combines the trapezoid pivot-norm quadrature with the
    forward-difference derivative quadrature; ``l2_v`` and ``au_l2`` are the
    trapezoid energy-norm and operator-image quadratures.  ``au_l2`` is zero
    when no operator was associated with the path.
    """

    space: GalerkinSpace
    grid: TimeGrid
    values: np.ndarray
    h_norms: np.ndarray
    v_norms: np.ndarray
    l2_h: float
    sobolev_h1: float
    l2_v: float
    au_l2: float

    @property
    def mean_radius(self) -> float:
        """L2-in-time pivot norm divided by sqrt(horizon)."""
        return self.l2_h / math.sqrt(self.grid.horizon)


def _trapz(values_sq: np.ndarray, dt: float) -> float:
    return float(np.trapezoid(values_sq, dx=dt))


def make_trajectory(space: GalerkinSpace, grid: TimeGrid, values: np.ndarray,
                    stiffness_fn: Callable[[float], Matrix] | None = None) -> Trajectory:
    """Assemble a Trajectory, recomputing every norm accumulator from values."""
    vals = np.asarray(values, dtype=float)
    if vals.shape != (grid.n_steps + 1, space.n_modes):
        raise ValueError("values must have shape (n_steps+1, n_modes)")
    dt = grid.dt
    h_norms = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", vals, space.gram_H, vals), 0.0))
    v_norms = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", vals, space.gram_V, vals), 0.0))
    l2_h_sq = _trapz(h_norms**2, dt)
    l2_v = math.sqrt(_trapz(v_norms**2, dt))
    diffs = np.diff(vals, axis=0) / dt
    deriv_sq = float(np.einsum("ij,jk,ik->", diffs, space.gram_H, diffs) * dt)
    au_l2 = 0.0
    if stiffness_fn is not None:
        ghi_sv = np.empty_like(h_norms)
        for j, t in enumerate(grid.nodes):
            w = space.inv_sqrt_H @ (stiffness_fn(float(t)) @ vals[j])
            ghi_sv[j] = float(w @ w)
        au_l2 = math.sqrt(_trapz(ghi_sv, dt))
    return Trajectory(
        space=space,
        grid=grid,
        values=vals,
        h_norms=h_norms,
        v_norms=v_norms,
        l2_h=math.sqrt(l2_h_sq),
        sobolev_h1=math.sqrt(l2_h_sq + deriv_sq),
        l2_v=l2_v,
        au_l2=au_l2,
    )


def zero_trajectory(space: GalerkinSpace, grid: TimeGrid) -> Trajectory:
    return make_trajectory(space, grid, np.zeros((grid.n_steps + 1, space.n_modes)))


def l2h_distance(a: Trajectory, b: Trajectory) -> float:
    """L2-in-time pivot-norm distance between two paths on the same grid."""
    if a.grid.n_steps != b.grid.n_steps or a.grid.horizon != b.grid.horizon:
        raise ValueError("trajectories live on different grids")
    d = a.values - b.values
    sq = np.einsum("ij,jk,ik->i", d, a.space.gram_H, d)
    return math.sqrt(max(_trapz(sq, a.grid.dt), 0.0))


def _march(prop: Propagator, x: Vector, f_values: np.ndarray | None) -> np.ndarray:
    """Roll the one-step scheme with trapezoidal source treatment."""
    n = prop.space.n_modes
    out = np.empty((prop.grid.n_steps + 1, n))
    out[0] = np.asarray(x, dtype=float)
    for j in range(prop.grid.n_steps):
        v = prop.step_factors[j] @ out[j]
        if f_values is not None:
            v = v + prop.source_factors[j] @ (0.5 * (f_values[j] + f_values[j + 1]))
        out[j + 1] = v
    return out


def propagate(form: TimeForm, proj: Projection | None, grid: TimeGrid, x: Vector,
              scheme: str = "cayley", propagator: Propagator | None = None) -> Trajectory:
    """Solve the homogeneous problem u' + A u = 0, u(0) = x, on the grid."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial vector must be finite")
    prop = propagator if propagator is not None else build_propagator(form, proj, grid, scheme)
    values = _march(prop, x, None)
    return make_trajectory(form.space, grid, values, projected_stiffness_fn(form, proj))


def duhamel_solve(form: TimeForm, proj: Projection | None, grid: TimeGrid, x: Vector,
                  f_values: np.ndarray, scheme: str = "cayley",
                  propagator: Propagator | None = None) -> Trajectory:
    """Solve u' + A u = f with nodal source values, trapezoidal in the source."""
    f_values = np.asarray(f_values, dtype=float)
    if f_values.shape != (grid.n_steps + 1, form.space.n_modes):
        raise ValueError("f_values must be given at every grid node")
    prop = propagator if propagator is not None else build_propagator(form, proj, grid, scheme)
    values = _march(prop, np.asarray(x, dtype=float), f_values)
    return make_trajectory(form.space, grid, values, projected_stiffness_fn(form, proj))


def duhamel_direct_sum(form: TimeForm, proj: Projection | None, grid: TimeGrid, x: Vector,
                       f_values: np.ndarray, scheme: str = "cayley",
                       propagator: Propagator | None = None) -> np.ndarray:
    """Cross-check path: propagated data plus the rectangle-rule source sum.

    Computes ``E(t_k,0) x + sum_{j<k} E(t_k,t_j) f(t_j) dt`` by the recursion
    ``y_{k+1} = F_k (y_k + dt f_k)``.  First-order in dt; used to validate
    the one-step solve, never to replace it.
    """
    f_values = np.asarray(f_values, dtype=float)
    prop = propagator if propagator is not None else build_propagator(form, proj, grid, scheme)
    dt = grid.dt
    out = np.empty((grid.n_steps + 1, form.space.n_modes))
    out[0] = np.asarray(x, dtype=float)
    for j in range(grid.n_steps):
        out[j + 1] = prop.step_factors[j] @ (out[j] + dt * f_values[j])
    return out


def reversed_form(form: TimeForm) -> TimeForm:
    """Time-reversed transposed form: stiffness ``S(horizon - t)^T``."""
    horizon = form.horizon
    return TimeForm(
        space=form.space,
        stiffness_at=lambda t: np.asarray(form.stiffness_at(horizon - t), dtype=float).T,
        bound_M=form.bound_M,
        coercivity_alpha=form.coercivity_alpha,
        horizon=horizon,
        shift_delta=form.shift_delta,
        modulus_omega=form.modulus_omega,
    )


def adjoint_propagate(form: TimeForm, proj: Projection | None, grid: TimeGrid, x: Vector,
                      i_t: int, i_s: int, scheme: str = "cayley") -> Vector:
    """Action of the pivot-adjoint propagator E(t,s)* on x, for grid nodes s < t.

    Realized by propagating the time-reversed transposed form from node
    ``n_steps - i_t`` to ``n_steps - i_s``; with midpoint sampling this equals
    the transpose-conjugate of the composed forward factors exactly.
    """
    if not 0 <= i_s < i_t <= grid.n_steps:
        raise ValueError("need grid node indices with s < t")
    rform = reversed_form(form)
    rprop = build_propagator(rform, proj, grid, scheme)
    return rprop.apply(np.asarray(x, dtype=float), grid.n_steps - i_t, grid.n_steps - i_s)


def subspace_invariance_residual(form: TimeForm, proj: Projection, grid: TimeGrid,
                                 x: Vector) -> float:
    """Worst leakage out of the reduced subspace along the reduced flow.

    The reduced stiffness is block-decoupled across the projection splitting,
    so data starting in the range of P stays there; the returned residual is
    solver roundoff only.
    """
    x = np.asarray(x, dtype=float)
    q = proj.complement()
    if form.space.h_norm(q @ x) > 1e-12:
        raise ValueError("initial vector is not in the range of the projection")
    traj = propagate(form, proj, grid, x)
    return max(form.space.h_norm(q @ v) for v in traj.values)


def projected_convergence_study(form: TimeForm, grid: TimeGrid, x: Vector,
                                m_list: Sequence[int], m_ref: int) -> list[tuple[int, float]]:
    """Sup-in-time pivot error of reduced flows against a reference reduction."""
    from .galerkin import project

    if max(m_list) >= m_ref:
        raise ValueError("m_ref must exceed every entry of m_list")
    if m_ref > form.space.n_modes:
        raise ValueError("m_ref exceeds the space dimension")
    x = np.asarray(x, dtype=float)
    ref_proj = None if m_ref == form.space.n_modes else project(form.space, m_ref)
    ref = propagate(form, ref_proj, grid, x)
    out = []
    for m in m_list:
        pm = project(form.space, m)
        traj = propagate(form, pm, grid, pm.matrix @ x)
        err = max(
            form.space.h_norm(traj.values[j] - ref.values[j])
            for j in range(grid.n_steps + 1)
        )
        out.append((int(m), err))
    return out


def regularity_ratio(traj: Trajectory, f_l2: float, x_vnorm: float) -> float:
    """Ratio of the path's combined regularity norms to the data norms."""
    denom = f_l2 + x_vnorm
    if denom <= 0.0:
        raise ValueError("data norms must not both vanish")
    return (traj.sobolev_h1 + traj.l2_v + traj.au_l2) / denom


def weighted_diagnostic(form: TimeForm, proj: Projection | None, grid: TimeGrid,
                        x: Vector) -> float:
    """Regularity of the time-weighted homogeneous path v(t) = t u(t),
    relative to ``sqrt(horizon) |x|_H``.

    At finite dimension every datum has a finite energy norm, so the ratio
    cannot exhibit the rough-data moderation it tracks in the continuum; it
    is reported as a diagnostic only and asserted nowhere.
    """
    x = np.asarray(x, dtype=float)
    h_norm = form.space.h_norm(x)
    if h_norm <= 0.0:
        raise ValueError("data must be nonzero")
    traj = propagate(form, proj, grid, x)
    weighted = make_trajectory(form.space, grid, traj.values * grid.nodes[:, None],
                               projected_stiffness_fn(form, proj))
    return (weighted.sobolev_h1 + weighted.l2_v + weighted.au_l2) / (
        math.sqrt(grid.horizon) * h_norm
    )


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write one row per node: time, coordinates, pivot and energy norms."""
    n = traj.space.n_modes
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"c{i}" for i in range(n)] + ["h_norm", "v_norm"])
        for j, t in enumerate(traj.grid.nodes):
            writer.writerow(
                [repr(float(t))]
                + [repr(float(v)) for v in traj.values[j]]
                + [repr(float(traj.h_norms[j])), repr(float(traj.v_norms[j]))]
            )
