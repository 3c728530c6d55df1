"""Per-time-slice obstacle solver: the direct route to the flow.

For every time t the time-integrated pressure W(.,t) >= 0 solves the obstacle
problem  Delta W = (1 - u_init) on {W > 0}  with Dirichlet data p*t across the
slot boundary and W = 0 on the farfield band.  Slices are self-contained, so
any time can be solved directly, warm-started from a neighbor, or bisected
against to locate topology events.

The solver is projected red-black SOR on the face-flux discretization; the
operator is a symmetric M-matrix, so projected SOR converges for any
relaxation factor in (0, 2).  By default the factor is re-tuned during the
iteration to the measured width of the active set (pass ``omega`` to force
the classical fixed value).

The radial oracle used in tests and reports lives here too: for a unit-ball
slot, constant data p and constant initial enthalpy lam < 1, the free
boundary radius R(t) solves a scalar equation solved by bracketing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, optimize

from .errors import ConfigError, EnvelopeError, SolverError
from .fbdiag import boundary_faces
from .stencil import PINNED_LOAD, build_stencil, projected_sor

#: relative cutoff defining the active mask from W (strict positivity is
#: scale-fragile in floating point)
ACTIVE_REL_THRESHOLD = 1e-8


@dataclass
class ObstacleSolveParams:
    """Projected-SOR controls for one slice solve."""

    omega: float | None = None      # None -> tuned to the sweep box
    tol: float = 1e-10              # max complementarity residual
    max_sweeps: int | None = None   # None -> 200 * max box dimension
    activation_threshold: float = 0.0

    def __post_init__(self):
        if self.omega is not None and not (1.0 <= self.omega < 2.0):
            raise ConfigError("omega must lie in [1, 2)")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")


@dataclass
class BaiocchiPotential:
    """Converged slice: W, its active mask, and the residual achieved."""

    t: float
    w: np.ndarray
    active_mask: np.ndarray
    residual: float
    sweeps: int

    def max_w(self):
        return float(self.w.max())


def solve_slice(scenario, t, params=None, warm=None, stencil=None):
    """Solve the obstacle problem at time t by projected red-black SOR.

    Returns a :class:`BaiocchiPotential` whose every FLUID cell satisfies
    min(-Delta_h W + (1 - u_init) - slot load, W) within ``params.tol``.
    Raises :class:`SolverError` on non-convergence and
    :class:`EnvelopeError` if the active set reaches the farfield clearance.
    """
    params = params or ObstacleSolveParams()
    if t < 0:
        raise ConfigError("slice time must be nonnegative")
    st = stencil if stencil is not None else build_stencil(scenario)
    grid = scenario.grid
    fluid = grid.fluid

    w = np.zeros(grid.shape)
    if warm is not None:
        w[fluid] = warm.w[fluid]
    if t == 0.0:
        return BaiocchiPotential(t=0.0, w=w, active_mask=np.zeros(grid.shape, bool),
                                 residual=0.0, sweeps=0)

    rhs = np.where(fluid, st.slot_load * t - (1.0 - scenario.u_init),
                   PINNED_LOAD)
    box = tuple(slice(1, s - 1) for s in grid.shape)
    max_sweeps = params.max_sweeps or 200 * max(grid.shape)

    residual, sweeps, history = projected_sor(
        w, st.diag, rhs, box, fluid, coupling=1.0, tol=params.tol,
        max_sweeps=max_sweeps, omega=params.omega, h=grid.h,
        activation=params.activation_threshold)
    if residual > params.tol:
        raise SolverError(
            f"projected SOR did not reach tol={params.tol:g} in {max_sweeps} "
            f"sweeps (last residual {residual:.3e})",
            residual_history=history)

    active = w > ACTIVE_REL_THRESHOLD * max(w.max(), np.finfo(float).tiny)
    active &= fluid
    if np.any(active & st.near_band):
        raise EnvelopeError(
            f"active set reached the farfield clearance at t={t:g}; "
            "enlarge the grid margin")
    return BaiocchiPotential(t=float(t), w=w, active_mask=active,
                             residual=residual, sweeps=sweeps)


def complementarity_report(scenario, slice_, stencil=None):
    """Cellwise residuals of the converged slice (for invariant tests)."""
    st = stencil if stencil is not None else build_stencil(scenario)
    grid = scenario.grid
    box = tuple(slice(1, s - 1) for s in grid.shape)
    rhs = np.where(grid.fluid, st.slot_load * slice_.t - (1.0 - scenario.u_init), 0.0)
    nb = st.neighbor_sum(slice_.w, box)
    pde = st.diag[box] * slice_.w[box] - nb - rhs[box]
    fluid_box = grid.fluid[box]
    return {
        "min_w": float(slice_.w[grid.fluid].min()),
        "max_comp": float(np.abs(np.minimum(pde, slice_.w[box])[fluid_box]).max()),
        "max_product": float(np.abs((pde * slice_.w[box])[fluid_box]).max()),
    }


# ---------------------------------------------------------------------------
# derived quantities
# ---------------------------------------------------------------------------

def recover_pressure(slice_lo, slice_hi):
    """Pressure slice from two nearby potentials: (W(t+dt) - W(t)) / dt.

    Forward differences on purpose: the pressure can jump upward in time at
    topology changes, so a centered difference would smear the jump across
    both sides.
    """
    dt = slice_hi.t - slice_lo.t
    if dt <= 0:
        raise ConfigError("need slice_hi.t > slice_lo.t")
    return (slice_hi.w - slice_lo.w) / dt


def mass_balance_check(scenario, slice_, stencil=None):
    """Compare the weighted active area with the slot flux of W.

    At convergence the integral of (1 - u_init) over the active set equals
    the inward slot-face flux of W up to O(h * free boundary size).
    """
    st = stencil if stencil is not None else build_stencil(scenario)
    grid = scenario.grid
    weighted = float(((1.0 - scenario.u_init) * slice_.active_mask).sum()
                     * grid.cell_volume)
    flux = st.slot_influx(slice_.w, load_scale=slice_.t)
    discrepancy = abs(weighted - flux)
    rel = discrepancy / max(weighted, flux, np.finfo(float).tiny)
    return {"weighted_area": weighted, "slot_flux": flux,
            "discrepancy": discrepancy, "relative": rel}


def cross_validate(mesa_limit, slices, scenario):
    """Agreement report between the sweep route and the slice route.

    For each solved slice, compares the time-integrated sweep temperature
    with W in sup norm and the two active masks in Hausdorff cell distance.
    Uniqueness of the limit problem makes both routes target the same object.
    """
    fluid = scenario.grid.fluid
    rows = []
    for sl in slices:
        w_mesa = mesa_limit.w_integral_at(sl.t)
        if w_mesa is None:
            continue
        gap = float(np.abs((w_mesa - sl.w))[fluid].max())
        max_w = max(sl.max_w(), np.finfo(float).tiny)
        mesa_mask = mesa_limit.active_mask_at(sl.t)
        rows.append({
            "t": sl.t,
            "supgap_w": gap,
            "supgap_rel": gap / max_w,
            "max_w": max_w,
            "hausdorff_cells": hausdorff_cells(mesa_mask, sl.active_mask,
                                               scenario.grid.h),
        })
    return rows


def hausdorff_cells(mask_a, mask_b, h):
    """Symmetric Hausdorff distance between two masks, in cell units."""
    if not mask_a.any() and not mask_b.any():
        return 0.0
    if not mask_a.any() or not mask_b.any():
        return float("inf")
    d_to_b = ndimage.distance_transform_edt(~mask_b)
    d_to_a = ndimage.distance_transform_edt(~mask_a)
    return float(max(d_to_b[mask_a].max(), d_to_a[mask_b].max()))


# ---------------------------------------------------------------------------
# radial oracle
# ---------------------------------------------------------------------------

def radial_fb_equation(R, n=2, lam=0.0):
    """Left side of the radial free-boundary equation (equals t at radius R)."""
    R = np.asarray(R, dtype=float)
    if n == 2:
        core = 0.5 * R ** 2 * np.log(R) - 0.25 * (R ** 2 - 1.0)
    elif n == 3:
        core = (1.0 - R ** 2) / 6.0 + (R ** 3 / 3.0) * (1.0 - 1.0 / R)
    else:
        raise ConfigError("radial oracle supports n in {2, 3}")
    return (1.0 - lam) * core


def radial_fb_radius(t, n=2, lam=0.0, r_max=1e3):
    """Free-boundary radius for slot B_1, p = 1, u_init = lam, by bracketing."""
    if not (0 <= lam < 1):
        raise ConfigError("radial oracle needs lam in [0, 1)")
    if t <= 0:
        return 1.0
    f = lambda R: radial_fb_equation(R, n=n, lam=lam) - t
    hi = 2.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > r_max:
            raise ConfigError("radial oracle bracket exceeded r_max")
    return float(optimize.brentq(f, 1.0 + 1e-14, hi, xtol=1e-13))


def radial_w_profile(r, R, n=2, lam=0.0):
    """Oracle W profile on [1, R]: quadratic plus the radial harmonic tail."""
    r = np.asarray(r, dtype=float)
    if n == 2:
        w = (r ** 2 - R ** 2) / 4.0 - (R ** 2 / 2.0) * np.log(r / R)
    elif n == 3:
        w = (r ** 2 - R ** 2) / 6.0 + (R ** 3 / 3.0) * (1.0 / r - 1.0 / R)
    else:
        raise ConfigError("radial oracle supports n in {2, 3}")
    return (1.0 - lam) * np.where(r <= R, w, 0.0)


def fb_radius_stats(active_mask, grid, center):
    """(min, median, max) radius of free-boundary face midpoints in a mask."""
    pts = boundary_faces(active_mask, grid)
    if pts.shape[0] == 0:
        return (0.0, 0.0, 0.0)
    r = np.linalg.norm(pts - np.asarray(center), axis=1)
    return (float(r.min()), float(np.median(r)), float(r.max()))


def contact_time(scenario, patch_mask, t_lo, t_hi, tol_t, params=None,
                 stencil=None):
    """Bisect for the first slice time whose active set meets ``patch_mask``.

    Requires the patch inactive at ``t_lo`` and active at ``t_hi``.  Solves
    are warm-started from the lower bracket, which approaches the answer
    monotonically from below.
    """
    st = stencil if stencil is not None else build_stencil(scenario)
    lo_slice = solve_slice(scenario, t_lo, params, stencil=st)
    hi_active = solve_slice(scenario, t_hi, params, stencil=st)
    if np.any(lo_slice.active_mask & patch_mask):
        raise ConfigError("patch already active at t_lo")
    if not np.any(hi_active.active_mask & patch_mask):
        raise ConfigError("patch not active at t_hi")
    lo, hi = t_lo, t_hi
    while hi - lo > tol_t:
        mid = 0.5 * (lo + hi)
        sl = solve_slice(scenario, mid, params, warm=lo_slice, stencil=st)
        if np.any(sl.active_mask & patch_mask):
            hi = mid
        else:
            lo = mid
            lo_slice = sl
    return 0.5 * (lo + hi)
