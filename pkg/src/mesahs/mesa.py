"""Diffusivity sweep m -> infinity and the structure of its limit.

Temperatures increase cellwise with m, so the sweep checks that monotonicity
exactly (a violation beyond solver noise indicates a discretization fault),
takes the last level as the limiting pressure V with the gap to the previous
level recorded as the committed tail error, and materializes the limit
enthalpy: 1 on a nondecreasing plateau region Q(t), untouched initial data
elsewhere.  Q(t) uses the first-crossing convention tau(x) < t, realized on
the grid by thresholding the last-level enthalpy at 1 - h.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import stefan
from .errors import ConfigError, SolverError
from .stencil import build_stencil

#: cellwise slack for exact monotone structure across the sweep; the sweep
#: tolerance amplified by operator conditioning and accumulated over steps
MONOTONE_SWEEP_TOL = 1e-7


@dataclass
class TimeFunctions:
    """First-crossing times: temperature positivity and unit enthalpy."""

    m: float
    first_theta: np.ndarray
    first_unit: np.ndarray


@dataclass
class MesaLimit:
    """Limit data of one sweep, per snapshot time."""

    m_list: tuple
    times: list
    pressure: list            # TemperatureField at the last level (the V's)
    u_raw: list               # raw last-level enthalpy arrays
    u_inf: list               # projected representation: 1 on Q, u_init off Q
    q_masks: list
    tail_gap: list
    w_integrals: list         # running integral of the last-level temperature
    time_functions: dict      # m -> TimeFunctions
    per_m_theta: dict         # m -> list of snapshot temperature arrays
    grid: object
    u_init: np.ndarray

    @property
    def t_limit(self):
        return self.time_functions[self.m_list[-1]].first_theta

    @property
    def tau_limit(self):
        return self.time_functions[self.m_list[-1]].first_unit

    def _index(self, t):
        for i, s in enumerate(self.times):
            if abs(s - t) <= 1e-12:
                return i
        return None

    def w_integral_at(self, t):
        i = self._index(t)
        return None if i is None else self.w_integrals[i]

    def active_mask_at(self, t):
        i = self._index(t)
        if i is None:
            return None
        theta = self.pressure[i].theta
        cut = 1e-8 * max(float(theta.max()), np.finfo(float).tiny)
        return (theta > cut) & self.grid.fluid


def sweep(scenario, snapshot_times, dt=None, params=None, keep_levels=True,
          progress=None, precomputed=None):
    """Run every diffusivity in the scenario and form the limit fields.

    Requires at least three strictly increasing m values.  All runs share the
    step length so snapshots align cellwise; temperatures are checked to be
    nondecreasing in m at every snapshot.  ``precomputed`` may map m values
    to finished :class:`stefan.RunResult` objects (from parallel workers);
    the reduction itself is always a deterministic single-threaded fold.
    """
    m_list = scenario.m_list
    if len(m_list) < 3:
        raise ConfigError("the sweep needs at least 3 diffusivity values")
    st = build_stencil(scenario)
    dt = dt if dt is not None else stefan.default_dt(scenario)
    precomputed = precomputed or {}

    per_m_theta = {}
    time_functions = {}
    prev_thetas = None
    prev_m = None
    tail_gap = None
    last_result = None
    for m in m_list:
        keep_u = m == m_list[-1]
        result = precomputed.get(m)
        if result is None:
            result = stefan.run(scenario, m, snapshot_times, dt=dt,
                                params=params, stencil=st, keep_u=keep_u)
        thetas = [f.theta for f in result.theta_fields]
        if prev_thetas is not None:
            worst = max(float((a - b).max())
                        for a, b in zip(prev_thetas, thetas))
            if worst > MONOTONE_SWEEP_TOL:
                raise SolverError(
                    f"temperature not monotone in m between m={prev_m:g} and "
                    f"m={m:g} (violation {worst:.3e}); this indicates a "
                    "discretization fault")
            tail_gap = [float(np.abs(a - b).max())
                        for a, b in zip(prev_thetas, thetas)]
        time_functions[m] = TimeFunctions(
            m=m, first_theta=result.first_theta_time,
            first_unit=result.first_unit_time)
        if keep_levels:
            per_m_theta[m] = thetas
        prev_thetas = thetas
        prev_m = m
        last_result = result
        if progress is not None:
            progress(m)

    grid = scenario.grid
    u_raw = [f.u for f in last_result.u_fields]
    q_masks = [grid.fluid & (u >= 1.0 - grid.h) for u in u_raw]
    for earlier, later in zip(q_masks, q_masks[1:]):
        if np.any(earlier & ~later):
            raise SolverError("plateau region not nested in time")
    u_inf = [np.where(q, 1.0, scenario.u_init) for q in q_masks]

    return MesaLimit(
        m_list=m_list, times=list(last_result.times),
        pressure=last_result.theta_fields, u_raw=u_raw, u_inf=u_inf,
        q_masks=q_masks,
        tail_gap=tail_gap or [np.nan] * len(last_result.times),
        w_integrals=last_result.w_integrals,
        time_functions=time_functions, per_m_theta=per_m_theta,
        grid=grid, u_init=scenario.u_init)


def representation_check(limit, scenario, tol=None):
    """Check the two-value structure of the limit enthalpy.

    The projected field reproduces chi_Q + u_init * (1 - chi_Q) by
    construction; the content is (a) nestedness of Q in time, asserted
    exactly, and (b) the fraction of raw cells strictly between the initial
    data and the plateau, which must vanish under refinement.
    """
    grid = scenario.grid
    tol = tol if tol is not None else 5.0 * grid.h
    fluid = grid.fluid
    nested = all(not np.any(a & ~b)
                 for a, b in zip(limit.q_masks, limit.q_masks[1:]))
    projected = []
    intermediate = []
    for u_raw, u_inf, q in zip(limit.u_raw, limit.u_inf, limit.q_masks):
        rep = np.where(q, 1.0, scenario.u_init)
        projected.append(float((np.abs(u_inf - rep) > tol)[fluid].mean()))
        between = (u_raw > scenario.u_init + tol) & (u_raw < 1.0 - tol)
        intermediate.append(float(between[fluid].mean()))
    return {"tol": tol, "nested_in_time": nested,
            "projected_fraction": projected,
            "intermediate_fraction": intermediate}


def harmonicity_check(pressure_field, active_mask, grid, interior_margin=2,
                      slot_margin=2):
    """Max discrete Laplacian of the limiting pressure inside the region.

    Cells are kept only ``interior_margin`` cells inside the active set and
    ``slot_margin`` cells away from the slot, where the pressure should be
    harmonic up to O(M/m + h).  An empty interior is reported, not an error.
    """
    theta = pressure_field.theta if hasattr(pressure_field, "theta") else pressure_field
    region = ndimage.binary_erosion(active_mask, iterations=interior_margin)
    region &= ~ndimage.binary_dilation(grid.slot, iterations=slot_margin)
    region &= grid.fluid
    if not region.any():
        return {"max_residual": 0.0, "cells": 0, "empty": True}
    lap = _laplacian(theta, grid.h)
    return {"max_residual": float(np.abs(lap[region]).max()),
            "cells": int(region.sum()), "empty": False}


def _laplacian(values, h):
    lap = -2.0 * values.ndim * values
    for axis in range(values.ndim):
        lap += np.roll(values, 1, axis=axis) + np.roll(values, -1, axis=axis)
    return lap / (h * h)


def detachment_ok(active_mask, grid):
    """True when the active set contains the full 1-cell collar of the slot."""
    collar = ndimage.binary_dilation(grid.slot, iterations=1) & grid.fluid
    return bool(np.all(active_mask[collar]))
