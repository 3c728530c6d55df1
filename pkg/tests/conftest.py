"""Shared fixtures: cheap unit-test scenarios plus the big acceptance runs.

The expensive session fixtures (the h=1/64 sweep, the annulus contact hunt)
are lazy: only the acceptance module requests them, so unit-test runs stay
fast.
"""

import time

import numpy as np
import pytest

from mesahs import baiocchi, mesa, scenarios, stefan
from mesahs.geometry import SlotGeometry, Scenario, build_grid, radial_u_init
from mesahs.stencil import build_stencil


def mini_annulus_scenario(h=1 / 16, width=0.08, m_list=(16, 64, 256),
                          t_max=0.3):
    """Small-patch analogue of the jump counter-example for cheap tests."""
    geometry = SlotGeometry.ball((0.0, 0.0), 1.0, sample_spacing=h / 2)
    breakpoints = [(0.0, 0.0), (1.5 - width, 0.0), (1.5, 1.0), (2.0, 1.0),
                   (2.0 + width, 0.0)]
    rho = max(1.0, (2.0 + width) / 2.0)
    envelope = 2.0 * rho + t_max / rho
    margin = envelope + 7 * h - 1.0
    grid = build_grid(geometry, h, margin, required_radius=envelope)
    u = radial_u_init(grid, geometry, breakpoints)
    p = np.ones(geometry.boundary_samples.shape[0])
    return Scenario(geometry=geometry, grid=grid, u_init=u, p_samples=p,
                    t_max=t_max, m_list=m_list, lambda_bound=1.0,
                    name="mini-annulus")


@pytest.fixture(scope="session")
def radial_coarse():
    return scenarios.radial_scenario(h=1 / 16, t_max=0.3, m_list=(16, 64, 256))


@pytest.fixture(scope="session")
def radial_coarse_stencil(radial_coarse):
    return build_stencil(radial_coarse)


@pytest.fixture(scope="session")
def mini_annulus():
    return mini_annulus_scenario()


# ---------------------------------------------------------------------------
# acceptance-scale fixtures
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def radial64():
    """The headline scenario: unit-ball slot, p = 1, empty initial data."""
    return scenarios.radial_scenario(h=1 / 64, t_max=0.5)


@pytest.fixture(scope="session")
def radial64_sweep(radial64):
    """Full diffusivity sweep at h=1/64 with wall time recorded."""
    times = [round(0.05 * k, 10) for k in range(1, 11)]
    start = time.time()
    limit = mesa.sweep(radial64, snapshot_times=times)
    return {"limit": limit, "seconds": time.time() - start, "times": times}


@pytest.fixture(scope="session")
def radial64_slices(radial64):
    """Obstacle slices at the comparison times, warm-started in order.

    Times 0.1/0.3/0.5 are equally spaced for the convexity check; 0.25 is the
    oracle-match time.  The first solve is timed cold for the runtime
    criterion.
    """
    st = build_stencil(radial64)
    start = time.time()
    first = baiocchi.solve_slice(radial64, 0.25, stencil=st)
    cold_seconds = time.time() - start
    slices = {0.25: first}
    warm = None
    for t in (0.1, 0.3, 0.5):
        warm = baiocchi.solve_slice(radial64, t, warm=warm, stencil=st)
        slices[t] = warm
    return {"slices": slices, "stencil": st, "cold_seconds": cold_seconds}


@pytest.fixture(scope="session")
def sandwich_run():
    scenario = scenarios.sandwich_scenario(h=1 / 64, k=1.0, t_max=0.2)
    result = stefan.run(scenario, 1024, snapshot_times=[0.05, 0.1, 0.15, 0.2],
                        keep_u=False)
    return {"scenario": scenario, "result": result}


@pytest.fixture(scope="session")
def annulus_jump():
    """Obstacle-route bracketing of the annulus contact event."""
    scenario = scenarios.annulus_scenario(h=1 / 32)
    patch = scenarios.annulus_patch_mask(scenario)
    st = build_stencil(scenario)
    t_star = baiocchi.contact_time(scenario, patch, t_lo=2.0, t_hi=3.2,
                                   tol_t=2e-3, stencil=st)
    delta, dt_v = 0.01, 0.01
    pre = baiocchi.solve_slice(scenario, t_star - delta, stencil=st)
    pre2 = baiocchi.solve_slice(scenario, t_star - delta + dt_v, warm=pre,
                                stencil=st)
    post = baiocchi.solve_slice(scenario, t_star + delta, warm=pre, stencil=st)
    post2 = baiocchi.solve_slice(scenario, t_star + delta + dt_v, warm=post,
                                 stencil=st)
    return {"scenario": scenario, "patch": patch, "t_star": t_star,
            "pre": pre, "post": post,
            "v_pre": baiocchi.recover_pressure(pre, pre2),
            "v_post": baiocchi.recover_pressure(post, post2),
            "delta": delta}


@pytest.fixture(scope="session")
def lambda_slices():
    """Obstacle slice series for lam = 0 and lam = 0.5 radial scenarios."""
    out = {}
    times = [0.1, 0.2, 0.3, 0.4, 0.5]
    for lam in (0.0, 0.5):
        sc = scenarios.radial_scenario(h=1 / 32, lam=lam, t_max=0.5)
        st = build_stencil(sc)
        slices, warm = [], None
        for t in times:
            warm = baiocchi.solve_slice(sc, t, warm=warm, stencil=st)
            slices.append(warm)
        out[lam] = {"scenario": sc, "slices": slices, "times": times}
    return out
