"""Face-based discretization data shared by the grid solvers.

Both grid solvers discretize the Laplacian with 2n face fluxes per cell.
Interior faces use the plain (v_nb - v_i)/h gradient; faces that cross the
slot boundary use one-sided interpolation to the sampled boundary point at
distance d <= h from the cell center, which keeps the operator an M-matrix
and makes the total update conservative.  Farfield neighbors act as
homogeneous Dirichlet cells at distance h.

The precomputed arrays here are pure geometry: per-cell diagonal weights,
slot-face weights, and the Dirichlet load carried across slot faces.  Field
arrays are kept exactly zero outside FLUID so that neighbor sums need no
masking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError

#: slot-face interpolation distances are clamped away from zero for stability
MIN_FACE_FRACTION = 0.05


def _shifted(mask, axis, step):
    out = np.zeros_like(mask)
    src = [slice(None)] * mask.ndim
    dst = [slice(None)] * mask.ndim
    if step > 0:
        src[axis] = slice(1, None)
        dst[axis] = slice(None, -1)
    else:
        src[axis] = slice(None, -1)
        dst[axis] = slice(1, None)
    out[tuple(dst)] = mask[tuple(src)]
    return out


@dataclass
class FaceStencil:
    """Per-cell coefficients for the face-flux Laplacian on one scenario."""

    grid: object
    diag: np.ndarray        # sum over faces of 1/(h*d_f)
    slot_coef: np.ndarray   # sum over slot faces of 1/(h*d_f)
    slot_load: np.ndarray   # sum over slot faces of p_f/(h*d_f)
    near_band: np.ndarray

    @property
    def h(self):
        return self.grid.h

    @property
    def fluid(self):
        return self.grid.fluid

    def neighbor_sum(self, values, box=None):
        """Sum of neighbor values / h^2 over the 2n faces, on a sub-box.

        ``values`` must be zero outside FLUID; the box must keep one cell of
        padding inside the array (guaranteed for any box of FLUID cells).
        """
        grid = self.grid
        if box is None:
            box = tuple(slice(1, s - 1) for s in grid.shape)
        out = np.zeros(tuple(s.stop - s.start for s in box))
        for axis in range(grid.n):
            for step in (-1, 1):
                src = tuple(
                    slice(s.start + step, s.stop + step) if a == axis else s
                    for a, s in enumerate(box))
                out += values[src]
        return out / (grid.h * grid.h)

    def slot_influx(self, values, load_scale=1.0):
        """Net flux through slot faces into the fluid, per unit time.

        For field v with Dirichlet data scale*p on the slot boundary this is
        sum over slot faces of h^(n-1) * (scale*p_f - v_i)/d_f.
        """
        g = self.grid
        contrib = load_scale * self.slot_load - self.slot_coef * values
        return float(contrib[g.fluid].sum()) * g.cell_volume

    def window_box(self, source_mask, pad):
        """Bounding box of a dilated mask, clipped one cell inside the grid."""
        mask = ndimage.binary_dilation(source_mask, iterations=pad)
        if not mask.any():
            return None
        box = []
        for axis, size in enumerate(self.grid.shape):
            other = tuple(a for a in range(self.grid.n) if a != axis)
            line = mask.any(axis=other)
            idx = np.nonzero(line)[0]
            box.append(slice(max(1, idx[0]), min(size - 1, idx[-1] + 1)))
        return tuple(box)

    def grow_box(self, box, cells):
        return tuple(slice(max(1, s.start - cells),
                           min(size - 1, s.stop + cells))
                     for s, size in zip(box, self.grid.shape))

    def box_ring(self, box):
        """Mask of cells just outside the box (one-cell shell)."""
        outer = self.grow_box(box, 1)
        ring = np.zeros(self.grid.shape, dtype=bool)
        ring[outer] = True
        ring[box] = False
        return ring


def build_stencil(scenario):
    """Precompute face coefficients for a scenario's grid and slot data."""
    grid = scenario.grid
    geom = scenario.geometry
    fluid = grid.fluid
    open_nb = fluid | grid.farfield

    interior_count = np.zeros(grid.shape)
    slot_coef = np.zeros(grid.shape)
    slot_load = np.zeros(grid.shape)
    h = grid.h

    for axis in range(grid.n):
        for step in (-1, 1):
            interior_count += _shifted(open_nb, axis, step)
            slot_nb = fluid & _shifted(grid.slot, axis, step)
            if not slot_nb.any():
                continue
            cells = np.argwhere(slot_nb)
            a = grid.cell_centers(cells)
            b = a.copy()
            b[:, axis] += step * h
            frac = _crossing_fraction(geom, a, b)
            d = np.clip(frac, MIN_FACE_FRACTION, 1.0) * h
            cross = a + frac[:, None] * (b - a)
            p_face = _nearest_sample_values(geom, scenario.p_samples, cross)
            flat = np.ravel_multi_index(cells.T, grid.shape)
            np.add.at(slot_coef.ravel(), flat, 1.0 / (h * d))
            np.add.at(slot_load.ravel(), flat, p_face / (h * d))

    diag = interior_count / (h * h) + slot_coef
    bad = fluid & (interior_count + (slot_coef > 0) == 0)
    if bad.any():
        raise ConfigError("isolated fluid cell without any usable face")
    diag = np.where(fluid, diag, 1.0)   # unit diagonal off-fluid: avoids 0/0

    return FaceStencil(grid=grid, diag=diag, slot_coef=slot_coef,
                       slot_load=slot_load, near_band=grid.near_band())


def _crossing_fraction(geom, outside_pts, inside_pts, iters=40):
    """Fraction along (outside -> inside) where the slot boundary is crossed."""
    lo = np.zeros(outside_pts.shape[0])
    hi = np.ones(outside_pts.shape[0])
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pts = outside_pts + mid[:, None] * (inside_pts - outside_pts)
        is_in = geom.signed_distance(pts) < 0
        hi = np.where(is_in, mid, hi)
        lo = np.where(is_in, lo, mid)
    return 0.5 * (lo + hi)


def _nearest_sample_values(geom, p_samples, points, chunk=4096):
    values = np.empty(points.shape[0])
    samples = geom.boundary_samples
    for start in range(0, points.shape[0], chunk):
        block = points[start:start + chunk]
        d2 = ((block[:, None, :] - samples[None, :, :]) ** 2).sum(axis=2)
        values[start:start + chunk] = p_samples[np.argmin(d2, axis=1)]
    return values


def omega_for_width(width):
    """SOR factor tuned to a Laplace problem of the given width in cells."""
    omega = 2.0 / (1.0 + np.sin(np.pi / max(float(width), 4.0)))
    return float(np.clip(omega, 1.5, 1.995))


def active_width_cells(active):
    """Area-over-boundary thickness estimate of the active set, in cells.

    For an annular active set of thickness w this returns roughly w; the SOR
    factor tuned to it beats one tuned to the bounding box, because the
    obstacle pins the field to zero beyond the free boundary.
    """
    count = int(active.sum())
    if count == 0:
        return 8.0
    boundary = 0
    for axis in range(active.ndim):
        for step in (-1, 1):
            boundary += int((active & ~_shifted(active, axis, step)).sum())
    return max(8.0, 2.0 * count / max(boundary / 2, 1))


# ---------------------------------------------------------------------------
# projected SOR kernel
# ---------------------------------------------------------------------------

#: load assigned to non-fluid cells so the projected update pins them at zero
PINNED_LOAD = -1e30


def _sublattice_plan(box, n):
    """Strided red-black decomposition of a box into 2^n sub-lattices.

    Each sub-lattice is one parity tuple; its color is the global cell
    parity, so updates are bit-identical regardless of the window.  For each
    sub-lattice the 2n neighbor slices address the opposite color only.
    """
    plans = []
    for bits in range(1 << n):
        parity = [(bits >> a) & 1 for a in range(n)]
        target = tuple(slice(s.start + parity[a], s.stop, 2)
                       for a, s in enumerate(box))
        counts = [len(range(t.start, t.stop, 2)) for t in target]
        if any(c == 0 for c in counts):
            continue
        neighbors = []
        for axis in range(n):
            for step in (-1, 1):
                nb = tuple(
                    slice(t.start + step, t.start + step + 2 * counts[a] - 1, 2)
                    if a == axis else t
                    for a, t in enumerate(target))
                neighbors.append(nb)
        color = (sum(parity) + sum(s.start for s in box)) % 2
        plans.append((color, target, neighbors))
    return plans


def projected_sor(values, diag, rhs, box, fluid, coupling, tol, max_sweeps,
                  omega=None, h=1.0, activation=0.0):
    """Red-black projected SOR for  diag*v - coupling*sum(nb)/h^2 = rhs, v >= 0.

    ``values`` is updated in place and must be exactly zero outside FLUID;
    ``rhs`` must carry :data:`PINNED_LOAD` on non-fluid cells so no mask is
    needed in the inner loop.  With ``omega=None`` the relaxation factor is
    re-tuned at every residual check to the measured active-set width (the
    obstacle pins everything beyond the free boundary, so that width controls
    the slowest mode); a given ``omega`` is honored unchanged.  Convergence
    is max complementarity residual min(equation residual, v) <= tol over
    FLUID cells of the box.  Returns (residual, sweeps, history); callers
    decide what non-convergence means.
    """
    n = values.ndim
    plans = _sublattice_plan(box, n)
    inv_h2 = coupling / (h * h)
    views = []
    for color, target, neighbors in plans:
        views.append((color, values[target], diag[target], rhs[target],
                      [values[nb] for nb in neighbors]))

    fluid_box = fluid[box]
    diag_box = diag[box]
    rhs_box = rhs[box]
    box_view = values[box]

    adapt = omega is None
    if adapt:
        omega = omega_for_width(active_width_cells(values > 0))

    history = []
    sweeps = 0
    check_at = 0
    check_gap = 2
    while True:
        if sweeps >= check_at:
            nb = _box_neighbor_sum(values, box)
            pde = diag_box * box_view - inv_h2 * nb - rhs_box
            res = float(np.abs(np.minimum(pde, box_view))[fluid_box].max())
            history.append((sweeps, res))
            if res <= tol:
                return res, sweeps, history
            if sweeps >= max_sweeps:
                return res, sweeps, history
            if adapt:
                omega = omega_for_width(active_width_cells(box_view > 0))
            check_gap = min(int(check_gap * 1.5) + 1, 30)
            check_at = sweeps + check_gap
        for want in (0, 1):
            for color, tv, dv, rv, nbs in views:
                if color != want:
                    continue
                nb = nbs[0].copy()
                for other in nbs[1:]:
                    nb += other
                cand = (rv + inv_h2 * nb) / dv
                cand *= omega
                cand += (1.0 - omega) * tv
                if activation:
                    cand[cand <= activation] = 0.0
                else:
                    np.maximum(cand, 0.0, out=cand)
                tv[:] = cand
        sweeps += 1


def _box_neighbor_sum(values, box):
    out = None
    for axis in range(values.ndim):
        for step in (-1, 1):
            src = tuple(slice(s.start + step, s.stop + step) if a == axis else s
                        for a, s in enumerate(box))
            out = values[src].copy() if out is None else out + values[src]
    return out
