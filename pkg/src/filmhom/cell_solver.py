"""Minimization of masked gradient energies on structured grids.

Discretization: node-based fields, cell-centered masks, forward-difference
per-cell gradients.  On a grid with periodic axes, nodes and cells share the
same index set and differences wrap; on non-periodic axes there is one more
node layer than cells and boundary nodes can be frozen (Dirichlet).  This
lowest-order choice keeps the zero corrector exactly optimal on full masks
and makes grid-aligned stripe correctors exact.

Solvers: hand-rolled matrix-free conjugate gradient for quadratic densities,
monotone accelerated descent with backtracking line search otherwise.  Cells
outside the mask contribute no energy; nodes touching no occupied cell stay
frozen at zero; the remaining constant-per-component null space is handled
by starting from a consistent state and gauge-fixing afterwards.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyDensity, as_matrix
from .errors import ConfigurationError, DimensionMismatchError


@dataclass(frozen=True)
class SolverOptions:
    method: str = "auto"            # auto | cg | descent
    cg_rtol: float = 1e-10
    grad_tol: float = 1e-8          # scaled by (1 + |F|^(p-1)) at solve time
    max_iterations: int | None = None   # default: 10 * number of nodes
    record_trace: bool = False


@dataclass
class SolveReport:
    iterations: int
    final_energy: float
    residual: float
    converged: bool
    method: str
    notes: str = ""
    energy_trace: list = field(default_factory=list)


@dataclass(frozen=True)
class CorrectorField:
    """Periodic node values of a cell-problem minimizer, one layer per field
    component, gauge-fixed to zero mean on each connected component of the
    active node set."""

    dim: int
    m: int
    resolution: tuple
    values: np.ndarray


class _SmoothedColumns:
    """Consistent smoothing of a p < 2 column-norm density: both the value and
    the stress come from sqrt(|G_j|^2 + eps^2), shifted so W(0) = 0.  The
    descent solver minimizes this smooth objective; the exact density is used
    only to report the final value (bias O(eps^p) ~ 1e-12)."""

    def __init__(self, base, eps=1e-8):
        self.base = base
        self.eps = eps
        self.m = base.m
        self.n = base.n
        self.p = base.p
        self.kind = base.kind
        self.convex = base.convex
        self.label = f"smoothed({base.label})"
        self.is_quadratic = False
        self.uses_smoothing = True

    def check_dims(self, m, n):
        self.base.check_dims(m, n)

    def cell_values(self, G):
        p, e2 = self.p, self.eps ** 2
        if self.kind == "p_norm_power":
            s2 = np.sum(G * G, axis=0) + e2
            return np.sum(s2 ** (p / 2.0) - self.eps ** p, axis=0)
        s2 = np.sum(G * G, axis=(0, 1)) + e2
        return s2 ** (p / 2.0) - self.eps ** p

    def cell_stress(self, G):
        p, e2 = self.p, self.eps ** 2
        if self.kind == "p_norm_power":
            s2 = np.sum(G * G, axis=0) + e2
            return p * s2[np.newaxis] ** (p / 2.0 - 1.0) * G
        s2 = np.sum(G * G, axis=(0, 1)) + e2
        return p * s2[np.newaxis, np.newaxis] ** (p / 2.0 - 1.0) * G


@dataclass(frozen=True)
class _Grid:
    cells: tuple
    spacings: tuple
    periodic: tuple

    @property
    def dim(self):
        return len(self.cells)

    @property
    def node_shape(self):
        return tuple(c if p else c + 1 for c, p in zip(self.cells, self.periodic))

    @property
    def cell_volume(self):
        return math.prod(self.spacings)

    @property
    def num_nodes(self):
        return math.prod(self.node_shape)


def _cell_windows(grid, axis):
    lo = (slice(None),) + tuple(slice(0, c) for c in grid.cells)
    hi = (slice(None),) + tuple(
        slice(1, grid.cells[b] + 1) if b == axis else slice(0, grid.cells[b])
        for b in range(grid.dim)
    )
    return lo, hi


def _cell_gradient(grid, v):
    """(m, *nodes) -> (m, dim, *cells): forward differences per cell."""
    m = v.shape[0]
    G = np.empty((m, grid.dim) + grid.cells)
    for a in range(grid.dim):
        lo, hi = _cell_windows(grid, a)
        if grid.periodic[a]:
            shifted = np.roll(v, -1, axis=1 + a)
            G[:, a] = (shifted[lo] - v[lo]) / grid.spacings[a]
        else:
            G[:, a] = (v[hi] - v[lo]) / grid.spacings[a]
    return G


def _cell_gradient_adjoint(grid, P):
    """Adjoint of _cell_gradient: <P, Dv>_cells = <adjoint(P), v>_nodes."""
    m = P.shape[0]
    out = np.zeros((m,) + grid.node_shape)
    for a in range(grid.dim):
        lo, hi = _cell_windows(grid, a)
        Pa = P[:, a] / grid.spacings[a]
        buf = np.zeros_like(out)
        buf[lo] = Pa
        out -= buf
        if grid.periodic[a]:
            out += np.roll(buf, 1, axis=1 + a)
        else:
            buf2 = np.zeros_like(out)
            buf2[hi] = Pa
            out += buf2
    return out


def _active_node_mask(grid, mask):
    """Nodes touched by at least one occupied cell (the forward stencil of a
    cell uses its base node and the base shifted by one along each axis)."""
    active = np.zeros(grid.node_shape, dtype=bool)
    lo_all = tuple(slice(0, c) for c in grid.cells)
    for a in range(-1, grid.dim):
        buf = np.zeros(grid.node_shape, dtype=bool)
        buf[lo_all] = mask
        if a >= 0:
            if grid.periodic[a]:
                buf = np.roll(buf, 1, axis=a)
            else:
                shifted = np.zeros_like(buf)
                hi = tuple(slice(1, grid.cells[b] + 1) if b == a else slice(0, grid.cells[b])
                           for b in range(grid.dim))
                shifted[hi] = mask
                buf = shifted
        active |= buf
    return active


# -- internal masked solve -----------------------------------------------------

def _solve_masked(grid, mask, W, F, opts, v0=None, frozen=None):
    """Minimize cellvol * sum_{occupied} W(F + Dv) over node fields v.

    Returns (integral, v, report).  ``frozen`` marks nodes held at zero
    (Dirichlet).  The reported final_energy is the integral.
    """
    opts = opts or SolverOptions()
    m = W.m
    F = as_matrix(F)
    if F.shape != (m, grid.dim):
        raise DimensionMismatchError(
            f"offset matrix has shape {F.shape}; expected ({m}, {grid.dim})"
        )
    W.check_dims(m, grid.dim)

    free = None
    if frozen is not None:
        free = ~frozen

    def project(arr):
        if free is not None:
            arr *= free
        return arr

    maskf = mask.astype(float)
    Fcells = F.reshape((m, grid.dim) + (1,) * grid.dim)
    vol = grid.cell_volume

    objective = _SmoothedColumns(W) if W.uses_smoothing else W

    def energy(v):
        G = _cell_gradient(grid, v) + Fcells
        return vol * float(np.sum(objective.cell_values(G) * maskf))

    def energy_exact(v):
        G = _cell_gradient(grid, v) + Fcells
        return vol * float(np.sum(W.cell_values(G) * maskf))

    def gradient(v):
        G = _cell_gradient(grid, v) + Fcells
        P = objective.cell_stress(G) * maskf
        return project(_cell_gradient_adjoint(grid, P) * vol)

    if v0 is None:
        v0 = np.zeros((m,) + grid.node_shape)
    else:
        v0 = project(np.array(v0, dtype=float, copy=True))

    maxiter = opts.max_iterations
    if maxiter is None:
        maxiter = 10 * m * grid.num_nodes

    method = opts.method
    if method == "auto":
        method = "cg" if W.is_quadratic else "descent"
    if method == "cg" and not W.is_quadratic:
        raise ConfigurationError(
            f"cg requested but density {W.label!r} is not quadratic"
        )

    notes = []
    if not W.convex:
        warnings.warn(
            "non-convex density: only a local minimum is guaranteed",
            stacklevel=3,
        )
        notes.append("non-convex density; local minimum only")
    if W.uses_smoothing:
        notes.append("p<2 column norms smoothed with eps=1e-8")

    if method == "cg":
        # stress is linear: gradient(v) = K v + g0 with g0 = gradient(0)
        g0 = gradient(np.zeros_like(v0))

        def apply_K(u):
            return gradient(u) - g0

        x, iters, rel_res, ok = _conjugate_gradient(
            apply_K, -g0, v0, opts.cg_rtol, maxiter)
        val = energy(x)
        report = SolveReport(iterations=iters, final_energy=val, residual=rel_res,
                             converged=ok, method="cg", notes="; ".join(notes))
        return val, x, report

    Fnorm = float(np.linalg.norm(F))
    gtol = opts.grad_tol * (1.0 + Fnorm ** (W.p - 1.0))
    x, iters, gnorm, ok, trace = _accelerated_descent(
        energy, gradient, v0, gtol, maxiter, record=opts.record_trace)
    val = energy_exact(x)
    report = SolveReport(iterations=iters, final_energy=val, residual=gnorm,
                         converged=ok, method="descent", notes="; ".join(notes),
                         energy_trace=trace)
    return val, x, report


def _conjugate_gradient(apply_K, b, x0, rtol, maxiter):
    x = x0.copy()
    r = b - apply_K(x)
    bnorm = float(np.linalg.norm(b))
    denom = bnorm if bnorm > 0 else 1.0
    rs = float(np.vdot(r, r))
    it = 0
    if math.sqrt(rs) <= rtol * denom:
        return x, 0, math.sqrt(rs) / denom, True
    p = r.copy()
    while it < maxiter:
        Kp = apply_K(p)
        pKp = float(np.vdot(p, Kp))
        if pKp <= 0:
            # numerically null direction of the semidefinite operator
            break
        alpha = rs / pKp
        x += alpha * p
        r -= alpha * Kp
        rs_new = float(np.vdot(r, r))
        it += 1
        if math.sqrt(rs_new) <= rtol * denom:
            rs = rs_new
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    rel = math.sqrt(rs) / denom
    return x, it, rel, rel <= rtol


def _accelerated_descent(energy, gradient, x0, gtol, maxiter, record=False):
    """Nesterov-accelerated descent with backtracking; restarts keep the
    accepted energy sequence non-increasing."""
    x = x0.copy()
    fx = energy(x)
    y = x.copy()
    t = 1.0
    step = 1.0
    trace = [fx] if record else []
    it = 0
    while it < maxiter:
        gx = gradient(x)
        gxn = float(np.linalg.norm(gx))
        if gxn <= gtol:
            return x, it, gxn, True, trace
        gy = gradient(y)
        fy = energy(y)
        gyn2 = float(np.vdot(gy, gy))
        while True:
            cand = y - step * gy
            fc = energy(cand)
            if fc <= fy - 0.5 * step * gyn2 or step < 1e-20:
                break
            step *= 0.5
        it += 1
        if fc < fx:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = cand + ((t - 1.0) / t_new) * (cand - x)
            x, fx, t = cand, fc, t_new
            step *= 1.25
            if record:
                trace.append(fx)
        else:
            # momentum overshoot: restart from the best point
            y = x.copy()
            t = 1.0
            step *= 0.5
            if step < 1e-20:
                break  # decrease below floating-point resolution of the energy
    gxn = float(np.linalg.norm(gradient(x)))
    return x, it, gxn, gxn <= gtol, trace


# -- gauge fixing ----------------------------------------------------------------

def _node_components(grid, mask):
    """Label connected components of the active node set, where nodes are
    linked when they appear in the stencil of a common occupied cell."""
    node_shape = grid.node_shape
    labels = np.full(node_shape, -1, dtype=np.int64)
    occ_idx = np.transpose(np.nonzero(mask))
    if occ_idx.size == 0:
        return labels, 0

    # adjacency: base node of each occupied cell to each shifted node
    def node_of(cell_idx, axis):
        idx = list(cell_idx)
        if axis >= 0:
            idx[axis] += 1
            if grid.periodic[axis] and idx[axis] == node_shape[axis]:
                idx[axis] = 0
        return tuple(idx)

    cell_nodes = {}
    node_cells = {}
    for cell in map(tuple, occ_idx):
        nodes = [node_of(cell, a) for a in range(-1, grid.dim)]
        cell_nodes[cell] = nodes
        for nd in nodes:
            node_cells.setdefault(nd, []).append(cell)

    comp = 0
    for cell in cell_nodes:
        seed = cell_nodes[cell][0]
        if labels[seed] != -1:
            continue
        queue = deque([seed])
        labels[seed] = comp
        while queue:
            nd = queue.popleft()
            for c in node_cells.get(nd, ()):
                for nb in cell_nodes[c]:
                    if labels[nb] == -1:
                        labels[nb] = comp
                        queue.append(nb)
        comp += 1
    return labels, comp


def _gauge_fix(grid, mask, v):
    labels, ncomp = _node_components(grid, mask)
    for c in range(ncomp):
        sel = labels == c
        if not sel.any():
            continue
        for i in range(v.shape[0]):
            v[i][sel] -= v[i][sel].mean()
    return v


# -- public operations ------------------------------------------------------------

def minimize_periodic(mask, W, F, opts=None, v0=None, want_corrector=True):
    """Minimize the mean masked energy over 1-periodic corrector fields.

    Parameters
    ----------
    mask : bool array over the unit-cell grid (any dim 1-3), cell-centered.
    W : EnergyDensity declared for (m, dim) matrices.
    F : m x dim offset matrix (the macroscopic gradient).
    opts : SolverOptions.
    v0 : optional warm-start node field.
    want_corrector : skip component labeling and gauge fixing when False
        (the value is gauge-invariant).

    Returns
    -------
    (value, corrector, report) where value = (1/#cells) * sum over occupied
    cells of W(F + Dv) at the discrete minimizer.  An empty mask gives value
    0 with a zero corrector.  Unconverged solves return the best value found
    with report.converged False; the caller decides.
    """
    mask = np.asarray(mask, dtype=bool)
    d = mask.ndim
    F = as_matrix(F)
    m = F.shape[0]
    grid = _Grid(cells=mask.shape, spacings=tuple(1.0 / c for c in mask.shape),
                 periodic=(True,) * d)
    if not mask.any():
        zero = np.zeros((m,) + grid.node_shape)
        corr = CorrectorField(dim=d, m=m, resolution=grid.node_shape, values=zero)
        report = SolveReport(iterations=0, final_energy=0.0, residual=0.0,
                             converged=True, method="empty")
        return 0.0, corr, report

    integral, v, report = _solve_masked(grid, mask, W, F, opts, v0=v0)
    # unit cell has volume one: the integral is already the cell mean
    if want_corrector:
        v = _gauge_fix(grid, mask, v)
    v.flags.writeable = False
    corr = CorrectorField(dim=d, m=m, resolution=grid.node_shape, values=v)
    return integral, corr, report


def minimize_dirichlet(mask, W, F, box_side, opts=None, v0=None):
    """Minimize the masked energy over fields vanishing on the boundary of a
    box of integer side ``box_side`` (whole periods), normalized by the box
    volume.

    ``mask`` covers the whole box (callers replicate the unit-cell mask).
    Returns (value, report).
    """
    mask = np.asarray(mask, dtype=bool)
    d = mask.ndim
    T = int(box_side)
    if T < 1:
        raise ConfigurationError(f"box side must be a positive integer; got {box_side}")
    grid = _Grid(cells=mask.shape, spacings=tuple(T / c for c in mask.shape),
                 periodic=(False,) * d)
    if not mask.any():
        return 0.0, SolveReport(iterations=0, final_energy=0.0, residual=0.0,
                                converged=True, method="empty")
    frozen = np.zeros(grid.node_shape, dtype=bool)
    for a in range(d):
        sl = [slice(None)] * d
        sl[a] = 0
        frozen[tuple(sl)] = True
        sl[a] = -1
        frozen[tuple(sl)] = True
    integral, _, report = _solve_masked(grid, mask, W, F, opts, v0=v0, frozen=frozen)
    value = integral / float(T) ** d
    report.final_energy = value
    return value, report
