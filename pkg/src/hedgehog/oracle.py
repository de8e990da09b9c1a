"""Brute-force finite-difference reference solvers (test support only).

Both solvers discretise -y'' + q y = lambda y with the three-point stencil,
impose vertex / boundary / jump conditions as extra rows with no lambda
term, and solve the resulting generalized eigenproblem A y = lambda B y
(B singular on the constraint rows) by sparse shift-invert.  Results on a
mesh and its refinement are Richardson-combined.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.sparse.linalg import LinearOperator, eigs, splu

from .graph import DEFAULT_DENSITY, PotentialField, ValidatedGraph, check_potential
from .propagators import CycleProblem

MIN_DENSITY = 64
POINTS_PER_WAVE = 12  # mesh points per wavelength of the highest requested mode


class _System:
    """Row-by-row builder of the sparse pencil (A, B)."""

    def __init__(self, n):
        self.n = n
        self.rows, self.cols, self.vals = [], [], []
        self.brows = []
        self.row = 0

    def add(self, entries, lam_at=None):
        for c, v in entries:
            self.rows.append(self.row)
            self.cols.append(c)
            self.vals.append(v)
        if lam_at is not None:
            self.brows.append((self.row, lam_at))
        self.row += 1

    def ode(self, im, i, ip, s, q):
        """-(y[im] - 2 y[i] + y[ip]) / s^2 + q y[i] = lambda y[i]."""
        self.add([(im, -1 / s**2), (i, 2 / s**2 + q), (ip, -1 / s**2)], lam_at=i)

    def matrices(self):
        if self.row != self.n:
            raise AssertionError(f"{self.row} rows for {self.n} unknowns")
        A = sp.csc_matrix((self.vals, (self.rows, self.cols)), shape=(self.n, self.n))
        r, c = zip(*self.brows)
        B = sp.csc_matrix((np.ones(len(r)), (r, c)), shape=(self.n, self.n))
        return A, B


def _lowest(A, B, count, floor):
    """``count`` lowest eigenpairs of A y = lambda B y (all eigenvalues > floor).

    Shift-invert by hand: nu = 1 / (lambda - floor) are the largest eigenvalues
    of (A - floor B)^{-1} B; the infinite eigenvalues of the singular pencil
    map to nu = 0.
    """
    lu = splu((A - floor * B).tocsc())
    op = LinearOperator(A.shape, matvec=lambda x: lu.solve(B @ x), dtype=float)
    k = min(count + 4, A.shape[0] - 2)
    nu, vecs = eigs(op, k=k, which="LM")
    lam = floor + 1.0 / nu
    order = np.argsort(lam.real)[:count]
    vecs = vecs[:, order]
    # eigenvectors come back with arbitrary complex phase
    pivot = vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])]
    return lam.real[order], (vecs * (np.abs(pivot) / pivot)).real


def _check_mesh(density, count, length):
    if density < MIN_DENSITY:
        raise ValueError(f"mesh density {density} below the minimum {MIN_DENSITY} per unit length")
    rho = math.pi * (count + 1) / length
    if density < POINTS_PER_WAVE * rho / (2 * math.pi):
        raise ValueError(
            f"mesh density {density} too coarse for {count} eigenvalues (need >= "
            f"{math.ceil(POINTS_PER_WAVE * rho / (2 * math.pi))})"
        )


def _floor(qmin, h, alpha, beta, tmin):
    w = np.maximum(np.asarray(alpha) / np.asarray(beta), np.asarray(beta) / np.asarray(alpha))
    hs = float(np.sum(np.abs(h) * w))
    return min(qmin, 0.0) - 4.0 * (1.0 + hs) ** 2 - 4.0 * hs / tmin - 5.0


# --- graph ------------------------------------------------------------------


def _graph_pencil(graph: ValidatedGraph, Q: PotentialField, density, dset):
    sizes = [max(4, int(math.ceil(density * t))) for t in graph.lengths]
    offs = np.concatenate([[0], np.cumsum([m + 1 for m in sizes])])
    sysm = _System(int(offs[-1]))
    steps = [t / m for t, m in zip(graph.lengths, sizes)]

    def node(j, i):
        return int(offs[j] + i)

    def d_start(j):  # y'(0), second order one-sided
        s = steps[j]
        return [(node(j, 0), -1.5 / s), (node(j, 1), 2 / s), (node(j, 2), -0.5 / s)]

    def d_end(j):  # y'(T)
        s, m = steps[j], sizes[j]
        return [(node(j, m), 1.5 / s), (node(j, m - 1), -2 / s), (node(j, m - 2), 0.5 / s)]

    for j, m in enumerate(sizes):
        x = np.linspace(0, graph.lengths[j], m + 1)
        q = Q(j, x)
        for i in range(1, m):
            sysm.ode(node(j, i - 1), node(j, i), node(j, i + 1), steps[j], q[i])
    for j in range(graph.r):
        if j + 1 in dset:
            sysm.add([(node(j, 0), 1.0)])
        else:  # y'(0) - h y(0) = 0
            sysm.add(d_start(j) + [(node(j, 0), -graph.h[j])])
    for v in graph.vertices:
        o = v.cycle_out
        incoming = list(v.boundary_in) + [v.cycle_in]
        for i in incoming:  # y_o(0) = alpha_i y_i(T_i)
            sysm.add([(node(o, 0), 1.0), (node(i, sizes[i]), -graph.alpha[i])])
        # y_o'(0) - h_o y_o(0) = sum beta_i y_i'(T_i)
        row = d_start(o) + [(node(o, 0), -graph.h[o])]
        for i in incoming:
            row += [(c, -graph.beta[i] * val) for c, val in d_end(i)]
        sysm.add(row)
    return sysm.matrices()


def fd_graph_eigenvalues(graph: ValidatedGraph, Q: PotentialField, mesh_density=DEFAULT_DENSITY, count=10,
                         dirichlet_set=(), richardson=True) -> np.ndarray:
    """Lowest eigenvalues of the graph problem (Robin ends, or Dirichlet on ``dirichlet_set``).

    H is taken from ``graph.h``.  The default mesh coincides with the default
    potential sample grid, so kinks of the interpolated potential sit on mesh
    nodes (misaligned meshes lose the Richardson gain).  With ``richardson`` the result combines the
    mesh and its 2x refinement, (4 lam_fine - lam_coarse) / 3.
    """
    check_potential(graph, Q)
    _check_mesh(mesh_density, count, graph.total_length)
    dset = frozenset(int(j) for j in dirichlet_set)
    floor = _floor(min(float(np.min(s)) for s in Q.samples), graph.h, graph.alpha, graph.beta,
                   float(np.min(graph.lengths)))
    lam = _lowest(*_graph_pencil(graph, Q, mesh_density, dset), count, floor)[0]
    if not richardson:
        return lam
    fine = _lowest(*_graph_pencil(graph, Q, 2 * mesh_density, dset), count, floor)[0]
    return (4 * fine - lam) / 3


# --- cycle ------------------------------------------------------------------


def _cycle_pencil(cp: CycleProblem, density):
    """Dirichlet problem y(0) = y(T) = 0 with jumps, ghost nodes at the breakpoints.

    Node layout per segment: [ghost_left?] y_0 .. y_m [ghost_right?].
    """
    N = cp.lengths.size
    sizes = [max(4, int(math.ceil(density * t))) for t in cp.lengths]
    steps = [t / m for t, m in zip(cp.lengths, sizes)]
    starts, n = [], 0
    for k, m in enumerate(sizes):
        gl = 1 if k > 0 else 0
        gr = 1 if k < N - 1 else 0
        starts.append(n + gl)
        n += gl + m + 1 + gr
    sysm = _System(n)
    p = cp.params
    for k, m in enumerate(sizes):
        x = np.linspace(0, cp.lengths[k], m + 1)
        q = cp.meshes[k].q(x)
        b = starts[k]
        # breakpoint nodes carry the ODE too (through their ghosts); y(0), y(T) do not
        first = 1 if k == 0 else 0
        last = m - 1 if k == N - 1 else m
        for i in range(first, last + 1):
            sysm.ode(b + i - 1, b + i, b + i + 1, steps[k], q[i])
    sysm.add([(starts[0], 1.0)])  # y(0) = 0
    sysm.add([(starts[-1] + sizes[-1], 1.0)])  # y(T) = 0
    for k in range(N - 1):
        L = starts[k] + sizes[k]  # last node of segment k; L + 1 is its ghost
        R = starts[k + 1]  # first node of segment k+1; R - 1 is its ghost
        sL, sR = steps[k], steps[k + 1]
        g, eta = p.gamma[k], p.eta[k]
        sysm.add([(R, 1.0), (L, -g)])  # y+ = gamma y-
        # y+' = y-' / gamma + eta y-, central differences through the ghosts
        sysm.add([(R + 1, 1 / (2 * sR)), (R - 1, -1 / (2 * sR)),
                  (L + 1, -1 / (2 * sL * g)), (L - 1, 1 / (2 * sL * g)), (L, -eta)])
    return sysm.matrices(), starts, sizes, steps


def _cycle_weyl(cp: CycleProblem, density, count):
    (A, B), starts, sizes, steps = _cycle_pencil(cp, density)
    qmin = min(float(np.min(m.q(np.linspace(0, t, 64)))) for m, t in zip(cp.meshes, cp.lengths))
    floor = _floor(qmin, np.concatenate([[0.0], cp.params.eta]), [1.0], [1.0], float(np.min(cp.lengths)))
    z, vecs = _lowest(A, B, count, floor)
    M = np.empty(count)
    for n in range(count):
        y = vecs[:, n]
        b, s = starts[0], steps[0]
        slope = (-1.5 * y[b] + 2 * y[b + 1] - 0.5 * y[b + 2]) / s  # second order, like the rest
        y = y / slope  # S(x, z_n): y'(0) = 1
        # M_n = -d1/d' = -1 / int S^2 (Wronskian identities, unit-determinant jumps)
        norm = sum(
            trapezoid(y[st : st + m + 1] ** 2, dx=h) for st, m, h in zip(starts, sizes, steps)
        )
        M[n] = -1.0 / norm
    return z, M


def fd_cycle_weyl_data(cp: CycleProblem, mesh_density=512, count=20, richardson=True):
    """Reference (z_n, M_n): zeros of d = S(T) and M_n = -d1(z_n) / d'(z_n)."""
    _check_mesh(mesh_density, count, cp.T)
    z, M = _cycle_weyl(cp, mesh_density, count)
    if not richardson:
        return z, M
    zf, Mf = _cycle_weyl(cp, 2 * mesh_density, count)
    return (4 * zf - z) / 3, (4 * Mf - M) / 3
