"""Characteristic functions of the cycle problem and of the graph problems.

Graph determinants are evaluated numerically from the linear system obtained
by writing the solution on edge ``j`` as ``M0_j S_j + M1_j phi_j`` and
imposing the boundary rows and the matching conditions.  Columns are ordered
``(M0_1, M1_1, M0_2, ...)``; rows are the r boundary rows, then for each
internal vertex ``v_{r+1}, ..., v_{r+N}`` its value rows (boundary edges in
ascending order, then the arriving cycle segment) followed by its flux row.

The raw determinant is divided by a constant ``K`` depending only on the
matching coefficients and lengths, so that

    Delta_0 = sigma * (a_0 + sum_M a_M prod_{i in M} omega_i)

holds exactly with ``a_0`` the cycle function ``a(lambda)``.  Dirichlet
variants carry the sign ``(-1)^p`` so that they are literally the
"phi_j -> S_j" replacement of ``Delta_0``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .graph import PotentialField, ValidatedGraph, check_potential, reduced_cycle_params
from .propagators import (
    DEFAULT_SUBSTEPS,
    CycleProblem,
    EdgeMesh,
    PropagatorValue,
    _as_value,
    _identity,
    _jump,
    _mul,
    _prep,
    check_overflow,
)

REGULARITY_THRESHOLD = 1e-8
CONDITION_LIMIT = 1e10
_NORM_PROBES = np.array([0.37 + 1.1j, -2.3 + 4.0j, 5.1 - 0.7j])


class PoleWarning(UserWarning):
    """The Weyl function was evaluated at (or extremely near) a pole."""


@dataclass(frozen=True)
class CycleCharValues:
    a: np.ndarray
    d: np.ndarray
    d1: np.ndarray
    Q: np.ndarray
    D: np.ndarray


# --- cycle ---------------------------------------------------------------


def _segment_transfers(meshes, flat):
    return [m.transfer(flat) for m in meshes]


def _combine_cycle(segs, gamma, etas, L):
    """Ordered product of segment matrices with (possibly lambda-dependent) jumps."""
    acc = _identity(L, False)
    for k, seg in enumerate(segs):
        acc = _mul(seg, acc)
        if k < len(segs) - 1:
            J = _jump(gamma[k], etas[k], L, False)
            acc = _mul(J, acc)
    return acc


def _char_from_end(end, h, alpha, beta) -> CycleCharValues:
    C, S, dS = end[0], end[1], end[3]
    phi = C + h * S
    D = alpha * phi + beta * dS
    return CycleCharValues(a=D - (1 + alpha * beta), d=S, d1=C, Q=alpha * phi - beta * dS, D=D)


def cycle_char(cp: CycleProblem, lam) -> CycleCharValues:
    """a, d, d1, Q, D of the quasi-periodic problem with jumps."""
    flat, shape = _prep(lam)
    check_overflow(flat, cp.T)
    p = cp.params
    end = _combine_cycle(_segment_transfers(cp.meshes, flat), p.gamma, p.eta, flat.size)
    vals = _char_from_end(end, p.h, p.alpha, p.beta)
    if shape == ():
        return CycleCharValues(*(complex(np.asarray(v).reshape(-1)[0]) for v in vals.__dict__.values()))
    return CycleCharValues(*(np.reshape(v, shape) for v in vals.__dict__.values()))


# --- graph ---------------------------------------------------------------


class GraphProblem:
    """A validated graph together with a potential and cached propagation meshes."""

    def __init__(self, graph: ValidatedGraph, Q: PotentialField, substeps=DEFAULT_SUBSTEPS):
        check_potential(graph, Q)
        self.graph = graph
        self.Q = Q
        self.substeps = substeps
        self.meshes = tuple(EdgeMesh(s, t, substeps) for s, t in zip(Q.samples, graph.lengths))
        self.cycle = CycleProblem.from_graph(graph, Q, substeps)

    def endpoints(self, flat) -> list[PropagatorValue]:
        """Values at x_j = T_j on every edge for a 1-d lambda array."""
        out = []
        for j, m in enumerate(self.meshes):
            out.append(_as_value(m.transfer(flat), float(self.graph.h[j]), flat.shape))
        return out

    def check(self, flat):
        check_overflow(flat, self.graph.total_length)


def zero_problem(graph: ValidatedGraph, substeps=DEFAULT_SUBSTEPS, zero_h=True) -> GraphProblem:
    """Reference model: zero potential (and zero Robin coefficients) on the same geometry."""
    g = graph.with_h(np.zeros(graph.n_edges)) if zero_h else graph
    Q = PotentialField.from_functions(g.lengths, [lambda x: 0 * x] * g.n_edges, density=2)
    return GraphProblem(g, Q, substeps)


def _as_set(dirichlet_set):
    s = frozenset(int(j) for j in (dirichlet_set or ()))
    return s


def assemble_system(graph: ValidatedGraph, ends, dirichlet_set=(), k=None):
    """Matrix of the system D_k, shape (L, n, n), and its right-hand side.

    ``ends`` are endpoint values of every edge; ``dirichlet_set`` holds
    1-based boundary edges carrying y_j(0) = 0 instead of U_j(Y) = 0.
    """
    dset = _as_set(dirichlet_set)
    r, ne = graph.r, graph.n_edges
    L = np.asarray(ends[0].S).size
    n = 2 * ne
    A = np.zeros((L, n, n), dtype=complex)
    for j in range(r):
        if j + 1 in dset:
            A[:, j, 2 * j + 1] = 1.0
        else:
            A[:, j, 2 * j] = 1.0
    row = r
    for v in graph.vertices:
        o = v.cycle_out
        incoming = list(v.boundary_in) + [v.cycle_in]
        for i in incoming:
            e = ends[i]
            A[:, row, 2 * o + 1] += 1.0
            A[:, row, 2 * i] -= graph.alpha[i] * e.S
            A[:, row, 2 * i + 1] -= graph.alpha[i] * e.phi
            row += 1
        A[:, row, 2 * o] += 1.0
        for i in incoming:
            e = ends[i]
            A[:, row, 2 * i] -= graph.beta[i] * e.dS
            A[:, row, 2 * i + 1] -= graph.beta[i] * e.dphi
        row += 1
    assert row == n
    rhs = np.zeros((L, n), dtype=complex)
    if k is not None:
        rhs[:, k - 1] = 1.0
    return A, rhs


def _raw_det(graph, ends, dset):
    A, _ = assemble_system(graph, ends, dset)
    return np.linalg.det(A)


def _omegas(graph: ValidatedGraph, ends, dset):
    """Per-block sums omega_i and the factor sigma for a Dirichlet set."""
    L = np.asarray(ends[0].S).size
    sigma = np.ones(L, dtype=complex)
    omega = []
    for blk in graph.blocks:
        w = np.zeros(L, dtype=complex)
        for j in blk:
            e = ends[j]
            a, b = graph.alpha[j], graph.beta[j]
            if j + 1 in dset:
                sigma = sigma * a * e.S
                w = w + b * e.dS / (a * e.S)
            else:
                sigma = sigma * a * e.phi
                w = w + b * e.dphi / (a * e.phi)
        omega.append(w)
    return sigma, omega


def _reduced_from_ends(prob: GraphProblem, flat, ends, dset):
    graph = prob.graph
    r, N = graph.r, graph.N
    p = reduced_cycle_params(graph)
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma, omega = _omegas(graph, ends, dset)
    hc = graph.h[r:]
    h_eff = p.h + omega[0]
    etas = [p.gamma[j] * (hc[j + 1] + omega[j + 1]) for j in range(N - 1)]
    segs = [[ends[r + k].C, ends[r + k].S, ends[r + k].dC, ends[r + k].dS] for k in range(N)]
    end = _combine_cycle(segs, p.gamma, etas, flat.size)
    vals = _char_from_end(end, h_eff, p.alpha, p.beta)
    return sigma * vals.a


def reduced_delta(prob: GraphProblem, dirichlet_set, lam):
    """sigma_V * a(lambda; h + omega_1, eta_j + gamma_j omega_{j+1}).

    Independent route to the normalised characteristic function: boundary
    edges are folded into lambda-dependent Robin terms on the cycle.
    """
    flat, shape = _prep(lam)
    prob.check(flat)
    ends = prob.endpoints(flat)
    out = _reduced_from_ends(prob, flat, ends, _as_set(dirichlet_set))
    return out.reshape(shape) if shape else complex(out[0])


def _graph_key(graph: ValidatedGraph):
    return (
        graph.block_sizes,
        tuple(graph.lengths.tolist()),
        tuple(graph.alpha.tolist()),
        tuple(graph.beta.tolist()),
    )


@lru_cache(maxsize=64)
def _normaliser_cached(key):
    sizes, lengths, alpha, beta = key
    from .graph import GraphSpec, validate_graph

    g = validate_graph(GraphSpec(sizes, lengths, alpha, beta))
    ref = zero_problem(g, substeps=1)
    ends = ref.endpoints(_NORM_PROBES)
    raw = _raw_det(g, ends, frozenset())
    red = _reduced_from_ends(ref, _NORM_PROBES, ends, frozenset())
    ratios = raw / red
    best = int(np.argmax(np.abs(red)))
    return complex(ratios[best])


def normaliser(graph: ValidatedGraph) -> complex:
    """Constant K with det(D) = K * sigma * (a_0 + ...)."""
    return _normaliser_cached(_graph_key(graph))


def delta_from_ends(graph: ValidatedGraph, ends, dirichlet_set=()):
    dset = _as_set(dirichlet_set)
    return (-1) ** len(dset) * _raw_det(graph, ends, dset) / normaliser(graph)


def assemble_delta(prob: GraphProblem, dirichlet_set, lam, k=1):
    """Normalised characteristic function Delta_0 (empty set) or Delta_{nu...}.

    ``k`` selects which system D_k is assembled; the matrix, and hence the
    determinant, does not depend on it.
    """
    flat, shape = _prep(lam)
    prob.check(flat)
    ends = prob.endpoints(flat)
    dset = _as_set(dirichlet_set)
    A, _ = assemble_system(prob.graph, ends, dset, k)
    out = (-1) ** len(dset) * np.linalg.det(A) / normaliser(prob.graph)
    return out.reshape(shape) if shape else complex(out[0])


def all_deltas(prob: GraphProblem, labels, lam):
    """Normalised Delta for several labels sharing one propagation."""
    flat, shape = _prep(lam)
    prob.check(flat)
    ends = prob.endpoints(flat)
    return {lab: delta_from_ends(prob.graph, ends, lab).reshape(shape) for lab in labels}


def weyl_function(prob: GraphProblem, k: int, lam, method="ratio"):
    """M_k(lambda) = -Delta_k / Delta_0, or Phi_kk(0) from a direct solve of D_k."""
    flat, shape = _prep(lam)
    prob.check(flat)
    ends = prob.endpoints(flat)
    if method == "ratio":
        d0 = delta_from_ends(prob.graph, ends, ())
        dk = delta_from_ends(prob.graph, ends, (k,))
        poles = d0 == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -dk / d0
    elif method == "cramer":
        A, rhs = assemble_system(prob.graph, ends, (), k)
        poles = np.linalg.cond(A) > 1e15
        sol = np.empty((flat.size, A.shape[1]), dtype=complex)
        ok = ~poles
        if ok.any():
            sol[ok] = np.linalg.solve(A[ok], rhs[ok][..., None])[..., 0]
        sol[~ok] = np.inf
        out = sol[:, 2 * (k - 1) + 1]
    else:
        raise ValueError(f"unknown method {method!r}")
    if np.any(poles):
        warnings.warn(f"Weyl function M_{k} evaluated at a pole", PoleWarning, stacklevel=2)
        out = np.where(poles, complex(np.inf, 0), out)
    return out.reshape(shape) if shape else complex(out[0])


def weyl_solution(prob: GraphProblem, k: int, lam):
    """Coefficients (M0_j, M1_j) of Phi_k on every edge, shape (L, r+N, 2)."""
    flat, _ = _prep(lam)
    prob.check(flat)
    ends = prob.endpoints(flat)
    A, rhs = assemble_system(prob.graph, ends, (), k)
    sol = np.linalg.solve(A, rhs[..., None])[..., 0]
    return sol.reshape(flat.size, -1, 2)


def regularity_delta(graph: ValidatedGraph, substitution="asymptotic") -> float:
    """delta_0: leading coefficient of the high-energy determinant of D_k^0.

    Entries of the fundamental system e_{j1}, e_{j2} are replaced by their
    limits (derivatives divided by i*rho, the e_{j2} column by its growth
    exp(-i rho T_j)): e_{j1}, e_{j1}' -> 1, 1 at 0 and 0, 0 at T_j;
    e_{j2}, e_{j2}' -> 1, -1 at T_j; h_j -> 0.  With ``"asymptotic"`` the
    e_{j2} entries at 0 vanish, which reproduces the limit of
    rho^{-(r+N)} exp(i rho sum T_j) det D_k^0 up to the factor i^{r+N}.
    ``"literal"`` keeps them at 1, -1 instead.
    """
    if substitution not in ("asymptotic", "literal"):
        raise ValueError(f"unknown substitution {substitution!r}")
    e2_at_0 = (1.0, -1.0) if substitution == "literal" else (0.0, 0.0)
    r, ne = graph.r, graph.n_edges
    n = 2 * ne
    A = np.zeros((n, n))
    # columns: 2j -> coefficient of e_{j1}, 2j+1 -> coefficient of e_{j2}
    for j in range(r):
        A[j, 2 * j] = 1.0
        A[j, 2 * j + 1] = e2_at_0[1]
    row = r
    for v in graph.vertices:
        o = v.cycle_out
        incoming = list(v.boundary_in) + [v.cycle_in]
        for i in incoming:
            A[row, 2 * o] += 1.0
            A[row, 2 * o + 1] += e2_at_0[0]
            A[row, 2 * i + 1] -= graph.alpha[i]
            row += 1
        A[row, 2 * o] += 1.0
        A[row, 2 * o + 1] += e2_at_0[1]
        for i in incoming:
            A[row, 2 * i + 1] += graph.beta[i]
        row += 1
    return float(np.linalg.det(A))


def high_energy_determinant(graph: ValidatedGraph, rho):
    """(i rho)^{-(r+N)} exp(i rho sum T_j) det D_k^0 for q = 0, using exp(+-i rho x).

    Tends to ``regularity_delta(graph)`` as rho -> i*infinity.
    """
    rho = complex(rho)
    r, ne = graph.r, graph.n_edges
    n = 2 * ne
    A = np.zeros((n, n), dtype=complex)
    T = graph.lengths
    h = graph.h

    def e(j, s, x, nu):
        sign = 1 if s == 1 else -1
        return (sign * 1j * rho) ** nu * np.exp(sign * 1j * rho * x)

    for j in range(r):
        for s, col in ((1, 2 * j), (2, 2 * j + 1)):
            A[j, col] = e(j, s, 0, 1) - h[j] * e(j, s, 0, 0)
    row = r
    for v in graph.vertices:
        o = v.cycle_out
        incoming = list(v.boundary_in) + [v.cycle_in]
        for i in incoming:
            for s, c in ((1, 0), (2, 1)):
                A[row, 2 * o + c] += e(o, s, 0, 0)
                A[row, 2 * i + c] -= graph.alpha[i] * e(i, s, T[i], 0)
            row += 1
        for s, c in ((1, 0), (2, 1)):
            A[row, 2 * o + c] += e(o, s, 0, 1) - h[o] * e(o, s, 0, 0)
            for i in incoming:
                A[row, 2 * i + c] -= graph.beta[i] * e(i, s, T[i], 1)
        row += 1
    return np.linalg.det(A) * (1j * rho) ** (-(r + graph.N)) * np.exp(1j * rho * T.sum())


def check_regular(graph: ValidatedGraph, threshold=REGULARITY_THRESHOLD) -> float:
    from .errors import NonRegularGraphError

    d0 = regularity_delta(graph)
    if abs(d0) < threshold:
        raise NonRegularGraphError(f"|delta_0| = {abs(d0):.3g} below {threshold:g}")
    return d0


# --- coefficient system --------------------------------------------------


def subset_labels(graph: ValidatedGraph):
    """All 2^N subsets of xi as sorted tuples, indexed by block bitmask."""
    xi = graph.xi
    out = []
    for mask in range(2 ** graph.N):
        out.append(tuple(sorted(xi[i] for i in range(graph.N) if mask >> i & 1)))
    return out


def _block_factors(graph: ValidatedGraph, ends, dirichlet: bool, i: int):
    """(sigma_i, P_i) of block i: sigma_i = prod alpha_j phi_j, P_i = sigma_i * omega_i.

    Both are entire; the chosen edge xi_i carries S instead of phi when
    ``dirichlet``.  Computed without division.
    """
    blk = graph.blocks[i]
    xi = graph.xi[i] - 1
    L = np.asarray(ends[0].S).size
    vals, ders = [], []
    for j in blk:
        e = ends[j]
        if dirichlet and j == xi:
            vals.append(graph.alpha[j] * e.S)
            ders.append(graph.beta[j] * e.dS)
        else:
            vals.append(graph.alpha[j] * e.phi)
            ders.append(graph.beta[j] * e.dphi)
    sigma = np.ones(L, dtype=complex)
    for v in vals:
        sigma = sigma * v
    P = np.zeros(L, dtype=complex)
    for m, d in enumerate(ders):
        term = d
        for n, v in enumerate(vals):
            if n != m:
                term = term * v
        P = P + term
    return sigma, P


def solve_coefficient_system(graph: ValidatedGraph, boundary_ends, deltas, lam):
    """Recover a(lambda), d(lambda) from boundary-edge data and 2^N Delta values.

    ``boundary_ends`` are endpoint values for edges 1..r (with their h_j);
    ``deltas`` maps each subset label of xi to Delta values at ``lam``.
    Rows are Delta_label = sum_c coef_c sigma prod_{i in c} omega_i with the
    entire entries sigma prod omega (no poles).  The matrix is the Kronecker
    product of per-block 2x2 matrices whose determinants are
    alpha_xi beta_xi prod_{j != xi} (alpha_j phi_j)^2, so it is regular
    wherever the non-chosen boundary edges have phi_j(T_j) != 0.
    Returns ``(a, d, flagged)``; flagged samples are ill-conditioned and set to nan.
    """
    flat, shape = _prep(lam)
    L = flat.size
    N = graph.N
    labels = subset_labels(graph)
    ends = list(boundary_ends)
    size = 2**N
    blocks = [[_block_factors(graph, ends, bool(dm), i) for dm in (0, 1)] for i in range(N)]
    A = np.ones((L, size, size), dtype=complex)
    b = np.zeros((L, size), dtype=complex)
    for row, lab in enumerate(labels):
        b[:, row] = np.asarray(deltas[lab], dtype=complex).reshape(-1)
        for col in range(size):
            for i in range(N):
                sigma, P = blocks[i][row >> i & 1]
                A[:, row, col] *= P if col >> i & 1 else sigma
    finite = np.all(np.isfinite(A), axis=(1, 2)) & np.all(np.isfinite(b), axis=1)
    # entries grow like exp(|Im rho| T); equilibrate rows and columns first
    with np.errstate(divide="ignore", invalid="ignore"):
        rs = 1.0 / np.max(np.abs(A), axis=2)
        A = A * rs[:, :, None]
        b = b * rs
        cs = 1.0 / np.max(np.abs(A), axis=1)
        A = A * cs[:, None, :]
    finite &= np.all(np.isfinite(A), axis=(1, 2))
    cond = np.full(L, np.inf)
    if finite.any():
        cond[finite] = np.linalg.cond(A[finite])
    ok = finite & (cond <= CONDITION_LIMIT)
    coef = np.full((L, size), np.nan + 0j)
    if ok.any():
        coef[ok] = np.linalg.solve(A[ok], b[ok][..., None])[..., 0] * cs[ok]
    p = reduced_cycle_params(graph)
    a = coef[:, 0]
    d = coef[:, 1] / p.alpha
    flagged = ~ok
    if shape == ():
        return complex(a[0]), complex(d[0]), bool(flagged[0])
    return a.reshape(shape), d.reshape(shape), flagged.reshape(shape)
