"""Fundamental solutions S, C on edges and on the cycle with interior jumps.

Each smooth interval is cut into cells aligned with the potential's sample
grid (so the piecewise-linear potential is linear on every cell).  A cell is
advanced with the fourth-order Magnus integrator, whose one-step propagator
for ``y'' = (q - lam) y`` is the exponential of a traceless 2x2 matrix and is
evaluated in closed form.  Unit determinant is therefore kept per cell and
the Wronskian is preserved to rounding.  All cells are combined by a
pairwise product tree, vectorised over an array of spectral parameters.

Transfer matrices act on ``(y, y')`` and are stored as four component arrays
``(a, b, c, d)`` = ``[[C, S], [C', S']]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GraphValidationError, OverflowGuardError
from .graph import CycleParams, PotentialField, ValidatedGraph, reduced_cycle_params

OVERFLOW_GUARD = 700.0
DEFAULT_SUBSTEPS = 2
_SQRT3_12 = np.sqrt(3.0) / 12.0
_G1 = 0.5 - np.sqrt(3.0) / 6.0
_G2 = 0.5 + np.sqrt(3.0) / 6.0
_SERIES_CUT = 1e-3


def rho_of(lam):
    """Principal square root, Im rho >= 0."""
    rho = np.sqrt(np.asarray(lam, dtype=complex))
    return np.where(rho.imag < 0, -rho, rho)


def check_overflow(lam, length):
    growth = float(np.max(np.abs(rho_of(lam).imag), initial=0.0)) * float(length)
    if growth > OVERFLOW_GUARD:
        raise OverflowGuardError(growth, OVERFLOW_GUARD)


class EdgeMesh:
    """Magnus cells for one smooth interval carrying a piecewise-linear potential."""

    def __init__(self, samples, length, substeps=DEFAULT_SUBSTEPS, nodes=None):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 1 or samples.size < 2:
            raise GraphValidationError("need >= 2 potential samples", "potential")
        if not np.all(np.isfinite(samples)):
            raise GraphValidationError("non-finite potential sample", "potential")
        self.samples = samples
        self.length = float(length)
        self.substeps = int(substeps)
        self.xs = np.linspace(0.0, self.length, samples.size)
        if nodes is None:
            n = (samples.size - 1) * self.substeps
            nodes = np.linspace(0.0, self.length, n + 1)
        self.nodes = nodes
        w = np.diff(nodes)
        self.widths = w[:, None]
        self.q1 = self.q(nodes[:-1] + _G1 * w)[:, None]
        self.q2 = self.q(nodes[:-1] + _G2 * w)[:, None]

    def q(self, x):
        return np.interp(x, self.xs, self.samples)

    def cut(self, x: float) -> "EdgeMesh":
        """Mesh of the sub-interval [0, x]."""
        x = float(x)
        if not -1e-14 <= x <= self.length * (1 + 1e-14):
            raise GraphValidationError(f"x={x} outside [0, {self.length}]", "x")
        inner = self.nodes[self.nodes < x - 1e-14 * max(1.0, self.length)]
        nodes = np.append(inner, x) if x > 0 else np.array([0.0, 0.0])
        return EdgeMesh(self.samples, self.length, self.substeps, nodes=nodes)

    def refined(self) -> "EdgeMesh":
        n = (self.nodes.size - 1) * 2
        nodes = np.interp(np.linspace(0, self.nodes.size - 1, n + 1), np.arange(self.nodes.size), self.nodes)
        return EdgeMesh(self.samples, self.length, self.substeps * 2, nodes=nodes)

    def transfer(self, lam, derivative=False):
        """Transfer matrix components over the whole mesh for a 1-d array ``lam``."""
        lam = np.asarray(lam, dtype=complex).reshape(1, -1)
        mats = _cell_matrices(self.widths, self.q1, self.q2, lam, derivative)
        return _reduce(mats, derivative)


def _ch_sh(z):
    """cosh(sqrt z) and sinh(sqrt z)/sqrt z, entire in z."""
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        s = np.sqrt(z)
        e = np.exp(s)
        ei = 1.0 / e
        ch = 0.5 * (e + ei)
        sh = 0.5 * (e - ei) / s
    small = np.abs(z) < _SERIES_CUT
    if small.any():
        zs = z[small] if np.ndim(z) else z
        ch[small] = 1 + zs * (0.5 + zs * (1 / 24 + zs * (1 / 720 + zs / 40320)))
        sh[small] = 1 + zs * (1 / 6 + zs * (1 / 120 + zs * (1 / 5040 + zs / 362880)))
    return ch, sh


def _dsh(z, ch, sh):
    """d/dz of sinh(sqrt z)/sqrt z."""
    small = np.abs(z) < _SERIES_CUT
    with np.errstate(invalid="ignore", divide="ignore"):
        full = (ch - sh) / (2 * np.where(small, 1.0, z))
    series = 1 / 6 + z * (1 / 60 + z * (1 / 1680 + z / 90720))
    return np.where(small, series, full)


def _cell_matrices(w, q1, q2, lam, derivative):
    o11 = _SQRT3_12 * w**2 * (q1 - q2)
    o12 = w
    o21 = w * (0.5 * (q1 + q2) - lam)
    z = o11 * o11 + o12 * o21
    ch, sh = _ch_sh(z)
    a = ch + sh * o11
    b = sh * o12 * np.ones_like(lam)
    c = sh * o21
    d = ch - sh * o11
    if not derivative:
        return [a, b, c, d]
    dz = -(w**2)
    dch = 0.5 * sh * dz
    dsh = _dsh(z, ch, sh) * dz
    da = dch + dsh * o11
    db = dsh * o12
    dc = dsh * o21 - sh * w
    dd = dch - dsh * o11
    return [a, b, c, d, da, db, dc, dd]


def _mul(L, E):
    a2, b2, c2, d2 = L
    a1, b1, c1, d1 = E
    return [a2 * a1 + b2 * c1, a2 * b1 + b2 * d1, c2 * a1 + d2 * c1, c2 * b1 + d2 * d1]


def _mul_d(L, E):
    """Product of (M, dM) pairs, later factor ``L`` on the left."""
    m = _mul(L[:4], E[:4])
    d1 = _mul(L[4:], E[:4])
    d2 = _mul(L[:4], E[4:])
    return m + [x + y for x, y in zip(d1, d2)]


def _reduce(mats, derivative):
    """Ordered product of the cell matrices along axis 0 (last cell leftmost)."""
    mul = _mul_d if derivative else _mul
    while mats[0].shape[0] > 1:
        n = mats[0].shape[0]
        if n % 2:
            tail = [m[-1:] for m in mats]
            mats = [m[:-1] for m in mats]
        else:
            tail = None
        early = [m[0::2] for m in mats]
        late = [m[1::2] for m in mats]
        mats = mul(late, early)
        if tail is not None:
            mats = [np.concatenate([m, t]) for m, t in zip(mats, tail)]
    return [m[0] for m in mats]


def _identity(L, derivative):
    one, zero = np.ones(L, dtype=complex), np.zeros(L, dtype=complex)
    ident = [one, zero, zero, one]
    return ident + [zero] * 4 if derivative else ident


def _jump(gamma, eta, L, derivative):
    """Jump map y -> gamma y, y' -> y'/gamma + eta y (lambda independent)."""
    one = np.ones(L, dtype=complex)
    zero = np.zeros(L, dtype=complex)
    J = [gamma * one, zero, eta * one, one / gamma]
    return J + [zero] * 4 if derivative else J


@dataclass(frozen=True)
class PropagatorValue:
    """Values of the fundamental solutions at one point (arrays over lambda)."""

    S: np.ndarray
    dS: np.ndarray
    C: np.ndarray
    dC: np.ndarray
    h: float = 0.0

    @property
    def phi(self):
        return self.C + self.h * self.S

    @property
    def dphi(self):
        return self.dC + self.h * self.dS

    def wronskian(self):
        """<phi, S> = phi S' - phi' S, identically one."""
        return self.phi * self.dS - self.dphi * self.S


def _as_value(comps, h, shape):
    a, b, c, d = (np.reshape(x, shape) if shape else x.reshape(()).item() for x in comps[:4])
    return PropagatorValue(S=b, dS=d, C=a, dC=c, h=h)


def _prep(lam):
    lam = np.asarray(lam, dtype=complex)
    return lam.reshape(-1), lam.shape


def edge_propagate(q, h, T, lam, x=None, *, substeps=DEFAULT_SUBSTEPS, tol=None) -> PropagatorValue:
    """S, S', C, C' on one edge at ``x`` (default ``T``).

    ``q`` is an array of uniform samples over [0, T] or a prebuilt :class:`EdgeMesh`.
    With ``tol`` set, the cell count is doubled until two successive results
    agree to that relative tolerance.
    """
    mesh = q if isinstance(q, EdgeMesh) else EdgeMesh(q, T, substeps)
    flat, shape = _prep(lam)
    x = mesh.length if x is None else float(x)
    check_overflow(flat, x)
    m = mesh.cut(x) if x < mesh.length else mesh
    comps = m.transfer(flat)
    if tol is not None:
        for _ in range(6):
            m = m.refined()
            finer = m.transfer(flat)
            scale = max(np.max(np.abs(np.concatenate(finer))), 1e-300)
            err = max(np.max(np.abs(u - v)) for u, v in zip(comps, finer)) / scale
            comps = finer
            if err <= tol:
                break
    return _as_value(comps, float(h), shape)


def edge_propagate_dlambda(q, h, T, lam, *, substeps=DEFAULT_SUBSTEPS):
    """Endpoint values and their lambda-derivatives on one edge."""
    mesh = q if isinstance(q, EdgeMesh) else EdgeMesh(q, T, substeps)
    flat, shape = _prep(lam)
    check_overflow(flat, mesh.length)
    comps = mesh.transfer(flat, derivative=True)
    return _as_value(comps[:4], float(h), shape), _as_value(comps[4:], float(h), shape)


@dataclass(frozen=True, eq=False)
class CycleProblem:
    """Quasi-periodic problem with jumps on the cycle [0, T]."""

    lengths: np.ndarray
    samples: tuple
    params: CycleParams
    substeps: int = DEFAULT_SUBSTEPS
    meshes: tuple = field(init=False, repr=False)

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=float).reshape(-1)
        if lengths.size < 1 or np.any(lengths <= 0):
            raise GraphValidationError("segment lengths must be > 0", "lengths")
        if len(self.samples) != lengths.size:
            raise GraphValidationError("one sample array per segment", "samples")
        if self.params.gamma.size != lengths.size - 1:
            raise GraphValidationError("need N-1 jump parameters", "params.gamma")
        object.__setattr__(self, "lengths", lengths)
        meshes = tuple(EdgeMesh(s, t, self.substeps) for s, t in zip(self.samples, lengths))
        object.__setattr__(self, "meshes", meshes)

    @classmethod
    def from_graph(cls, graph: ValidatedGraph, Q: PotentialField, substeps=DEFAULT_SUBSTEPS):
        r = graph.r
        return cls(graph.cycle_lengths, Q.samples[r:], reduced_cycle_params(graph), substeps)

    @property
    def T(self) -> float:
        return float(self.lengths.sum())

    @cached_property
    def breakpoints(self) -> np.ndarray:
        """Interior breakpoints b_1 < ... < b_{N-1}."""
        return np.cumsum(self.lengths)[:-1]

    def q(self, x):
        """Concatenated cycle potential (right-continuous at breakpoints)."""
        x = np.asarray(x, dtype=float)
        seg = np.clip(np.searchsorted(self.breakpoints, x, side="right"), 0, self.lengths.size - 1)
        start = np.concatenate([[0.0], self.breakpoints])[seg]
        out = np.empty_like(x)
        for k, m in enumerate(self.meshes):
            sel = seg == k
            out[sel] = m.q(x[sel] - start[sel])
        return out

    def with_params(self, params: CycleParams) -> "CycleProblem":
        return CycleProblem(self.lengths, self.samples, params, self.substeps)

    def with_samples(self, samples) -> "CycleProblem":
        return CycleProblem(self.lengths, tuple(samples), self.params, self.substeps)


def _cycle_comps(cp: CycleProblem, flat, x, left, derivative):
    L = flat.size
    acc = _identity(L, derivative)
    mul = _mul_d if derivative else _mul
    pos = 0.0
    for k, mesh in enumerate(cp.meshes):
        end = pos + mesh.length
        last = k == len(cp.meshes) - 1
        if x < end - 1e-14 * cp.T or last:
            local = min(max(x - pos, 0.0), mesh.length)
            m = mesh.cut(local) if local < mesh.length else mesh
            return mul(m.transfer(flat, derivative), acc)
        acc = mul(mesh.transfer(flat, derivative), acc)
        if abs(x - end) <= 1e-14 * cp.T and left:
            return acc
        acc = mul(_jump(cp.params.gamma[k], cp.params.eta[k], L, derivative), acc)
        pos = end
    return acc


def cycle_propagate(cp: CycleProblem, lam, x=None, *, side="right") -> PropagatorValue:
    """S, S', C, C' of the discontinuous problem at ``x`` (default T).

    At an interior breakpoint ``side="left"`` returns the limit before the jump.
    """
    flat, shape = _prep(lam)
    x = cp.T if x is None else float(x)
    if not 0 <= x <= cp.T * (1 + 1e-14):
        raise GraphValidationError(f"x={x} outside [0, {cp.T}]", "x")
    check_overflow(flat, cp.T)
    comps = _cycle_comps(cp, flat, x, side == "left", False)
    return _as_value(comps, cp.params.h, shape)


def propagate_dlambda(cp: CycleProblem, lam):
    """Endpoint values at T and their derivatives in lambda.

    The derivative is the exact derivative of the discrete propagator, i.e.
    the discretised variational system; jumps do not depend on lambda.
    """
    flat, shape = _prep(lam)
    check_overflow(flat, cp.T)
    comps = _cycle_comps(cp, flat, cp.T, False, True)
    return _as_value(comps[:4], cp.params.h, shape), _as_value(comps[4:], cp.params.h, shape)
