"""Hedgehog graph geometry, matching coefficients and reduced cycle parameters.

Edges are numbered 1..r+N in the public interface (boundary edges first,
then cycle segments) and stored 0-based internally.  Boundary edge ``e_j``
runs from its boundary vertex (x=0) to an internal vertex (x=T_j); cycle
segment ``e_{r+k}`` runs from ``v_{r+k}`` (x=0) to ``v_{r+k+1}`` with
``v_{r+N+1} = v_{r+1}``.  Block ``E_k`` is attached at ``v_{r+k}``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GraphValidationError

DEFAULT_DENSITY = 256  # potential samples per unit length


@dataclass(frozen=True)
class GraphSpec:
    """Raw user description of a hedgehog graph (1-based semantics, 0-based lists)."""

    block_sizes: Sequence[int]
    edge_lengths: Sequence[float]
    alpha: Sequence[float]
    beta: Sequence[float]
    h: Sequence[float] | None = None
    xi: Sequence[int] | None = None  # 1-based chosen edge per block

    @property
    def N(self) -> int:
        return len(self.block_sizes)

    @property
    def r(self) -> int:
        return int(sum(self.block_sizes))


@dataclass(frozen=True)
class CycleParams:
    """Parameters of the reduced quasi-periodic problem on the cycle."""

    gamma: np.ndarray  # (N-1,)
    eta: np.ndarray  # (N-1,)
    h: float
    alpha: float
    beta: float

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float).reshape(-1)
        eta = np.asarray(self.eta, dtype=float).reshape(-1)
        if gamma.shape != eta.shape:
            raise GraphValidationError("gamma and eta must have equal length", "eta")
        if np.any(gamma <= 0) or not np.all(np.isfinite(gamma)):
            raise GraphValidationError("gamma_j must be finite and > 0", "gamma")
        if not self.alpha * self.beta > 0:
            raise GraphValidationError("alpha * beta must be > 0", "alpha")
        gamma.setflags(write=False)
        eta.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True)
class Vertex:
    """Incidence of one internal vertex ``v_{r+k}`` (k = 1..N)."""

    k: int  # 1-based block / vertex number
    boundary_in: tuple[int, ...]  # 0-based boundary edges ending here
    cycle_in: int  # 0-based cycle edge ending here
    cycle_out: int  # 0-based cycle edge starting here


@dataclass(frozen=True, eq=False)
class ValidatedGraph:
    """Immutable, checked graph.  Build with :func:`validate_graph`."""

    block_sizes: tuple[int, ...]
    lengths: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    h: np.ndarray
    xi: tuple[int, ...]
    blocks: tuple[tuple[int, ...], ...] = field(repr=False)
    vertices: tuple[Vertex, ...] = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.block_sizes)

    @property
    def r(self) -> int:
        return int(sum(self.block_sizes))

    @property
    def n_edges(self) -> int:
        return self.r + self.N

    @property
    def block_bounds(self) -> tuple[int, ...]:
        """m_0 = 0, m_k = r_1 + ... + r_k."""
        return (0,) + tuple(itertools.accumulate(self.block_sizes))

    @property
    def cycle_lengths(self) -> np.ndarray:
        return self.lengths[self.r :]

    @property
    def cycle_length(self) -> float:
        return float(self.cycle_lengths.sum())

    @property
    def breakpoints(self) -> np.ndarray:
        """b_1 < ... < b_N = T."""
        return np.cumsum(self.cycle_lengths)

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    def block_of(self, j: int) -> int:
        """1-based block number of the 1-based boundary edge ``j``."""
        for k, blk in enumerate(self.blocks, start=1):
            if j - 1 in blk:
                return k
        raise GraphValidationError(f"edge {j} is not a boundary edge", "edge")

    def with_h(self, h) -> "ValidatedGraph":
        spec = self.to_spec()
        return validate_graph(
            GraphSpec(spec.block_sizes, spec.edge_lengths, spec.alpha, spec.beta, list(h), spec.xi)
        )

    def to_spec(self) -> GraphSpec:
        return GraphSpec(
            block_sizes=list(self.block_sizes),
            edge_lengths=self.lengths.tolist(),
            alpha=self.alpha.tolist(),
            beta=self.beta.tolist(),
            h=self.h.tolist(),
            xi=list(self.xi),
        )


def _frozen(values, name, n):
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.shape[0] != n:
        raise GraphValidationError(f"expected {n} entries, got {arr.shape[0]}", name)
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise GraphValidationError("value is not finite", f"{name}[{bad[0]}]")
    arr.setflags(write=False)
    return arr


def validate_graph(spec: GraphSpec) -> ValidatedGraph:
    """Check every invariant of ``spec`` and build the incidence tables."""
    sizes = tuple(int(s) for s in spec.block_sizes)
    N = len(sizes)
    if N < 2:
        raise GraphValidationError("need N >= 2 internal vertices", "block_sizes")
    for k, s in enumerate(sizes):
        if s < 1:
            raise GraphValidationError("each block needs >= 1 boundary edge", f"block_sizes[{k}]")
    r = sum(sizes)
    n = r + N
    lengths = _frozen(spec.edge_lengths, "edge_lengths", n)
    for j, t in enumerate(lengths):
        if not t > 0:
            raise GraphValidationError("edge length must be > 0", f"edge_lengths[{j}]")
    alpha = _frozen(spec.alpha, "alpha", n)
    beta = _frozen(spec.beta, "beta", n)
    for j in range(n):
        if alpha[j] == 0:
            raise GraphValidationError("alpha_j must be nonzero", f"alpha[{j}]")
        if beta[j] == 0:
            raise GraphValidationError("beta_j must be nonzero", f"beta[{j}]")
        if alpha[j] * beta[j] < 0:
            raise GraphValidationError("alpha_j * beta_j must be > 0", f"beta[{j}]")
    h = _frozen(np.zeros(n) if spec.h is None else spec.h, "h", n)

    bounds = (0,) + tuple(itertools.accumulate(sizes))
    blocks = tuple(tuple(range(bounds[k], bounds[k + 1])) for k in range(N))
    if spec.xi is None:
        xi = tuple(bounds[k] + 1 for k in range(N))
    else:
        xi = tuple(int(x) for x in spec.xi)
        if len(xi) != N:
            raise GraphValidationError(f"need one chosen edge per block ({N})", "xi")
        for i, x in enumerate(xi):
            if not bounds[i] + 1 <= x <= bounds[i + 1]:
                raise GraphValidationError(
                    f"xi_{i + 1} = {x} outside block bounds [{bounds[i] + 1}, {bounds[i + 1]}]",
                    f"xi[{i}]",
                )

    vertices = tuple(
        Vertex(k=k + 1, boundary_in=blocks[k], cycle_in=r + (k - 1) % N, cycle_out=r + k)
        for k in range(N)
    )
    return ValidatedGraph(sizes, lengths, alpha, beta, h, xi, blocks, vertices)


def reduced_cycle_params(graph: ValidatedGraph) -> CycleParams:
    """gamma_j, eta_j, h, alpha, beta of the reduced cycle problem."""
    r, N = graph.r, graph.N
    a = graph.alpha[r:]
    b = graph.beta[r:]
    hc = graph.h[r:]
    gamma = np.sqrt(a[: N - 1] / b[: N - 1])
    eta = gamma * hc[1:N]
    g = float(np.prod(gamma))
    alpha = a[N - 1] * g * float(np.prod(b[: N - 1]))
    beta = g * float(np.prod(b[:N]))
    return CycleParams(gamma=gamma, eta=eta, h=float(hc[0]), alpha=alpha, beta=beta)


def unwind_h(params: CycleParams) -> np.ndarray:
    """Cycle-edge Robin coefficients h_{r+1..r+N} from the reduced parameters."""
    return np.concatenate([[params.h], np.asarray(params.eta) / np.asarray(params.gamma)])


# --- spectra labels -------------------------------------------------------

Label = tuple  # () for Lambda_0, (k,) for Lambda_k, (nu_1, ..., nu_p) otherwise


def spectra_inventory(N: int, r: int, xi: Sequence[int]) -> list[Label]:
    """Labels of the spectra that form the inverse-problem input."""
    labels: list[Label] = [()]
    labels += [(k,) for k in range(1, r + 1)]
    chosen = sorted(int(x) for x in xi)
    if len(chosen) != N:
        raise GraphValidationError(f"need {N} chosen edges", "xi")
    for p in range(2, N + 1):
        labels += list(itertools.combinations(chosen, p))
    return labels


def label_name(label: Label) -> str:
    return "Lambda_" + ("0" if not label else "_".join(str(i) for i in label))


def parse_label(name: str) -> Label:
    if not name.startswith("Lambda_"):
        raise GraphValidationError(f"bad spectrum label {name!r}", "spectra")
    body = name[len("Lambda_") :]
    if body == "0":
        return ()
    return tuple(int(t) for t in body.split("_"))


# --- potentials -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Per-edge samples of q_j on a uniform grid over [0, T_j], linearly interpolated."""

    lengths: np.ndarray
    samples: tuple[np.ndarray, ...]

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=float).reshape(-1)
        if len(self.samples) != lengths.size:
            raise GraphValidationError(
                f"{len(self.samples)} sample arrays for {lengths.size} edges", "potential"
            )
        out = []
        for j, s in enumerate(self.samples):
            s = np.array(s, dtype=float).reshape(-1)
            if s.size < 2:
                raise GraphValidationError("need >= 2 samples", f"potential[{j}]")
            bad = np.flatnonzero(~np.isfinite(s))
            if bad.size:
                raise GraphValidationError("sample is not finite", f"potential[{j}][{bad[0]}]")
            s.setflags(write=False)
            out.append(s)
        lengths.setflags(write=False)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "samples", tuple(out))

    @classmethod
    def zero(cls, lengths, density=DEFAULT_DENSITY) -> "PotentialField":
        return cls.from_functions(lengths, [lambda x: 0.0 * x] * len(lengths), density)

    @classmethod
    def from_functions(
        cls, lengths, funcs: Sequence[Callable], density=DEFAULT_DENSITY
    ) -> "PotentialField":
        lengths = np.asarray(lengths, dtype=float)
        samples = []
        for T, f in zip(lengths, funcs):
            x = grid(T, density)
            samples.append(np.broadcast_to(np.asarray(f(x), dtype=float), x.shape).copy())
        return cls(lengths, tuple(samples))

    def grid(self, j: int) -> np.ndarray:
        return np.linspace(0.0, self.lengths[j], self.samples[j].size)

    def __call__(self, j: int, x):
        return np.interp(x, self.grid(j), self.samples[j])

    def edge(self, j: int) -> np.ndarray:
        return self.samples[j]

    def replace(self, j: int, samples) -> "PotentialField":
        new = list(self.samples)
        new[j] = samples
        return PotentialField(self.lengths, tuple(new))


def grid(T: float, density: int = DEFAULT_DENSITY) -> np.ndarray:
    n = max(2, int(math.ceil(density * T - 1e-9)) + 1)
    return np.linspace(0.0, T, n)


def check_potential(graph: ValidatedGraph, Q: PotentialField) -> None:
    if Q.lengths.size != graph.n_edges:
        raise GraphValidationError(
            f"potential has {Q.lengths.size} edges, graph has {graph.n_edges}", "potential"
        )
    if not np.allclose(Q.lengths, graph.lengths, rtol=1e-12, atol=0):
        raise GraphValidationError("potential edge lengths differ from graph", "potential.lengths")
