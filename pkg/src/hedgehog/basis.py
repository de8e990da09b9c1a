"""Finite parameterisations of edge potentials used by the least-squares stages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import DEFAULT_DENSITY, grid

KINDS = ("piecewise", "cosine")


@dataclass(frozen=True)
class Basis:
    """q(x) = sum_m theta_m b_m(x) on [0, T].

    ``piecewise``: indicator functions of ``size`` equal cells.  Samples are
    box averages over one grid spacing, so the linear interpolant carries the
    same integral as the step function.
    ``cosine``: b_m(x) = cos(pi m x / T), m = 0 .. size-1.
    """

    kind: str = "cosine"
    size: int = 8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}; expected one of {KINDS}")
        if self.size < 1:
            raise ValueError("basis size must be >= 1")

    def matrix(self, length: float, density: int = DEFAULT_DENSITY) -> np.ndarray:
        x = grid(length, density)
        if self.kind == "cosine":
            m = np.arange(self.size)
            return np.cos(np.pi * np.outer(x, m) / length)
        s = x[1] - x[0]
        lo = np.clip(x - s / 2, 0, length)
        hi = np.clip(x + s / 2, 0, length)
        edges = np.linspace(0, length, self.size + 1)
        overlap = np.clip(
            np.minimum(hi[:, None], edges[None, 1:]) - np.maximum(lo[:, None], edges[None, :-1]),
            0,
            None,
        )
        return overlap / (hi - lo)[:, None]

    def samples(self, theta, length: float, density: int = DEFAULT_DENSITY) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.size:
            raise ValueError(f"expected {self.size} coefficients, got {theta.size}")
        return self.matrix(length, density) @ theta

    def evaluate(self, theta, x, length: float) -> np.ndarray:
        """Exact basis expansion at points x (no grid smoothing)."""
        theta = np.asarray(theta, dtype=float)
        x = np.asarray(x, dtype=float)
        if self.kind == "cosine":
            return np.cos(np.pi * np.multiply.outer(x, np.arange(self.size)) / length) @ theta
        cell = np.clip((x / length * self.size).astype(int), 0, self.size - 1)
        return theta[cell]

    def project(self, samples, length: float) -> np.ndarray:
        """Least-squares coefficients of sampled values on the matching grid."""
        samples = np.asarray(samples, dtype=float)
        density = (samples.size - 1) / length
        B = self.matrix(length, density)
        if B.shape[0] != samples.size:
            B = self.matrix(length, int(round(density)))
        return np.linalg.lstsq(B, samples, rcond=None)[0]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "size": self.size}

    @classmethod
    def from_dict(cls, doc) -> "Basis":
        return cls(doc.get("kind", "cosine"), int(doc.get("size", 8)))
