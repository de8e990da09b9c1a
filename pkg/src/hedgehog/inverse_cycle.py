"""Inverse problem on the cycle: recover q, h, gamma_j, eta_j from a, d and signs.

The spectral stage follows the classical construction literally: it turns
(a, d, omega) into the Weyl sequence (z_n, M_n).  The potential and jump
parameters are then fitted to that sequence by damped least squares over a
finite basis, and h is read off from a(lambda) once the rest is known.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import least_squares

from .basis import Basis
from .charfn import cycle_char
from .errors import InconsistentDataError, ReconstructionError
from .graph import DEFAULT_DENSITY, CycleParams
from .propagators import CycleProblem, cycle_propagate, propagate_dlambda
from .rootfinder import (
    DEFAULT_N_MAX,
    ReconstructedCharFn,
    Spectrum,
    char_from_spectrum,
    first_zeros,
    real_zeros,
    omega_signs,
)

log = logging.getLogger(__name__)

RADICAND_TOL = 1e-6
DEFAULT_STARTS = 8
Z_WEIGHT = 100.0  # zeros are measured directly; M_n carry product truncation error


@dataclass(frozen=True)
class Priors:
    """Box bounds for the least-squares unknowns."""

    q_bound: float = 10.0
    gamma: tuple = (0.1, 10.0)
    eta: tuple = (-10.0, 10.0)
    h: tuple = (-10.0, 10.0)

    def to_dict(self):
        return {"q_bound": self.q_bound, "gamma": list(self.gamma), "eta": list(self.eta), "h": list(self.h)}

    @classmethod
    def from_dict(cls, doc):
        doc = doc or {}
        return cls(
            float(doc.get("q_bound", 10.0)),
            tuple(doc.get("gamma", (0.1, 10.0))),
            tuple(doc.get("eta", (-10.0, 10.0))),
            tuple(doc.get("h", (-10.0, 10.0))),
        )


@dataclass
class CycleSpectralData:
    """Input of the cycle problem: evaluable a, d, the signs and known constants."""

    a: Callable
    d: Callable
    omega: np.ndarray
    alpha: float
    beta: float
    lengths: np.ndarray  # segment lengths; breakpoints are their partial sums
    n_max: int = DEFAULT_N_MAX
    gamma_ref: np.ndarray | None = None  # a priori jump sizes, used only as a start
    search_floor: float = -50.0  # zeros of d are sought above this
    zero_search: str = "plane"  # "real": sign changes on the axis only (a, d trusted there only)
    radicand_tol: float = RADICAND_TOL  # relative slack for D^2 - 4 alpha beta < 0

    def __post_init__(self):
        if not self.alpha * self.beta > 0:
            raise InconsistentDataError("alpha * beta must be > 0")
        self.omega = np.asarray(self.omega, dtype=int).reshape(-1)
        self.lengths = np.asarray(self.lengths, dtype=float).reshape(-1)
        if self.omega.size < self.n_max:
            raise InconsistentDataError(
                f"{self.omega.size} signs given, {self.n_max} Weyl pairs requested"
            )

    @property
    def breakpoints(self):
        return np.cumsum(self.lengths)[:-1]

    @property
    def T(self):
        return float(self.lengths.sum())

    @classmethod
    def from_problem(cls, cp: CycleProblem, n_max=DEFAULT_N_MAX) -> "CycleSpectralData":
        """Direct evaluables of a forward cycle problem (no truncation)."""
        from .rootfinder import weyl_sequence

        z, _ = weyl_sequence(cp, n_max)
        p = cp.params
        return cls(
            lambda lam: cycle_char(cp, lam).a,
            lambda lam: cycle_char(cp, lam).d,
            omega_signs(cp, z),
            p.alpha,
            p.beta,
            cp.lengths,
            n_max,
            np.array(p.gamma),
        )

    @classmethod
    def from_spectra(
        cls, a_zeros: Spectrum, d_zeros: Spectrum, omega, alpha, beta, lengths, gamma,
        n_max=DEFAULT_N_MAX, substeps=2,
    ) -> "CycleSpectralData":
        """Product reconstructions of a and d against a zero-potential reference.

        The reference shares lengths, alpha, beta and the jump sizes gamma
        (known a priori from the matching coefficients) and has eta = h = 0,
        so it carries the same leading high-energy terms as the target.
        """
        ref = reference_cycle(lengths, gamma, alpha, beta, substeps)
        ra = lambda lam: cycle_char(ref, lam).a  # noqa: E731
        rd = lambda lam: cycle_char(ref, lam).d  # noqa: E731
        T = float(np.sum(lengths))
        lo = min(-20.0, float(np.real(a_zeros.values[0])) - 5 if len(a_zeros) else -20.0)
        ref_a = first_zeros(ra, len(a_zeros), lo=lo, length=T)
        ref_d = first_zeros(rd, len(d_zeros), lo=lo, length=T)
        a_fn = char_from_spectrum(a_zeros, ra, ref_a, label="a", length=T)
        d_fn = char_from_spectrum(d_zeros, rd, ref_d, label="d", length=T)
        return cls(a_fn, d_fn, omega, alpha, beta, lengths, n_max, np.asarray(gamma, float))


def reference_cycle(lengths, gamma, alpha, beta, substeps=2) -> CycleProblem:
    lengths = np.asarray(lengths, dtype=float)
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    params = CycleParams(gamma, np.zeros_like(gamma), 0.0, alpha, beta)
    return CycleProblem(lengths, tuple(np.zeros(2) for _ in lengths), params, substeps)


@dataclass
class WeylStage:
    z: np.ndarray
    M: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    d1: np.ndarray
    ddot: np.ndarray
    ambiguous: dict = field(default_factory=dict)  # n -> (d1 candidates)

    @property
    def usable(self):
        return np.isfinite(self.M)

    @property
    def reliability(self):
        """First-order damping of D errors in M_n: |Q| / (|Q| + |D|), in [0, 1]."""
        aq = np.abs(self.Q)
        return aq / (aq + np.abs(self.D) + 1e-300)


def _real(x):
    return np.real_if_close(np.asarray(x, dtype=complex), tol=1e6).real


def algorithm1_spectral_stage(data: CycleSpectralData, tol=None) -> WeylStage:
    """Steps 1-6: (a, d, omega) -> (z_n, M_n)."""
    tol = data.radicand_tol if tol is None else tol
    ab = data.alpha * data.beta
    D_fn = lambda lam: np.asarray(data.a(lam)) + (1 + ab)  # noqa: E731
    n = data.n_max
    if isinstance(data.d, ReconstructedCharFn) and data.d.zeros.size >= n:
        z = np.sort_complex(data.d.zeros)[:n]
    elif data.zero_search == "real":
        z = real_zeros(data.d, n, lo=data.search_floor, length=data.T).expanded()
    else:
        z = first_zeros(data.d, n, lo=data.search_floor, length=data.T, strip=0.5).expanded()
    if np.any(np.abs(z.imag) > 1e-8 * (1 + np.abs(z))):
        raise InconsistentDataError("zeros of d are not real")
    z = z.real
    D = _real(D_fn(z + 0j))
    rad = D**2 - 4 * ab
    scale = 1 + D**2
    bad = rad < -tol * scale
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise InconsistentDataError(
            f"D(z_n)^2 - 4 alpha beta = {rad[k]:.3e} < 0 at n={k + 1}; data inconsistent"
        )
    rad = np.clip(rad, 0.0, None)
    omega = data.omega[:n]
    Q = omega * np.sqrt(rad)
    d1 = (D + Q) / (2 * data.alpha)
    ambiguous = {}
    for k in np.flatnonzero((omega == 0) & (rad > tol * scale)):
        s = np.sqrt(rad[k])
        ambiguous[int(k) + 1] = ((D[k] + s) / (2 * data.alpha), (D[k] - s) / (2 * data.alpha))
        d1[k] = np.nan
    step = 1e-6 * (1 + np.abs(z))
    ddot = _real((np.asarray(data.d(z + step + 0j)) - np.asarray(data.d(z - step + 0j))) / (2 * step))
    if np.any(np.abs(ddot) < 1e-14):
        raise InconsistentDataError("derivative of d vanishes at a zero; zeros must be simple")
    M = -d1 / ddot
    if ambiguous:
        log.warning("omega_n = 0 with nonzero radicand at n = %s; pairs excluded", sorted(ambiguous))
    return WeylStage(z, M, D, Q, d1, ddot, ambiguous)


# --- step 7: fit (q, gamma, eta) to the Weyl sequence -------------------


@dataclass
class CycleModel:
    """Maps a parameter vector to a cycle problem (h and alpha, beta fixed)."""

    lengths: np.ndarray
    basis: Basis
    alpha: float
    beta: float
    density: int = DEFAULT_DENSITY
    substeps: int = 2

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=float)
        self.mats = [self.basis.matrix(t, self.density) for t in self.lengths]

    @property
    def N(self):
        return self.lengths.size

    @property
    def n_q(self):
        return self.N * self.basis.size

    @property
    def size(self):
        return self.n_q + 2 * (self.N - 1)

    def split(self, theta):
        theta = np.asarray(theta, dtype=float)
        k = self.basis.size
        q = [theta[i * k : (i + 1) * k] for i in range(self.N)]
        gamma = theta[self.n_q : self.n_q + self.N - 1]
        eta = theta[self.n_q + self.N - 1 :]
        return q, gamma, eta

    def join(self, q, gamma, eta):
        return np.concatenate([np.concatenate(q), gamma, eta])

    def problem(self, theta, h=0.0) -> CycleProblem:
        q, gamma, eta = self.split(theta)
        samples = tuple(B @ c for B, c in zip(self.mats, q))
        params = CycleParams(gamma, eta, h, self.alpha, self.beta)
        return CycleProblem(self.lengths, samples, params, self.substeps)

    def bounds(self, priors: Priors):
        lo = np.concatenate(
            [np.full(self.n_q, -priors.q_bound), np.full(self.N - 1, priors.gamma[0]),
             np.full(self.N - 1, priors.eta[0])]
        )
        hi = np.concatenate(
            [np.full(self.n_q, priors.q_bound), np.full(self.N - 1, priors.gamma[1]),
             np.full(self.N - 1, priors.eta[1])]
        )
        return lo, hi


def forward_weyl_pairs(cp: CycleProblem, z0, iters=6):
    """Zeros of d near ``z0`` (Newton, one per start) and the matching M_n."""
    z = np.asarray(z0, dtype=float).copy()
    for _ in range(iters):
        val, der = propagate_dlambda(cp, z + 0j)
        step = np.real(val.S / der.S)
        z = z - np.clip(step, -0.5 * (1 + np.abs(z)), 0.5 * (1 + np.abs(z)))
        if np.all(np.abs(step) <= 1e-13 * (1 + np.abs(z))):
            break
    val, der = propagate_dlambda(cp, z + 0j)
    return z, -np.real(val.C / der.S)


def _weights(z):
    return 1.0 / np.sqrt(1.0 + z**2)


@dataclass
class WeylFit:
    theta: np.ndarray
    cost: float
    residual_z: np.ndarray
    residual_M: np.ndarray
    starts: int
    success: bool

    def to_dict(self):
        return {
            "cost": self.cost,
            "max_residual_z": float(np.max(np.abs(self.residual_z))),
            "max_residual_M": float(np.max(np.abs(self.residual_M))),
            "starts": self.starts,
            "success": self.success,
        }


def reconstruct_from_weyl(
    z, M, lengths, alpha, beta, *, basis=Basis("piecewise", 4), priors=Priors(),
    starts=DEFAULT_STARTS, seed=0, threshold=1e-9, gamma_start=None, density=DEFAULT_DENSITY,
    max_nfev=200, m_weights=None, initial=None, z_weight=Z_WEIGHT, fixed_gamma=None,
) -> tuple[CycleModel, WeylFit]:
    """Step 7: damped least squares for (q coefficients, gamma_j, eta_j).

    The model's zeros are tracked by Newton's method from the data zeros, so
    residuals are smooth in the parameters.  Starts: a neutral one (q = 0,
    gamma at ``gamma_start`` or 1, eta = 0), then draws from the priors.
    ``m_weights`` scales the M_n residuals (e.g. by their reliability);
    ``threshold`` applies to the mean squared weighted residual.  ``initial``
    replaces the neutral start.  With ``fixed_gamma`` the jump sizes are held
    at the given values and only (q, eta) are fitted.
    """
    z = np.asarray(z, dtype=float)
    M = np.asarray(M, dtype=float)
    use = np.isfinite(M)
    model = CycleModel(lengths, basis, alpha, beta, density)
    w = _weights(z)
    wm = w if m_weights is None else w * np.asarray(m_weights, dtype=float)
    lo, hi = model.bounds(priors)

    rng = np.random.default_rng(seed)
    neutral = model.join(
        [np.zeros(basis.size)] * model.N,
        np.ones(model.N - 1) if gamma_start is None else np.asarray(gamma_start, float),
        np.zeros(model.N - 1),
    )
    if initial is not None:
        neutral = np.asarray(initial, dtype=float).copy()
    free = np.ones(model.size, dtype=bool)
    if fixed_gamma is not None:
        gsl = slice(model.n_q, model.n_q + model.N - 1)
        free[gsl] = False
        neutral[gsl] = np.asarray(fixed_gamma, dtype=float)

    def embed(x):
        theta = neutral.copy()
        theta[free] = x
        return theta

    def resid(x):
        cp = model.problem(embed(x))
        zt, Mt = forward_weyl_pairs(cp, z)
        r = np.concatenate([(zt - z) * w * z_weight, ((Mt - M) * wm)[use]])
        return np.where(np.isfinite(r), r, 1e6)

    lo, hi = lo[free], hi[free]
    best = None
    for s in range(starts):
        x0 = neutral[free] if s == 0 else rng.uniform(lo, hi)
        if s > 0:
            # keep random starts moderate: full-range potentials rarely help
            x0[: model.n_q] *= 0.2
        x0 = np.clip(x0, lo, hi)
        sol = least_squares(resid, x0, bounds=(lo, hi), x_scale="jac", xtol=1e-14,
                            ftol=1e-14, gtol=1e-14, max_nfev=max_nfev)
        cost = float(np.mean(sol.fun**2))
        log.info("weyl fit start %d: cost %.3e", s, cost)
        if best is None or cost < best[1]:
            best = (embed(sol.x), cost, s + 1)
        if cost < threshold:
            break
    theta, cost, used = best
    cp = model.problem(theta)
    zt, Mt = forward_weyl_pairs(cp, z)
    fit = WeylFit(theta, cost, zt - z, np.where(use, Mt - M, 0.0), used, cost < threshold)
    if not fit.success:
        raise ReconstructionError(
            f"Weyl-sequence fit residual {cost:.3e} above threshold {threshold:.1e}", (model, fit)
        )
    return model, fit


# --- steps 8-9: h -------------------------------------------------------


def recover_h(a, cp: CycleProblem, alpha, beta, probes=None, *, rtol=1e-4):
    """h from a(lam*) and endpoint values of the recovered cycle (any h in cp ignored).

    Returns (h, spread).  Probes too close to zeros of S(T, .) are dropped and
    the probe set is extended downwards.
    """
    probes = np.array([-1.0, -2.0, -3.5, -5.0] if probes is None else probes, dtype=float)
    for _ in range(4):
        v = cycle_propagate(cp, probes + 0j)
        S, dS, C = _real(v.S), _real(v.dS), _real(v.C)
        av = _real(a(probes + 0j))
        ok = np.abs(alpha * S) > 1e-3 * (np.abs(av) + 1)
        if ok.sum() >= 2:
            break
        probes = np.concatenate([probes, probes.min() * 2 - np.arange(1, 4)])
    else:
        raise InconsistentDataError("no usable probe for h: S(T, lam*) too small everywhere")
    num = (av - alpha * C - beta * dS + 1 + alpha * beta)[ok]
    w = alpha * S[ok]
    hs = num / w
    h = float(np.dot(w, num) / np.dot(w, w))  # least squares: large |S| probes count most
    spread = float(np.max(np.abs(hs - h)))
    if spread > rtol * (1 + abs(h)) * 10:
        raise InconsistentDataError(f"h estimates disagree across probes (spread {spread:.2e})")
    return h, spread


# --- composition ----------------------------------------------------------


@dataclass
class CycleReconstruction:
    lengths: np.ndarray
    basis: Basis
    theta: np.ndarray  # q coefficients per segment, flattened
    samples: tuple
    gamma: np.ndarray
    eta: np.ndarray
    h: float
    alpha: float
    beta: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def params(self) -> CycleParams:
        return CycleParams(self.gamma, self.eta, self.h, self.alpha, self.beta)

    def problem(self, substeps=2) -> CycleProblem:
        return CycleProblem(self.lengths, self.samples, self.params, substeps)

    def q_coefficients(self):
        k = self.basis.size
        return [self.theta[i * k : (i + 1) * k] for i in range(len(self.lengths))]

    def to_dict(self):
        return {
            "lengths": self.lengths.tolist(),
            "basis": self.basis.to_dict(),
            "coefficients": [c.tolist() for c in self.q_coefficients()],
            "gamma": np.asarray(self.gamma).tolist(),
            "eta": np.asarray(self.eta).tolist(),
            "h": self.h,
            "alpha": self.alpha,
            "beta": self.beta,
            "diagnostics": self.diagnostics,
        }


def _products(data: CycleSpectralData) -> bool:
    return isinstance(data.a, ReconstructedCharFn) and isinstance(data.d, ReconstructedCharFn)


def run_ip0(
    data: CycleSpectralData, *, basis=Basis("piecewise", 4), priors=Priors(), starts=DEFAULT_STARTS,
    seed=0, threshold=1e-8, density=DEFAULT_DENSITY, tail_passes=1, initial=None, fix_gamma=False, h_rtol=1e-4,
) -> CycleReconstruction:
    """Spectral stage, Weyl fit, then h; diagnostics collected along the way.

    When a and d are product reconstructions, ``tail_passes`` further rounds
    re-reference both products to the fitted model (which then supplies the
    tail beyond the data) and refit from the previous solution.  ``fix_gamma``
    holds the jump sizes at ``data.gamma_ref`` (known from alpha_j, beta_j).
    ``h_rtol`` bounds the disagreement of h across probes.
    """
    if fix_gamma and data.gamma_ref is None:
        raise ValueError("fix_gamma needs data.gamma_ref")
    kw = dict(basis=basis, priors=priors, seed=seed, threshold=threshold, density=density,
              fixed_gamma=data.gamma_ref if fix_gamma else None, h_rtol=h_rtol)
    stage, model, fit, h, spread = _ip0_pass(data, starts=starts, initial=initial, **kw)
    passes = 0
    while passes < tail_passes and _products(data):
        passes += 1
        cp = model.problem(fit.theta, h)
        a_fn = data.a.rereferenced(lambda lam: cycle_char(cp, lam).a)
        d_fn = data.d.rereferenced(lambda lam: cycle_char(cp, lam).d, strip=0.5)
        log.info("tail pass %d: model zero offsets %.2e (a), %.2e (d)", passes, a_fn.spread, d_fn.spread)
        data = replace(data, a=a_fn, d=d_fn)
        stage, model, fit, h, spread = _ip0_pass(data, starts=1, initial=fit.theta, **kw)
    q, gamma, eta = model.split(fit.theta)
    final = model.problem(fit.theta, h)
    probe = np.linspace(float(stage.z[0]) - 1.0, float(stage.z[min(10, stage.z.size - 1)]), 50)
    a_fit = _real(cycle_char(final, probe + 0j).a)
    a_in = _real(data.a(probe + 0j))
    diag = {
        "weyl_fit": fit.to_dict(),
        "h_spread": spread,
        "tail_passes": passes,
        "ambiguous_signs": sorted(stage.ambiguous),
        "data_misfit_a": float(np.max(np.abs(a_fit - a_in) / (1 + np.abs(a_in)))),
    }
    return CycleReconstruction(
        np.asarray(data.lengths), basis, fit.theta[: model.n_q].copy(), final.samples,
        gamma, eta, h, data.alpha, data.beta, diag,
    )


def _ip0_pass(data, *, basis, priors, starts, seed, threshold, density, initial, fixed_gamma,
              h_rtol):
    stage = algorithm1_spectral_stage(data)
    model, fit = reconstruct_from_weyl(
        stage.z, stage.M, data.lengths, data.alpha, data.beta, basis=basis, priors=priors,
        starts=starts, seed=seed, threshold=threshold, gamma_start=data.gamma_ref, density=density,
        m_weights=stage.reliability, initial=initial, fixed_gamma=fixed_gamma,
    )
    # midpoints between zeros of d: S(T, .) is far from zero there and lam is real,
    # where a reconstructed a is most accurate
    probes = 0.5 * (stage.z[:6] + stage.z[1:7])
    h, spread = recover_h(data.a, model.problem(fit.theta), data.alpha, data.beta, probes,
                          rtol=h_rtol)
    return stage, model, fit, h, spread
