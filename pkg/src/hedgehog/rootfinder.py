"""Zeros of entire characteristic functions and their product reconstruction.

Zeros are located with the argument principle on quadrilaterals that tile
the region ``lo <= Re lam <= hi``, ``|Im lam| <= w(Re lam)``.  The height
``w`` grows like ``2 h* sqrt(Re lam)``, i.e. the region is the image of the
strip ``0 <= Im rho < h*`` and the vertical cuts are spaced uniformly in
``rho`` for positive ``lam``.  Quadrilaterals holding one zero are refined by
Newton's method from the contour moment; clusters are bisected until they
separate or shrink below a cluster tolerance, in which case a multiple zero
is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RootFindingError
from .propagators import CycleProblem, propagate_dlambda

DEFAULT_N_MAX = 60
_JITTER = 0.0731  # irrational-ish offset keeps cuts off symmetric zero positions
_MAX_REFINE = 40
_ARG_STEP = math.pi / 4
_MAX_MOMENT_COUNT = 4
_LOOSE_CLUSTER = 1e-4  # relative size below which a miscounting multi-zero region is a cluster
_SPLIT_FRACTIONS = (0.5 + _JITTER / 7, 0.5 - _JITTER / 3, 0.5 + 0.61 * _JITTER, 0.5 - 0.87 * _JITTER)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Zeros ordered by real part, with multiplicities and the search window."""

    values: np.ndarray
    multiplicities: np.ndarray
    window: tuple = (None, None)
    n_max: int | None = None
    residuals: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        m = np.asarray(self.multiplicities, dtype=int).reshape(-1)
        if v.shape != m.shape:
            raise ValueError("values and multiplicities differ in length")
        if np.any(m < 1):
            raise ValueError("multiplicities must be >= 1")
        order = np.lexsort((v.imag, v.real))
        object.__setattr__(self, "values", v[order])
        object.__setattr__(self, "multiplicities", m[order])
        if self.residuals is not None:
            object.__setattr__(self, "residuals", np.asarray(self.residuals)[order])

    def __len__(self):
        return int(self.multiplicities.sum())

    def expanded(self) -> np.ndarray:
        """Zeros repeated according to multiplicity."""
        return np.repeat(self.values, self.multiplicities)

    def truncated(self, n: int) -> "Spectrum":
        ex = self.expanded()[:n]
        vals, idx, counts = np.unique(ex, return_index=True, return_counts=True)
        order = np.argsort(idx)
        return Spectrum(vals[order], counts[order], self.window, n)

    @property
    def real(self) -> np.ndarray:
        return self.expanded().real

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [
                {"re": float(z.real), "im": float(z.imag), "multiplicity": int(m)}
                for z, m in zip(self.values, self.multiplicities)
            ],
            "window": [None if w is None else float(w) for w in self.window],
            "n_max": self.n_max,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Spectrum":
        ev = doc["eigenvalues"]
        return cls(
            np.array([complex(e["re"], e.get("im", 0.0)) for e in ev], dtype=complex),
            np.array([int(e.get("multiplicity", 1)) for e in ev], dtype=int),
            tuple(doc.get("window", (None, None))),
            doc.get("n_max"),
        )


# --- contour machinery ----------------------------------------------------


class _Contour:
    """Closed polyline around a quadrilateral with adaptively refined samples."""

    def __init__(self, corners, n_side=6):
        bl, br, tr, tl = corners
        self.corners = corners
        self.t = np.arange(4 * n_side, dtype=float) / n_side
        self.z = self.at(self.t)
        self.f = None

    def at(self, t):
        """Point at parameter t in [0, 4); one unit per side."""
        bl, br, tr, tl = self.corners
        sides = np.array([[bl, br], [br, tr], [tr, tl], [tl, bl]])
        k = np.minimum(np.floor(t).astype(int), 3)
        s = t - k
        return sides[k, 0] + (sides[k, 1] - sides[k, 0]) * s

    def sort(self):
        order = np.argsort(self.t)
        self.t, self.z = self.t[order], self.z[order]
        if self.f is not None:
            self.f = self.f[order]

    def closed(self):
        return np.append(self.z, self.z[0]), np.append(self.f, self.f[0])


def _evaluate(f, contours):
    """Evaluate f at all pending samples of several contours in one call."""
    need = [c for c in contours if c.f is None or c.f.size != c.z.size]
    if not need:
        return
    pts = np.concatenate([c.z if c.f is None else c.z[c.f.size :] for c in need])
    vals = np.asarray(f(pts), dtype=complex).reshape(-1)
    pos = 0
    for c in need:
        k = c.z.size if c.f is None else c.z.size - c.f.size
        chunk = vals[pos : pos + k]
        c.f = chunk if c.f is None else np.concatenate([c.f, chunk])
        pos += k


def _winding(f, contours):
    """Argument-principle counts; returns (counts, ok flags)."""
    _evaluate(f, contours)
    for _ in range(_MAX_REFINE):
        grew = False
        for c in contours:
            c.sort()
            _, fc = c.closed()
            dphi = np.angle(fc[1:] / fc[:-1])
            bad = np.flatnonzero(~(np.abs(dphi) <= _ARG_STEP))
            if bad.size:
                tc = np.append(c.t, 4.0)
                newt = 0.5 * (tc[bad] + tc[bad + 1])
                c.t = np.concatenate([c.t, newt])
                c.z = np.concatenate([c.z, c.at(newt)])
                grew = True
        if not grew:
            break
        _evaluate(f, contours)
    counts, ok = [], []
    for c in contours:
        c.sort()
        _, fc = c.closed()
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = fc[1:] / fc[:-1]
        dphi = np.angle(ratio)
        scale = np.max(np.abs(c.f))
        ok.append(
            bool(np.all(np.isfinite(ratio)))
            and bool(np.all(np.abs(dphi) <= 1.5 * _ARG_STEP))
            and np.min(np.abs(c.f)) > 1e-13 * scale
        )
        counts.append(int(round(np.sum(dphi) / (2 * math.pi))))
    return counts, ok


def _moments(c, m):
    """Power sums (1/2 pi i) oint z^p f'/f dz, p = 0..m, from the contour samples."""
    zc, fc = c.closed()
    dlog = np.log(np.abs(fc[1:] / fc[:-1])) + 1j * np.angle(fc[1:] / fc[:-1])
    zm = 0.5 * (zc[1:] + zc[:-1])
    return [np.sum(zm**p * dlog) / (2j * math.pi) for p in range(m + 1)]


def _newton(f, z0, mult=1, tol=1e-13, maxit=60):
    """Batched Newton with central-difference derivative; returns (z, converged)."""
    z = np.array(z0, dtype=complex).reshape(-1)
    mult = np.broadcast_to(np.asarray(mult, dtype=float), z.shape)
    done = np.zeros(z.shape, dtype=bool)
    for _ in range(maxit):
        act = ~done
        if not act.any():
            break
        za = z[act]
        hs = 1e-6 * (1 + np.abs(za))
        vals = np.asarray(f(np.concatenate([za, za + hs, za - hs])), dtype=complex)
        n = za.size
        f0, fp, fm = vals[:n], vals[n : 2 * n], vals[2 * n :]
        deriv = (fp - fm) / (2 * hs)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = mult[act] * f0 / deriv
        step = np.where(np.isfinite(step), step, 0)
        # damp steps that leave the neighbourhood
        cap = 0.5 * (1 + np.abs(za))
        big = np.abs(step) > cap
        step[big] *= cap[big] / np.abs(step[big])
        z[act] = za - step
        conv = (np.abs(step) <= tol * (1 + np.abs(za))) | (f0 == 0)
        idx = np.flatnonzero(act)
        done[idx[conv]] = True
    return z, done


def _inside(corners, z, slack=1e-9):
    """Point-in-convex-quadrilateral test with relative slack."""
    bl, br, tr, tl = corners
    poly = [bl, br, tr, tl]
    scale = max(abs(br - bl), abs(tl - bl), 1e-300)
    z = np.asarray(z, dtype=complex)
    ok = np.ones(z.shape, dtype=bool)
    for a, b in zip(poly, poly[1:] + poly[:1]):
        cross = ((b - a).conjugate() * (z - a)).imag
        ok &= cross >= -slack * scale * abs(b - a)
    return ok


def _split(corners, frac=0.5 + _JITTER / 7):
    bl, br, tr, tl = corners
    width = max(abs(br - bl), abs(tr - tl))
    height = max(abs(tl - bl), abs(tr - br))
    if width >= height:
        mb = bl + (br - bl) * frac
        mt = tl + (tr - tl) * frac
        return [(bl, mb, mt, tl), (mb, br, tr, mt)]
    ml = bl + (tl - bl) * frac
    mr = br + (tr - br) * frac
    return [(bl, br, mr, ml), (ml, mr, tr, tl)]


def _diameter(corners):
    bl, br, tr, tl = corners
    return max(abs(tr - bl), abs(br - tl))


@dataclass
class _Found:
    z: complex
    mult: int
    residual: float


def _solve_region(f, corners, count, contour, tol, cluster_tol, depth, out):
    if count <= 0:
        return
    if depth > 90:
        raise RootFindingError(f"refinement depth exceeded near {np.mean(corners)}")
    center = complex(np.mean(corners))
    if count <= _MAX_MOMENT_COUNT:
        found = _moment_solve(f, corners, count, contour, cluster_tol)
        if found is not None:
            out.extend(found)
            return
    if count > 1 and _diameter(corners) <= cluster_tol * (1 + abs(center)):
        out.append(_cluster(f, corners, count, contour))
        return
    mark = len(out)
    try:
        # a cut passing next to a (multiple) zero can miscount; move it and retry
        for frac in _SPLIT_FRACTIONS:
            children = [_Contour(c) for c in _split(corners, frac=frac)]
            counts, ok = _winding(f, children)
            if all(ok) and sum(counts) == count:
                break
        else:
            raise RootFindingError(
                f"zero count {count} not reproduced by sub-regions ({counts}) near {center}"
            )
        for ch, cnt in zip(children, counts):
            _solve_region(f, ch.corners, cnt, ch, tol, cluster_tol, depth + 1, out)
    except RootFindingError:
        # near a multiple zero rounding noise makes small contours miscount;
        # the boundary of a small enough multi-zero region is still reliable
        if count < 2 or _diameter(corners) > _LOOSE_CLUSTER * (1 + abs(center)):
            raise
        del out[mark:]
        out.append(_cluster(f, corners, count, contour))


def _moment_solve(f, corners, count, contour, cluster_tol):
    """All zeros of a region from its contour power sums, polished by Newton.

    Estimates converging to one point (within ``cluster_tol``) form a
    multiple zero, refined with the multiplicity-aware Newton step.  Returns
    None when the result is not trustworthy (caller subdivides).
    """
    s = _moments(contour, count)
    if abs(s[0] - count) > 0.25:
        return None
    e = [1.0 + 0j]
    for k in range(1, count + 1):  # Newton's identities: power sums -> elementary
        e.append(sum((-1) ** (i - 1) * e[k - i] * s[i] for i in range(1, k + 1)) / k)
    poly = [(-1) ** k * e[k] for k in range(count + 1)]
    guesses = np.roots(poly) if count > 1 else np.array([s[1]])
    z, conv = _newton(f, guesses)
    scale = 1 + np.abs(z)
    groups = []
    for i in range(count):
        for g in groups:
            # stalled Newton near a multiple zero stops at the rounding floor
            if abs(z[i] - z[g[0]]) <= 100 * cluster_tol * scale[i]:
                g.append(i)
                break
        else:
            groups.append([i])
    found = []
    for g in groups:
        if len(g) == 1:
            i = g[0]
            if not conv[i]:
                return None
            zi = z[i]
        else:
            # distinct guesses that Newton dragged onto one zero: not a true multiple
            if np.ptp(guesses[g].real) + np.ptp(guesses[g].imag) > 1e-3 * scale[g[0]]:
                return None
            zz, ok = _newton(f, [np.mean(z[g])], mult=len(g), tol=1e-10)
            if not ok[0]:
                return None
            zi = zz[0]
        if not _inside(corners, np.array([zi]))[0]:
            return None
        found.append(_Found(complex(zi), len(g), _residual(f, zi)))
    return found


def _cluster(f, corners, count, contour):
    s = _moments(contour, 1)
    guess = s[1] / count
    z, conv = _newton(f, [guess], mult=count, tol=1e-10)
    zf = complex(z[0]) if conv[0] and _inside(corners, z)[0] else guess
    return _Found(zf, count, _residual(f, zf))


def _residual(f, z):
    hs = 1e-3 * (1 + abs(z))
    v = np.asarray(f(np.array([z, z + hs, z - hs, z + 1j * hs])), dtype=complex)
    return float(abs(v[0]) / max(np.max(np.abs(v[1:])), 1e-300))


def _cuts(lo, hi, rho_step, lam_step, jitter):
    """Vertical cut positions: uniform in lam for lam < 1, uniform in rho above."""
    cuts = []
    x = lo + jitter * lam_step
    cuts.append(lo)
    while x < min(hi, 1.0):
        cuts.append(x)
        x += lam_step
    if hi > 1.0:
        rho = math.sqrt(max(cuts[-1], 1.0)) + jitter * rho_step
        while rho * rho < hi:
            if rho * rho > cuts[-1]:
                cuts.append(rho * rho)
            rho += rho_step
    cuts.append(hi)
    cuts = np.unique(np.array(cuts, dtype=float))
    # drop slivers
    keep = [cuts[0]]
    for c in cuts[1:]:
        if c - keep[-1] > 1e-6 * (1 + abs(c)):
            keep.append(c)
    keep[-1] = hi
    return np.array(keep)


def _height(x, strip, floor):
    return 2.0 * strip * np.sqrt(np.maximum(x, 0.0) + strip**2) + floor


def find_zeros(
    f,
    window,
    *,
    strip=1.0,
    rho_step=0.3,
    lam_step=4.0,
    tol=1e-13,
    cluster_tol=1e-7,
    retries=3,
) -> Spectrum:
    """All zeros of the entire function ``f`` with ``lo <= Re lam <= hi``.

    ``f`` must accept a 1-d complex array.  ``strip`` is the assumed bound on
    Im rho of the zeros (the region height follows it).  Raises
    :class:`RootFindingError` if counts and refined zeros disagree after
    ``retries`` perturbed layouts.
    """
    lo, hi = float(window[0]), float(window[1])
    floor = 0.25
    last_err = None
    for attempt in range(retries + 1):
        jitter = (_JITTER * (attempt + 1) * 2.37) % 0.9 + 0.05
        cuts = _cuts(lo, hi, rho_step, lam_step, jitter)
        if attempt:
            # also nudge the outer edges so a zero on them moves inside/outside cleanly
            cuts[0] -= 1e-3 * attempt * (1 + abs(cuts[0]))
            cuts[-1] += 1e-4 * attempt * (1 + abs(cuts[-1]))
        w = _height(cuts, strip, floor)
        quads = [
            (complex(a, -wa), complex(b, -wb), complex(b, wb), complex(a, wa))
            for a, b, wa, wb in zip(cuts[:-1], cuts[1:], w[:-1], w[1:])
        ]
        contours = [_Contour(q) for q in quads]
        try:
            counts, ok = _winding(f, contours)
            if not all(ok):
                raise RootFindingError("zero on or near a contour")
            found: list[_Found] = []
            for c, cnt in zip(contours, counts):
                if cnt < 0:
                    raise RootFindingError(f"negative winding number near {c.corners[0]}")
                _solve_region(f, c.corners, cnt, c, tol, cluster_tol, 0, found)
            if sum(x.mult for x in found) != sum(counts):
                raise RootFindingError("refined zeros do not match the count")
        except RootFindingError as exc:
            last_err = exc
            continue
        vals = np.array([x.z for x in found], dtype=complex)
        mults = np.array([x.mult for x in found], dtype=int)
        res = np.array([x.residual for x in found])
        # clean tiny imaginary parts of zeros of real functions
        vals = np.where(np.abs(vals.imag) <= 1e-11 * (1 + np.abs(vals)), vals.real + 0j, vals)
        return Spectrum(vals, mults, (lo, hi), None, res)
    raise RootFindingError(f"zero search failed after {retries + 1} layouts: {last_err}")


def first_zeros(f, count, *, lo, length, strip=1.0, grow=1.5, **kw) -> Spectrum:
    """The ``count`` lowest zeros (by real part), growing the window as needed.

    ``length`` sets the expected density (zeros per unit rho ~ length / pi).
    """
    rho_hi = math.pi * (count + 3) / length + 2.0 + _JITTER
    rho_step = kw.pop("rho_step", min(0.3, 0.45 * math.pi / length))
    for _ in range(8):
        spec = find_zeros(f, (lo, rho_hi**2), strip=strip, rho_step=rho_step, **kw)
        if len(spec) >= count + 1:
            out = spec.truncated(count)
            return Spectrum(out.values, out.multiplicities, (lo, rho_hi**2), count,
                            _match_res(spec, out))
        rho_hi *= grow
    raise RootFindingError(f"found only {len(spec)} of {count} zeros below {rho_hi**2:.4g}")


def real_zeros(f, count, *, lo, length, per_wave=40, grow=1.5) -> Spectrum:
    """The ``count`` lowest zeros of a function real and with simple real zeros on the axis.

    Sign changes on a grid (step ``pi / (length * per_wave)`` in rho, 0.05 in
    lam below 1) are polished with Brent's method.  Only real-axis values are
    used, which matters when ``f`` is accurate near the axis only.
    """
    from scipy.optimize import brentq

    def g(x):
        return float(np.real(np.asarray(f(np.array([x + 0j])))[0]))

    rho_hi = math.pi * (count + 3) / length + 2.0
    for _ in range(8):
        neg = np.arange(lo, min(1.0, rho_hi**2), 0.05)
        rho = np.arange(1.0, rho_hi, math.pi / (length * per_wave))
        x = np.concatenate([neg, rho**2])
        y = np.real(np.asarray(f(x + 0j)))
        if not np.all(np.isfinite(y)):
            raise RootFindingError("non-finite values on the real axis")
        idx = np.flatnonzero(np.sign(y[:-1]) * np.sign(y[1:]) <= 0)
        idx = idx[y[idx] != 0] if idx.size else idx  # exact grid zeros counted once
        if idx.size >= count + 1:
            z = np.array([brentq(g, x[i], x[i + 1], xtol=1e-14, rtol=1e-15) for i in idx[:count]])
            res = np.abs([g(v) for v in z])
            return Spectrum(z + 0j, np.ones(count, dtype=int), (lo, rho_hi**2), count, res)
        rho_hi *= grow
    raise RootFindingError(f"found only {idx.size} of {count} real zeros below {rho_hi**2:.4g}")


def _match_res(full, part):
    if full.residuals is None:
        return None
    idx = [int(np.argmin(np.abs(full.values - z))) for z in part.values]
    return full.residuals[idx]


# --- product reconstruction ----------------------------------------------


class ReconstructedCharFn:
    """Product reconstruction of a characteristic function from its zeros.

    ``F(lam) = ref(lam - c) * prod_n (lam_n - lam) / (lam_n^ref + c - lam)``

    where ``ref`` is the same characteristic function for zero potential and
    zero Robin terms, and ``c`` is the mean asymptotic shift of the last
    zeros.  Since both functions share the leading high-energy behaviour,
    ``F / ref -> 1`` as ``lam -> -infinity``, so the constant is 1.

    After a first fit, :meth:`rereferenced` swaps the reference for the
    fitted model itself, whose zeros pair with the data index by index; the
    infinite tail is then carried by the model and no shift is needed.
    """

    constant = 1.0

    def __init__(self, zeros, ref_fn, ref_zeros, shift=0.0, label=None, spread=0.0, length=None):
        self.zeros = np.asarray(zeros, dtype=complex)
        self.ref_zeros = np.asarray(ref_zeros, dtype=complex)
        self.ref_fn = ref_fn
        self.shift = complex(shift)
        self.label = label
        self.spread = float(spread)
        self.length = length

    def rereferenced(self, model_fn, lo=None, strip=1.0) -> "ReconstructedCharFn":
        """Same zeros, referenced to ``model_fn`` (an approximation of the target)."""
        n = self.zeros.size
        if lo is None:
            lo = float(self.zeros[0].real) - 20.0
        mz = first_zeros(model_fn, n, lo=lo, length=self.length, strip=strip).expanded()[:n]
        spread = float(np.max(np.abs(self.zeros - mz)))
        return ReconstructedCharFn(self.zeros, model_fn, mz, 0.0, self.label, spread, self.length)

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=complex)
        flat = lam.reshape(-1)
        out = self._eval(flat)
        poles = self.ref_zeros + self.shift
        near = np.min(np.abs(flat[:, None] - poles[None, :]), axis=1) < 1e-7 * (1 + np.abs(flat))
        if near.any():
            eps = 1e-5 * (1 + np.abs(flat[near]))
            out[near] = 0.5 * (self._eval(flat[near] + eps) + self._eval(flat[near] - eps))
        return out.reshape(lam.shape) if lam.shape else complex(out[0])

    def _eval(self, flat):
        ref = np.asarray(self.ref_fn(flat - self.shift), dtype=complex)
        num = self.zeros[None, :] - flat[:, None]
        den = self.ref_zeros[None, :] + self.shift - flat[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            return ref * np.prod(num / den, axis=1)

    def tail_bound(self, lam):
        """Rough bound of the truncation error relative to |F|."""
        if self.length is None or self.zeros.size == 0:
            return np.inf
        n = self.zeros.size
        k = np.arange(n + 1, 40 * n)
        lam0 = (math.pi * k / self.length) ** 2
        lam = np.atleast_1d(np.asarray(lam, dtype=complex))
        s = np.sum(1.0 / np.abs(lam0[None, :] - lam[:, None]), axis=1)
        return self.spread * s


def char_from_spectrum(spectrum: Spectrum, ref_fn, ref_spectrum: Spectrum, *, n_max=None,
                       shift="auto", label=None, length=None) -> ReconstructedCharFn:
    """Rebuild a characteristic function from its zeros and a zero-potential reference."""
    zeros = spectrum.expanded()
    ref = ref_spectrum.expanded()
    n = zeros.size if n_max is None else min(int(n_max), zeros.size)
    if ref.size < n:
        raise ValueError(f"reference has {ref.size} zeros, need {n}")
    zeros, ref = zeros[:n], ref[:n]
    diff = zeros - ref
    tail = diff[-max(n // 4, 1) :]
    if shift == "auto":
        c = complex(np.mean(tail)) if n >= 8 else 0.0
    else:
        c = complex(shift or 0.0)
    spread = float(np.std(tail.real)) if n >= 8 else float(np.max(np.abs(diff), initial=0.0))
    return ReconstructedCharFn(zeros, ref_fn, ref, c, label, spread, length)


# --- cycle spectral data -------------------------------------------------


def cycle_d(cp: CycleProblem):
    from .charfn import cycle_char

    return lambda lam: cycle_char(cp, lam).d


def weyl_sequence(cp: CycleProblem, count=DEFAULT_N_MAX, *, lo=None, dmin=1e-14):
    """(z_n, M_n) for the first ``count`` zeros of d(lambda) = S(T, lambda)."""
    if lo is None:
        lo = _lower_bound(cp)
    spec = first_zeros(cycle_d(cp), count, lo=lo, length=cp.T, strip=0.5)
    if np.any(spec.multiplicities != 1):
        raise RootFindingError("d(lambda) has a multiple zero; zeros must be simple")
    z = spec.values
    if np.any(np.abs(z.imag) > 1e-9 * (1 + np.abs(z))):
        raise RootFindingError("d(lambda) has non-real zeros")
    z = z.real
    val, der = propagate_dlambda(cp, z + 0j)
    ddot = der.S
    if np.any(np.abs(ddot) < dmin):
        raise RootFindingError("derivative of d vanishes at a zero")
    M = -(val.C / ddot).real
    return z, M


def _lower_bound(cp: CycleProblem):
    qmin = float(min(np.min(s) for s in cp.samples))
    extra = sum(abs(e) for e in cp.params.eta) + abs(cp.params.h)
    return min(qmin, 0.0) - 4.0 * (1.0 + extra) ** 2 - 4.0


def omega_signs(cp: CycleProblem, z, tol=1e-8):
    """omega_n = sign Q(z_n); zero when |Q| <= tol (1 + |D|)."""
    from .charfn import cycle_char

    vals = cycle_char(cp, np.asarray(z, dtype=complex))
    Q = np.real(vals.Q)
    D = np.abs(vals.D)
    out = np.sign(Q).astype(int)
    out[np.abs(Q) <= tol * (1 + D)] = 0
    return out
