"""Forward data generation and the full reconstruction of (Q, H) from spectra.

The inverse run is a fixed sequence of stages; each consumes only the
dataset and the outputs of earlier stages:

1. ``products``      rebuild every Delta from its spectrum
2. ``matching``      jump sizes gamma_j and the reduced alpha, beta
3. ``edges``         IP(k) on each boundary edge
4. ``boundary``      boundary-edge solutions from the recovered (q_k, h_k)
5. ``coefficients``  a(lambda), d(lambda) from the coefficient system
6. ``cycle``         IP(0) on the reduced cycle
7. ``unwind``        H from the reduced cycle parameters

A global refinement pass then re-references all products to the assembled
model, which supplies the spectral tail beyond the data, and repeats stages
5-7 from the previous solution.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy.integrate import trapezoid

from .basis import Basis
from .charfn import (
    REGULARITY_THRESHOLD,
    GraphProblem,
    assemble_delta,
    check_regular,
    solve_coefficient_system,
    subset_labels,
)
from .errors import (
    GraphValidationError,
    HedgehogError,
    InconsistentDataError,
    ReconstructionError,
    StageError,
)
from .graph import (
    DEFAULT_DENSITY,
    GraphSpec,
    PotentialField,
    ValidatedGraph,
    grid,
    label_name,
    parse_label,
    reduced_cycle_params,
    spectra_inventory,
    unwind_h,
    validate_graph,
)
from .inverse_cycle import CycleSpectralData, run_ip0
from .inverse_edge import EdgeReconstruction, char_from_label, reconstruct_edge
from .inverse_edge import weyl_from_two_spectra
from .jsonio import SCHEMA_VERSION
from .propagators import _prep
from .rootfinder import DEFAULT_N_MAX, Spectrum, find_zeros, first_zeros, omega_signs, weyl_sequence

log = logging.getLogger(__name__)

STAGES = ("products", "matching", "edges", "boundary", "coefficients", "cycle", "unwind")
ENV_PREFIX = "HEDGEHOG_"
H_SPREAD_RTOL = 0.1  # h is refined by the global passes; only gross disagreement fails
RECONSTRUCTED_RADICAND_TOL = 1e-2  # a carries ~1e-4 relative error after the coefficient solve
_INT_OPTIONS = ("n_max", "edge_starts", "cycle_starts", "seed", "edge_tail_passes",
                "global_passes", "density", "threads")


# --- configuration ----------------------------------------------------------


@dataclass
class Tolerances:
    """Acceptance limits used by :func:`verify_reconstruction`."""

    q_param: float = 1e-3  # coefficient-vector distance per edge (same basis)
    q_sup: float = 5e-3  # sup-norm distance of sampled potentials
    h: float = 1e-4
    spectra: float = 1e-5  # |dlambda| / max(1, |lambda|)
    spectra_count: int = 20


@dataclass
class PipelineConfig:
    """Every knob of the forward and inverse runs, with documented defaults.

    n_max           eigenvalues per spectrum (forward) and used per product (inverse)
    edge_basis      parameterisation of boundary-edge potentials
    cycle_basis     parameterisation of cycle-edge potentials
    *_starts        multi-start counts of the two least-squares fits
    *_threshold     mean-square residual accepted by each fit
    edge_tail_passes  model re-referencing rounds inside each IP(k)
    global_passes   rounds re-referencing all products to the assembled model
    lambda_window   forward only: collect all eigenvalues in [lo, hi] instead of n_max
    threads         worker processes for the independent edge problems
    """

    n_max: int = DEFAULT_N_MAX
    edge_basis: Basis = field(default_factory=lambda: Basis("cosine", 6))
    cycle_basis: Basis = field(default_factory=lambda: Basis("piecewise", 4))
    edge_starts: int = 8
    cycle_starts: int = 8
    seed: int = 0
    edge_threshold: float = 1e-8
    cycle_threshold: float = 1e-3
    edge_tail_passes: int = 1
    global_passes: int = 3
    density: int = DEFAULT_DENSITY
    regularity_threshold: float = REGULARITY_THRESHOLD
    lambda_window: tuple | None = None
    threads: int = 1
    tolerances: Tolerances = field(default_factory=Tolerances)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Basis):
                v = v.to_dict()
            elif isinstance(v, Tolerances):
                v = asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, doc: dict | None, path="config") -> "PipelineConfig":
        doc = dict(doc or {})
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, val in doc.items():
            where = f"{path}.{key}"
            if key not in known:
                raise GraphValidationError("unknown option", where)
            if key in ("edge_basis", "cycle_basis"):
                try:
                    kw[key] = Basis.from_dict(val)
                except (ValueError, TypeError, AttributeError) as exc:
                    raise GraphValidationError(str(exc), where) from None
            elif key == "tolerances":
                tol_known = {f.name for f in fields(Tolerances)}
                bad = set(val) - tol_known
                if bad:
                    raise GraphValidationError("unknown tolerance", f"{where}.{sorted(bad)[0]}")
                kw[key] = Tolerances(**{k: _number(v, f"{where}.{k}") for k, v in val.items()})
            elif key == "lambda_window":
                if val is not None:
                    if len(val) != 2 or not float(val[0]) < float(val[1]):
                        raise GraphValidationError("need [lo, hi] with lo < hi", where)
                    val = (float(val[0]), float(val[1]))
                kw[key] = val
            else:
                kw[key] = _number(val, where)
        cfg = cls(**kw)
        for name in _INT_OPTIONS:
            v = getattr(cfg, name)
            if v != int(v):
                raise GraphValidationError("expected an integer", f"{path}.{name}")
            setattr(cfg, name, int(v))
            if name not in ("seed", "edge_tail_passes", "global_passes") and v < 1:
                raise GraphValidationError("must be >= 1", f"{path}.{name}")
            if v < 0:
                raise GraphValidationError("must be >= 0", f"{path}.{name}")
        return cfg

    def with_env(self, environ=None) -> "PipelineConfig":
        """Override tolerances (only) from HEDGEHOG_* environment variables.

        e.g. HEDGEHOG_EDGE_THRESHOLD=1e-7, HEDGEHOG_TOL_H=1e-5.
        """
        environ = os.environ if environ is None else environ
        cfg = replace(self, tolerances=replace(self.tolerances))
        for name in ("edge_threshold", "cycle_threshold", "regularity_threshold"):
            key = ENV_PREFIX + name.upper()
            if key in environ:
                setattr(cfg, name, _number(environ[key], key))
        for f in fields(Tolerances):
            key = ENV_PREFIX + "TOL_" + f.name.upper()
            if key in environ:
                setattr(cfg.tolerances, f.name, _number(environ[key], key))
        return cfg


def _number(val, where):
    if isinstance(val, bool) or not isinstance(val, (int, float, str)):
        raise GraphValidationError(f"expected a number, got {val!r}", where)
    if isinstance(val, int):
        return val
    try:
        x = int(val) if isinstance(val, str) and val.strip().lstrip("+-").isdigit() else float(val)
    except ValueError:
        raise GraphValidationError(f"expected a number, got {val!r}", where) from None
    if not math.isfinite(x):
        raise GraphValidationError("must be finite", where)
    return x


# --- graph and potential documents -----------------------------------------


def graph_to_dict(graph: ValidatedGraph, with_h=True) -> dict:
    out = {
        "block_sizes": list(graph.block_sizes),
        "edge_lengths": graph.lengths.tolist(),
        "alpha": graph.alpha.tolist(),
        "beta": graph.beta.tolist(),
        "xi": list(graph.xi),
    }
    if with_h:
        out["h"] = graph.h.tolist()
    return out


def graph_from_dict(doc: dict, path="graph") -> ValidatedGraph:
    if not isinstance(doc, dict):
        raise GraphValidationError("expected an object", path)
    for key in ("block_sizes", "edge_lengths", "alpha", "beta"):
        if key not in doc:
            raise GraphValidationError("missing", f"{path}.{key}")
    try:
        return validate_graph(
            GraphSpec(doc["block_sizes"], doc["edge_lengths"], doc["alpha"], doc["beta"],
                      doc.get("h"), doc.get("xi"))
        )
    except GraphValidationError as exc:
        raise GraphValidationError(str(exc).split(": ", 1)[-1], f"{path}.{exc.path}") from None
    except (TypeError, ValueError) as exc:
        raise GraphValidationError(str(exc), path) from None


@dataclass
class EdgePotential:
    """One edge potential: basis coefficients, or raw samples on a uniform grid."""

    basis: Basis | None = None
    coefficients: np.ndarray | None = None
    samples: np.ndarray | None = None

    def __post_init__(self):
        if (self.basis is None) == (self.samples is None):
            raise GraphValidationError("give either basis + coefficients or samples", "potential")
        if self.basis is not None:
            self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)
            if self.coefficients.size != self.basis.size:
                raise GraphValidationError(
                    f"{self.coefficients.size} coefficients for basis size {self.basis.size}",
                    "coefficients",
                )
        else:
            self.samples = np.asarray(self.samples, dtype=float).reshape(-1)

    def on_grid(self, length: float, density: int = DEFAULT_DENSITY) -> np.ndarray:
        if self.basis is not None:
            return self.basis.samples(self.coefficients, length, density)
        x = grid(length, density)
        return np.interp(x, np.linspace(0, length, self.samples.size), self.samples)

    def to_dict(self) -> dict:
        if self.basis is not None:
            return {"basis": self.basis.to_dict(), "coefficients": self.coefficients.tolist()}
        return {"samples": self.samples.tolist()}

    @classmethod
    def from_dict(cls, doc, path="potential") -> "EdgePotential":
        try:
            if isinstance(doc, (int, float)) and not isinstance(doc, bool):
                return cls(samples=np.full(2, float(doc)))
            if "constant" in doc:
                return cls(samples=np.full(2, float(doc["constant"])))
            if "samples" in doc:
                return cls(samples=doc["samples"])
            if "basis" in doc:
                return cls(Basis.from_dict(doc["basis"]), doc.get("coefficients"))
        except GraphValidationError as exc:
            raise GraphValidationError(str(exc).split(": ", 1)[-1], f"{path}.{exc.path}") from None
        except (TypeError, ValueError) as exc:
            raise GraphValidationError(str(exc), path) from None
        raise GraphValidationError("expected 'samples', 'constant' or 'basis'", path)


def potential_field(graph: ValidatedGraph, edges, density=DEFAULT_DENSITY) -> PotentialField:
    return PotentialField(
        graph.lengths, tuple(e.on_grid(t, density) for e, t in zip(edges, graph.lengths))
    )


# --- datasets ---------------------------------------------------------------


@dataclass
class SpectralDataset:
    """All spectra of the inverse problem, the sign sequence and the known data.

    ``geometry`` carries lengths, blocks, alpha, beta and xi; its h is not
    part of the data and is held at zero.
    """

    geometry: ValidatedGraph
    spectra: dict
    omega: np.ndarray
    n_max: int

    def __post_init__(self):
        g = self.geometry
        if np.any(g.h != 0):
            self.geometry = g.with_h(np.zeros(g.n_edges))
        self.omega = np.asarray(self.omega, dtype=int).reshape(-1)
        missing = [lab for lab in self.labels if lab not in self.spectra]
        if missing:
            raise GraphValidationError("spectrum missing", f"spectra.{label_name(missing[0])}")
        extra = [lab for lab in self.spectra if lab not in self.labels]
        if extra:
            raise GraphValidationError("label not in the inventory", f"spectra.{label_name(extra[0])}")
        if self.omega.size == 0:
            raise GraphValidationError("sign sequence missing", "omega")
        if np.any(np.abs(self.omega) > 1):
            raise GraphValidationError("signs must be -1, 0 or 1", "omega")

    @property
    def labels(self):
        g = self.geometry
        return spectra_inventory(g.N, g.r, g.xi)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "spectral_dataset",
            "graph": graph_to_dict(self.geometry, with_h=False),
            "n_max": int(self.n_max),
            "omega": self.omega.tolist(),
            "spectra": {label_name(lab): self.spectra[lab].to_dict() for lab in self.labels},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SpectralDataset":
        _check_schema(doc, "spectral_dataset")
        geom = graph_from_dict({**doc.get("graph", {}), "h": None})
        if "spectra" not in doc:
            raise GraphValidationError("missing", "spectra")
        spectra = {}
        for name, sd in doc["spectra"].items():
            try:
                spectra[parse_label(name)] = Spectrum.from_dict(sd)
            except (KeyError, TypeError, ValueError) as exc:
                raise GraphValidationError(f"bad spectrum: {exc}", f"spectra.{name}") from None
        if "omega" not in doc:
            raise GraphValidationError("missing", "omega")
        return cls(geom, spectra, np.asarray(doc["omega"], dtype=int), int(doc.get("n_max", DEFAULT_N_MAX)))


def _check_schema(doc, kind):
    if not isinstance(doc, dict):
        raise GraphValidationError("expected a JSON object", "$")
    if "schema_version" not in doc:
        raise GraphValidationError("missing", "schema_version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise GraphValidationError(f"unsupported version {doc['schema_version']!r}", "schema_version")
    if doc.get("kind", kind) != kind:
        raise GraphValidationError(f"expected kind {kind!r}, got {doc.get('kind')!r}", "kind")


# --- reconstruction ---------------------------------------------------------


@dataclass
class GraphReconstruction:
    """Recovered potentials and Robin coefficients; ``graph.h`` is H."""

    graph: ValidatedGraph
    edges: list
    diagnostics: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)

    @property
    def H(self) -> np.ndarray:
        return self.graph.h

    def potential(self, density=DEFAULT_DENSITY) -> PotentialField:
        return potential_field(self.graph, self.edges, density)

    def problem(self, density=DEFAULT_DENSITY) -> GraphProblem:
        return GraphProblem(self.graph, self.potential(density))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "graph_reconstruction",
            "graph": graph_to_dict(self.graph),
            "potential": [e.to_dict() for e in self.edges],
            "stages": dict(self.stages),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GraphReconstruction":
        _check_schema(doc, "graph_reconstruction")
        graph = graph_from_dict(doc.get("graph"))
        edges = _edges_from(doc.get("potential"), graph)
        return cls(graph, edges, doc.get("diagnostics", {}), doc.get("stages", {}))


def _edges_from(pot, graph, path="potential"):
    if not isinstance(pot, list):
        raise GraphValidationError("expected a list with one entry per edge", path)
    if len(pot) != graph.n_edges:
        raise GraphValidationError(f"{len(pot)} entries for {graph.n_edges} edges", path)
    return [EdgePotential.from_dict(p, f"{path}[{j}]") for j, p in enumerate(pot)]


def truth_from_job(doc: dict) -> GraphReconstruction:
    """Ground truth (graph with H, potentials) from a forward job document."""
    _check_schema(doc, "forward_job")
    graph = graph_from_dict(doc.get("graph"))
    edges = _edges_from(doc.get("potential"), graph)
    return GraphReconstruction(graph, edges)


# --- forward generation -----------------------------------------------------


def spectrum_lower_bound(graph: ValidatedGraph, Q: PotentialField) -> float:
    """A safe floor for the eigenvalues (generous in the Robin terms)."""
    qmin = min(float(np.min(s)) for s in Q.samples)
    w = np.maximum(graph.alpha / graph.beta, graph.beta / graph.alpha)
    hs = float(np.sum(np.abs(graph.h) * w))
    tmin = float(np.min(graph.lengths))
    return min(qmin, 0.0) - 4.0 * (1.0 + hs) ** 2 - 4.0 * hs / tmin - 4.0


def forward_spectra(graph: ValidatedGraph, Q: PotentialField, labels, config: PipelineConfig | None = None) -> dict:
    """Spectra of the given labels: the n_max lowest, or all in config.lambda_window."""
    cfg = config or PipelineConfig()
    prob = GraphProblem(graph, Q)
    lo = spectrum_lower_bound(graph, Q)
    spectra = {}
    for lab in labels:
        f = lambda lam, lab=lab: assemble_delta(prob, lab, lam)  # noqa: E731
        if cfg.lambda_window is not None:
            spectra[lab] = find_zeros(f, cfg.lambda_window)
        else:
            spectra[lab] = first_zeros(f, cfg.n_max, lo=lo, length=graph.total_length)
        log.info("%s: %d eigenvalues", label_name(lab), len(spectra[lab]))
    return spectra


def forward_generate(graph: ValidatedGraph, Q: PotentialField,
                     config: PipelineConfig | None = None) -> SpectralDataset:
    """All inventory spectra of (graph, Q, H = graph.h) and the sign sequence."""
    cfg = config or PipelineConfig()
    check_regular(graph, cfg.regularity_threshold)
    spectra = forward_spectra(graph, Q, spectra_inventory(graph.N, graph.r, graph.xi), cfg)
    cycle = GraphProblem(graph, Q).cycle
    z, _ = weyl_sequence(cycle, cfg.n_max)
    omega = omega_signs(cycle, z)
    n = min(len(s) for s in spectra.values())
    return SpectralDataset(graph.with_h(np.zeros(graph.n_edges)), spectra, omega, n)


# --- inverse run ------------------------------------------------------------


def _edge_job(args):
    """One IP(k) problem; returns (k, reconstruction or best candidate, error text)."""
    geometry, lam0, lamk, k, bases, cfg, initial = args
    try:
        weyl = weyl_from_two_spectra(lam0, lamk, geometry, k, cfg.n_max)
        rec = reconstruct_edge(
            weyl, geometry, basis=bases, starts=cfg.edge_starts, seed=cfg.seed + k,
            threshold=cfg.edge_threshold, density=cfg.density, tail_passes=cfg.edge_tail_passes,
            initial=initial,
        )
        return k, rec, None
    except ReconstructionError as exc:
        return k, exc.best, str(exc)
    except HedgehogError as exc:
        return k, None, f"{type(exc).__name__}: {exc}"


class CoefficientFunctions:
    """a(lambda) and d(lambda) of the reduced cycle, solved from the 2^N subset Deltas.

    ``graph`` carries the recovered boundary h_k (cycle h unused);
    ``boundary`` is a problem whose first r edges hold the recovered q_k.
    """

    def __init__(self, graph: ValidatedGraph, boundary: GraphProblem, deltas: dict):
        self.graph = graph
        self.boundary = boundary
        self.deltas = deltas
        self._key = None
        self._val = None

    def _solve(self, lam):
        flat, shape = _prep(lam)
        key = (flat.tobytes(), shape)
        if key != self._key:
            ends = self.boundary.endpoints(flat)[: self.graph.r]
            vals = {lab: np.asarray(fn(flat), dtype=complex) for lab, fn in self.deltas.items()}
            a, d, _ = solve_coefficient_system(self.graph, ends, vals, flat)
            if shape == ():
                a, d = complex(a[0]), complex(d[0])
            else:
                a, d = a.reshape(shape), d.reshape(shape)
            self._key, self._val = key, (a, d)
        return self._val

    def a(self, lam):
        return self._solve(lam)[0]

    def d(self, lam):
        return self._solve(lam)[1]


class InverseRun:
    """Single-use driver for one dataset; keeps stage outputs for diagnosis."""

    def __init__(self, data: SpectralDataset, config: PipelineConfig | None = None):
        self.data = data
        self.cfg = config or PipelineConfig()
        self.partial: dict = {}
        self.stages: dict = {}
        self._used = False

    def _stage(self, name, fn, *args):
        log.info("stage %s", name)
        try:
            out = fn(*args)
        except StageError:
            raise
        except (HedgehogError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            self.stages[name] = "failed"
            raise StageError(name, exc, self.partial) from exc
        self.stages[name] = "ok"
        return out

    # stage bodies

    def _products(self):
        g, n = self.data.geometry, self.cfg.n_max
        if self.data.n_max < n:
            raise InconsistentDataError(f"dataset holds {self.data.n_max} eigenvalues per spectrum, {n} needed")
        out = {}
        for lab in subset_labels(g):
            out[lab] = char_from_label(g, lab, self.data.spectra[lab], n)
        self.partial["products"] = {label_name(k): v.spread for k, v in out.items()}
        return out

    def _matching(self):
        p = reduced_cycle_params(self.data.geometry)
        self.partial["matching"] = {"gamma": p.gamma.tolist(), "alpha": p.alpha, "beta": p.beta}
        return p

    def _bases(self):
        g = self.data.geometry
        return tuple([self.cfg.edge_basis] * g.r + [self.cfg.cycle_basis] * g.N)

    def _edges(self, initial=None):
        g, cfg = self.data.geometry, self.cfg
        spec = self.data.spectra
        jobs = [(g, spec[()], spec[(k,)], k, self._bases(), cfg, initial) for k in range(1, g.r + 1)]
        if cfg.threads > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=min(cfg.threads, len(jobs))) as pool:
                results = list(pool.map(_edge_job, jobs))
        else:
            results = [_edge_job(j) for j in jobs]
        recs, errors = {}, {}
        for k, rec, err in results:
            if rec is not None:
                recs[k] = rec
            if err is not None:
                errors[k] = err
        self.partial["edges"] = {k: r.to_dict() for k, r in recs.items()}
        if errors:
            k = min(errors)
            raise ReconstructionError(f"edge {k}: {errors[k]}", recs.get(k))
        return recs

    def _boundary(self, recs: dict):
        g = self.data.geometry
        h = np.zeros(g.n_edges)
        edges = []
        for k in range(1, g.r + 1):
            h[k - 1] = recs[k].h
            edges.append(EdgePotential(recs[k].basis, recs[k].coefficients))
        zero = [EdgePotential(samples=np.zeros(2)) for _ in range(g.N)]
        gh = g.with_h(h)
        prob = GraphProblem(gh, potential_field(gh, edges + zero, self.cfg.density))
        self.partial["boundary"] = {"h": h[: g.r].tolist()}
        return gh, edges, prob

    def _coefficients(self, gh, prob, products, gamma):
        g = self.data.geometry
        fns = CoefficientFunctions(gh, prob, products)
        # a, d come out of a cancellation that worsens exponentially for lam << 0,
        # so they are only used near the low end of the data spectra and above
        lowest = min(float(np.min(s.values.real)) for s in self.data.spectra.values())
        floor = min(lowest, 0.0) - 2.0
        probe = np.linspace(floor, floor + 10.0, 6)
        a = fns.a(probe + 0j)
        if not np.all(np.isfinite(a)):
            raise InconsistentDataError("coefficient system is singular on the probe points")
        if np.max(np.abs(a.imag)) > 1e-6 * (1 + np.max(np.abs(a.real))):
            raise InconsistentDataError("a(lambda) is not real on the real axis")
        if not np.real(fns.d(np.array([floor + 0j]))[0]) > 0:
            raise InconsistentDataError(f"d({floor:.3g}) <= 0: zeros of d below the data spectra")
        p = reduced_cycle_params(g)
        return CycleSpectralData(fns.a, fns.d, self.data.omega, p.alpha, p.beta, g.cycle_lengths,
                                 self.cfg.n_max, np.asarray(gamma), search_floor=floor,
                                 zero_search="real", radicand_tol=RECONSTRUCTED_RADICAND_TOL)

    def _cycle(self, cdata, initial=None):
        cfg = self.cfg
        rec = run_ip0(cdata, basis=cfg.cycle_basis, starts=1 if initial is not None else cfg.cycle_starts,
                      seed=cfg.seed, threshold=cfg.cycle_threshold, density=cfg.density,
                      tail_passes=0, initial=initial, fix_gamma=True, h_rtol=H_SPREAD_RTOL)
        self.partial["cycle"] = rec.to_dict()
        return rec

    def _unwind(self, gh, boundary_edges, crec):
        g = self.data.geometry
        H = np.concatenate([gh.h[: g.r], unwind_h(crec.params)])
        cyc = [EdgePotential(crec.basis, c) for c in crec.q_coefficients()]
        graph = g.with_h(H)
        self.partial["unwind"] = {"H": H.tolist()}
        return GraphReconstruction(graph, list(boundary_edges) + cyc)

    # driver

    def run(self, stage="all", boundary: GraphReconstruction | None = None) -> GraphReconstruction:
        if self._used:
            raise RuntimeError("an InverseRun is single-use")
        self._used = True
        g = self.data.geometry
        products = self._stage("products", self._products)
        params = self._stage("matching", self._matching)
        if stage == "ip0-only":
            if boundary is None:
                raise ValueError("ip0-only needs precomputed boundary results")
            recs = {
                k: EdgeReconstruction(k, float(g.lengths[k - 1]), boundary.edges[k - 1].basis,
                                      boundary.edges[k - 1].coefficients, None, float(boundary.H[k - 1]), {})
                for k in range(1, g.r + 1)
            }
            self.stages["edges"] = "given"
        elif stage == "all":
            recs = self._stage("edges", self._edges)
        else:
            raise ValueError(f"unknown stage selection {stage!r}")
        gh, bedges, bprob = self._stage("boundary", self._boundary, recs)
        cdata = self._stage("coefficients", self._coefficients, gh, bprob, products, params.gamma)
        crec = self._stage("cycle", self._cycle, cdata)
        result = self._stage("unwind", self._unwind, gh, bedges, crec)
        passes = 0
        for passes in range(1, self.cfg.global_passes + 1):
            log.info("global pass %d", passes)
            model = result.problem(self.cfg.density)
            products = self._stage("products", self._rereference, products, model)
            cdata = self._stage("coefficients", self._coefficients, gh, bprob, products, params.gamma)
            initial = np.concatenate([crec.theta, crec.gamma, crec.eta])
            crec = self._stage("cycle", self._cycle, cdata, initial)
            result = self._stage("unwind", self._unwind, gh, bedges, crec)
        result.stages = dict(self.stages)
        result.diagnostics = {
            "edges": {str(k): r.diagnostics for k, r in recs.items()},
            "cycle": crec.diagnostics,
            "products": self.partial.get("products", {}),
            "global_passes": passes,
        }
        return result

    def _rereference(self, products, model: GraphProblem):
        out = {}
        for lab, fn in products.items():
            out[lab] = fn.rereferenced(lambda lam, lab=lab: assemble_delta(model, lab, lam))
        self.partial["products"] = {label_name(k): v.spread for k, v in out.items()}
        return out


def run_inverse_problem_1(data: SpectralDataset, config: PipelineConfig | None = None, *,
                          stage="all", boundary: GraphReconstruction | None = None) -> GraphReconstruction:
    """Recover (Q, H) from the spectra, the signs and the known alpha_j, beta_j."""
    return InverseRun(data, config).run(stage, boundary)


# --- verification -----------------------------------------------------------


def _spectrum_errors(ref: Spectrum, other: Spectrum, count: int) -> np.ndarray:
    a = ref.expanded()[:count]
    b = other.expanded()[:count]
    n = min(a.size, b.size)
    err = np.abs(a[:n] - b[:n]) / np.maximum(1.0, np.abs(a[:n]))
    if n < count:
        err = np.concatenate([err, np.full(count - n, np.inf)])
    return err


def verify_reconstruction(original: GraphReconstruction, recovered: GraphReconstruction,
                          tolerances: Tolerances | None = None, *, data: SpectralDataset | None = None,
                          data_check=True, density=DEFAULT_DENSITY) -> dict:
    """Distances between two (Q, H) pairs, plus a data-space comparison of spectra.

    Without ground truth, pass the dataset as ``data`` and ``original`` may be
    the reconstruction itself; the spectra check then carries the verdict.
    """
    tol = tolerances or Tolerances()
    g0, g1 = original.graph, recovered.graph
    if g0.n_edges != g1.n_edges or not np.allclose(g0.lengths, g1.lengths, rtol=1e-12, atol=0):
        raise GraphValidationError("graphs differ in geometry", "graph")
    edges = []
    for j, (e0, e1) in enumerate(zip(original.edges, recovered.edges)):
        T = float(g0.lengths[j])
        q0, q1 = e0.on_grid(T, density), e1.on_grid(T, density)
        diff = q1 - q0
        sup = float(np.max(np.abs(diff)))
        l2 = float(np.sqrt(trapezoid(diff**2, grid(T, density))))
        param = None
        if e0.basis is not None and e0.basis == e1.basis:
            param = float(np.linalg.norm(e1.coefficients - e0.coefficients))
        ok = sup <= tol.q_sup and (param is None or param <= tol.q_param)
        edges.append({"edge": j + 1, "sup": sup, "l2": l2, "param": param, "pass": ok})
    dh = np.abs(g1.h - g0.h)
    H = [{"edge": j + 1, "error": float(e), "pass": bool(e <= tol.h)} for j, e in enumerate(dh)]
    report = {"edges": edges, "H": H, "spectra": None}
    if data_check:
        cfg = PipelineConfig(n_max=tol.spectra_count)
        labels = spectra_inventory(g1.N, g1.r, g1.xi)
        rec_spec = forward_spectra(g1, recovered.potential(density), labels, cfg)
        if data is not None:
            ref_spec = data.spectra
        else:
            ref_spec = forward_spectra(g0, original.potential(density), labels, cfg)
        spectra = {}
        for lab in labels:
            err = _spectrum_errors(ref_spec[lab], rec_spec[lab], tol.spectra_count)
            spectra[label_name(lab)] = {"max_rel": float(np.max(err)), "pass": bool(np.all(err <= tol.spectra))}
        report["spectra"] = spectra
    failed = [f"edge {e['edge']}" for e in edges if not e["pass"]]
    failed += [f"h_{e['edge']}" for e in H if not e["pass"]]
    if report["spectra"]:
        failed += [k for k, v in report["spectra"].items() if not v["pass"]]
    report["failed"] = failed
    report["pass"] = not failed
    return report
