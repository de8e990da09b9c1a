"""Acceptance suite: one pass/fail line per criterion, printed in the summary.

Run with ``pytest tests/test_acceptance.py -v``; the lines appear under
"acceptance criteria" at the end of the session.
"""

import itertools
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from hedgehog.basis import Basis
from hedgehog.charfn import GraphProblem, assemble_delta, cycle_char, reduced_delta, weyl_function
from hedgehog.graph import CycleParams, spectra_inventory
from hedgehog.inverse_cycle import CycleSpectralData, algorithm1_spectral_stage, run_ip0
from hedgehog.inverse_edge import reconstruct_edge, weyl_from_two_spectra
from hedgehog.oracle import fd_graph_eigenvalues
from hedgehog.pipeline import run_inverse_problem_1, verify_reconstruction
from hedgehog.propagators import CycleProblem, cycle_propagate, edge_propagate, rho_of
from hedgehog.rootfinder import first_zeros, omega_signs, weyl_sequence

BOUNDARY_BASES = (Basis("cosine", 6), Basis("cosine", 6), Basis("piecewise", 4), Basis("piecewise", 4))


class _Outcome:
    ok = False
    detail = ""


@pytest.fixture
def criterion(acceptance_log):
    @contextmanager
    def run(number, title, budget):
        out = _Outcome()
        t0 = time.perf_counter()
        try:
            yield out
        except Exception as exc:
            out.ok, out.detail = False, f"{type(exc).__name__}: {exc}"
            raise
        finally:
            dt = time.perf_counter() - t0
            in_time = dt < budget
            verdict = "PASS" if out.ok and in_time else "FAIL"
            late = "" if in_time else f" (over the {budget:g} s budget)"
            line = f"criterion {number}: {verdict}  {title}: {out.detail} [{dt:.1f} s]{late}"
            acceptance_log.append(line)
            print(line)
        assert out.ok, line
        assert in_time, line

    return run


def _scaled_wronskian_error(v):
    return np.abs(v.wronskian() - 1) / np.maximum(1.0, np.abs(v.phi * v.dS))


def test_1_closed_form_propagators(criterion):
    with criterion(1, "q = 0 propagators vs sin(rho x)/rho, cos(rho x)", 10) as out:
        lam = np.linspace(-100, 400, 201) + 0j
        rho = rho_of(lam)
        abs_err, scaled_err = 0.0, 0.0
        for x in np.linspace(0, math.pi, 41):
            v = edge_propagate(np.zeros(3), 0.0, math.pi, lam, x=x)
            S = x * np.sinc(rho * x / np.pi)
            C = np.cos(rho * x)
            err = np.maximum(np.abs(v.S - S), np.abs(v.C - C))
            scale = np.exp(np.abs(rho.imag) * x)
            scaled_err = max(scaled_err, float(np.max(err / scale)))
            abs_err = max(abs_err, float(np.max(err[lam.real >= 0])))
        out.ok = abs_err <= 1e-10 and scaled_err <= 1e-10
        out.detail = f"max abs err (lambda >= 0) {abs_err:.2e}, max err / exp(|Im rho| x) {scaled_err:.2e}"


def test_2_wronskian(criterion):
    with criterion(2, "Wronskian <phi, S> = 1 on edges and across cycle jumps", 30) as out:
        rng = np.random.default_rng(2)
        errs = []
        for _ in range(100):
            T = rng.uniform(0.3, 2.0)
            q = rng.uniform(-20, 20, rng.integers(3, 12))
            lam = np.array([complex(rng.uniform(-60, 300), rng.uniform(-10, 10))])
            v = edge_propagate(q, rng.uniform(-2, 2), T, lam, x=rng.uniform(0, T))
            errs.append(_scaled_wronskian_error(v)[0])
        for _ in range(100):
            lengths = rng.uniform(0.4, 1.5, 3)
            p = CycleParams(rng.uniform(0.5, 3, 2), rng.uniform(-1, 1, 2), rng.uniform(-1, 1),
                            rng.uniform(0.5, 2), rng.uniform(0.5, 2))
            samples = tuple(rng.uniform(-5, 5, 6) for _ in lengths)
            cp = CycleProblem(lengths, samples, p)
            # points just past a jump and anywhere on the cycle
            b = cp.breakpoints[rng.integers(2)]
            x = min(b + 1e-3, lengths.sum()) if rng.random() < 0.5 else rng.uniform(0, lengths.sum())
            lam = np.array([complex(rng.uniform(-60, 300), rng.uniform(-10, 10))])
            errs.append(_scaled_wronskian_error(cycle_propagate(cp, lam, x))[0])
        worst = float(np.max(errs))
        out.ok = worst <= 1e-9
        out.detail = f"200 samples, max |W - 1| (relative to |phi S'|) {worst:.2e}"


def test_3_delta_independent_of_k(criterion, r3_graph):
    with criterion(3, "Delta_0 independent of the system D_k it is built from (N=2, r=3)", 30) as out:
        g, Q = r3_graph
        prob = GraphProblem(g, Q)
        rng = np.random.default_rng(3)
        lam = rng.uniform(-30, 300, 100) + 1j * rng.uniform(-10, 10, 100)
        direct = assemble_delta(prob, (), lam)
        # Delta_0 = -Delta_k / M_k, M_k from solving D_k Phi = e_k
        via_k = np.array([-assemble_delta(prob, (k,), lam) / weyl_function(prob, k, lam, method="cramer")
                          for k in range(1, g.r + 1)])
        spread = float(np.max(np.abs(via_k - direct) / np.abs(direct)))
        folded = float(np.max(np.abs(reduced_delta(prob, (), lam) - direct) / np.abs(direct)))
        out.ok = spread <= 1e-10 and folded <= 1e-10
        out.detail = (f"100 lambda, max relative spread over k {spread:.2e}, "
                      f"vs edge-folded form {folded:.2e}")


def test_4_oracle_equivalence(criterion, kirchhoff_truth, general_truth):
    with criterion(4, "first 10 zeros of Delta_0 vs finite differences", 120) as out:
        worst = {}
        for name, truth in (("kirchhoff", kirchhoff_truth), ("general", general_truth)):
            Q = truth.potential()
            prob = GraphProblem(truth.graph, Q)
            exact = first_zeros(lambda lam: assemble_delta(prob, (), lam), 10, lo=-40,
                                length=truth.graph.total_length).expanded()[:10].real
            fd = fd_graph_eigenvalues(truth.graph, Q, count=10)
            worst[name] = float(np.max(np.abs(fd - exact) / np.abs(exact)))
        out.ok = max(worst.values()) <= 1e-4
        out.detail = ", ".join(f"{k} max rel {v:.2e}" for k, v in worst.items())


def _free_cycle(alpha=1.0, beta=1.0):
    return CycleProblem(np.array([math.pi / 2, math.pi / 2]), (np.zeros(3), np.zeros(3)),
                        CycleParams([1.0], [0.0], 0.0, alpha, beta))


def test_5_weyl_sequence_closed_form(criterion):
    with criterion(5, "Weyl sequence z_n = n^2, M_n = -2 n^2 / pi", 30) as out:
        z, M = weyl_sequence(_free_cycle(), 20)
        n = np.arange(1, 21)
        ez = float(np.max(np.abs(z - n**2) / n**2))
        em = float(np.max(np.abs(M + 2 * n**2 / math.pi) / (2 * n**2 / math.pi)))
        out.ok = ez <= 1e-8 and em <= 1e-8
        out.detail = f"n <= 20, max rel err z {ez:.2e}, M {em:.2e}"


def test_6_spectral_stage_hand_check(criterion):
    with criterion(6, "cycle spectral stage, q = 0, alpha = 2, beta = 1/2", 10) as out:
        data = CycleSpectralData.from_problem(_free_cycle(2.0, 0.5), n_max=20)
        st = algorithm1_spectral_stage(data)
        sign = (-1.0) ** np.arange(1, 21)
        eq = float(np.max(np.abs(st.Q - 1.5 * sign)))
        ed = float(np.max(np.abs(st.d1 - sign)))
        out.ok = eq <= 1e-8 and ed <= 1e-8
        out.detail = f"max |Q(z_n) - 1.5(-1)^n| {eq:.2e}, max |d1(z_n) - (-1)^n| {ed:.2e}"


def test_7_ip0_round_trip(criterion):
    with criterion(7, "cycle inverse problem from spectra (8 parameters)", 600) as out:
        lengths = np.array([1.2, 1.0])
        basis = Basis("piecewise", 4)
        theta = np.array([0.5, -1.0, 1.5, 0.2, -0.7, 0.9, 0.0, 1.2])
        samples = tuple(basis.samples(theta[4 * i: 4 * i + 4], L) for i, L in enumerate(lengths))
        cp = CycleProblem(lengths, samples, CycleParams([2.0], [0.5], 0.2, 2.0, 0.5))
        za = first_zeros(lambda lam: cycle_char(cp, lam).a, 60, lo=-30, length=cp.T)
        zd = first_zeros(lambda lam: cycle_char(cp, lam).d, 60, lo=-30, length=cp.T)
        z, _ = weyl_sequence(cp, 60)
        data = CycleSpectralData.from_spectra(za, zd, omega_signs(cp, z), 2.0, 0.5, lengths, [2.0], 60)
        rec = run_ip0(data, basis=basis)
        truth = np.concatenate([theta, [2.0, 0.5]])
        got = np.concatenate([rec.theta, rec.gamma, rec.eta])
        rel = float(np.linalg.norm(got - truth) / np.linalg.norm(truth))
        eh = abs(rec.h - 0.2)
        out.ok = rel <= 1e-3 and eh <= 1e-4
        out.detail = f"parameter rel err {rel:.2e}, |dh| {eh:.2e}"


def test_8_boundary_edge_round_trip(criterion, general_dataset, general_truth):
    with criterion(8, "boundary edge inverse problem from (Lambda_0, Lambda_1)", 600) as out:
        d = general_dataset
        w = weyl_from_two_spectra(d.spectra[()], d.spectra[(1,)], d.geometry, 1, 60)
        rec = reconstruct_edge(w, d.geometry, basis=BOUNDARY_BASES)
        eq = float(np.linalg.norm(rec.coefficients - general_truth.edges[0].coefficients))
        eh = abs(rec.h - general_truth.H[0])
        out.ok = eq <= 1e-3 and eh <= 1e-3
        out.detail = f"q_1 parameter err {eq:.2e}, |dh_1| {eh:.2e} (h_1 = {general_truth.H[0]:g})"


def test_9_full_round_trip(criterion, general_dataset, general_truth):
    with criterion(9, "full graph round trip (N=2, r=2, general coefficients)", 1800) as out:
        rec = run_inverse_problem_1(general_dataset)
        report = verify_reconstruction(general_truth, rec, data=general_dataset)
        eq = max(e["param"] for e in report["edges"])
        eh = max(e["error"] for e in report["H"])
        es = max(v["max_rel"] for v in report["spectra"].values())
        out.ok = report["pass"]
        out.detail = (f"max q param err {eq:.2e}, max |dH| {eh:.2e}, "
                      f"max spectra rel err (20 x 4) {es:.2e}"
                      + ("" if out.ok else f", failed: {report['failed']}"))


def test_10_asymptotics(criterion, general_truth):
    with criterion(10, "i rho M_k -> 1 like C / t; growth of Delta on rays", 60) as out:
        prob = general_truth.problem()
        g = prob.graph
        ts = np.array([20.0, 40.0, 80.0])
        scaled = []
        for k in range(1, g.r + 1):
            rho = 1j * ts
            m = weyl_function(prob, k, rho**2)
            scaled.append(np.abs(1j * rho * m - 1) * ts)
        scaled = np.array(scaled)
        weyl_ok = scaled.max() <= 1.0
        # |Delta_nu| |rho|^p exp(-tau sum T) bounded; rays limited to tau * sum T <= 100,
        # beyond which the direct determinant loses its leading digits
        ST = g.total_length
        bound = []
        for ang in np.linspace(0.1, math.pi / 2, 6):
            for t in np.linspace(5, 100 / (ST * math.sin(ang)), 5):
                rho = t * np.exp(1j * ang)
                for lab in spectra_inventory(g.N, g.r, g.xi):
                    val = assemble_delta(prob, lab, np.array([rho**2]))[0]
                    bound.append(abs(val) * abs(rho) ** len(lab) * math.exp(-abs(rho.imag) * ST))
        bound = np.array(bound)
        growth_ok = bound.max() <= 2.0
        out.ok = weyl_ok and growth_ok
        out.detail = (f"max t |i rho M - 1| {scaled.max():.3f} at t = 20, 40, 80; "
                      f"scaled |Delta| in [{bound.min():.2f}, {bound.max():.2f}] over {bound.size} samples")


def _compositions(r, N):
    for cut in itertools.combinations(range(1, r), N - 1):
        edges = (0,) + cut + (r,)
        yield [edges[i + 1] - edges[i] for i in range(N)]


def test_11_inventory_count(criterion):
    with criterion(11, "spectra inventory has 2^N + r - N members", 1) as out:
        cases = 0
        bad = []
        for N in range(1, 5):
            for r in range(N, 9):
                for blocks in _compositions(r, N):
                    offsets = np.concatenate([[0], np.cumsum(blocks)])
                    for xi in itertools.product(*(range(offsets[i] + 1, offsets[i + 1] + 1) for i in range(N))):
                        cases += 1
                        labels = spectra_inventory(N, r, xi)
                        if len(labels) != 2**N + r - N or len(set(labels)) != len(labels):
                            bad.append((N, r, xi))
        out.ok = not bad
        out.detail = f"{cases} (N, r, xi) cases, {len(bad)} mismatches"
