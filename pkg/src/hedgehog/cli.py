"""Command-line front end: ``hedgehog forward | inverse | verify``.

Exit codes: 0 success, 1 verification failed, 2 invalid input (schema, field
values, missing spectra), 3 non-regular matching conditions, 4 numerical
failure, 5 inverse stage failure (partial outputs written with ``.partial``).
Errors are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_SCHEMA, EXIT_NON_REGULAR, EXIT_NUMERIC, EXIT_STAGE = 0, 1, 2, 3, 4, 5
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class _Fail(Exception):
    def __init__(self, code, payload):
        self.code = code
        self.payload = payload


def _cap_threads(n):
    # BLAS pools read these once, when numpy is first imported
    if n is not None:
        for var in _THREAD_VARS:
            os.environ[var] = str(n)


def _fixture_path(name):
    res = resources.files("hedgehog") / "fixtures" / name
    return res if res.is_file() else None


def _load(path, what):
    p = Path(path)
    if not p.is_file():
        bundled = _fixture_path(p.name if p.suffix else p.name + ".json")
        if bundled is None:
            raise _Fail(EXIT_SCHEMA, {"error": "FileNotFound", "message": f"{what} {path} not found"})
        text = bundled.read_text()
    else:
        text = p.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise _Fail(EXIT_SCHEMA, {"error": "JSONDecodeError", "message": f"{what}: {exc}"}) from None


def _window(text):
    try:
        lo, hi = (float(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo:hi") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("need lo < hi")
    return lo, hi


def _stem(out: Path) -> Path:
    name = out.name
    if name.endswith(".json"):
        name = name[: -len(".json")]
    return out.with_name(name)


def _config(doc, args):
    from .pipeline import PipelineConfig

    cfg = PipelineConfig.from_dict(doc).with_env()
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "lambda_window", None) is not None:
        cfg.lambda_window = args.lambda_window
    return cfg


# --- commands ---------------------------------------------------------------


def cmd_forward(args) -> int:
    import numpy as np

    from . import jsonio
    from .graph import label_name
    from .pipeline import forward_generate, truth_from_job

    job = _load(args.job, "job")
    truth = truth_from_job(job)
    cfg = _config(job.get("config") if isinstance(job, dict) else None, args)
    data = forward_generate(truth.graph, truth.potential(cfg.density), cfg)
    out = Path(args.output or Path(args.job).with_suffix("").name + ".dataset.json")
    jsonio.write(out, data.to_dict())
    stem = _stem(out)
    for lab in data.labels:
        spec = data.spectra[lab]
        rows = np.column_stack([np.arange(1, len(spec.values) + 1), spec.values.real,
                                spec.values.imag, spec.multiplicities])
        np.savetxt(f"{stem}.{label_name(lab)}.csv", rows, delimiter=",", fmt=["%d", "%.17g", "%.17g", "%d"],
                   header="n,re,im,multiplicity", comments="")
    print(f"{out}: {len(data.labels)} spectra, {data.n_max} eigenvalues each (at least)")
    return EXIT_OK


def _report_text(rec, verification) -> str:
    lines = ["hedgehog inverse report", ""]
    lines.append("stages:")
    for name, status in rec.stages.items():
        lines.append(f"  {name:<13} {status}")
    diag = rec.diagnostics
    lines.append("")
    lines.append("residuals:")
    for k, d in sorted(diag.get("edges", {}).items()):
        if d:
            lines.append(f"  edge {k}: cost {d.get('cost', float('nan')):.3e}, "
                         f"max M residual {d.get('max_m_residual', float('nan')):.3e}")
    fit = diag.get("cycle", {}).get("weyl_fit")
    if fit:
        lines.append(f"  cycle: Weyl fit cost {fit['cost']:.3e}, max |dz| {fit['max_residual_z']:.3e}")
        lines.append(f"  cycle: h spread {diag['cycle'].get('h_spread', float('nan')):.3e}")
    for lab, spread in diag.get("products", {}).items():
        lines.append(f"  product {lab}: zero offset to reference {spread:.3e}")
    lines.append(f"  global passes: {diag.get('global_passes', 0)}")
    lines.append("")
    lines.append("H = " + ", ".join(f"{h:.10g}" for h in rec.H))
    if verification is not None:
        lines.append("")
        lines.append("data-space check (spectra of the reconstruction vs input):")
        for lab, v in verification["spectra"].items():
            lines.append(f"  {lab:<12} max rel {v['max_rel']:.3e}  {'pass' if v['pass'] else 'FAIL'}")
    ok = all(s == "ok" or s == "given" for s in rec.stages.values())
    if verification is not None:
        ok = ok and all(v["pass"] for v in verification["spectra"].values())
    lines.append("")
    lines.append("overall: " + ("pass" if ok else "FAIL"))
    return "\n".join(lines) + "\n"


def _write_partial(out: Path, exc):
    from . import jsonio

    doc = {"schema_version": jsonio.SCHEMA_VERSION, "kind": "partial_reconstruction",
           "failed_stage": exc.stage, "error": str(exc.cause), "partial": exc.partial}
    path = Path(str(out) + ".partial")
    try:
        jsonio.write(path, doc)
    except TypeError:  # undocumented object in the partial state: keep what serialises
        jsonio.write(path, {**doc, "partial": json.loads(json.dumps(exc.partial, default=repr))})
    return path


def cmd_inverse(args) -> int:
    import numpy as np

    from . import jsonio
    from .errors import StageError
    from .pipeline import SpectralDataset, run_inverse_problem_1, verify_reconstruction

    data = SpectralDataset.from_dict(_load(args.dataset, "dataset"))
    cfg = _config(_load(args.config, "config") if args.config else None, args)
    boundary = None
    if args.stage == "ip0-only":
        if not args.boundary:
            raise _Fail(EXIT_SCHEMA, {"error": "UsageError", "message": "--stage ip0-only needs --boundary"})
        boundary = _as_reconstruction(_load(args.boundary, "boundary"))
    out = Path(args.output or Path(args.dataset).with_suffix("").name + ".reconstruction.json")
    try:
        rec = run_inverse_problem_1(data, cfg, stage=args.stage, boundary=boundary)
    except StageError as exc:
        path = _write_partial(out, exc)
        raise _Fail(EXIT_STAGE, {"error": "StageError", "stage": exc.stage,
                                 "cause": type(exc.cause).__name__, "message": str(exc.cause),
                                 "partial": str(path)}) from None
    jsonio.write(out, rec.to_dict())
    stem = _stem(out)
    for j, e in enumerate(rec.edges):
        T = float(rec.graph.lengths[j])
        q = e.on_grid(T, cfg.density)
        x = np.linspace(0.0, T, q.size)
        np.savetxt(f"{stem}.edge{j + 1}.csv", np.column_stack([x, q]), delimiter=",", fmt="%.17g",
                   header="x,q", comments="")
    verification = None
    if not args.no_data_check:
        verification = verify_reconstruction(rec, rec, cfg.tolerances, data=data, density=cfg.density)
    report = _report_text(rec, verification)
    Path(f"{stem}.report.txt").write_text(report)
    sys.stdout.write(report)
    return EXIT_OK


def _as_reconstruction(doc):
    from .pipeline import GraphReconstruction, truth_from_job

    kind = doc.get("kind") if isinstance(doc, dict) else None
    return truth_from_job(doc) if kind == "forward_job" else GraphReconstruction.from_dict(doc)


def cmd_verify(args) -> int:
    from . import jsonio
    from .pipeline import SpectralDataset, verify_reconstruction

    original = _as_reconstruction(_load(args.original, "original"))
    recovered = _as_reconstruction(_load(args.recovered, "recovered"))
    cfg = _config(_load(args.config, "config") if args.config else None, args)
    data = SpectralDataset.from_dict(_load(args.dataset, "dataset")) if args.dataset else None
    report = verify_reconstruction(original, recovered, cfg.tolerances, data=data,
                                   data_check=not args.no_data_check, density=cfg.density)
    out = Path(args.output or "verification.json")
    jsonio.write(out, {"schema_version": jsonio.SCHEMA_VERSION, "kind": "verification_report", **report})
    for e in report["edges"]:
        param = "n/a" if e["param"] is None else f"{e['param']:.3e}"
        print(f"edge {e['edge']}: sup {e['sup']:.3e}  l2 {e['l2']:.3e}  param {param}  "
              f"{'pass' if e['pass'] else 'FAIL'}")
    for h in report["H"]:
        print(f"h_{h['edge']}: error {h['error']:.3e}  {'pass' if h['pass'] else 'FAIL'}")
    for lab, v in (report["spectra"] or {}).items():
        print(f"{lab}: max rel {v['max_rel']:.3e}  {'pass' if v['pass'] else 'FAIL'}")
    print("pass" if report["pass"] else "FAIL: " + ", ".join(report["failed"]))
    return EXIT_OK if report["pass"] else EXIT_VERIFY_FAILED


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="log progress (-vv: debug)")
    common.add_argument("--threads", type=int, default=None,
                        help="cap on worker processes and BLAS threads")
    parser = argparse.ArgumentParser(prog="hedgehog", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", parents=[common], help="spectra of a graph (job document -> dataset)")
    p.add_argument("job", help="forward job JSON (or the name of a bundled fixture)")
    p.add_argument("-o", "--output", help="dataset JSON path (default: <job>.dataset.json)")
    p.add_argument("--lambda-window", type=_window, metavar="LO:HI",
                   help="list every eigenvalue in [LO, HI] instead of the n_max lowest")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("inverse", parents=[common], help="reconstruct (Q, H) from a dataset")
    p.add_argument("dataset")
    p.add_argument("--config", help="pipeline configuration JSON")
    p.add_argument("-o", "--output", help="reconstruction JSON path")
    p.add_argument("--stage", choices=("all", "ip0-only"), default="all")
    p.add_argument("--boundary", help="reconstruction or forward job JSON supplying boundary edges (ip0-only)")
    p.add_argument("--no-data-check", action="store_true", help="skip recomputing the spectra")
    p.set_defaults(func=cmd_inverse)

    p = sub.add_parser("verify", parents=[common], help="compare two (Q, H) documents")
    p.add_argument("original", help="forward job or reconstruction JSON")
    p.add_argument("recovered", help="reconstruction JSON")
    p.add_argument("--dataset", help="compare spectra against this dataset instead of recomputing")
    p.add_argument("--config", help="configuration JSON (tolerances)")
    p.add_argument("--no-data-check", action="store_true")
    p.add_argument("-o", "--output", help="report JSON path (default: verification.json)")
    p.set_defaults(func=cmd_verify)
    return parser


def _classify(exc):
    from .errors import GraphValidationError, NonRegularGraphError

    if isinstance(exc, GraphValidationError):
        return EXIT_SCHEMA, {"error": "GraphValidationError", "path": exc.path, "message": str(exc)}
    if isinstance(exc, NonRegularGraphError):
        return EXIT_NON_REGULAR, {"error": "NonRegularGraphError", "message": str(exc)}
    return EXIT_NUMERIC, {"error": type(exc).__name__, "message": str(exc)}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _cap_threads(args.threads)
    if args.verbose:
        import logging

        logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO,
                            format="%(relativeCreated)8.0f %(name)s %(message)s")
    try:
        return args.func(args)
    except _Fail as f:
        code, payload = f.code, f.payload
    except Exception as exc:  # noqa: BLE001 - every failure maps to an exit code
        from .errors import HedgehogError

        if not isinstance(exc, (HedgehogError, ArithmeticError, ValueError)) and \
                type(exc).__name__ != "LinAlgError":
            raise
        code, payload = _classify(exc)
    sys.stderr.write(json.dumps({"exit_code": code, **payload}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
