import json

import numpy as np
import pytest

from hedgehog import cli, jsonio

FIXTURE = "n2r2_kirchhoff"


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def job(workdir):
    doc = json.loads(cli._fixture_path(FIXTURE + ".json").read_text())
    doc["config"] = {"n_max": 40}
    path = workdir / "job.json"
    jsonio.write(path, doc)
    return path


@pytest.fixture(scope="module")
def dataset(job, workdir):
    out = workdir / "job.dataset.json"
    assert cli.main(["forward", str(job), "-o", str(out)]) == 0
    return out


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_forward_writes_dataset_and_csv(dataset, workdir):
    doc = json.loads(dataset.read_text())
    assert doc["kind"] == "spectral_dataset" and doc["n_max"] >= 40
    csvs = sorted(workdir.glob("job.dataset.*.csv"))
    assert len(csvs) == len(doc["spectra"]) == 4
    rows = np.loadtxt(csvs[0], delimiter=",", skiprows=1)
    assert rows.shape[1] == 4 and np.all(np.diff(rows[:, 1]) >= 0)
    # deterministic output
    again = workdir / "again.json"
    assert cli.main(["forward", str(workdir / "job.json"), "-o", str(again)]) == 0
    assert again.read_bytes() == dataset.read_bytes()


def test_forward_lambda_window(job, workdir):
    out = workdir / "window.json"
    assert cli.main(["forward", str(job), "--lambda-window", "0:150", "-o", str(out)]) == 0
    for spec in json.loads(out.read_text())["spectra"].values():
        re = np.array([e["re"] for e in spec["eigenvalues"]])
        assert re.size and np.all((re >= 0) & (re <= 150))


@pytest.mark.parametrize(
    "edit, path",
    [
        (lambda d: d["graph"].__setitem__("alpha", [0, 1, 1, 1]), "graph.alpha[0]"),
        (lambda d: d["graph"].pop("beta"), "graph.beta"),
        (lambda d: d["potential"].pop(), "potential"),
        (lambda d: d.__setitem__("config", {"n_max": "x"}), "config.n_max"),
    ],
)
def test_forward_schema_errors(job, workdir, capsys, edit, path):
    doc = json.loads(job.read_text())
    edit(doc)
    bad = workdir / "bad.json"
    jsonio.write(bad, doc)
    assert cli.main(["forward", str(bad), "-o", str(workdir / "x.json")]) == 2
    assert _error(capsys)["path"] == path


def test_forward_non_regular(job, workdir, capsys):
    doc = json.loads(job.read_text())
    doc["config"]["regularity_threshold"] = 1e9
    bad = workdir / "nonreg.json"
    jsonio.write(bad, doc)
    assert cli.main(["forward", str(bad), "-o", str(workdir / "x.json")]) == 3
    assert _error(capsys)["error"] == "NonRegularGraphError"


def test_missing_file_and_bad_json(workdir, capsys):
    assert cli.main(["forward", str(workdir / "nope.json")]) == 2
    (workdir / "broken.json").write_text("{")
    assert cli.main(["forward", str(workdir / "broken.json")]) == 2
    assert _error(capsys)["error"] == "JSONDecodeError"


def test_inverse_missing_spectrum(dataset, workdir, capsys):
    doc = json.loads(dataset.read_text())
    doc["spectra"].pop("Lambda_1_2")
    bad = workdir / "short.json"
    jsonio.write(bad, doc)
    assert cli.main(["inverse", str(bad), "-o", str(workdir / "r.json")]) == 2
    assert _error(capsys)["path"] == "spectra.Lambda_1_2"


def test_ip0_only_requires_boundary(dataset, workdir, capsys):
    assert cli.main(["inverse", str(dataset), "--stage", "ip0-only", "-o", str(workdir / "r.json")]) == 2
    assert "boundary" in _error(capsys)["message"]


def test_stage_failure_writes_partial(dataset, workdir, capsys):
    cfg = workdir / "big.json"
    jsonio.write(cfg, {"n_max": 500})
    out = workdir / "fail.json"
    assert cli.main(["inverse", str(dataset), "--config", str(cfg), "-o", str(out)]) == 5
    partial = json.loads((workdir / "fail.json.partial").read_text())
    assert partial["failed_stage"] == "products"


def test_verify_exit_codes(job, workdir, capsys):
    out = workdir / "verification.json"
    assert cli.main(["verify", str(job), str(job), "--no-data-check", "-o", str(out)]) == 0
    assert json.loads(out.read_text())["pass"] is True
    doc = json.loads(job.read_text())
    doc["potential"][3]["coefficients"][0] += 0.1
    doc["graph"]["h"][1] += 0.01
    bad = workdir / "corrupt.json"
    jsonio.write(bad, doc)
    assert cli.main(["verify", str(job), str(bad), "--no-data-check", "-o", str(out)]) == 1
    assert "FAIL: edge 4, h_2" in capsys.readouterr().out


def test_inverse_ip0_only(dataset, job, workdir):
    cfg = workdir / "cfg.json"
    jsonio.write(cfg, {"n_max": 40, "global_passes": 1})
    out = workdir / "rec.json"
    rc = cli.main(["inverse", str(dataset), "--stage", "ip0-only", "--boundary", str(job),
                   "--config", str(cfg), "--no-data-check", "-o", str(out)])
    assert rc == 0
    rec = json.loads(out.read_text())
    assert rec["kind"] == "graph_reconstruction"
    truth = json.loads(job.read_text())
    np.testing.assert_allclose(rec["graph"]["h"], truth["graph"]["h"], atol=1e-3)
    assert (workdir / "rec.edge3.csv").is_file()
    assert "overall: pass" in (workdir / "rec.report.txt").read_text()
