import csv
import json

import numpy as np
import pytest

from casualcubic import LogisticProblem
from casualcubic.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VALIDATION, main
from casualcubic.data import read_trace_csv


def _cfg(tmp_path, name="run.yaml", **kv):
    path = tmp_path / name
    path.write_text("".join(f"{k}: {json.dumps(v)}\n" for k, v in kv.items()))
    return str(path)


def _rows_without_elapsed(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r.pop("elapsed_s")
    return rows


def test_run_writes_trace_and_sidecar(tmp_path, capsys):
    out = tmp_path / "t.csv"
    cfg = _cfg(tmp_path, problem="logsumexp", n=40, d=10, rho=0.05, method="cacuadgd",
               max_iters=60, out=str(out))
    assert main(["run", "--config", cfg]) == EXIT_OK
    tr = read_trace_csv(str(out))
    # f may only rise on guarded steps: no backtracking, M = H_hat and
    # therefore no decrease test was evaluated
    f, reg, hat = tr.f_values, tr.column("reg_used"), tr.metadata["hat_H"]
    for k in np.flatnonzero(np.diff(f) > 1e-12 * np.abs(f[:-1])):
        assert tr.records[k + 1].backtracks == 0 and reg[k + 1] == hat[k]
    meta = json.loads((tmp_path / "t.csv.meta.json").read_text())
    assert len(meta["input_hash"]) == 64
    assert meta["config"]["method"] == "cacuadgd"
    assert "cacuadgd" in capsys.readouterr().out


def test_run_cacun_uses_estimated_H(tmp_path):
    out = tmp_path / "c.csv"
    cfg = _cfg(tmp_path, problem="separable_logistic", n=100, d=5, method="cacun",
               max_iters=20, out=str(out))
    assert main(["run", "--config", cfg]) == EXIT_OK
    meta = json.loads((tmp_path / "c.csv.meta.json").read_text())
    assert meta["params"]["H"] == pytest.approx(meta["H_estimate"])


def test_run_refuses_overwrite(tmp_path):
    out = tmp_path / "t.csv"
    cfg = _cfg(tmp_path, problem="quadratic", d=4, method="gd", lr=0.5, max_iters=5, out=str(out))
    assert main(["run", "--config", cfg]) == EXIT_OK
    assert main(["run", "--config", cfg]) == EXIT_USAGE
    assert main(["run", "--config", cfg, "--force"]) == EXIT_OK


def test_run_is_deterministic(tmp_path):
    cfg = _cfg(tmp_path, problem="synthetic_logistic", n=80, d=6, l2=1e-3, method="cacusgd",
               L_hat=2.0, H_hat=10.0, max_iters=40, grad_tol=None)
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    assert main(["run", "--config", cfg, "--seed", "7", "--out", a]) == EXIT_OK
    assert main(["run", "--config", cfg, "--seed", "7", "--out", b]) == EXIT_OK
    assert _rows_without_elapsed(a) == _rows_without_elapsed(b)
    c = str(tmp_path / "c.csv")
    assert main(["run", "--config", cfg, "--seed", "8", "--out", c]) == EXIT_OK
    assert _rows_without_elapsed(a) != _rows_without_elapsed(c)


def test_usage_errors(tmp_path):
    bad = _cfg(tmp_path, "bad.yaml", problem="quadratic", d=3, method="nope", out=str(tmp_path / "x.csv"))
    assert main(["run", "--config", bad]) == EXIT_USAGE
    unknown = _cfg(tmp_path, "unk.yaml", problem="quadratic", d=3, method="gd", colour="red")
    assert main(["run", "--config", unknown]) == EXIT_USAGE
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE


def test_runtime_failure_exit_code(tmp_path):
    # the cubic family needs H0 on problems without a structural estimate
    cfg = _cfg(tmp_path, problem="quadratic", d=3, method="cacun", out=str(tmp_path / "x.csv"))
    assert main(["run", "--config", cfg]) == EXIT_USAGE
    cfg = _cfg(tmp_path, "neg.yaml", problem="quadratic", d=3, method="cacun", H0=1.0,
               max_iters=5, out=str(tmp_path / "y.csv"))
    assert main(["run", "--config", cfg]) == EXIT_OK
    import casualcubic.runner as runner

    orig = runner.METHODS["gd"]
    try:
        runner.METHODS["gd"] = lambda c, p, b: (_ for _ in ()).throw(ArithmeticError("boom"))
        cfg = _cfg(tmp_path, "gd.yaml", problem="quadratic", d=3, method="gd", lr=1.0,
                   out=str(tmp_path / "z.csv"))
        assert main(["run", "--config", cfg]) == EXIT_RUNTIME
    finally:
        runner.METHODS["gd"] = orig


def test_validate_clean(tmp_path):
    out = tmp_path / "report.csv"
    assert main(["validate", "--out", str(out)]) == EXIT_OK
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(r["pass"] == "true" for r in rows)
    assert all(r["worst_violation"] for r in rows)


def test_validate_catches_hvp_sign_bug(monkeypatch, capsys):
    orig = LogisticProblem._hvp
    monkeypatch.setattr(LogisticProblem, "_hvp", lambda self, x, v: -orig(self, x, v))
    assert main(["validate"]) == EXIT_VALIDATION
    assert "fd_hvp:logistic" in capsys.readouterr().err


def test_sweep_grid(tmp_path):
    cfg = _cfg(tmp_path, problem="synthetic_logistic", n=50, d=4, l2=1e-3, method="cacusgd",
               L_hat=[1, 10], H_hat=[0.1, 1, 10], seed=[0, 1], max_iters=15, grad_tol=None,
               out=str(tmp_path / "sweep"))
    assert main(["sweep", "--config", cfg]) == EXIT_OK
    traces = sorted(p.name for p in (tmp_path / "sweep").glob("*.csv") if p.name != "summary.csv")
    assert len(traces) == 12
    assert "cacusgd_L10_H0.1_s1.csv" in traces
    with open(tmp_path / "sweep" / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6 and all(r["n_seeds"] == "2" for r in rows)
    assert main(["sweep", "--config", cfg]) == EXIT_USAGE


def test_sweep_parallel_matches_serial(tmp_path):
    kv = dict(problem="synthetic_logistic", n=50, d=4, l2=1e-3, method="sgd", L_hat=[1, 10],
              H_hat=[1], seed=[0, 1], max_iters=10, grad_tol=None)
    a = _cfg(tmp_path, "a.yaml", out=str(tmp_path / "a"), **kv)
    b = _cfg(tmp_path, "b.yaml", out=str(tmp_path / "b"), **kv)
    assert main(["sweep", "--config", a]) == EXIT_OK
    assert main(["sweep", "--config", b, "--jobs", "2"]) == EXIT_OK
    assert (tmp_path / "a" / "summary.csv").read_text() == (tmp_path / "b" / "summary.csv").read_text()


def _two_traces(tmp_path):
    paths = []
    for m in ("cacuadgd", "adgd"):
        out = tmp_path / f"{m}.csv"
        cfg = _cfg(tmp_path, f"{m}.yaml", problem="logsumexp", n=30, d=8, rho=0.25, method=m,
                   max_iters=30, out=str(out))
        assert main(["run", "--config", cfg]) == EXIT_OK
        paths.append(str(out))
    return paths


def test_plot_deterministic(tmp_path):
    paths = _two_traces(tmp_path)
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    assert main(["plot", *paths, "--out", str(a)]) == EXIT_OK
    assert main(["plot", *paths, "--out", str(b)]) == EXIT_OK
    text = a.read_text()
    assert text == b.read_text()
    assert text.count("<polyline") == 2 and "cacuadgd" in text and "adgd" in text
    assert main(["plot", *paths, "--x-axis", "elapsed_s", "--y-axis", "f", "--out",
                 str(tmp_path / "c.svg")]) == EXIT_OK
    assert main(["plot", *paths, "--out", str(a)]) == EXIT_USAGE


def test_plot_errors(tmp_path):
    paths = _two_traces(tmp_path)
    empty = tmp_path / "empty.csv"
    with open(paths[0]) as fh:
        empty.write_text(fh.readline())
    assert main(["plot", str(empty), "--y-axis", "f", "--out", str(tmp_path / "e.svg")]) == EXIT_USAGE
    assert not (tmp_path / "e.svg").exists()
    # a trace without an f* reference cannot be drawn as a gap
    nofs = tmp_path / "nofs.csv"
    nofs.write_text(open(paths[0]).read())
    assert main(["plot", str(nofs), "--out", str(tmp_path / "g.svg")]) == EXIT_USAGE
    assert main(["plot", str(nofs), "--f-star", "0", "--y-axis", "gap", "--out",
                 str(tmp_path / "g.svg")]) == EXIT_OK


def test_info(tmp_path, capsys):
    cfg = _cfg(tmp_path, problem="synthetic_logistic", n=60, d=5, l2=1e-2, method="cacun")
    assert main(["info", "--config", cfg]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert (info["n"], info["d"]) == (60, 5)
    assert info["H_estimate"] > 0 and info["L_bound"] >= info["L_at_x0"] - 1e-12
