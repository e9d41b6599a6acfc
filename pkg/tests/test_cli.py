import json

import pytest

from kidecomp.cli import SCHEMA, main, parse_dims, parse_sizes
from kidecomp.errors import ValidationError
from kidecomp.experiment import experiment_to_json


def write_exp(path, e):
    path.write_text(json.dumps(experiment_to_json(e)))
    return str(path)


def run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_decompose_commuting_pair(tmp_path, capsys, commuting_pair):
    path = write_exp(tmp_path / "e.json", commuting_pair)
    code, out, _ = run(capsys, ["decompose", "--input", path])
    assert code == 0
    rep = json.loads(out)
    assert rep["schema"] == SCHEMA and rep["pass"]
    assert rep["block_dims"] == [[1, 1], [1, 1]]
    assert rep["seed"] == 0 and rep["tolerance"]["rank_cut"] == 1e-9


def test_report_is_deterministic(tmp_path, capsys, pure_pair):
    path = write_exp(tmp_path / "e.json", pure_pair)
    _, a, _ = run(capsys, ["decompose", "--input", path, "--seed", "3"])
    _, b, _ = run(capsys, ["decompose", "--input", path, "--seed", "3"])
    assert a == b


def test_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, out, err = run(capsys, ["decompose", "--input", str(bad)])
    assert code == 1
    assert json.loads(out)["error"]["type"] == "ValidationError"
    assert "not valid JSON" in err


def test_missing_file_and_bad_args(tmp_path, capsys):
    assert run(capsys, ["decompose", "--input", str(tmp_path / "nope.json")])[0] == 1
    assert run(capsys, ["decompose"])[0] == 1
    assert run(capsys, ["frobnicate"])[0] == 1
    assert run(capsys, ["decompose", "--input", "x", "--seed", "-1"])[0] == 1


def test_ambiguous_rank_is_numerical(tmp_path, capsys, commuting_pair):
    path = write_exp(tmp_path / "e.json", commuting_pair)
    code, out, _ = run(capsys, ["decompose", "--input", path, "--tol-rank", "0.5"])
    assert code == 2
    assert json.loads(out)["error"]["type"] == "AmbiguousRank"


def test_gen_planted_bitwise_deterministic(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        target = tmp_path / f"{name}.json"
        code, _, _ = run(capsys, ["gen-planted", "--dims", "[(2,1),(1,2)]", "--labels", "3", "--seed", "7", "--output", str(target)])
        assert code == 0
        outs.append((target.read_bytes(), (tmp_path / f"{name}.truth.json").read_bytes()))
    assert outs[0] == outs[1]


def test_gen_planted_then_decompose(tmp_path, capsys):
    target = tmp_path / "p.json"
    assert run(capsys, ["gen-planted", "--dims", "[(1,4)]", "--labels", "2", "--output", str(target)])[0] == 0
    code, out, _ = run(capsys, ["decompose", "--input", str(target)])
    assert code == 0 and json.loads(out)["block_dims"] == [[1, 4]]


def test_gen_planted_dim_mismatch(capsys):
    code, _, err = run(capsys, ["gen-planted", "--dims", "[(2,1),(1,2)]", "--labels", "2", "--dim", "5"])
    assert code == 1 and "not 5" in err


def test_seed_from_environment(tmp_path, capsys, monkeypatch, commuting_pair):
    path = write_exp(tmp_path / "e.json", commuting_pair)
    monkeypatch.setenv("KIDECOMP_SEED", "42")
    _, out, _ = run(capsys, ["decompose", "--input", path])
    assert json.loads(out)["seed"] == 42
    _, out, _ = run(capsys, ["decompose", "--input", path, "--seed", "5"])
    assert json.loads(out)["seed"] == 5


def test_text_format_and_output_file(tmp_path, capsys, commuting_pair):
    path = write_exp(tmp_path / "e.json", commuting_pair)
    code, out, _ = run(capsys, ["classical", "--input", path, "--format", "text"])
    assert code == 0
    assert out.startswith("classical: PASS") and "q[" in out
    report = tmp_path / "r.json"
    assert run(capsys, ["classical", "--input", path, "--output", str(report)])[1] == ""
    assert json.loads(report.read_text())["pass"]


def test_broadcast_check(tmp_path, capsys, commuting_pair, pure_pair):
    path = write_exp(tmp_path / "c.json", commuting_pair)
    wit = tmp_path / "w.json"
    code, out, _ = run(capsys, ["broadcast-check", "--input", path, "--witness", str(wit)])
    rep = json.loads(out)
    assert code == 0 and rep["broadcastable"] and rep["witness"]["marginal_residual"] <= 1e-9
    assert wit.exists()
    path = write_exp(tmp_path / "p.json", pure_pair)
    code, out, _ = run(capsys, ["broadcast-check", "--input", path])
    assert code == 0 and json.loads(out)["broadcastable"] is False


def test_tensor_check(tmp_path, capsys, commuting_pair, pure_pair):
    a = write_exp(tmp_path / "a.json", commuting_pair)
    b = write_exp(tmp_path / "b.json", pure_pair)
    code, out, _ = run(capsys, ["tensor-check", "--input", a, "--input", b])
    rep = json.loads(out)
    assert code == 0 and rep["product"]["product_dims"] == [[2, 1], [2, 1]]
    assert run(capsys, ["tensor-check", "--input", a])[0] == 1


def test_verify_single_suite(capsys):
    code, out, _ = run(capsys, ["verify", "--suite", "products", "--sizes", "products=3"])
    rep = json.loads(out)
    assert code == 0
    assert [s["suite"] for s in rep["suites"]] == ["products"]


def test_verify_inject_bug(capsys):
    code, out, err = run(capsys, ["verify", "--suite", "conditional", "--sizes", "conditional=2", "--inject-bug"])
    assert code == 3
    assert "ce_idempotence" in err
    assert json.loads(out)["pass"] is False


def test_parse_helpers():
    assert parse_dims("[(2,1),(1,2)]") == [(2, 1), (1, 2)]
    assert parse_dims("(1,4)") == [(1, 4)]
    for bad in ("[(0,1)]", "[]", "[(1,2,3)]", "oops"):
        with pytest.raises(ValidationError):
            parse_dims(bad)
    assert parse_sizes("planted=3, products=2") == {"planted": 3, "products": 2}
    with pytest.raises(ValidationError):
        parse_sizes("bogus=1")


def test_nonfinite_input_rejected(tmp_path, capsys):
    e = {"dim": 1, "labels": ["a"], "states": {"a": {"rows": 1, "cols": 1, "re": [[float("nan")]], "im": [[0.0]]}}}
    path = tmp_path / "nan.json"
    path.write_text(json.dumps(e))
    code, out, err = run(capsys, ["decompose", "--input", str(path)])
    assert code == 1
    assert json.loads(out)["error"]["type"] == "ValidationError"
