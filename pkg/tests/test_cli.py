import json

import numpy as np
import pytest

from sigmaspace import io as sio
from sigmaspace.cli import main
from sigmaspace.metric import random_point, tree_from_sigma
from sigmaspace.nesting import LeafMap

INTERLEAVED = {"host": "((A:1,B:1):2,C:3);", "parasite": "((1:1.5,2:1.5):2,3:3.5);", "leaf_map": "1:A,2:B,3:C"}
DECOUPLED = {"host": "((A:1,B:1):2,C:3);", "parasite": "((1:3.5,3:3.5):0.5,2:4);", "leaf_map": "1:A,2:B,3:C"}
INCOMPATIBLE = {"host": "(A:2,B:2);", "parasite": "(1:1,2:1);", "leaf_map": "1:A,2:B"}


@pytest.fixture
def files(tmp_path):
    out = {}
    for name, data in [("a", INTERLEAVED), ("b", DECOUPLED), ("bad", INCOMPATIBLE)]:
        out[name] = tmp_path / f"{name}.json"
        out[name].write_text(json.dumps(data))
    out["mal"] = tmp_path / "mal.json"
    out["mal"].write_text('{"host": "(A:1,B:1);" "parasite"')
    return out


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_validate_exit_codes(capsys, files):
    code, out, _ = run(capsys, "validate", files["a"])
    assert code == 0 and out.startswith("compatible; sequence H P^c H P^c")
    code, _, err = run(capsys, "validate", files["bad"])
    assert code == 2 and "1,2" in err and "2" in err
    code, _, err = run(capsys, "validate", files["mal"])
    assert code == 1 and "position" in err


def test_validate_json(capsys, files):
    code, out, _ = run(capsys, "validate", "--json", files["a"])
    data = json.loads(out)
    assert data["sequence"] == ["H", "P^c", "H", "P^c"] and data["potential"] == [2, 4]
    code, out, _ = run(capsys, "validate", "--json", files["bad"])
    assert code == 2 and json.loads(out)["pair"] == ["1", "2"]


def test_enumerate_example(capsys):
    code, out, _ = run(capsys, "enumerate", "-n", 2, "-m", 3, "--map", "1:A,2:A,3:B")
    assert code == 0 and out.strip() == "4 orthants: PHP×1, HPP×3"


def test_enumerate_all_types_and_bound(capsys, monkeypatch):
    code, out, _ = run(capsys, "enumerate", "-n", 3, "-m", 2)
    assert code == 0 and len(out.strip().splitlines()) == 2
    code, _, err = run(capsys, "enumerate", "--map", "1:A,2:B,3:C", "--bound", 5)
    assert code == 3 and "bound" in err
    monkeypatch.setenv("SIGMA_SPACE_BOUND", "5")
    assert run(capsys, "enumerate", "--map", "1:A,2:B,3:C")[0] == 3


def test_check_and_link(capsys, tmp_path):
    code, out, _ = run(capsys, "check", "--3cycle", "--map", "1:A,2:B,3:C")
    assert code == 0 and out.strip() == "no 3-cycles: PASS"
    code, out, _ = run(capsys, "check", "--cube", "--map", "1:A,2:A,3:B")
    assert code == 0 and out.strip() == "cube condition: PASS"
    svg = tmp_path / "link.svg"
    code, out, _ = run(capsys, "link", "--map", "1:A,2:B,3:C", "--svg", svg, "--dot", tmp_path / "l.dot")
    assert code == 0 and out.startswith("12 vertices")
    assert svg.exists() and (tmp_path / "l.dot").read_text().startswith("graph")


def test_dist_and_geodesic(capsys, files, tmp_path):
    code, out, _ = run(capsys, "dist", files["a"], files["a"])
    assert code == 0 and float(out) == 0.0
    code, exact, _ = run(capsys, "dist", files["a"], files["b"], "--path", tmp_path / "g.json")
    code, cone, _ = run(capsys, "dist", files["a"], files["b"], "--method", "cone")
    assert float(cone) >= float(exact) > 0
    assert exact.strip() == f"{float(exact):.12g}"
    g = json.loads((tmp_path / "g.json").read_text())
    assert g["length"] == pytest.approx(float(exact), rel=1e-11)
    code, out, _ = run(capsys, "geodesic", "--json", files["a"], files["b"], "--samples", 4)
    assert len(json.loads(out)["samples"]) == 4
    other = tmp_path / "other.json"
    other.write_text(json.dumps({"host": "(A:1,B:1);", "parasite": "((1:1,2:1):1,3:2);",
                                 "leaf_map": "1:A,2:A,3:B"}))
    code, _, err = run(capsys, "dist", files["a"], other)
    assert code == 2 and "type mismatch" in err


def test_dist_same_orthant_is_euclidean(capsys, tmp_path):
    lm = LeafMap.parse("1:A,2:B,3:C")
    rng = np.random.default_rng(3)
    p = random_point(lm, rng)
    q_sigma = np.asarray(p.sigma) + rng.uniform(0, 0.5, 4)
    for name, s in (("p", p.sigma), ("q", q_sigma)):
        sio.write_bundle(tmp_path / f"{name}.json", tree_from_sigma(p.orthant, s))
    code, out, _ = run(capsys, "dist", tmp_path / "p.json", tmp_path / "q.json")
    assert code == 0 and float(out) == pytest.approx(float(np.linalg.norm(q_sigma - np.asarray(p.sigma))), rel=1e-10)


def test_cone_never_below_exact(capsys, tmp_path):
    lm = LeafMap.parse("1:A,2:A,3:B")
    rng = np.random.default_rng(8)
    for i in range(10):
        a, b = random_point(lm, rng), random_point(lm, rng)
        sio.write_bundle(tmp_path / "a.json", tree_from_sigma(a.orthant, a.sigma))
        sio.write_bundle(tmp_path / "b.json", tree_from_sigma(b.orthant, b.sigma))
        exact = float(run(capsys, "dist", tmp_path / "a.json", tmp_path / "b.json")[1])
        cone = float(run(capsys, "dist", tmp_path / "a.json", tmp_path / "b.json", "--method", "cone")[1])
        assert cone >= exact - 1e-9


def test_seq_forget_cospec_mean(capsys, files, tmp_path):
    assert run(capsys, "seq", files["b"])[1].strip() == "H H P^c P^d"
    assert run(capsys, "seq", "--plain", files["b"])[1].strip() == "HHPP"
    code, out, _ = run(capsys, "forget", "--json", files["b"])
    data = json.loads(out)
    assert data["host"] == "((A:1,B:1):2,C:3);"
    code, out, _ = run(capsys, "cospec", files["a"])
    assert "potential: [2, 4]" in out
    code, out, _ = run(capsys, "cospec", "--map", "1:A,2:B,3:C")
    assert out.startswith("3 faces")
    code, out, _ = run(capsys, "mean", files["a"], files["b"], "--restarts", 2, "-o", tmp_path / "m.json")
    assert code == 0
    mean = sio.load_nested(tmp_path / "m.json")
    assert json.loads(out)["leaf_map"] == {"1": "A", "2": "B", "3": "C"}
    assert mean.leaf_map == LeafMap.parse("1:A,2:B,3:C")


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as err:
        main(["enumerate", "--nope"])
    assert err.value.code == 1
    assert run(capsys, "enumerate")[0] == 1


def test_deterministic(capsys, files):
    first = run(capsys, "geodesic", "--json", files["a"], files["b"])[1]
    assert run(capsys, "geodesic", "--json", files["a"], files["b"])[1] == first


def test_global_flags_before_or_after_command(capsys, files):
    before = run(capsys, "--json", "dist", files["a"], files["b"])[1]
    after = run(capsys, "dist", "--json", files["a"], files["b"])[1]
    assert json.loads(before) == json.loads(after)
    assert run(capsys, "--bound", 5, "enumerate", "--map", "1:A,2:B,3:C")[0] == 3
