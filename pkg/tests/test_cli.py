import json
from types import SimpleNamespace

import pytest

from moma import dumps, serialize_model
from moma.cli import main


@pytest.fixture
def ws(tmp_path, fig1):
    """Workspace with the example model on disk and a query-file factory."""
    model = tmp_path / "model.json"
    model.write_text(dumps(serialize_model(fig1)), encoding="utf-8")
    counter = [0]

    def query(kind="pareto", **extra):
        doc = {"format": "moma-query", "version": 1, "kind": kind,
               "objectives": [
                   {"kind": "lra", "direction": "max", "reward": "R1"},
                   {"kind": "total", "direction": "max", "reward": "R2"}]}
        doc.update(extra)
        counter[0] += 1
        path = tmp_path / f"query{counter[0]}.json"
        path.write_text(dumps(doc), encoding="utf-8")
        return str(path)

    return SimpleNamespace(model=str(model), query=query, dir=tmp_path)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestValidate:
    def test_ok(self, ws, capsys):
        code, out, _ = run(capsys, "validate", ws.model)
        assert code == 0
        assert out.strip() == "ok"

    def test_broken_model(self, ws, capsys):
        doc = json.loads((ws.dir / "model.json").read_text())
        doc["states"][0]["transitions"] = {"s2": 0.5}
        bad = ws.dir / "bad.json"
        bad.write_text(dumps(doc), encoding="utf-8")
        code, out, _ = run(capsys, "validate", str(bad))
        assert code == 2
        assert "sum" in out

    def test_with_query_checks_assumptions(self, ws, capsys):
        code, out, _ = run(capsys, "validate", ws.model, "--query", ws.query())
        assert code == 0
        assert out.strip() == "ok"

    def test_missing_file(self, capsys):
        code, _, err = run(capsys, "validate", "/does/not/exist.json")
        assert code == 2
        assert "error:" in err

    def test_invalid_json(self, ws, capsys):
        bad = ws.dir / "garbage.json"
        bad.write_text("{not json", encoding="utf-8")
        code, _, err = run(capsys, "validate", str(bad))
        assert code == 2
        assert "not valid JSON" in err


class TestSingle:
    def test_values(self, ws, capsys):
        code, out, _ = run(capsys, "single", ws.model, "--query", ws.query())
        assert code == 0
        doc = json.loads(out)
        assert doc["kind"] == "single"
        values = {v["objective"]["reward"]: v["value"] for v in doc["values"]}
        assert values["R1"] == pytest.approx(4.0, abs=1e-6)
        assert values["R2"] == pytest.approx(0.0, abs=1e-6)
        assert all(v["error_bound"] <= 1e-5 for v in doc["values"])
        assert doc["statistics"]["zero_ecs"] == 2

    def test_strategies_flag(self, ws, capsys):
        code, out, _ = run(capsys, "single", ws.model, "--query", ws.query(),
                           "--strategies")
        assert code == 0
        doc = json.loads(out)
        assert all("strategy" in v for v in doc["values"])

    def test_query_is_required(self, ws, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["single", ws.model])
        assert exc.value.code == 2


class TestCheck:
    def test_point_yes(self, ws, capsys):
        code, out, _ = run(capsys, "check", ws.model, "--query", ws.query(),
                           "--point", "3.5,-1")
        assert code == 0
        doc = json.loads(out)
        assert doc["kind"] == "achievability"
        assert doc["verdict"] == "yes"
        assert doc["query"]["point"] == [3.5, -1.0]

    def test_point_no(self, ws, capsys):
        code, out, _ = run(capsys, "check", ws.model, "--query", ws.query(),
                           "--point", "4,0")
        assert code == 0
        assert json.loads(out)["verdict"] == "no"

    def test_point_arity(self, ws, capsys):
        code, _, err = run(capsys, "check", ws.model, "--query", ws.query(),
                           "--point", "1.0")
        assert code == 2
        assert "one value per objective" in err

    def test_thresholds(self, ws, capsys):
        code, out, _ = run(capsys, "check", ws.model, "--query", ws.query(),
                           "--thresholds", "0")
        assert code == 0
        doc = json.loads(out)
        assert doc["kind"] == "quantitative"
        assert doc["lower"] <= 3.0 <= doc["upper"]
        assert doc["upper"] - doc["lower"] <= 1e-4

    def test_query_file_alone_suffices(self, ws, capsys):
        q = ws.query(kind="achievability", point=[3.0, 0.0])
        code, out, _ = run(capsys, "check", ws.model, "--query", q)
        assert code == 0
        assert json.loads(out)["verdict"] == "yes"

    def test_needs_a_decidable_query(self, ws, capsys):
        code, _, err = run(capsys, "check", ws.model, "--query", ws.query())
        assert code == 2
        assert "--point" in err


class TestPareto:
    def test_stdout_result(self, ws, capsys):
        code, out, _ = run(capsys, "pareto", ws.model, "--query", ws.query())
        assert code == 0
        doc = json.loads(out)
        assert doc["kind"] == "pareto"
        assert len(doc["vertices"]) == 2
        assert not doc["exhausted"]

    def test_output_file_and_determinism(self, ws, capsys):
        out1 = ws.dir / "r1.json"
        out2 = ws.dir / "r2.json"
        code, out, _ = run(capsys, "pareto", ws.model, "--query", ws.query(),
                           "--output", str(out1), "--strategies")
        assert code == 0
        assert out == ""
        code, _, _ = run(capsys, "pareto", ws.model, "--query", ws.query(),
                         "--output", str(out2), "--strategies")
        assert code == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_plot_file(self, ws, capsys):
        plot = ws.dir / "front.csv"
        code, _, _ = run(capsys, "pareto", ws.model, "--query", ws.query(),
                         "--plot", str(plot))
        assert code == 0
        lines = plot.read_text().strip().split("\n")
        assert lines[0] == "coord_1,coord_2,kind"
        assert any(line.endswith("vertex") for line in lines[1:])

    def test_timings_embedded_on_request(self, ws, capsys):
        code, out, _ = run(capsys, "pareto", ws.model, "--query", ws.query())
        assert "timings" not in json.loads(out)
        code, out, _ = run(capsys, "pareto", ws.model, "--query", ws.query(),
                           "--timings")
        assert "wall_s" in json.loads(out)["timings"]

    def test_wall_time_goes_to_stderr(self, ws, capsys):
        _, out, err = run(capsys, "pareto", ws.model, "--query", ws.query())
        assert "wall time" in err
        assert "wall time" not in out

    def test_exhausted_budget_exits_1(self, ws, capsys):
        code, out, _ = run(capsys, "pareto", ws.model, "--query", ws.query(),
                           "--max-iterations", "1")
        assert code == 1
        assert json.loads(out)["exhausted"]

    def test_precision_override_is_echoed(self, ws, capsys):
        code, out, _ = run(capsys, "pareto", ws.model, "--query", ws.query(),
                           "--precision", "0.01")
        assert code == 0
        assert json.loads(out)["query"]["precision"] == 0.01

    def test_assumption_violation_exits_2(self, ws, capsys):
        doc = {"format": "moma-model", "version": 1, "kind": "ma", "initial": "s0",
               "states": [{"name": "s0", "rate": 1.0, "transitions": {"s0": 1.0}}],
               "rewards": [{"name": "R1", "states": {"s0": 1.0}},
                           {"name": "R2", "states": {"s0": 1.0}}]}
        bad = ws.dir / "zeno.json"
        bad.write_text(dumps(doc), encoding="utf-8")
        q = ws.query(objectives=[
            {"kind": "total", "direction": "max", "reward": "R1"},
            {"kind": "total", "direction": "max", "reward": "R2"}])
        code, _, err = run(capsys, "pareto", str(bad), "--query", q)
        assert code == 2
        assert "assumptions" in err
