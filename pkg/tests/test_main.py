import json

import pytest
from click.testing import CliRunner

from config import settings
from main import SCHEMAS, cli, main


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def two_classes(tmp_path):
    path = tmp_path / "dos.txt"
    path.write_text("universe: 1 2\nR 1 1\nR 2 2\n", encoding="utf-8")
    return str(path)


def test_check_dap_verdicts(runner):
    result = runner.invoke(cli, ["check-dap", "--class", "equiv", "--n", "3", "--json"])
    assert result.exit_code == 1
    verdict = json.loads(result.stdout)
    assert verdict["holds"] is False
    assert verdict["counterexample"]["parts"]

    assert runner.invoke(cli, ["check-dap", "--class", "equiv", "--n", "3", "--upto"]).exit_code == 0
    assert runner.invoke(cli, ["check-dap", "--class", "equiv", "--n", "2"]).exit_code == 0


def test_check_dap_xlsx(runner, tmp_path):
    out = tmp_path / "dap.xlsx"
    result = runner.invoke(cli, ["check-dap", "--class", "equiv2", "--n", "3", "--upto", "--xlsx", str(out)])
    assert result.exit_code == 0
    assert out.exists()


def test_unknown_class_is_an_input_error(runner):
    result = runner.invoke(cli, ["check-dap", "--class", "no_existe", "--n", "2"])
    assert result.exit_code == 2


def test_blurs_of_one_point(runner, tmp_path):
    path = tmp_path / "punto.txt"
    path.write_text("universe: 1\nR 1 1\nS 1 1\n", encoding="utf-8")
    result = runner.invoke(cli, ["blurs", "--class", "two_eq", "--structure", str(path), "--set", "1", "--json"])
    assert result.exit_code == 0
    report = json.loads(result.stdout)
    assert len(report["blurs"]) == 5
    assert report["blurs"][0]["handles"] == []
    result = runner.invoke(cli, ["blurs", "--class", "two_eq", "--structure", str(path), "--set", "1", "--no-empty-blur"])
    assert "4 blurs" in result.stdout


def test_sample_requires_a_seed(runner, two_classes):
    result = runner.invoke(cli, ["sample", "--class", "equiv", "--structure", two_classes, "--rule", "classcoin"])
    assert result.exit_code == 2


def test_sample_rejects_negative_seed(runner, two_classes):
    args = ["sample", "--class", "equiv", "--structure", two_classes, "--rule", "classcoin", "--seed", "-1"]
    assert runner.invoke(cli, args).exit_code == 2


def test_sample_is_deterministic(runner, two_classes):
    args = ["sample", "--class", "equiv", "--structure", two_classes, "--rule", "classcoin", "--seed", "7", "--count", "3", "--json"]
    first = runner.invoke(cli, args)
    assert first.exit_code == 0
    assert first.stdout == runner.invoke(cli, args).stdout
    records = [json.loads(line) for line in first.stdout.splitlines()]
    assert [r["index"] for r in records] == [0, 1, 2]
    assert all(r["structure"].startswith("universe: 1 2\n") for r in records)


def test_sample_with_lifted_rule(runner, two_classes):
    args = ["sample", "--class", "equiv", "--structure", two_classes, "--rule", "classcoin_doubled", "--lift", "--seed", "1", "--json"]
    result = runner.invoke(cli, args)
    assert result.exit_code == 0
    assert json.loads(result.stdout)["rule"] == "classcoin_doubled^r"


def test_eq_symmetry_commands(runner, two_classes):
    base = ["test-eqsym", "--class", "equiv2", "--structure", two_classes, "--seed", "0"]
    assert runner.invoke(cli, base + ["--rule", "twoclass_pick"]).exit_code == 0
    result = runner.invoke(cli, base + ["--rule", "twoclass_pick_bad", "--json"])
    assert result.exit_code == 1
    assert json.loads(result.stdout)["worst_tv_exact"] == "1/2"
    assert runner.invoke(cli, base + ["--rule", "no_existe"]).exit_code == 2


def test_exchangeability_command(runner):
    args = ["test-exch", "--class", "equiv", "--rule", "elem_one", "--n", "2", "--seed", "1", "--samples", "2000", "--json"]
    result = runner.invoke(cli, args)
    assert result.exit_code == 1
    assert json.loads(result.stdout)["passed"] is False


def test_eliminate_writes_manifest(runner, tmp_path):
    out = tmp_path / "etapas"
    result = runner.invoke(cli, ["eliminate", "--class", "equiv2", "--out", str(out), "--json"])
    assert result.exit_code == 0
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest == json.loads(result.stdout)
    assert manifest["stages"][0]["spec_file"] == "1_r.kspec"
    assert (out / "1_r.kspec").exists()


def test_eliminate_refuses_independent_relations(runner):
    assert runner.invoke(cli, ["eliminate", "--class", "two_eq"]).exit_code == 2


def test_ap_demo_exports(runner, tmp_path):
    csv = tmp_path / "array.csv"
    args = ["ap-demo", "--depths", "2", "--mix", "coord_parity", "--seed", "1", "--samples", "300", "--csv", str(csv), "--json"]
    result = runner.invoke(cli, args)
    assert result.exit_code == 1
    assert json.loads(result.stdout)["passed"] is False
    assert csv.exists()


def test_schemas_command(runner, tmp_path):
    result = runner.invoke(cli, ["schemas", "--out", str(tmp_path)])
    assert result.exit_code == 0
    assert f"{len(SCHEMAS)} esquemas" in result.stdout
    assert len(list(tmp_path.glob("*.schema.json"))) == 11


@pytest.mark.parametrize("name", sorted(SCHEMAS))
def test_shipped_schemas_are_current(name):
    shipped = json.loads((settings.schema_path / f"{name}.schema.json").read_text(encoding="utf-8"))
    schema = SCHEMAS[name].model_json_schema()
    assert shipped["title"] == schema["title"]
    assert shipped.get("required", []) == schema.get("required", [])
    assert set(shipped["properties"]) == set(schema["properties"])


def test_main_returns_exit_codes():
    assert main(["check-dap", "--class", "equiv", "--n", "2"]) == 0
    assert main(["check-dap", "--class", "equiv", "--n", "3"]) == 1
    assert main(["sample", "--class", "equiv"]) == 2
