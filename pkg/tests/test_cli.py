"""CLI: exit codes, outputs and report artifacts."""

import json
import subprocess
import sys

import pytest

from entityflow.cli import main
from entityflow.compiler import program_path

SCRIPT = """\
# create an item and a user, then buy
Item "apple" __init__ ["apple", 10]
Item "apple" update_stock [5]
User 1 __init__ [1]
User 1 buy_item [2, {"@ref": ["Item", "apple"]}]
Item "apple" enough_stock []
"""


def _lines(out):
    return [json.loads(line) for line in out.strip().splitlines()]


def test_compile_ok_and_artifacts(tmp_path, capsys):
    ir_path = tmp_path / "shop.json"
    assert main(["compile", str(program_path("shop")), "--ir", str(ir_path), "--emit-dot", str(tmp_path / "dot")]) == 0
    assert "ok: 2 operator(s)" in capsys.readouterr().out
    assert json.loads(ir_path.read_text())["version"] == "entityflow-ir/1"
    dots = sorted(p.name for p in (tmp_path / "dot").iterdir())
    assert "dataflow.dot" in dots and any("buy_item" in d for d in dots)


def test_compile_untyped_param_exits_1(tmp_path, capsys):
    src = program_path("shop").read_text().replace("amount: int, item: Item", "amount, item: Item")
    bad = tmp_path / "bad.sf"
    bad.write_text(src)
    assert main(["compile", str(bad)]) == 1
    assert "E020" in capsys.readouterr().err


def test_compile_missing_file_is_usage_error(tmp_path):
    assert main(["compile", str(tmp_path / "none.sf")]) == 2


def test_run_script_local(tmp_path, capsys):
    script = tmp_path / "s.txt"
    script.write_text(SCRIPT)
    assert main(["run", str(script), "--ir", "shop"]) == 0
    out = _lines(capsys.readouterr().out)
    assert out[-2:] == [20, True]
    assert len(out) == 5


def test_run_script_errors_exit_1(tmp_path, capsys):
    script = tmp_path / "s.txt"
    script.write_text(SCRIPT + "User 1 fly []\nnot a valid line\n")
    assert main(["run", str(script), "--ir", "shop"]) == 1
    out = _lines(capsys.readouterr().out)
    assert "error" in out[-2] and "error" in out[-1] and "line 8" in out[-1]["error"]


def test_run_on_cluster_matches_local(tmp_path, capsys):
    script = tmp_path / "s.txt"
    script.write_text(SCRIPT)
    assert main(["run", str(script), "--ir", "shop"]) == 0
    local = capsys.readouterr().out
    assert main(["run", str(script), "--ir", "shop", "--partitions", "4", "--workers", "2", "--backend", "thread"]) == 0
    assert capsys.readouterr().out == local


def test_bench_report_files(tmp_path, capsys):
    report = tmp_path / "b.json"
    rc = main(["bench", "--rate", "1", "--duration", "3", "--seed", "1", "--backend", "thread", "--partitions", "2", "--workers", "2", "--report", str(report)])
    assert rc == 0
    data = json.loads(report.read_text())
    assert data["workload"]["requests"] == 3
    assert data["exactly_once"]["replies_balanced"]
    for suffix in ("_latency.csv", "_latency.png", "_stages.png"):
        assert (tmp_path / f"b{suffix}").stat().st_size > 0
    assert (tmp_path / "b_latency.csv").read_text().splitlines()[0] == "index,endpoint,latency_ms,ok"


def test_bench_bad_mix_is_usage_error():
    assert main(["bench", "--mix", "search=0.5", "--requests", "1"]) == 2


def test_overhead_command(tmp_path, capsys):
    report = tmp_path / "o.json"
    assert main(["overhead", "--sizes", "1", "--events", "300", "--report", str(report)]) == 0
    data = json.loads(report.read_text())
    assert data["rows"][0]["events"] >= 300
    assert (tmp_path / "o.csv").exists() and (tmp_path / "o.png").exists()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "entityflow", "compile", str(program_path("hotel"))], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


@pytest.mark.parametrize("argv", [["frobnicate"], ["run"]])
def test_argparse_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
