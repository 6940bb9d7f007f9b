"""Command line behavior, driven in-process through main()."""

import subprocess
import sys

import pytest

from lamapf.cli import EXIT_CONFIG, EXIT_INVALID, EXIT_OK, main
from lamapf.gridmap import load_instance


def _gen(tmp_path, agents=2, seed=5, map_name="empty-8-8"):
    inst = tmp_path / "inst.txt"
    rc = main(["gen", "--map", map_name, "--agents", str(agents),
               "--seed", str(seed), "--out", str(inst)])
    assert rc == EXIT_OK
    return inst


def test_gen_writes_loadable_instance(tmp_path, capsys):
    inst = _gen(tmp_path, agents=3, seed=0)
    out = capsys.readouterr().out
    assert "3 agents" in out
    grid, agents = load_instance(inst)
    assert grid.width == 8 and len(agents) == 3


def test_gen_unknown_map(tmp_path):
    rc = main(["gen", "--map", "no-such-map", "--agents", "2",
               "--out", str(tmp_path / "x.txt")])
    assert rc == EXIT_CONFIG


def test_missing_required_flag(tmp_path):
    assert main(["gen", "--map", "empty-8-8", "--agents", "2"]) == EXIT_CONFIG
    assert main(["solve"]) == EXIT_CONFIG
    assert main([]) == EXIT_CONFIG


def test_unknown_method(tmp_path):
    inst = _gen(tmp_path)
    rc = main(["solve", "--instance", str(inst), "--method", "magic"])
    assert rc == EXIT_CONFIG


def test_missing_instance_file(tmp_path):
    rc = main(["solve", "--instance", str(tmp_path / "nope.txt")])
    assert rc == EXIT_CONFIG


def test_decompose_report(tmp_path, capsys):
    inst = _gen(tmp_path)
    rc = main(["decompose", "--instance", str(inst)])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert "agents" in out and "level 0" in out


def test_decompose_report_to_file(tmp_path):
    inst = _gen(tmp_path)
    report = tmp_path / "report.txt"
    rc = main(["decompose", "--instance", str(inst), "--out", str(report)])
    assert rc == EXIT_OK
    assert "cluster 0" in report.read_text()


@pytest.mark.parametrize("method", ["raw-cbs", "layered-cbs", "layered-parallel"])
def test_solve_then_validate(tmp_path, capsys, method):
    inst = _gen(tmp_path)
    plan = tmp_path / "plan.txt"
    rc = main(["solve", "--instance", str(inst), "--method", method,
               "--budget-s", "30", "--out", str(plan)])
    assert rc == EXIT_OK
    assert "status solved" in capsys.readouterr().err
    assert plan.exists()

    rc = main(["validate", "--instance", str(inst), "--plan", str(plan)])
    assert rc == EXIT_OK
    assert "valid" in capsys.readouterr().out


def test_validate_rejects_truncated_plan(tmp_path, capsys):
    inst = _gen(tmp_path)
    plan = tmp_path / "plan.txt"
    assert main(["solve", "--instance", str(inst), "--out", str(plan)]) == EXIT_OK
    lines = plan.read_text().splitlines()
    # drop the final pose of the first agent so it no longer ends at its target
    head, _, poses = lines[0].partition(": ")
    tokens = poses.split()
    assert len(tokens) > 1
    lines[0] = f"{head}: {' '.join(tokens[:-1])}"
    plan.write_text("\n".join(lines) + "\n")

    rc = main(["validate", "--instance", str(inst), "--plan", str(plan)])
    assert rc == EXIT_INVALID
    assert "invalid" in capsys.readouterr().err


def test_validate_rejects_garbage_plan(tmp_path, capsys):
    inst = _gen(tmp_path)
    plan = tmp_path / "plan.txt"
    plan.write_text("0: not-a-pose\n")
    rc = main(["validate", "--instance", str(inst), "--plan", str(plan)])
    assert rc == EXIT_INVALID


def test_solve_timeout_reports_status(tmp_path, capsys):
    inst = _gen(tmp_path)
    plan = tmp_path / "plan.txt"
    rc = main(["solve", "--instance", str(inst), "--budget-s", "1e-9",
               "--out", str(plan)])
    assert rc == EXIT_OK
    assert "status timeout" in capsys.readouterr().err
    assert not plan.exists()


def test_bench_writes_csv(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    rc = main(["bench", "--map", "empty-8-8", "--agents", "2", "--reps", "1",
               "--method", "raw-cbs", "--budget-s", "10", "--seed", "5",
               "--out", str(out)])
    assert rc == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("map,agents,method,success")
    assert len(lines) == 2


def test_bench_stdout_when_no_out(capsys):
    rc = main(["bench", "--map", "empty-8-8", "--agents", "2", "--reps", "0"])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("map,agents,method,success")


def test_bench_rejects_bad_worker_count():
    rc = main(["bench", "--map", "empty-8-8", "--agents", "2", "--reps", "0",
               "--workers", "0"])
    assert rc == EXIT_CONFIG


def test_help_exits_zero():
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0


def test_module_invocation():
    proc = subprocess.run(
        [sys.executable, "-m", "lamapf.cli", "--help"],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
    assert "gen" in proc.stdout and "bench" in proc.stdout
