import pytest

from clering.cli_harness import (
    EXIT_BUDGET,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VIOLATED,
    ExperimentSpec,
    main,
    sweep,
)
from clering.checkers import in_gamma
from clering.scheduler import run
from clering.topology_config import CONFIG_HEADER, decode_config, encode_config


def _main(argv):
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


def test_generate_writes_a_config(tmp_path, capsys):
    out = tmp_path / "c.txt"
    assert _main(["generate", "--n", "6", "--seed", "3", "-o", str(out)]) == EXIT_OK
    text = out.read_text()
    assert text.startswith(CONFIG_HEADER) and decode_config(text).ring.n == 6


def test_generate_is_deterministic(capsys):
    _main(["generate", "--n", "7", "--ids", "random", "--seed", "5"])
    first = capsys.readouterr().out
    _main(["generate", "--n", "7", "--ids", "random", "--seed", "5"])
    assert capsys.readouterr().out == first


def test_seed_env_overrides_default_seed_only(monkeypatch, capsys):
    _main(["generate", "--n", "6", "--seed", "9"])
    seed9 = capsys.readouterr().out
    _main(["generate", "--n", "6", "--seed", "0"])
    seed0 = capsys.readouterr().out
    monkeypatch.setenv("CLERING_SEED", "9")
    _main(["generate", "--n", "6"])
    assert capsys.readouterr().out == seed9
    _main(["generate", "--n", "6", "--seed", "0"])
    assert capsys.readouterr().out == seed0
    monkeypatch.setenv("CLERING_SEED", "nine")
    assert _main(["generate", "--n", "6"]) == EXIT_USAGE


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["generate", "--n", "2"],
    ["generate", "--ids", "1,x,3"],
    ["generate", "--n", "4", "--ids", "1,2,3"],
    ["generate", "--ids", "1,1,2"],
    ["run", "--n", "5"],
    ["run", "--n", "5", "--rounds", "3", "--fairness-bound", "0"],
    ["run", "--n", "5", "--rounds", "3", "--inclusion", "1.5"],
    ["generate", "--generator", "impostor", "--n", "4"],
    ["run", "--config", "/nonexistent/cfg", "--rounds", "2"],
    ["sweep", "--n-list", "4,x"],
    ["sweep", "--n-list", "4", "--ids", "1,2,3,4"],
    ["closure", "--n", "4"],
])
def test_usage_errors_exit_64(argv, capsys):
    assert _main(argv) == EXIT_USAGE


def test_run_until_and_budget(capsys):
    assert _main(["run", "--n", "5", "--until", "converged", "--daemon", "synchronous"]) == EXIT_OK
    assert "outcome=reached" in capsys.readouterr().out
    assert _main(["run", "--n", "8", "--until", "converged", "--rounds", "1"]) == EXIT_BUDGET
    assert _main(["run", "--n", "8", "--rounds", "2"]) == EXIT_OK


def test_converge_output(capsys):
    assert _main(["converge", "--n", "6", "--seed", "2"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("round 0 L=")
    assert lines[-1].startswith("summary status=converged") and "leader=6 max_id=6" in lines[-1]
    assert _main(["converge", "--n", "12", "--rounds", "1"]) == EXIT_BUDGET


def test_closure_verdicts(tmp_path, capsys):
    assert _main(["closure", "--gamma", "LE", "--n", "5", "--steps", "300"]) == EXIT_OK
    assert "verdict=held" in capsys.readouterr().out
    assert _main(["closure", "--gamma", "LE", "--generator", "reset", "--n", "5"]) == EXIT_USAGE
    # a member of IEF that leaves it: the transient analysed in the notes
    spec = ExperimentSpec(n=5, seed=0)
    tr = run(spec.configuration(), spec.policy(), seed=0, max_rounds=2000,
             until=lambda c: in_gamma("IEF", c), record=False)
    cfg = tmp_path / "c.txt"
    cfg.write_text(encode_config(tr.final))
    bad = tmp_path / "bad.txt"
    argv = ["closure", "--gamma", "IEF", "--config", str(cfg), "--steps", "2000", "--seed", "0",
            "-o", str(bad)]
    assert _main(argv) == EXIT_VIOLATED
    assert not in_gamma("IEF", decode_config(bad.read_text()))


def test_sweep_table(capsys):
    assert _main(["sweep", "--n-list", "4,5", "--trials", "2"]) == EXIT_OK
    rows = capsys.readouterr().out.splitlines()
    assert [r.split()[0] for r in rows] == ["n=4", "n=5"]
    assert all("failures=0" in r for r in rows)
    assert _main(["sweep", "--n-list", "4", "--trials", "0"]) == EXIT_OK
    assert capsys.readouterr().out == ""


def test_sweep_memory_column_is_monotone():
    rows = sweep(ExperimentSpec(daemon="synchronous"), [8, 16, 32], 1)
    bits = [int(r.split("memory_bits=")[1]) for r in rows]
    assert bits == sorted(bits) and bits[0] < bits[-1]


def test_trace_and_replay(tmp_path, capsys):
    trace = tmp_path / "t.txt"
    argv = ["run", "--n", "6", "--seed", "4", "--steps", "120", "--trace", str(trace)]
    assert _main(argv) == EXIT_OK
    first = trace.read_text()
    assert _main(argv) == EXIT_OK
    assert trace.read_text() == first
    assert _main(["replay", str(trace)]) == EXIT_OK
    assert "verdict=ok" in capsys.readouterr().out

    lines = first.splitlines()
    idx = next(i for i, ln in enumerate(lines) if ln.startswith("step 40 "))
    parts = lines[idx].split()
    parts[-1] = ("f" if parts[-1][0] != "f" else "e") + parts[-1][1:]
    lines[idx] = " ".join(parts)
    trace.write_text("\n".join(lines) + "\n")
    assert _main(["replay", str(trace)]) == EXIT_VIOLATED
    assert "verdict=mismatch step=40" in capsys.readouterr().out

    trace.write_text("\n".join(first.splitlines()[:idx]) + "\n")
    assert _main(["replay", str(trace)]) == EXIT_USAGE
    assert "parse-error" in capsys.readouterr().out
    assert _main(["replay", str(tmp_path / "missing")]) == EXIT_USAGE
