import csv
import json
import statistics

import pytest

from asne import cli
from asne.experiment import GRID
from asne.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_PARTIAL, main

TINY = ["--iterations", "6", "--ants", "8", "--epochs", "2", "--population", "4",
        "--hidden-layers", "2", "--hidden-width", "3", "--max-skip", "2",
        "--length", "96", "--channels", "3", "--repeats", "2", "--checkpoint-every", "3"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["run", *TINY, "--out", str(out)]) == EXIT_OK
    return out


def test_run_writes_declared_files(run_dir):
    for name in ("config.json", "summary.json", "best_so_far.dat", "plot.gp"):
        assert (run_dir / name).is_file()
    for r in range(2):
        rep = run_dir / f"repeat_{r:02d}"
        for name in ("fitness_log.csv", "checkpoint.json", "best_genome.json", "colony.json"):
            assert (rep / name).is_file(), name
    lines = (run_dir / "best_so_far.dat").read_text().splitlines()
    assert lines[0].startswith("#") and len(lines) == 7
    assert "best_so_far.dat" in (run_dir / "plot.gp").read_text()


def test_same_seed_same_summary(run_dir, tmp_path):
    assert main(["run", *TINY, "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "summary.json").read_text() == (run_dir / "summary.json").read_text()


def test_summary_matches_logs(run_dir):
    summary = json.loads((run_dir / "summary.json").read_text())
    finals = []
    for r in range(2):
        with open(run_dir / f"repeat_{r:02d}" / "fitness_log.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6
        best = [float(row["best_so_far"]) for row in rows]
        assert best == sorted(best, reverse=True)
        ok = [float(row["fitness"]) for row in rows if row["status"] == "ok"]
        assert best[-1] == min(ok)
        finals.append(best[-1])
        genome = json.loads((run_dir / f"repeat_{r:02d}" / "best_genome.json").read_text())
        assert genome["fitness"] == best[-1]
    assert summary["fitness"]["mean"] == pytest.approx(statistics.fmean(finals), rel=1e-15)
    assert summary["fitness"]["best"] == min(finals)


def test_explorer_runs_have_no_recurrent_edges(tmp_path):
    assert main(["run", *TINY, "--species", "exp", "--out", str(tmp_path)]) == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["rec_edges"]["max"] == 0
    assert all(r["rec_edges"] == 0 for r in summary["repeats"])


def test_resume_of_finished_run_is_stable(run_dir, tmp_path):
    before = (run_dir / "summary.json").read_text()
    assert main(["run", *TINY, "--out", str(run_dir), "--resume"]) == EXIT_OK
    assert (run_dir / "summary.json").read_text() == before


def test_config_errors(tmp_path):
    assert main(["run", "--out", str(tmp_path), "--phi", "0.5"]) == EXIT_CONFIG
    assert main(["run", "--out", str(tmp_path), "--beta", "0"]) == EXIT_CONFIG
    assert main(["run", "--out", str(tmp_path), "--csv", "x.csv"]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG


def test_data_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3,oops\n")
    assert main(["run", *TINY, "--csv", str(bad), "--target", "b",
                 "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert main(["run", *TINY[:-4], "--csv", str(tmp_path / "missing.csv"), "--target", "b",
                 "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert main(["inspect", str(bad)]) == EXIT_DATA
    assert main(["rank", str(tmp_path / "nowhere")]) == EXIT_DATA


def test_partial_failure_exit_code(tmp_path, monkeypatch):
    import asne.experiment as experiment

    real = experiment.run_repeat

    def flaky(config, data, repeat, out, **kw):
        if repeat == 1:
            raise RuntimeError("worker host lost")
        return real(config, data, repeat, out, **kw)

    monkeypatch.setattr(experiment, "run_repeat", flaky)
    assert main(["run", *TINY, "--out", str(tmp_path)]) == EXIT_PARTIAL
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert [f["repeat"] for f in summary["failed"]] == [1]
    assert summary["fitness"]["count"] == 1


def test_csv_run(tmp_path):
    data = tmp_path / "series.csv"
    assert main(["synth", "--kind", "mackey_glass_like", "--length", "96", "--channels", "3",
                 "--out", str(data)]) == EXIT_OK
    header = data.read_text().splitlines()[0].split(",")
    assert main(["run", *TINY, "--csv", str(data), "--target", header[-1],
                 "--out", str(tmp_path / "run")]) == EXIT_OK


def test_grid_and_rank(run_dir, tmp_path, capsys):
    assert main(["grid", "--out", str(tmp_path / "g"), "--grid-ants", "20",
                 "--grid-phi", "fn", "off", "--grid-reward", "const"]) == EXIT_OK
    files = sorted((tmp_path / "g").glob("*.json"))
    assert len(files) == 1 * len(GRID["species"]) * len(GRID["jump"]) * 2 * 1
    assert len({json.loads(f.read_text())["name"] for f in files}) == len(files)
    capsys.readouterr()
    assert main(["rank", str(run_dir), "--top", "1", "5"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("heuristic,top1_mean")
    assert len(out) == 1 + len(json.loads((run_dir / "summary.json").read_text())["labels"])


def test_inspect_documents(run_dir, capsys):
    rep = run_dir / "repeat_00"
    for name, word in (("best_genome.json", "genome"), ("colony.json", "colony"),
                       ("checkpoint.json", "checkpoint")):
        assert main(["inspect", str(rep / name)]) == EXIT_OK
        assert capsys.readouterr().out.startswith(word)


def test_help_lists_every_flag(capsys):
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["run", "--help"])
    text = capsys.readouterr().out
    for flag in ("--ants", "--species", "--jump", "--phi", "--reward", "--gamma", "--alpha",
                 "--beta", "--iterations", "--epochs", "--repeats", "--seed",
                 "--checkpoint-every", "--lamarck-gate"):
        assert flag in text
