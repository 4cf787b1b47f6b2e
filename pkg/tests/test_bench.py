import json
import statistics
import threading
import time

import pytest

from idea.bench.generators import (
    REFERENCE,
    TWEET_BYTES,
    UpdateMaker,
    generate_dataset,
    generate_reference,
    generate_tweets,
    tweet_lines,
)
from idea.bench.report import emit_csv, emit_plot_data, read_csv, render_plots
from idea.bench.runner import UpdateFeeder, prepare_database, run_experiment
from idea.bench.workloads import WorkloadSpec, get_case
from idea.cli import main
from idea.datamodel import print_json
from idea.server import ScriptServer, send_script


def test_tweets_are_deterministic():
    a = tweet_lines(generate_tweets(200, seed=3))
    assert a == tweet_lines(generate_tweets(200, seed=3))
    assert a != tweet_lines(generate_tweets(200, seed=4))
    assert list(generate_tweets(0)) == []


def test_tweet_size():
    sizes = [len(x) for x in tweet_lines(generate_tweets(2000, seed=0))]
    assert 400 <= statistics.mean(sizes) <= 500
    assert abs(statistics.mean(sizes) - TWEET_BYTES) < 25


def test_reference_cardinalities():
    assert len(generate_dataset("SafetyRatings", 0.01)) == 5000
    assert len(generate_dataset("SensitiveNamesDataset", 1.0)) == 5000
    with pytest.raises(ValueError):
        generate_dataset("SafetyRatings", 0)


@pytest.mark.parametrize("name", sorted(REFERENCE))
def test_reference_record_sizes(name):
    d = REFERENCE[name]
    recs = generate_dataset(name, 0.001)
    mean = statistics.mean(len(print_json(r).encode()) for r in recs)
    assert abs(mean - d.paper_bytes) <= 0.3 * d.paper_bytes
    keys = [r[d.key] for r in recs]
    assert len(set(keys)) == len(keys)


def test_reference_is_deterministic():
    a = generate_reference(("Facilities", "DistrictAreas"), 0.01, seed=1)
    b = generate_reference(("Facilities", "DistrictAreas"), 0.01, seed=1)
    assert [print_json(r) for r in a["Facilities"]] == [print_json(r) for r in b["Facilities"]]


def test_workload_spec_validation():
    for bad in (dict(case_id="Q99"), dict(batch_size=0), dict(node_count=0),
                dict(reference_scale=2), dict(update_rate=-1), dict(intake_mode="x"),
                dict(tweet_count=-1)):
        with pytest.raises(Exception):
            WorkloadSpec(**bad)
    assert WorkloadSpec(model="stream").model.value == "stream"
    assert get_case("Q0").function is None


def _feeder_db():
    case = get_case("Q1")
    return prepare_database(case, generate_reference(case.datasets, 0.01, 0))


def test_update_feeder_rate_zero():
    db = _feeder_db()
    f = UpdateFeeder(db, "SafetyRatings", UpdateMaker("SafetyRatings", 0.01, 0), 0).start()
    time.sleep(0.2)
    assert f.stop() == 0
    db.close()


def test_update_feeder_rate():
    db = _feeder_db()
    f = UpdateFeeder(db, "SafetyRatings", UpdateMaker("SafetyRatings", 0.01, 0), 100,
                     batch_size=10).start()
    time.sleep(2.0)
    n = f.stop()
    assert 180 <= n <= 220
    seqs = [s for s, _ in f.commits]
    assert seqs == sorted(seqs)
    db.close()


def test_passthrough_run():
    r = run_experiment(WorkloadSpec("none", 10_000, 420, 2))
    assert r.ingested == r.stored == 10_000 and r.skipped == 0
    assert r.throughput > 0 and r.refresh_periods


def test_enriched_contents_are_deterministic():
    spec = WorkloadSpec("Q3", 500, 64, 2)
    a = run_experiment(spec)
    b = run_experiment(spec)
    assert a.oracle_match and b.oracle_match


# -- reports ----------------------------------------------------------------------------------

def _reports():
    return [run_experiment(WorkloadSpec("safety", 300, b, 1)) for b in (64, 128, 256)]


@pytest.fixture(scope="module")
def reports():
    return _reports()


def test_csv(tmp_path, reports):
    path = emit_csv(reports[:1], tmp_path / "r.csv")
    lines = path.read_text().splitlines()
    data = [x for x in lines if not x.startswith("#")]
    assert len(data) == 2
    assert any(x.startswith("# cpus=") for x in lines)
    rows = read_csv(path)
    assert rows[0]["case"] == "safety" and rows[0]["stored"] == "300"
    with pytest.raises(IOError):
        emit_csv(reports, tmp_path / "missing" / "r.csv")
    with pytest.raises(ValueError):
        emit_csv([], tmp_path / "e.csv")


def test_plot_data(tmp_path, reports):
    doc = json.loads(emit_plot_data(reports, tmp_path / "p.json").read_text())
    assert doc["x"] == "batch"
    assert len(doc["series"]) == 1
    assert [p["x"] for p in doc["series"][0]["points"]] == [64, 128, 256]


def test_render_plots(tmp_path, reports):
    paths = render_plots(reports, tmp_path / "fig")
    assert paths and all(p.exists() and p.stat().st_size > 0 for p in paths)


# -- command line -----------------------------------------------------------------------------

def test_cli_exec(tmp_path, capsys):
    script = tmp_path / "s.sqlpp"
    script.write_text("SELECT VALUE sum(x) FROM [10, 20, 30] x;")
    assert main(["exec", str(script)]) == 0
    # one JSON line per result element
    assert capsys.readouterr().out.strip().splitlines() == ["60"]


def test_cli_exec_failure(tmp_path, capsys):
    script = tmp_path / "s.sqlpp"
    script.write_text("CREATE DATASET")
    assert main(["exec", str(script)]) != 0
    assert "1:15" in capsys.readouterr().err
    assert main(["exec", str(tmp_path / "nope.sqlpp")]) != 0


def test_cli_bench(tmp_path, capsys):
    out = tmp_path / "b.csv"
    rc = main(["bench", "--case", "none", "--tweets", "300", "--batch", "64,128",
               "--nodes", "1", "--out", str(out), "--no-plots"])
    assert rc == 0
    assert len(read_csv(out)) == 2
    assert out.with_suffix(".plot.json").exists()
    assert main(["bench", "--case", "none", "--tweets", "10",
                 "--out", str(tmp_path / "x" / "b.csv")]) != 0


def test_serve_protocol():
    srv = ScriptServer("127.0.0.1", 0)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    try:
        host, port = srv.address
        replies = send_script(host, port, "SELECT VALUE 1 + 1; SELECT VALUE nope; SELECT VALUE 3;")
        assert replies[0] == {"ok": True, "result": [2]}
        assert replies[1]["ok"] is False and len(replies) == 2
        assert send_script(host, port, "CREATE")[0]["ok"] is False
    finally:
        srv.shutdown()
        srv.server_close()
