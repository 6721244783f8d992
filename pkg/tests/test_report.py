"""Run records, serialisation, and the fuzz driver."""

import csv
import io
import json
from pathlib import Path
from types import SimpleNamespace

import pytest

from permitbft.fuzz import FuzzOutcome, fuzz, fuzz_one, random_document
from permitbft.report import classify_rounds, dumps, plot_data, run_record, write_report
from permitbft.scenario import load_scenario, scenario_from_dict
from permitbft.simnet import run

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def test_classify_rounds():
    m = SimpleNamespace(
        msg_counts={0: {"permit": 4, "block": 3}, 1: {"permit": 4, "timeout": 9},
                    2: {"permit": 4}, 3: {"timeout": 2, "block": 3}},
        blocks=[(0, 0, 0, b"a"), (0, 3, 3, b"b")])
    normal, failure = classify_rounds(m)
    assert normal == {0}
    assert failure == {1, 3}


def test_run_record_fields():
    res = run(load_scenario(SCENARIOS / "optimistic.toml"))
    rec = run_record(res)
    assert rec["name"] == "optimistic" and (rec["n"], rec["f"]) == (4, 1)
    assert rec["blocks"] == len(res.global_dag) - 1
    assert rec["latency_count"] == 1
    assert rec["latency_min"] == rec["latency_max"] == rec["latency_mean"]
    assert rec["violation"] is None and rec["violations"] == 0
    assert "liveness_ok" not in rec


def test_json_round_trip():
    recs = [{"seed": 2, "x": 1.5, "v": None}, {"seed": 1, "x": 2.0, "v": "boom"}]
    assert json.loads(dumps(recs, "json")) == recs


def test_csv_union_of_keys_and_blank_none():
    recs = [{"seed": 2, "a": None}, {"seed": 1, "b": "z"}]
    rows = list(csv.DictReader(io.StringIO(dumps(recs, "csv"))))
    assert rows == [{"seed": "2", "a": "", "b": ""}, {"seed": "1", "a": "", "b": "z"}]


def test_unknown_format():
    with pytest.raises(ValueError):
        dumps([], "xml")


def test_write_report(tmp_path):
    path = tmp_path / "r.csv"
    write_report([{"seed": 1}], path, "csv")
    assert path.read_text() == "seed\n1\n"


def test_plot_data_sorted_and_skips_empty():
    recs = [{"seed": 3, "latency_count": 2, "latency_mean": 2.5, "latency_max": 3.0},
            {"seed": 1, "latency_count": 0},
            {"seed": 2, "latency_count": 1, "latency_mean": 2.0, "latency_max": 2.0}]
    assert plot_data(recs).splitlines() == [
        "# seed latency_mean latency_max", "2 2.0000 2.0000", "3 2.5000 3.0000"]


# ----------------------------------------------------------------------
# fuzz


@pytest.mark.parametrize("seed", range(25))
def test_random_documents_are_valid(seed):
    doc = random_document(seed)
    sc = scenario_from_dict(doc)
    assert sc.n in (4, 7)
    assert 1 <= len(sc.byzantine) <= sc.f
    assert random_document(seed) == doc


def test_sizes_are_respected():
    assert {random_document(s, sizes=(10,))["n"] for s in range(5)} == {10}


def test_fuzz_one_is_deterministic():
    a, b = fuzz_one(4), fuzz_one(4)
    assert a == b and isinstance(a, FuzzOutcome)
    assert a.violation is None and a.blocks > 0


def test_parallel_fuzz_keeps_seed_order():
    serial = fuzz(range(20, 32))
    parallel = fuzz(range(20, 32), workers=3)
    assert parallel == serial
    assert [o.seed for o in parallel] == list(range(20, 32))
