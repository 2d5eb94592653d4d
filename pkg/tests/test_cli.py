import csv
import io
import json

import pytest

from siphon.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_gen_writes_one_line_per_key(tmp_path, capsys):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert run(capsys, "gen", "--n", 1 << 16, "--m", 32, "--seed", 3, "--out", a)[0] == 0
    assert run(capsys, "gen", "--n", 1 << 16, "--m", 32, "--seed", 3, "--out", b)[0] == 0
    lines = a.read_text().splitlines()
    assert len(lines) == 1 + (1 << 16)  # header line, then one key per line
    assert a.read_bytes() == b.read_bytes()


def test_gen_rejects_overfull_key_space(tmp_path, capsys):
    code, _, err = run(capsys, "gen", "--n", 300, "--m", 8, "--out", tmp_path / "x")
    assert code == 1
    e = json.loads(err)
    assert e["command"] == "gen" and e["error"] and e["message"]


def test_gen_unwritable_output(tmp_path, capsys):
    code, _, err = run(capsys, "gen", "--n", 10, "--m", 16, "--out", tmp_path / "no" / "x")
    assert code == 1 and json.loads(err)["command"] == "gen"


def test_build_stats(capsys):
    code, out, _ = run(capsys, "build", "--n", 4096, "--m", 32, "--kind", "surf-hash")
    assert code == 0
    stats = json.loads(out)
    assert stats["filters"][0]["kind"] == "surf-hash"
    assert sum(f["keys"] for f in stats["filters"]) == 4096


def test_fpr_ordering_and_bloom(capsys):
    code, out, _ = run(capsys, "fpr", "--n", 1 << 14, "--m", 32, "--probes", 200_000,
                       "--kinds", "surf-base,surf-real,surf-hash,bloom")
    assert code == 0
    r = {x["filter_kind"]: x for x in rows(out)}
    fpr = {k: float(v["fpr"]) for k, v in r.items()}
    assert fpr["surf-base"] > fpr["surf-real"] > 0
    assert fpr["surf-base"] > fpr["surf-hash"] > 0
    bloom = r["bloom"]
    assert float(bloom["expected_fpr"]) / 2 <= fpr["bloom"] <= 2 * float(bloom["expected_fpr"])
    assert all(x["probes"] == "200000" for x in r.values())


def test_fpr_needs_probes(capsys):
    code, _, err = run(capsys, "fpr", "--n", 100, "--m", 32, "--probes", 0)
    assert code == 1 and json.loads(err)["command"] == "fpr"


def test_timing_hist(capsys):
    code, out, _ = run(capsys, "timing-hist", "--n", 1 << 14, "--m", 32, "--probes", 20_000,
                       "--labeled-fp", 500)
    assert code == 0
    r = rows(out)
    top = max(r, key=lambda x: int(x["count"]))
    assert float(top["bucket_hi_us"]) <= 15
    assert sum(int(x["fp_count"]) for x in r) == 500


def test_timing_hist_zero_probes(capsys):
    code, out, _ = run(capsys, "timing-hist", "--n", 1024, "--m", 32, "--probes", 0)
    assert code == 0
    assert out.strip() == "bucket_lo_us,bucket_hi_us,count"


def test_analyze_table_and_identity(capsys):
    code, out, _ = run(capsys, "analyze")
    r = rows(out)
    assert code == 0 and len(r) == 12
    cell = next(x for x in r if x["l"] == "40" and x["n"] == "50000000")
    assert float(cell["p_star"]) == pytest.approx(4.26e-5, rel=0.01)
    code, out, _ = run(capsys, "analyze", "--n", 256, "--m", 8, "--l", 4)
    assert float(rows(out)[0]["brute_force"]) == 0


def test_analyze_pbf_args(capsys):
    code, _, err = run(capsys, "analyze", "--pbf", "--n", 100)
    assert code == 1 and json.loads(err)["command"] == "analyze"
    code, out, _ = run(capsys, "analyze", "--pbf", "--n", 10**6, "--m", 64, "--l", 40,
                       "--p", 10**6, "--eps", 0)
    assert float(rows(out)[0]["ratio"]) == pytest.approx(10**6 / 2**40, rel=1e-5)


ATTACK = ["attack", "--n", 4096, "--m", 32, "--kind", "surf-real", "--mode", "idealized",
          "--guesses", 1 << 19, "--min-prefix-bits", 16]


def test_attack_reports(tmp_path, capsys):
    code, out, _ = run(capsys, *ATTACK, "--outdir", tmp_path)
    assert code == 0
    row = rows(out)[0]
    assert row["verified"] == "1" and int(row["keys_extracted"]) > 0
    rep = json.loads((tmp_path / "attack_seed0.json").read_text())
    for field in ("step1", "step2", "step3", "wasted", "total_queries", "keys_extracted"):
        assert field in rep
    series = rows((tmp_path / "attack_seed0_series.csv").read_text())
    q = [int(x["total_queries"]) for x in series]
    assert q == sorted(q)

    code, out, _ = run(capsys, "report", tmp_path / "attack_seed0.json")
    stages = {x["stage"]: x for x in rows(out)}
    assert int(stages["total"]["queries"]) == rep["total_queries"]


def test_timed_and_idealized_share_schema(tmp_path, capsys):
    run(capsys, *ATTACK, "--outdir", tmp_path / "i")
    argv = [a if a != "idealized" else "timed" for a in ATTACK]
    argv[argv.index(1 << 19)] = 1 << 14
    assert run(capsys, *argv, "--outdir", tmp_path / "t")[0] == 0
    a = json.loads((tmp_path / "i" / "attack_seed0.json").read_text())
    b = json.loads((tmp_path / "t" / "attack_seed0.json").read_text())
    assert a.keys() == b.keys()


def test_attack_is_deterministic(tmp_path, capsys):
    _, first, _ = run(capsys, *ATTACK, "--outdir", tmp_path / "a")
    _, second, _ = run(capsys, *ATTACK, "--outdir", tmp_path / "b")
    assert first == second
    for name in ("attack_seed0_series.csv", "attack_seed0_progress.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cost_per_key_stable_across_key_sets(capsys):
    qpk = []
    for seed in (1, 2, 3):
        argv = list(ATTACK)
        argv += ["--seed", seed]
        qpk.append(float(rows(run(capsys, *argv)[1])[0]["queries_per_key"]))
    assert max(qpk) <= 1.25 * min(qpk)


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"dataset": {"n": 2048, "m": 32, "seed": 5},
                               "filter": {"kind": "surf-base"}}))
    _, out, _ = run(capsys, "--config", cfg, "build")
    assert json.loads(out)["filters"][0]["kind"] == "surf-base"
    _, out, _ = run(capsys, "--config", cfg, "build", "--kind", "bloom")
    assert json.loads(out)["filters"][0]["kind"] == "bloom"


def test_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{nope")
    code, _, err = run(capsys, "--config", cfg, "build", "--n", 10, "--m", 16)
    assert code == 1 and "cannot read config" in json.loads(err)["message"]
