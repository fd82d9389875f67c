import csv
import io
import json

import pytest

from anonmech import cli, instances
from anonmech.distributions import InstanceError
from anonmech.instances import instance_to_json, parse_instance


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr().out


# --- instance files ---

def test_parse_two_point_masses():
    inst = parse_instance('{"bidders":[{"kind":"point","value":2},{"kind":"point","value":1}]}')
    assert inst.n == 2 and inst.is_digital


def test_parse_position_instance():
    inst = parse_instance('{"bidders":[{"kind":"uniform","lo":0,"hi":1}],"units":1,"scales":[0.5]}')
    assert inst.units == 1 and list(inst.scales) == [0.5]


def test_parse_sorts_and_records_order():
    inst = parse_instance('{"bidders":[{"kind":"point","value":1},{"kind":"point","value":2}]}')
    assert inst.lows == [2.0, 1.0]
    assert list(inst.order) == [1, 0]


@pytest.mark.parametrize("text, needle", [
    ('{"bidders":[{"kind":"discrete","values":[1,2],"probs":[0.6,0.6]}]}', "1.2"),
    ('{"bidders":[{"kind":"uniform","lo":1,"hi":1}]}', "bidders[0]"),
    ('{"bidders":[{"kind":"point"}]}', "value"),
    ('{"bidders":[{"kind":"gamma"}]}', "kind"),
    ('{"bidders":[{"kind":"point","value":1}],"scales":[0.5,1]}', "scales"),
    ('{"bidders": [', "line 1"),
    ('{"units": 1}', "bidders"),
])
def test_parse_diagnostics(text, needle):
    with pytest.raises(InstanceError, match=None) as exc:
        parse_instance(text)
    assert needle in str(exc.value)


@pytest.mark.parametrize("inst", [
    instances.harmonic(5),
    instances.geometric(0.5, 4, 0.1),
    instances.nested_uniform(2, 2),
    instances.random_k_ambiguous(6, 2, seed=3),
    instances.random_k_ambiguous(6, 1, seed=3, scales=instances.geometric_scales(6)),
])
def test_json_round_trip(inst):
    again = parse_instance(instance_to_json(inst))
    assert again.bidders == inst.bidders
    assert again.units == inst.units
    assert (again.scales is None) == (inst.scales is None)
    if inst.scales is not None:
        assert list(again.scales) == list(inst.scales)


# --- commands ---

def test_run_dpm_intro(capsys):
    code, out = run_cli(capsys, "run", "--mech", "dpm", "--prices", "2,1", "--bids", "2,2")
    assert code == 0
    assert "payments: 1,1" in out


def test_run_optimal_needs_instance(capsys):
    with pytest.raises(SystemExit):
        cli.main(["run", "--mech", "optimal", "--bids", "2,1"])


def test_run_optimal_intro(tmp_path, capsys):
    path = tmp_path / "intro.json"
    path.write_text('{"bidders":[{"kind":"point","value":2},{"kind":"point","value":1}]}')
    code, out = run_cli(capsys, "run", "--mech", "optimal", "--instance", str(path), "--bids", "2,1")
    assert "revenue: 3" in out


def test_gen_round_trip(tmp_path, capsys):
    path = tmp_path / "inst.json"
    assert cli.main(["gen", "random-k-ambiguous", "--n", "7", "--k", "2", "--seed", "4", "-o", str(path)]) == 0
    assert parse_instance(path.read_text()).bidders == instances.random_k_ambiguous(7, 2, 4).bidders


def test_gen_geometric_delta_to_stdout(capsys):
    code, out = run_cli(capsys, "gen", "geometric-delta", "--n", "3", "--eps", "0.5", "--delta", "0.1")
    doc = json.loads(out)
    # bidders come out sorted by low, all lows are 0, so compare the set of high masses
    highs = sorted(b["probs"][1] for b in doc["bidders"])
    assert highs == pytest.approx(sorted(0.1 * 0.5**i for i in range(1, 4)))


def rows_of(out):
    return list(csv.DictReader(io.StringIO(out)))


def test_bench_harmonic(capsys):
    code, out = run_cli(capsys, "bench", "harmonic", "--n", "100")
    (row,) = rows_of(out)
    assert code == 0
    assert float(row["mean"]) == 1.0
    assert float(row["benchmark"]) == pytest.approx(5.18738, abs=1e-5)


def test_bench_k1_is_deterministic(capsys):
    argv = ["bench", "k1-approx", "--n", "10", "--trials", "5000", "--seed", "7"]
    code1, out1 = run_cli(capsys, *argv)
    code2, out2 = run_cli(capsys, *argv)
    assert out1 == out2 and code1 == code2 == 0
    assert float(rows_of(out1)[0]["ratio"]) <= 5


def test_bench_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("ANONMECH_SEED", "13")
    code, out = run_cli(capsys, "bench", "k1-approx", "--n", "6", "--trials", "1000")
    assert rows_of(out)[0]["seed"] == "13"


def test_bench_nested_uniform(capsys):
    code, out = run_cli(capsys, "bench", "nested-uniform", "--levels", "3", "--L", "12")
    assert code == 0
    assert all(r["pass"] == "true" for r in rows_of(out))


def test_bench_exit_code_reflects_failure(monkeypatch, capsys):
    from anonmech import experiments
    real = experiments.bench_intro()
    monkeypatch.setattr(experiments, "bench_intro", lambda: [{**real[0], "pass": "false"}, real[1]])
    code, _ = run_cli(capsys, "bench", "intro")
    assert code == 1


def test_simulate_writes_csv(tmp_path, capsys):
    inst_path = tmp_path / "i.json"
    inst_path.write_text(instance_to_json(instances.random_k_ambiguous(8, 1, seed=2)))
    out_path = tmp_path / "out.csv"
    code = cli.main(["simulate", "--instance", str(inst_path), "--mech", "mixed", "--trials", "3000",
                     "--seed", "1", "-o", str(out_path)])
    assert code == 0
    (row,) = list(csv.DictReader(out_path.open()))
    assert row["trials"] == "3000"


def test_simulate_payer_tail(tmp_path, capsys):
    inst_path = tmp_path / "i.json"
    inst_path.write_text(instance_to_json(instances.random_k_ambiguous(8, 1, seed=2)))
    code, out = run_cli(capsys, "simulate", "--instance", str(inst_path), "--mech", "k1-dpm", "--tail",
                        "--trials", "3000")
    assert code == 0 and len(rows_of(out)) == 8


def test_posterior_command(tmp_path, capsys):
    path = tmp_path / "intro.json"
    path.write_text('{"bidders":[{"kind":"point","value":2},{"kind":"point","value":1}]}')
    code, out = run_cli(capsys, "posterior", "--instance", str(path), "--observed", "1")
    assert code == 0
    assert "optimal price: 2" in out


def test_verify_command(capsys):
    code, out = run_cli(capsys, "verify", "--mech", "dpm", "--prices", "3,2,1", "--grid", "0.5,1,1.5,2,3",
                        "--n", "3")
    assert code == 0
    assert out.count("PASS") == 4
    code, out = run_cli(capsys, "verify", "--mech", "dpm-nondsic", "--prices", "3,2,1",
                        "--grid", "0.5,1,1.5,2,3", "--n", "3", "--property", "dsic")
    assert code == 1 and "FAIL" in out


def test_bad_instance_file_exits_nonzero(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"bidders":[{"kind":"discrete","values":[1,2],"probs":[0.6,0.6]}]}')
    assert cli.main(["posterior", "--instance", str(path), "--observed", ""]) == 2
    assert "1.2" in capsys.readouterr().err


def test_missing_file_exits(capsys):
    with pytest.raises(SystemExit):
        cli.main(["posterior", "--instance", "/nonexistent.json", "--observed", "1"])


def test_unknown_command():
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])
