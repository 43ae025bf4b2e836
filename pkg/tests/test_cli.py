import io
import json

import numpy as np
import pytest

from coopgain.channel import make_builtin
from coopgain.cli import (
    SpecError,
    channel_from_text,
    channel_to_dict,
    channel_to_text,
    emit_report,
    main,
    make_report,
    parse_channel_spec,
)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("name", ["mod3", "mod3_marginalized", "trivial_identity"])
def test_bundled_round_trip(name):
    mac = parse_channel_spec(name)
    again = channel_from_text(channel_to_text(mac))
    assert np.array_equal(again.kernel, mac.kernel)
    assert np.array_equal(again.state_law, mac.state_law)
    assert channel_to_dict(again) == channel_to_dict(mac)


def test_bundled_matches_builtin():
    assert np.array_equal(parse_channel_spec("mod3").kernel, make_builtin("mod3_adder").kernel)


def _spec(mac, **edit):
    d = channel_to_dict(mac)
    d.update(edit)
    return json.dumps(d)


def test_bad_row_names_cell():
    d = channel_to_dict(make_builtin("trivial_identity"))
    d["kernel"][0][-1] -= 0.001
    with pytest.raises(SpecError) as e:
        channel_from_text(json.dumps(d), "chan.json")
    msg = str(e.value)
    assert "chan.json" in msg
    s1, s2, x1, x2 = d["kernel"][0][:4]
    assert f"'S1': {s1}, 'S2': {s2}, 'X1': {x1}, 'X2': {x2}" in msg
    assert "0.999" in msg


@pytest.mark.parametrize(
    "text, needle",
    [
        ("", "empty"),
        ("   \n", "empty"),
        ("{", "line 1"),
        ("[]", "object"),
        ('{"sizes": {}}', "sizes"),
        ('{"sizes": {"S1": 1, "S2": 1, "X1": 1, "X2": 1, "Y": 17}, "state_law": [], "kernel": []}', "Y"),
    ],
)
def test_malformed_specs(text, needle):
    with pytest.raises(SpecError, match=needle):
        channel_from_text(text)


def test_missing_field_named():
    d = channel_to_dict(make_builtin("mod3_adder"))
    del d["kernel"]
    with pytest.raises(SpecError, match="'kernel'"):
        channel_from_text(json.dumps(d))


def test_out_of_range_index():
    d = channel_to_dict(make_builtin("mod3_adder"))
    d["kernel"].append([9, 0, 0, 0, 0, 0.0])
    with pytest.raises(SpecError, match=r"'kernel'\[\d+\] index"):
        channel_from_text(json.dumps(d))


def test_emit_is_byte_identical():
    rep = make_report("x", {"a": 1}, {"v": 0.1, "ok": True}, 0, 0.0)
    for fmt in ("json", "csv", "table"):
        a, b = io.StringIO(), io.StringIO()
        emit_report(rep, fmt, a)
        emit_report(json.loads(json.dumps(rep)), fmt, b)
        assert a.getvalue() == b.getvalue()
    assert make_report("x", {"a": 1}, {}, 0, 1.0)["inputs_digest"] == rep["inputs_digest"]
    assert make_report("x", {"a": 2}, {}, 0, 1.0)["inputs_digest"] != rep["inputs_digest"]


def test_capacity_json(capsys):
    code, out, _ = run(capsys, "capacity", "mod3", "--format", "json", "--starts", "4")
    assert code == 0
    rep = json.loads(out)
    assert rep["result"]["sum_capacity_bits"] == pytest.approx(1.5, abs=1e-6)
    for k in ("inputs_digest", "version", "seed", "wall_clock_s"):
        assert k in rep


def test_check_class_json(capsys):
    code, out, _ = run(capsys, "check-class", "mod3", "--format", "json")
    assert code == 0
    res = json.loads(out)["result"]
    assert res["member"] is True
    assert res["margin"] == pytest.approx(0.5, abs=1e-6)


def test_gaussian_csv(capsys):
    code, out, _ = run(capsys, "gaussian", "--format", "csv", "--halvings", "6")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "h,gain_bits,ratio"
    assert len(lines) == 1 + 7
    assert float(lines[7].split(",")[0]) == 1e-8


def test_gaussian_table_and_reproducible(capsys):
    _, a, _ = run(capsys, "gaussian", "--format", "table")
    _, b, _ = run(capsys, "gaussian", "--format", "table")
    assert a == b and "diverges" in a


def test_frl_command(tmp_path, capsys):
    f = tmp_path / "k.json"
    f.write_text(json.dumps([[0.7, 0.3], [0.3, 0.7]]))
    code, out, _ = run(capsys, "frl", str(f), "--format", "json")
    assert code == 0
    res = json.loads(out)["result"]
    assert res["U"] == 3
    assert res["max_reconstruction_error"] <= 1e-12


def test_exit_codes(tmp_path, capsys):
    assert run(capsys, "capacity", str(tmp_path / "nope.json"))[0] == 2
    empty = tmp_path / "e.json"
    empty.write_text("")
    code, _, err = run(capsys, "capacity", str(empty))
    assert code == 2 and "empty" in err
    assert run(capsys, "capacity")[0] == 2
    assert run(capsys, "bogus")[0] == 2
    assert run(capsys, "inner-bound", "mod3", "--cout1", "-1")[0] == 1


def test_simulate_command(capsys):
    code, out, _ = run(capsys, "simulate", "mod3", "--n", "60", "--r1", "0.1", "--r2", "0.1",
                       "--trials", "10", "--format", "json")
    assert code == 0
    res = json.loads(out)["result"]
    assert 0 <= res["error_rate"] <= 1 and res["trials"] == 10
