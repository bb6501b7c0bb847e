import pytest

from filecross.commander import RunConfig, run_suite, union_runs
from filecross.receiver import Outcome
from filecross.report import aggregate, build_matrix, cell, emit, parse_csv

from conftest import make_profile


@pytest.fixture(scope="module")
def merged():
    profiles = [make_profile("a.old", compiled_sdk="2.3", auto_download_unrenderable=True),
                make_profile("b.new"),
                make_profile("c.hidden", exposure="none", browsing_interface=None),
                make_profile("d.nojs", compiled_sdk="2.3", js=False)]
    return union_runs(run_suite(RunConfig(runs=1), profiles, in_process=True))


def test_cell_mapping():
    assert cell(Outcome.VULNERABLE) == "y"
    assert cell(Outcome.NOT_VULNERABLE) == "n"
    assert cell(Outcome.NOT_EXPOSED) == "n"
    assert cell(Outcome.NO_RESPONSE) == "" and cell(None) == ""


def test_matrix_rows(merged):
    m = build_matrix(merged)
    assert m.columns() == ["package", "A1", "A2_4.0", "A2_4.3", "A2_4.4", "A3_4.0", "A3_4.3",
                           "A3_4.4", "A4", "exposure", "engine"]
    old = m.row("a.old")
    assert old.a1 == "y" and old.a4 == "y"
    assert all(c == "y" for c in old.per_version.values())
    new = m.row("b.new")
    assert new.per_version[(2, "4.0")] == "y" and new.per_version[(2, "4.3")] == "n"
    hidden = m.row("c.hidden")
    assert hidden.exposure == "none" and set(hidden.cells()) == {"n"}
    nojs = m.row("d.nojs")
    assert nojs.per_version[(2, "4.3")] == "" and nojs.a4 == ""


def test_aggregate(merged):
    stats = aggregate(build_matrix(merged))
    assert stats.total == 4 and stats.vulnerable == 2
    assert stats.headline() == "2 of 4 browsers vulnerable (50.0%)"
    assert stats.per_attack["A1"] == 1 and stats.per_attack["A2_4.0"] == 2
    assert stats.ebi_breakdown == {"intentional": 3, "unintentional": 0, "none": 1}
    assert stats.js_in_file == 2


def test_csv_round_trip(merged):
    m = build_matrix(merged)
    data = emit(m, fmt="csv")
    assert data.splitlines()[0] == b"package,A1,A2_4.0,A2_4.3,A2_4.4,A3_4.0,A3_4.3,A3_4.4,A4,exposure,engine"
    back = parse_csv(data)
    assert back.versions == m.versions
    for r in m.rows:
        b = back.row(r.package)
        assert b.cells() == r.cells() and (b.exposure, b.engine) == (r.exposure, r.engine)


def test_text_table(merged):
    text = emit(build_matrix(merged)).decode()
    assert text.splitlines()[0].startswith("package")
    assert "2 of 4 browsers vulnerable" in text
    with pytest.raises(ValueError):
        emit(build_matrix(merged), fmt="xml")


def test_parse_csv_rejects_garbage():
    with pytest.raises(ValueError):
        parse_csv(b"a,b,c\n1,2,3\n")
    assert parse_csv(b"").rows == []
