import json
import time

import pytest

from filecross.forge import AttackId, AttackSpec, forge
from filecross.manifest import ACTION_MAIN, ACTION_VIEW
from filecross.sandbox import (
    AdbBackend,
    CustomEngine,
    Delivery,
    DeliveryError,
    PatchModes,
    RenderPoints,
    SandboxDevice,
    Zone,
    ZoneEscape,
    effective_policy,
    find_targets,
    load_corpus,
    load_profile,
    profile_to_dict,
    warm_up,
)
from filecross.sandbox.vfs import VirtualFS, split_device_path

from conftest import make_profile

PKG = "test.browser"
COMP = f"{PKG}.Main"
SITES = ("http://a.example/", "https://b.example/")


def test_policy_examples():
    old = make_profile(compiled_sdk="2.3")
    assert effective_policy(old, "4.3").allow_file_to_file
    new = make_profile(compiled_sdk="4.3")
    p = effective_policy(new, "4.4")
    assert (p.allow_file_to_file, p.allow_file_to_http, p.symlink_flaw_present) == \
        (False, False, True)
    assert effective_policy(new, "4.0").allow_file_to_http
    assert effective_policy(make_profile(uses_legacy_file_access_api=True), "4.4").allow_file_to_file
    custom = make_profile(engine=CustomEngine())
    p = effective_policy(custom, "4.0")
    assert not (p.allow_file_to_file or p.allow_file_to_http or p.symlink_flaw_present)


def device(profile=None, sink=None, state_dir=None, ver="4.3"):
    beacons = []
    d = SandboxDevice(ver, state_dir, sink or beacons.append)
    d.install(profile or make_profile())
    return d, beacons


def test_warm_up_produces_targets():
    d, _ = device()
    files = warm_up(d, PKG, COMP, SITES)
    assert "app_data/Cookies" in files
    targets = find_targets(d, PKG)
    assert targets[0] == "app_data/Cookies"
    assert set(targets) == {"app_data/Cookies", "databases/history.db", "files/bookmarks.db"}
    assert b"a.example" in d.read_file(Zone.private(PKG), "app_data/Cookies")


def test_find_targets_by_extension():
    d, _ = device()
    d.write_file(Zone.private(PKG), "db/secret.sqlite", b"x")
    d.write_file(Zone.private(PKG), "notes.txt", b"x")
    assert find_targets(d, PKG) == ["db/secret.sqlite"]


@pytest.mark.parametrize("kw,url,status", [
    ({}, "file:///sdcard/x.html", Delivery.LOADED),
    ({"handles_external_file_intents": False}, "file:///sdcard/x.html", Delivery.REJECTED_FILE_BLOCKED),
    ({"patch_modes": PatchModes(block_external_file_urls=True)}, "file:///sdcard/x.html",
     Delivery.REJECTED_FILE_BLOCKED),
    ({"file_scheme_supported": False}, "file:///sdcard/x.html", Delivery.REJECTED_UNSUPPORTED_SCHEME),
    ({}, "content://x", Delivery.REJECTED_UNSUPPORTED_SCHEME),
    ({}, "http://a.example/", Delivery.VISITED),
])
def test_delivery_status(kw, url, status):
    d, _ = device(make_profile(**kw))
    assert d.send_intent(PKG, COMP, ACTION_VIEW, url).status is status


def test_intent_edge_cases():
    d, _ = device(make_profile(exposure="none", browsing_interface=None))
    assert d.send_intent(PKG, COMP, ACTION_VIEW, "http://a/").status is Delivery.REJECTED_NOT_EXPOSED
    with pytest.raises(DeliveryError):
        d.send_intent(PKG, "nope", ACTION_VIEW, "http://a/")
    with pytest.raises(DeliveryError):
        d.send_intent("other.pkg", COMP, ACTION_VIEW, "http://a/")
    d, _ = device()
    assert d.send_intent(PKG, COMP, ACTION_MAIN, "http://a/").status is Delivery.IGNORED


def run_attack(d, atk, target="app_data/Cookies", pkg=PKG):
    warm_up(d, pkg, COMP, SITES)
    d.register_remote("https://mail.example/", b"inbox")
    payload = forge(AttackSpec(AttackId(atk), pkg, d.device_version, "k", "http://r",
                               target_file=target, remote_origin="https://mail.example/"))
    d.stage_payload(pkg, payload)
    res = d.send_intent(pkg, COMP, ACTION_VIEW, payload.load_url)
    if payload.followup:
        d.advance_time(payload.followup.delay_ms)
        d.apply_followup(pkg, payload.followup)
    d.advance_time(12000)
    return res


def test_a2_steals_cookies_on_old_sdk():
    d, beacons = device(make_profile(compiled_sdk="2.3"))
    run_attack(d, 2)
    assert len(beacons) == 1 and "SID%3D" in beacons[0]


def test_a2_blocked_on_new_sdk():
    d, beacons = device(make_profile(compiled_sdk="4.3"))
    res = run_attack(d, 2)
    assert beacons == []
    assert any(kind == "sop" for _, kind, _ in res.trace.events)


def test_a3_reads_remote():
    d, beacons = device(make_profile(compiled_sdk="2.3"))
    run_attack(d, 3)
    assert beacons and beacons[0].count("inbox") == 1


def test_a4_fires_after_swap():
    d, beacons = device(make_profile(compiled_sdk="4.3"))
    res = run_attack(d, 4)
    assert len(beacons) == 1 and "SID%3D" in beacons[0]
    times = [at for at, kind, _ in res.trace.events if kind == "beacon"]
    assert times == [8000]


def test_a1_download_and_unrenderable_patch():
    d, _ = device(make_profile(auto_download_unrenderable=True))
    res = run_attack(d, 1)
    assert res.trace.downloaded == "Download/Cookies"
    assert d.list_downloads(PKG) == ["Download/Cookies"]
    patched = make_profile(auto_download_unrenderable=True,
                           patch_modes=PatchModes(disable_private_unrenderable=True))
    d, _ = device(patched)
    assert run_attack(d, 1).trace.downloaded is None
    assert d.list_downloads(PKG) == []


def test_private_zone_access_flag():
    d, beacons = device(make_profile(compiled_sdk="2.3", private_zone_file_access=False))
    run_attack(d, 2)
    assert beacons == []


def test_rendering_points_independent():
    prof = make_profile(js=RenderPoints(user_bar=True, external_intent=True),
                        patch_modes=PatchModes(disable_js_in_file=frozenset({"user_bar"})))
    d, beacons = device(prof)
    payload = forge(AttackSpec(AttackId.PROBE_JS, PKG, "4.3", "k", "http://r"))
    d.stage_payload(PKG, payload)
    d.user_bar_load(PKG, payload.load_url)
    d.send_intent(PKG, COMP, ACTION_VIEW, payload.load_url)
    cons = [u.split("&con=")[1].split("&")[0] for u in beacons]
    assert cons == ["", "reqflag"]


def test_virtual_clock_is_fast():
    d, beacons = device(make_profile(compiled_sdk="4.3"))
    start = time.perf_counter()
    run_attack(d, 4)
    d.advance_time(10 ** 9)
    assert time.perf_counter() - start < 0.5 and d.now > 10 ** 9


def test_clock_only_moves_forward():
    d, _ = device()
    with pytest.raises(ValueError):
        d.advance_time(-1)


def test_deterministic():
    def once():
        d, beacons = device(make_profile(compiled_sdk="2.3"))
        traces = [run_attack(d, a).trace.events for a in (2, 3, 4)]
        return traces, beacons
    assert once() == once()


# -- filesystem --

def test_zone_escape():
    fs = VirtualFS()
    with pytest.raises(ZoneEscape):
        fs.write(Zone.private("p"), "../q/secret", b"x")
    with pytest.raises(ZoneEscape):
        split_device_path("/etc/passwd", "p")
    assert split_device_path("/data/data/q/a/../b", "p") == (Zone.private("q"), "b")


def test_mirror_stays_inside_state_dir(tmp_path):
    state = tmp_path / "state"
    d, _ = device(make_profile(compiled_sdk="4.3"), state_dir=state)
    run_attack(d, 4)
    link = state / PKG / "sdcard" / "exploits" / PKG / "4.html"
    assert link.is_symlink()
    assert link.resolve().is_relative_to(state.resolve())
    assert link.read_bytes() == d.read_file(Zone.private(PKG), "app_data/Cookies")
    outside = [p for p in tmp_path.rglob("*") if not p.is_relative_to(state)]
    assert outside == []


def test_dangling_symlink_not_mirrored(tmp_path):
    fs = VirtualFS(tmp_path)
    fs.symlink(Zone.sdcard("p"), "x", "/etc/passwd")
    assert (tmp_path / "p" / "sdcard" / "x.symlink").read_text() == "/etc/passwd"
    with pytest.raises(FileExistsError):
        fs.symlink(Zone.sdcard("p"), "x", "/etc/shadow")


def test_adb_backend_unsupported():
    adb = AdbBackend("serial", "4.4")
    with pytest.raises(NotImplementedError):
        adb.install(make_profile())


# -- profiles on disk --

def test_corpus_loads(corpus_dir):
    profiles = load_corpus(corpus_dir)
    assert len(profiles) >= 20
    assert [p.package for p in profiles] == sorted(p.package for p in profiles)


def test_profile_dict_round_trip(corpus_dir, tmp_path):
    for path in sorted(corpus_dir.glob("*.json")):
        prof = load_profile(path)
        data = profile_to_dict(prof, str(corpus_dir / json.loads(path.read_text())["manifest"]))
        out = tmp_path / path.name
        out.write_text(json.dumps(data))
        assert load_profile(out) == prof


def test_bad_profile_values(tmp_path):
    (tmp_path / "m.xml").write_text('<manifest package="p"><application/></manifest>')
    for bad in ({"engine": "mystery"}, {"patch_modes": ["nope"]},
                {"patch_modes": [{"disable_js_in_file": ["sidebar"]}]}):
        (tmp_path / "p.json").write_text(json.dumps({"package": "p", "manifest": "m.xml", **bad}))
        with pytest.raises(ValueError):
            load_profile(tmp_path / "p.json")
