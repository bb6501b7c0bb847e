import urllib.error
import urllib.request

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filecross.receiver import (
    Beacon,
    BeaconFormatError,
    BeaconStore,
    ExpectedTarget,
    ExperimentRegistry,
    Outcome,
    Receiver,
    adjudicate,
    load_beacon_log,
    parse_beacon_query,
    probe_capabilities,
    serve,
)


def fresh(kids=("k1",), log_dir=None):
    return Receiver(ExperimentRegistry(kids), BeaconStore(log_dir))


def test_probe_beacon_parsed():
    r = fresh()
    assert r.handle("/req?pkg=p&atk=5&con=reqflag&ver=4.3&kid=k1") == (200, b"ok")
    (b,) = r.store.snapshot("k1")
    assert (b.pkg, b.atk, b.con, b.ver, b.kid) == ("p", 5, "reqflag", "4.3", "k1")


def test_empty_con():
    r = fresh()
    r.handle("/req?pkg=p&atk=7&con=&ver=4.3&kid=k1")
    assert r.store.snapshot()[0].con == ""


@pytest.mark.parametrize("target", [
    "/req?atk=2",
    "/req?pkg=p&atk=x&con=&ver=4.3&kid=k1",
    "/req?pkg=p&atk=9&con=&ver=4.3&kid=k1",
    "/req?pkg=p&atk=2&atk=3&con=&ver=4.3&kid=k1",
    "/req?pkg=&atk=2&con=&ver=4.3&kid=k1",
])
def test_malformed_is_400(target):
    assert fresh().handle(target)[0] == 400


def test_oversize_and_other_paths():
    r = fresh()
    assert r.handle("/req?pkg=p&atk=2&ver=4.3&kid=k1&con=" + "a" * 17000)[0] == 414
    assert r.handle("/other?pkg=p")[0] == 404
    assert len(r.store) == 0


def test_unknown_kid_quarantined():
    r = fresh()
    assert r.handle("/req?pkg=p&atk=5&con=reqflag&ver=4.3&kid=stranger") == (200, b"ok")
    assert len(r.store) == 0 and r.store.quarantine[0].kid == "stranger"


def test_http_endpoint(tmp_path):
    with serve("127.0.0.1:0", ExperimentRegistry(["k1"]), tmp_path) as server:
        with urllib.request.urlopen(server.base_url + "/req?pkg=p&atk=5&con=reqflag"
                                    "&ver=4.3&kid=k1") as resp:
            assert resp.status == 200 and resp.read() == b"ok"
        with pytest.raises(urllib.error.HTTPError) as err:
            urllib.request.urlopen(server.base_url + "/req?atk=2")
        assert err.value.code == 400
    assert load_beacon_log(tmp_path / "beacons-k1.log")[0].con == "reqflag"


def test_log_round_trip(tmp_path):
    store = BeaconStore(tmp_path)
    beacons = [Beacon("p", 2, "a\tb\nc\udcff", "4.3", "k1", 1.5, "127.0.0.1", True),
               Beacon("p", 7, "", "4.0", "k1")]
    for b in beacons:
        store.add(b)
    assert load_beacon_log(tmp_path / "beacons-k1.log") == beacons


# -- adjudication --

def registry_for(*targets, kid="k1"):
    reg = ExperimentRegistry([kid])
    for t in targets:
        reg.expect(kid, t)
    return reg


def b(atk, con, pkg="p", ver="4.3", kid="k1"):
    return Beacon(pkg, atk, con, ver, kid)


def test_verdict_examples():
    content = b"SID=42"
    reg = registry_for(ExpectedTarget.for_content("p", "4.3", 2, content),
                       ExpectedTarget.for_content("p", "4.3", 3, b"mail"),
                       ExpectedTarget.for_content("p", "4.3", 4, content))
    out = adjudicate([b(2, "SID=42"), b(3, "wrong")], reg, "k1")
    got = {v.attack: v.outcome for v in out.verdicts}
    assert got == {2: Outcome.VULNERABLE, 3: Outcome.NOT_VULNERABLE, 4: Outcome.NO_RESPONSE}
    assert out.verdicts[0].evidence.con == "SID=42"


def test_receipt_only():
    reg = registry_for(ExpectedTarget.for_content("p", "4.3", 3, b"mail"))
    assert adjudicate([b(3, "wrong")], reg, "k1", receipt_only=True).verdicts[0].outcome \
        is Outcome.VULNERABLE


def test_missing_beacon_with_scripts_running():
    reg = registry_for(ExpectedTarget.for_content("p", "4.3", 4, b"x"))
    out = adjudicate([b(7, "reqflag")], reg, "k1")
    assert out.verdicts[0].outcome is Outcome.NOT_VULNERABLE
    assert out.capabilities[("p", "4.3")].js_in_file is True


def test_probe_capabilities():
    caps = probe_capabilities([b(5, "reqflag"), b(7, "")])
    assert caps[("p", "4.3")].file_support_sd
    assert not caps[("p", "4.3")].file_support_private
    assert caps[("p", "4.3")].js_in_file is False


def test_vulnerable_needs_evidence():
    from filecross.receiver import AttackVerdict
    with pytest.raises(ValueError):
        AttackVerdict("p", 2, "4.3", Outcome.VULNERABLE)


def test_deadline_excludes_late_beacons():
    reg = registry_for(ExpectedTarget.for_content("p", "4.3", 2, b"x"))
    late = Beacon("p", 2, "x", "4.3", "k1", received_at=20.0)
    assert adjudicate([late], reg, "k1", deadline=10.0).verdicts[0].outcome is Outcome.NO_RESPONSE


CONTENT = {2: b"SID=1", 3: b"mail", 4: b"SID=1"}
beacon_st = st.builds(
    Beacon,
    pkg=st.sampled_from(["p", "q"]),
    atk=st.sampled_from([2, 3, 4, 5, 7]),
    con=st.sampled_from(["", "reqflag", "SID=1", "mail", "junk"]),
    ver=st.sampled_from(["4.0", "4.3"]),
    kid=st.sampled_from(["k1", "k2"]),
    received_at=st.floats(0, 100),
)


def full_registry():
    reg = ExperimentRegistry(["k1", "k2"])
    for kid in ("k1", "k2"):
        for pkg in ("p", "q"):
            for ver in ("4.0", "4.3"):
                for atk, c in CONTENT.items():
                    reg.expect(kid, ExpectedTarget.for_content(pkg, ver, atk, c))
    return reg


def outcomes(beacons, kid="k1"):
    return {v.key: v.outcome for v in adjudicate(beacons, full_registry(), kid).verdicts}


@settings(max_examples=200)
@given(st.lists(beacon_st, max_size=12))
def test_serialized_round_trip_same_verdicts(beacons):
    reparsed = [Beacon.from_line(x.to_line()) for x in beacons]
    assert outcomes(reparsed) == outcomes(beacons)


@settings(max_examples=200)
@given(st.lists(beacon_st, max_size=10), st.lists(beacon_st, max_size=6))
def test_monotone(beacons, more):
    before, after = outcomes(beacons), outcomes(beacons + more)
    for key, o in before.items():
        if o is Outcome.VULNERABLE:
            assert after[key] is Outcome.VULNERABLE


@settings(max_examples=200)
@given(st.lists(beacon_st, max_size=10), st.lists(beacon_st, max_size=6))
def test_kid_isolation(beacons, noise):
    other = [x for x in noise if x.kid == "k2"]
    assert outcomes(beacons + other) == outcomes(beacons)


@given(st.text(max_size=40))
def test_parser_never_crashes(query):
    try:
        parse_beacon_query(query)
    except BeaconFormatError:
        pass
