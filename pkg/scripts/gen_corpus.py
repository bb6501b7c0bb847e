#!/usr/bin/env python3
"""Regenerate the shipped synthetic profile corpus under src/filecross/data/corpus.

Each profile records the cells its planted flaws should make vulnerable in
``planted``; those are computed here from the attack condition table, not
from the sandbox.
"""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "filecross" / "data" / "corpus"
VERSIONS = ("4.0", "4.3", "4.4")

VIEW = "android.intent.action.VIEW"
MAIN = "android.intent.action.MAIN"
BROWSABLE = "android.intent.category.BROWSABLE"
DEFAULT = "android.intent.category.DEFAULT"
LAUNCHER = "android.intent.category.LAUNCHER"

LAUNCH = ([MAIN], [LAUNCHER], [])
WEB = ([VIEW], [DEFAULT, BROWSABLE], ["http", "https"])
WEB_FILE = ([VIEW], [DEFAULT, BROWSABLE], ["http", "https", "file"])


def manifest(pkg, activities):
    lines = ['<?xml version="1.0" encoding="utf-8"?>',
             '<manifest xmlns:android="http://schemas.android.com/apk/res/android" '
             f'package="{pkg}">', "  <application>"]
    for act in activities:
        tag = act.get("tag", "activity")
        attrs = f'android:name="{act["name"]}"'
        if "target" in act:
            attrs += f' android:targetActivity="{act["target"]}"'
        if "exported" in act:
            attrs += f' android:exported="{str(act["exported"]).lower()}"'
        lines.append(f"    <{tag} {attrs}>")
        for actions, cats, schemes in act.get("filters", []):
            lines.append("      <intent-filter>")
            lines += [f'        <action android:name="{a}" />' for a in actions]
            lines += [f'        <category android:name="{c}" />' for c in cats]
            lines += [f'        <data android:scheme="{s}" />' for s in schemes]
            lines.append("      </intent-filter>")
        lines.append(f"    </{tag}>")
    lines += ["  </application>", "</manifest>"]
    return "\n".join(lines) + "\n"


def vtuple(v):
    return tuple(int(x) for x in v.split("."))


def planted(p, exposed):
    patches = p.get("patch_modes", [])
    blocked = "block_external_file_urls" in patches
    js_off = set()
    for item in patches:
        if isinstance(item, dict):
            js_off |= set(item["disable_js_in_file"])
    file_ok = (p.get("file_scheme_supported", True) and p.get("handles_external_file_intents", True)
               and not blocked)
    priv = p.get("private_zone_file_access", True)
    js = p.get("js_in_file", {}).get("external_intent", True) and "external_intent" not in js_off
    auto = p.get("auto_download_unrenderable", False) and "disable_private_unrenderable" not in patches
    out = {"A1": [], "A2": [], "A3": [], "A4": []}
    for ver in VERSIONS:
        engine = p.get("engine", "system_default")
        if isinstance(engine, dict):
            f2f = engine["custom"]["allow_file_to_file"]
            f2h = engine["custom"]["allow_file_to_http"]
            sym = engine["custom"]["symlink_flaw_present"]
        else:
            loose = (vtuple(ver) < (4, 1) or vtuple(p.get("compiled_sdk", "4.3")) < (4, 1)
                     or p.get("uses_legacy_file_access_api", False))
            f2f = f2h = loose
            sym = not p.get("symlink_mitigated", False)
        base = exposed and file_ok
        if base and priv and auto:
            out["A1"].append(ver)
        if base and priv and js and f2f:
            out["A2"].append(ver)
        if base and js and f2h:
            out["A3"].append(ver)
        if base and priv and js and sym:
            out["A4"].append(ver)
    return out


def browser_acts(main=".BrowserActivity", file=True):
    return [{"name": main, "filters": [LAUNCH, WEB_FILE if file else WEB]}]


PROFILES = [
    # name, activities, flags, exposed
    ("synth.autodownload", browser_acts(), dict(
        engine={"custom": {"allow_file_to_file": False, "allow_file_to_http": False,
                           "symlink_flaw_present": False}},
        native_libs=["libmozglue.so", "libplugin.so"], auto_download_unrenderable=True,
        category="Popular"), True),
    ("synth.autodownload.patched", browser_acts(), dict(
        engine={"custom": {"allow_file_to_file": False, "allow_file_to_http": False,
                           "symlink_flaw_present": False}},
        native_libs=["libmozglue.so"], auto_download_unrenderable=True,
        patch_modes=["disable_private_unrenderable"], category="Popular"), True),
    ("synth.oldsdk", browser_acts(), dict(compiled_sdk="2.3", category="Popular"), True),
    ("synth.oldsdk.autodl", browser_acts(), dict(compiled_sdk="2.2",
                                                  auto_download_unrenderable=True), True),
    ("synth.newsdk", browser_acts(), dict(compiled_sdk="4.3", category="Fast browsing"), True),
    ("synth.legacyapi", browser_acts(), dict(compiled_sdk="4.4", uses_legacy_file_access_api=True,
                                              category="Specialized"), True),
    ("synth.symlinksafe", browser_acts(), dict(compiled_sdk="2.3", symlink_mitigated=True), True),
    ("synth.noprivate", browser_acts(), dict(compiled_sdk="4.3", private_zone_file_access=False,
                                              native_libs=["libchromeview.so"]), True),
    ("synth.nofile", browser_acts(file=False), dict(compiled_sdk="2.3",
                                                     file_scheme_supported=False), True),
    ("synth.noexternalfile", browser_acts(file=False), dict(
        compiled_sdk="2.3", handles_external_file_intents=False), True),
    ("synth.nojs", browser_acts(), dict(compiled_sdk="2.3", auto_download_unrenderable=False,
                                         js_in_file={"user_bar": False, "external_intent": False},
                                         category="Tablet"), True),
    ("synth.halfpatched", browser_acts(), dict(
        compiled_sdk="2.3", patch_modes=[{"disable_js_in_file": ["user_bar"]}],
        category="Popular"), True),
    ("synth.fullypatched", browser_acts(), dict(
        compiled_sdk="2.3", patch_modes=[{"disable_js_in_file": ["user_bar", "external_intent"]}],
        category="Popular"), True),
    ("synth.blockexternal", browser_acts(), dict(
        compiled_sdk="2.3", patch_modes=["block_external_file_urls"]), True),
    ("synth.unintentional", [{"name": ".Main", "filters": [LAUNCH]}],
     dict(compiled_sdk="2.3", category="Privacy"), True),
    ("synth.noebi", [{"name": ".Settings"}, {"name": ".Viewer", "filters": [
        (["android.intent.action.SEND"], [DEFAULT], [])]}], dict(compiled_sdk="2.3"), False),
    ("synth.notexported", [{"name": ".Browser", "exported": False}], dict(compiled_sdk="2.3"),
     False),
    ("synth.customweak", browser_acts(), dict(
        engine={"custom": {"allow_file_to_file": True, "allow_file_to_http": True,
                           "symlink_flaw_present": True}},
        native_libs=["libWebCore_UC.so"], dex_strings=["public native void loadUrl(String)"],
        category="Tablet"), True),
    ("synth.customsymlink", browser_acts(), dict(
        engine={"custom": {"allow_file_to_file": False, "allow_file_to_http": False,
                           "symlink_flaw_present": True}},
        native_libs=["libsogouwebcore.so"]), True),
    ("synth.decoy", [
        {"name": ".ManageBookmarkActivity", "filters": [([VIEW], [DEFAULT, BROWSABLE], ["http"])]},
        {"name": ".Main", "filters": [LAUNCH, WEB]}],
     dict(compiled_sdk="2.3", file_scheme_supported=True, browsing_interface="synth.decoy.Main"),
     True),
    ("synth.fileviewer", [
        {"name": ".DocViewer", "filters": [([VIEW], [DEFAULT, BROWSABLE], ["file"])]},
        {"name": ".Browser", "filters": [([VIEW], [DEFAULT, BROWSABLE], ["http", "https"])]}],
     dict(compiled_sdk="4.3", browsing_interface="synth.fileviewer.Browser"), True),
    ("synth.alias", [
        {"name": ".Launcher", "filters": [LAUNCH]},
        {"tag": "activity-alias", "name": ".WebAlias", "target": ".Launcher",
         "filters": [WEB]}], dict(compiled_sdk="2.3"), True),
    ("synth.hardened", browser_acts(), dict(compiled_sdk="4.4", symlink_mitigated=True,
                                             private_zone_file_access=False), True),
    ("synth.tie", [
        {"name": ".First", "filters": [([VIEW], [DEFAULT, BROWSABLE], ["http"])]},
        {"name": ".Second", "filters": [([VIEW], [DEFAULT, BROWSABLE], ["http"])]}],
     dict(compiled_sdk="4.3", browsing_interface="synth.tie.First"), True),
]


def main():
    (OUT / "manifests").mkdir(parents=True, exist_ok=True)
    for old in OUT.glob("*.json"):
        old.unlink()
    for pkg, acts, flags, exposed in PROFILES:
        (OUT / "manifests" / f"{pkg}.xml").write_text(manifest(pkg, acts))
        record = {"package": pkg, "manifest": f"manifests/{pkg}.xml", **flags}
        record["planted"] = planted(flags, exposed)
        (OUT / f"{pkg}.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(PROFILES)} profiles to {OUT}")


if __name__ == "__main__":
    main()
