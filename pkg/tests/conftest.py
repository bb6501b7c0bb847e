from __future__ import annotations

from pathlib import Path

import pytest

from filecross.manifest import (
    ACTION_MAIN,
    ACTION_VIEW,
    CATEGORY_BROWSABLE,
    CATEGORY_DEFAULT,
    CATEGORY_LAUNCHER,
    IntentFilter,
    ManifestComponent,
    ManifestDoc,
)
from filecross.sandbox import BrowserProfile, RenderPoints

CORPUS = Path(__file__).resolve().parents[1] / "src" / "filecross" / "data" / "corpus"

VB = IntentFilter.of([ACTION_VIEW], [CATEGORY_DEFAULT, CATEGORY_BROWSABLE])
VB_WEB = IntentFilter.of([ACTION_VIEW], [CATEGORY_DEFAULT, CATEGORY_BROWSABLE],
                         ["http", "https", "file"])
ML = IntentFilter.of([ACTION_MAIN], [CATEGORY_LAUNCHER])


def browser_doc(pkg: str = "test.browser", exposure: str = "intentional") -> ManifestDoc:
    if exposure == "intentional":
        filters = (ML, VB_WEB)
    elif exposure == "unintentional":
        filters = (ML,)
    else:
        filters = ()
    return ManifestDoc(pkg, (ManifestComponent(f"{pkg}.Main", filters=filters),))


def make_profile(pkg: str = "test.browser", exposure: str = "intentional", js=True,
                 **kw) -> BrowserProfile:
    if isinstance(js, bool):
        js = RenderPoints(js, js)
    browsing = kw.pop("browsing_interface", f"{pkg}.Main")
    return BrowserProfile(package=pkg, manifest=browser_doc(pkg, exposure), js_in_file=js,
                          browsing_interface=browsing, **kw)


@pytest.fixture
def corpus_dir() -> Path:
    return CORPUS


# acceptance lines, printed at the end of the session

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record_acceptance(number: int, title: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE[f"{number:02d}"] = (passed, f"criterion {number}: {title}" +
                                   (f" [{detail}]" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, line = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {line}")
