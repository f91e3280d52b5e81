"""Bundled reference data: certified panel curves, planner curves, sensor model."""

from __future__ import annotations

from importlib import resources

from .certified import CertifiedCurve, parse_certified_curve

CERTIFIED = ("certified_99", "certified_50a", "certified_50b", "certified_25", "certified_12")
NOMINAL = {"certified_99": 0.99, "certified_50a": 0.5, "certified_50b": 0.5, "certified_25": 0.25,
           "certified_12": 0.125}


def fixture_text(filename: str) -> str:
    return resources.files("hypercal").joinpath("data").joinpath(filename).read_text(encoding="utf-8")


def fixture_path(filename: str):
    """Filesystem path of a bundled file (valid for regular installs)."""
    return resources.files("hypercal").joinpath("data").joinpath(filename)


def certified_fixture(name: str) -> CertifiedCurve:
    """One of ``CERTIFIED``, with its nominal grade."""
    if name not in NOMINAL:
        raise KeyError(f"unknown certified fixture {name!r}; choose from {CERTIFIED}")
    return parse_certified_curve(fixture_text(name + ".csv"), nominal=NOMINAL[name])


def panel_set():
    """The four-step 99 / 50 / 25 / 12.5 % reference set."""
    return [certified_fixture(n) for n in ("certified_99", "certified_50a", "certified_25", "certified_12")]
