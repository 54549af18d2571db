"""Bundled example programs."""
from __future__ import annotations

from importlib import resources

from .reader import ProgramSet, parse

PROGRAMS = {
    "vote": ("vote.poaps", "vote-better?"),
    "improve": ("improve.poaps", "improve"),
    "iterative-improvement": ("iterative_improvement.poaps", "it-i"),
    "find-fix-verify": ("find_fix_verify.poaps", "ffv"),
    "multi-vote": ("multi_vote.poaps", "m-vote"),
    "move": ("move.poaps", "move"),
    "rocksample": ("rocksample.poaps", "r-s"),
    "identity": ("identity.poaps", "id"),
}


def source(name: str) -> str:
    filename, _ = PROGRAMS[name]
    return resources.files("poaps.programs").joinpath(filename).read_text(encoding="utf-8")


def load(name: str) -> ProgramSet:
    ps = parse(source(name))
    ps.entry = PROGRAMS[name][1]
    return ps
