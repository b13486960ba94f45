"""Reachability for state-extended ground tree rewrite systems with
reversal-bounded counters, via letter-count formulas over a phase-indexed
product system, solved by a built-in bounded solver or an external
SMT-LIB process, with replay-certified witnesses."""

from . import automata, engine, modes, parikh, presburger, reduction, senescent
from . import smtclient, solver, system, trees

__all__ = [
    "automata",
    "engine",
    "modes",
    "parikh",
    "presburger",
    "reduction",
    "senescent",
    "smtclient",
    "solver",
    "system",
    "trees",
]
