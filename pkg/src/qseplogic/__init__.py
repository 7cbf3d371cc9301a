"""Quantum separation logic toolkit.

Density-matrix semantics for a quantum while-language, BI-style assertions
over domain-tagged states, a modification calculus, a proof-rule checker,
and executable protocol regressions (one-time pad, secret sharing, a small
variational circuit). Submodules are layered bottom-up:

``linalg``
    dense complex matrix kernel and the lattice of closed subspaces
``state``
    registers, domains, partial density operators, gate manifests
``program``
    while-language AST, parser, forward semantics, weakest preconditions
``assertion``
    formulas, satisfaction, fragment classifiers, global entailment
``modification``
    command and channel modification of formulas
``proofsys``
    judgments, rule checking, proof scripts
``oracle``
    sampling-based validity checking and fuzzing
``casestudies``
    protocol and circuit builders with their regression targets
``cli``
    command-line front end
"""

__version__ = "0.1.0"

__all__ = [
    "linalg",
    "state",
    "program",
    "assertion",
    "modification",
    "proofsys",
    "oracle",
    "casestudies",
    "cli",
]
