"""Command-line front end.

Five subcommands: ``run`` a program and print the final state, ``check``
an assertion against a state, ``prove`` a proof script, ``fuzz`` the
dual weakest-precondition semantics with random programs, and ``case``
for the bundled protocol regressions.  Exit codes are stable: 0 for
success, 1 when a check or verdict fails, 2 for parse errors, 3 for
semantic errors such as domain mismatches.  Randomized subcommands are
bit-reproducible for a fixed ``--seed``, and ``--jobs`` never changes
output, only wall-clock time.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .assertion import (
    And,
    AtomD,
    AtomProj,
    AtomU,
    Formula,
    FormulaError,
    free,
    parse_formula,
    print_formula,
    satisfies,
)
from .casestudies import CaseStudyError, run_case
from .oracle import random_program, sample_satisfying
from .program import (
    Program,
    ProgramError,
    denote,
    dual_wp,
    parse_program,
)
from .proofsys import ProofError, check_proof, parse_proof
from .state import (
    Manifest,
    Projection,
    QState,
    RegSet,
    StateError,
    VarDecl,
    matrix_from_json,
    restrict,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_PARSE = 2
EXIT_SEMANTIC = 3


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read(path: str) -> str:
    try:
        with open(path) as f:
            return f.read()
    except OSError as e:
        raise _Exit(EXIT_SEMANTIC, f"cannot read {path}: {e}") from None


def _load_manifest(path: str | None) -> Manifest | None:
    if path is None:
        return None
    try:
        return Manifest.from_dict(json.loads(_read(path)))
    except (json.JSONDecodeError, StateError, ValueError) as e:
        raise _Exit(EXIT_PARSE, f"bad manifest {path}: {e}") from None


def _cnum(x) -> complex:
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(float(x[0]), float(x[1]))
    return complex(x)


def _load_state(path: str) -> QState:
    try:
        data = json.loads(_read(path))
        regs = RegSet(VarDecl(str(n), int(d)) for n, d in data["dims"].items())
        weight = float(data.get("weight", 1.0))
        if "vector" in data:
            vec = np.array([_cnum(x) for x in data["vector"]])
            return QState.from_vector(regs, vec, weight=weight)
        return QState(regs, matrix_from_json(data["matrix"]))
    except _Exit:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise _Exit(EXIT_PARSE, f"bad state file {path}: {e}") from None
    except StateError as e:
        raise _Exit(EXIT_SEMANTIC, f"bad state in {path}: {e}") from None


def _zeros_state(regs: RegSet) -> QState:
    vec = np.zeros(regs.dim)
    vec[0] = 1.0
    return QState.from_vector(regs, vec)


def _parse_prog(text: str, manifest: Manifest | None) -> Program:
    try:
        return parse_program(text, manifest)
    except ProgramError as e:
        raise _Exit(EXIT_PARSE, f"parse error: {e}") from None


def _fmt_c(z: complex) -> str:
    re = f"{z.real:.6g}"
    if abs(z.imag) < 5e-13:
        return re
    sign = "+" if z.imag >= 0 else "-"
    return f"{re}{sign}{abs(z.imag):.6g}i"


def _print_matrix(m: np.ndarray, out) -> None:
    for row in np.asarray(m):
        out.write("  " + "  ".join(_fmt_c(complex(z)) for z in row) + "\n")


# --- run -----------------------------------------------------------------------


def _cmd_run(args) -> tuple[bool, dict]:
    manifest = _load_manifest(args.manifest)
    prog = _parse_prog(_read(args.program), manifest)
    state = _load_state(args.input) if args.input else _zeros_state(prog.regs)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            out = denote(prog, state)
    except (ProgramError, StateError) as e:
        raise _Exit(EXIT_SEMANTIC, f"semantic error: {e}") from None
    notes = [str(w.message) for w in caught]
    print("registers: " + " ".join(f"{d.name}:{d.dim}" for d in out.domain))
    print(f"trace: {out.trace:.6g}")
    for n in notes:
        print(f"warning: {n}")
    if args.keep:
        names = [n.strip() for n in args.keep.split(",") if n.strip()]
        try:
            kept = out.domain.restricted_to(names)
        except StateError as e:
            raise _Exit(EXIT_SEMANTIC, f"semantic error: {e}") from None
        marg = restrict(out, kept)
        print(f"marginal on [{','.join(kept.names)}]:")
        _print_matrix(marg.mat, sys.stdout)
    else:
        print("final density matrix:")
        _print_matrix(out.mat, sys.stdout)
    return True, {"trace": out.trace, "warnings": notes}


# --- check ---------------------------------------------------------------------


def _residual(rho: QState, phi: Formula, tol: float | None) -> str | None:
    # numeric distance for the atom kinds that have one
    if isinstance(phi, AtomU):
        m = restrict(rho, phi.regs).mat
        d = phi.regs.dim
        w = rho.trace
        return f"{float(np.max(np.abs(m - w * np.eye(d) / d))):.3e}"
    if isinstance(phi, AtomProj):
        m = restrict(rho, phi.proj.domain).mat
        p = phi.proj.matrix()
        gap = np.eye(p.shape[0]) - p
        return f"{float(np.real(np.trace(gap @ m @ gap))):.3e}"
    if isinstance(phi, AtomD):
        missing = sorted(set(phi.regs.names) - set(rho.domain.names))
        return f"missing {','.join(missing)}" if missing else None
    return None


def _diagnose(rho: QState, phi: Formula, tol: float | None) -> tuple[str, str | None]:
    """Innermost violated subformula plus a numeric residual if it has one."""
    if isinstance(phi, And):
        for side in (phi.left, phi.right):
            if not satisfies(rho, side, atol=tol):
                return _diagnose(rho, side, tol)
    return print_formula(phi), _residual(rho, phi, tol)


def _cmd_check(args) -> tuple[bool, dict]:
    manifest = _load_manifest(args.manifest)
    try:
        phi = parse_formula(_read(args.formula), manifest)
    except FormulaError as e:
        raise _Exit(EXIT_PARSE, f"parse error: {e}") from None
    if args.state:
        rho = _load_state(args.state)
    else:
        if not args.program:
            raise _Exit(EXIT_PARSE, "check needs --state or --program")
        prog = _parse_prog(_read(args.program), manifest)
        rho = _load_state(args.input) if args.input else _zeros_state(prog.regs)
        try:
            rho = denote(prog, rho)
        except (ProgramError, StateError) as e:
            raise _Exit(EXIT_SEMANTIC, f"semantic error: {e}") from None
    if not free(phi).issubset(rho.domain):
        missing = sorted(set(free(phi).names) - set(rho.domain.names))
        raise _Exit(EXIT_SEMANTIC,
                    f"domain error: state lacks registers {','.join(missing)}")
    ok = satisfies(rho, phi, atol=args.tol)
    if ok:
        print("satisfied")
        return True, {"satisfied": True}
    where, res = _diagnose(rho, phi, args.tol)
    print("violated")
    print(f"violated atom: {where}")
    if res is not None:
        print(f"residual: {res}")
    return False, {"satisfied": False, "violated": where, "residual": res}


# --- prove ---------------------------------------------------------------------


def _cmd_prove(args) -> tuple[bool, dict]:
    manifest = _load_manifest(args.manifest)
    try:
        root = parse_proof(_read(args.proof), manifest)
    except (ProofError, ProgramError, FormulaError) as e:
        raise _Exit(EXIT_PARSE, f"parse error: {e}") from None
    try:
        report = check_proof(root, atol=args.tol)
    except (StateError, ProofError) as e:
        raise _Exit(EXIT_SEMANTIC, f"semantic error: {e}") from None
    width = max(len(p) for p, _ in report.rows)
    print(f"{'node':<{width}}  {'rule':<7} status")
    for path, row in report.rows:
        line = f"{path:<{width}}  {row.rule:<7} {row.status}"
        if row.detail:
            line += f" ({row.detail})"
        print(line)
    passed = sum(1 for _, r in report.rows if r.ok)
    print(f"{passed}/{len(report.rows)} nodes pass")
    if report.empirical:
        print("empirical leaves (tested, not derived): "
              + " ".join(report.empirical))
    return report.ok, {
        "ok": report.ok,
        "nodes": len(report.rows),
        "failures": list(report.failures),
        "empirical": list(report.empirical),
    }


# --- fuzz ----------------------------------------------------------------------


def _random_projection(rng: np.random.Generator, regs: RegSet) -> Projection:
    dim = regs.dim
    rank = int(rng.integers(1, dim))
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    q, _ = np.linalg.qr(g)
    return Projection.from_matrix(regs, q @ q.conj().T)


def _fuzz_trial(seed: int, index: int, tol: float | None) -> tuple[str, bool]:
    rng = np.random.default_rng((seed << 24) + index)
    names = ("x", "y", "z")[: int(rng.integers(2, 4))]
    regs = RegSet(VarDecl(n, 2) for n in names)
    prog = random_program(rng, regs, size=5)
    post = _random_projection(rng, regs)
    wp = dual_wp(prog, post)
    if wp.rank == 0:
        return f"trial {index}: empty precondition, vacuous", True
    rho = sample_satisfying(AtomProj(wp), rng, domain=regs, atol=tol)
    if rho is None:
        return f"trial {index}: sampler gave up", True
    out = denote(prog, rho)
    margin = (tol if tol is not None else 1e-9) * 100
    if satisfies(out, AtomProj(post), atol=margin):
        return f"trial {index}: ok", True
    return f"trial {index}: COUNTEREXAMPLE (wp rank {wp.rank})", False


def _cmd_fuzz(args) -> tuple[bool, dict]:
    trials = args.trials if args.trials is not None else 100
    indices = range(trials)
    if args.jobs and args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(
                lambda i: _fuzz_trial(args.seed, i, args.tol), indices))
    else:
        results = [_fuzz_trial(args.seed, i, args.tol) for i in indices]
    bad = [line for line, ok in results if not ok]
    for line, ok in results:
        if not ok or args.verbose:
            print(line)
    print(f"fuzz: {trials} trials, {len(bad)} counterexamples (seed {args.seed})")
    return not bad, {"trials": trials, "counterexamples": len(bad)}


# --- case ----------------------------------------------------------------------


def _cmd_case(args) -> tuple[bool, dict]:
    try:
        rep = run_case(args.name, seed=args.seed,
                       trials=args.trials if args.trials is not None else 100)
    except CaseStudyError as e:
        raise _Exit(EXIT_SEMANTIC, f"semantic error: {e}") from None
    print(f"case {rep.name}:")
    for line in rep.lines:
        print(f"  {line}")
    print(f"result: {'ok' if rep.ok else 'FAIL'}")
    return rep.ok, {"name": rep.name, "ok": rep.ok, "lines": list(rep.lines)}


# --- wiring --------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="register/gate manifest (JSON)")
    common.add_argument("--tol", type=float, default=None,
                        help="numeric tolerance override")
    common.add_argument("--report", help="write a JSON report to this path")

    p = argparse.ArgumentParser(
        prog="qseplogic",
        description="simulate, check, and prove quantum while-programs")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common],
                         help="run a program and print the final state")
    run.add_argument("program", help="program file")
    run.add_argument("--input", help="input state file (JSON); default all-zeros")
    run.add_argument("--keep", help="comma-separated registers to marginalize to")
    run.set_defaults(fn=_cmd_run)

    check = sub.add_parser("check", parents=[common],
                           help="check a formula against a state")
    check.add_argument("formula", help="formula file")
    check.add_argument("--state", help="state file (JSON)")
    check.add_argument("--program", help="program whose output is checked")
    check.add_argument("--input", help="input state for --program")
    check.set_defaults(fn=_cmd_check)

    prove = sub.add_parser("prove", parents=[common],
                           help="check a proof script node by node")
    prove.add_argument("proof", help="proof script file")
    prove.set_defaults(fn=_cmd_prove)

    fuzz = sub.add_parser("fuzz", parents=[common],
                          help="fuzz the dual weakest precondition")
    fuzz.add_argument("--seed", type=int, default=0)
    fuzz.add_argument("--trials", type=int, default=None)
    fuzz.add_argument("--jobs", type=int, default=1,
                      help="worker threads; output is identical for any value")
    fuzz.add_argument("--verbose", action="store_true",
                      help="print every trial, not just failures")
    fuzz.set_defaults(fn=_cmd_fuzz)

    case = sub.add_parser("case", parents=[common],
                          help="run a bundled case-study regression")
    case.add_argument("name", choices=["qotp", "qss", "qss_e", "vqa"])
    case.add_argument("--seed", type=int, default=7)
    case.add_argument("--trials", type=int, default=None)
    case.set_defaults(fn=_cmd_case)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        ok, details = args.fn(args)
    except _Exit as e:
        print(str(e), file=sys.stderr)
        return e.code
    if args.report:
        doc = {"command": args.command, "ok": ok, "details": details}
        with open(args.report, "w") as f:
            json.dump(doc, f, indent=1)
            f.write("\n")
    return EXIT_OK if ok else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
