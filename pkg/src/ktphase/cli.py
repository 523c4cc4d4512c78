"""Front end: theory files, pipeline reports, and the command line.

Theory files are line-oriented::

    theory NAME
    dim D
    [vdim N]                                # internal index range, default D
    coords x0 x1 ... [@transversal xk]      # default transversal: first
    field NAME [base=B] [internal=I] [antisym] [positive]
    background NAME [base=B] [constant] [time-independent] [positive]
    function NAME
    metric split h time-independent         # declares hinv (2 indices) and rh
    boundary FIELD ORDER SYMBOL             # boundary symbol name override
    side upper|lower                        # boundary copy of the 1-form
    jetorder N
    lagrangian "EXPR"

Unknown keys are rejected; errors carry line numbers.  Reports serialize
deterministically: UTF-8, sorted keys, floats at 17 significant digits.

Exit codes: 0 all requested checks pass; 1 parse error; 2 check failure;
3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

from . import expr as ex
from . import theories as TH
from . import verify as VF
from .calc_var import (
    BackgroundDecl,
    FieldDecl,
    TheorySpec,
    constraint_extract,
    ibp_split,
    variation,
    vertical_delta,
)
from .errors import CheckFailure, KtError, ParseError

__all__ = ["parse_theory", "emit_theory", "run_pipeline", "emit_report",
           "canonical_json", "RunOptions", "main"]


# ---------------------------------------------------------------------------
# canonical serialization
# ---------------------------------------------------------------------------

def _json_scalar(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if x != x or x in (float("inf"), float("-inf")):
            return json.dumps(str(x))
        return "%.17g" % x
    if isinstance(x, str):
        return json.dumps(x, ensure_ascii=False)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def canonical_json(obj, indent: int = 0) -> str:
    """Deterministic JSON: sorted keys, fixed float format, stable layout."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = []
        for k in sorted(obj, key=str):
            items.append(f'{pad}  {json.dumps(str(k), ensure_ascii=False)}: '
                         f'{canonical_json(obj[k], indent + 1)}')
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}  {canonical_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    return _json_scalar(obj)


# ---------------------------------------------------------------------------
# theory files
# ---------------------------------------------------------------------------

_FLAG_WORDS_FIELD = {"antisym", "positive"}
_FLAG_WORDS_BG = {"constant", "time-independent", "positive"}


def parse_theory(text: str) -> TheorySpec:
    """Parse a theory file; raises ParseError with the offending line."""
    name = None
    dim = None
    vdim = 0
    coords = None
    transversal = None
    fields = []
    backgrounds = []
    functions = []
    boundary_names = []
    side = 1
    jet_order = ex.DEFAULT_MAX_JET_ORDER
    lagrangian_src = None
    lagrangian_line = 0
    seen = set()

    def dup(key, line):
        if key in seen:
            raise ParseError(f"duplicate {key!r} declaration", line)
        seen.add(key)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        key = words[0]
        if key == "theory":
            dup("theory", lineno)
            if len(words) != 2:
                raise ParseError("usage: theory NAME", lineno)
            name = words[1]
        elif key == "dim":
            dup("dim", lineno)
            dim = int(words[1])
        elif key == "vdim":
            dup("vdim", lineno)
            vdim = int(words[1])
        elif key == "coords":
            dup("coords", lineno)
            rest = words[1:]
            names = []
            i = 0
            while i < len(rest):
                if rest[i] == "@transversal":
                    if transversal is not None:
                        raise ParseError("second @transversal mark", lineno)
                    if i + 1 >= len(rest):
                        raise ParseError("@transversal needs a coordinate name", lineno)
                    marked = rest[i + 1]
                    if marked not in names:
                        raise ParseError(f"@transversal names unknown coordinate {marked!r}", lineno)
                    transversal = names.index(marked)
                    i += 2
                    continue
                names.append(rest[i])
                i += 1
            coords = tuple(names)
        elif key == "field":
            decl = _parse_field_line(words, lineno)
            fields.append(decl)
        elif key == "background":
            backgrounds.append(_parse_background_line(words, lineno))
        elif key == "function":
            if len(words) != 2:
                raise ParseError("usage: function NAME", lineno)
            functions.append(words[1])
        elif key == "metric":
            if words[1:] != ["split", "h", "time-independent"]:
                raise ParseError("usage: metric split h time-independent", lineno)
            backgrounds.append(BackgroundDecl("hinv", base=2, time_independent=True))
            backgrounds.append(BackgroundDecl("rh", time_independent=True, positive=True))
        elif key == "boundary":
            if len(words) != 4:
                raise ParseError("usage: boundary FIELD ORDER SYMBOL", lineno)
            boundary_names.append((words[1], int(words[2]), words[3]))
        elif key == "side":
            dup("side", lineno)
            if words[1] not in ("upper", "lower"):
                raise ParseError("side must be 'upper' or 'lower'", lineno)
            side = 1 if words[1] == "upper" else -1
        elif key == "jetorder":
            dup("jetorder", lineno)
            jet_order = int(words[1])
        elif key == "lagrangian":
            dup("lagrangian", lineno)
            rest = line[len("lagrangian"):].strip()
            if not (rest.startswith('"') and rest.endswith('"') and len(rest) >= 2):
                raise ParseError('usage: lagrangian "EXPR"', lineno)
            lagrangian_src = rest[1:-1]
            lagrangian_line = lineno
        else:
            raise ParseError(f"unknown declaration {key!r}", lineno)

    if name is None or dim is None or coords is None:
        raise ParseError("theory, dim, and coords are required")
    if len(coords) != dim:
        raise ParseError(f"dim {dim} but {len(coords)} coordinates")
    if transversal is None:
        transversal = 0
    if lagrangian_src is None:
        raise ParseError("missing lagrangian")

    base = TheorySpec(name=name, dim=dim, coords=coords, transversal=transversal,
                      fields=tuple(fields), backgrounds=tuple(backgrounds),
                      functions=tuple(functions), vdim=vdim, jet_order=jet_order,
                      boundary_side=side, boundary_names=tuple(boundary_names))
    try:
        L = ex.parse(lagrangian_src, base.context())
    except ParseError as exc:
        raise type(exc)(f"in lagrangian: {exc}", lagrangian_line) from exc
    return TheorySpec(name=name, dim=dim, coords=coords, transversal=transversal,
                      fields=tuple(fields), backgrounds=tuple(backgrounds),
                      functions=tuple(functions), lagrangian=L, vdim=vdim,
                      jet_order=jet_order, boundary_side=side,
                      boundary_names=tuple(boundary_names))


def _parse_field_line(words, lineno) -> FieldDecl:
    if len(words) < 2:
        raise ParseError("usage: field NAME [base=B] [internal=I] [antisym] [positive]", lineno)
    name = words[1]
    kw = {"base": 0, "internal": 0, "antisym": False, "positive": False}
    for w in words[2:]:
        if "=" in w:
            k, v = w.split("=", 1)
            if k not in ("base", "internal"):
                raise ParseError(f"unknown field attribute {k!r}", lineno)
            kw[k] = int(v)
        elif w in _FLAG_WORDS_FIELD:
            kw[w] = True
        else:
            raise ParseError(f"unknown field flag {w!r}", lineno)
    return FieldDecl(name, base=kw["base"], internal=kw["internal"],
                     antisym=kw["antisym"], positive=kw["positive"])


def _parse_background_line(words, lineno) -> BackgroundDecl:
    if len(words) < 2:
        raise ParseError("usage: background NAME [base=B] [constant] [time-independent] [positive]",
                         lineno)
    name = words[1]
    kw = {"base": 0, "constant": False, "time_independent": False, "positive": False}
    for w in words[2:]:
        if "=" in w:
            k, v = w.split("=", 1)
            if k != "base":
                raise ParseError(f"unknown background attribute {k!r}", lineno)
            kw["base"] = int(v)
        elif w in _FLAG_WORDS_BG:
            kw[w.replace("-", "_")] = True
        else:
            raise ParseError(f"unknown background flag {w!r}", lineno)
    return BackgroundDecl(name, base=kw["base"], constant=kw["constant"],
                          time_independent=kw["time_independent"], positive=kw["positive"])


def emit_theory(t: TheorySpec) -> str:
    """Canonical theory-file text; parse_theory(emit_theory(t)) == t."""
    ctx = t.context()
    lines = [f"theory {t.name}", f"dim {t.dim}"]
    if t.vdim != t.dim:
        lines.append(f"vdim {t.vdim}")
    coords = " ".join(t.coords)
    if t.transversal != 0:
        coords += f" @transversal {t.coords[t.transversal]}"
    lines.append(f"coords {coords}")
    bgs = list(t.backgrounds)
    split_pair = (BackgroundDecl("hinv", base=2, time_independent=True),
                  BackgroundDecl("rh", time_independent=True, positive=True))
    if tuple(bgs[-2:]) == split_pair or tuple(bgs[:2]) == split_pair:
        lines.append("metric split h time-independent")
        bgs = [b for b in bgs if b not in split_pair]
    for b in bgs:
        parts = [f"background {b.name}"]
        if b.base:
            parts.append(f"base={b.base}")
        if b.constant:
            parts.append("constant")
        if b.time_independent:
            parts.append("time-independent")
        if b.positive:
            parts.append("positive")
        lines.append(" ".join(parts))
    for f in t.fields:
        parts = [f"field {f.name}"]
        if f.base:
            parts.append(f"base={f.base}")
        if f.internal:
            parts.append(f"internal={f.internal}")
        if f.antisym:
            parts.append("antisym")
        if f.positive:
            parts.append("positive")
        lines.append(" ".join(parts))
    for fn in t.functions:
        lines.append(f"function {fn}")
    for field, order, sym in t.boundary_names:
        lines.append(f"boundary {field} {order} {sym}")
    lines.append(f"side {'upper' if t.boundary_side == 1 else 'lower'}")
    lines.append(f"jetorder {t.jet_order}")
    lines.append(f'lagrangian "{ex.to_text(t.lagrangian, ctx)}"')
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# pipeline reports
# ---------------------------------------------------------------------------

@dataclass
class RunOptions:
    symbolic_only: bool = False
    check_golden: bool = False
    point_checks: int | None = None
    grid_shape: tuple | None = None
    seed: int = 0
    rank_tol: float = 1e-8


def _derivation_block(t: TheorySpec) -> dict:
    ctx = t.context()
    var = variation(t)
    split = ibp_split(var, t)
    omega = vertical_delta(split.alpha)
    cons = constraint_extract(t, split)
    return {
        "variation": var.to_text(ctx),
        "el": {f"{w.field}" + (f"[{','.join(map(str, w.comp))}]" if w.comp else ""):
               ex.to_text(e, ctx) for w, e in split.el},
        "alpha": split.alpha.to_text(ctx),
        "alpha_side": t.boundary_side,
        "omega": omega.to_text(ctx),
        "tangential_divergences": len(split.divergences),
        "constraints": {n: ex.to_text(d, ctx) for n, d in cons},
    }


def run_pipeline(t: TheorySpec, options: RunOptions | None = None) -> dict:
    """Run the derivation (and requested checks) and return the report.

    Stage errors propagate as exceptions tagged with the stage name in their
    message; check failures are recorded in the report, not raised.
    """
    options = options or RunOptions()
    report = {
        "theory": {"name": t.name, "dim": t.dim, "vdim": t.vdim,
                   "coords": list(t.coords), "transversal": t.transversal,
                   "jet_order": t.jet_order},
        "options": {"seed": options.seed, "symbolic_only": options.symbolic_only},
    }
    try:
        report["derivation"] = _derivation_block(t)
    except KtError as exc:
        raise type(exc)(f"[derivation] {exc}") from exc

    is_builtin = t.name in TH.THEORY_NAMES and t == TH.builtin(t.name)
    report["builtin"] = is_builtin
    if options.symbolic_only or not (options.check_golden or options.point_checks
                                     or options.grid_shape):
        report["passed"] = True
        return report

    if not is_builtin:
        raise CheckFailure(f"[check] no golden record for theory {t.name!r}; "
                           "checks run against the builtin corpus")
    golden = TH.golden(t.name)
    checks = {"symbolic": VF.check_symbolic(t.name, golden)}
    if options.point_checks is not None or t.name == "pc4":
        checks["point"] = VF.check_point(t.name, golden, samples=options.point_checks,
                                         seed=options.seed)
    checks["lattice"] = VF.check_lattice(t.name, golden, seed=options.seed,
                                         grid_shape=options.grid_shape,
                                         rank_tol=options.rank_tol)
    report["checks"] = checks
    report["passed"] = all(c["passed"] for c in checks.values())
    return report


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

def _latex_block(t: TheorySpec) -> str:
    ctx = t.context()
    split = ibp_split(variation(t), t)
    omega = vertical_delta(split.alpha)
    lines = [r"\documentclass{article}", r"\usepackage{amsmath}", r"\begin{document}",
             r"\section*{%s}" % t.name.replace("_", r"\_")]
    lines.append(r"\subsection*{Field equations}")
    for w, e in split.el:
        lhs = ex.var_latex(w, ctx)
        lines.append(r"\[ \mathrm{el}_{%s} = %s \]" % (lhs, ex.to_latex(e, ctx)))
    lines.append(r"\subsection*{Boundary 1-form}")
    sign = "" if t.boundary_side == 1 else "-"
    terms = []
    for gens, coeff in split.alpha_density.terms:
        terms.append(ex.to_latex(coeff, ctx) + r"\,\delta " + ex.var_latex(gens[0], ctx))
    lines.append(r"\[ \alpha = %s%s \]" % (sign, " + ".join(terms) if terms else "0"))
    lines.append(r"\subsection*{Boundary 2-form}")
    oterms = []
    for gens, coeff in omega.terms:
        oterms.append(ex.to_latex(coeff, ctx) + r"\,"
                      + r"\,".join(r"\delta " + ex.var_latex(g, ctx) for g in gens))
    lines.append(r"\[ \omega = %s \]" % (" + ".join(oterms) if oterms else "0"))
    lines.append(r"\end{document}")
    return "\n".join(lines) + "\n"


def _plain_block(report: dict) -> str:
    out = [f"theory {report['theory']['name']} (dim {report['theory']['dim']})"]
    der = report.get("derivation", {})
    for key in ("variation", "alpha", "omega"):
        if key in der:
            out.append(f"{key}: {der[key]}")
    for name, e in der.get("el", {}).items():
        out.append(f"el[{name}]: {e}")
    for name, e in der.get("constraints", {}).items():
        out.append(f"constraint[{name}]: {e}")
    for stage, block in report.get("checks", {}).items():
        for entry, val in block["entries"].items():
            status = "PASS" if val["pass"] else "FAIL"
            extra = {k: v for k, v in val.items() if k != "pass"}
            out.append(f"[{status}] {stage}.{entry} {extra if extra else ''}".rstrip())
    out.append("status: " + ("pass" if report.get("passed") else "FAIL"))
    return "\n".join(out) + "\n"


def emit_report(report: dict, fmt: str, t: TheorySpec | None = None) -> bytes:
    """Serialize a report; identical reports give identical bytes."""
    if fmt == "data":
        return (canonical_json(report) + "\n").encode("utf-8")
    if fmt == "plain":
        return _plain_block(report).encode("utf-8")
    if fmt == "latex":
        if t is None:
            raise KtError("latex emission needs the theory spec")
        return _latex_block(t).encode("utf-8")
    raise KtError(f"unknown report format {fmt!r}")


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def _load_theory(arg: str) -> TheorySpec:
    if arg in TH.THEORY_NAMES:
        return TH.builtin(arg)
    with open(arg, "r", encoding="utf-8") as fh:
        return parse_theory(fh.read())


def _parse_grid(s: str) -> tuple:
    parts = s.lower().split("x")
    return tuple(int(p) for p in parts)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ktphase",
                                     description="boundary phase-space workbench")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in ("derive", "check"):
        p = sub.add_parser(cmd)
        p.add_argument("theory", help="builtin name or theory file path")
        p.add_argument("--format", choices=("data", "latex", "plain"), default="data")
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float, default=1e-8)
        if cmd == "check":
            p.add_argument("--lattice", default=None, help="grid, e.g. 16x16x16")
            p.add_argument("--point-checks", type=int, default=None)
    args = parser.parse_args(argv)

    seed = args.seed
    if os.environ.get("KT_SEED"):
        seed = int(os.environ["KT_SEED"])

    try:
        t = _load_theory(args.theory)
        if args.command == "derive":
            options = RunOptions(symbolic_only=True, seed=seed, rank_tol=args.tol)
        else:
            options = RunOptions(check_golden=True, seed=seed, rank_tol=args.tol,
                                 point_checks=args.point_checks,
                                 grid_shape=_parse_grid(args.lattice) if args.lattice else None)
        report = run_pipeline(t, options)
        payload = emit_report(report, args.format, t)
        if args.out:
            with open(args.out, "wb") as fh:
                fh.write(payload)
        else:
            sys.stdout.buffer.write(payload)
        if args.command == "check" and not report.get("passed", False):
            return 2
        return 0
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 1
    except CheckFailure as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return 2
    except KtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
