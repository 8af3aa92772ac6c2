"""Replayable proof logs.

A log is a tree of steps over an encoded root store (hull or relaxed big-M
encoding plus the violation row):

* ``Entail``    check an entailment certificate, append its target row
* ``Stabilize`` check that a pre-activation is sign-fixed, append the
                target row and the unit's linear collapse rows
* ``Branch``    split on a pre-activation ``s``: ``s <= 0`` left, ``-s <= 0`` right
* ``Prune``     check a Farkas certificate; closes the branch

Only checker-validated targets and fixed templates ever enter the store.
A Verified replay shows the encoded query is empty; the encodings contain
every exact network point, so the exact counterexample query is UNSAT too.
"""
from __future__ import annotations

import bisect
import re
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from .certs import (
    Certificate,
    CertificateError,
    Derived,
    EntailCert,
    FarkasCert,
    StoreEmpty,
    check_entail,
    check_farkas,
    derive_entail,
    format_cert,
    norm_farkas,
    parse_cert,
    scale_entail,
    sparsify_farkas,
)
from .encode import encode_query
from .lpexact import Farkas, feasible
from .network import BoxDomain, ReluNetwork, instance_hash
from .polyhedron import LinearStore, LinRow, format_row, parse_row
from .ratcore import ZERO, format_rational, is_canonical_text, parse_rational, primitive_integer_form, unit

ENCODINGS = ("hull", "bigm-relaxed")
PHASES = ("active", "inactive")
SCOPE_NOTE = (
    "the encoded (relaxed) query is infeasible; the encoding over-approximates the exact "
    "network semantics, hence the exact counterexample query is UNSAT"
)


class ProofLogError(ValueError):
    pass


class HeaderMismatch(ProofLogError):
    pass


class ProofLogSyntaxError(ProofLogError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


class NonCanonicalRational(UserWarning):
    pass


# --- steps ---------------------------------------------------------------------

@dataclass(frozen=True)
class Prune:
    cert: FarkasCert


@dataclass(frozen=True)
class Entail:
    cert: EntailCert
    note: str = ""
    child: Optional["Step"] = None


@dataclass(frozen=True)
class Stabilize:
    unit: tuple[int, int]
    phase: str
    cert: EntailCert
    child: Optional["Step"] = None

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ProofLogError(f"phase must be one of {PHASES}")


@dataclass(frozen=True)
class Branch:
    var: str
    left: Optional["Step"] = None
    right: Optional["Step"] = None


Step = Union[Prune, Entail, Stabilize, Branch]


@dataclass(frozen=True)
class Header:
    hash: str
    domain: BoxDomain
    violation: LinRow
    encoding: str

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise ProofLogError(f"encoding must be one of {ENCODINGS}")


@dataclass(frozen=True)
class ProofLog:
    header: Header
    root: Optional[Step]


def make_header(net: ReluNetwork, dom: BoxDomain, violation: LinRow, encoding: str = "hull") -> Header:
    return Header(instance_hash(net, dom, violation), dom, violation, encoding)


def certificates(step: Optional[Step]):
    """Certificates in preorder."""
    if step is None:
        return
    if isinstance(step, Branch):
        yield from certificates(step.left)
        yield from certificates(step.right)
        return
    yield step.cert
    if not isinstance(step, Prune):
        yield from certificates(step.child)


def total_nonzeros(log: ProofLog) -> int:
    return sum(c.support for c in certificates(log.root))


# --- replay ------------------------------------------------------------------------

@dataclass(frozen=True)
class Verified:
    leaves: int
    steps: int
    scope: str = SCOPE_NOTE


@dataclass(frozen=True)
class Rejected:
    path: str
    reason: str


class _Reject(Exception):
    def __init__(self, path, reason):
        self.path = path
        self.reason = reason


def _stabilize_rows(store: LinearStore, step: Stabilize) -> list[LinRow]:
    """Validate the stabilization target and return the rows to append."""
    i, k = step.unit
    s, z = f"s_{i}_{k}", f"z_{i}_{k}"
    if s not in store.var_names or z not in store.var_names:
        raise ProofLogError(f"unknown ReLU unit ({i}, {k})")
    js = store.index(s)
    sign = 1 if step.phase == "inactive" else -1
    c = step.cert.target_coeffs
    lam = c[js] * sign
    if lam <= 0 or any(a for j, a in enumerate(c) if j != js):
        raise ProofLogError(f"target is not a positive multiple of {'s' if sign > 0 else '-s'} for {s}")
    if step.cert.target_rhs > 0:
        raise ProofLogError(f"target bound {format_rational(step.cert.target_rhs)} does not fix the sign of {s}")
    one = Fraction(1)
    if step.phase == "inactive":
        collapse = store.row_from_terms({z: one}, ZERO)
    else:
        collapse = store.row_from_terms({z: one, s: -one}, ZERO)
    return [LinRow(c, step.cert.target_rhs), collapse, collapse.negated_bound()]


def _replay(step: Optional[Step], store: LinearStore, path: str, counts: list[int]):
    if step is None:
        raise _Reject(path, "malformed tree: missing child (every leaf must be a prune step)")
    counts[1] += 1
    if isinstance(step, Prune):
        here = f"{path}/prune"
        try:
            res = check_farkas(store, step.cert)
        except CertificateError as e:
            raise _Reject(here, str(e)) from None
        if not res:
            raise _Reject(here, res.reason)
        counts[0] += 1
        return
    if isinstance(step, Branch):
        here = f"{path}/branch[{step.var}]"
        if not re.fullmatch(r"s_\d+_\d+", step.var) or step.var not in store.var_names:
            raise _Reject(here, f"branch variable {step.var!r} is not a pre-activation of this store")
        if step.left is None or step.right is None:
            raise _Reject(here, "malformed tree: branch must have two children")
        one = Fraction(1)
        _replay(step.left, store.with_rows([store.row_from_terms({step.var: one}, ZERO)]), here + ".left", counts)
        _replay(step.right, store.with_rows([store.row_from_terms({step.var: -one}, ZERO)]), here + ".right",
                counts)
        return
    label = "entail" if isinstance(step, Entail) else f"stabilize[{step.unit[0]},{step.unit[1]}]"
    here = f"{path}/{label}"
    try:
        res = check_entail(store, step.cert)
        if not res:
            raise _Reject(here, res.reason)
        if isinstance(step, Entail):
            extra = [LinRow(step.cert.target_coeffs, step.cert.target_rhs)]
        else:
            extra = _stabilize_rows(store, step)
    except (CertificateError, ProofLogError) as e:
        raise _Reject(here, str(e)) from None
    _replay(step.child, store.with_rows(extra), here, counts)


def check_header(net: ReluNetwork, dom: BoxDomain, violation: LinRow, header: Header) -> None:
    if header.hash != instance_hash(net, dom, violation):
        raise HeaderMismatch("header hash does not match the network/domain/violation inputs")
    if header.domain != dom or header.violation != violation:
        raise HeaderMismatch("header domain or violation differs from the inputs")


def root_store(net: ReluNetwork, dom: BoxDomain, violation: LinRow, encoding: str) -> LinearStore:
    return encode_query(net, dom, violation, encoding)


def replay(net: ReluNetwork, dom: BoxDomain, violation: LinRow, log: ProofLog) -> Union[Verified, Rejected]:
    """Re-check every certificate of the log with the exact checkers."""
    check_header(net, dom, violation, log.header)
    store = root_store(net, dom, violation, log.header.encoding)
    counts = [0, 0]
    try:
        _replay(log.root, store, "", counts)
    except _Reject as r:
        return Rejected(r.path or "/", r.reason)
    return Verified(counts[0], counts[1])


# --- compilation --------------------------------------------------------------------

def _rescale(cert, scales):
    mult = tuple((i, v / scales[i]) if i < len(scales) else (i, v) for i, v in cert.multipliers)
    if isinstance(cert, FarkasCert):
        return FarkasCert(mult)
    return EntailCert(mult, cert.target_coeffs, cert.target_rhs)


def _compile(step, store: LinearStore, scales: list[Fraction]):
    # compiled store row i == scales[i] * original store row i
    if isinstance(step, Prune):
        cert = norm_farkas(_rescale(step.cert, scales))
        sparse_cert = norm_farkas(sparsify_farkas(store, cert))
        return Prune(sparse_cert if sparse_cert.support < cert.support else cert)
    if isinstance(step, Branch):
        one = Fraction(1)
        left = store.with_rows([store.row_from_terms({step.var: one}, ZERO)])
        right = store.with_rows([store.row_from_terms({step.var: -one}, ZERO)])
        return Branch(step.var, _compile(step.left, left, scales + [one]),
                      _compile(step.right, right, scales + [one]))
    raw = _rescale(step.cert, scales)
    _, lam = primitive_integer_form(tuple(v for _, v in raw.multipliers))
    cert = scale_entail(raw, lam)
    if isinstance(step, Entail):
        child_store = store.with_rows([LinRow(cert.target_coeffs, cert.target_rhs)])
        return Entail(cert, step.note, _compile(step.child, child_store, scales + [lam]))
    new = Stabilize(step.unit, step.phase, cert)
    rows = _stabilize_rows(store, new)
    child = _compile(step.child, store.with_rows(rows), scales + [lam, Fraction(1), Fraction(1)])
    return Stabilize(step.unit, step.phase, cert, child)


def compile_log(net: ReluNetwork, dom: BoxDomain, violation: LinRow, log: ProofLog) -> ProofLog:
    """Normalize every certificate and sparsify every prune certificate.

    Refuses logs that do not replay.  The result replays Verified and never
    carries more certificate nonzeros than the input.
    """
    verdict = replay(net, dom, violation, log)
    if not isinstance(verdict, Verified):
        raise ProofLogError(f"refusing to compile a log that does not replay: {verdict.path}: {verdict.reason}")
    store = root_store(net, dom, violation, log.header.encoding)
    out = ProofLog(log.header, _compile(log.root, store, [Fraction(1)] * len(store.rows)))
    again = replay(net, dom, violation, out)
    if not isinstance(again, Verified):
        raise AssertionError(f"compiled log failed to replay: {again}")
    assert total_nonzeros(out) <= total_nonzeros(log)
    return out


# --- a simple producer ----------------------------------------------------------------

def build_log(net: ReluNetwork, dom: BoxDomain, violation: LinRow, encoding: str = "hull") -> ProofLog | None:
    """Derive-and-prune search: stabilize what is entailed, branch on the rest.

    Returns None when some fully split leaf stays feasible (a counterexample
    region exists).
    """
    store = root_store(net, dom, violation, encoding)
    units = net.units()

    def stabilize(store, unit, phase):
        s = f"s_{unit[0]}_{unit[1]}"
        sign = 1 if phase == "inactive" else -1
        c = tuple(sign * v for v in unit_vector(store, s))
        res = derive_entail(store, c)
        if isinstance(res, Derived) and res.tau <= 0:
            return res.cert
        return res if isinstance(res, StoreEmpty) else None

    def rec(store, j):
        res = feasible(store)
        if isinstance(res, Farkas):
            return Prune(norm_farkas(FarkasCert.dense(res.certificate)))
        if j == len(units):
            return None
        unit = units[j]
        for phase in PHASES:
            cert = stabilize(store, unit, phase)
            if isinstance(cert, EntailCert):
                step = Stabilize(unit, phase, cert)
                child = rec(store.with_rows(_stabilize_rows(store, step)), j + 1)
                return None if child is None else Stabilize(unit, phase, cert, child)
        s = f"s_{unit[0]}_{unit[1]}"
        one = Fraction(1)
        kids = []
        for phase, coeff in (("inactive", one), ("active", -one)):
            sub = store.with_rows([store.row_from_terms({s: coeff}, ZERO)])
            cert = stabilize(sub, unit, phase)
            if isinstance(cert, StoreEmpty):
                kids.append(Prune(norm_farkas(cert.farkas)))
                continue
            assert isinstance(cert, EntailCert)
            step = Stabilize(unit, phase, cert)
            child = rec(sub.with_rows(_stabilize_rows(sub, step)), j + 1)
            if child is None:
                return None
            kids.append(Stabilize(unit, phase, cert, child))
        return Branch(s, kids[0], kids[1])

    root = rec(store, 0)
    if root is None:
        return None
    return ProofLog(make_header(net, dom, violation, encoding), root)


def unit_vector(store: LinearStore, name: str):
    return unit(store.dim, store.index(name))


# --- text format -----------------------------------------------------------------------

def _quote(note: str) -> str:
    return '"' + note.replace("\\", "\\\\").replace('"', '\\"') + '"'


def serialize(log: ProofLog) -> str:
    h = log.header
    lines = [
        "HEADER",
        f"hash: {h.hash}",
        f"encoding: {h.encoding}",
        "domain: " + ", ".join(f"{format_rational(lo)} {format_rational(hi)}"
                               for lo, hi in zip(h.domain.lower, h.domain.upper)),
        "violation: " + format_row(h.violation),
        "TREE",
    ]
    certs: list[Certificate] = []

    def cid(cert):
        certs.append(cert)
        return f"c{len(certs) - 1}"

    def emit(step, depth):
        pad = "  " * depth
        if step is None:
            lines.append(pad + "nil")
        elif isinstance(step, Prune):
            lines.append(f"{pad}(prune {cid(step.cert)})")
        elif isinstance(step, Branch):
            lines.append(f"{pad}(branch {step.var}")
            emit(step.left, depth + 1)
            emit(step.right, depth + 1)
            lines[-1] += ")"
        else:
            if isinstance(step, Entail):
                lines.append(f"{pad}(entail {cid(step.cert)} {_quote(step.note)}")
            else:
                lines.append(f"{pad}(stabilize {step.unit[0]} {step.unit[1]} {step.phase} {cid(step.cert)}")
            emit(step.child, depth + 1)
            lines[-1] += ")"

    emit(log.root, 0)
    lines.append("CERTS")
    lines += [f"c{n}: {format_cert(c)}" for n, c in enumerate(certs)]
    lines.append("END")
    return "\n".join(lines) + "\n"


_TOKEN_RE = re.compile(r'\s*(?:(\()|(\))|("(?:[^"\\]|\\.)*")|([^\s()"]+))')


class _Tokens:
    def __init__(self, text: str, first_line: int):
        self.toks = []
        pos = 0
        line_starts = [0] + [m.end() for m in re.finditer("\n", text)]

        def where(off):
            ln = bisect.bisect_right(line_starts, off) - 1
            return first_line + ln, off - line_starts[ln] + 1

        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None or m.end() == pos:
                if text[pos:].strip() == "":
                    break
                ln, col = where(pos)
                raise ProofLogSyntaxError("unterminated string or bad token", ln, col)
            if m.lastindex is None:
                break
            start = m.start(m.lastindex)
            self.toks.append((m.group(m.lastindex), *where(start)))
            pos = m.end()
        self.i = 0
        self.end_pos = where(len(text))

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, what="token"):
        t = self.peek()
        if t is None:
            raise ProofLogSyntaxError(f"unexpected end of tree, expected {what}", *self.end_pos)
        self.i += 1
        return t


def _warn_rational(text: str) -> Fraction:
    q = parse_rational(text)
    if not is_canonical_text(text):
        warnings.warn(f"non-canonical rational {text!r} read as {format_rational(q)}", NonCanonicalRational,
                      stacklevel=3)
    return q


def _parse_tree(text: str, first_line: int, certs: dict[str, tuple[Certificate, int]]):
    toks = _Tokens(text, first_line)
    used = set()

    def cert(kind):
        name, ln, col = toks.next("certificate id")
        if name not in certs:
            raise ProofLogSyntaxError(f"unknown certificate id {name!r}", ln, col)
        c = certs[name][0]
        if not isinstance(c, kind):
            raise ProofLogSyntaxError(f"certificate {name} has the wrong kind", ln, col)
        used.add(name)
        return c

    def integer():
        tok, ln, col = toks.next("integer")
        if not tok.isdigit():
            raise ProofLogSyntaxError(f"expected integer, got {tok!r}", ln, col)
        return int(tok)

    def step():
        tok, ln, col = toks.next("step")
        if tok == "nil":
            return None
        if tok != "(":
            raise ProofLogSyntaxError(f"expected '(' or nil, got {tok!r}", ln, col)
        head, ln, col = toks.next("step name")
        if head == "prune":
            out = Prune(cert(FarkasCert))
        elif head == "entail":
            c = cert(EntailCert)
            note, nl, nc = toks.next("note")
            if not (note.startswith('"') and note.endswith('"')):
                raise ProofLogSyntaxError("expected quoted note", nl, nc)
            note = re.sub(r"\\(.)", r"\1", note[1:-1])
            out = Entail(c, note, step())
        elif head == "stabilize":
            i, k = integer(), integer()
            phase, pl, pc = toks.next("phase")
            if phase not in PHASES:
                raise ProofLogSyntaxError(f"bad phase {phase!r}", pl, pc)
            out = Stabilize((i, k), phase, cert(EntailCert), step())
        elif head == "branch":
            var, _, _ = toks.next("variable")
            out = Branch(var, step(), step())
        else:
            raise ProofLogSyntaxError(f"unknown step {head!r}", ln, col)
        tok, ln, col = toks.next("')'")
        if tok != ")":
            raise ProofLogSyntaxError(f"expected ')', got {tok!r}", ln, col)
        return out

    root = step()
    extra = toks.peek()
    if extra is not None:
        raise ProofLogSyntaxError(f"trailing token {extra[0]!r}", extra[1], extra[2])
    for name, (_, ln) in certs.items():
        if name not in used:
            raise ProofLogSyntaxError(f"certificate {name} is never used", ln, 1)
    return root


def parse(text: str) -> ProofLog:
    """Parse a proof-log file.  Errors carry line and column."""
    lines = text.splitlines()
    sections: dict[str, int] = {}
    for n, raw in enumerate(lines):
        if raw.strip() in ("HEADER", "TREE", "CERTS", "END"):
            if raw.strip() in sections:
                raise ProofLogSyntaxError(f"duplicate section {raw.strip()}", n + 1, 1)
            sections[raw.strip()] = n
    order = ["HEADER", "TREE", "CERTS", "END"]
    for name in order:
        if name not in sections:
            raise ProofLogSyntaxError(f"missing section {name}", len(lines) + 1, 1)
    if [sections[n] for n in order] != sorted(sections[n] for n in order):
        raise ProofLogSyntaxError("sections out of order", sections["TREE"] + 1, 1)
    for n in range(sections["END"] + 1, len(lines)):
        if lines[n].strip():
            raise ProofLogSyntaxError("content after END", n + 1, 1)

    fields = {}
    for n in range(sections["HEADER"] + 1, sections["TREE"]):
        raw = lines[n]
        if not raw.strip():
            continue
        key, sep, val = raw.partition(":")
        if not sep:
            raise ProofLogSyntaxError("expected 'key: value'", n + 1, 1)
        fields[key.strip()] = (val.strip(), n + 1)
    for key in ("hash", "encoding", "domain", "violation"):
        if key not in fields:
            raise ProofLogSyntaxError(f"missing header field {key!r}", sections["TREE"] + 1, 1)
    dval, dline = fields["domain"]
    try:
        lo, hi = [], []
        for pair in (dval.split(",") if dval else []):
            a, b = pair.split()
            lo.append(_warn_rational(a))
            hi.append(_warn_rational(b))
        domain = BoxDomain(tuple(lo), tuple(hi))
    except ValueError as e:
        raise ProofLogSyntaxError(f"bad domain: {e}", dline, 1) from None
    vval, vline = fields["violation"]
    try:
        for t in vval.replace("<=", " ").split():
            _warn_rational(t)
        violation = parse_row(vval)
    except ValueError as e:
        raise ProofLogSyntaxError(f"bad violation: {e}", vline, 1) from None
    try:
        header = Header(fields["hash"][0], domain, violation, fields["encoding"][0])
    except ValueError as e:
        raise ProofLogSyntaxError(str(e), fields["encoding"][1], 1) from None

    certs: dict[str, tuple[Certificate, int]] = {}
    for n in range(sections["CERTS"] + 1, sections["END"]):
        raw = lines[n]
        if not raw.strip():
            continue
        name, sep, body = raw.partition(":")
        name = name.strip()
        if not sep or not re.fullmatch(r"c\d+", name):
            raise ProofLogSyntaxError("expected 'cN: <certificate>'", n + 1, 1)
        if name in certs:
            raise ProofLogSyntaxError(f"duplicate certificate id {name}", n + 1, 1)
        try:
            certs[name] = (parse_cert(body, _warn_rational), n + 1)
        except ValueError as e:
            raise ProofLogSyntaxError(str(e), n + 1, len(name) + 3) from None

    tree_text = "\n".join(lines[sections["TREE"] + 1:sections["CERTS"]])
    root = _parse_tree(tree_text, sections["TREE"] + 2, certs)
    return ProofLog(header, root)
