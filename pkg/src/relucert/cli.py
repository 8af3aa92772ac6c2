"""Command-line front end.

Exit codes: 0 accept/verified, 1 reject, 2 usage or malformed input.
Reports are ``key: value`` lines; ``--json`` prints the same keys as JSON.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import certs, encode, network, polyhedron, prooflog, worked
from .lpexact import IterationLimit
from .ratcore import RationalSyntaxError, format_rational, format_vec, parse_rational

EXIT_OK, EXIT_REJECT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def _write(path: str | None, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _eps(text: str | None):
    return None if text is None else parse_rational(text)


def _instance(args):
    for flag in ("network", "domain", "property"):
        if getattr(args, flag) is None:
            raise UsageError(f"--{flag} is required")
    net = network.parse_network(_read(args.network))
    dom = network.parse_domain(_read(args.domain))
    viol = network.parse_property(_read(args.property), _eps(args.eps))
    if len(dom.lower) != net.n_inputs:
        raise UsageError(f"domain has {len(dom.lower)} inputs, network has {net.n_inputs}")
    if viol.dim != net.n_outputs:
        raise UsageError(f"property has {viol.dim} coefficients, network has {net.n_outputs} outputs")
    return net, dom, viol


def _store(path: str) -> polyhedron.LinearStore:
    return polyhedron.parse_store(_read(path))[0]


class _Report:
    def __init__(self, as_json: bool):
        self.as_json = as_json
        self.items: list[tuple[str, str]] = []

    def __setitem__(self, key, value):
        self.items.append((key, value))

    def emit(self):
        if self.as_json:
            print(json.dumps(dict(self.items), indent=2))
        else:
            for k, v in self.items:
                print(f"{k}: {v}")


# --- subcommands -----------------------------------------------------------------

def cmd_encode(args, rep: _Report) -> int:
    if args.kind == "guarded":
        net, dom, viol = _instance(args)
        _write(args.output, encode.export_guarded(net, dom, viol))
        return EXIT_OK
    for flag in ("network", "domain"):
        if getattr(args, flag) is None:
            raise UsageError(f"--{flag} is required")
    net = network.parse_network(_read(args.network))
    dom = network.parse_domain(_read(args.domain))
    bounds = network.interval_bounds(net, dom)
    viol = network.parse_property(_read(args.property), _eps(args.eps)) if args.property else None
    if args.kind == "hull":
        store, binaries = encode.encode_hull(net, dom, bounds), ()
    else:
        mixed = encode.encode_bigm(net, dom, bounds)
        store, binaries = mixed.store, mixed.binaries
    if viol is not None:
        store = encode.add_violation(store, net, viol)
    _write(args.output, polyhedron.dump_store(store, binaries))
    if args.output is not None:
        rep["kind"] = args.kind
        rep["vars"] = str(store.dim)
        rep["rows"] = str(len(store.rows))
        rep["binaries"] = str(len(binaries))
    return EXIT_OK


def _check_cert(args, rep: _Report) -> int:
    store = _store(args.store)
    cert = certs.parse_cert(_read(args.cert))
    res = certs.check(store, cert)
    rep["kind"] = "farkas" if isinstance(cert, certs.FarkasCert) else "entail"
    rep["verdict"] = "accept" if res.accepted else "reject"
    if not res.accepted:
        rep["reason"] = res.reason
        if res.value is not None:
            rep["value"] = format_rational(res.value)
        if res.residual is not None and res.failed == "combination":
            rep["residual"] = format_vec(res.residual)
    if res.ytb is not None:
        rep["yTb"] = format_rational(res.ytb)
    rep["support"] = str(cert.support)
    return EXIT_OK if res.accepted else EXIT_REJECT


def _check_log(args, rep: _Report) -> int:
    net, dom, viol = _instance(args)
    log = prooflog.parse(_read(args.log))
    try:
        res = prooflog.replay(net, dom, viol, log)
    except prooflog.HeaderMismatch as e:
        rep["verdict"] = "rejected"
        rep["reason"] = f"header mismatch: {e}"
        return EXIT_REJECT
    if isinstance(res, prooflog.Rejected):
        rep["verdict"] = "rejected"
        rep["path"] = res.path
        rep["reason"] = res.reason
        return EXIT_REJECT
    rep["verdict"] = "verified"
    rep["leaves"] = str(res.leaves)
    rep["steps"] = str(res.steps)
    rep["nonzeros"] = str(prooflog.total_nonzeros(log))
    rep["scope"] = res.scope
    if args.compile_to:
        compiled = prooflog.compile_log(net, dom, viol, log)
        Path(args.compile_to).write_text(prooflog.serialize(compiled))
        rep["compiled_nonzeros"] = str(prooflog.total_nonzeros(compiled))
    return EXIT_OK


def cmd_check(args, rep: _Report) -> int:
    if args.log is not None:
        return _check_log(args, rep)
    if args.store is None or args.cert is None:
        raise UsageError("check needs --store and --cert, or --network/--domain/--property and --log")
    return _check_cert(args, rep)


def cmd_derive(args, rep: _Report) -> int:
    store = _store(args.store)
    c = tuple(parse_rational(t) for t in args.target.replace(",", " ").split())
    if len(c) != store.dim:
        raise UsageError(f"target has {len(c)} coefficients, store has {store.dim} variables")
    res = certs.derive_entail(store, c)
    if isinstance(res, certs.Derived):
        rep["result"] = "derived"
        rep["tau"] = format_rational(res.tau)
        rep["support"] = str(res.cert.support)
        cert = res.cert
    elif isinstance(res, certs.StoreEmpty):
        rep["result"] = "store-empty"
        cert = res.farkas
    else:
        rep["result"] = "unbounded"
        return EXIT_OK
    if args.output:
        Path(args.output).write_text(certs.format_cert(cert) + "\n")
    else:
        rep["certificate"] = certs.format_cert(cert)
    return EXIT_OK


def cmd_sparsify(args, rep: _Report) -> int:
    store = _store(args.store)
    seed = certs.parse_cert(_read(args.cert))
    if not isinstance(seed, certs.FarkasCert):
        raise UsageError("sparsify needs a farkas certificate")
    res = certs.check_farkas(store, seed)
    if not res.accepted:
        rep["verdict"] = "reject"
        rep["reason"] = res.reason
        return EXIT_REJECT
    out = certs.sparsify_farkas(store, seed)
    rep["support_before"] = str(seed.support)
    rep["support_after"] = str(out.support)
    rep["bound"] = str(store.dim + 1)
    if args.output:
        Path(args.output).write_text(certs.format_cert(out) + "\n")
    else:
        rep["certificate"] = certs.format_cert(out)
    return EXIT_OK


def cmd_oracle(args, rep: _Report) -> int:
    net, dom, viol = _instance(args)
    ceiling = args.pattern_ceiling
    if net.n_relu > ceiling:
        raise UsageError(f"network has {net.n_relu} ReLU units, pattern ceiling is {ceiling}")
    patterns = network.enumerate_feasible_patterns(net, dom, ceiling)
    rep["relu_units"] = str(net.n_relu)
    rep["feasible_patterns"] = f"{len(patterns)} of {2 ** net.n_relu}"
    for pi, _ in patterns:
        rep[f"pattern {''.join(map(str, pi)) or '-'}"] = "feasible"
    report = encode.equisat_oracle(net, dom, viol, ceiling)
    verdict = report.patterns
    rep["brute_force"] = "SAT" if isinstance(verdict, network.Sat) else "UNSAT"
    if isinstance(verdict, network.Sat):
        rep["witness_x"] = format_vec(verdict.witness[:net.n_inputs])
        out, _, _ = network.forward_exact(net, verdict.witness[:net.n_inputs])
        rep["witness_output"] = format_vec(out)
    rep["bigm"] = "SAT" if isinstance(report.milp, network.Sat) else "UNSAT"
    rep["binaries"] = str(len(report.binaries))
    rep["assignments_checked"] = str(report.assignments_checked)
    rep["agree"] = "yes" if report.agree else "no"
    return EXIT_OK


def cmd_examples(args, rep: _Report) -> int:
    if args.list:
        for name, desc, _ in worked.SUITE:
            rep[name] = desc
        return EXIT_OK
    ok = True
    for name, passed, detail in worked.run_suite():
        rep[name] = f"{'PASS' if passed else 'FAIL'} {detail}"
        ok &= passed
    rep["summary"] = "all expectations met" if ok else "FAILED"
    return EXIT_OK if ok else EXIT_REJECT


# --- argument parsing --------------------------------------------------------------

def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    return int(raw) if raw else default


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="relucert", description="Exact certificates for ReLU network queries.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print the report as JSON")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def instance(sp, required=False):
        sp.add_argument("--network", required=required)
        sp.add_argument("--domain", required=required)
        sp.add_argument("--property")
        sp.add_argument("--eps", help="strengthening for a strict violation (< becomes <= rhs - eps)")

    e = sub.add_parser("encode", parents=[common], help="write a hull, big-M or guarded encoding")
    instance(e)
    e.add_argument("--kind", choices=("hull", "bigm", "guarded"), default="hull")
    e.add_argument("-o", "--output")

    c = sub.add_parser("check", parents=[common], help="check a certificate against a store, or replay a proof log")
    c.add_argument("--store")
    c.add_argument("--cert")
    c.add_argument("--log")
    c.add_argument("--compile-to", help="after a verified replay, write the compiled log here")
    instance(c)

    d = sub.add_parser("derive", parents=[common], help="tightest bound c.v <= tau with its certificate")
    d.add_argument("--store", required=True)
    d.add_argument("--target", required=True, help="coefficients of c, space separated")
    d.add_argument("-o", "--output")

    s = sub.add_parser("sparsify", parents=[common], help="shrink a Farkas certificate to at most d+1 rows")
    s.add_argument("--store", required=True)
    s.add_argument("--cert", required=True)
    s.add_argument("-o", "--output")

    o = sub.add_parser("oracle", parents=[common], help="pattern census, brute-force verdict and big-M agreement")
    instance(o, required=True)
    o.add_argument("--pattern-ceiling", type=int,
                   default=_env_int("RELUCERT_PATTERN_CEILING", network.DEFAULT_PATTERN_CEILING))

    x = sub.add_parser("examples", parents=[common], help="run the built-in worked examples")
    x.add_argument("--list", action="store_true")
    return p


COMMANDS = {
    "encode": cmd_encode,
    "check": cmd_check,
    "derive": cmd_derive,
    "sparsify": cmd_sparsify,
    "oracle": cmd_oracle,
    "examples": cmd_examples,
}

_INPUT_ERRORS = (
    UsageError,
    RationalSyntaxError,
    polyhedron.StoreError,
    network.NetworkError,
    network.PropertyError,
    encode.EncodingError,
    certs.CertificateError,
    prooflog.ProofLogError,
    polyhedron.FMCeilingExceeded,
    network.CeilingExceeded,
    IterationLimit,
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    rep = _Report(args.json)
    try:
        code = COMMANDS[args.command](args, rep)
    except prooflog.HeaderMismatch as e:
        rep["verdict"] = "rejected"
        rep["reason"] = f"header mismatch: {e}"
        code = EXIT_REJECT
    except _INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    rep.emit()
    return code


if __name__ == "__main__":
    sys.exit(main())
