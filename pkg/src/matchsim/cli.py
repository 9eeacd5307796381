"""Command-line interface: prob, sample, xcheck, gadget expand.

Every command is deterministic given (inputs, flags, seed): timing goes to
stderr, reports to stdout.  Exit codes: 0 success, 2 validation error,
3 backend inapplicable, 4 tolerance breach in xcheck.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import heisenberg, oracle, pfaffian
from .circuit import Circuit
from .errors import BackendInapplicable, MatchsimError, ValidationError
from .gadgets import compile_circuit, expand_macros
from .serialize import parse_circuit, serialize_circuit

DEFAULT_TOL = 1e-7

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INAPPLICABLE = 3
EXIT_TOLERANCE = 4


@dataclass
class RunReport:
    backend: str
    command: str
    seed: int | None = None
    probabilities: dict = field(default_factory=dict)
    samples: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    wall_ms: float = 0.0  # reported on stderr only, to keep stdout deterministic

    def to_text(self) -> str:
        lines = [f"# command={self.command} backend={self.backend}"
                 + (f" seed={self.seed}" if self.seed is not None else "")]
        for key in sorted(self.probabilities):
            lines.append(f"p({key}) = {self.probabilities[key]!r}")
        lines.extend(self.samples)
        for key in sorted(self.counters):
            lines.append(f"# {key}={self.counters[key]}")
        if self.flags:
            lines.append("# flags=" + ",".join(self.flags))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "command": self.command,
            "backend": self.backend,
            "seed": self.seed,
            "probabilities": self.probabilities,
            "samples": self.samples,
            "counters": self.counters,
            "flags": self.flags,
        }
        return json.dumps(doc, sort_keys=True) + "\n"


def _thread_pool():
    workers = int(os.environ.get("MATCHSIM_THREADS", "1"))
    return max(1, workers)


def _read_circuit(path) -> Circuit:
    with open(path, "rb") as fh:
        return parse_circuit(fh.read())


def _final_records(circuit):
    return [m.record_id for m in circuit.measurements("final")]


def _intermediate_records(circuit):
    return [m.record_id for m in circuit.measurements("intermediate")]


def _pattern_assignment(circuit, pattern):
    finals = _final_records(circuit)
    if len(pattern) != len(finals):
        raise ValidationError(
            "pattern", f"pattern length {len(pattern)} != {len(finals)} final measurements"
        )
    out = {}
    for rid, ch in zip(finals, pattern):
        if ch == "*":
            continue
        if ch not in "01":
            raise ValidationError("pattern", f"bad pattern character {ch!r}")
        out[rid] = int(ch)
    return out


def _marginal_probability(circuit, pattern, backend, max_adaptive, max_block):
    """p(pattern) marginalized over wildcards and intermediate outcomes."""
    assignment = _pattern_assignment(circuit, pattern)
    inters = _intermediate_records(circuit)
    counters = {}
    if backend == "oracle":
        dist = oracle.run_exact(circuit)
        counters["branches"] = len(dist.probs)
        return dist.probability(assignment), counters
    total = 0.0
    if backend == "heisenberg":
        stats = pfaffian.EvalStats()
        if not inters and len(assignment) == 1:
            ((rid, bit),) = assignment.items()
            line = next(m.line for m in circuit.measurements("final") if m.record_id == rid)
            p = heisenberg.strong_single_line(circuit, line, max_block, outcome=bit)
            counters["terms"] = (2 * circuit.n) ** 2
            return p, counters
        for y in np.ndindex(*([2] * len(inters))):
            oc = dict(zip(inters, map(int, y)))
            oc.update(assignment)
            total += heisenberg.joint_prob_few_adaptive(
                circuit, oc, max_adaptive=max_adaptive, max_block=max_block, stats=stats
            )
        counters["terms"] = stats.term_count
        return total, counters
    # pfaffian
    work, _ = compile_circuit(circuit)
    stats = pfaffian.EvalStats()
    for y in np.ndindex(*([2] * len(inters))):
        oc = dict(zip(inters, map(int, y)))
        oc.update(assignment)
        total += _pfaffian_marginal(work, oc, stats)
    counters["pfaffian_evals"] = stats.evaluated_pairs
    return total, counters


def _pfaffian_marginal(compiled, outcomes, stats):
    """Sum the compiled circuit's joint over its compilation records."""
    extra = [r for r in _intermediate_records(compiled) if r not in outcomes]
    total = 0.0
    for z in np.ndindex(*([2] * len(extra))):
        oc = dict(outcomes)
        oc.update(zip(extra, map(int, z)))
        total += pfaffian.joint_prob_entangled(compiled, oc, stats)
    return total


def _pick_backend(requested, circuit, pattern=None):
    if requested != "auto":
        return requested
    nonwild = None if pattern is None else sum(1 for ch in pattern if ch != "*")
    if not _intermediate_records(circuit) and nonwild == 1:
        try:
            pfaffian.check_computational_program(circuit, "heisenberg")
            return "heisenberg"
        except BackendInapplicable:
            pass
    return "pfaffian"


def cmd_prob(args) -> tuple[int, RunReport]:
    circuit = _read_circuit(args.circuit)
    if circuit.has_macros():
        raise BackendInapplicable("prob", "circuit has unexpanded macros; run gadget expand")
    backend = _pick_backend(args.backend, circuit, args.pattern)
    p, counters = _marginal_probability(circuit, args.pattern, backend,
                                        args.max_adaptive, args.max_block)
    report = RunReport(backend, "prob", seed=None,
                       probabilities={args.pattern: p}, counters=counters)
    return EXIT_OK, report


def _format_record(rec_bits, order):
    d = dict(rec_bits)
    return " ".join(f"{rid}={d[rid]}" for rid in order if rid in d)


def cmd_sample(args) -> tuple[int, RunReport]:
    circuit = _read_circuit(args.circuit)
    if circuit.has_macros():
        raise BackendInapplicable("sample", "circuit has unexpanded macros; run gadget expand")
    backend = args.backend if args.backend != "auto" else "pfaffian"
    report = RunReport(backend, "sample", seed=args.seed)
    order = [m.record_id for m in circuit.measurements()]
    if backend == "oracle":
        dist = oracle.run_exact(circuit)
        recs = oracle.sample_distribution(dist, args.shots, args.seed)
        report.samples = [_format_record(r, order) for r in recs]
    elif backend == "pfaffian":
        work, _ = compile_circuit(circuit)
        sampler = pfaffian.ChainRuleSampler(work)
        recs = pfaffian.sample_many(work, args.shots, args.seed, sampler=sampler)
        report.samples = [_format_record(list(r.bits().items()), order) for r in recs]
        report.counters["conditionals_cached"] = len(sampler.cache)
    elif backend == "heisenberg":
        sampler = heisenberg.heisenberg_sampler(
            circuit, max_adaptive=args.max_adaptive, max_block=args.max_block)
        recs = pfaffian.sample_many(circuit, args.shots, args.seed, sampler=sampler)
        report.samples = [_format_record(list(r.bits().items()), order) for r in recs]
    else:
        raise BackendInapplicable(backend, "unknown backend")
    report.counters["shots"] = args.shots
    return EXIT_OK, report


def _xcheck_one(circuit):
    """Run every applicable backend against the oracle joint distribution.

    Returns (max_abs_deviation, tv_distances dict, flags)."""
    dist = oracle.run_exact(circuit)
    flags = []
    devs = {}
    tvs = {}
    # pfaffian on the compiled circuit, compared against the oracle on the
    # same compiled circuit (record sets match exactly)
    work, _ = compile_circuit(circuit)
    wdist = dist if work is circuit else oracle.run_exact(work)
    dev = 0.0
    tv = 0.0
    for rec, p in wdist.probs.items():
        q = pfaffian.joint_prob_entangled(work, dict(rec))
        dev = max(dev, abs(p - q))
        tv += abs(p - q)
    devs["pfaffian"] = dev
    tvs["pfaffian"] = tv / 2
    # heisenberg where applicable
    k = len(_intermediate_records(circuit))
    try:
        if k <= 2:
            dev = 0.0
            tv = 0.0
            for rec, p in dist.probs.items():
                q = heisenberg.joint_prob_few_adaptive(circuit, dict(rec), method="grouped")
                dev = max(dev, abs(p - q))
                tv += abs(p - q)
            devs["heisenberg"] = dev
            tvs["heisenberg"] = tv / 2
        else:
            flags.append("heisenberg skipped: adaptive count above cap")
    except BackendInapplicable as exc:
        flags.append(f"heisenberg skipped: {exc.reason}")
    return max(devs.values()), devs, tvs, flags


def cmd_xcheck(args) -> tuple[int, RunReport]:
    circuits = []
    if args.circuit:
        circuits.append(("file", _read_circuit(args.circuit)))
    else:
        n, depth, count, seed = args.random
        inter = min(3, args.max_adaptive)
        for i in range(count):
            circuits.append(
                (f"random{i}", oracle.random_mg_circuit(
                    n, depth, seed=seed + i, n_intermediate=(i % (inter + 1))))
            )
    report = RunReport("xcheck", "xcheck", seed=None)
    worst = 0.0

    def one(item):
        name, c = item
        return name, _xcheck_one(c)

    workers = _thread_pool()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, circuits))
    else:
        results = [one(item) for item in circuits]
    for name, (dev, devs, tvs, flags) in results:
        worst = max(worst, dev)
        for b in sorted(devs):
            report.probabilities[f"{name}.{b}.maxdev"] = devs[b]
            report.probabilities[f"{name}.{b}.tv"] = tvs[b]
        report.flags.extend(f"{name}: {f}" for f in flags)
    report.counters["circuits"] = len(circuits)
    report.counters["max_abs_deviation"] = worst
    code = EXIT_OK if worst <= args.tol else EXIT_TOLERANCE
    return code, report


def cmd_gadget_expand(args) -> tuple[int, RunReport]:
    circuit = _read_circuit(args.circuit)
    expanded, cost = expand_macros(circuit, post_selected_swaps=args.post_selected)
    expanded.validate()
    text = serialize_circuit(expanded)
    report = RunReport("gadgets", "gadget-expand")
    report.samples = [text.rstrip("\n")]
    for name, c in sorted(cost.items()):
        report.counters[f"{name}.gates"] = c.gates
        report.counters[f"{name}.measurements"] = c.measurements
        report.counters[f"{name}.ancilla_lines"] = c.ancilla_lines
        report.counters[f"{name}.magic_consumed"] = c.magic_consumed
    report.counters["lines"] = expanded.n
    return EXIT_OK, report


def build_parser():
    ap = argparse.ArgumentParser(prog="matchsim",
                                 description="Classical simulation of nearest-neighbour "
                                             "matchgate circuits")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--backend", choices=["auto", "heisenberg", "pfaffian", "oracle"],
                       default="auto")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float, default=DEFAULT_TOL)
        p.add_argument("--max-adaptive", type=int, default=3)
        p.add_argument("--max-block", type=int, default=12)
        p.add_argument("--json", action="store_true")

    p = sub.add_parser("prob", help="probability of an outcome pattern")
    p.add_argument("circuit")
    p.add_argument("--pattern", "-p", required=True,
                   help="final-outcome pattern over the final measurements, "
                        "e.g. 01*1 (* marginalizes)")
    common(p)

    p = sub.add_parser("sample", help="weak simulation: sample outcome records")
    p.add_argument("circuit")
    p.add_argument("--shots", type=int, default=1)
    common(p)

    p = sub.add_parser("xcheck", help="differential check of all backends vs the oracle")
    p.add_argument("circuit", nargs="?", default=None)
    p.add_argument("--random", nargs=4, type=int, metavar=("N", "DEPTH", "COUNT", "SEED"),
                   help="check COUNT random circuits instead of a file")
    common(p)

    p = sub.add_parser("gadget", help="gadget utilities")
    gsub = p.add_subparsers(dest="gadget_command", required=True)
    g = gsub.add_parser("expand", help="lower gadget macros to primitives")
    g.add_argument("circuit")
    g.add_argument("--post-selected", action="store_true",
                   help="emit the post-selected SWAP-gadget variant")
    common(g)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        if args.command == "prob":
            code, report = cmd_prob(args)
        elif args.command == "sample":
            code, report = cmd_sample(args)
        elif args.command == "xcheck":
            if args.circuit is None and args.random is None:
                print("xcheck: need a circuit file or --random", file=sys.stderr)
                return EXIT_VALIDATION
            code, report = cmd_xcheck(args)
        else:
            code, report = cmd_gadget_expand(args)
    except BackendInapplicable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INAPPLICABLE
    except MatchsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    report.wall_ms = (time.perf_counter() - t0) * 1e3
    sys.stdout.write(report.to_json() if args.json else report.to_text())
    print(f"# wall_ms={report.wall_ms:.1f}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
