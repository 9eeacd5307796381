"""Pfaffian/Wick backend.

Joint outcome probabilities of adaptive matchgate circuits on computational
basis inputs are Pfaffians of antisymmetric contraction matrices; an input
with one trailing entangled zone of k lines costs an extra sum over at most
2^{2k} cross terms, pruned by Hamming-weight parity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuit import (
    BitsBlock,
    Circuit,
    Computational,
    EntangledBlock,
    MagicBlock,
    ProductBlock,
    Gate,
    Measure,
    instantiate_segments,
)
from .errors import (
    BackendInapplicable,
    BlockTooLarge,
    InconsistentSlots,
    NotSkew,
    ZeroProbabilityPrefix,
)
from .majorana import h_matrix, segment_rotation, t_from_r

SKEW_TOL = 1e-10
NEG_CLAMP = 1e-9
ZERO_PREFIX = 1e-12
DEFAULT_ZONE_CAP = 14


def pfaffian(m, check=True) -> complex:
    """Pfaffian of an antisymmetric matrix, sign included.

    Skew-symmetric elimination to tridiagonal form with partial pivoting
    (Parlett-Reid), O(d^3), tracking the sign of row/column swaps.  The
    Pfaffian of an odd-dimensional matrix is 0 by convention.
    """
    a = np.array(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSkew(f"expected square matrix, got shape {a.shape}")
    d = a.shape[0]
    if check and d:
        scale = max(1.0, float(np.max(np.abs(a))))
        residual = float(np.max(np.abs(a + a.T)))
        if residual > SKEW_TOL * scale:
            raise NotSkew(f"skew-symmetry residual {residual:.3e}")
    if d % 2 == 1:
        return 0.0
    if d == 0:
        return 1.0 + 0.0j
    pf = 1.0 + 0.0j
    for k in range(0, d - 1, 2):
        kp = k + 1 + int(np.argmax(np.abs(a[k + 1:, k])))
        if kp != k + 1:
            a[[k + 1, kp], :] = a[[kp, k + 1], :]
            a[:, [k + 1, kp]] = a[:, [kp, k + 1]]
            pf = -pf
        if a[k + 1, k] == 0.0:
            return 0.0
        pf *= a[k, k + 1]
        if k + 2 < d:
            tau = a[k, k + 2:] / a[k, k + 1]
            col = a[k + 2:, k + 1].copy()
            upd = np.outer(tau, col)
            # subtracting the same product transposed keeps the block exactly
            # antisymmetric (two independent outer products need not agree
            # bitwise), so later exact-zero pivot tests stay consistent
            a[k + 2:, k + 2:] += upd - upd.T
    return complex(pf)


def pfaffian_brute(m) -> complex:
    """Signed perfect-matching expansion along the first row; test oracle,
    exponential cost."""
    a = np.asarray(m, dtype=complex)
    d = a.shape[0]
    if d % 2 == 1:
        return 0.0
    if d == 0:
        return 1.0 + 0.0j
    total = 0.0 + 0.0j
    rest = list(range(1, d))
    for pos, j in enumerate(rest):
        keep = [i for i in rest if i != j]
        sub = a[np.ix_(keep, keep)]
        total += (-1) ** pos * a[0, j] * pfaffian_brute(sub)
    return total


# ---------------------------------------------------------------------------
# Contraction slots
# ---------------------------------------------------------------------------

# slot kinds, in the only order they may appear left to right:
#   q  : bra-side input 1-positions (cross terms)
#   a/b: ket-side adaptive pair (plain / conjugated T row)
#   d/e: final measurement pair (plain / conjugated T row)
#   f/g: bra-side adaptive pair
#   p  : ket-side input 1-positions
_STAGE = {"q": 0, "a": 1, "b": 1, "d": 2, "e": 2, "f": 3, "g": 3, "p": 4}


@dataclass(frozen=True, eq=False)
class ContractionSlot:
    """One Majorana factor of the joint-probability expression.

    ``vector`` holds its expansion coefficients over the 2n Majorana
    operators: a (possibly conjugated) T-matrix row for measurement factors,
    a standard basis vector for input-string factors.
    """

    kind: str
    vector: np.ndarray
    owner: int = -1  # measured line or input position (0-based)
    segment: int = -1  # which cumulative T matrix, 1-based; -1 for p/q


def build_o(slots, h) -> np.ndarray:
    """Antisymmetric contraction matrix from an ordered slot list.

    Entry (i, j), i < j, is the vacuum contraction of slots i and j:
    v_i H v_j^T.  This reproduces every pattern of the single- and
    multi-measurement lookup tables (T H T^T, T H T^dag, (T H)_{.,2p-1},
    delta entries, and the zero q-q / p-p corners) uniformly.
    """
    order = [_STAGE[s.kind] for s in slots]
    if any(b < a for a, b in zip(order, order[1:])):
        raise InconsistentSlots(f"slot kinds out of order: {[s.kind for s in slots]}")
    if not slots:
        return np.zeros((0, 0), dtype=complex)
    v = np.array([s.vector for s in slots])
    full = v @ h @ v.T
    o = np.triu(full, 1)
    return o - o.T


def _measurement_pair(t_row, outcome, kinds, owner, segment):
    """Slot pair for one projector, ordered by outcome.

    Outcome 0 projects onto a a^dag (plain row first), outcome 1 onto
    a^dag a (conjugated row first).
    """
    plain = ContractionSlot(kinds[0], t_row, owner, segment)
    conj = ContractionSlot(kinds[1], t_row.conj(), owner, segment)
    return [plain, conj] if outcome == 0 else [conj, plain]


@dataclass
class EvalStats:
    """Counters exposed for the cost-law assertions."""

    term_count: int = 0
    evaluated_terms: int = 0
    evaluated_pairs: int = 0
    method: str = ""
    flags: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Circuit plumbing shared with the Heisenberg backend
# ---------------------------------------------------------------------------


def check_computational_program(circuit: Circuit, backend: str):
    """Common backend admissibility: lowered program, computational bases,
    no gates after final measurements."""
    if circuit.has_macros():
        raise BackendInapplicable(backend, "circuit contains unexpanded macros")
    seen_final = False
    for ins in circuit.program:
        if isinstance(ins, Measure):
            if not isinstance(ins.basis, Computational):
                raise BackendInapplicable(backend, "non-computational measurement basis")
            seen_final = seen_final or ins.role == "final"
        elif isinstance(ins, Gate) and seen_final:
            raise BackendInapplicable(backend, "gate after a final measurement")


def resolve_outcomes(circuit: Circuit, outcomes: dict, backend: str):
    """Split an outcome assignment into (y-prefix, finals subset).

    ``outcomes`` must cover a contiguous prefix of the intermediate
    measurements; final records may be included only when every intermediate
    is assigned.  Returns (intermediates list, assigned prefix length,
    finals list, assigned finals in program order).
    """
    _, intermediates, finals = circuit.split_segments()
    inter_ids = [m.record_id for m in intermediates]
    final_ids = {m.record_id for m in finals}
    for rid in outcomes:
        if rid not in inter_ids and rid not in final_ids:
            raise BackendInapplicable(backend, f"unknown record id {rid!r}")
    t = 0
    while t < len(inter_ids) and inter_ids[t] in outcomes:
        t += 1
    for rid in inter_ids[t:]:
        if rid in outcomes:
            raise BackendInapplicable(
                backend, "outcome assignment skips an intermediate measurement"
            )
    assigned_finals = [m for m in finals if m.record_id in outcomes]
    if assigned_finals and t < len(inter_ids):
        raise BackendInapplicable(
            backend, "final outcomes given while intermediates are unassigned"
        )
    return intermediates, t, finals, assigned_finals


def cumulative_ts(circuit: Circuit, outcomes: dict, upto: int, with_final: bool):
    """Cumulative T matrices T^(1), .., T^(upto) (and the final-segment T as
    the last entry when ``with_final``), with guards resolved from outcomes."""
    segs = instantiate_segments(circuit, outcomes, upto=None if with_final else upto)
    n = circuit.n
    ts = []
    r = np.eye(2 * n)
    limit = len(segs) if with_final else upto
    for s in range(limit):
        r = r @ segment_rotation(segs[s], n)
        ts.append(t_from_r(r))
    return ts


def measurement_slots(circuit, outcomes, backend="pfaffian"):
    """Middle (measurement) slots of the joint-probability expression, in
    operator order, for an assignment covering a y-prefix and a finals
    subset.  Returns (slots, stats_term_base) where the nominal summand count
    of the displayed sum is (2n)^len(slots)."""
    intermediates, t, finals, assigned_finals = resolve_outcomes(circuit, outcomes, backend)
    with_final = bool(assigned_finals)
    ts = cumulative_ts(circuit, outcomes, t, with_final)
    ket = []
    for s in range(t):
        m = intermediates[s]
        ket += _measurement_pair(ts[s][m.line], outcomes[m.record_id], ("a", "b"), m.line, s + 1)
    mid = []
    for m in assigned_finals:
        mid += _measurement_pair(ts[-1][m.line], outcomes[m.record_id], ("d", "e"), m.line, len(ts))
    bra = []
    for s in reversed(range(t)):
        m = intermediates[s]
        bra += _measurement_pair(ts[s][m.line], outcomes[m.record_id], ("f", "g"), m.line, s + 1)
    return ket + mid + bra


# ---------------------------------------------------------------------------
# Canonical input handling
# ---------------------------------------------------------------------------


@dataclass
class CanonicalInput:
    """bits + optional trailing superposition zone (|+> line and/or an
    entangled block, merged)."""

    bits: str
    zone_start: int
    zone_amps: np.ndarray | None  # None when the input is bits only

    @property
    def zone_width(self):
        return 0 if self.zone_amps is None else int(np.log2(len(self.zone_amps)))


def split_canonical_input(circuit: Circuit, backend="pfaffian", zone_cap=DEFAULT_ZONE_CAP):
    """Decompose the input into leading bits and a trailing zone.

    Accepts Bits blocks first, then any run of product/entangled/magic blocks
    which are merged into a single zone vector.  Anything else (for example
    bits after the zone) needs ``gadgets.compile_input`` first.
    """
    bits = []
    zone = None
    for block in circuit.input.blocks:
        if isinstance(block, BitsBlock) and zone is None:
            bits.append(block.bits)
        elif isinstance(block, (ProductBlock, EntangledBlock, MagicBlock)):
            vec = block.state()
            zone = vec if zone is None else np.kron(zone, vec)
        else:
            raise BackendInapplicable(
                backend, "input is not in canonical bits + trailing-zone form; "
                         "compile it first"
            )
    bits = "".join(bits)
    if zone is not None:
        width = circuit.n - len(bits)
        if width > zone_cap:
            raise BlockTooLarge(
                f"superposition zone of width {width} exceeds cap {zone_cap}"
            )
    return CanonicalInput(bits, len(bits), zone)


def _one_positions(bits):
    return [i for i, b in enumerate(bits) if b == "1"]


def _input_slots(lines, n, kind):
    """p or q slots for input 1-positions; bra side is ordered descending."""
    vecs = []
    order = sorted(lines, reverse=(kind == "q"))
    for l in order:
        v = np.zeros(2 * n, dtype=complex)
        v[2 * l] = 1.0  # X-type Majorana index of line l
        vecs.append(ContractionSlot(kind, v, l))
    return vecs


# ---------------------------------------------------------------------------
# Joint probabilities
# ---------------------------------------------------------------------------


def _clamp_probability(value, flags):
    if abs(value.imag) > NEG_CLAMP:
        flags.append(f"imaginary residual {value.imag:.2e}")
    p = value.real
    if p < 0:
        if p < -NEG_CLAMP:
            flags.append(f"negative probability {p:.2e}")
        p = 0.0
    return p


def joint_prob_bits(circuit: Circuit, outcomes: dict, stats: EvalStats | None = None) -> float:
    """Joint probability of an outcome assignment for a bit-string input.

    ``outcomes`` assigns bits to a prefix of the intermediate records plus
    any subset of final records (unassigned finals are marginalized).
    """
    check_computational_program(circuit, "pfaffian")
    canon = split_canonical_input(circuit, "pfaffian")
    if canon.zone_amps is not None:
        return joint_prob_entangled(circuit, outcomes, stats)
    stats = stats if stats is not None else EvalStats()
    mids = measurement_slots(circuit, outcomes)
    n = circuit.n
    stats.term_count += (2 * n) ** len(mids)
    stats.method = "pfaffian"
    ones = _one_positions(canon.bits)
    slots = _input_slots(ones, n, "q") + mids + _input_slots(ones, n, "p")
    h = h_matrix(n)
    value = pfaffian(build_o(slots, h), check=False)
    stats.evaluated_pairs += 1
    return _clamp_probability(value, stats.flags)


def joint_prob_entangled(circuit: Circuit, outcomes: dict,
                         stats: EvalStats | None = None,
                         zone_cap=DEFAULT_ZONE_CAP) -> float:
    """Joint probability for bits + one trailing superposition zone.

    The zone state is expanded over computational components w with
    amplitudes lam_w; the probability is sum over (w, w') of
    lam_w lam_{w'}^* Pf(O_{w,w'}), and pairs whose Hamming weights differ in
    parity are skipped since their vacuum expectation vanishes.
    """
    check_computational_program(circuit, "pfaffian")
    canon = split_canonical_input(circuit, "pfaffian", zone_cap)
    stats = stats if stats is not None else EvalStats()
    if canon.zone_amps is None:
        return joint_prob_bits(circuit, outcomes, stats)
    mids = measurement_slots(circuit, outcomes)
    n = circuit.n
    stats.term_count += (2 * n) ** len(mids)
    stats.method = "pfaffian-entangled"
    h = h_matrix(n)
    base = _one_positions(canon.bits)
    amps = canon.zone_amps
    width = canon.zone_width
    support = [w for w in range(len(amps)) if amps[w] != 0]
    parity = {w: bin(w).count("1") & 1 for w in support}
    value = 0.0 + 0.0j
    for w in support:
        ket_ones = base + [canon.zone_start + i
                           for i in range(width) if (w >> (width - 1 - i)) & 1]
        p_slots = _input_slots(ket_ones, n, "p")
        for wp in support:
            if parity[w] != parity[wp]:
                continue
            bra_ones = base + [canon.zone_start + i
                               for i in range(width) if (wp >> (width - 1 - i)) & 1]
            slots = _input_slots(bra_ones, n, "q") + mids + p_slots
            value += amps[w] * np.conj(amps[wp]) * pfaffian(build_o(slots, h), check=False)
            stats.evaluated_pairs += 1
    return _clamp_probability(value, stats.flags)


# ---------------------------------------------------------------------------
# Chain-rule weak sampling
# ---------------------------------------------------------------------------


@dataclass
class OutcomeRecord:
    """One weak-simulation shot: (record_id, bit, conditional probability)
    triples in measurement order."""

    assignments: tuple

    def bits(self) -> dict:
        return {rid: b for rid, b, _ in self.assignments}

    def joint_probability(self) -> float:
        p = 1.0
        for _, _, c in self.assignments:
            p *= c
        return p


class ChainRuleSampler:
    """Iterative marginal sampler.

    Per shot: simulate up to each intermediate measurement, compute the two
    prefix probabilities, draw the outcome from the conditional, fix it, and
    continue; the final lines are drawn the same way.  Conditionals are
    cached per prefix so repeated shots do not recompute Pfaffians.
    """

    def __init__(self, circuit: Circuit, prob_fn=None, zero_eps=ZERO_PREFIX):
        self.circuit = circuit
        self.prob_fn = prob_fn or (lambda oc: joint_prob_entangled(circuit, oc))
        self.zero_eps = zero_eps
        self.cache = {}
        ms = circuit.measurements()
        self.order = [m.record_id for m in ms if m.role == "intermediate"]
        self.order += [m.record_id for m in ms if m.role == "final"]

    def _conditionals(self, prefix_bits, prefix_assign, denom):
        key = prefix_bits
        if key not in self.cache:
            rid = self.order[len(prefix_bits)]
            p0 = self.prob_fn({**prefix_assign, rid: 0})
            p1 = self.prob_fn({**prefix_assign, rid: 1})
            self.cache[key] = (p0, p1)
        return self.cache[key]

    def sample(self, rng) -> OutcomeRecord:
        assign = {}
        assignments = []
        denom = 1.0
        for step, rid in enumerate(self.order):
            if denom < self.zero_eps:
                raise ZeroProbabilityPrefix(
                    f"prefix probability {denom:.3e} below {self.zero_eps:.0e}"
                )
            p0, p1 = self._conditionals(tuple(b for _, b, _ in assignments), assign, denom)
            cond0 = min(max(p0 / denom, 0.0), 1.0)
            bit = 0 if rng.random() < cond0 else 1
            denom = (p0, p1)[bit]
            cond = (cond0, 1.0 - cond0)[bit]
            assign[rid] = bit
            assignments.append((rid, bit, cond))
        return OutcomeRecord(tuple(assignments))


def shot_rng(seed: int, shot: int) -> np.random.Generator:
    """Per-shot generator derived from the master seed by a counter scheme."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, shot))))


class _RowRng:
    """Uniform draws served from a precomputed row."""

    def __init__(self, row):
        self.row = row
        self.i = 0

    def random(self):
        v = self.row[self.i]
        self.i += 1
        return v


def sample_adaptive(circuit: Circuit, seed: int, shot: int = 0,
                    sampler: ChainRuleSampler | None = None) -> OutcomeRecord:
    """One weak-simulation shot of an adaptive circuit (canonical input)."""
    sampler = sampler or ChainRuleSampler(circuit)
    return sampler.sample(shot_rng(seed, shot))


def sample_many(circuit: Circuit, shots: int, seed: int,
                prob_fn=None, sampler: ChainRuleSampler | None = None) -> list:
    """Deterministic multi-shot sampling with a shared conditional cache.

    Shot i consumes row i of a uniform table drawn once from the master
    seed (a counter scheme: the row index addresses the stream), so results
    are reproducible and independent of how rows are later distributed
    across workers.
    """
    sampler = sampler or ChainRuleSampler(circuit, prob_fn)
    rows = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed))).random(
        (shots, max(1, len(sampler.order)))
    )
    return [sampler.sample(_RowRng(rows[i])) for i in range(shots)]
