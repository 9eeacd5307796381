"""Heisenberg backend tests: strong single-line outputs, direct-summation
joint probabilities, cost accounting, conditional sampling."""

import numpy as np
import pytest

from matchsim.circuit import (
    BitsBlock,
    Circuit,
    EntangledBlock,
    Gate,
    HADAMARD_PAIR,
    InputSpec,
    MagicBlock,
    Measure,
    ProductBlock,
    bits_input,
)
from matchsim.errors import BackendInapplicable, BudgetExceeded
from matchsim.heisenberg import (
    joint_prob_few_adaptive,
    sample_few_adaptive,
    strong_single_line,
)
from matchsim.oracle import random_mg_circuit, run_exact
from matchsim.pfaffian import EvalStats, joint_prob_bits

PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)


def test_empty_circuit_basis_states():
    c0 = Circuit(2, bits_input("00"), (Measure(0, "x", "final"),)).validate()
    assert strong_single_line(c0, 0) == pytest.approx(0.0, abs=1e-12)
    c1 = Circuit(2, bits_input("10"), (Measure(0, "x", "final"),)).validate()
    assert strong_single_line(c1, 0) == pytest.approx(1.0)


def test_strong_single_line_matches_oracle_on_random_product_input():
    rng = np.random.default_rng(4)
    states = []
    for _ in range(6):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        states.append(v / np.linalg.norm(v))
    spec = InputSpec((ProductBlock(tuple(states)),))
    c = random_mg_circuit(6, 40, seed=15, input_spec=spec)
    dist = run_exact(c)
    for line in range(6):
        p = strong_single_line(c, line)
        assert abs(p - dist.probability({f"x{line}": 1})) < 1e-9


def test_strong_single_line_outcomes_sum_to_one():
    c = random_mg_circuit(5, 30, seed=16,
                          input_spec=InputSpec((BitsBlock("0"), MagicBlock())))
    for line in range(5):
        p1 = strong_single_line(c, line, outcome=1)
        p0 = strong_single_line(c, line, outcome=0)
        assert abs(p0 + p1 - 1.0) < 1e-10


def test_strong_single_line_requires_nonadapt():
    c = random_mg_circuit(3, 5, seed=17, n_intermediate=1)
    with pytest.raises(BackendInapplicable):
        strong_single_line(c, 0)


def test_joint_k0_reduces_to_delta_on_identity_circuit():
    c = Circuit(3, bits_input("010"),
                tuple(Measure(l, f"x{l}", "final") for l in range(3))).validate()
    assert joint_prob_few_adaptive(c, {"x0": 0, "x1": 1, "x2": 0}) == pytest.approx(1.0)
    assert joint_prob_few_adaptive(c, {"x0": 1, "x1": 1, "x2": 0}) == pytest.approx(0.0, abs=1e-12)


def test_hadamard_pair_circuit_joint_matches_oracle():
    # k=1 on the |0>|+> input with an intermediate measurement on the ancilla
    spec = InputSpec((BitsBlock("0"), ProductBlock((PLUS,))))
    prog = (Gate(0, HADAMARD_PAIR), Measure(1, "m", "intermediate"),
            Gate(0, HADAMARD_PAIR), Measure(0, "x", "final"))
    c = Circuit(2, spec, prog).validate()
    dist = run_exact(c)
    for rec, p in dist.probs.items():
        q = joint_prob_few_adaptive(c, dict(rec), method="terms")
        assert abs(p - q) < 1e-9


def test_literal_and_grouped_paths_agree():
    c = random_mg_circuit(3, 12, seed=18, n_intermediate=1, final_lines=[2])
    for rec in ({"m0": 0, "x0": 0}, {"m0": 1, "x0": 1}, {"m0": 1, "x0": 0}):
        qt = joint_prob_few_adaptive(c, dict(rec), method="terms")
        qg = joint_prob_few_adaptive(c, dict(rec), method="grouped")
        assert abs(qt - qg) < 1e-12


def test_term_count_formula():
    # (2n)^(4k+2) for one final line
    for n, k in ((3, 0), (4, 1), (5, 2)):
        c = random_mg_circuit(n, 8, seed=19 + n, n_intermediate=k, final_lines=[0])
        stats = EvalStats()
        oc = {f"m{j}": 0 for j in range(k)}
        oc["x0"] = 0
        joint_prob_few_adaptive(c, oc, method="grouped", stats=stats)
        assert stats.term_count == (2 * n) ** (4 * k + 2)


def test_literal_budget_enforced():
    c = random_mg_circuit(4, 10, seed=20, n_intermediate=2, final_lines=[0])
    with pytest.raises(BudgetExceeded):
        joint_prob_few_adaptive(c, {"m0": 0, "m1": 0, "x0": 0}, method="terms",
                                term_budget=1000)


def test_adaptive_cap_enforced():
    c = random_mg_circuit(4, 10, seed=21, n_intermediate=4, final_lines=[0])
    oc = {f"m{j}": 0 for j in range(4)}
    oc["x0"] = 0
    with pytest.raises(BackendInapplicable):
        joint_prob_few_adaptive(c, oc, max_adaptive=3)


def test_k2_normalization_with_entangled_input():
    spec = InputSpec((BitsBlock("000"), EntangledBlock(2, np.array([0.6, 0, 0, 0.8j]))))
    c = random_mg_circuit(5, 20, seed=22, n_intermediate=2, final_lines=[1], input_spec=spec)
    total = 0.0
    for y1 in (0, 1):
        for y2 in (0, 1):
            for x in (0, 1):
                total += joint_prob_few_adaptive(
                    c, {"m0": y1, "m1": y2, "x0": x}, method="grouped")
    assert total == pytest.approx(1.0, abs=1e-8)


def test_backend_equivalence_with_pfaffian_k0():
    c = random_mg_circuit(5, 25, seed=23, input_spec=bits_input("01100"))
    for x in np.ndindex(*([2] * 5)):
        oc = {f"x{l}": int(x[l]) for l in range(5)}
        ph = joint_prob_few_adaptive(c, oc, method="grouped")
        pp = joint_prob_bits(c, oc)
        assert abs(ph - pp) < 1e-8


def test_sampling_deterministic_and_matches_oracle():
    spec = InputSpec((ProductBlock((PLUS,)), BitsBlock("00")))
    c = random_mg_circuit(3, 10, seed=24, n_intermediate=1, final_lines=[1], input_spec=spec)
    r1 = sample_few_adaptive(c, seed=1)
    r2 = sample_few_adaptive(c, seed=1)
    assert r1.assignments == r2.assignments
    dist = run_exact(c)
    from matchsim.heisenberg import heisenberg_sampler
    from matchsim.pfaffian import shot_rng

    sampler = heisenberg_sampler(c, method="grouped")
    counts = {}
    shots = 3000
    for i in range(shots):
        r = sampler.sample(shot_rng(2, i))
        key = tuple(sorted(r.bits().items()))
        counts[key] = counts.get(key, 0) + 1
    tv = 0.5 * sum(abs(counts.get(tuple(sorted(dict(rec).items())), 0) / shots - p)
                   for rec, p in dist.probs.items())
    assert tv < 0.04


def test_two_adaptive_sampler_tv_at_1e5_shots():
    # empirical distribution of a 2-adaptive n=4 circuit vs the oracle
    from matchsim.pfaffian import sample_many

    c = random_mg_circuit(4, 18, seed=25, n_intermediate=2, final_lines=[0, 3],
                          input_spec=bits_input("0100"))
    sampler = __import__("matchsim.heisenberg", fromlist=["heisenberg_sampler"]) \
        .heisenberg_sampler(c, method="grouped")
    recs = sample_many(c, 100_000, seed=12, sampler=sampler)
    dist = run_exact(c)
    counts = {}
    for r in recs:
        key = tuple(sorted(r.bits().items()))
        counts[key] = counts.get(key, 0) + 1
    tv = 0.5 * sum(abs(counts.get(tuple(sorted(dict(rec).items())), 0) / 100_000 - p)
                   for rec, p in dist.probs.items())
    assert tv < 0.01


def test_term_count_formula_multi_final():
    c = random_mg_circuit(3, 8, seed=26, n_intermediate=1, final_lines=[0, 2])
    stats = EvalStats()
    joint_prob_few_adaptive(c, {"m0": 1, "x0": 0, "x1": 1}, method="grouped", stats=stats)
    assert stats.term_count == 6 ** (4 + 2 * 2)
