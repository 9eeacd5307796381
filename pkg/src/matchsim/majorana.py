"""Majorana / Jordan-Wigner algebra.

Builds the 2n x 2n orthogonal rotation induced by a matchgate circuit on the
Majorana operators, the derived n x 2n annihilation-coefficient matrix, and
evaluates expectation values of Majorana-operator products over block-product
inputs.

Majorana indices are 0-based in code: line l (0-based) owns indices 2l
(X-type, the paper's c_{2l+1} in 1-based counting) and 2l+1 (Y-type).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import BitsBlock, EntangledBlock, InputSpec, MagicBlock, ProductBlock
from .errors import BlockTooLarge, NonRealResidual

REAL_TOL = 1e-10

# Single-letter Pauli products P[a] P[b] = i^PHASE[a,b] * P[LETTER[a,b]],
# letters coded I=0, X=1, Y=2, Z=3.
LETTER = np.array(
    [[0, 1, 2, 3],
     [1, 0, 3, 2],
     [2, 3, 0, 1],
     [3, 2, 1, 0]], dtype=np.uint8)
PHASE = np.array(
    [[0, 0, 0, 0],
     [0, 0, 1, 3],
     [0, 3, 0, 1],
     [0, 1, 3, 0]], dtype=np.uint8)

PAULI_MATS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

_I_POWERS = np.array([1, 1j, -1, -1j])


@dataclass(frozen=True, eq=False)
class PauliString:
    """Phase times a tensor product of Pauli letters, phase in {1, i, -1, -i}.

    The phase is stored exactly as a power of i.
    """

    phase_code: int  # power of i, 0..3
    letters: np.ndarray  # uint8 codes, length n

    @property
    def phase(self) -> complex:
        return _I_POWERS[self.phase_code % 4]

    @property
    def n(self) -> int:
        return len(self.letters)

    def matrix(self) -> np.ndarray:
        """Dense 2^n matrix; for tests and small-block work only."""
        m = np.array([[1.0]], dtype=complex)
        for code in self.letters:
            m = np.kron(m, PAULI_MATS[code])
        return self.phase * m


def identity_string(n: int) -> PauliString:
    return PauliString(0, np.zeros(n, dtype=np.uint8))


def majorana_pauli(mu: int, n: int) -> PauliString:
    """Jordan-Wigner form of the mu-th Majorana operator, mu 1-based 1..2n.

    Odd mu gives Z...Z X 1...1, even mu the same with Y, the X/Y sitting on
    line (mu+1)//2 (1-based).
    """
    if not 1 <= mu <= 2 * n:
        raise ValueError(f"majorana index {mu} outside 1..{2 * n}")
    k = (mu + 1) // 2  # 1-based line
    letters = np.zeros(n, dtype=np.uint8)
    letters[: k - 1] = 3
    letters[k - 1] = 1 if mu % 2 == 1 else 2
    return PauliString(0, letters)


def pauli_product(*strings: PauliString) -> PauliString:
    """Product of Pauli strings, phases accumulated exactly."""
    if not strings:
        raise ValueError("empty product")
    letters = strings[0].letters.copy()
    code = strings[0].phase_code
    for ps in strings[1:]:
        code = (code + ps.phase_code + int(PHASE[letters, ps.letters].sum())) % 4
        letters = LETTER[letters, ps.letters]
    return PauliString(code, letters)


def _bits_factor(letters, bits) -> complex:
    out = 1.0
    for code, b in zip(letters, bits):
        if code == 0:
            continue
        if code == 3:
            out = -out if b == "1" else out
        else:
            return 0.0
    return out


def _dense_factor(letters, state) -> complex:
    k = len(letters)
    v = state.reshape([2] * k) if k > 1 else state
    v = np.array(v, dtype=complex)
    for axis, code in enumerate(letters):
        if code == 0:
            continue
        v = np.tensordot(PAULI_MATS[code], v, axes=([1], [axis]))
        v = np.moveaxis(v, 0, axis)
    return complex(np.vdot(state.reshape(-1), v.reshape(-1)))


def expectation_pauli(ps: PauliString, spec: InputSpec, max_block: int = 12) -> complex:
    """<spec| ps |spec>, factorized over the input blocks.

    Each entangled block costs a dense contraction of size 2^k, so block
    widths above ``max_block`` are rejected.
    """
    value = complex(ps.phase)
    pos = 0
    for block in spec.blocks:
        letters = ps.letters[pos: pos + block.n]
        pos += block.n
        if not letters.any() and not isinstance(block, BitsBlock):
            continue
        if isinstance(block, BitsBlock):
            f = _bits_factor(letters, block.bits)
        elif isinstance(block, ProductBlock):
            f = 1.0
            for code, s in zip(letters, block.states):
                if code:
                    f *= np.vdot(s, PAULI_MATS[code] @ s)
        else:
            if block.n > max_block:
                raise BlockTooLarge(
                    f"entangled block of width {block.n} exceeds cap {max_block}"
                )
            f = _dense_factor(letters, block.state())
        value *= f
        if value == 0:
            return 0.0
    return value


# ---------------------------------------------------------------------------
# Rotation and T matrices
# ---------------------------------------------------------------------------

# Local parts of the four Majorana operators touching a gate on lines (l, l+1):
# X x 1, Y x 1, Z x X, Z x Y (the common Z prefix on lines < l commutes through).
_LOCAL_MAJORANA = (
    np.kron(PAULI_MATS[1], PAULI_MATS[0]),
    np.kron(PAULI_MATS[2], PAULI_MATS[0]),
    np.kron(PAULI_MATS[3], PAULI_MATS[1]),
    np.kron(PAULI_MATS[3], PAULI_MATS[2]),
)


def gate_rotation_block(gate) -> np.ndarray:
    """4x4 real block of the Majorana rotation of a single matchgate.

    Row mu holds the expansion of U c_mu U^dag over the four local Majorana
    operators; entries with imaginary part above tolerance signal that a
    non-matchgate slipped through validation.
    """
    u = gate.matrix()
    udg = u.conj().T
    block = np.empty((4, 4), dtype=complex)
    for i, mi in enumerate(_LOCAL_MAJORANA):
        conj = u @ mi @ udg
        for j, mj in enumerate(_LOCAL_MAJORANA):
            block[i, j] = np.trace(mj @ conj) / 4.0
    residual = np.max(np.abs(block.imag))
    if residual > REAL_TOL:
        raise NonRealResidual(f"rotation block has imaginary residual {residual:.3e}")
    return block.real


def gate_rotation(gate, line: int, n: int) -> np.ndarray:
    """2n x 2n rotation of a single matchgate on lines (line, line+1)."""
    r = np.eye(2 * n)
    j = slice(2 * line, 2 * line + 4)
    r[j, j] = gate_rotation_block(gate)
    return r


def segment_rotation(gates, n: int, convention: str = "first-leftmost") -> np.ndarray:
    """Rotation of a gate sequence (first-applied gate first in the list).

    With U c_mu U^dag = sum_nu R[mu, nu] c_nu and U = g_m ... g_1, one has
    R(U) = R(g_1) R(g_2) ... R(g_m).  The reverse order is kept behind the
    ``convention`` switch ("first-rightmost") solely so the pinning test can
    demonstrate that it disagrees with the dense oracle.
    """
    r = np.eye(2 * n)
    for g in gates:
        block = gate_rotation_block(g.gate if hasattr(g, "gate") else g)
        line = g.line if hasattr(g, "line") else 0
        j = slice(2 * line, 2 * line + 4)
        if convention == "first-leftmost":
            # r @ r_gate touches only the four banded columns
            r[:, j] = r[:, j] @ block
        elif convention == "first-rightmost":
            r[j, :] = block @ r[j, :]
        else:
            raise ValueError(f"unknown convention {convention!r}")
    return r


def t_from_r(r: np.ndarray) -> np.ndarray:
    """n x 2n annihilation-coefficient matrix T[i, nu] = (R^T[2i, nu] + i R^T[2i+1, nu]) / 2
    (0-based rows; the defining formula holds exactly by construction)."""
    return 0.5 * (r[:, 0::2] + 1j * r[:, 1::2]).T


def h_matrix(n: int) -> np.ndarray:
    """Vacuum two-point function <0| c_mu c_nu |0> as a block-diagonal matrix."""
    h = np.eye(2 * n, dtype=complex)
    for l in range(n):
        h[2 * l, 2 * l + 1] = 1j
        h[2 * l + 1, 2 * l] = -1j
    return h


def orthogonality_residual(r: np.ndarray) -> float:
    return float(np.max(np.abs(r @ r.T - np.eye(r.shape[0]))))


# ---------------------------------------------------------------------------
# Dense application of Majorana operators (used by the Heisenberg backend)
# ---------------------------------------------------------------------------


def majorana_action_table(n: int):
    """Per Majorana index mu (0-based), (flip_mask, phase_vector) such that
    (c_mu psi)[i] = phase_vector[i] * psi[i ^ flip_mask] on dense 2^n vectors.

    Line 0 is the most significant bit.
    """
    dim = 1 << n
    idx = np.arange(dim)
    table = []
    for mu in range(2 * n):
        l = mu // 2
        mask = 1 << (n - 1 - l)
        zmask = 0
        for j in range(l):
            zmask |= 1 << (n - 1 - j)
        zsigns = 1 - 2 * (_popcount(idx & zmask) & 1)
        if mu % 2 == 0:  # X-type
            phase = zsigns.astype(complex)
        else:  # Y-type: <i|Y|j> = i if bit set in i else -i
            bit = (idx & mask) > 0
            phase = zsigns * np.where(bit, 1j, -1j)
        table.append((mask, phase))
    return table


def _popcount(a):
    a = a.copy()
    out = np.zeros_like(a)
    while a.any():
        out += a & 1
        a >>= 1
    return out


def apply_majorana_sum(weights, table, psi):
    """(sum_mu weights[mu] c_mu) |psi> on a dense vector."""
    out = np.zeros_like(psi)
    idx = np.arange(len(psi))
    for mu, w in enumerate(weights):
        if w == 0:
            continue
        mask, phase = table[mu]
        out += w * phase * psi[idx ^ mask]
    return out
