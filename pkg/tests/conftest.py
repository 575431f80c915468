import functools

import numpy as np
import pytest
from scipy.linalg import expm

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
CODE_LETTER = "IXZY"  # site code 0..3 -> letter, matching the package encoding


def dense_pauli(label: str) -> np.ndarray:
    """Site 0 is the leftmost tensor factor."""
    return functools.reduce(np.kron, [PAULI[c] for c in label])


def two_qubit_label(code: int) -> str:
    return CODE_LETTER[code & 3] + CODE_LETTER[code >> 2]


def embed(op2: np.ndarray, n: int, i: int, j: int) -> np.ndarray:
    """Two-site operator on sites (i, j) of an n-qubit register."""
    full = np.zeros((2**n, 2**n), dtype=complex)
    for a in range(4):
        for b in range(4):
            la, lb = CODE_LETTER[a], CODE_LETTER[b]
            coeff = np.trace(np.kron(PAULI[la], PAULI[lb]).conj().T @ op2) / 4
            if abs(coeff) < 1e-15:
                continue
            label = ["I"] * n
            label[i], label[j] = la, lb
            full += coeff * dense_pauli("".join(label))
    return full


def pswap_dense(phi: float, n: int = 2, i: int = 0, j: int = 1) -> np.ndarray:
    gen = embed(np.kron(PAULI["X"], PAULI["X"]) + np.kron(PAULI["Y"], PAULI["Y"]), n, i, j)
    return expm(-0.5j * phi * gen)


def pauli_coefficients(op: np.ndarray, labels) -> np.ndarray:
    """Real coefficients of a Hermitian operator on the given Pauli words."""
    dim = op.shape[0]
    return np.array([np.trace(dense_pauli(lab) @ op).real / dim for lab in labels])


# --- acceptance report -------------------------------------------------------

_ACCEPTANCE: dict = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the test body calls it with a detail string."""
    name = request.node.name

    def record(detail: str, ok: bool):
        _ACCEPTANCE[name] = (ok, detail)
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
