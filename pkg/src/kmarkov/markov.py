"""k-Markov rules over the two-letter alphabet {A, B}.

Contexts are encoded as integers: A=0, B=1, and the most recent letter is
the least significant bit. For k=2 the table order is therefore

    index 0: ...AA   (older A, recent A)
    index 1: ...AB   (older A, recent B)
    index 2: ...BA   (older B, recent A)
    index 3: ...BB

where labels are written oldest letter first.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numba import njit

STATIONARY_TOL = 1e-12
STATIONARY_MAX_ITER = 10**6


class Letter(enum.IntEnum):
    A = 0
    B = 1


class RuleError(ValueError):
    """Raised for malformed or unusable k-Markov rules."""


@dataclass(frozen=True)
class KMarkovRule:
    k: int
    table: tuple[float, ...]

    def __post_init__(self):
        if self.k < 0:
            raise RuleError(f"context length must be non-negative, got k={self.k}")
        table = tuple(float(p) for p in self.table)
        if len(table) != 2**self.k:
            raise RuleError(
                f"k={self.k} needs {2**self.k} probabilities, got {len(table)}")
        for i, p in enumerate(table):
            if not 0.0 <= p <= 1.0 or p != p:
                raise RuleError(f"probability {p!r} at context {i} outside [0, 1]")
        object.__setattr__(self, "table", table)

    @property
    def n_contexts(self) -> int:
        return 2**self.k

    def p_a(self, context: int) -> float:
        return self.table[context]

    def context_label(self, context: int) -> str:
        """Letters of a context, oldest first."""
        return "".join("AB"[(context >> j) & 1] for j in range(self.k - 1, -1, -1))

    def to_dict(self) -> dict:
        return {"k": self.k, "table": list(self.table)}


def make_rule(k: int, table: Sequence[float]) -> KMarkovRule:
    return KMarkovRule(int(k), tuple(table))


def rule_from_fa_lambda(f_a: float, lam: float) -> KMarkovRule:
    """k=1 rule with stationary A-frequency `f_a` and persistence `lam`.

    ``lam = 1 - p(A|B) / (1 - f_a)``; ``lam = 0`` is the i.i.d. rule.
    """
    if not 0.0 < f_a < 1.0:
        raise RuleError(f"f_A must lie strictly inside (0, 1), got {f_a}")
    p_ab = (1.0 - lam) * (1.0 - f_a)
    p_aa = 1.0 - (1.0 - f_a) * p_ab / f_a
    for name, p in (("p(A|B)", p_ab), ("p(A|A)", p_aa)):
        if not 0.0 <= p <= 1.0:
            raise RuleError(f"f_A={f_a}, lambda={lam} gives {name}={p:.6g} outside [0, 1]")
    return make_rule(1, [p_aa, p_ab])


def rule_from_dict(doc: dict) -> KMarkovRule:
    """Parse ``{"k", "table"}`` or the ``{"f_A", "lambda"}`` shorthand."""
    if "table" in doc:
        k = doc.get("k")
        if k is None:
            raise RuleError("rule with a table must also give k")
        return make_rule(k, doc["table"])
    if "f_A" in doc:
        return rule_from_fa_lambda(float(doc["f_A"]), float(doc.get("lambda", 0.0)))
    raise RuleError("rule needs either {'k', 'table'} or {'f_A', 'lambda'}")


def symmetric_switch_rule(p_switch: float) -> KMarkovRule:
    """k=1 rule with P(A|B) = P(B|A) = p_switch."""
    return make_rule(1, [1.0 - p_switch, p_switch])


def symmetric_k2_rule(p_second: float, p_stay: float) -> KMarkovRule:
    """A<->B symmetric k=2 rule built from run-continuation probabilities.

    A run of length 1 continues with probability `p_second`; a run of
    length >= 2 continues with probability `p_stay`. Mean run length is
    ``1 + p_second / (1 - p_stay)``.
    """
    return make_rule(2, [p_stay, 1.0 - p_second, p_second, 1.0 - p_stay])


# --- context chain -----------------------------------------------------------

def context_transition_matrix(rule: KMarkovRule) -> np.ndarray:
    n = rule.n_contexts
    mask = n - 1
    P = np.zeros((n, n))
    for c in range(n):
        p = rule.table[c]
        P[c, ((c << 1) | Letter.A) & mask] += p
        P[c, ((c << 1) | Letter.B) & mask] += 1.0 - p
    return P


def is_primitive(P: np.ndarray) -> bool:
    """Irreducible and aperiodic, by Wielandt's bound on the power of the support."""
    n = P.shape[0]
    support = (P > 0).astype(np.int64)
    M = np.eye(n, dtype=np.int64)
    for _ in range((n - 1) ** 2 + 1):
        M = np.minimum(M @ support, 1)
    return bool(M.all())


@njit(cache=True)
def _power_iterate(P, pi, tol, max_iter):
    n = pi.shape[0]
    nxt = np.empty(n)
    for _ in range(max_iter):
        for j in range(n):
            acc = 0.0
            for i in range(n):
                acc += pi[i] * P[i, j]
            nxt[j] = acc
        diff = 0.0
        top = 0.0
        for j in range(n):
            diff = max(diff, abs(nxt[j] - pi[j]))
            top = max(top, nxt[j])
        if diff <= tol * top:
            return nxt, True
        pi, nxt = nxt, pi
    return pi, False


def stationary_contexts(rule: KMarkovRule, tol: float = STATIONARY_TOL,
                        max_iter: int = STATIONARY_MAX_ITER) -> tuple[np.ndarray, bool]:
    """Power iteration from the uniform distribution.

    Returns ``(pi, converged)``; convergence is declared when no entry
    changes by more than ``tol`` relative to the largest entry.
    """
    P = context_transition_matrix(rule)
    pi = np.full(rule.n_contexts, 1.0 / rule.n_contexts)
    pi, converged = _power_iterate(P, pi, tol, max_iter)
    return pi.copy(), bool(converged)


def stationary_letter_frequency(rule: KMarkovRule) -> float:
    if not is_primitive(context_transition_matrix(rule)):
        raise RuleError("context chain is reducible or periodic; "
                        "stationary frequency is not unique")
    pi, converged = stationary_contexts(rule)
    if not converged:
        raise RuleError("power iteration did not converge")
    return float(pi @ np.asarray(rule.table))


def effective_order(rule: KMarkovRule, tol: float = 1e-9) -> int:
    """Smallest k' such that p_A depends only on the last k' letters."""
    table = np.asarray(rule.table)
    for kp in range(rule.k + 1):
        recent = np.arange(rule.n_contexts) & ((1 << kp) - 1)
        if all(np.ptp(table[recent == r]) <= tol for r in range(1 << kp)):
            return kp
    return rule.k


# --- sequence generation -----------------------------------------------------

def derive_seed(master_seed: int, index: int) -> int:
    """64-bit sub-seed for trial `index`; independent of execution order."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@njit(cache=True)
def _markov_letters(u, table, k, context):
    out = np.empty(u.shape[0], dtype=np.uint8)
    mask = (1 << k) - 1
    for t in range(u.shape[0]):
        letter = 0 if u[t] < table[context] else 1
        out[t] = letter
        context = ((context << 1) | letter) & mask
    return out


@dataclass(frozen=True)
class LetterSequence:
    letters: np.ndarray = field(repr=False)
    seed: int
    rule: KMarkovRule
    stationary_fallback: bool = False

    def __len__(self):
        return len(self.letters)

    def __str__(self):
        return "".join("AB"[x] for x in self.letters)


def generate(rule: KMarkovRule, length: int, seed: int,
             initial_context: int | Iterable[Letter] | str | None = None) -> LetterSequence:
    """Draw `length` letters from `rule`.

    The first ``k`` letters are the initial context, drawn from the
    stationary context distribution unless `initial_context` is given
    (integer code, letters, or a string like ``"AB"`` oldest first).
    If the stationary distribution cannot be found the initial context is
    drawn uniformly and the result is flagged.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    rng = np.random.default_rng(seed)
    fallback = False
    k = rule.k
    if initial_context is None:
        pi, converged = stationary_contexts(rule)
        if not converged:
            pi = np.full(rule.n_contexts, 1.0 / rule.n_contexts)
            fallback = True
        c0 = int(np.searchsorted(np.cumsum(pi), rng.random() * pi.sum(), side="right"))
        c0 = min(c0, rule.n_contexts - 1)
    else:
        c0 = _context_code(initial_context, k)

    prefix = np.array([(c0 >> j) & 1 for j in range(k - 1, -1, -1)], dtype=np.uint8)
    n_draw = max(length - k, 0)
    u = rng.random(n_draw)
    if k == 0:
        body = (u >= rule.table[0]).astype(np.uint8)
    else:
        body = _markov_letters(u, np.asarray(rule.table), k, c0)
    letters = np.concatenate([prefix, body])[:length]
    letters.setflags(write=False)
    return LetterSequence(letters, int(seed), rule, fallback)


def _context_code(context, k: int) -> int:
    if isinstance(context, (int, np.integer)):
        code = int(context)
    else:
        seq = [Letter[c] if isinstance(c, str) else Letter(c) for c in context]
        if len(seq) != k:
            raise RuleError(f"initial context must have {k} letters, got {len(seq)}")
        code = 0
        for letter in seq:
            code = (code << 1) | int(letter)
    if not 0 <= code < 2**k:
        raise RuleError(f"context code {code} out of range for k={k}")
    return code


def letters_from_string(s: str) -> np.ndarray:
    return np.array([Letter[c] for c in s], dtype=np.uint8)


# --- run lengths -------------------------------------------------------------

def run_encode(letters) -> tuple[np.ndarray, np.ndarray]:
    """Maximal same-letter runs as ``(values, lengths)``."""
    x = np.asarray(getattr(letters, "letters", letters))
    if x.size == 0:
        raise ValueError("empty sequence")
    starts = np.flatnonzero(np.diff(x)) + 1
    bounds = np.concatenate([[0], starts, [x.size]])
    return x[bounds[:-1]], np.diff(bounds)


@dataclass(frozen=True)
class RunLengthStats:
    histogram_a: dict[int, int]
    histogram_b: dict[int, int]

    @staticmethod
    def _mean(h):
        n = sum(h.values())
        return sum(r * c for r, c in h.items()) / n if n else float("nan")

    @property
    def mean_a(self) -> float:
        return self._mean(self.histogram_a)

    @property
    def mean_b(self) -> float:
        return self._mean(self.histogram_b)

    def rows(self) -> list[tuple[int, int, int]]:
        """``(length, count_A, count_B)`` for every length that occurs."""
        lengths = sorted(set(self.histogram_a) | set(self.histogram_b))
        return [(r, self.histogram_a.get(r, 0), self.histogram_b.get(r, 0)) for r in lengths]


def run_lengths(sequence, include_trailing: bool = True) -> RunLengthStats:
    """Run-length histograms per letter.

    The final run is usually truncated by the end of the sequence; it is
    counted unless ``include_trailing=False``.
    """
    values, lengths = run_encode(sequence)
    if not include_trailing:
        values, lengths = values[:-1], lengths[:-1]
    hist = []
    for letter in (Letter.A, Letter.B):
        r, c = np.unique(lengths[values == letter], return_counts=True)
        hist.append({int(a): int(b) for a, b in zip(r, c)})
    return RunLengthStats(*hist)
