"""PSWAP brickwork circuits restricted to the charge-1 Pauli orbit.

The gate is U(phi) = exp(-i phi/2 (XX + YY)); operators evolve in the
Heisenberg picture, O -> U^dag O U. Amplitudes are real coefficients on raw
(Hermitian) Pauli words, so the two-qubit transfer matrix is a real
orthogonal 16x16 matrix and T(phi) T(psi) = T(phi + psi).

Letter A acts on even bonds (0,1),(2,3),...; letter B on odd bonds
(1,2),...,(N-1,0). A run of R identical letters collapses to one layer at
angle R*theta.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .clifford import PauliString, bonds
from .markov import KMarkovRule, LetterSequence, derive_seed, generate, run_encode
from .stats import SpacetimeField

DEFAULT_THETA = math.pi / 300
EQUILIBRIUM_FRACTION = 0.5
LEAK_TOL = 1e-12

# single-qubit codes: 0=I, 1=X, 2=Z, 3=Y;  sigma_a sigma_b = PHASE[a][b] sigma_(a^b)
_PHASE = (
    (1, 1, 1, 1),
    (1, 1, -1j, 1j),
    (1, 1j, 1, -1j),
    (1, -1j, 1j, 1),
)
_XX, _YY = 0b0101, 0b1111


def pauli_product(a: int, b: int) -> tuple[complex, int]:
    """Two-qubit product ``P_a P_b = phase * P_c``."""
    phase = _PHASE[a & 3][b & 3] * _PHASE[a >> 2][b >> 2]
    return phase, a ^ b


def _pauli_rotation(q: int, phi: float) -> np.ndarray:
    """Transfer matrix of conjugation by exp(-i phi/2 Q)."""
    T = np.zeros((16, 16))
    c, s = math.cos(phi), math.sin(phi)
    for p in range(16):
        phase, r = pauli_product(p, q)
        if phase in (1, -1):  # commutes
            T[p, p] = 1.0
        else:
            T[p, p] = c
            T[r, p] = (-1j * phase).real * s
    return T


def transfer_matrix(phi: float) -> np.ndarray:
    """T[q, p]: coefficient of Pauli q in U(phi)^dag P_p U(phi)."""
    return _pauli_rotation(_YY, phi) @ _pauli_rotation(_XX, phi)


@functools.lru_cache(maxsize=1)
def _transfer_support() -> tuple[np.ndarray, tuple[int, ...]]:
    """Structural nonzeros at a generic angle, and the codes left untouched."""
    T = transfer_matrix(0.7137)
    support = np.abs(T) > 1e-9
    fixed = tuple(p for p in range(16)
                  if support[:, p].sum() == 1 and support[p, p]
                  and np.allclose([transfer_matrix(a)[p, p] for a in (0.3, 1.1, 2.9)], 1.0))
    return support, fixed


# --- basis -------------------------------------------------------------------

class Sector(enum.IntEnum):
    Z = 0
    DW = 1


@dataclass(frozen=True)
class Charge1Basis:
    n_sites: int
    strings: list[PauliString] = field(repr=False)
    sectors: np.ndarray = field(repr=False)
    index: dict = field(repr=False)
    weights: np.ndarray = field(repr=False)
    support: np.ndarray = field(repr=False)  # (size, N) 1.0 where string is non-identity

    def __len__(self):
        return len(self.strings)

    def lookup(self, op: PauliString) -> int:
        return self.index[(op.x, op.z)]

    @property
    def n_z(self) -> int:
        return int(np.sum(self.sectors == Sector.Z))

    @property
    def n_dw(self) -> int:
        return int(np.sum(self.sectors == Sector.DW))


def _all_bonds(n_sites: int) -> list[tuple[int, int]]:
    out = []
    for parity in (0, 1):
        left, right = bonds(n_sites, parity)
        out.extend(zip(left.tolist(), right.tolist()))
    return out


@functools.lru_cache(maxsize=None)
def build_basis(n_sites: int) -> Charge1Basis:
    """Orbit of Z on site 0 under PSWAP conjugation on every ring bond."""
    if n_sites < 4 or n_sites % 2:
        raise ValueError(f"need even N >= 4, got N={n_sites}")
    support, _ = _transfer_support()
    limit = 2 * n_sites**2
    start = PauliString.single(n_sites, 0, "Z")
    seen = {(start.x, start.z): start}
    frontier = [start]
    ring = _all_bonds(n_sites)
    while frontier:
        nxt = []
        for op in frontier:
            for i, j in ring:
                p = op.pair_code(i, j)
                for q in np.flatnonzero(support[:, p]):
                    new = op.with_pair(i, j, int(q))
                    key = (new.x, new.z)
                    if key not in seen:
                        seen[key] = new
                        nxt.append(new)
        if len(seen) > limit:
            raise RuntimeError(f"orbit exceeded 2N^2 = {limit} strings "
                               f"({len(seen)} found); transfer rule is inconsistent")
        frontier = nxt
    if len(seen) != limit:
        raise RuntimeError(f"orbit has {len(seen)} strings, expected 2N^2 = {limit}")

    strings = [seen[k] for k in sorted(seen)]
    n_xy = np.array([bin(s.x).count("1") for s in strings])
    if not np.all((n_xy == 0) | (n_xy == 2)):
        raise RuntimeError("orbit contains strings with other than 0 or 2 X/Y sites")
    sectors = np.where(n_xy == 0, Sector.Z, Sector.DW).astype(np.int8)
    bits = np.arange(n_sites)
    sup = np.array([((s.x | s.z) >> bits) & 1 for s in strings], dtype=float)
    return Charge1Basis(n_sites, strings, sectors,
                        {(s.x, s.z): i for i, s in enumerate(strings)},
                        sup.sum(axis=1), sup)


# --- layer propagation -------------------------------------------------------

@dataclass(frozen=True)
class _LayerPlan:
    """Gather structure for one bond parity: out[dst] += prod T[entries] * c[src]."""
    src: np.ndarray
    dst: np.ndarray
    entries: np.ndarray  # (terms, depth) flat T indices; 256 means factor 1


@functools.lru_cache(maxsize=None)
def _layer_plan(n_sites: int, parity: int) -> _LayerPlan:
    basis = build_basis(n_sites)
    support, fixed = _transfer_support()
    layer = list(zip(*(a.tolist() for a in bonds(n_sites, parity))))
    src, dst, entries = [], [], []
    for a, op in enumerate(basis.strings):
        terms = [(op, ())]
        for i, j in layer:
            p = op.pair_code(i, j)
            if p in fixed:
                continue
            terms = [(t.with_pair(i, j, int(q)), e + (int(q) * 16 + p,))
                     for t, e in terms for q in np.flatnonzero(support[:, p])]
        for t, e in terms:
            key = (t.x, t.z)
            if key not in basis.index:
                raise RuntimeError(f"layer image {t.label} of {op.label} leaves the orbit")
            src.append(a)
            dst.append(basis.index[key])
            entries.append(e)
    depth = max(1, max(len(e) for e in entries))
    ent = np.full((len(entries), depth), 256, dtype=np.int64)
    for r, e in enumerate(entries):
        ent[r, :len(e)] = e
    return _LayerPlan(np.array(src), np.array(dst), ent)


@dataclass
class OperatorState:
    basis: Charge1Basis = field(repr=False)
    amplitudes: np.ndarray = field(repr=False)

    @classmethod
    def initial(cls, n_sites: int, site: int = 0) -> OperatorState:
        basis = build_basis(n_sites)
        c = np.zeros(len(basis))
        c[basis.lookup(PauliString.single(n_sites, site, "Z"))] = 1.0
        return cls(basis, c)

    @property
    def norm(self) -> float:
        return float(self.amplitudes @ self.amplitudes)

    def copy(self) -> OperatorState:
        return OperatorState(self.basis, self.amplitudes.copy())


def apply_layer(state: OperatorState, parity: int, phi: float) -> OperatorState:
    """One brickwork layer of PSWAP(phi) on the bonds of the given parity."""
    if phi == 0.0:
        return state.copy()
    plan = _layer_plan(state.basis.n_sites, parity)
    flat = np.append(transfer_matrix(phi).ravel(), 1.0)
    coef = flat[plan.entries].prod(axis=1)
    new = np.bincount(plan.dst, weights=coef * state.amplitudes[plan.src],
                      minlength=len(state.basis))
    return OperatorState(state.basis, new)


def apply_compressed_layer(state: OperatorState, r_a: int, r_b: int,
                           theta: float = DEFAULT_THETA) -> OperatorState:
    """A-block at angle r_a*theta on even bonds, then B-block on odd bonds."""
    return apply_layer(apply_layer(state, 0, r_a * theta), 1, r_b * theta)


# --- observables -------------------------------------------------------------

def w_ave(state: OperatorState) -> float:
    C = state.norm
    if C == 0.0:
        raise ValueError("zero operator has no average weight")
    return float(state.amplitudes**2 @ state.basis.weights) / C


def w_dw(state: OperatorState) -> float:
    sq = state.amplitudes**2
    return float(sq[state.basis.sectors == Sector.DW].sum())


def w_z(state: OperatorState) -> float:
    sq = state.amplitudes**2
    return float(sq[state.basis.sectors == Sector.Z].sum())


def occupation_profile(state: OperatorState) -> np.ndarray:
    """d_i = (1/N) * sum of |c|^2 over strings non-identity at site i."""
    return (state.amplitudes**2 @ state.basis.support) / state.basis.n_sites


def equilibration_time(w_ave_trace: Iterable[float], n_sites: int,
                       fraction: float = EQUILIBRIUM_FRACTION) -> int | None:
    """First compressed step with w_ave/N >= fraction, else None."""
    hit = np.flatnonzero(np.asarray(list(w_ave_trace)) / n_sites >= fraction)
    return int(hit[0]) if hit.size else None


# --- schedules ---------------------------------------------------------------

@dataclass(frozen=True)
class CompressedSchedule:
    pairs: np.ndarray = field(repr=False)  # (layers, 2) ints: R_A, R_B

    def __len__(self):
        return len(self.pairs)

    def letters(self) -> str:
        return "".join("A" * int(a) + "B" * int(b) for a, b in self.pairs)


def compress(sequence: LetterSequence | np.ndarray | str) -> CompressedSchedule:
    """Run-length encode letters into (R_A, R_B) pairs in source order."""
    if isinstance(sequence, str):
        from .markov import letters_from_string
        sequence = letters_from_string(sequence)
    values, lengths = run_encode(sequence)
    pairs = []
    if values[0] == 1:
        values = np.concatenate([[0], values])
        lengths = np.concatenate([[0], lengths])
    for i in range(0, len(values), 2):
        r_b = int(lengths[i + 1]) if i + 1 < len(values) else 0
        pairs.append((int(lengths[i]), r_b))
    return CompressedSchedule(np.array(pairs, dtype=np.int64).reshape(-1, 2))


@dataclass(frozen=True)
class UniformRunLengths:
    """I.i.d. run lengths uniform on [low, high] for both letters."""
    low: int = 1
    high: int = 159

    def schedule(self, layers: int, seed: int) -> CompressedSchedule:
        rng = np.random.default_rng(seed)
        return CompressedSchedule(rng.integers(self.low, self.high + 1, size=(layers, 2)))


def schedule_from_rule(rule: KMarkovRule, layers: int, seed: int) -> CompressedSchedule:
    """First `layers` complete compressed layers of a generated sequence."""
    n = max(64, 8 * layers)
    while True:
        sched = compress(generate(rule, n, seed))
        if len(sched) > layers:
            return CompressedSchedule(sched.pairs[:layers])
        n *= 2


def make_schedule(source, layers: int, seed: int) -> CompressedSchedule:
    if isinstance(source, CompressedSchedule):
        return CompressedSchedule(source.pairs[:layers])
    if isinstance(source, KMarkovRule):
        return schedule_from_rule(source, layers, seed)
    if hasattr(source, "schedule"):
        return source.schedule(layers, seed)
    raise TypeError(f"cannot build a schedule from {type(source).__name__}")


# --- scenarios ---------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioResult:
    schedule: CompressedSchedule = field(repr=False)
    w_ave: np.ndarray = field(repr=False)
    w_dw: np.ndarray = field(repr=False)
    occupation: SpacetimeField = field(repr=False)
    norm_drift: float
    equilibration_time: int | None


def run_scenario(source, n_sites: int, theta: float = DEFAULT_THETA, layers: int = 1000,
                 seed: int = 0) -> ScenarioResult:
    """Evolve Z on site 0 through `layers` compressed layers.

    `source` is a KMarkovRule, a run-length sampler (e.g. UniformRunLengths)
    or an explicit CompressedSchedule. Index 0 of every trace is the
    initial operator.
    """
    schedule = make_schedule(source, layers, derive_seed(seed, 0))
    state = OperatorState.initial(n_sites)
    wa = np.empty(len(schedule) + 1)
    wd = np.empty(len(schedule) + 1)
    occ = np.empty((len(schedule) + 1, n_sites))
    drift = 0.0
    for t in range(len(schedule) + 1):
        if t:
            r_a, r_b = schedule.pairs[t - 1]
            state = apply_compressed_layer(state, int(r_a), int(r_b), theta)
        wa[t], wd[t] = w_ave(state), w_dw(state)
        occ[t] = occupation_profile(state)
        drift = max(drift, abs(state.norm - 1.0))
    return ScenarioResult(schedule, wa, wd, SpacetimeField(occ, "d"), drift,
                          equilibration_time(wa, n_sites))
