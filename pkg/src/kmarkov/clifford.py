"""Phase-free two-qubit Cliffords and Pauli-string propagation on a ring.

A two-qubit Pauli is a 4-bit code ``x0 | z0 << 1 | x1 << 2 | z1 << 3``
(Y is x and z together). A Clifford class is its conjugation table on the
16 codes; signs are dropped throughout, so the group has 720 elements.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .markov import (KMarkovRule, Letter, RuleError, context_transition_matrix,
                     derive_seed, effective_order, generate, make_rule)
from .parallel import pmap
from .stats import SpacetimeField

XI, ZI, IX, IZ = 0b0001, 0b0010, 0b0100, 0b1000
GENERATORS = (XI, ZI, IX, IZ)
N_CLIFFORD = 720
N_WEIGHT_CHANGING = 648


def _swap_xz(c: int) -> int:
    return ((c & 0b0101) << 1) | ((c & 0b1010) >> 1)


def anticommute(a: int, b: int) -> bool:
    return bin(a & _swap_xz(b)).count("1") % 2 == 1


def local_weight(c: int) -> int:
    return (c & 0b0011 != 0) + (c & 0b1100 != 0)


# --- Pauli strings -----------------------------------------------------------

@dataclass(frozen=True)
class PauliString:
    n: int
    x: int = 0
    z: int = 0

    @classmethod
    def from_label(cls, label: str) -> PauliString:
        x = z = 0
        for i, ch in enumerate(label):
            if ch in "XY":
                x |= 1 << i
            if ch in "ZY":
                z |= 1 << i
            if ch not in "IXYZ":
                raise ValueError(f"bad Pauli label character {ch!r}")
        return cls(len(label), x, z)

    @classmethod
    def single(cls, n: int, site: int, op: str = "Z") -> PauliString:
        return cls.from_label("".join(op if i == site else "I" for i in range(n)))

    @property
    def label(self) -> str:
        return "".join("IXZY"[self.site_code(i)] for i in range(self.n))

    @property
    def weight(self) -> int:
        return bin(self.x | self.z).count("1")

    def site_code(self, i: int) -> int:
        """0=I, 1=X, 2=Z, 3=Y."""
        return ((self.x >> i) & 1) | (((self.z >> i) & 1) << 1)

    def pair_code(self, i: int, j: int) -> int:
        return self.site_code(i) | (self.site_code(j) << 2)

    def with_pair(self, i: int, j: int, code: int) -> PauliString:
        x, z = self.x, self.z
        for site, c in ((i, code & 3), (j, code >> 2)):
            x = (x & ~(1 << site)) | ((c & 1) << site)
            z = (z & ~(1 << site)) | ((c >> 1) << site)
        return PauliString(self.n, x, z)

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        bits = np.arange(self.n)
        return ((self.x >> bits) & 1).astype(np.uint8), ((self.z >> bits) & 1).astype(np.uint8)

    @classmethod
    def from_arrays(cls, x: np.ndarray, z: np.ndarray) -> PauliString:
        w = 1 << np.arange(len(x), dtype=object)
        return cls(len(x), int(np.dot(x.astype(object), w)), int(np.dot(z.astype(object), w)))


# --- gates -------------------------------------------------------------------

@dataclass(frozen=True)
class CliffordGate2Q:
    """Conjugation class fixed by the images of XI, ZI, IX, IZ."""
    images: tuple[int, int, int, int]
    table: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        table = []
        for p in range(16):
            img = 0
            for bit, g in enumerate(self.images):
                if p >> bit & 1:
                    img ^= g
            table.append(img)
        if sorted(table) != list(range(16)):
            raise ValueError(f"images {self.images} do not define a bijection")
        for a in range(4):
            for b in range(a + 1, 4):
                if anticommute(GENERATORS[a], GENERATORS[b]) != \
                        anticommute(self.images[a], self.images[b]):
                    raise ValueError(f"images {self.images} break commutation relations")
        object.__setattr__(self, "table", tuple(table))

    def __call__(self, code: int) -> int:
        return self.table[code]

    @property
    def is_weight_changing(self) -> bool:
        return any((local_weight(p) == 1 and local_weight(q) == 2) or
                   (local_weight(p) == 2 and local_weight(q) == 1)
                   for p, q in enumerate(self.table))

    def inverse(self) -> CliffordGate2Q:
        inv = [0] * 16
        for p, q in enumerate(self.table):
            inv[q] = p
        return CliffordGate2Q(tuple(inv[g] for g in GENERATORS))


IDENTITY = CliffordGate2Q((XI, ZI, IX, IZ))
SWAP = CliffordGate2Q((IX, IZ, XI, ZI))
CNOT = CliffordGate2Q((XI | IX, ZI, IX, ZI | IZ))  # control 0, target 1


def enumerate_clifford_2q() -> list[CliffordGate2Q]:
    """All 720 phase-free two-qubit Clifford classes."""
    gates = []
    codes = range(1, 16)
    for a in codes:
        for b in (c for c in codes if anticommute(a, c)):
            span_ab = {0, a, b, a ^ b}
            complement = [c for c in codes if c not in span_ab
                          and not anticommute(c, a) and not anticommute(c, b)]
            for c in complement:
                for d in (d for d in complement if anticommute(c, d)):
                    gates.append(CliffordGate2Q((a, b, c, d)))
    if len(gates) != N_CLIFFORD or len({g.table for g in gates}) != N_CLIFFORD:
        raise RuntimeError(f"enumerated {len(gates)} Clifford classes, expected {N_CLIFFORD}")
    return gates


def weight_changing_subset(gates) -> list[CliffordGate2Q]:
    wc = [g for g in gates if g.is_weight_changing]
    if len(gates) == N_CLIFFORD and len(wc) != N_WEIGHT_CHANGING:
        raise RuntimeError(f"found {len(wc)} weight-changing classes, expected {N_WEIGHT_CHANGING}")
    return wc


@dataclass(frozen=True)
class GateSet:
    all_gates: list[CliffordGate2Q] = field(repr=False)
    wc_subset: list[CliffordGate2Q] = field(repr=False)
    wc_tables: np.ndarray = field(repr=False)  # (648, 16) uint8


@functools.lru_cache(maxsize=1)
def gate_set() -> GateSet:
    gates = enumerate_clifford_2q()
    wc = weight_changing_subset(gates)
    tables = np.array([g.table for g in wc], dtype=np.uint8)
    tables.setflags(write=False)
    return GateSet(gates, wc, tables)


def conjugate(gate: CliffordGate2Q, op: PauliString, sites: tuple[int, int]) -> PauliString:
    i, j = sites
    if i == j:
        raise ValueError(f"gate sites must differ, got ({i}, {j})")
    if not (0 <= i < op.n and 0 <= j < op.n):
        raise ValueError(f"sites ({i}, {j}) outside a {op.n}-site string")
    return op.with_pair(i, j, gate(op.pair_code(i, j)))


# --- brickwork letters -------------------------------------------------------

class LetterMode(str, enum.Enum):
    DOUBLE_LAYER = "double"
    SINGLE_LAYER_A_EVEN = "single_a_even"
    SINGLE_LAYER_A_ODD = "single_a_odd"


@dataclass(frozen=True)
class LetterSpec:
    """How letters become brickwork layers.

    DOUBLE_LAYER: each letter applies its gates on the even bonds and then
    the odd bonds. SINGLE_LAYER_*: each letter is one layer; letter A is
    pinned to the named bond parity, while letter B takes the parity of the
    running layer cursor (or the opposite of A's when ``pin_b``).
    """
    mode: LetterMode = LetterMode.DOUBLE_LAYER
    swap_letter: Letter = Letter.A
    pin_b: bool = False

    @property
    def layers_per_letter(self) -> int:
        return 2 if self.mode == LetterMode.DOUBLE_LAYER else 1

    def parities(self, letter: int, cursor: int) -> tuple[int, ...]:
        """Bond parities (0 even, 1 odd) applied for `letter` at layer `cursor`."""
        if self.mode == LetterMode.DOUBLE_LAYER:
            return (0, 1)
        a_parity = 0 if self.mode == LetterMode.SINGLE_LAYER_A_EVEN else 1
        if letter == Letter.A:
            return (a_parity,)
        return (1 - a_parity,) if self.pin_b else (cursor % 2,)


def bonds(n_sites: int, parity: int) -> tuple[np.ndarray, np.ndarray]:
    left = np.arange(parity, n_sites, 2)
    return left, (left + 1) % n_sites


class _BrickworkOperator:
    """Phase-free Pauli string held as x/z arrays for fast layer updates."""

    def __init__(self, op: PauliString, tables: np.ndarray):
        if op.n % 2:
            raise ValueError(f"ring size must be even, got N={op.n}")
        self.n = op.n
        self.x, self.z = op.to_arrays()
        self.tables = tables
        self._bonds = (bonds(op.n, 0), bonds(op.n, 1))

    def swap_layer(self, parity: int):
        l, r = self._bonds[parity]
        self.x[l], self.x[r] = self.x[r], self.x[l]
        self.z[l], self.z[r] = self.z[r], self.z[l]

    def random_layer(self, parity: int, rng: np.random.Generator):
        l, r = self._bonds[parity]
        codes = self.x[l] | (self.z[l] << 1) | (self.x[r] << 2) | (self.z[r] << 3)
        new = self.tables[rng.integers(0, len(self.tables), size=l.size), codes]
        self.x[l], self.z[l] = new & 1, (new >> 1) & 1
        self.x[r], self.z[r] = (new >> 2) & 1, (new >> 3) & 1

    def occupation(self) -> np.ndarray:
        return self.x | self.z

    def to_pauli(self) -> PauliString:
        return PauliString.from_arrays(self.x, self.z)


def _letter_layers(engine: _BrickworkOperator, letter: int, spec: LetterSpec,
                   cursor: int, rng: np.random.Generator):
    for parity in spec.parities(letter, cursor):
        if letter == spec.swap_letter:
            engine.swap_layer(parity)
        else:
            engine.random_layer(parity, rng)
        yield


def apply_letter(op: PauliString, letter: int, spec: LetterSpec, layer_parity_cursor: int,
                 rng: np.random.Generator, gates: GateSet | None = None) -> PauliString:
    """Apply one letter; the cursor then advances by ``spec.layers_per_letter``.

    The SWAP letter swaps every bond of its layer(s); the other letter draws
    an independent uniform weight-changing class per bond.
    """
    engine = _BrickworkOperator(op, (gates or gate_set()).wc_tables)
    for _ in _letter_layers(engine, letter, spec, layer_parity_cursor, rng):
        pass
    return engine.to_pauli()


# --- scrambling --------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    occupation: SpacetimeField
    weights: np.ndarray = field(repr=False)
    scrambling_time: int | None
    seed: int

    @property
    def timed_out(self) -> bool:
        return self.scrambling_time is None


def default_max_layers(n_sites: int) -> int:
    return 50 * n_sites


def scrambling_time(rule: KMarkovRule, spec: LetterSpec, n_sites: int, seed: int,
                    max_layers: int | None = None, run_to_end: bool = False,
                    initial: PauliString | None = None) -> Trajectory:
    """Evolve Z on site 0 until its weight first reaches N/2.

    Row ``l`` of the occupation field is the state after ``l`` brickwork
    layers. With ``run_to_end`` the evolution continues to `max_layers`
    (for late-time correlations).
    """
    max_layers = default_max_layers(n_sites) if max_layers is None else max_layers
    initial = PauliString.single(n_sites, 0, "Z") if initial is None else initial
    engine = _BrickworkOperator(initial, gate_set().wc_tables)
    n_letters = -(-max_layers // spec.layers_per_letter)
    letters = generate(rule, n_letters, derive_seed(seed, 0)).letters
    rng = np.random.default_rng(derive_seed(seed, 1))

    occ = np.zeros((max_layers + 1, n_sites), dtype=np.uint8)
    occ[0] = engine.occupation()
    threshold = n_sites / 2
    t_scr = 0 if occ[0].sum() >= threshold else None
    layer = 0
    for letter in letters:
        for _ in _letter_layers(engine, letter, spec, layer, rng):
            layer += 1
            occ[layer] = engine.occupation()
            if t_scr is None and occ[layer].sum() >= threshold:
                t_scr = layer
            if layer == max_layers or (t_scr is not None and not run_to_end):
                break
        if layer == max_layers or (t_scr is not None and not run_to_end):
            break
    occ = occ[:layer + 1]
    return Trajectory(SpacetimeField(occ, "n"), occ.sum(axis=1), t_scr, int(seed))


@dataclass(frozen=True)
class ScrambleEnsemble:
    times: list[int | None] = field(repr=False)
    mean: float
    std: float
    timeout_fraction: float

    @property
    def completed(self) -> int:
        return sum(t is not None for t in self.times)


def _scramble_trial(args):
    rule, spec, n_sites, seed, max_layers = args
    return scrambling_time(rule, spec, n_sites, seed, max_layers).scrambling_time


def mean_scrambling_time(rule: KMarkovRule, spec: LetterSpec, n_sites: int, trials: int,
                         master_seed: int = 0, max_layers: int | None = None,
                         threads: int = 1) -> ScrambleEnsemble:
    jobs = [(rule, spec, n_sites, derive_seed(master_seed, i), max_layers)
            for i in range(trials)]
    times = pmap(_scramble_trial, jobs, threads)
    done = np.array([t for t in times if t is not None], dtype=float)
    mean = float(done.mean()) if done.size else float("nan")
    std = float(done.std(ddof=1)) if done.size > 1 else float("nan")
    return ScrambleEnsemble(times, mean, std, 1.0 - done.size / len(times))


# --- rule scans at fixed letter frequency ------------------------------------

def _stationary_frequency_solve(table: np.ndarray, k: int) -> float:
    rule = make_rule(k, table)
    P = context_transition_matrix(rule)
    n = rule.n_contexts
    M = np.vstack([P.T - np.eye(n), np.ones(n)])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(M, rhs, rcond=None)[0]
    return float(pi @ table)


def rules_at_frequency(k: int, f_a: float, grid_resolution: int) -> list[KMarkovRule]:
    """Order-k rules on a cell-midpoint grid whose stationary A-frequency is f_a.

    k=1 grids p(A|B); k=2 grids the first three contexts and solves for the
    last. Rules of lower effective order are dropped.
    """
    if grid_resolution < 1:
        raise ValueError("grid_resolution must be >= 1")
    mids = (np.arange(grid_resolution) + 0.5) / grid_resolution
    rules = []
    if k == 0:
        rules = [make_rule(0, [f_a])]
    elif k == 1:
        if not 0 < f_a < 1:
            raise RuleError("k=1 scan needs 0 < f_A < 1")
        hi = min(1.0, f_a / (1 - f_a))
        for p_ab in mids * hi:
            p_aa = 1 - (1 - f_a) * p_ab / f_a
            rules.append(make_rule(1, [min(max(p_aa, 0.0), 1.0), p_ab]))
    elif k == 2:
        for t0 in mids:
            for t1 in mids:
                for t2 in mids:
                    def gap(t3):
                        return _stationary_frequency_solve(np.array([t0, t1, t2, t3]), 2) - f_a
                    lo, hi = gap(0.0), gap(1.0)
                    if lo * hi > 0:
                        continue
                    t3 = 0.0 if lo == 0 else 1.0 if hi == 0 else brentq(gap, 0.0, 1.0, xtol=1e-14)
                    rules.append(make_rule(2, [t0, t1, t2, t3]))
    else:
        raise ValueError(f"scans are implemented for k <= 2, got k={k}")
    rules = [r for r in rules if effective_order(r) == k]
    if not rules:
        raise RuleError(f"no order-{k} rule on the grid reaches f_A={f_a}")
    return rules


@dataclass(frozen=True)
class ScanResult:
    best_rule: KMarkovRule
    best_mean: float
    entries: list[tuple[KMarkovRule, ScrambleEnsemble]] = field(repr=False)


def scan_min_scrambling(k: int, f_a: float, spec: LetterSpec, n_sites: int,
                        grid_resolution: int, trials: int, master_seed: int = 0,
                        max_layers: int | None = None, threads: int = 1) -> ScanResult:
    """Grid rule minimizing the mean scrambling time at fixed f_A.

    Rules with fewer than 90% of runs scrambling are not eligible.
    """
    rules = rules_at_frequency(k, f_a, grid_resolution)
    entries = [(r, mean_scrambling_time(r, spec, n_sites, trials, derive_seed(master_seed, i),
                                        max_layers, threads))
               for i, r in enumerate(rules)]
    eligible = [(r, e) for r, e in entries if e.timeout_fraction <= 0.1]
    if not eligible:
        return ScanResult(entries[0][0], math.inf, entries)
    best_rule, best = min(eligible, key=lambda re: re[1].mean)
    return ScanResult(best_rule, best.mean, entries)
