"""SWAP-only transport of a single-site operator around an N-site ring.

Letter A pairs bonds (0,1),(2,3),...; letter B pairs (1,2),...,(N-1,0).
Under either letter the operator hops to its partner site, so it performs a
nearest-neighbour walk whose direction at each layer is set by the letter
and the current site parity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .markov import KMarkovRule, Letter, derive_seed, generate
from .parallel import pmap

COVER_STEP_FACTOR = 200
FIT_MIN_COMPLETION = 0.9


def _check_sites(n_sites: int):
    if n_sites < 2 or n_sites % 2:
        raise ValueError(f"ring size must be even and >= 2, got N={n_sites}")


def swap_partner(position: int, letter: int, n_sites: int) -> int:
    if letter == Letter.A:
        return position ^ 1
    return (position + 1) % n_sites if position % 2 else (position - 1) % n_sites


@dataclass(frozen=True)
class WalkState:
    n_sites: int
    position: int = 0
    visited: np.ndarray = field(default=None, repr=False)
    layers_applied: int = 0

    def __post_init__(self):
        _check_sites(self.n_sites)
        if not 0 <= self.position < self.n_sites:
            raise ValueError(f"position {self.position} outside ring of {self.n_sites}")
        if self.visited is None:
            visited = np.zeros(self.n_sites, dtype=bool)
            visited[self.position] = True
            object.__setattr__(self, "visited", visited)

    @property
    def n_visited(self) -> int:
        return int(self.visited.sum())


def apply_swap_layer(state: WalkState, letter: int) -> WalkState:
    pos = swap_partner(state.position, letter, state.n_sites)
    visited = state.visited.copy()
    visited[pos] = True
    return replace(state, position=pos, visited=visited,
                   layers_applied=state.layers_applied + 1)


def step_directions(letters: np.ndarray, start: int = 0) -> np.ndarray:
    """+1/-1 hop of the walker at each layer.

    The walker's parity flips every layer, so the hop is +1 exactly when the
    letter code matches the parity of the site it sits on.
    """
    letters = np.asarray(letters, dtype=np.int64)
    parity = (np.arange(letters.size) + start) & 1
    return np.where(letters == parity, 1, -1)


def _cover_from_letters(letters: np.ndarray, n_sites: int) -> tuple[int | None, int]:
    unwrapped = np.cumsum(step_directions(letters))
    span = np.maximum.accumulate(np.maximum(unwrapped, 0)) - \
        np.minimum.accumulate(np.minimum(unwrapped, 0))
    hit = np.flatnonzero(span >= n_sites - 1)
    if hit.size:
        return int(hit[0]) + 1, n_sites
    return None, int(span[-1]) + 1 if span.size else 1


@dataclass(frozen=True)
class CoverResult:
    cover_time: int | None
    max_steps: int
    seed: int
    n_visited: int

    @property
    def timed_out(self) -> bool:
        return self.cover_time is None


def cover_time(rule: KMarkovRule, n_sites: int, seed: int,
               max_steps: int | None = None) -> CoverResult:
    """Layers until a walker started at site 0 has visited every site.

    Site 0 counts as visited before any layer is applied.
    """
    _check_sites(n_sites)
    max_steps = COVER_STEP_FACTOR * n_sites if max_steps is None else max_steps
    letters = generate(rule, max_steps, seed).letters
    t, n_visited = _cover_from_letters(letters, n_sites)
    return CoverResult(t, max_steps, int(seed), n_visited)


@dataclass(frozen=True)
class CoverEnsemble:
    n_sites: int
    results: list[CoverResult] = field(repr=False)
    mean: float
    std: float
    completion_fraction: float

    @property
    def completed(self) -> int:
        return sum(not r.timed_out for r in self.results)

    @property
    def stderr(self) -> float:
        n = self.completed
        return self.std / math.sqrt(n) if n else float("nan")

    @property
    def lower_bound(self) -> bool:
        """True when timeouts make `mean` a biased-low lower bound."""
        return self.completion_fraction < 1.0


def _ensemble(results: list[CoverResult], n_sites: int) -> CoverEnsemble:
    times = np.array([r.cover_time for r in results if not r.timed_out], dtype=float)
    mean = float(times.mean()) if times.size else float("nan")
    std = float(times.std(ddof=1)) if times.size > 1 else float("nan")
    return CoverEnsemble(n_sites, results, mean, std, times.size / len(results))


def _cover_trial(args):
    rule, n_sites, seed, max_steps = args
    return cover_time(rule, n_sites, seed, max_steps)


def mean_cover_time(rule: KMarkovRule, n_sites: int, trials: int = 500,
                    master_seed: int = 0, max_steps: int | None = None,
                    threads: int = 1) -> CoverEnsemble:
    if trials < 1:
        raise ValueError("need at least one trial")
    _check_sites(n_sites)
    jobs = [(rule, n_sites, derive_seed(master_seed, i), max_steps) for i in range(trials)]
    return _ensemble(pmap(_cover_trial, jobs, threads), n_sites)


@dataclass(frozen=True)
class DiffusionFit:
    D: float
    D_err: float
    fitted_sizes: list[int]
    excluded_sizes: list[int]
    residual: float
    ensembles: list[CoverEnsemble] = field(repr=False)


def fit_diffusion(rule: KMarkovRule, sizes, trials: int = 500, master_seed: int = 0,
                  threads: int = 1) -> DiffusionFit:
    """Fit ``<t_c> = N^2 / (4 D)`` over ensembles at each ring size."""
    sizes = [int(n) for n in sizes]
    if len(sizes) < 3:
        raise ValueError(f"need at least 3 ring sizes for a diffusion fit, got {sizes}")
    for n in sizes:
        _check_sites(n)
    return fit_from_ensembles([
        mean_cover_time(rule, n, trials, derive_seed(master_seed, n), threads=threads)
        for n in sizes])


def fit_from_ensembles(ensembles: list[CoverEnsemble]) -> DiffusionFit:
    """Weighted least squares of mean cover time against N^2.

    Sizes whose ensembles complete in fewer than 90% of trials are excluded.
    `residual` is the reduced chi-square of the fit.
    """
    ok = [e.completion_fraction >= FIT_MIN_COMPLETION and e.completed > 1 for e in ensembles]
    usable = [e for e, good in zip(ensembles, ok) if good]
    excluded = [e.n_sites for e, good in zip(ensembles, ok) if not good]
    if len(usable) < 2:
        raise ValueError(f"fewer than 2 usable sizes after excluding {excluded}")

    x = np.array([e.n_sites**2 for e in usable], dtype=float)
    y = np.array([e.mean for e in usable])
    w = 1.0 / np.array([e.stderr for e in usable]) ** 2
    slope = np.sum(w * x * y) / np.sum(w * x * x)
    slope_err = 1.0 / math.sqrt(np.sum(w * x * x))
    chi2 = float(np.sum(w * (y - slope * x) ** 2)) / (len(usable) - 1)
    D = float(1.0 / (4.0 * slope))
    return DiffusionFit(D, float(D * slope_err / slope), [e.n_sites for e in usable],
                        excluded, chi2, ensembles)


def unbiased_cover_mean(n_sites: int) -> float:
    """Expected cover time of the unbiased walk on the N-cycle."""
    return n_sites * (n_sites - 1) / 2
