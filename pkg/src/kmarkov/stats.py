"""Space-time correlations of occupation fields on a ring.

    C(dx, dt) = < g(x, t) g(x + dx, t + dt) > / < g(x, t)^2 >,   g = n - <n>

with a single mean and variance pooled over realizations, sites and the
base time window. Site offsets wrap around the ring.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_WINDOW = 1000
DEFAULT_REALIZATIONS = 5


class DegenerateFieldError(ValueError):
    """The pooled variance of the fields is zero."""


@dataclass(frozen=True)
class SpacetimeField:
    """Occupation values, one row per layer and one column per site."""
    values: np.ndarray = field(repr=False)
    kind: str = "n"
    t0: int = 0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise ValueError(f"field must be 2-D (layers x sites), got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def n_sites(self) -> int:
        return self.values.shape[1]

    @property
    def n_layers(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CorrelationMap:
    C: np.ndarray = field(repr=False)  # shape (dt_max + 1, 2 * dx_max + 1)
    dx: np.ndarray = field(repr=False)
    dt: np.ndarray = field(repr=False)
    n_sites: int
    metadata: dict = field(default_factory=dict)

    def at(self, dx: int, dt: int) -> float:
        return float(self.C[dt, dx + self.dx_max])

    @property
    def dx_max(self) -> int:
        return int(self.dx[-1])

    @property
    def dt_max(self) -> int:
        return int(self.dt[-1])

    def rows(self):
        """``(dt, dx, C)`` triples in row-major order."""
        for i, t in enumerate(self.dt):
            for j, x in enumerate(self.dx):
                yield int(t), int(x), float(self.C[i, j])


def _as_array(f) -> np.ndarray:
    return np.asarray(f.values if isinstance(f, SpacetimeField) else f, dtype=float)


def correlation_map(fields: Sequence, t_min: int, window: int = DEFAULT_WINDOW,
                    dx_max: int | None = None, dt_max: int = 50,
                    kind: str | None = None) -> CorrelationMap:
    """Pooled space-time correlation over several realizations.

    Base times are ``t_min <= t < t_min + window``; every base time needs
    ``t + dt_max`` inside the field.
    """
    arrays = [_as_array(f) for f in fields]
    if not arrays:
        raise ValueError("no fields given")
    n_sites = arrays[0].shape[1]
    if any(a.shape[1] != n_sites for a in arrays):
        raise ValueError("all fields must have the same number of sites")
    dx_max = n_sites // 2 if dx_max is None else int(dx_max)
    if not 0 <= dx_max <= n_sites // 2:
        raise ValueError(f"dx_max must lie in [0, {n_sites // 2}], got {dx_max}")
    if t_min < 0 or window < 1 or dt_max < 0:
        raise ValueError("need t_min >= 0, window >= 1, dt_max >= 0")
    for a in arrays:
        if t_min + window + dt_max > a.shape[0]:
            raise ValueError(f"t_min + window + dt_max = {t_min + window + dt_max} "
                             f"exceeds the field span of {a.shape[0]} layers")

    base = np.concatenate([a[t_min:t_min + window] for a in arrays])
    mean = base.mean()
    var = np.mean((base - mean) ** 2)
    if not var > 1e-300:
        raise DegenerateFieldError("pooled variance is zero (constant field)")

    dx = np.arange(-dx_max, dx_max + 1)
    num = np.zeros((dt_max + 1, n_sites))
    for a in arrays:
        g = a - mean
        A = np.fft.rfft(g[t_min:t_min + window], axis=1)
        for dt in range(dt_max + 1):
            B = np.fft.rfft(g[t_min + dt:t_min + dt + window], axis=1)
            # sum_t sum_x g(x, t) g(x + s, t + dt) for every ring shift s
            num[dt] += np.fft.irfft((np.conj(A) * B).sum(axis=0), n=n_sites)
    num /= base.size
    num[0, 0] = var  # equal analytically; pins C(0, 0) to exactly 1
    C = num[:, dx % n_sites] / var
    meta = {"t_min": t_min, "window": window, "realizations": len(arrays),
            "kind": kind or getattr(fields[0], "kind", "n")}
    return CorrelationMap(C, dx, np.arange(dt_max + 1), n_sites, meta)


def correlation_difference(a: CorrelationMap, b: CorrelationMap) -> CorrelationMap:
    if a.n_sites != b.n_sites or a.C.shape != b.C.shape:
        raise ValueError(f"grid mismatch: N={a.n_sites} {a.C.shape} vs N={b.n_sites} {b.C.shape}")
    meta = {"difference_of": [a.metadata, b.metadata], "kind": "difference"}
    return CorrelationMap(a.C - b.C, a.dx, a.dt, a.n_sites, meta)


@dataclass(frozen=True)
class LateWindow:
    t_min: int
    window: int
    truncated: bool = False


def late_window(span: int, event_time: int | None, window: int = DEFAULT_WINDOW) -> LateWindow:
    """Late-time window starting at twice the scrambling/equilibration time.

    `span` is the number of layers available after the start of the record.
    """
    if event_time is None:
        raise ValueError("the run never scrambled/equilibrated; no late-time window")
    t_min = 2 * int(event_time)
    if span <= t_min:
        raise ValueError(f"trajectory of {span} layers is shorter than t_min={t_min}")
    if t_min + window > span:
        warnings.warn(f"late window truncated to {span - t_min} layers", stacklevel=2)
        return LateWindow(t_min, span - t_min, True)
    return LateWindow(t_min, window, False)
