"""Multi-zone flow panels, Pearson correlation and sliding-window datasets."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    ConstantSeries,
    EmptyCorrelationSet,
    LengthMismatch,
    UnknownZone,
    ValidationError,
    WindowTooLarge,
)

MODES = ("local", "local+correlated", "correlated")

EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


def zone_key(zone: str):
    """Sort key putting numeric ids in numeric order ("2" before "10")."""
    return (0, int(zone), "") if zone.isdigit() else (1, 0, zone)


def sort_zones(zones: Iterable[str]) -> list[str]:
    return sorted(zones, key=zone_key)


def as_range(interval, length: int | None = None) -> range:
    """Coerce ``(start, stop)`` or a ``range`` into a unit-step ``range``."""
    if isinstance(interval, range):
        r = interval
    else:
        start, stop = interval
        r = range(int(start), int(stop))
    if r.step != 1:
        raise ValidationError(f"index interval must have unit step, got {r}")
    if r.start < 0 or (length is not None and r.stop > length):
        raise ValidationError(f"index interval [{r.start}, {r.stop}) outside [0, {length})")
    return r


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FlowPanel:
    """n zones x T steps of flow, one row per zone."""

    zone_ids: tuple[str, ...]
    values: np.ndarray
    start_time: datetime = EPOCH
    step_seconds: int = 300

    def __post_init__(self):
        zones = tuple(str(z) for z in self.zone_ids)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValidationError(f"panel values must be 2-D, got shape {values.shape}")
        if values.shape[0] != len(zones):
            raise ValidationError(f"{len(zones)} zone ids for {values.shape[0]} rows")
        if values.shape[1] < 1:
            raise ValidationError("panel must contain at least one time step")
        if len(set(zones)) != len(zones):
            raise ValidationError(f"zone ids are not unique: {zones}")
        if int(self.step_seconds) <= 0:
            raise ValidationError(f"step_seconds must be positive, got {self.step_seconds}")
        object.__setattr__(self, "zone_ids", zones)
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "step_seconds", int(self.step_seconds))

    @property
    def n_zones(self) -> int:
        return len(self.zone_ids)

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    def index_of(self, zone) -> int:
        try:
            return self.zone_ids.index(str(zone))
        except ValueError:
            raise UnknownZone(f"unknown zone {zone!r}; panel has {list(self.zone_ids)}") from None

    def row(self, zone) -> np.ndarray:
        return self.values[self.index_of(zone)]

    def with_values(self, values: np.ndarray) -> "FlowPanel":
        return FlowPanel(self.zone_ids, values, self.start_time, self.step_seconds)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(",".join(self.zone_ids).encode())
        h.update(str(self.step_seconds).encode())
        h.update(self.start_time.isoformat().encode())
        h.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class CorrelationMatrix:
    zone_ids: tuple[str, ...]
    rho: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "zone_ids", tuple(str(z) for z in self.zone_ids))
        object.__setattr__(self, "rho", _readonly(self.rho))

    def row(self, zone) -> dict[str, float]:
        try:
            i = self.zone_ids.index(str(zone))
        except ValueError:
            raise UnknownZone(f"unknown zone {zone!r}; matrix has {list(self.zone_ids)}") from None
        return {z: float(self.rho[i, j]) for j, z in enumerate(self.zone_ids)}

    @classmethod
    def from_row(cls, target, row: dict) -> "CorrelationMatrix":
        """Build a matrix holding only the target's correlations.

        Entries between two non-target zones are NaN; ``select_correlated``
        only ever reads the target row.
        """
        zones = [str(target)] + [str(z) for z in row if str(z) != str(target)]
        rho = np.full((len(zones), len(zones)), np.nan)
        np.fill_diagonal(rho, 1.0)
        for j, z in enumerate(zones[1:], start=1):
            rho[0, j] = rho[j, 0] = float(row[z] if z in row else row[int(z)])
        return cls(tuple(zones), rho)


@dataclass(frozen=True)
class CorrelationSet:
    target: str
    threshold: float
    members: tuple[str, ...]

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True)
class FeatureWindow:
    """k x W block of flows ending at ``t_index``; rows oldest -> newest."""

    values: np.ndarray
    t_index: int
    zones: tuple[str, ...] = ()

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class WindowedDataset:
    """Supervised one-step-ahead pairs.

    ``inputs`` has shape (N, k, W); sample i holds the windows ending at
    ``t_index[i]`` and ``targets[i]`` is the target zone's value at
    ``t_index[i] + 1``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    t_index: np.ndarray
    mode: str
    target_zone: str
    zones: tuple[str, ...]
    window: int
    interval: range = field(default=range(0))

    def __len__(self) -> int:
        return len(self.targets)

    def __getitem__(self, i: int) -> tuple[FeatureWindow, float]:
        fw = FeatureWindow(self.inputs[i], int(self.t_index[i]), self.zones)
        return fw, float(self.targets[i])

    def __iter__(self) -> Iterator[tuple[FeatureWindow, float]]:
        for i in range(len(self)):
            yield self[i]

    @property
    def n_channels(self) -> int:
        return self.inputs.shape[1]

    def map_values(self, inputs: np.ndarray, targets: np.ndarray) -> "WindowedDataset":
        return WindowedDataset(inputs, targets, self.t_index, self.mode, self.target_zone,
                               self.zones, self.window, self.interval)


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"series lengths differ: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise LengthMismatch("pearson needs at least two observations")
    da = a - a.mean()
    db = b - b.mean()
    saa = float(np.dot(da, da))
    sbb = float(np.dot(db, db))
    if saa == 0.0:
        raise ConstantSeries("first series is constant")
    if sbb == 0.0:
        raise ConstantSeries("second series is constant")
    r = float(np.dot(da, db)) / math.sqrt(saa * sbb)
    return min(1.0, max(-1.0, r))


def correlation_matrix(panel: FlowPanel, interval=None) -> CorrelationMatrix:
    r = as_range(interval if interval is not None else range(panel.n_steps), panel.n_steps)
    if len(r) < 2:
        raise LengthMismatch(f"correlation range needs length >= 2, got {len(r)}")
    seg = panel.values[:, r.start:r.stop]
    n = panel.n_zones
    for i in range(n):
        if np.all(seg[i] == seg[i, 0]):
            z = panel.zone_ids[i]
            raise ConstantSeries(f"zone {z} is constant over [{r.start}, {r.stop})", zone=z)
    rho = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            rho[i, j] = rho[j, i] = pearson(seg[i], seg[j])
    return CorrelationMatrix(panel.zone_ids, rho)


def select_correlated(matrix: CorrelationMatrix, target, theta: float) -> CorrelationSet:
    target = str(target)
    if target not in matrix.zone_ids:
        raise UnknownZone(f"unknown zone {target!r}; matrix has {list(matrix.zone_ids)}")
    theta = float(theta)
    if not 0.0 <= theta <= 1.0:
        raise ValidationError(f"theta must lie in [0, 1], got {theta}")
    row = matrix.row(target)
    members = [z for z, r in row.items() if z != target and r >= theta]
    return CorrelationSet(target, theta, tuple(sort_zones(members)))


def feature_zones(target, members: Sequence, mode: str) -> tuple[str, ...]:
    members = tuple(sort_zones(str(m) for m in members))
    target = str(target)
    if target in members:
        raise ValidationError(f"target zone {target} listed among its own members")
    if mode == "local":
        return (target,)
    if mode == "local+correlated":
        return (target,) + members
    if mode == "correlated":
        if not members:
            raise EmptyCorrelationSet(f"mode 'correlated' needs at least one member zone for target {target}")
        return members
    raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")


def build_dataset(panel: FlowPanel, target, members: Sequence, window: int, interval,
                  mode: str = "local") -> WindowedDataset:
    zones = feature_zones(target, members, mode)
    r = as_range(interval, panel.n_steps)
    window = int(window)
    if window < 1:
        raise WindowTooLarge(f"window must be >= 1, got {window}")
    if len(r) <= window:
        raise WindowTooLarge(f"range length {len(r)} must exceed window {window}")
    rows = [panel.index_of(z) for z in zones]
    seg = panel.values[rows, r.start:r.stop]
    # (k, n_windows, W) -> (n_windows, k, W); drop the last window, it has no label
    views = np.lib.stride_tricks.sliding_window_view(seg, window, axis=1)[:, :-1, :]
    inputs = np.ascontiguousarray(views.transpose(1, 0, 2))
    t_index = np.arange(r.start + window - 1, r.stop - 1)
    targets = panel.row(target)[t_index + 1].copy()
    return WindowedDataset(inputs, targets, t_index, mode, str(target), zones, window, r)
