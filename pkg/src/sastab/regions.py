"""Axis-aligned boxes and rejection samplers over sublevel-set regions.

The verification routines all sample regions of the form
{lo <= W(x) <= hi} intersected with a box. Boxes are the only primitive
region; everything else is rejection sampling against a scalar predicate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyRegionError, InvalidRegionError

Array = np.ndarray


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by per-axis (lo, hi) bounds."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.bounds:
            raise InvalidRegionError("box needs at least one axis")
        for lo, hi in self.bounds:
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise InvalidRegionError("box bounds must be finite")
            if hi <= lo:
                raise InvalidRegionError(f"degenerate box axis [{lo}, {hi}]")

    @classmethod
    def cube(cls, lo: float, hi: float, dimension: int) -> "Box":
        return cls(tuple((float(lo), float(hi)) for _ in range(dimension)))

    @classmethod
    def from_bounds(cls, bounds: Sequence[Sequence[float]]) -> "Box":
        return cls(tuple((float(lo), float(hi)) for lo, hi in bounds))

    @property
    def dimension(self) -> int:
        return len(self.bounds)

    @property
    def lo(self) -> Array:
        return np.array([b[0] for b in self.bounds])

    @property
    def hi(self) -> Array:
        return np.array([b[1] for b in self.bounds])

    @property
    def center(self) -> Array:
        return 0.5 * (self.lo + self.hi)

    @property
    def widths(self) -> Array:
        return self.hi - self.lo

    def contains(self, x: Array) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def sample(self, rng: np.random.Generator, count: int) -> Array:
        """Uniform points in the box, shape (count, dimension)."""
        u = rng.random((count, self.dimension))
        return self.lo + self.widths * u

    def lattice(self, per_axis: int) -> Array:
        """Regular grid including both endpoints, shape (per_axis^d, d).

        An odd per_axis on a symmetric box puts a point exactly at the
        center, which the c_infinity check relies on to probe W = 0.
        """
        if per_axis < 2:
            raise InvalidRegionError("lattice needs at least 2 points per axis")
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in self.bounds]
        pts = np.array(list(itertools.product(*axes)))
        return pts

    def expand(self, factor: float) -> "Box":
        """Scale the box about its center."""
        c, half = self.center, 0.5 * self.widths * factor
        return Box.from_bounds(np.column_stack([c - half, c + half]))


def region_sample(
    predicate: Callable[[Array], bool],
    box: Box,
    rng: np.random.Generator,
    count: int,
    max_batches: int = 512,
) -> Array:
    """Rejection-sample `count` points of the box satisfying `predicate`.

    Raises EmptyRegionError if the whole retry budget produces nothing.
    May return fewer than `count` points (but never zero) if acceptance is
    very low and the budget runs out.
    """
    if count < 1:
        raise ValueError("count must be positive")
    kept: list[Array] = []
    batch = max(count, 256)
    for _ in range(max_batches):
        pts = box.sample(rng, batch)
        for p in pts:
            if predicate(p):
                kept.append(p)
                if len(kept) == count:
                    return np.array(kept)
    if not kept:
        raise EmptyRegionError(
            f"no sample satisfied the predicate in {max_batches} batches "
            f"of {batch} over {box.bounds}"
        )
    return np.array(kept)


def annulus_sample(
    value: Callable[[Array], float],
    lo_level: float,
    hi_level: float,
    box: Box,
    rng: np.random.Generator,
    count: int,
) -> Array:
    """Points of the box with lo_level <= value(x) <= hi_level."""
    if hi_level <= lo_level:
        raise InvalidRegionError(
            f"annulus levels must satisfy lo < hi, got [{lo_level}, {hi_level}]"
        )
    return region_sample(
        lambda p: lo_level <= value(p) <= hi_level, box, rng, count
    )


def _face_lattice_min(value, box: Box, per_axis: int = 17) -> float:
    """Min of `value` over a lattice on each face of the box."""
    worst = np.inf
    d = box.dimension
    for axis in range(d):
        for side in (0, 1):
            fixed = box.bounds[axis][side]
            others = [
                np.linspace(lo, hi, per_axis)
                for i, (lo, hi) in enumerate(box.bounds)
                if i != axis
            ]
            if others:
                combos = itertools.product(*others)
            else:
                combos = [()]
            for combo in combos:
                pt = list(combo)
                pt.insert(axis, fixed)
                worst = min(worst, value(np.array(pt, dtype=float)))
    return worst


def enclosing_box(
    value: Callable[[Array], float],
    level: float,
    dimension: int,
    gradient: Callable[[Array], Array] | None = None,
    hint: Box | None = None,
) -> Box:
    """A box that contains the sublevel set {value <= level}.

    Locates the minimizer (coarse probe lattice, then a local refine), then
    doubles a box around it until every face sits strictly above `level`.
    The face test is a lattice heuristic, fine for the smooth coercive
    Lyapunov functions this package deals in.
    """
    if level <= 0:
        raise InvalidRegionError("level must be positive")
    probe = hint if hint is not None else Box.cube(-16.0, 16.0, dimension)
    pts = probe.lattice(33 if dimension == 1 else 9)
    vals = np.array([value(p) for p in pts])
    x0 = pts[int(np.argmin(vals))]

    try:
        from scipy.optimize import minimize

        res = minimize(
            lambda z: value(np.asarray(z, dtype=float)),
            x0,
            jac=(lambda z: np.asarray(gradient(np.asarray(z, dtype=float)), dtype=float))
            if gradient is not None
            else None,
            method="BFGS",
        )
        center = np.asarray(res.x, dtype=float)
        if value(center) > vals.min():
            center = x0
    except Exception:
        center = x0

    half = 1.0
    for _ in range(64):
        box = Box.from_bounds(
            np.column_stack([center - half, center + half])
        )
        if _face_lattice_min(value, box) > 1.2 * level:
            return box
        half *= 2.0
    raise InvalidRegionError(
        f"could not enclose the level-{level} sublevel set; "
        "is the function radially unbounded?"
    )
