"""Segment grids and MILP linearization building blocks.

A quantity x in [lo, hi] is split into per-segment variables s_i that
must fill in order: segment i reaches its full width before segment i+1
leaves zero. Ordering is enforced with chained binaries b_i,

    width_i * b_{i+1} <= s_i <= width_i * b_i,

with the binary past the last segment fixed to zero. The selector
b_i - b_{i+1} is then 1 exactly at the partially filled segment, which
is what lets piecewise-constant coefficients (evaluated at segment
midpoints) be attached to an otherwise continuous quantity.

Also provides the two standard product linearizations used with those
selectors: products of binaries, and products of a binary with a
bounded continuous variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ModelError, ParameterError
from .milp import Model, VarId


@dataclass(frozen=True)
class SegmentGrid:
    """Ordered segment widths covering [lo, hi]."""

    lo: float
    hi: float
    widths: tuple[float, ...]
    label: str = ""

    def __post_init__(self):
        if self.hi <= self.lo:
            raise ParameterError("grid needs hi > lo")
        if not self.widths:
            raise ParameterError("grid needs at least one segment")
        if any(w <= 0 for w in self.widths):
            raise ParameterError("segment widths must be positive")
        if not math.isclose(sum(self.widths), self.hi - self.lo, rel_tol=1e-9, abs_tol=1e-12):
            raise ParameterError(
                f"widths sum to {sum(self.widths)}, span is {self.hi - self.lo}"
            )

    def __len__(self) -> int:
        return len(self.widths)

    @property
    def edges(self) -> tuple[float, ...]:
        """Breakpoints including both ends, length len(self) + 1."""
        out = [self.lo]
        for w in self.widths:
            out.append(out[-1] + w)
        return tuple(out)

    def midpoint(self, i: int) -> float:
        """Center of segment i (1-based), offset from lo.

        Sum of the widths before segment i plus half its own width; the
        coefficient anchor for that segment.
        """
        if not 1 <= i <= len(self.widths):
            raise ParameterError(f"segment index {i} outside 1..{len(self.widths)}")
        return self.lo + sum(self.widths[: i - 1]) + self.widths[i - 1] / 2.0

    def midpoints(self) -> tuple[float, ...]:
        return tuple(self.midpoint(i) for i in range(1, len(self.widths) + 1))

    def active_segment(self, x: float) -> int:
        """1-based segment containing x; 0 when x == lo exactly.

        Values on an interior breakpoint belong to the lower segment.
        """
        if x < self.lo - 1e-9 or x > self.hi + 1e-9:
            raise ParameterError(f"value {x} outside grid [{self.lo}, {self.hi}]")
        if x <= self.lo:
            return 0
        edges = self.edges
        for i in range(1, len(edges)):
            if x <= edges[i] + 1e-12:
                return i
        return len(self.widths)

    def canonical_fill(self, x: float) -> tuple[list[float], list[int]]:
        """The unique consecutive fill of x: (segment values, binaries).

        Binaries are 1 through the active segment and 0 after, matching
        the lower-segment tie rule of :meth:`active_segment`.
        """
        act = self.active_segment(x)
        fills = []
        run = self.lo
        for i, w in enumerate(self.widths, start=1):
            if i < act:
                fills.append(w)
            elif i == act:
                fills.append(min(w, max(0.0, x - run)))
            else:
                fills.append(0.0)
            run += w
        bins = [1 if i <= act else 0 for i in range(1, len(self.widths) + 1)]
        return fills, bins


def make_grid(lo: float, hi: float, n: int = 0, widths=None, label: str = "") -> SegmentGrid:
    """Uniform grid of n segments, or an explicit-width grid."""
    if widths is not None:
        return SegmentGrid(lo, hi, tuple(float(w) for w in widths), label)
    if n < 1:
        raise ParameterError("uniform grid needs n >= 1")
    w = (hi - lo) / n
    return SegmentGrid(lo, hi, (w,) * n, label)


@dataclass(frozen=True)
class SegmentSelection:
    """Variable ids for one segmented quantity in a model."""

    grid: SegmentGrid
    segment_vars: tuple[VarId, ...]
    fill_binaries: tuple[VarId, ...]


def add_segmented(model: Model, grid: SegmentGrid, name: str) -> SegmentSelection:
    """Create segment and fill-binary variables plus the ordering rows.

    Segment variables are bounded by their widths; binaries chain so
    that any feasible assignment fills segments consecutively. The
    caller ties ``sum(segment_vars)`` to whatever quantity is being
    segmented.
    """
    segs = tuple(
        model.add_variable(f"{name}_s{i}", lo=0.0, hi=w)
        for i, w in enumerate(grid.widths, start=1)
    )
    bins = tuple(
        model.add_variable(f"{name}_b{i}", kind="binary")
        for i in range(1, len(grid) + 1)
    )
    sel = SegmentSelection(grid, segs, bins)
    emit_consecutive_fill(model, sel)
    return sel


def emit_consecutive_fill(model: Model, sel: SegmentSelection) -> list[int]:
    """Add width_i * b_{i+1} <= s_i <= width_i * b_i for every segment.

    The binary past the last segment is the constant zero, so the last
    segment's lower ordering row is dropped (s >= 0 is already a bound).
    """
    for v in (*sel.segment_vars, *sel.fill_binaries):
        model.check_owned(v)
    rows = []
    n = len(sel.grid)
    for i in range(n):
        w = sel.grid.widths[i]
        s = sel.segment_vars[i]
        rows.append(
            model.add_constraint(
                {s: 1.0, sel.fill_binaries[i]: -w}, "<=", 0.0
            )
        )
        if i + 1 < n:
            rows.append(
                model.add_constraint(
                    {s: 1.0, sel.fill_binaries[i + 1]: -w}, ">=", 0.0
                )
            )
    return rows


def linearize_binary_product(model: Model, bins: list[VarId], name: str) -> VarId:
    """Continuous u in [0, 1] forced to equal the product of the binaries.

    u <= b_k for each factor and u >= sum(b) - (count - 1); exact on
    every binary corner.
    """
    if not bins:
        raise ModelError("binary product needs at least one factor")
    for b in bins:
        model.check_owned(b)
    u = model.add_variable(name, lo=0.0, hi=1.0)
    for b in bins:
        model.add_constraint({u: 1.0, b: -1.0}, "<=", 0.0)
    coeffs = {u: 1.0}
    for b in bins:
        coeffs[b] = coeffs.get(b, 0.0) - 1.0
    model.add_constraint(coeffs, ">=", 1.0 - len(bins))
    return u


def linearize_binary_continuous(
    model: Model, bin_var: VarId, cont: VarId, upper_bound: float, name: str
) -> VarId:
    """Continuous w forced to equal bin * cont for cont in [0, upper_bound].

    Three-inequality envelope: w <= upper_bound * bin, w <= cont, and
    w >= cont - upper_bound * (1 - bin); exact whenever bin is 0/1.
    """
    model.check_owned(bin_var)
    model.check_owned(cont)
    if not math.isfinite(upper_bound):
        raise ModelError("product envelope needs a finite continuous bound")
    w = model.add_variable(name, lo=0.0, hi=upper_bound)
    model.add_constraint({w: 1.0, bin_var: -upper_bound}, "<=", 0.0)
    model.add_constraint({w: 1.0, cont: -1.0}, "<=", 0.0)
    model.add_constraint(
        {w: 1.0, cont: -1.0, bin_var: -upper_bound}, ">=", -upper_bound
    )
    return w
