"""Deterministic numerical integration.

Composite Gauss-Legendre panels are the workhorse. Besides the adaptive
``integrate_1d`` / ``integrate_nested`` drivers, :class:`PanelGrid` exposes the
panel-local Lagrange basis so that callers can build product-integration
weights: truncated weights for causal (``s < t``) cut-offs and weights against
sharply peaked kernels that the nodes themselves do not resolve.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

DEFAULT_ORDER = 16


class Spacing(str, enum.Enum):
    UNIFORM = "uniform"
    CHEBYSHEV = "chebyshev"


class Rule(str, enum.Enum):
    TRAPEZOID = "trapezoid"
    GAUSS_LEGENDRE = "gauss_legendre"


class NonConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """A time window with a resolution request.

    ``n_points`` is the number of samples; when the grid is used for
    quadrature it is turned into ``n_points // order`` panels.
    """

    t_start: float
    t_end: float
    n_points: int = 256
    spacing: Spacing = Spacing.UNIFORM

    def __post_init__(self):
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise ValueError("TimeGrid bounds must be finite")
        if not self.t_end > self.t_start:
            raise ValueError(f"TimeGrid needs t_end > t_start, got [{self.t_start}, {self.t_end}]")
        if self.n_points < 16:
            raise ValueError(f"TimeGrid needs n_points >= 16, got {self.n_points}")
        object.__setattr__(self, "spacing", Spacing(self.spacing))

    @property
    def span(self) -> float:
        return self.t_end - self.t_start

    def samples(self) -> np.ndarray:
        if self.spacing is Spacing.UNIFORM:
            return np.linspace(self.t_start, self.t_end, self.n_points)
        k = np.arange(self.n_points)
        u = -np.cos(np.pi * k / (self.n_points - 1))
        return self.t_start + 0.5 * (u + 1.0) * self.span

    def panel_edges(self, order: int = DEFAULT_ORDER) -> np.ndarray:
        n_panels = max(1, self.n_points // order)
        if self.spacing is Spacing.UNIFORM:
            return np.linspace(self.t_start, self.t_end, n_panels + 1)
        k = np.arange(n_panels + 1)
        u = -np.cos(np.pi * k / n_panels)
        return self.t_start + 0.5 * (u + 1.0) * self.span


@dataclass(frozen=True)
class QuadratureSpec:
    rule: Rule = Rule.GAUSS_LEGENDRE
    tol: float = 1e-10
    max_levels: int = 12
    order: int = DEFAULT_ORDER

    def __post_init__(self):
        object.__setattr__(self, "rule", Rule(self.rule))
        if not 0.0 < self.tol <= 0.1:
            raise ValueError(f"tolerance must lie in (0, 0.1], got {self.tol}")
        if self.max_levels < 1:
            raise ValueError("max_levels must be >= 1")
        if self.order < 1:
            raise ValueError("order must be >= 1")


@dataclass(frozen=True)
class QuadResult:
    value: complex
    error: float
    converged: bool
    levels: int
    n_evals: int
    label: str = ""


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1] (read-only arrays)."""
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def _barycentric(order: int) -> np.ndarray:
    x, _ = gauss_legendre(order)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    bw = 1.0 / diff.prod(axis=1)
    bw.setflags(write=False)
    return bw


def lagrange_basis(u: np.ndarray, order: int) -> np.ndarray:
    """Values of the Lagrange basis on the reference GL nodes at points ``u``.

    Returns an array of shape ``(len(u), order)``. Exact node hits are
    handled explicitly so the barycentric formula never divides by zero.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    x, _ = gauss_legendre(order)
    bw = _barycentric(order)
    diff = u[:, None] - x[None, :]
    hit = diff == 0.0
    diff[hit] = 1.0
    terms = bw[None, :] / diff
    out = terms / terms.sum(axis=1, keepdims=True)
    rows = hit.any(axis=1)
    if rows.any():
        out[rows] = hit[rows].astype(float)
    return out


def composite_rule(edges: Sequence[float], order: int = DEFAULT_ORDER) -> tuple[np.ndarray, np.ndarray]:
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def merge_edges(*edge_sets: Sequence[float], rel_gap: float = 1e-9) -> np.ndarray:
    """Sorted union of panel edges, dropping near-duplicates."""
    e = np.unique(np.concatenate([np.asarray(s, dtype=float).ravel() for s in edge_sets]))
    if e.size < 2:
        raise ValueError("need at least two distinct edges")
    span = e[-1] - e[0]
    keep = [e[0]]
    for v in e[1:-1]:
        if v - keep[-1] > rel_gap * span:
            keep.append(v)
    if e[-1] - keep[-1] <= rel_gap * span and len(keep) > 1:
        keep.pop()
    keep.append(e[-1])
    return np.asarray(keep)


class PanelGrid:
    """Composite Gauss-Legendre grid with panel-local interpolation.

    Any smooth function sampled at :attr:`nodes` is represented by its
    piecewise polynomial interpolant; all derived weights are exact for that
    interpolant.
    """

    def __init__(self, edges: Sequence[float], order: int = DEFAULT_ORDER):
        edges = np.asarray(edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("panel edges must be strictly increasing")
        self.edges = edges
        self.order = int(order)
        self.nodes, self.weights = composite_rule(edges, self.order)
        self.n_panels = edges.size - 1
        for arr in (self.edges, self.nodes, self.weights):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return self.nodes.size

    @property
    def a(self) -> float:
        return float(self.edges[0])

    @property
    def b(self) -> float:
        return float(self.edges[-1])

    def refined(self, factor: int = 2) -> "PanelGrid":
        """Same breakpoints, every panel split into ``factor`` pieces."""
        sub = [np.linspace(lo, hi, factor + 1)[:-1] for lo, hi in zip(self.edges[:-1], self.edges[1:])]
        return PanelGrid(np.concatenate(sub + [self.edges[-1:]]), self.order)

    def panel_index(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.n_panels - 1)

    def _to_reference(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        lo = self.edges[p]
        hi = self.edges[p + 1]
        return (2.0 * x - lo - hi) / (hi - lo)

    def interpolation_matrix(self, x: np.ndarray) -> np.ndarray:
        """Dense ``(len(x), len(nodes))`` matrix evaluating the interpolant at ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p = self.panel_index(x)
        basis = lagrange_basis(self._to_reference(x, p), self.order)
        out = np.zeros((x.size, self.nodes.size))
        cols = p[:, None] * self.order + np.arange(self.order)[None, :]
        np.put_along_axis(out, cols, basis, axis=1)
        return out

    def interpolate(self, values: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.interpolation_matrix(x) @ np.asarray(values)

    def truncated_weights(self, cut: np.ndarray) -> np.ndarray:
        """Weights ``w_n(c) = int_a^c l_n(x) dx`` for each cut position ``c``.

        Shape ``(len(cut), len(nodes))``. Cuts below ``a`` give zeros and
        cuts above ``b`` give the full weights.
        """
        cut = np.atleast_1d(np.asarray(cut, dtype=float))
        out = np.zeros((cut.size, self.nodes.size))
        full = cut[:, None] >= self.edges[None, 1:]
        for i in range(cut.size):
            npan = int(full[i].sum())
            out[i, : npan * self.order] = self.weights[: npan * self.order]
            if npan < self.n_panels and cut[i] > self.edges[npan]:
                lo = self.edges[npan]
                c = min(cut[i], self.edges[npan + 1])
                xg, wg = gauss_legendre(self.order)
                xs = lo + 0.5 * (c - lo) * (xg + 1.0)
                p = np.full(xs.size, npan)
                basis = lagrange_basis(self._to_reference(xs, p), self.order)
                out[i, npan * self.order:(npan + 1) * self.order] = (0.5 * (c - lo) * wg) @ basis
        return out

    def cumulative(self, values: np.ndarray, at: np.ndarray | None = None) -> np.ndarray:
        """``int_a^x f`` at ``x = at`` (default: the nodes) from node samples of ``f``."""
        at = self.nodes if at is None else at
        return self.truncated_weights(at) @ np.asarray(values)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


def _segments(domain: tuple[float, float], breakpoints: Sequence[float]) -> np.ndarray:
    a, b = float(domain[0]), float(domain[1])
    if not b > a:
        raise ValueError(f"empty domain [{a}, {b}]")
    inner = [p for p in breakpoints if a < p < b]
    return merge_edges([a, b], inner)


def _level_edges(segments: np.ndarray, level: int) -> np.ndarray:
    n = 2 ** level
    parts = [np.linspace(lo, hi, n + 1)[:-1] for lo, hi in zip(segments[:-1], segments[1:])]
    return np.concatenate(parts + [segments[-1:]])


def _apply_rule(f: Callable, edges: np.ndarray, rule: Rule, order: int) -> tuple[complex, int]:
    if rule is Rule.GAUSS_LEGENDRE:
        x, w = composite_rule(edges, order)
        return complex(np.sum(w * f(x))), x.size
    # trapezoid: every panel sampled at its end points
    y = f(edges)
    return complex(np.sum(0.5 * np.diff(edges) * (y[1:] + y[:-1]))), edges.size


def _converged(q: complex, err: float, tol: float) -> bool:
    return err <= tol * abs(q) or (err == 0.0) or (abs(q) < 1e-300 and err < 1e-300)


def integrate_1d(
    f: Callable[[np.ndarray], np.ndarray],
    domain: tuple[float, float],
    spec: QuadratureSpec | None = None,
    breakpoints: Sequence[float] = (),
    label: str = "",
) -> QuadResult:
    """Integrate a vectorised ``f`` over ``domain``.

    Panels are doubled until two successive levels agree to ``spec.tol``
    (relative). Panel boundaries always include ``breakpoints``.
    """
    spec = spec or QuadratureSpec()
    segs = _segments(domain, breakpoints)
    total_evals = 0
    prev = None
    for level in range(spec.max_levels + 1):
        q, n = _apply_rule(f, _level_edges(segs, level), spec.rule, spec.order)
        total_evals += n
        if prev is not None:
            err = abs(q - prev)
            if spec.rule is Rule.TRAPEZOID:
                err /= 3.0
            if _converged(q, err, spec.tol):
                return QuadResult(q, err, True, level, total_evals, label)
        prev = q
    warnings.warn(f"integrate_1d{' [' + label + ']' if label else ''} did not converge "
                  f"after {spec.max_levels} levels (error {err:.3e})", NonConvergenceWarning, stacklevel=2)
    return QuadResult(q, err, False, spec.max_levels, total_evals, label)


def integrate_nested(
    f: Callable[..., np.ndarray],
    domains: Sequence[tuple[float, float]],
    spec: QuadratureSpec | None = None,
    breakpoints: Sequence[Sequence[float]] | None = None,
    label: str = "",
) -> QuadResult:
    """Tensor-product integral over 2 or 3 axes with per-axis refinement.

    ``f`` receives one broadcastable array per axis (``indexing='ij'``).
    Each round, an axis is doubled when doubling it alone moves the result by
    more than its share of the tolerance.
    """
    spec = spec or QuadratureSpec()
    ndim = len(domains)
    if ndim not in (2, 3):
        raise ValueError("integrate_nested handles 2 or 3 axes")
    breakpoints = breakpoints or [()] * ndim
    segs = [_segments(d, bp) for d, bp in zip(domains, breakpoints)]
    if spec.rule is not Rule.GAUSS_LEGENDRE:
        spec = QuadratureSpec(Rule.GAUSS_LEGENDRE, spec.tol, spec.max_levels, spec.order)

    cache: dict[tuple[int, ...], complex] = {}
    evals = 0

    def evaluate(levels: tuple[int, ...]) -> complex:
        nonlocal evals
        if levels not in cache:
            rules = [composite_rule(_level_edges(s, lv), spec.order) for s, lv in zip(segs, levels)]
            grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
            vals = np.asarray(f(*grids))
            w = rules[0][1]
            for r in rules[1:]:
                w = np.multiply.outer(w, r[1])
            cache[levels] = complex(np.sum(w * vals))
            evals += vals.size
        return cache[levels]

    levels = [0] * ndim
    err = math.inf
    for _ in range(spec.max_levels * ndim + 1):
        q = evaluate(tuple(levels))
        axis_err = []
        for ax in range(ndim):
            bumped = list(levels)
            bumped[ax] += 1
            axis_err.append(abs(evaluate(tuple(bumped)) - q))
        err = float(sum(axis_err))
        if _converged(q, err, spec.tol):
            return QuadResult(q, err, True, max(levels), evals, label)
        share = spec.tol * abs(q) / ndim
        grow = [ax for ax in range(ndim) if axis_err[ax] > share and levels[ax] < spec.max_levels]
        if not grow:
            break
        for ax in grow:
            levels[ax] += 1
    warnings.warn(f"integrate_nested{' [' + label + ']' if label else ''} did not converge "
                  f"(error {err:.3e})", NonConvergenceWarning, stacklevel=2)
    return QuadResult(q, err, False, max(levels), evals, label)
