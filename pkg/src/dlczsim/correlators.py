"""Field expansions over Gaussian inputs and their moments.

Every field is a finite sum of terms ``int K(e, v) X(v) dv`` where ``X`` is
one of a few elementary inputs (the vacuum write field entering the medium,
the initial spin wave, and the Langevin noise of the write and read stages)
or its adjoint. In the vacuum the only nonzero two-point moments are the
anti-normally ordered ones,

    <X(v) X^dagger(v')> = rho(v) delta(v - v'),

so a contraction of two terms collapses the delta exactly and leaves a
single quadrature over the input's own grid. Causal limits such as
``int_0^t`` are handled with truncated product-integration weights; when
both contracted terms are cut on the same axis the weight at
``min(cut_1, cut_2)`` is used. Local terms (the input evaluated at the
field's own point) carry the discrete delta ``1 / w_n`` on the input grid,
which makes every subsequent integral over that point exact.

Fourth moments follow from the Gaussian (Isserlis) factorisation, keeping
operator order inside each pair.
"""

from __future__ import annotations

import enum
import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .kernels import (ReadKernelContext, WriteKernelContext, build_read_context, build_write_context,
                      h_signed, i1_ratio_signed)
from .params import Scenario
from .quadrature import PanelGrid, gauss_legendre, merge_edges


class InputKind(str, enum.Enum):
    VACUUM_WRITE = "vacuum_write"   # write field entering the medium, E_w(0, t)
    INITIAL_SPIN = "initial_spin"   # spin wave before the write pulse, S(z, 0)
    WRITE_NOISE = "write_noise"     # Langevin noise of the spin coherence, F_S(z, t)
    READ_NOISE = "read_noise"       # Langevin noise of the read transition, F_P(z, t)


NOISE_KINDS = frozenset({InputKind.WRITE_NOISE, InputKind.READ_NOISE})


class CorrelatorError(RuntimeError):
    pass


class LowPhotonNumberWarning(UserWarning):
    pass


class RetrievalWidthWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ElementaryInput:
    kind: InputKind
    dagger: bool = False

    def __str__(self) -> str:
        return self.kind.value + ("^+" if self.dagger else "")


class DiscreteAxis:
    """An axis of independent modes (unit weights, no causal cuts)."""

    def __init__(self, n: int):
        self.nodes = np.arange(n, dtype=float)
        self.weights = np.ones(n)

    def __len__(self) -> int:
        return self.nodes.size


@dataclass(frozen=True, eq=False)
class InputSpace:
    """Discretised elementary input: grid axes and anti-normal density ``rho``."""

    kind: InputKind
    axes: tuple
    density: np.ndarray

    def __post_init__(self):
        shape = tuple(len(a) for a in self.axes)
        dens = np.broadcast_to(np.asarray(self.density, dtype=float), shape)
        object.__setattr__(self, "density", dens)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True, eq=False)
class Cut:
    """Causal limit ``v_axis < position[e]`` for each evaluation point ``e``."""

    axis: int
    positions: np.ndarray
    weights: np.ndarray  # truncated weights, shape (n_eval, len(axis))


def make_cut(space: InputSpace, axis: int, positions) -> Cut:
    grid = space.axes[axis]
    if not isinstance(grid, PanelGrid):
        raise CorrelatorError("causal cuts need a panel-grid axis")
    pos = np.atleast_1d(np.asarray(positions, dtype=float))
    w = _truncated(grid, pos)
    return Cut(axis, pos, w)


_TRUNC_CACHE: dict = {}


def _truncated(grid: PanelGrid, pos: np.ndarray) -> np.ndarray:
    key = (grid.edges.tobytes(), grid.order, pos.tobytes())
    hit = _TRUNC_CACHE.get(key)
    if hit is None:
        if len(_TRUNC_CACHE) > 256:
            _TRUNC_CACHE.clear()
        hit = grid.truncated_weights(pos)
        hit.setflags(write=False)
        _TRUNC_CACHE[key] = hit
    return hit


@dataclass(frozen=True, eq=False)
class Term:
    """``sum_v K[e, v] X(v)`` (or ``X^dagger``) including quadrature weights implicitly.

    ``kernel`` has shape ``(n_eval, *space.shape)``; it must be finite on
    the whole grid, including beyond any cut (analytic continuation).
    """

    label: str
    space: InputSpace
    dagger: bool
    kernel: np.ndarray
    cuts: tuple[Cut, ...] = ()
    _adjoint: list = field(default_factory=list, repr=False, compare=False)

    @property
    def input(self) -> ElementaryInput:
        return ElementaryInput(self.space.kind, self.dagger)

    def adjoint(self) -> "Term":
        """Adjoint term; the same object is returned on every call."""
        if not self._adjoint:
            other = Term(self.label, self.space, not self.dagger, np.conj(self.kernel), self.cuts)
            other._adjoint.append(self)
            self._adjoint.append(other)
        return self._adjoint[0]

    def cut_on(self, axis: int) -> Cut | None:
        for c in self.cuts:
            if c.axis == axis:
                return c
        return None


@dataclass(frozen=True, eq=False)
class FieldExpansion:
    """A field sampled at ``n_eval`` points, optionally followed by a linear map.

    The field at output point ``o`` is ``sum_e P[o, e] sum_terms term(e)``;
    without a projection the outputs are the evaluation points.
    """

    name: str
    n_eval: int
    terms: tuple[Term, ...]
    projection: np.ndarray | None = None
    notes: tuple[str, ...] = ()

    @property
    def n_out(self) -> int:
        return self.n_eval if self.projection is None else self.projection.shape[0]

    def dagger(self) -> "FieldExpansion":
        proj = None if self.projection is None else np.conj(self.projection)
        name = self.name[:-2] if self.name.endswith("^+") else self.name + "^+"
        return FieldExpansion(name, self.n_eval, tuple(t.adjoint() for t in self.terms), proj, self.notes)

    def project(self, matrix: np.ndarray, name: str | None = None, notes: Sequence[str] = ()) -> "FieldExpansion":
        matrix = np.asarray(matrix)
        proj = matrix if self.projection is None else matrix @ self.projection
        return FieldExpansion(name or self.name, self.n_eval, self.terms, proj, self.notes + tuple(notes))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(t.label for t in self.terms)

    def is_empty(self) -> bool:
        return not self.terms or (self.projection is not None and not np.any(self.projection))


@dataclass(frozen=True)
class MomentResult:
    """Value of a moment with its per-contribution decomposition.

    ``error`` is ``nan`` unless an estimate was requested (grid doubling).
    """

    value: np.ndarray
    term_breakdown: tuple[tuple[str, np.ndarray], ...] = ()
    error: float = float("nan")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.term_breakdown)


# ---------------------------------------------------------------------------
# contraction engine


def _weight_along(arr: np.ndarray, axis: int, w: np.ndarray, per_eval: bool) -> np.ndarray:
    """Multiply ``arr`` (shape (n_eval, *axes)) by weights along input axis ``axis``."""
    nd = arr.ndim - 1
    if per_eval:
        shape = [w.shape[0]] + [1] * nd
        shape[axis + 1] = w.shape[1]
    else:
        shape = [1] * (nd + 1)
        shape[axis + 1] = w.shape[0]
    return arr * w.reshape(shape)


def _contract_terms(tx: Term, ty: Term) -> np.ndarray | None:
    """``<tx(e) ty(f)>`` at evaluation level, or ``None`` if structurally zero."""
    if tx.dagger or not ty.dagger or tx.space.kind is not ty.space.kind:
        return None
    sp = tx.space
    if ty.space is not sp and (ty.space.shape != sp.shape):
        raise CorrelatorError(f"inputs of kind {sp.kind.value} discretised differently")
    n_axes = len(sp.axes)
    kx = tx.kernel * sp.density[None]
    ky = ty.kernel
    both = [a for a in range(n_axes) if tx.cut_on(a) is not None and ty.cut_on(a) is not None]

    def weighted(owner: dict[int, str]) -> np.ndarray:
        ax_, ay_ = kx, ky
        for a in range(n_axes):
            cx, cy = tx.cut_on(a), ty.cut_on(a)
            who = owner.get(a) or ("x" if cx is not None else "y" if cy is not None else None)
            if who == "x":
                ax_ = _weight_along(ax_, a, cx.weights, True)
            elif who == "y":
                ay_ = _weight_along(ay_, a, cy.weights, True)
            else:
                ax_ = _weight_along(ax_, a, np.asarray(sp.axes[a].weights), False)
        return ax_.reshape(ax_.shape[0], -1) @ ay_.reshape(ay_.shape[0], -1).T

    if not both:
        return weighted({})
    # weight at min(cut_x, cut_y): choose the owner per axis by comparing cuts
    out = None
    for choice in itertools.product("xy", repeat=len(both)):
        owner = dict(zip(both, choice))
        mask = np.ones((tx.kernel.shape[0], ty.kernel.shape[0]), dtype=bool)
        for a, who in owner.items():
            px = tx.cut_on(a).positions[:, None]
            py = ty.cut_on(a).positions[None, :]
            mask &= (px <= py) if who == "x" else (px > py)
        if not mask.any():
            continue
        part = np.where(mask, weighted(owner), 0.0)
        out = part if out is None else out + part
    return out


class ContractionCache:
    """Memoises evaluation-level term contractions.

    Terms are held strongly, so identities stay valid for the cache's life.
    """

    def __init__(self):
        self._store: dict[tuple[int, int], tuple[Term, Term, np.ndarray | None]] = {}

    def get(self, tx: Term, ty: Term) -> np.ndarray | None:
        key = (id(tx), id(ty))
        hit = self._store.get(key)
        if hit is None:
            hit = (tx, ty, _contract_terms(tx, ty))
            self._store[key] = hit
        return hit[2]

    def __len__(self) -> int:
        return len(self._store)


def _project(x: FieldExpansion, y: FieldExpansion, core: np.ndarray) -> np.ndarray:
    out = core
    if x.projection is not None:
        out = x.projection @ out
    if y.projection is not None:
        out = out @ y.projection.T
    return out


def structurally_nonzero(tx: Term, ty: Term) -> bool:
    return (not tx.dagger) and ty.dagger and tx.space.kind is ty.space.kind


def two_point(x: FieldExpansion, y: FieldExpansion, cache: ContractionCache | None = None,
              breakdown: bool = True) -> MomentResult:
    """``<x(o) y(o')>`` for all output pairs, shape ``(x.n_out, y.n_out)``."""
    cache = cache or ContractionCache()
    total = np.zeros((x.n_out, y.n_out), dtype=complex)
    parts = []
    for tx in x.terms:
        for ty in y.terms:
            core = cache.get(tx, ty)
            if core is None:
                continue
            val = _project(x, y, core)
            parts.append((f"<{tx.label} {ty.label}>", val))
    for _, val in sorted(parts, key=lambda kv: kv[0]):
        total = total + val
    return MomentResult(total, tuple(sorted(parts, key=lambda kv: kv[0])) if breakdown else ())


def _diag_project(x: FieldExpansion, y: FieldExpansion, core: np.ndarray) -> np.ndarray:
    """Diagonal of ``_project`` without forming the full matrix."""
    px = np.eye(x.n_eval) if x.projection is None else x.projection
    py = np.eye(y.n_eval) if y.projection is None else y.projection
    return np.einsum("oe,ef,of->o", px, core, py, optimize=True)


PAIRINGS = ("(12)(34)", "(13)(24)", "(14)(23)")


def wick_fourth_moment(a: FieldExpansion, b: FieldExpansion, c: FieldExpansion, d: FieldExpansion,
                       cache: ContractionCache | None = None, breakdown: bool = True) -> MomentResult:
    """``<a(i) b(t) c(t) d(i)>`` for Gaussian inputs, shape ``(a.n_out, b.n_out)``.

    ``a`` and ``d`` share the output index ``i``; ``b`` and ``c`` share
    ``t``. The moment is summed over the three pairings

        <ab><cd> + <ac><bd> + <ad><bc>

    term quadruple by term quadruple. Only pairings whose two factors are
    both structurally nonzero are formed; each is recorded in the breakdown
    under ``"p|q|r|s:pairing"`` with the term labels of a, b, c, d.
    """
    if a.n_out != d.n_out or b.n_out != c.n_out:
        raise CorrelatorError("wick_fourth_moment needs a, d and b, c on shared output grids")
    cache = cache or ContractionCache()

    def full(x, y, tx, ty):
        core = cache.get(tx, ty)
        return None if core is None else _project(x, y, core)

    def diag(x, y, tx, ty):
        core = cache.get(tx, ty)
        return None if core is None else _diag_project(x, y, core)

    ab = {(p, q): full(a, b, tp, tq) for p, tp in enumerate(a.terms) for q, tq in enumerate(b.terms)}
    cd = {(r, s): full(c, d, tr, ts) for r, tr in enumerate(c.terms) for s, ts in enumerate(d.terms)}
    ac = {(p, r): full(a, c, tp, tr) for p, tp in enumerate(a.terms) for r, tr in enumerate(c.terms)}
    bd = {(q, s): full(b, d, tq, ts) for q, tq in enumerate(b.terms) for s, ts in enumerate(d.terms)}
    ad = {(p, s): diag(a, d, tp, ts) for p, tp in enumerate(a.terms) for s, ts in enumerate(d.terms)}
    bc = {(q, r): diag(b, c, tq, tr) for q, tq in enumerate(b.terms) for r, tr in enumerate(c.terms)}

    contributions: list[tuple[str, np.ndarray]] = []
    for p, q, r, s in itertools.product(range(len(a.terms)), range(len(b.terms)),
                                        range(len(c.terms)), range(len(d.terms))):
        name = "|".join((a.terms[p].label, b.terms[q].label, c.terms[r].label, d.terms[s].label))
        x1, x2 = ab[p, q], cd[r, s]
        if x1 is not None and x2 is not None:
            contributions.append((f"{name}:{PAIRINGS[0]}", x1 * x2.T))
        x1, x2 = ac[p, r], bd[q, s]
        if x1 is not None and x2 is not None:
            contributions.append((f"{name}:{PAIRINGS[1]}", x1 * x2.T))
        x1, x2 = ad[p, s], bc[q, r]
        if x1 is not None and x2 is not None:
            contributions.append((f"{name}:{PAIRINGS[2]}", np.outer(x1, x2)))
    contributions.sort(key=lambda kv: kv[0])
    total = np.zeros((a.n_out, b.n_out), dtype=complex)
    for _, val in contributions:
        total = total + val
    return MomentResult(total, tuple(contributions) if breakdown else ())


@dataclass(frozen=True)
class PairingStructure:
    """Counts of surviving contributions in a fourth moment.

    ``n_products`` counts term quadruples with a nonzero pairing.
    Quadruples ``(p, q, r, s)`` and ``(s, r, q, p)`` of
    ``<A^+ B^+ B A>`` are complex conjugates of each other after the
    time integrations, so they form one physical term; ``n_classes``
    counts those classes and ``n_noise_classes`` the classes in which all
    four factors are Langevin-noise inputs.
    """

    n_products: int
    n_classes: int
    n_noise_classes: int
    classes: tuple[tuple[str, ...], ...]


def pairing_structure(a: FieldExpansion, b: FieldExpansion, c: FieldExpansion, d: FieldExpansion) -> PairingStructure:
    """Structural count of nonzero contributions to ``<a b c d>`` with ``a = d^+``, ``b = c^+``."""
    surviving = []
    for p, q, r, s in itertools.product(range(len(a.terms)), range(len(b.terms)),
                                        range(len(c.terms)), range(len(d.terms))):
        tp, tq, tr, ts = a.terms[p], b.terms[q], c.terms[r], d.terms[s]
        if ((structurally_nonzero(tp, tq) and structurally_nonzero(tr, ts))
                or (structurally_nonzero(tp, tr) and structurally_nonzero(tq, ts))
                or (structurally_nonzero(tp, ts) and structurally_nonzero(tq, tr))):
            surviving.append((p, q, r, s))
    classes: dict[tuple[int, ...], list[str]] = {}
    for p, q, r, s in surviving:
        key = min((p, q, r, s), (s, r, q, p))
        classes.setdefault(key, []).append("|".join((a.terms[p].label, b.terms[q].label,
                                                     c.terms[r].label, d.terms[s].label)))
    noise = 0
    for p, q, r, s in classes:
        kinds = {a.terms[p].space.kind, b.terms[q].space.kind, c.terms[r].space.kind, d.terms[s].space.kind}
        if kinds <= NOISE_KINDS:
            noise += 1
    return PairingStructure(len(surviving), len(classes), noise,
                            tuple(tuple(v) for _, v in sorted(classes.items())))


# ---------------------------------------------------------------------------
# write-stage inputs and fields


@dataclass(frozen=True, eq=False)
class WriteInputs:
    vacuum: InputSpace
    spin: InputSpace
    noise: InputSpace


def write_inputs(ctx: WriteKernelContext) -> WriteInputs:
    """Input spaces of the write stage with their vacuum densities.

    ``<E_w(0,t) E_w^+(0,t')> = (L/c) delta(t - t')`` (the field commutator
    at fixed position), ``<S S^+> = L delta(z - z')`` and
    ``<F_S F_S^+> = 2 gamma_S(t) L delta(z - z') delta(t - t')``.
    """
    L, c = ctx.L, ctx.c
    vac = InputSpace(InputKind.VACUUM_WRITE, (ctx.time,), np.full(len(ctx.time), L / c))
    spin = InputSpace(InputKind.INITIAL_SPIN, (ctx.medium,), np.full(len(ctx.medium), L))
    noise = InputSpace(InputKind.WRITE_NOISE, (ctx.medium, ctx.time),
                       np.broadcast_to(2.0 * ctx.gamma_s_nodes[None, :] * L, (len(ctx.medium), len(ctx.time))))
    return WriteInputs(vac, spin, noise)


def _local(grid) -> np.ndarray:
    return np.diag(1.0 / np.asarray(grid.weights))


def expand_write_field(ctx: WriteKernelContext, inputs: WriteInputs | None = None) -> FieldExpansion:
    """Write field leaving the medium, ``E_w(L, t_i)``, at the write time nodes.

    Four term groups: the vacuum passing straight through, the initial spin
    wave scattered through ``H``, the write noise through ``H`` (causal in
    time) and the vacuum amplified through ``G_e`` (causal in time).
    """
    inputs = inputs or write_inputs(ctx)
    L, c = ctx.L, ctx.c
    t = ctx.time.nodes
    z = ctx.medium.nodes
    chi = ctx.chi_nodes
    G = ctx.Gamma_nodes
    g = ctx.g_nodes
    n = t.size
    terms = [Term("Ew.vac", inputs.vacuum, False, _local(ctx.time).astype(complex))]

    u_spin = g[:, None] * (L - z)[None, :] / c
    k_spin = 1j * (chi / c * np.exp(-G))[:, None] * h_signed(u_spin)
    terms.append(Term("Ew.spin", inputs.spin, True, k_spin))

    dG = G[:, None] - G[None, :]                    # (i, k)
    dg = g[:, None] - g[None, :]
    u_noise = dg[:, None, :] * (L - z)[None, :, None] / c
    k_noise = 1j * (chi / c)[:, None, None] * np.exp(-dG)[:, None, :] * h_signed(u_noise)
    terms.append(Term("Ew.noise", inputs.noise, True, k_noise, (make_cut(inputs.noise, 1, t),)))

    k_gain = (chi / c)[:, None] * chi[None, :] * np.exp(-dG) * L * i1_ratio_signed(dg * L / c)
    terms.append(Term("Ew.gain", inputs.vacuum, False, k_gain.astype(complex),
                      (make_cut(inputs.vacuum, 0, t),)))
    return FieldExpansion("E_w", n, tuple(terms))


def expand_spinwave(ctx: WriteKernelContext, t: float | None = None,
                    inputs: WriteInputs | None = None) -> FieldExpansion:
    """Spin-wave creation operator ``S^+(z_m, t)`` at the medium nodes.

    Five term groups: the decayed initial spin wave, the local write noise,
    the vacuum write field through ``H``, and the initial spin wave and the
    noise propagated along the medium through ``G_s`` (causal in ``z``).
    ``t`` defaults to the write-window end.
    """
    inputs = inputs or write_inputs(ctx)
    t = ctx.xi if t is None else float(t)
    c = ctx.c
    z = ctx.medium.nodes
    s = ctx.time.nodes
    Gt = complex(ctx.Gamma(t))
    gt = float(ctx.g(t))
    G = ctx.Gamma_nodes
    g = ctx.g_nodes
    nz = z.size
    full_time = t >= ctx.time.b
    time_cut = () if full_time else (make_cut(inputs.noise, 1, np.full(nz, t)),)
    vac_cut = () if full_time else (make_cut(inputs.vacuum, 0, np.full(nz, t)),)
    decay_s = np.exp(-(Gt - G))                    # (k,)

    terms = [Term("S.decay", inputs.spin, True, np.exp(-Gt) * _local(ctx.medium).astype(complex))]

    loc = _local(ctx.medium)
    k_loc = loc[:, :, None] * decay_s[None, None, :]
    terms.append(Term("S.noise", inputs.noise, True, k_loc.astype(complex), time_cut))

    u_vac = (gt - g)[None, :] * z[:, None] / c
    k_vac = -1j * (ctx.chi_nodes * decay_s)[None, :] * h_signed(u_vac)
    terms.append(Term("S.vac", inputs.vacuum, False, k_vac, vac_cut))

    dz = z[:, None] - z[None, :]
    k_sg = np.exp(-Gt) * (gt / c) * i1_ratio_signed(gt * dz / c)
    terms.append(Term("S.spin_gain", inputs.spin, True, k_sg.astype(complex),
                      (make_cut(inputs.spin, 0, z),)))

    dgs = gt - g                                    # (k,)
    k_ng = (decay_s * dgs / c)[None, None, :] * i1_ratio_signed(dz[:, :, None] * dgs[None, None, :] / c)
    terms.append(Term("S.noise_gain", inputs.noise, True, k_ng.astype(complex),
                      (make_cut(inputs.noise, 0, z),) + time_cut))
    return FieldExpansion("S^+", nz, tuple(terms))


# ---------------------------------------------------------------------------
# read stage


def _gaussian_weights(medium: PanelGrid, mu: float, sigma: float, order: int = 16) -> np.ndarray:
    """``int_0^L N(y; mu, sigma) l_m(y) dy`` for the medium Lagrange basis ``l_m``."""
    a, b = medium.a, medium.b
    if sigma <= 1e-12 * (b - a):
        if a < mu < b:
            return medium.interpolation_matrix([mu])[0]
        if mu == a or mu == b:
            return 0.5 * medium.interpolation_matrix([mu])[0]
        return np.zeros(len(medium))
    lo, hi = max(a, mu - 10.0 * sigma), min(b, mu + 10.0 * sigma)
    if hi <= lo:
        return np.zeros(len(medium))
    n_sub = int(min(64, max(1, math.ceil((hi - lo) / sigma))))
    inner = [e for e in medium.edges if lo < e < hi] + ([mu] if lo < mu < hi else [])
    edges = merge_edges(np.linspace(lo, hi, n_sub + 1), inner)
    x, w = gauss_legendre(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    ys = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ws = (half[:, None] * w[None, :]).ravel()
    dens = np.exp(-0.5 * ((ys - mu) / sigma) ** 2) / (math.sqrt(2.0 * math.pi) * sigma)
    return (ws * dens) @ medium.interpolation_matrix(ys)


def retrieval_matrix(scenario: Scenario, rctx: ReadKernelContext, medium: PanelGrid,
                     times: np.ndarray) -> np.ndarray:
    """Map from spin-wave samples ``S(y_m, xi)`` to the read field ``E_r(0, t)``.

    Row ``t`` holds ``-(Omega_R(t) / sqrt(g^2 N)) D(t) int_0^L N(y; c Dtau, Dl) l_m(y) dy``
    where ``D`` is the storage decay measured from the write-window end.
    """
    times = np.asarray(times, dtype=float)
    omega = scenario.read_rabi(times)
    decay = scenario.read_amplitude_decay(times)
    mu = rctx.sweep(times)
    sig = rctx.delta_l(times, scenario.xi)
    pref = -omega / math.sqrt(rctx.g2N) * decay
    out = np.zeros((times.size, len(medium)))
    for i in np.nonzero(pref != 0.0)[0]:
        out[i] = pref[i] * _gaussian_weights(medium, float(mu[i]), float(sig[i]))
    return out


def expand_read_field(scenario: Scenario, rctx: ReadKernelContext, spinwave: FieldExpansion,
                      medium: PanelGrid, times: np.ndarray | None = None) -> FieldExpansion:
    """Signal part of the read field ``E_r(0, t)`` as an expansion over write-stage inputs.

    ``spinwave`` is the expansion of ``S^+(y_m, xi)`` at the medium nodes;
    the read field applies :func:`retrieval_matrix` to its adjoint. The
    read-stage Langevin terms are not part of the signal (see
    :func:`expand_read_noise`). An undriven read pulse gives an empty
    expansion.
    """
    times = rctx.time.nodes if times is None else np.asarray(times, dtype=float)
    if scenario.read_pulse.peak_rabi_bar == 0.0:
        return FieldExpansion("E_r", 0, (), None)
    R = retrieval_matrix(scenario, rctx, medium, times)
    notes = []
    ens = scenario.ensemble
    width = rctx.delta_l(times, scenario.xi)
    wide = width > ens.length_L
    if wide.any():
        # judged by the retrieved weight that is read out while the kernel is wider than L
        w = np.abs(scenario.read_rabi(times)) ** 2
        frac = float(w[wide].sum() / max(w.sum(), 1e-300))
        notes.append(f"retrieval kernel wider than the medium (Delta_l > L) for {frac:.0%} of the "
                     "read-pulse intensity; adiabatic read-out results are low-accuracy there")
    return spinwave.dagger().project(R.astype(complex), name="E_r", notes=notes)


def expand_read_noise(scenario: Scenario, rctx: ReadKernelContext, times: np.ndarray) -> FieldExpansion:
    """Diagnostic: the local read-noise term ``(i / sqrt(g^2 N)) D(t) F_P(0, t)``.

    Not used in the conditional signal. Its only nonzero moment is
    ``<E E^+> = 2 gamma_eg L D(t)^2 / (g^2 N)`` times a delta in time,
    which gives a vacuum-normalisation check of the read-stage coefficients.
    """
    times = np.asarray(times, dtype=float)
    axis = DiscreteAxis(times.size)
    space = InputSpace(InputKind.READ_NOISE, (axis,), np.full(times.size, 2.0 * scenario.ensemble.gamma_eg
                                                              * scenario.ensemble.length_L))
    k = np.diag(1j * scenario.read_amplitude_decay(times) / math.sqrt(rctx.g2N))
    return FieldExpansion("F_P", times.size, (Term("Er.read_noise", space, False, k.astype(complex)),))


# ---------------------------------------------------------------------------
# conditional flux and efficiency


@dataclass(frozen=True, eq=False)
class WriteStage:
    """Everything that depends only on the write stage (reused across read settings)."""

    ctx: WriteKernelContext
    inputs: WriteInputs
    write_field: FieldExpansion
    spinwave: FieldExpansion
    cache: ContractionCache
    write_flux: np.ndarray          # <E_w^+ E_w>(L, t_i) at the write nodes
    heralds: float                  # int <E_w^+ E_w> dt_i
    spin_moments: np.ndarray        # <S(y_m, xi) E_w(L, t_i)>, shape (m, i)
    spin_population: np.ndarray     # <S^+(y_m, xi) S(y_n, xi)>, shape (m, n)


def _write_key(sc: Scenario, refine: int):
    # the write stage does not depend on read settings, delay or detection
    return (sc.ensemble, sc.write_pulse, sc.grids, refine)


@lru_cache(maxsize=16)
def _write_stage_cached(key) -> WriteStage:
    ensemble, write_pulse, grids, refine = key
    from .params import PulseEnvelope  # local import keeps the key light
    sc = Scenario(ensemble, write_pulse, PulseEnvelope.zero(), grids=grids)
    return _build_write_stage(sc, refine)


def _build_write_stage(sc: Scenario, refine: int) -> WriteStage:
    ctx = build_write_context(sc, refine)
    inputs = write_inputs(ctx)
    ew = expand_write_field(ctx, inputs)
    sd = expand_spinwave(ctx, None, inputs)
    cache = ContractionCache()
    ew_d = ew.dagger()
    nw = np.real(np.diag(two_point(ew_d, ew, cache, breakdown=False).value))
    heralds = float(ctx.time.weights @ nw)
    s_ann = sd.dagger()
    spin_e = two_point(s_ann, ew, cache, breakdown=False).value
    pop = two_point(sd, s_ann, cache, breakdown=False).value
    return WriteStage(ctx, inputs, ew, sd, cache, nw, heralds, spin_e, pop)


def write_stage(scenario: Scenario, refine: int = 1) -> WriteStage:
    return _write_stage_cached(_write_key(scenario, refine))


@dataclass(frozen=True)
class FluxComponents:
    times: np.ndarray
    weights: np.ndarray
    heralded: np.ndarray     # (c/L) int |<E_r E_w>|^2 dt_i / int n_w dt_i
    background: np.ndarray   # (c/L) <E_r^+ E_r>(t)
    notes: tuple[str, ...]

    @property
    def total(self) -> np.ndarray:
        return self.heralded + self.background


def _sample_times(rctx: ReadKernelContext) -> tuple[np.ndarray, np.ndarray]:
    """Read nodes plus the window end points and one point just past the end."""
    t0, t1 = rctx.scenario.read_start, rctx.scenario.read_end
    nodes = rctx.time.nodes
    eps = 1e-6 * (t1 - t0)
    times = np.concatenate([[t0], nodes, [t1, t1 + eps]])
    weights = np.concatenate([[0.0], rctx.time.weights, [0.0, 0.0]])
    return times, weights


def flux_components(scenario: Scenario, refine: int = 1) -> FluxComponents:
    """Conditional flux split into its heralded and uncorrelated parts (no fiber factor)."""
    ws = write_stage(scenario, refine)
    if ws.heralds < 1e-30:
        raise CorrelatorError("write emission below 1e-30: no heralding write photons")
    rctx = build_read_context(scenario, refine)
    times, weights = _sample_times(rctx)
    ens = scenario.ensemble
    scale = ens.c / ens.length_L
    if scenario.read_pulse.peak_rabi_bar == 0.0:
        z = np.zeros(times.size)
        return FluxComponents(times, weights, z, z.copy(), ())
    er = expand_read_field(scenario, rctx, ws.spinwave, ws.ctx.medium, times)
    R = er.projection
    C = R @ ws.spin_moments                                  # (t, i) = <E_r(t) E_w(t_i)>
    heralded = scale * (np.abs(C) ** 2 @ ws.ctx.time.weights) / ws.heralds
    background = scale * np.real(np.einsum("tm,mn,tn->t", np.conj(R), ws.spin_population, R, optimize=True))
    return FluxComponents(times, weights, heralded, background, er.notes)


def conditional_flux_moment(scenario: Scenario, refine: int = 1, breakdown: bool = False) -> tuple[MomentResult, FluxComponents]:
    """The full fourth moment ``<E_w^+(t_i) E_r^+(t) E_r(t) E_w(t_i)>`` via Wick pairing.

    Slower than :func:`flux_components` (which uses the factorised form of
    the same pairings) and returned together with it for cross-checks.
    """
    ws = write_stage(scenario, refine)
    rctx = build_read_context(scenario, refine)
    times, _ = _sample_times(rctx)
    er = expand_read_field(scenario, rctx, ws.spinwave, ws.ctx.medium, times)
    ew = ws.write_field
    res = wick_fourth_moment(ew.dagger(), er.dagger(), er, ew, ws.cache, breakdown=breakdown)
    return res, flux_components(scenario, refine)


@dataclass(frozen=True)
class Efficiency:
    eta_cond: float
    eta_fiber_coupled: float
    error: float = float("nan")
    warnings: tuple[str, ...] = ()


def conditional_flux(scenario: Scenario, refine: int = 1):
    """Conditional read-photon flux in the first fiber, as a :class:`Waveform`.

    Each sample is ``(c/L) int <E_w^+ E_r^+ E_r E_w> dt_i / int <E_w^+ E_w> dt_i``
    times the fiber coupling.
    """
    from .config import scenario_hash
    from .waveform import Waveform

    comp = flux_components(scenario, refine)
    eta_f = scenario.detection.eta_fiber
    flux_cond = comp.total
    tol = 1e-9 * max(float(np.max(np.abs(flux_cond))), 1e-300)
    if np.any(flux_cond < -tol):
        raise CorrelatorError("negative conditional flux beyond tolerance")
    flux_cond = np.maximum(flux_cond, 0.0)
    eta_cond = float(comp.weights @ flux_cond)
    notes = list(comp.notes)
    if eta_cond > 0.3:
        notes.append(f"conditional efficiency {eta_cond:.3f} > 0.3: outside the low-photon-number regime")
    return Waveform(comp.times, flux_cond * eta_f, eta_cond * eta_f, scenario_hash(scenario),
                    comp.weights, eta_cond, eta_f, tuple(notes),
                    {"heralded_fraction": float(comp.weights @ comp.heralded) / eta_cond if eta_cond > 0 else 0.0})


def conditional_efficiency(scenario: Scenario, refine: int = 1, estimate_error: bool = False) -> Efficiency:
    """Conditional retrieval efficiency and its fiber-coupled value.

    With ``estimate_error`` the calculation is repeated on grids refined by
    two and the difference is reported as ``error``.
    """
    if scenario.read_pulse.peak_rabi_bar == 0.0:
        return Efficiency(0.0, 0.0, 0.0)
    w = conditional_flux(scenario, refine)
    err = float("nan")
    if estimate_error:
        w2 = conditional_flux(scenario, 2 * refine)
        err = abs(w2.eta_cond - w.eta_cond)
    for note in w.warnings:
        if "low-photon-number" in note:
            warnings.warn(note, LowPhotonNumberWarning, stacklevel=2)
    return Efficiency(w.eta_cond, w.total_efficiency, err, w.warnings)
