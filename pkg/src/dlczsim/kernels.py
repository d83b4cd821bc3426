"""Deterministic kernels of the write and read stages.

Write stage (retarded time ``t``, position ``z`` in ``[0, L]``)::

    chi(t)     = sqrt(d_w_bar gamma_es c / L) Omega_W(t) / Delta
    Gamma_S(t) = gamma_0 + gamma_es Omega_W^2 / Delta^2 - i Omega_W^2 / Delta
    Gamma(t)   = int_0^t Gamma_S,      g(t) = int_0^t chi^2

    H   = I0(2 sqrt(u)),  G_s = (dg / c) I1(2 sqrt u) / sqrt(u),  G_e = dz I1(2 sqrt u) / sqrt(u)
    with dg = g(t') - g(t''), dz = z' - z'', u = dg dz / c.

Writing ``G_s`` and ``G_e`` through ``I1(x)/(x/2)`` removes the 0/0 at
coincident arguments. The kernels are entire in ``u``; the internal
``*_signed`` helpers continue them to ``u < 0``, which product-integration
weights use beyond a causal cut.

Read stage::

    Delta_tau(t, t') = L / (d_r_bar gamma_eg c) int_{t'}^{t} Omega_R^2
    Delta_l(t, t')   = sqrt(2 L c Delta_tau / d_r_bar),   g^2 N = d_r_bar gamma_eg c / L

All cumulative pulse integrals come from the closed-form envelope energies,
so the tables are exact up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import Scenario
from .quadrature import PanelGrid, merge_edges
from .special import DomainError, bessel_i, i0_of_u, i1_ratio_of_u

RADICAND_TOL = -1e-12
SCALED_THRESHOLD = 30.0


class MonotonicityError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# kernel functions of the gain variable


def h_signed(u) -> np.ndarray:
    """``I0(2 sqrt u)`` for any real ``u``."""
    return i0_of_u(u)


def i1_ratio_signed(u) -> np.ndarray:
    """``I1(x) / (x/2)`` with ``x = 2 sqrt u`` for any real ``u``."""
    return i1_ratio_of_u(u)


def _radicand(dg, dz, c) -> np.ndarray:
    u = np.asarray(dg, dtype=float) * np.asarray(dz, dtype=float) / c
    if np.any(u < RADICAND_TOL) or np.any(np.asarray(dg) < RADICAND_TOL) or np.any(np.asarray(dz) < RADICAND_TOL):
        raise DomainError("kernel arguments need g(t') >= g(t'') and z' >= z''")
    return np.maximum(u, 0.0)


def _i0_checked(u: np.ndarray, threshold: float) -> np.ndarray:
    x = 2.0 * np.sqrt(u)
    big = x > threshold
    out = np.empty_like(x)
    if (~big).any():
        out[~big] = i0_of_u(u[~big])
    if big.any():
        out[big] = bessel_i(0, x[big], scaled=True) * np.exp(x[big])
    return out


# ---------------------------------------------------------------------------
# write stage


@dataclass(frozen=True)
class WriteKernelContext:
    """Write-stage coefficients and cumulative tables.

    ``time`` and ``medium`` are the panel grids used for every write-stage
    integral; ``Gamma_nodes``/``g_nodes`` hold the cumulative tables at the
    time nodes and ``Gamma_xi``/``g_xi`` their values at the write-window end.
    """

    scenario: Scenario
    time: PanelGrid
    medium: PanelGrid
    chi_scale: float
    gamma_rate: float
    Gamma_coeff: complex
    g_coeff: float
    chi_nodes: np.ndarray
    Gamma_nodes: np.ndarray
    g_nodes: np.ndarray
    gamma_s_nodes: np.ndarray
    Gamma_xi: complex
    g_xi: float

    @property
    def L(self) -> float:
        return self.scenario.ensemble.length_L

    @property
    def c(self) -> float:
        return self.scenario.ensemble.c

    @property
    def xi(self) -> float:
        return self.scenario.xi

    def chi(self, t) -> np.ndarray:
        return self.chi_scale * self.scenario.write_rabi(t)

    def gamma_s(self, t) -> np.ndarray:
        """Real part of ``Gamma_S``: spin decay including optical pumping by the write pulse."""
        ens = self.scenario.ensemble
        return self.gamma_rate + ens.gamma_es * self.scenario.write_rabi(t) ** 2 / ens.delta ** 2

    def Gamma_S(self, t) -> np.ndarray:
        ens = self.scenario.ensemble
        om2 = self.scenario.write_rabi(t) ** 2
        return self.gamma_rate + ens.gamma_es * om2 / ens.delta ** 2 - 1j * om2 / ens.delta

    def Gamma(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.gamma_rate * t + self.Gamma_coeff * self.scenario.write_energy(t)

    def g(self, t) -> np.ndarray:
        return self.g_coeff * self.scenario.write_energy(np.asarray(t, dtype=float))

    def gain(self) -> float:
        """Largest gain variable ``g(xi) L / c`` reached in the medium."""
        return self.g_xi * self.L / self.c


def build_write_context(scenario: Scenario, refine: int = 1) -> WriteKernelContext:
    """Tabulate the write-stage coefficients on the write and medium grids."""
    ens = scenario.ensemble
    gr = scenario.grids
    n_t = max(1, gr.write_points // gr.order) * refine
    t_edges = merge_edges(np.linspace(0.0, scenario.xi, n_t + 1), scenario.write_breakpoints())
    time = PanelGrid(t_edges, gr.order)
    n_z = max(1, gr.medium_points // gr.order) * refine
    medium = PanelGrid(np.linspace(0.0, ens.length_L, n_z + 1), gr.order)

    chi_scale = math.sqrt(ens.d_w_bar * ens.gamma_es * ens.c / ens.length_L) / ens.delta
    gamma_rate = ens.write_spin_rate
    Gamma_coeff = complex(ens.gamma_es / ens.delta ** 2, -1.0 / ens.delta)
    g_coeff = chi_scale ** 2

    energy = scenario.write_energy(time.nodes)
    Gamma_nodes = gamma_rate * time.nodes + Gamma_coeff * energy
    g_nodes = g_coeff * energy
    e_xi = float(scenario.write_energy(scenario.xi))
    ctx = WriteKernelContext(
        scenario=scenario, time=time, medium=medium, chi_scale=chi_scale, gamma_rate=gamma_rate,
        Gamma_coeff=Gamma_coeff, g_coeff=g_coeff,
        chi_nodes=chi_scale * scenario.write_rabi(time.nodes),
        Gamma_nodes=Gamma_nodes, g_nodes=g_nodes,
        gamma_s_nodes=gamma_rate + ens.gamma_es * scenario.write_rabi(time.nodes) ** 2 / ens.delta ** 2,
        Gamma_xi=gamma_rate * scenario.xi + Gamma_coeff * e_xi, g_xi=g_coeff * e_xi,
    )
    for arr in (ctx.chi_nodes, ctx.Gamma_nodes, ctx.g_nodes, ctx.gamma_s_nodes):
        arr.setflags(write=False)
    _check_monotone(np.concatenate([[0.0], Gamma_nodes.real, [ctx.Gamma_xi.real]]), "Re Gamma")
    _check_monotone(np.concatenate([[0.0], g_nodes, [ctx.g_xi]]), "g")
    return ctx


def _check_monotone(values: np.ndarray, name: str) -> None:
    d = np.diff(values)
    scale = max(float(np.max(np.abs(values))), 1e-300)
    if np.any(d < -1e-12 * scale):
        raise MonotonicityError(f"cumulative table {name} is not nondecreasing")


def kernel_H(ctx: WriteKernelContext, z1, z2, t1, t2, threshold: float = SCALED_THRESHOLD) -> np.ndarray:
    """``I0(2 sqrt([g(t1) - g(t2)] (z1 - z2) / c))``.

    Raises
    ------
    DomainError
        If the radicand is negative beyond -1e-12.
    """
    dg = ctx.g(t1) - ctx.g(t2)
    u = _radicand(dg, np.asarray(z1, dtype=float) - np.asarray(z2, dtype=float), ctx.c)
    out = _i0_checked(np.atleast_1d(u), threshold)
    return out.reshape(np.shape(u)) if np.ndim(u) else float(out[0])


def kernel_Gs(ctx: WriteKernelContext, z1, z2, t1, t2) -> np.ndarray:
    """``sqrt(dg / (c dz)) I1(2 sqrt(dg dz / c))``; tends to ``dg / c`` as ``dz -> 0``."""
    dg = np.asarray(ctx.g(t1) - ctx.g(t2), dtype=float)
    u = _radicand(dg, np.asarray(z1, dtype=float) - np.asarray(z2, dtype=float), ctx.c)
    out = np.maximum(dg, 0.0) / ctx.c * i1_ratio_of_u(np.atleast_1d(u)).reshape(np.shape(u))
    return out if np.ndim(out) else float(out)


def kernel_Ge(ctx: WriteKernelContext, z1, z2, t1, t2) -> np.ndarray:
    """``sqrt(c dz / dg) I1(2 sqrt(dg dz / c))``; tends to ``dz`` as ``dg -> 0``."""
    dg = np.asarray(ctx.g(t1) - ctx.g(t2), dtype=float)
    dz = np.asarray(z1, dtype=float) - np.asarray(z2, dtype=float)
    u = _radicand(dg, dz, ctx.c)
    out = np.maximum(dz, 0.0) * i1_ratio_of_u(np.atleast_1d(u)).reshape(np.shape(u))
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# read stage


@dataclass(frozen=True)
class ReadKernelContext:
    """Read-stage coefficients.

    ``time`` is the panel grid on which the read field is sampled; its edges
    follow the read sweep ``c Delta_tau(t, xi)`` so that fast retrieval at
    high power is resolved. ``sweep_nodes`` holds that sweep at the nodes.
    """

    scenario: Scenario
    time: PanelGrid
    g2N: float
    tau_coeff: float
    sweep_nodes: np.ndarray

    @property
    def L(self) -> float:
        return self.scenario.ensemble.length_L

    def delta_tau(self, t, t_prime) -> np.ndarray:
        sc = self.scenario
        return self.tau_coeff * (sc.read_energy(t) - sc.read_energy(t_prime))

    def delta_l(self, t, t_prime) -> np.ndarray:
        ens = self.scenario.ensemble
        dt = np.maximum(self.delta_tau(t, t_prime), 0.0)
        return np.sqrt(2.0 * ens.length_L * ens.c * dt / ens.d_r_bar)

    def sweep(self, t) -> np.ndarray:
        """``c Delta_tau(t, xi)``: distance the retrieval window has travelled."""
        return self.scenario.ensemble.c * self.delta_tau(t, self.scenario.xi)

    @property
    def total_sweep(self) -> float:
        return float(self.sweep(self.scenario.read_end))


def sweep_levels(L: float, d_r_bar: float, density: int) -> np.ndarray:
    """Sweep values at which read-time panels are split.

    Geometric below ``L`` (the retrieval kernel is narrow there), then
    linear up to ``4 L`` and coarser until the retrieval tail has decayed,
    which happens on a scale ``4 L / d_r_bar``.
    """
    n_geo = max(4, density)
    geo = L * np.geomspace(1e-4, 1.0, n_geo)
    lin = L * np.linspace(1.0, 4.0, max(2, int(round(1.2 * density))) + 1)[1:]
    stop = L * (2.0 + 60.0 / d_r_bar)
    n_tail = max(2, int(math.ceil(density * (stop / L - 4.0) / 10.0)))
    tail = np.linspace(4.0 * L, max(stop, 5.0 * L), n_tail + 1)[1:]
    return np.concatenate([geo, lin, tail])


def build_read_context(scenario: Scenario, refine: int = 1) -> ReadKernelContext:
    """Read-time grid and coefficients for ``scenario``."""
    ens = scenario.ensemble
    gr = scenario.grids
    tau_coeff = ens.length_L / (ens.d_r_bar * ens.gamma_eg * ens.c)
    g2N = ens.d_r_bar * ens.gamma_eg * ens.c / ens.length_L
    t0, t1 = scenario.read_start, scenario.read_end
    n_uniform = max(1, gr.read_points // gr.order) * refine
    edges = [np.linspace(t0, t1, n_uniform + 1), scenario.read_breakpoints()]

    total = float(ens.c * tau_coeff * (scenario.read_energy(t1) - scenario.read_energy(scenario.xi)))
    if total > 0:
        levels = sweep_levels(ens.length_L, ens.d_r_bar, max(1, gr.sweep_points // 32) * refine)
        levels = levels[levels < total]
        if levels.size:
            # invert the monotone sweep on a fine table, refined by bisection
            tt = np.linspace(t0, t1, 40001)
            yy = ens.c * tau_coeff * (scenario.read_energy(tt) - scenario.read_energy(scenario.xi))
            k = np.clip(np.searchsorted(yy, levels), 1, tt.size - 1)
            lo, hi = tt[k - 1].copy(), tt[k].copy()
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                ym = ens.c * tau_coeff * (scenario.read_energy(mid) - scenario.read_energy(scenario.xi))
                below = ym < levels
                lo = np.where(below, mid, lo)
                hi = np.where(below, hi, mid)
            edges.append(0.5 * (lo + hi))
    time = PanelGrid(merge_edges(*edges, rel_gap=1e-7), gr.order)
    sweep = ens.c * tau_coeff * (scenario.read_energy(time.nodes) - scenario.read_energy(scenario.xi))
    sweep.setflags(write=False)
    return ReadKernelContext(scenario=scenario, time=time, g2N=g2N, tau_coeff=tau_coeff, sweep_nodes=sweep)

