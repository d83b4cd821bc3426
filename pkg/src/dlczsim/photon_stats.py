"""Photon-counting statistics of the write/read pair.

The write photon and the spin wave (hence the retrieved read photon) are in
a two-mode squeezed vacuum,

    |psi> = sqrt(1 - p) sum_n p^(n/2) |n>_w |n>_r,

with ``K`` independent identical mode pairs for multimode emission. The
write arm ends on one bucket detector; the read arm is split by a beam
splitter onto two bucket detectors ``r1`` and ``r2``. A bucket detector
stays dark with probability ``(1 - d) (1 - eta)^n`` for ``n`` incident
photons, where ``d`` is its dark-count probability per gate.

Click statistics are computed exactly on the truncated Fock space. Given the
total pair number ``N`` the write and read arms are independent, so the
``2^3`` outcome table is a single sum over ``N`` of products of per-arm
click probabilities; the read-arm coincidence term is built from ``expm1``
complements so that it keeps full relative accuracy at low efficiency.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

DETECTORS = ("w", "r1", "r2")
TAIL_TOL = 1e-12
MAX_N = 100_000


class TruncationError(ValueError):
    """The Fock truncation leaves more than ``TAIL_TOL`` of the distribution out."""

    def __init__(self, n_max: int, suggested: int, tail: float):
        self.n_max = n_max
        self.suggested = suggested
        self.tail = tail
        super().__init__(f"Fock truncation n_max={n_max} leaves tail mass {tail:.3g} >= {TAIL_TOL:g}; "
                         f"use n_max >= {suggested}")


class DegenerateRatioError(ZeroDivisionError):
    pass


class NegativeEfficiencyWarning(UserWarning):
    pass


def dark_probability(rate: float, gate_width: float) -> float:
    """Probability of at least one dark count in a gate, ``1 - exp(-rate * gate)``."""
    if rate < 0 or gate_width < 0:
        raise ValueError("dark rate and gate width must be >= 0")
    return -math.expm1(-rate * gate_width)


def mode_probability(p: float, K: int) -> float:
    """Per-mode excitation ``q`` with ``K q / (1 - q) = p / (1 - p)``."""
    return p / (K * (1.0 - p) + p)


def required_n_max(q: float, tol: float = TAIL_TOL) -> int:
    """Smallest ``n_max`` with tail mass ``q^(n_max + 1) < tol``."""
    if q <= 0.0:
        return 0
    return max(0, int(math.floor(math.log(tol) / math.log(q))))


@dataclass(frozen=True)
class TmsvDetectorModel:
    """Two-mode squeezed vacuum with imperfect bucket detectors.

    Attributes
    ----------
    p : float
        Pair-excitation probability in ``[0, 1)`` of the single-mode model.
    K : int
        Number of independent mode pairs.
    n_max : int or None
        Fock truncation per mode. ``None`` picks a value whose neglected
        weight is below 1e-16 relative to the two-pair probability; an
        explicit value must at least meet the tail bound ``TAIL_TOL``.
    eta_w, eta_r1, eta_r2 : float
        Detection efficiencies including all transmission losses.
    dark_w, dark_r1, dark_r2 : float
        Dark-count probabilities per gate.
    split : float
        Fraction of the read light sent to ``r1``.
    """

    p: float
    K: int = 1
    n_max: int | None = None
    eta_w: float = 1.0
    eta_r1: float = 1.0
    eta_r2: float = 1.0
    dark_w: float = 0.0
    dark_r1: float = 0.0
    dark_r2: float = 0.0
    split: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"p must be in [0, 1), got {self.p!r}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be an integer >= 1, got {self.K!r}")
        for name in ("eta_w", "eta_r1", "eta_r2", "split"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v!r}")
        for name in ("dark_w", "dark_r1", "dark_r2"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {v!r}")
        need = required_n_max(self.q)
        if need > MAX_N:
            raise ValueError(f"p = {self.p!r} needs a Fock truncation above {MAX_N}; p is too close to 1")
        if self.n_max is None:
            # g2 is a ratio of tiny multi-pair probabilities, so the default
            # truncation also bounds their relative error, not just the tail mass
            object.__setattr__(self, "n_max", max(4, need, required_n_max(self.q, 1e-16) + 2))
        elif self.n_max < need:
            raise TruncationError(self.n_max, need, self.q ** (self.n_max + 1))

    @classmethod
    def symmetric(cls, p: float, K: int = 1, eta_w: float = 1.0, eta_r: float = 1.0,
                  dark_w: float = 0.0, dark_r: float = 0.0, **kwargs) -> "TmsvDetectorModel":
        """Both read detectors identical."""
        return cls(p, K, eta_w=eta_w, eta_r1=eta_r, eta_r2=eta_r, dark_w=dark_w,
                   dark_r1=dark_r, dark_r2=dark_r, **kwargs)

    @property
    def q(self) -> float:
        return mode_probability(self.p, self.K)

    @property
    def tail_mass(self) -> float:
        return self.q ** (self.n_max + 1)

    def photon_distribution(self) -> np.ndarray:
        """Per-mode pair-number distribution on ``0..n_max``, renormalised."""
        n = np.arange(self.n_max + 1)
        w = (1.0 - self.q) * self.q ** n
        return w / w.sum()

    def dark(self, det: str) -> float:
        return {"w": self.dark_w, "r1": self.dark_r1, "r2": self.dark_r2}[det]

    def swapped(self) -> "TmsvDetectorModel":
        """Exchange the roles of ``r1`` and ``r2``."""
        return replace(self, eta_r1=self.eta_r2, eta_r2=self.eta_r1, dark_r1=self.dark_r2,
                       dark_r2=self.dark_r1, split=1.0 - self.split)


@dataclass(frozen=True)
class CountProbabilities:
    """Joint click table ``table[w, r1, r2]`` (1 = click)."""

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float).reshape(2, 2, 2)
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def marginal(self, *clicks: str) -> float:
        """Probability that every listed detector clicks (others unconstrained)."""
        idx = [slice(None)] * 3
        for det in clicks:
            idx[DETECTORS.index(det)] = 1
        return float(self.table[tuple(idx)].sum())

    def as_dict(self) -> dict[str, float]:
        out = {}
        for bits in itertools.product((0, 1), repeat=3):
            key = "".join(d if b else "-" for d, b in zip(("w", "1", "2"), bits))
            out[key] = float(self.table[bits])
        return out


def total_photon_distribution(model: TmsvDetectorModel) -> np.ndarray:
    """Distribution of the total pair number over the ``K`` modes.

    The ``K``-fold convolution of the truncated, renormalised per-mode
    distribution; entry ``N`` is the probability of ``N`` pairs in total.
    """
    per_mode = model.photon_distribution()
    out = np.ones(1)
    for _ in range(model.K):
        out = np.convolve(out, per_mode)
    return out


def _read_photon_table(model: TmsvDetectorModel, n: np.ndarray) -> np.ndarray:
    """``P(photon reaches r1 detector?, r2 detector? | n read photons)``, shape (2, 2, n).

    Every photon independently ends in ``r1`` (probability ``a``), ``r2``
    (``b``) or is lost. The both-reached entry is formed from ``expm1``
    complements so that it keeps full relative accuracy at low efficiency.
    """
    a = model.split * model.eta_r1
    b = (1.0 - model.split) * model.eta_r2
    nf = n.astype(float)

    def none_of(x):  # (1 - x)^n
        return np.exp(nf * np.log1p(-x)) if x < 1.0 else (n == 0).astype(float)

    def some_of(x):  # 1 - (1 - x)^n
        return -np.expm1(nf * np.log1p(-x)) if x < 1.0 else (n > 0).astype(float)

    out = np.empty((2, 2, n.size))
    out[0, 0] = none_of(a + b)
    out[1, 0] = none_of(b) - out[0, 0]
    out[0, 1] = none_of(a) - out[0, 0]
    both = some_of(a) + some_of(b) - some_of(a + b)
    out[1, 1] = np.where(n >= 2, np.maximum(both, 0.0), 0.0)
    return out


def click_probabilities(model: TmsvDetectorModel) -> CountProbabilities:
    """Exact (to truncation) joint click probabilities of ``w``, ``r1``, ``r2``.

    Conditioned on ``N`` pairs the write and read arms are independent; a
    detector clicks if a photon reaches it or, failing that, on a dark count.
    """
    dist = total_photon_distribution(model)
    n = np.arange(dist.size)
    w_photon = np.empty((2, n.size))
    if model.eta_w < 1.0:
        w_photon[0] = np.exp(n * math.log1p(-model.eta_w))
        w_photon[1] = -np.expm1(n * math.log1p(-model.eta_w))
    else:
        w_photon[0] = (n == 0)
        w_photon[1] = (n > 0)
    r_photon = _read_photon_table(model, n)

    def final(d: float) -> np.ndarray:  # T[final click, photon click]
        return np.array([[1.0 - d, 0.0], [d, 1.0]])

    tw, t1, t2 = final(model.dark_w), final(model.dark_r1), final(model.dark_r2)
    w_click = tw @ w_photon                                   # (2, n)
    r_click = np.einsum("ia,jb,abn->ijn", t1, t2, r_photon)   # (2, 2, n)
    table = np.einsum("n,in,jkn->ijk", dist, w_click, r_click)
    return CountProbabilities(table)


def _ratio(num: float, den: float, what: str) -> float:
    if den <= 0.0:
        raise DegenerateRatioError(f"{what}: denominator is zero")
    return num / den


def g2_conditional(model: TmsvDetectorModel) -> float:
    """Heralded autocorrelation ``p(r1, r2 | w) / (p(r1 | w) p(r2 | w))``."""
    c = click_probabilities(model)
    pw = c.marginal("w")
    if pw <= 0.0:
        raise DegenerateRatioError("write detector never clicks")
    p1 = c.marginal("w", "r1") / pw
    p2 = c.marginal("w", "r2") / pw
    return _ratio(c.marginal("w", "r1", "r2") / pw, p1 * p2, "g2_conditional")


def g2_unconditional(model: TmsvDetectorModel) -> float:
    """Read-arm autocorrelation ``p(r1, r2) / (p(r1) p(r2))`` ignoring the write detector."""
    c = click_probabilities(model)
    return _ratio(c.marginal("r1", "r2"), c.marginal("r1") * c.marginal("r2"), "g2_unconditional")


def raw_retrieval_efficiency(p_wr: float, p_wnr: float, p_w: float) -> float:
    """``(p_wr - p_wnr) / p_w``; negative values are returned with a warning."""
    for name, v in (("p_wr", p_wr), ("p_wnr", p_wnr), ("p_w", p_w)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {v!r}")
    if p_w == 0.0:
        raise DegenerateRatioError("p_w is zero")
    eta = (p_wr - p_wnr) / p_w
    if eta < 0.0:
        warnings.warn(f"raw retrieval efficiency {eta:.3g} < 0: noise exceeds signal",
                      NegativeEfficiencyWarning, stacklevel=2)
    return eta


# ---------------------------------------------------------------------------
# scans and export


@dataclass(frozen=True)
class G2Scan:
    parameter: str
    values: np.ndarray
    g2_cond: np.ndarray
    g2_uncond: np.ndarray
    p_w: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([self.parameter, "g2_conditional", "g2_unconditional", "p_w"])
        for row in zip(self.values, self.g2_cond, self.g2_uncond, self.p_w):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def scan_g2(base: TmsvDetectorModel, parameter: str, values: Iterable[float]) -> G2Scan:
    """Conditional and unconditional g2 with one model field varied."""
    vals = np.asarray(list(values), dtype=float)
    gc, gu, pw = [], [], []
    for v in vals:
        changes = {parameter: int(v) if parameter in ("K", "n_max") else float(v)}
        if parameter in ("p", "K"):
            changes["n_max"] = None  # re-derive the truncation for the new mode occupation
        m = replace(base, **changes)
        gc.append(g2_conditional(m))
        gu.append(g2_unconditional(m))
        pw.append(click_probabilities(m).marginal("w"))
    return G2Scan(parameter, vals, np.array(gc), np.array(gu), np.array(pw))


def gate_width_scan(base: TmsvDetectorModel, gate_widths: Sequence[float], dark_rate: float,
                    detectors: Sequence[str] = ("r1", "r2")) -> G2Scan:
    """g2 versus detection gate with dark probabilities ``1 - exp(-rate * gate)``.

    Only the listed detectors see the gate-dependent dark counts.
    """
    gates = np.asarray(gate_widths, dtype=float)
    gc, gu, pw = [], [], []
    for gate in gates:
        d = dark_probability(dark_rate, float(gate))
        m = replace(base, **{f"dark_{det}": d for det in detectors})
        gc.append(g2_conditional(m))
        gu.append(g2_unconditional(m))
        pw.append(click_probabilities(m).marginal("w"))
    return G2Scan("gate_width_s", gates, np.array(gc), np.array(gu), np.array(pw))


def p_for_herald_probability(p_w: float, eta_w: float, dark_w: float = 0.0, K: int = 1) -> float:
    """Pair probability ``p`` for which the write detector clicks with probability ``p_w``."""
    from scipy.optimize import brentq

    if not 0.0 < p_w < 1.0:
        raise ValueError("p_w must be in (0, 1)")

    def f(p):
        m = TmsvDetectorModel(p, K, eta_w=eta_w, eta_r1=0.0, eta_r2=0.0, dark_w=dark_w)
        return click_probabilities(m).marginal("w") - p_w

    if f(0.0) >= 0.0:
        raise ValueError("dark counts alone exceed the requested herald probability")
    hi = 0.5
    while f(hi) < 0.0:
        if hi > 0.999:
            raise ValueError("herald probability not reachable with these detector settings")
        hi = 1.0 - 0.25 * (1.0 - hi)
    return brentq(f, 0.0, hi, xtol=1e-15, rtol=1e-13)
