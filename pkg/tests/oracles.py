"""Independent reference implementations used by the test suite."""

from __future__ import annotations

import itertools
import math

import mpmath
import numpy as np

from dlczsim.correlators import DiscreteAxis, FieldExpansion, InputKind, InputSpace, Term


# ---------------------------------------------------------------------------
# photon counting on a truncated Fock space


def fock_click_table(m, cutoff: int = 14, dps: int = 40):
    """Click table ``[w][r1][r2]`` by enumerating Fock numbers per mode and every multinomial read split."""
    with mpmath.workdps(dps):
        q = mpmath.mpf(m.p) / (m.K * (1 - mpmath.mpf(m.p)) + m.p)
        a = mpmath.mpf(m.split) * m.eta_r1
        b = (1 - mpmath.mpf(m.split)) * m.eta_r2
        lost = 1 - a - b
        table = [[[mpmath.mpf(0)] * 2 for _ in range(2)] for _ in range(2)]
        for ns in itertools.product(range(cutoff + 1), repeat=m.K):
            prob = mpmath.fprod((1 - q) * q ** n for n in ns)
            n = sum(ns)
            no_w = (1 - mpmath.mpf(m.dark_w)) * (1 - mpmath.mpf(m.eta_w)) ** n
            for k1 in range(n + 1):
                for k2 in range(n - k1 + 1):
                    k0 = n - k1 - k2
                    split = mpmath.factorial(n) / (mpmath.factorial(k1) * mpmath.factorial(k2)
                                                   * mpmath.factorial(k0))
                    split *= a ** k1 * b ** k2 * lost ** k0
                    no1 = (1 - mpmath.mpf(m.dark_r1)) if k1 == 0 else mpmath.mpf(0)
                    no2 = (1 - mpmath.mpf(m.dark_r2)) if k2 == 0 else mpmath.mpf(0)
                    for w, r1, r2 in itertools.product((0, 1), repeat=3):
                        pw = (1 - no_w) if w else no_w
                        p1 = (1 - no1) if r1 else no1
                        p2 = (1 - no2) if r2 else no2
                        table[w][r1][r2] += prob * split * pw * p1 * p2
        return table


def fock_g2(table, conditional: bool) -> float:
    def marg(w=None, r1=None, r2=None):
        tot = mpmath.mpf(0)
        for i, j, k in itertools.product((0, 1), repeat=3):
            if (w is None or i == w) and (r1 is None or j == r1) and (r2 is None or k == r2):
                tot += table[i][j][k]
        return tot

    if conditional:
        return float(marg(1, 1, 1) * marg(w=1) / (marg(1, 1, None) * marg(1, None, 1)))
    return float(marg(None, 1, 1) / (marg(None, 1, None) * marg(None, None, 1)))


# ---------------------------------------------------------------------------
# Gaussian moments


def linear_field(space: InputSpace, name: str, ann: np.ndarray, cre: np.ndarray) -> FieldExpansion:
    """``X = sum_k ann_k a_k + cre_k a_k^+`` for modes with ``<a_k a_l^+> = rho_k delta_kl``."""
    return FieldExpansion(name, 1, (Term(f"{name}.a", space, False, ann[None, :]),
                                    Term(f"{name}.c", space, True, cre[None, :])))


def random_linear_fields(rng, n_modes: int):
    space = InputSpace(InputKind.VACUUM_WRITE, (DiscreteAxis(n_modes),), rng.uniform(0.5, 2.0, n_modes))
    coeffs = [(rng.normal(size=n_modes) + 1j * rng.normal(size=n_modes),
               rng.normal(size=n_modes) + 1j * rng.normal(size=n_modes)) for _ in range(4)]
    return space, [linear_field(space, "abcd"[i], *coeffs[i]) for i in range(4)], coeffs


def isserlis(cov: np.ndarray) -> complex:
    """Direct 4x4 formula from the ordered two-point matrix ``cov[i, j] = <X_i X_j>`` (i < j)."""
    return cov[0, 1] * cov[2, 3] + cov[0, 2] * cov[1, 3] + cov[0, 3] * cov[1, 2]


def fock_annihilators(n_modes: int, cutoff: int) -> list[np.ndarray]:
    a1 = np.diag(np.sqrt(np.arange(1, cutoff)), 1)
    eye = np.eye(cutoff)
    ops = []
    for k in range(n_modes):
        out = np.ones((1, 1))
        for j in range(n_modes):
            out = np.kron(out, a1 if j == k else eye)
        ops.append(out)
    return ops


def fock_field_matrices(coeffs, rho, cutoff: int = 5) -> list[np.ndarray]:
    ops = fock_annihilators(len(rho), cutoff)
    return [sum(ann[k] * math.sqrt(rho[k]) * ops[k] + cre[k] * math.sqrt(rho[k]) * ops[k].T
                for k in range(len(rho))) for ann, cre in coeffs]


# ---------------------------------------------------------------------------
# special functions


def bessel_series(n: int, x: float, dps: int = 50) -> float:
    """``I_n(x)`` from its power series summed in high precision."""
    with mpmath.workdps(dps):
        x = mpmath.mpf(x)
        term = (x / 2) ** n / mpmath.factorial(n)
        total = term
        k = 0
        while True:
            k += 1
            term *= (x / 2) ** 2 / (k * (k + n))
            total += term
            if abs(term) < mpmath.mpf(10) ** (-dps + 5) * abs(total):
                return float(total)
