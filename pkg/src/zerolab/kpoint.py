"""Exact and empirical k-point intensities of the zero process.

The exact route pins the joint Gaussian of (F(z_i), F'(z_i)) through the
kernel E F(z) conj(F(w)) = exp(z conj(w)) and its mixed derivatives, then
integrates out the Kac-Rice density in closed form: conditionally on
F(z_i) = 0 the derivatives stay jointly Gaussian, and the |F'|^2 moments
reduce by the complex Wick rule to a k x k permanent.  Everything is
correlation-normalized per point, so configurations far from the origin do
not overflow.  Supported exactly for k <= 3; beyond that the permanent
bookkeeping grows combinatorially and only the empirical estimator remains.

The convention is anchored so that rho(k=1) = 1/pi, the constant intensity
forced by E n(r, h) = (r^2/pi) int h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import GaussianStream
from .gef import sample_gef
from .statutil import wilson_interval
from .zeros import _polyline_winding, _WindingFailed

COND_LIMIT = 1e12


class IllConditionedError(RuntimeError):
    """Configuration too close to coincident for the exact formula."""

    def __init__(self, cond):
        super().__init__(f"jet covariance condition number {cond:.3e} exceeds {COND_LIMIT:.0e}")
        self.cond = cond


class GaussianTaylorKernel:
    """Covariance kernel sum_n c_n^2 (z conj(w))^n of a Gaussian Taylor series.

    `coeffs` are the deterministic c_n; the GEF is c_n = 1/sqrt(n!), for which
    the closed forms below shortcut the series.  Nondegeneracy for k-point
    functions needs c_0, ..., c_{2k-1} != 0.
    """

    def __init__(self, coeffs=None):
        self.coeffs = None if coeffs is None else np.asarray(coeffs, dtype=float)

    def check_nondegenerate(self, k: int):
        if self.coeffs is None:
            return
        need = 2 * k
        if len(self.coeffs) < need or np.any(self.coeffs[:need] == 0.0):
            raise ValueError(f"kernel is degenerate: needs c_0..c_{need - 1} nonzero")

    def blocks(self, z: np.ndarray):
        """(K, K_z, K_zw) evaluated pairwise: K(z_i, z_j) etc."""
        zi = z[:, None]
        wj = np.conj(z[None, :])
        if self.coeffs is None:
            e = np.exp(zi * wj)
            return e, wj * e, (1.0 + zi * wj) * e
        n = np.arange(len(self.coeffs), dtype=float)
        c2 = self.coeffs**2
        u = zi * wj
        k = np.zeros_like(u)
        kz = np.zeros_like(u)
        kzw = np.zeros_like(u)
        for ni, c in zip(n, c2):
            un1 = u ** (ni - 1) if ni >= 1 else np.zeros_like(u)
            k += c * u**ni
            kz += c * ni * un1 * wj
            kzw += c * ni * ni * un1
        return k, kz, kzw


GEF_KERNEL = GaussianTaylorKernel()


@dataclass
class JetCovariance:
    """Raw covariance matrix of (F(z_1), F'(z_1), ..., F(z_k), F'(z_k))."""

    points: np.ndarray
    gamma: np.ndarray       # 2k x 2k complex Hermitian

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.gamma).real)


def jet_covariance(points, kernel: GaussianTaylorKernel = GEF_KERNEL) -> JetCovariance:
    z = np.asarray(points, dtype=complex).ravel()
    k = len(z)
    kk, kz, kzw = kernel.blocks(z)
    gamma = np.empty((2 * k, 2 * k), dtype=complex)
    gamma[0::2, 0::2] = kk
    gamma[1::2, 0::2] = kz
    gamma[0::2, 1::2] = np.conj(kz).T
    gamma[1::2, 1::2] = kzw
    return JetCovariance(points=z, gamma=gamma)


def _permanent(sigma: np.ndarray) -> float:
    """Permanent of a small Hermitian PSD matrix (k <= 3)."""
    k = sigma.shape[0]
    if k == 1:
        return float(sigma[0, 0].real)
    if k == 2:
        return float((sigma[0, 0] * sigma[1, 1]).real + abs(sigma[0, 1]) ** 2)
    if k == 3:
        d = (sigma[0, 0] * sigma[1, 1] * sigma[2, 2]).real
        d += (sigma[0, 0] * abs(sigma[1, 2]) ** 2).real
        d += (sigma[1, 1] * abs(sigma[0, 2]) ** 2).real
        d += (sigma[2, 2] * abs(sigma[0, 1]) ** 2).real
        d += 2.0 * (sigma[0, 1] * sigma[1, 2] * np.conj(sigma[0, 2])).real
        return float(d)
    raise NotImplementedError("exact k-point function supported only for k <= 3")


def rho_exact(points, kernel: GaussianTaylorKernel = GEF_KERNEL) -> float:
    """k-point intensity of the zero set at pairwise distinct points, k <= 3."""
    z = np.asarray(points, dtype=complex).ravel()
    k = len(z)
    if k > 3:
        raise NotImplementedError("exact k-point function supported only for k <= 3")
    kernel.check_nondegenerate(k)
    diff = np.abs(z[:, None] - z[None, :])
    if np.any(diff[~np.eye(k, dtype=bool)] == 0.0):
        raise ValueError("points must be pairwise distinct")

    kk, kz, kzw = kernel.blocks(z)
    norm = np.sqrt(np.abs(np.diag(kk)))       # per-point scale, e^{|z|^2/2} for the GEF
    scale = np.outer(norm, norm)
    a = kk / scale                            # E G conj(G)
    b = kz / scale                            # E H conj(G)
    c = kzw / scale                           # E H conj(H)

    cond = np.linalg.cond(a)
    if cond > COND_LIMIT:
        raise IllConditionedError(cond)
    # Schur complement: covariance of derivatives conditioned on F(z_i) = 0
    sol = np.linalg.solve(a, np.conj(b).T)
    sigma = c - b @ sol
    det_a = np.linalg.det(a).real
    return _permanent(sigma) / (math.pi**k * det_a)


# -- empirical estimator ---------------------------------------------------------


def _disk_has_zero(f, center: complex, eps: float) -> bool:
    phi = np.exp(2j * math.pi * np.arange(24) / 24)
    for blow in (1.0, 1.0 + 3e-4, 1.0 - 7e-4):
        try:
            return _polyline_winding(f, center + eps * blow * phi) > 0
        except _WindingFailed:
            continue
    return True  # a zero numerically on the boundary counts as a hit


@dataclass
class EmpiricalRho:
    estimate: float
    ci_lo: float
    ci_hi: float
    p_hat: float
    hits: int
    trials: int
    eps: float
    bias_budget: float


def rho_empirical(points, eps: float, trials: int, stream: GaussianStream,
                  tol: float = 1e-6) -> EmpiricalRho:
    """p_eps / (pi eps^2)^k where p_eps = P{every eps-disk holds a zero}.

    Consistent as eps -> 0; at finite eps the relative bias is O(eps^2), and
    the reported bias budget uses 4 * eps^2 as a generous coefficient.
    """
    z = np.asarray(points, dtype=complex).ravel()
    k = len(z)
    if k >= 2:
        diff = np.abs(z[:, None] - z[None, :])
        min_gap = diff[~np.eye(k, dtype=bool)].min()
        if eps > 0.5 * min_gap:
            raise ValueError(f"eps={eps} risks bias: exceeds half the minimal gap {min_gap:.3f}")
    r_need = float(np.max(np.abs(z))) + eps + 0.3
    hits = 0
    for t in range(trials):
        f = sample_gef(r_need, tol, stream.substream(t + 1))
        if all(_disk_has_zero(f, c, eps) for c in z):
            hits += 1
    p, lo, hi = wilson_interval(hits, trials)
    cell = (math.pi * eps * eps) ** k
    return EmpiricalRho(estimate=p / cell, ci_lo=lo / cell, ci_hi=hi / cell,
                        p_hat=p, hits=hits, trials=trials, eps=eps,
                        bias_budget=4.0 * eps * eps)


# -- product envelope -------------------------------------------------------------


def repulsion_envelope(t):
    """l(t) = min(t^2, 1), the pairwise factor in the k-point envelope."""
    t = np.asarray(t, dtype=float)
    out = np.minimum(t * t, 1.0)
    return out if out.ndim else float(out)


@dataclass
class EnvelopeReport:
    lower: float
    value: float
    upper: float
    product: float
    ok: bool


def envelope_check(points, constants: dict | None = None) -> EnvelopeReport:
    """rho_exact against C_k^-1 prod l(|z_i - z_j|) <= rho <= C_k prod l(...).

    C_k are run-calibrated artifact constants (calibration.ENVELOPE_CK).
    """
    if constants is None:
        from .calibration import ENVELOPE_CK
        constants = ENVELOPE_CK
    z = np.asarray(points, dtype=complex).ravel()
    k = len(z)
    prod = 1.0
    for i in range(k):
        for j in range(i + 1, k):
            prod *= repulsion_envelope(abs(z[i] - z[j]))
    ck = constants[k]
    value = rho_exact(z)
    lower, upper = prod / ck, prod * ck
    return EnvelopeReport(lower=lower, value=value, upper=upper, product=prod,
                          ok=lower <= value <= upper)
