"""The planar Gaussian Entire Function model and its comparison processes.

The random entire function is F(z) = sum_n zeta_n z^n / sqrt(n!) with i.i.d.
standard complex Gaussian zeta_n, so E F(z) conj(F(w)) = exp(z*conj(w)) and
E|F(z)|^2 = exp(|z|^2).  A sample is stored as a certified truncation: the
order N is chosen so that, outside an event of probability <= tail_bound, the
neglected tail of the normalized field F*(z) = F(z) exp(-|z|^2/2) stays below
a fixed amplitude tolerance on the disk |z| <= r_max.

Also here: the Gaussian-perturbed lattice sqrt(pi)*Z^2 + zeta (the "toy model"
with matching mean intensity 1/pi) and the closed-form k-point intensity of
the limiting Ginibre determinantal process.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .rng import GaussianStream

MAX_DEGREE = 4000
TAIL_AMPLITUDE = 1e-9  # sup of the neglected normalized tail on the certified disk

INTENSITY = 1.0 / math.pi  # mean number of zeros per unit area


class ResourceLimitError(RuntimeError):
    """Requested truncation order exceeds the configured maximum degree."""


class DomainError(ValueError):
    """Query outside the certified validity radius."""


class ConfigurationError(ValueError):
    """Inconsistent window / parameter combination."""


def _coefficient_envelope(k: np.ndarray, tol: float) -> np.ndarray:
    # u_k with sum_k P{|zeta| > u_k} = sum_k (6 tol / pi^2) / k^2 <= tol
    return np.sqrt(np.log(np.pi**2 / (6.0 * tol)) + 2.0 * np.log(k))


def tail_envelope(order: int, r_max: float, tol: float, terms: int = 400) -> float:
    """Deterministic bound on sup_{|z|<=r_max} |tail| e^{-|z|^2/2}.

    Holds outside an event of probability <= tol (union bound over the
    per-coefficient envelope u_k applied to the neglected coefficients).
    """
    k = np.arange(1, terms + 1, dtype=float)
    n = order + k
    log_terms = (np.log(_coefficient_envelope(k, tol))
                 + n * math.log(r_max) - 0.5 * gammaln(n + 1.0) - 0.5 * r_max**2)
    return float(np.exp(log_terms).sum())


def truncation_order(r_max: float, tol: float, amplitude: float = TAIL_AMPLITUDE) -> int:
    """Smallest certified order: factorial decay makes the tail collapse just past e*r^2."""
    if not (r_max > 0.0):
        raise ValueError("r_max must be positive")
    if not (0.0 < tol < 1.0):
        raise ValueError("tol must lie in (0, 1)")
    n = int(math.ceil(math.e * r_max**2)) + 1
    if n > MAX_DEGREE:
        raise ResourceLimitError(f"truncation order {n} exceeds MAX_DEGREE={MAX_DEGREE}")
    while tail_envelope(n, r_max, tol) > amplitude:
        n += max(2, int(0.05 * n))
        if n > MAX_DEGREE:
            raise ResourceLimitError(f"truncation order {n} exceeds MAX_DEGREE={MAX_DEGREE}")
    return n


@dataclass
class TruncatedGEF:
    """Certified polynomial truncation of the Gaussian entire function.

    `zeta` holds the raw Gaussian coefficients; evaluation uses the radius-
    scaled basis B_n = zeta_n * r_max^n / sqrt(n!) with Horner in w = z/r_max,
    which stays representable far beyond where zeta_n/sqrt(n!) underflows.
    """

    zeta: np.ndarray          # complex coefficients zeta_n, len N+1
    order: int                # truncation order N
    r_max: float              # certified validity radius
    tail_bound: float         # probability the tail exceeds TAIL_AMPLITUDE on the disk
    scaled: np.ndarray = field(repr=False, default=None)  # B_n, filled in __post_init__

    def __post_init__(self):
        n = np.arange(self.order + 1, dtype=float)
        logs = n * math.log(self.r_max) - 0.5 * gammaln(n + 1.0)
        if logs.max() > 700.0:
            raise ResourceLimitError("r_max too large: scaled basis overflows")
        self.scaled = self.zeta * np.exp(logs)

    @property
    def coeffs(self) -> np.ndarray:
        """Taylor coefficients zeta_n / sqrt(n!); underflows to 0 past n ~ 300.

        For evaluation always go through `eval` (scaled basis); this view is
        for serialization and synthetic low-degree polynomials.
        """
        n = np.arange(self.order + 1, dtype=float)
        return self.zeta * np.exp(-0.5 * gammaln(n + 1.0))

    @classmethod
    def from_coeffs(cls, coeffs, r_max: float) -> "TruncatedGEF":
        """Build a synthetic sample from explicit Taylor coefficients c_n."""
        c = np.asarray(coeffs, dtype=complex)
        n = np.arange(len(c), dtype=float)
        zeta = c * np.exp(0.5 * gammaln(n + 1.0))
        return cls(zeta=zeta, order=len(c) - 1, r_max=float(r_max), tail_bound=0.0)

    def to_json_dict(self) -> dict:
        return {
            "order": self.order,
            "r_max": self.r_max,
            "tail_bound": self.tail_bound,
            "zeta": [[float(z.real), float(z.imag)] for z in self.zeta],
        }

    # -- evaluation ---------------------------------------------------------

    def _check_domain(self, z: np.ndarray):
        if np.any(np.abs(z) > self.r_max * (1.0 + 1e-12)):
            raise DomainError(f"evaluation outside certified disk |z| <= {self.r_max}")

    def scaled_to(self, radius: float) -> np.ndarray:
        """Basis rescaled to Horner variable w = z/radius (for root finding)."""
        n = np.arange(self.order + 1, dtype=float)
        return self.scaled * np.exp(n * math.log(radius / self.r_max))

    def eval(self, z, check: bool = True):
        """F(z) by Horner on the scaled basis."""
        z = np.asarray(z, dtype=complex)
        if check:
            self._check_domain(z)
        w = z / self.r_max
        acc = np.zeros_like(w)
        for b in self.scaled[::-1]:
            acc = acc * w + b
        return acc if acc.ndim else complex(acc)

    def eval_deriv(self, z, check: bool = True):
        """(F(z), F'(z)) in one Horner sweep."""
        z = np.asarray(z, dtype=complex)
        if check:
            self._check_domain(z)
        w = z / self.r_max
        acc = np.zeros_like(w)
        dacc = np.zeros_like(w)
        for b in self.scaled[::-1]:
            dacc = dacc * w + acc
            acc = acc * w + b
        return acc, dacc / self.r_max

    def eval_deriv2(self, z, check: bool = True):
        """(F, F', F'') for critical-point classification."""
        z = np.asarray(z, dtype=complex)
        if check:
            self._check_domain(z)
        w = z / self.r_max
        acc = np.zeros_like(w)
        dacc = np.zeros_like(w)
        ddacc = np.zeros_like(w)
        for b in self.scaled[::-1]:
            ddacc = ddacc * w + 2.0 * dacc
            dacc = dacc * w + acc
            acc = acc * w + b
        return acc, dacc / self.r_max, ddacc / self.r_max**2

    def eval_normalized(self, z, check: bool = True):
        """F*(z) = F(z) exp(-|z|^2/2); unit variance at every point."""
        z = np.asarray(z, dtype=complex)
        val = self.eval(z, check=check)
        return val * np.exp(-0.5 * np.abs(z) ** 2)


def sample_gef(r_max: float, tol: float, stream: GaussianStream) -> TruncatedGEF:
    """Draw a certified truncation of the GEF valid on |z| <= r_max."""
    n = truncation_order(r_max, tol)
    zeta = stream.draw_complex(n + 1)
    return TruncatedGEF(zeta=zeta, order=n, r_max=float(r_max), tail_bound=float(tol))


def translated_eval(f: TruncatedGEF, lam: complex, z, check: bool = True):
    """F_lambda(z) = F(z + lambda) exp(-z*conj(lambda) - |lambda|^2/2).

    Distributed like F itself; the shifted points must stay inside r_max.
    """
    z = np.asarray(z, dtype=complex)
    return f.eval(z + lam, check=check) * np.exp(-z * np.conj(lam) - 0.5 * abs(lam) ** 2)


# -- covariance kernels -----------------------------------------------------

class KernelId(enum.Enum):
    gef_raw = "gef_raw"
    gef_normalized = "gef_normalized"
    ginibre = "ginibre"


def covariance(kernel: KernelId, z: complex, w: complex) -> complex:
    """Closed-form covariance kernels of the model processes."""
    z = complex(z)
    w = complex(w)
    if kernel is KernelId.gef_raw:
        return np.exp(z * np.conj(w))
    if kernel is KernelId.gef_normalized:
        return np.exp(1j * (z * np.conj(w)).imag - 0.5 * abs(z - w) ** 2)
    if kernel is KernelId.ginibre:
        return np.exp(z * np.conj(w) - 0.5 * abs(z) ** 2 - 0.5 * abs(w) ** 2) / math.pi
    raise ValueError(f"unknown kernel {kernel!r}")


def translate_check(lam: complex, test_points, trials: int, stream: GaussianStream,
                    tol: float = 1e-9) -> dict:
    """Empirical covariance of F_lambda versus exp(z*conj(w)) over point pairs.

    Samples fresh GEFs internally (the validity radius is derived from the
    shifted points).  Reports the worst pair discrepancy in units of the
    Monte Carlo standard error.
    """
    pts = np.asarray(test_points, dtype=complex)
    reach = float(np.max(np.abs(pts + lam))) + 0.5
    vals = np.empty((trials, len(pts)), dtype=complex)
    for t in range(trials):
        f = sample_gef(reach, tol, stream.substream(stream.stream_id * trials + t + 1))
        vals[t] = translated_eval(f, lam, pts)
    max_disc = 0.0
    max_se = 0.0
    rows = []
    for i in range(len(pts)):
        for j in range(i, len(pts)):
            prod = vals[:, i] * np.conj(vals[:, j])
            emp = prod.mean()
            exact = covariance(KernelId.gef_raw, pts[i], pts[j])
            se = float(np.std(prod) / math.sqrt(trials))
            disc = abs(emp - exact)
            rows.append((pts[i], pts[j], emp, exact, disc, se))
            max_disc = max(max_disc, disc)
            max_se = max(max_se, se)
    return {
        "lambda": lam,
        "trials": trials,
        "pairs": rows,
        "max_abs_discrepancy": max_disc,
        "max_mc_se": max_se,
        "passed": all(d <= 4.0 * max(se, 1e-300) for *_, d, se in rows),
    }


# -- perturbed lattice ------------------------------------------------------

ROOT_PI = math.sqrt(math.pi)


@dataclass
class PerturbedLattice:
    """sqrt(pi)*Z^2 perturbed by i.i.d. radially symmetric displacements.

    The displacement law has P{|zeta| > t} = exp(-t^nu) exactly; nu =,2 is the
    standard complex Gaussian.  Mean intensity over large windows is 1/pi,
    matching the GEF zero process.
    """

    nu: float
    half_width: float          # window is the centered square [-W, W]^2
    sites: np.ndarray          # lattice points
    points: np.ndarray         # perturbed positions


def perturbation_quantile(nu: float, p_tail: float = 1e-9) -> float:
    """t with P{|zeta| > t} = p_tail for the exp(-t^nu) radial law."""
    return (-math.log(p_tail)) ** (1.0 / nu)


def lattice_sites(half_width: float) -> np.ndarray:
    m = int(math.floor(half_width / ROOT_PI))
    g = np.arange(-m, m + 1) * ROOT_PI
    xx, yy = np.meshgrid(g, g)
    return (xx + 1j * yy).ravel()


def sample_perturbed_lattice(nu: float, half_width: float, stream: GaussianStream,
                             zero_perturbation: bool = False) -> PerturbedLattice:
    if nu <= 0:
        raise ValueError("nu must be positive")
    sites = lattice_sites(half_width)
    if zero_perturbation:
        disp = np.zeros(len(sites), dtype=complex)
    elif nu == 2.0:
        disp = stream.draw_complex(len(sites))
    else:
        radii = (-np.log(np.clip(1.0 - stream.uniform(len(sites)), 1e-300, 1.0))) ** (1.0 / nu)
        angles = 2.0 * math.pi * stream.uniform(len(sites))
        disp = radii * np.exp(1j * angles)
    return PerturbedLattice(nu=nu, half_width=float(half_width), sites=sites,
                            points=sites + disp)


def count_nv(lattice: PerturbedLattice, r: float) -> int:
    """Number of perturbed lattice points inside the disk of radius r."""
    pad = perturbation_quantile(lattice.nu)
    if r + pad > lattice.half_width:
        raise ConfigurationError(
            f"window half-width {lattice.half_width} too small for r={r} "
            f"(needs >= {r + pad:.2f} to cover the 1-1e-9 perturbation quantile)")
    return int(np.count_nonzero(np.abs(lattice.points) <= r))


# -- limiting Ginibre intensities -------------------------------------------

def ginibre_rho(points) -> float:
    """Exact k-point intensity of the limiting Ginibre process.

    rho(z_1..z_k) = pi^{-k} exp(-sum|z_i|^2) det||exp(z_i conj(z_j))||.  The
    Gaussian factors are folded into the determinant rows so every matrix
    entry has modulus exp(-|z_i - z_j|^2/2) <= 1 (no overflow at |z| >~ 6).
    Coincident points are degenerate: the determinant vanishes and 0.0 is
    returned without forming the matrix.
    """
    z = np.asarray(points, dtype=complex).ravel()
    k = len(z)
    if k == 0:
        raise ValueError("need at least one point")
    diff = np.abs(z[:, None] - z[None, :])
    if np.any(diff[~np.eye(k, dtype=bool)] == 0.0):
        return 0.0
    a2 = np.abs(z) ** 2
    m = np.exp(z[:, None] * np.conj(z[None, :]) - 0.5 * a2[:, None] - 0.5 * a2[None, :])
    det = np.linalg.det(m)
    return max(float(det.real) / math.pi**k, 0.0)
