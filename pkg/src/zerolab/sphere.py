"""Gaussian spherical harmonics, plane waves, and arithmetic random waves.

The degree-n Gaussian spherical harmonic is f = sum_k xi_k Y_k over an
orthonormal real basis of the (2n+1)-dimensional eigenspace with
E xi_k^2 = 1/(2n+1).  The sphere carries the normalized measure (total mass
one), which is the convention that makes E f(x)^2 = 1 and the covariance
exactly P_n(cos Theta(x, y)) at unit total L^2 mass; the basis functions are
then sqrt(4 pi) times the geodesy-normalized spherical harmonics.

Evaluation runs a fully normalized associated-Legendre recursion per point
(stable to degree well beyond 100, where unnormalized P_n^m overflow), with
the co-latitude derivative assembled from the neighbor-order identity, so
field and gradient come out of one sweep.

The planar companions: the Gaussian plane wave Re sum_m zeta_m J_|m|(r)
e^{i m theta} with covariance J_0(|x-y|), Bessel values from Miller's
downward recurrence; and arithmetic waves over lattice vectors of fixed
squared length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover
    _njit = None

from .rng import GaussianStream

INV_SQRT4PI = 1.0 / math.sqrt(4.0 * math.pi)
SQRT4PI = math.sqrt(4.0 * math.pi)


# -- Legendre ---------------------------------------------------------------------


def legendre_P(n: int, t):
    """Legendre polynomial P_n(t), normalized by P_n(1) = 1, for |t| <= 1."""
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-12):
        raise ValueError("|t| must not exceed 1")
    t = np.clip(t, -1.0, 1.0)
    if n == 0:
        out = np.ones_like(t)
        return out if out.ndim else float(out)
    p_prev = np.ones_like(t)
    p_cur = t.copy()
    for k in range(1, n):
        p_next = ((2 * k + 1) * t * p_cur - k * p_prev) / (k + 1)
        p_prev, p_cur = p_cur, p_next
    return p_cur if p_cur.ndim else float(p_cur)


def _sh_eval_kernel(ct, st, cphi, sphi, ac, bs, n, want_grad, out_f, out_ft, out_fp):
    """(f, df/dtheta, df/dphi) per point for one degree-n sample.

    ac[m], bs[m] hold the cos/sin coefficients already scaled by sqrt(4 pi)
    and the sqrt(2) real-basis factor; the recursion works in geodesy
    normalization.  Rows enter the accumulators as they are produced; the
    theta derivative of order m needs rows m-1 and m+1, handled by deferring
    each row's two cross contributions.
    """
    npts = len(ct)
    for ip in range(npts):
        c = ct[ip]
        s = st[ip]
        c1 = cphi[ip]
        s1 = sphi[ip]
        f_acc = 0.0
        ft_acc = 0.0
        fp_acc = 0.0
        pmm = INV_SQRT4PI
        cm = 1.0
        sm = 0.0
        row_prev = 0.0     # row at order m-1
        g_prev = 0.0       # g_{m-1}(phi)
        for m in range(n + 1):
            if m > 0:
                pmm *= math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s
                cm, sm = cm * c1 - sm * s1, sm * c1 + cm * s1
            # ascend l from m to n in geodesy normalization
            if m == n:
                row = pmm
            else:
                p_a = pmm
                p_b = math.sqrt(2.0 * m + 3.0) * c * pmm
                if m + 1 == n:
                    row = p_b
                else:
                    for l in range(m + 2, n + 1):
                        al = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
                        alm1 = math.sqrt((4.0 * (l - 1.0) * (l - 1.0) - 1.0)
                                         / ((l - 1.0) * (l - 1.0) - m * m)) if l - 1 > m \
                            else 0.0
                        if l - 1 == m:
                            p_new = al * c * p_b  # no l-2 term at the diagonal
                        else:
                            p_new = al * (c * p_b - p_a / alm1)
                        p_a, p_b = p_b, p_new
                    row = p_b
            g = ac[m] * cm + bs[m] * sm
            f_acc += g * row
            fp_acc += m * (bs[m] * cm - ac[m] * sm) * row
            if want_grad:
                # d(row_m)/dtheta = c_m row_{m-1} - c'_m row_{m+1}; the two cross
                # coefficients coincide except that the m=0 row feeds row_1 with
                # twice the generic weight (P_l^{-1} reflection).
                if m >= 1:
                    c_pair = 0.5 * math.sqrt((n + m) * (n - m + 1.0))
                    ft_acc += g * c_pair * row_prev
                    ft_acc -= g_prev * c_pair * (2.0 if m == 1 else 1.0) * row
                row_prev = row
            g_prev = g
        out_f[ip] = f_acc
        out_ft[ip] = ft_acc
        out_fp[ip] = fp_acc


if _njit is not None:
    _sh_eval_kernel = _njit(cache=True)(_sh_eval_kernel)


@dataclass
class SphericalHarmonicSample:
    """Degree n plus the 2n+1 real coefficients (cos block then sin block)."""

    n: int
    coeffs: np.ndarray           # [a_0..a_n, b_1..b_n], each N(0, 1/(2n+1))
    basis: str = "real-theta-phi"

    def __post_init__(self):
        if len(self.coeffs) != 2 * self.n + 1:
            raise ValueError("need 2n+1 coefficients")

    def coef_blocks(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.zeros(self.n + 1)
        b = np.zeros(self.n + 1)
        a[:] = self.coeffs[: self.n + 1]
        b[1:] = self.coeffs[self.n + 1:]
        return a, b


def sample_sh(n: int, stream: GaussianStream) -> SphericalHarmonicSample:
    if n < 1:
        raise ValueError("degree must be >= 1")
    coeffs = stream.draw_real(2 * n + 1) / math.sqrt(2 * n + 1)
    return SphericalHarmonicSample(n=n, coeffs=coeffs)


def _angles(x: np.ndarray) -> tuple[np.ndarray, ...]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x.reshape(-1, 3)
    nrm = np.linalg.norm(pts, axis=1)
    if np.any(np.abs(nrm - 1.0) > 1e-12):
        raise ValueError("points must lie on the unit sphere (|x| = 1 to 1e-12)")
    ct = np.clip(pts[:, 2], -1.0, 1.0)
    st = np.sqrt(np.maximum(1.0 - ct * ct, 0.0))
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    return ct, st, np.cos(phi), np.sin(phi), single


def eval_sh(f: SphericalHarmonicSample, x, grad: bool = False):
    """Field value (and optionally (d_theta f, d_phi f)) at unit vectors x."""
    ct, st, cphi, sphi, single = _angles(x)
    a, b = f.coef_blocks()
    scale = SQRT4PI
    ac = a * scale
    bs = b * scale
    ac[1:] *= math.sqrt(2.0)
    bs[1:] *= math.sqrt(2.0)
    out_f = np.empty(len(ct))
    out_ft = np.empty(len(ct))
    out_fp = np.empty(len(ct))
    _sh_eval_kernel(ct, st, cphi, sphi, ac, bs, f.n, grad, out_f, out_ft, out_fp)
    if single and not grad:
        return float(out_f[0])
    if not grad:
        return out_f
    return out_f, out_ft, out_fp


def eval_zonal(n: int, pole, x):
    """sqrt(2n+1) P_n(cos d(pole, x)): the unit-norm rotation-symmetric harmonic."""
    pole = np.asarray(pole, dtype=float)
    x = np.asarray(x, dtype=float)
    ct = np.clip((x.reshape(-1, 3) @ pole), -1.0, 1.0)
    out = math.sqrt(2 * n + 1) * legendre_P(n, ct)
    return float(out[0]) if x.ndim == 1 else out


def sphere_angle(x, y) -> np.ndarray:
    """Geodesic angle between unit vectors, stable for small separations."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cross = np.linalg.norm(np.cross(x, y), axis=-1)
    dot = np.sum(x * y, axis=-1)
    return np.arctan2(cross, dot)


# -- Bessel: Miller's downward recurrence -------------------------------------------


def bessel_j_table(m_max: int, r) -> np.ndarray:
    """J_m(r) for m = 0..m_max, vectorized over r; 1e-12 relative accuracy.

    Downward recurrence from a start order with J ~ 0, normalized by the
    identity J_0 + 2 sum_k J_{2k} = 1.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    out = np.zeros((m_max + 1, len(r)))
    nz = r > 0
    out[0, ~nz] = 1.0
    if not nz.any():
        return out
    rr = r[nz]
    start = int(max(m_max + 24, np.ceil(1.30 * rr.max()) + 42))
    if start % 2 == 1:
        start += 1
    jp = np.zeros_like(rr)             # J_{start+1}
    jc = np.full_like(rr, 1e-290)      # J_{start}
    norm = np.zeros_like(rr)
    cols = np.zeros((m_max + 1, len(rr)))
    for m in range(start, 0, -1):
        jm = 2.0 * m / rr * jc - jp
        jp, jc = jc, jm
        big = np.abs(jc) > 1e250
        if big.any():
            jc[big] *= 1e-250
            jp[big] *= 1e-250
            norm[big] *= 1e-250
            cols[:, big] *= 1e-250
        if m - 1 <= m_max:
            cols[m - 1] = jc
        if (m - 1) % 2 == 0 and m - 1 > 0:
            norm += 2.0 * jc
    norm += jc  # add J_0
    cols /= norm
    out[:, nz] = cols
    return out


def bessel_J(m: int, r):
    """Bessel function of the first kind, integer order."""
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    vals = bessel_j_table(m, r_arr)[m]
    return float(vals[0]) if np.isscalar(r) or np.asarray(r).ndim == 0 else vals


# -- Gaussian plane wave --------------------------------------------------------------


@dataclass
class PlaneWaveSample:
    """Coefficients zeta_m, |m| <= m_max, E|zeta_m|^2 = 2; field is
    Re sum zeta_m J_|m|(r) e^{i m theta}."""

    m_max: int
    zeta: np.ndarray             # length 2*m_max+1, index m + m_max
    valid_radius: float
    tail: float                  # 1 - sum_{|m|<=m_max} J_m(r_valid)^2


def plane_wave_tail(m_max: int, r: float) -> float:
    j = bessel_j_table(m_max, np.array([r]))[:, 0]
    return max(1.0 - float(j[0] ** 2 + 2.0 * np.sum(j[1:] ** 2)), 0.0)


def plane_wave_valid_radius(m_max: int, tol: float = 1e-10) -> float:
    lo, hi = 0.0, 2.0 * m_max / math.e
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if plane_wave_tail(m_max, mid) <= tol:
            lo = mid
        else:
            hi = mid
    return lo


def sample_plane_wave(m_max: int, stream: GaussianStream,
                      tol: float = 1e-10) -> PlaneWaveSample:
    zeta = stream.draw_complex(2 * m_max + 1) * math.sqrt(2.0)
    r_valid = plane_wave_valid_radius(m_max, tol)
    return PlaneWaveSample(m_max=m_max, zeta=zeta, valid_radius=r_valid,
                           tail=plane_wave_tail(m_max, r_valid))


def eval_pw(f: PlaneWaveSample, x):
    """Field at planar points given as complex numbers (or (..., 2) arrays)."""
    z = np.asarray(x)
    if z.dtype != complex:
        z = np.asarray(x, dtype=float)
        z = z[..., 0] + 1j * z[..., 1]
    single = z.ndim == 0
    z = np.atleast_1d(z)
    r = np.abs(z)
    if np.any(r > f.valid_radius * (1 + 1e-12)):
        raise ValueError(f"point outside validity radius {f.valid_radius:.2f}")
    theta = np.angle(z)
    j = bessel_j_table(f.m_max, r)
    ms = np.arange(-f.m_max, f.m_max + 1)
    phases = np.exp(1j * np.outer(ms, theta))
    vals = (f.zeta[:, None] * j[np.abs(ms)] * phases).sum(axis=0).real
    return float(vals[0]) if single else vals


# -- arithmetic random waves ------------------------------------------------------------


def sum_of_two_squares(n: int) -> list[tuple[int, int]]:
    """All integer vectors (a, b) with a^2 + b^2 = n, by direct enumeration."""
    reps = []
    for a in range(-int(math.isqrt(n)), int(math.isqrt(n)) + 1):
        b2 = n - a * a
        b = int(math.isqrt(b2))
        if b * b == b2:
            reps.append((a, b))
            if b != 0:
                reps.append((a, -b))
    return sorted(set(reps))


def _bad_prime_witness(n: int) -> int | None:
    """A prime p = 3 mod 4 dividing n to an odd power, if one exists."""
    m = n
    p = 2
    while p * p <= m:
        if m % p == 0:
            e = 0
            while m % p == 0:
                m //= p
                e += 1
            if p % 4 == 3 and e % 2 == 1:
                return p
        p += 1
    if m > 1 and m % 4 == 3:
        return m
    return None


@dataclass
class ArithmeticWave:
    n_value: int
    vectors: np.ndarray          # (k, 2) lattice vectors with |v|^2 = n_value
    zeta: np.ndarray             # complex, E|zeta|^2 = 2


def sample_arithmetic_wave(n_value: int, stream: GaussianStream) -> ArithmeticWave:
    reps = sum_of_two_squares(n_value)
    if not reps:
        w = _bad_prime_witness(n_value)
        raise ValueError(
            f"{n_value} is not a sum of two squares (prime witness {w} = 3 mod 4 "
            f"with odd exponent)")
    vectors = np.array(reps, dtype=float)
    zeta = stream.draw_complex(len(vectors)) * math.sqrt(2.0)
    return ArithmeticWave(n_value=n_value, vectors=vectors, zeta=zeta)


def eval_aw(f: ArithmeticWave, x):
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    phase = np.exp(2j * math.pi * (f.vectors @ x.T))
    vals = (f.zeta[:, None] * phase).sum(axis=0).real
    return vals if len(vals) > 1 else float(vals[0])


def covariance_aw(n_value: int, dx) -> float:
    """Exact covariance sum_v cos(2 pi v . dx) over |v|^2 = n_value."""
    reps = sum_of_two_squares(n_value)
    if not reps:
        raise ValueError(f"{n_value} is not a sum of two squares")
    v = np.array(reps, dtype=float)
    dx = np.asarray(dx, dtype=float)
    return float(np.cos(2.0 * math.pi * (v @ dx)).sum())


# -- scaling map -----------------------------------------------------------------------


def tangent_frame(x0) -> tuple[np.ndarray, np.ndarray]:
    """Fixed orthonormal frame at x0 (recorded convention: e1 ~ z-cross)."""
    x0 = np.asarray(x0, dtype=float)
    e1 = np.cross([0.0, 0.0, 1.0], x0)
    if np.linalg.norm(e1) < 1e-8:
        e1 = np.cross([1.0, 0.0, 0.0], x0)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(x0, e1)
    return e1, e2


def exp_map(x0, u, frame=None) -> np.ndarray:
    """Riemannian exponential: tangent coordinates u (complex) to the sphere."""
    x0 = np.asarray(x0, dtype=float)
    if frame is None:
        frame = tangent_frame(x0)
    e1, e2 = frame
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    s = np.abs(u)
    out = np.empty((len(u), 3))
    small = s < 1e-300
    direction = np.zeros((len(u), 3))
    direction[~small] = (np.outer(u.real[~small] / s[~small], e1)
                         + np.outer(u.imag[~small] / s[~small], e2))
    out = np.cos(s)[:, None] * x0[None, :] + np.sin(s)[:, None] * direction
    out[small] = x0
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def scaled_field(f: SphericalHarmonicSample, x0, u, frame=None):
    """F_n(u) = f_n(exp_{x0}(u / n)): the tangent-plane view at wave scale."""
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    if np.any(np.abs(u) / f.n >= math.pi):
        raise ValueError("antipodal overflow: |u|/n must stay below pi")
    pts = exp_map(x0, u / f.n, frame=frame)
    vals = eval_sh(f, pts)
    return vals if len(u) > 1 else float(np.atleast_1d(vals)[0])
