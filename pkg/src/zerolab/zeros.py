"""Zero sets of truncated GEF samples, with an independent counting oracle.

Roots come from the polynomial truncation (certified by the tail bound),
located on a disk rescaled to |w| <= 1 where the coefficient profile
zeta_n r^n / sqrt(n!) is well conditioned.  Every located set is
cross-checked against a winding-number count of F'/F on the boundary
circle; disagreement is a hard error so that callers can reject and count
the sample instead of silently trusting one method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is expected to be present
    _njit = None

from .gef import TruncatedGEF, DomainError, ConfigurationError

WINDOW_SAFETY = 0.8          # zero search confined to r <= WINDOW_SAFETY * r_max
RESIDUAL_TOL = 1e-7          # max |F*| allowed at claimed zeros
CIRCLE_CLEARANCE = 1e-6      # min |F*| on the counting circle before jittering
RADIUS_JITTER = 1e-4         # relative jitter used to dodge circle-crossing zeros
COMPANION_MAX_DEGREE = 250   # above this, Aberth-Ehrlich iteration


class ZeroCountMismatch(RuntimeError):
    """Root finder and argument-principle oracle disagree."""


class QuadratureError(RuntimeError):
    """Winding integral failed to settle on an integer."""


@dataclass
class ZeroSet:
    zeros: np.ndarray        # complex zeros with |z| <= window_radius
    window_radius: float     # actual counting radius (after any jitter)
    oracle_count: int
    residual_max: float      # max |F*| over the claimed zeros

    def __post_init__(self):
        if len(self.zeros) != self.oracle_count:
            raise ZeroCountMismatch(
                f"{len(self.zeros)} roots vs oracle count {self.oracle_count}")

    def to_csv_rows(self):
        return [(float(z.real), float(z.imag)) for z in self.zeros]


# -- polynomial root engines --------------------------------------------------


def _trim_scaled(b: np.ndarray, margin: float = 1.03, tol: float = 1e-12) -> np.ndarray:
    """Drop trailing coefficients whose total weight on |w| <= margin is < tol.

    Roots inside the unit disk move by less than tol under the dropped tail
    (they get a Newton polish on the full truncation afterwards anyway).
    """
    b = b / np.abs(b).max()
    n = np.arange(len(b), dtype=float)
    weight = np.abs(b) * margin**n
    tail = np.cumsum(weight[::-1])[::-1]
    keep = np.nonzero(tail > tol)[0]
    d = int(keep[-1]) if len(keep) else 0
    return b[: d + 1]


def _aberth_init(d: int, inner: int, phase: float) -> np.ndarray:
    """Spiral init matched to the root geometry of a rescaled truncation:
    genuine roots fill the unit disk uniformly in area, the truncation's
    spurious roots sit on a ring just outside it."""
    golden = 0.5 * (math.sqrt(5.0) - 1.0)
    j = np.arange(d, dtype=float)
    n_in = min(d, max(inner, 1))
    w = np.empty(d, dtype=complex)
    w[:n_in] = 0.95 * np.sqrt((j[:n_in] + 0.5) / n_in)
    w[n_in:] = 1.05 + 0.15 * (j[n_in:] - n_in) / max(d - n_in, 1)
    return w * np.exp(2j * math.pi * (golden * j + phase))


def _aberth_sweeps(b, w, max_iter, tol):
    """Gauss-Seidel Aberth sweeps (numba-compiled when available).

    Convergence is tracked only for iterates with |w| <= 0.92: the kept
    candidates all lie below that, while the truncation's ill-conditioned
    spurious ring hovers near |w| ~ 1.05 and would stall the stopping rule.
    """
    d = len(w)
    for _ in range(max_iter):
        max_step = 0.0
        for i in range(d):
            wi = w[i]
            if abs(wi) > 1.5:
                wi = wi / abs(wi) * 1.45
            p = 0.0 + 0.0j
            dp = 0.0 + 0.0j
            for n in range(len(b) - 1, -1, -1):
                dp = dp * wi + p
                p = p * wi + b[n]
            if dp == 0.0:
                continue
            newton = p / dp
            s = 0.0 + 0.0j
            for j in range(d):
                if j != i:
                    s += 1.0 / (wi - w[j])
            denom = 1.0 - newton * s
            if denom == 0.0:
                continue
            step = newton / denom
            w[i] = wi - step
            if abs(w[i]) <= 0.92:
                a = abs(step)
                if a > max_step:
                    max_step = a
        if max_step < tol:
            break
    return w


if _njit is not None:
    _aberth_sweeps = _njit(cache=True)(_aberth_sweeps)


def _aberth(b: np.ndarray, inner: int, max_iter: int = 120, tol: float = 1e-13,
            phase: float = 0.0) -> np.ndarray:
    """All roots of sum_n b_n w^n by Aberth-Ehrlich simultaneous iteration.

    Iterates are clamped to |w| <= 1.5; nothing of interest lives beyond
    (see _aberth_init).
    """
    d = len(b) - 1
    w = _aberth_init(d, inner, phase)
    return _aberth_sweeps(b.astype(np.complex128), w.astype(np.complex128),
                          max_iter, tol)


def _poly_roots(b: np.ndarray, inner: int, attempt: int = 0) -> np.ndarray:
    """Root engine ladder: companion matrix at low degree, Aberth above,
    companion again as the final fallback for stubborn samples."""
    b = _trim_scaled(b)
    d = len(b) - 1
    if d <= COMPANION_MAX_DEGREE or (attempt >= 2 and d <= 1500):
        return np.roots(b[::-1])
    if attempt == 0:
        return _aberth(b, inner)
    return _aberth(b, inner, max_iter=400, phase=0.37 * attempt)


def _newton_polish(f: TruncatedGEF, z: np.ndarray, iters: int = 40,
                   tol: float = 1e-13) -> np.ndarray:
    if len(z) == 0:
        return z
    z = z.copy()
    for _ in range(iters):
        val, der = f.eval_deriv(z, check=False)
        step = np.where(der != 0, val / np.where(der == 0, 1.0, der), 0.0)
        z = z - step
        if np.max(np.abs(step)) < tol * (1.0 + np.max(np.abs(z))):
            break
    return z


def _dedupe(z: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    if len(z) == 0:
        return z
    order = np.argsort(z.real, kind="stable")
    z = z[order]
    keep = [z[0]]
    for v in z[1:]:
        if all(abs(v - u) > tol for u in keep[-8:]):
            keep.append(v)
    return np.array(keep)


# -- argument-principle oracle -------------------------------------------------


def _winding_raw(f: TruncatedGEF, r: float, m: int) -> tuple[complex, float, float]:
    theta = 2.0 * math.pi * np.arange(m) / m
    z = r * np.exp(1j * theta)
    val, der = f.eval_deriv(z, check=False)
    fstar = np.abs(val) * np.exp(-0.5 * r * r)
    raw = np.mean(der * z / val)
    phases = np.angle(val)
    steps = np.abs(np.diff(np.concatenate([phases, phases[:1]])))
    steps = np.minimum(steps, 2.0 * math.pi - steps)
    return raw, float(fstar.min()), float(steps.max())


def count_zeros_oracle(f: TruncatedGEF, r: float, m0: int = 256,
                       m_max: int = 1 << 16) -> int:
    count, _ = count_zeros_oracle_at(f, r, m0=m0, m_max=m_max)
    return count


def count_zeros_oracle_at(f: TruncatedGEF, r: float, m0: int = 256,
                          m_max: int = 1 << 16) -> tuple[int, float]:
    """Winding number of F on |z|=r and the radius actually used.

    The circle is jittered by a relative 1e-4 when a zero sits within the
    clearance distance of it; the periodic trapezoid rule is then refined
    until the raw integral lands within 0.01 of an integer with controlled
    phase steps.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    if r > f.r_max * (1 + 1e-12):
        raise DomainError("counting circle outside the certified disk")
    for k in range(6):
        jit = 0.0 if k == 0 else ((-1) ** k) * ((k + 1) // 2) * RADIUS_JITTER
        rr = r * (1.0 + jit)
        if rr > f.r_max:
            continue
        m = m0
        while m <= m_max:
            raw, fstar_min, step_max = _winding_raw(f, rr, m)
            if fstar_min < CIRCLE_CLEARANCE:
                break  # zero too close to this circle; jitter the radius
            if step_max < 0.5 * math.pi and abs(raw.real - round(raw.real)) < 0.01 \
                    and abs(raw.imag) < 0.01:
                return int(round(raw.real)), rr
            m *= 2
    raise QuadratureError(f"winding count did not settle at r={r}")


# -- certified recovery of roots the iteration missed ---------------------------


class _WindingFailed(RuntimeError):
    pass


def _polyline_winding(f: TruncatedGEF, corners: np.ndarray, m0: int = 48,
                      max_rounds: int = 24) -> int:
    """Winding number of F along a closed polygon by adaptive phase tracking.

    Operates on the truncation as an exact polynomial, so the path may leave
    the certified disk.  Segments are split until every phase step is well
    under pi; a step that refuses to settle means a zero (numerically) on the
    path and raises _WindingFailed so the caller can jitter the contour.
    """
    pts = []
    k = len(corners)
    for i in range(k):
        a, b = corners[i], corners[(i + 1) % k]
        t = np.arange(m0) / m0
        pts.append(a + (b - a) * t)
    z0 = np.concatenate(pts)
    z1 = np.roll(z0, -1)
    f0 = f.eval(z0, check=False)
    f1 = f.eval(z1, check=False)
    total = 0.0
    for _ in range(max_rounds):
        if np.any(f0 == 0.0) or np.any(f1 == 0.0):
            raise _WindingFailed("zero on contour")
        dphi = np.angle(f1 / f0)
        ok = np.abs(dphi) < 1.4
        total += dphi[ok].sum()
        if ok.all():
            rounds_left = True
            break
        z0b, z1b, f0b = z0[~ok], z1[~ok], f0[~ok]
        zm = 0.5 * (z0b + z1b)
        fm = f.eval(zm, check=False)
        z0 = np.concatenate([z0b, zm])
        z1 = np.concatenate([zm, z1b])
        f0 = np.concatenate([f0b, fm])
        f1 = np.concatenate([fm, f1[~ok]])
    else:
        raise _WindingFailed("phase steps did not settle")
    n = total / (2.0 * math.pi)
    if abs(n - round(n)) > 0.01:
        raise _WindingFailed(f"non-integer winding {n}")
    return int(round(n))


def _rect_winding(f: TruncatedGEF, x0, x1, y0, y1) -> int:
    for shift in (0.0, 1.7e-3, -2.3e-3):
        d = shift * max(x1 - x0, y1 - y0)
        try:
            corners = np.array([x0 - d + 1j * (y0 - d), x1 + d + 1j * (y0 - d),
                                x1 + d + 1j * (y1 + d), x0 - d + 1j * (y1 + d)])
            return _polyline_winding(f, corners)
        except _WindingFailed:
            continue
    raise _WindingFailed(f"rectangle count failed at [{x0},{x1}]x[{y0},{y1}]")


def _hunt_missing(f: TruncatedGEF, cand: np.ndarray, radius: float,
                  min_box: float = 1e-3) -> np.ndarray:
    """Quadtree search for truncation roots absent from `cand`.

    Rectangles are counted by the argument principle and compared against the
    candidates they contain; quadrants with a deficit are subdivided.  Split
    lines are placed slightly off-center so they avoid roots generically.
    """
    found: list[complex] = []

    def have(x0, x1, y0, y1):
        inside = ((cand.real >= x0) & (cand.real < x1)
                  & (cand.imag >= y0) & (cand.imag < y1)).sum()
        inside += sum(1 for z in found if x0 <= z.real < x1 and y0 <= z.imag < y1)
        return int(inside)

    def rec(x0, x1, y0, y1, depth):
        try:
            target = _rect_winding(f, x0, x1, y0, y1)
        except _WindingFailed:
            return
        deficit = target - have(x0, x1, y0, y1)
        if deficit <= 0:
            return
        if max(x1 - x0, y1 - y0) < min_box or depth > 40:
            z = _newton_polish(f, np.array([0.5 * (x0 + x1) + 0.5j * (y0 + y1)]))
            if abs(f.eval_normalized(z[0], check=False)) < RESIDUAL_TOL:
                found.append(complex(z[0]))
            return
        xm = x0 + 0.503 * (x1 - x0)
        ym = y0 + 0.497 * (y1 - y0)
        for bx in ((x0, xm), (xm, x1)):
            for by in ((y0, ym), (ym, y1)):
                rec(bx[0], bx[1], by[0], by[1], depth + 1)

    a = radius * 1.02 + 0.0131
    rec(-a, a, -a, a, 0)
    return np.array(found, dtype=complex)


# -- zero location --------------------------------------------------------------


def find_zeros(f: TruncatedGEF, r: float) -> ZeroSet:
    """All zeros of the truncation with |z| <= r, polished and oracle-checked."""
    if r > WINDOW_SAFETY * f.r_max * (1 + 1e-12):
        raise DomainError(
            f"search radius {r} exceeds {WINDOW_SAFETY} * r_max = {WINDOW_SAFETY * f.r_max}")
    count, rr = count_zeros_oracle_at(f, r)
    zeros = None
    for attempt, blowup in enumerate((1.25, 1.4, 1.25)):
        scale = min(blowup * r, f.r_max)
        w = _poly_roots(f.scaled_to(scale), inner=int(scale * scale) + 1, attempt=attempt)
        cand = scale * w[np.abs(w) * scale <= r + 0.25]
        cand = _newton_polish(f, cand)
        cand = cand[np.abs(cand) <= r * (1.0 + 10 * RADIUS_JITTER) + 1e-9]
        cand = _dedupe(cand)
        zeros = cand[np.abs(cand) <= rr]
        if len(zeros) == count:
            break
        if len(zeros) < count:
            extra = _hunt_missing(f, cand, rr)
            if len(extra):
                cand = _dedupe(np.concatenate([cand, extra]))
                zeros = cand[np.abs(cand) <= rr]
                if len(zeros) == count:
                    break
    resid = np.abs(f.eval_normalized(zeros, check=False)) if len(zeros) else np.array([0.0])
    zs = ZeroSet(zeros=zeros, window_radius=rr, oracle_count=count,
                 residual_max=float(resid.max()))
    if zs.residual_max > RESIDUAL_TOL:
        raise ZeroCountMismatch(f"residual {zs.residual_max:.2e} above {RESIDUAL_TOL}")
    return zs


# -- test functions --------------------------------------------------------------


def _smooth_step(t):
    """C-infinity transition: 0 for t<=0, 1 for t>=1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0.0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
        b = np.where(t < 1.0, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class TestFunction:
    """Test function h for linear statistics sum_a h(a/r).

    Kinds: indicator_disk, gaussian_bump (truncated Gaussian), smooth_compact
    (a C^2-or-better compactly supported profile, possibly tabulated), and
    cusp_alpha realizing |x|^alpha times a smooth cutoff.
    """

    kind: str
    support_radius: float
    fn: Callable = field(compare=False, repr=False)
    radial: bool = True
    alpha: float | None = None

    def __call__(self, x, y=None):
        if y is None:
            z = np.asarray(x, dtype=complex)
            return self.fn(z.real, z.imag)
        return self.fn(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    @classmethod
    def indicator_disk(cls, radius: float = 1.0) -> "TestFunction":
        def fn(x, y):
            return (x * x + y * y <= radius * radius).astype(float)
        return cls(kind="indicator_disk", support_radius=radius, fn=fn)

    @classmethod
    def gaussian_bump(cls, sigma: float = 0.25, cut: float = 5.0) -> "TestFunction":
        r2cut = (cut * sigma) ** 2
        def fn(x, y):
            r2 = x * x + y * y
            return np.where(r2 <= r2cut, np.exp(-0.5 * r2 / sigma**2), 0.0)
        return cls(kind="gaussian_bump", support_radius=cut * sigma, fn=fn)

    @classmethod
    def c2_bump(cls, radius: float = 1.0) -> "TestFunction":
        """exp(1 - 1/(1 - (|x|/R)^2)) inside |x| < R; smooth and compact."""
        def fn(x, y):
            t = (x * x + y * y) / radius**2
            with np.errstate(divide="ignore", over="ignore"):
                v = np.where(t < 1.0, np.exp(1.0 - 1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
            return v
        return cls(kind="smooth_compact", support_radius=radius, fn=fn)

    @classmethod
    def smooth_compact(cls, values: np.ndarray, spacing: float) -> "TestFunction":
        """Tabulated profile on a centered Cartesian grid, bilinear interpolation."""
        vals = np.asarray(values, dtype=float)
        n = vals.shape[0]
        half = 0.5 * (n - 1) * spacing
        def fn(x, y):
            gx = np.clip((x + half) / spacing, 0, n - 1 - 1e-9)
            gy = np.clip((y + half) / spacing, 0, n - 1 - 1e-9)
            i = gx.astype(int)
            j = gy.astype(int)
            fx = gx - i
            fy = gy - j
            v = (vals[j, i] * (1 - fx) * (1 - fy) + vals[j, i + 1] * fx * (1 - fy)
                 + vals[j + 1, i] * (1 - fx) * fy + vals[j + 1, i + 1] * fx * fy)
            return np.where((np.abs(x) <= half) & (np.abs(y) <= half), v, 0.0)
        return cls(kind="smooth_compact", support_radius=half * math.sqrt(2.0),
                   fn=fn, radial=False)

    @classmethod
    def cusp(cls, alpha: float, radius: float = 1.0) -> "TestFunction":
        """h_alpha = |x|^alpha psi(x), psi a smooth cutoff equal to 1 near 0."""
        if alpha <= -1.0:
            raise ValueError("alpha <= -1 is not square-integrable in the plane")
        if alpha == 0.0:
            raise ValueError("alpha must be nonzero for a genuine cusp")
        def fn(x, y):
            rho = np.sqrt(x * x + y * y) / radius
            psi = 1.0 - _smooth_step((rho - 0.5) * 2.0)
            with np.errstate(divide="ignore"):
                amp = np.where(rho > 0, (rho * radius) ** alpha, 0.0 if alpha > 0 else np.inf)
            out = amp * psi
            if alpha < 0:
                out = np.where(rho == 0.0, 0.0, out)  # measure-zero point, keep finite
            return out
        return cls(kind="cusp_alpha", support_radius=radius, fn=fn, alpha=alpha)

    # -- scalar helpers (radial quadrature) -----------------------------------

    def integral(self) -> float:
        """Integral of h over the plane."""
        from scipy.integrate import quad
        if not self.radial:
            raise ValueError("analytic integral only for radial kinds")
        val, _ = quad(lambda s: s * float(self.fn(np.array([s]), np.array([0.0]))[0]),
                      0.0, self.support_radius, limit=400)
        return 2.0 * math.pi * val

    def l2_norm_sq(self) -> float:
        from scipy.integrate import quad
        if not self.radial:
            raise ValueError("analytic norm only for radial kinds")
        val, _ = quad(lambda s: s * float(self.fn(np.array([s]), np.array([0.0]))[0]) ** 2,
                      0.0, self.support_radius, limit=400)
        return 2.0 * math.pi * val


def linear_statistic(zs: ZeroSet, h: TestFunction, r: float) -> float:
    """n(r, h) = sum over located zeros of h(a / r)."""
    if h.support_radius * r > zs.window_radius * (1 + 1e-9):
        raise ConfigurationError(
            f"support radius {h.support_radius * r:.3f} exceeds zero window "
            f"{zs.window_radius:.3f}")
    if len(zs.zeros) == 0:
        return 0.0
    return float(np.sum(h(zs.zeros.real / r, zs.zeros.imag / r)))
