"""Random potential, gradient-flow allocation, saddles, and lattice matching.

The potential U(z) = log|F(z)| - |z|^2/2 has distributional Laplacian
2 pi sum_a delta_a - 2m, so the descending gradient flow partitions the
plane into basins of equal area pi, one per zero.  Cell centers of a window
grid are integrated down the flow with a vectorized adaptive Runge-Kutta
stepper; the field is either evaluated exactly (low volume, synthetic tests)
or bilinearly interpolated from a precomputed grid of F'/F (bulk runs).

Also here: critical points of U by Newton on F' - conj(z) F = 0 with Hessian
classification, the long-gradient-curve crossing probe, minimal-bottleneck
matching of zeros to sqrt(pi) Z^2, and the transportation discrepancy bound
r + sqrt(||u * chi_r||_inf).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover
    _njit = None

from .gef import TruncatedGEF, ROOT_PI, ConfigurationError
from .rng import GaussianStream
from .statutil import wilson_interval

# flow_to_sink status codes (negative; nonnegative values are sink indices)
DIVERGED = -1
SADDLE_STALL = -2
BUDGET_EXHAUSTED = -3

CAPTURE_EXACT = 1e-3     # capture radius with direct field evaluation
CAPTURE_GRID = 5e-2      # capture radius compatible with interpolated fields
STALL_SPEED = 1e-7
STALL_STEPS = 60
MAX_PERTURB = 3


# -- potential and field access ------------------------------------------------


class Potential:
    """U(z) = log|F(z)| - |z|^2/2 with gradient conj(F'/F - conj(z))."""

    def __init__(self, f: TruncatedGEF, zeros: np.ndarray | None = None):
        self.f = f
        self.zeros = None if zeros is None else np.asarray(zeros, dtype=complex)

    def value(self, z):
        z = np.asarray(z, dtype=complex)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.f.eval(z, check=False))) - 0.5 * np.abs(z) ** 2

    def grad(self, z):
        z = np.asarray(z, dtype=complex)
        val, der = self.f.eval_deriv(z, check=False)
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.conj(der / val) - z
        return np.where(np.isfinite(g), g, 0.0)

    def velocity(self, z, ascend: bool = False):
        g = self.grad(z)
        return g if ascend else -g

    def build_field(self, half_extent: float, spacing: float = 0.01) -> "FlowField":
        return FlowField(self, half_extent, spacing)


class FlowField:
    """Bilinear interpolator of W = F'/F and log|F| on a square grid."""

    def __init__(self, potential: Potential, half_extent: float, spacing: float):
        self.pot = potential
        self.half = float(half_extent)
        self.spacing = float(spacing)
        n = int(math.ceil(2.0 * self.half / spacing)) + 1
        self.n = n
        xs = -self.half + spacing * np.arange(n)
        self.w_grid = np.empty((n, n), dtype=complex)
        self.l_grid = np.empty((n, n), dtype=float)
        chunk = max(1, (1 << 21) // n)
        for j0 in range(0, n, chunk):
            j1 = min(j0 + chunk, n)
            zz = xs[None, :] + 1j * xs[j0:j1, None]
            val, der = potential.f.eval_deriv(zz.ravel(), check=False)
            with np.errstate(invalid="ignore", divide="ignore"):
                w = der / val
                l = np.log(np.abs(val))
            self.w_grid[j0:j1] = np.where(np.isfinite(w), w, 0.0).reshape(j1 - j0, n)
            self.l_grid[j0:j1] = np.where(np.isfinite(l), l, -50.0).reshape(j1 - j0, n)

    def _bilinear(self, grid, z):
        gx = np.clip((z.real + self.half) / self.spacing, 0.0, self.n - 1.000001)
        gy = np.clip((z.imag + self.half) / self.spacing, 0.0, self.n - 1.000001)
        i = gx.astype(np.int64)
        j = gy.astype(np.int64)
        fx = gx - i
        fy = gy - j
        return (grid[j, i] * (1 - fx) * (1 - fy) + grid[j, i + 1] * fx * (1 - fy)
                + grid[j + 1, i] * (1 - fx) * fy + grid[j + 1, i + 1] * fx * fy)

    def velocity(self, z, ascend: bool = False):
        g = np.conj(self._bilinear(self.w_grid, z)) - z   # grad U
        return g if ascend else -g

    def value(self, z):
        return self._bilinear(self.l_grid, z) - 0.5 * np.abs(z) ** 2


# -- vectorized adaptive flow integration ---------------------------------------

# Cash-Karp embedded Runge-Kutta 4(5)
_CK_C = np.array([0.0, 1 / 5, 3 / 10, 3 / 5, 1.0, 7 / 8])
_CK_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [3 / 10, -9 / 10, 6 / 5],
    [-11 / 54, 5 / 2, -70 / 27, 35 / 27],
    [1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096],
]
_CK_B5 = np.array([37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771])
_CK_B4 = np.array([2825 / 27648, 0.0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4])


@dataclass
class FlowOutcome:
    status: np.ndarray          # sink index or negative code per start point
    end: np.ndarray             # final positions
    steps: np.ndarray
    monotonicity_violations: int
    touched_inner: np.ndarray | None = None


def flow_batch(field, z0, zeros: np.ndarray, capture: float,
               escape, ascend: bool = False, rtol: float = 1e-5, atol: float = 1e-7,
               max_steps: int = 4000, rng_seed: int = 0,
               inner_test=None, monotone: bool = True) -> FlowOutcome:
    """Integrate dZ/dt = -grad U (or ascent) for a batch of starting points.

    Stops each trajectory on capture (within `capture` of a zero), escape
    (predicate on position), stall (speed below STALL_SPEED for STALL_STEPS
    accepted steps, after MAX_PERTURB random 1e-6 nudges), or step budget.
    U is required to be monotone along accepted steps; offending steps are
    rejected and retried at half the step size.
    """
    z = np.asarray(z0, dtype=complex).copy()
    m = len(z)
    status = np.full(m, -9, dtype=np.int64)
    steps = np.zeros(m, dtype=np.int64)
    stall = np.zeros(m, dtype=np.int64)
    nudges = np.zeros(m, dtype=np.int64)
    touched = np.zeros(m, dtype=bool)
    dt = np.full(m, 0.02)
    rng = np.random.Generator(np.random.Philox(key=np.array([rng_seed, 0xF10], dtype=np.uint64)))
    mono_viol = 0
    have_zeros = zeros is not None and len(zeros) > 0
    u_cur = field.value(z) if monotone else None

    def nearest_zero(pts):
        d = np.abs(pts[:, None] - zeros[None, :])
        idx = d.argmin(axis=1)
        return idx, d[np.arange(len(pts)), idx]

    for _ in range(max_steps):
        act = status == -9
        if not act.any():
            break
        za = z[act]
        dta = dt[act]
        k = []
        for s in range(6):
            zs = za.copy()
            for a_coef, kk in zip(_CK_A[s], k):
                zs = zs + dta * a_coef * kk
            k.append(field.velocity(zs, ascend=ascend))
        z5 = za + dta * sum(b * kk for b, kk in zip(_CK_B5, k))
        z4 = za + dta * sum(b * kk for b, kk in zip(_CK_B4, k))
        err = np.abs(z5 - z4)
        tol = atol + rtol * np.maximum(np.abs(za), np.abs(z5))
        ok = err <= tol

        mono_reject = np.zeros_like(ok)
        if monotone:
            u_new = field.value(z5)
            downhill = u_new <= u_cur[act] + 1e-9 * (1.0 + np.abs(u_cur[act]))
            if ascend:
                downhill = u_new >= u_cur[act] - 1e-9 * (1.0 + np.abs(u_cur[act]))
            mono_reject = ok & ~downhill
            mono_viol += int(mono_reject.sum())
            ok &= downhill

        # step-size update; monotone rejections force a halving
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = 0.9 * (tol / np.where(err > 0, err, 1e-300)) ** 0.2
        factor = np.where(mono_reject, 0.5, np.where(np.isfinite(factor), factor, 5.0))
        dta_new = dta * np.clip(factor, 0.2, 5.0)
        idx_act = np.nonzero(act)[0]
        z[idx_act[ok]] = z5[ok]
        if monotone:
            u_cur[idx_act[ok]] = u_new[ok]
        dt[idx_act] = np.clip(dta_new, 1e-9, 0.25)
        steps[idx_act[ok]] += 1

        moved = idx_act[ok]
        if len(moved):
            zm = z[moved]
            if inner_test is not None:
                touched[moved] |= inner_test(zm)
            if have_zeros:
                sink, dist = nearest_zero(zm)
                capt = dist < capture
                status[moved[capt]] = sink[capt]
            esc = escape(zm)
            fresh = status[moved] == -9
            status[moved[esc & fresh]] = DIVERGED
            # stalls: speed at the accepted point
            speed = np.abs(k[0][ok])
            slow = speed < STALL_SPEED
            stall[moved[slow]] += 1
            stall[moved[~slow]] = 0
            stuck = moved[(stall[moved] >= STALL_STEPS) & (status[moved] == -9)]
            if len(stuck):
                small = nudges[stuck] < MAX_PERTURB
                bump = stuck[small]
                if len(bump):
                    ang = rng.random(len(bump)) * 2.0 * math.pi
                    z[bump] += 1e-6 * np.exp(1j * ang)
                    if monotone:
                        u_cur[bump] = field.value(z[bump])
                    nudges[bump] += 1
                    stall[bump] = 0
                status[stuck[~small]] = SADDLE_STALL
    status[status == -9] = BUDGET_EXHAUSTED
    return FlowOutcome(status=status, end=z, steps=steps,
                       monotonicity_violations=mono_viol,
                       touched_inner=touched if inner_test is not None else None)


def flow_to_sink(p: Potential, z0: complex, zeros: np.ndarray | None = None,
                 capture: float = CAPTURE_EXACT, escape_radius: float | None = None,
                 max_steps: int = 6000) -> int:
    """Terminal of the descending gradient curve through z0.

    Returns the index of the captured zero, or DIVERGED / SADDLE_STALL /
    BUDGET_EXHAUSTED.  Exact field evaluation; zeros default to the ones
    attached to the potential.
    """
    zs = p.zeros if zeros is None else np.asarray(zeros, dtype=complex)
    if zs is None:
        raise ValueError("flow_to_sink needs the zero set of the potential")
    r_esc = escape_radius if escape_radius is not None else 0.95 * p.f.r_max
    out = flow_batch(p, np.array([z0], dtype=complex), zs, capture,
                     escape=lambda w: np.abs(w) > r_esc, max_steps=max_steps)
    return int(out.status[0])


# -- basin partition -------------------------------------------------------------


@dataclass
class BasinMap:
    window_half: float
    grid_n: int
    labels: np.ndarray           # (grid_n, grid_n) sink index, or negative code
    zeros: np.ndarray
    cell_area: float
    unresolved_fraction: float
    monotonicity_violations: int = 0

    def basin_cells(self) -> dict[int, int]:
        lab, cnt = np.unique(self.labels[self.labels >= 0], return_counts=True)
        return dict(zip(lab.tolist(), cnt.tolist()))

    def interior_labels(self, margin_fraction: float = 0.15) -> list[int]:
        """Basins whose cells stay clear of the outer margin frame."""
        m = int(round(margin_fraction * self.grid_n))
        frame = np.zeros_like(self.labels, dtype=bool)
        frame[:m, :] = frame[-m:, :] = frame[:, :m] = frame[:, -m:] = True
        bad = np.unique(self.labels[frame])
        inner = np.unique(self.labels[self.labels >= 0])
        return [int(k) for k in inner if k not in bad]

    def basin_area(self, label: int) -> float:
        return float(np.count_nonzero(self.labels == label)) * self.cell_area

    def basin_connected(self, label: int, crumb_tolerance: float = 1e-3) -> bool:
        """Connectivity of the basin's cell set, up to grid-scale crumbs.

        Basins reaching a local maximum through a cuspidal tentacle are
        thinner than any fixed grid near the tip, and boundary cells flip
        sides at interpolation noise level, so a strict single-component test
        fails on stray 1-3 cell fragments.  The basin counts as connected
        when the dominant component holds all but a `crumb_tolerance`
        fraction of its cells; use fragment_sizes() for the raw picture.
        """
        sizes = self.fragment_sizes(label)
        return len(sizes) == 1 or (sizes[0] >= (1.0 - crumb_tolerance) * sizes.sum())

    def fragment_sizes(self, label: int) -> np.ndarray:
        from scipy.ndimage import label as cc_label
        mask = self.labels == label
        lab, ncomp = cc_label(mask)
        if ncomp <= 1:
            return np.array([int(mask.sum())])
        return np.sort(np.bincount(lab.ravel())[1:])[::-1]

    def perimeter_estimate(self, label: int) -> float:
        """Boundary length estimate: exposed cell-edge count times cell width."""
        h = math.sqrt(self.cell_area)
        mask = self.labels == label
        exposed = 0
        for ax, sh in ((0, 1), (0, -1), (1, 1), (1, -1)):
            exposed += int((mask & ~np.roll(mask, sh, axis=ax)).sum())
        return exposed * h

    def area_within_budget(self, label: int, widths: float = 3.0) -> bool:
        """|area - pi| within `widths` grid-cell-widths times the perimeter."""
        h = math.sqrt(self.cell_area)
        return abs(self.basin_area(label) - math.pi) <= widths * h * self.perimeter_estimate(label)

    def neighbor_counts(self) -> dict[int, int]:
        """Number of distinct adjacent basins per basin (skeleton degree data)."""
        pairs = set()
        a = self.labels
        for sh in ((0, 1), (1, 0)):
            b = np.roll(a, sh, axis=(0, 1))
            sel = (a >= 0) & (b >= 0) & (a != b)
            edge = np.stack([np.minimum(a[sel], b[sel]), np.maximum(a[sel], b[sel])], axis=1)
            if sh == (0, 1):
                edge = edge[1:] if False else edge
            pairs.update(map(tuple, edge.tolist()))
        counts: dict[int, int] = {}
        for i, j in pairs:
            counts[i] = counts.get(i, 0) + 1
            counts[j] = counts.get(j, 0) + 1
        return counts

    def to_label_grid_csv(self, path):
        np.savetxt(path, self.labels, fmt="%d", delimiter=",")


def _flow_grid_kernel(w_grid, l_grid, half, spacing, near_idx, hash_step, zeros_re,
                      zeros_im, capture, escape_half, z0_re, z0_im, max_steps,
                      rtol, atol, status, end_re, end_im, steps_out):
    """Per-trajectory Cash-Karp descent on the interpolated field.

    Compiled with numba; one independent adaptive loop per start point.
    Monotone-U enforcement mirrors flow_batch.  Returns the monotonicity
    violation count.
    """
    n = w_grid.shape[0]
    nh = near_idx.shape[0]
    c_b5_0, c_b5_2, c_b5_3, c_b5_5 = 37.0 / 378, 250.0 / 621, 125.0 / 594, 512.0 / 1771
    c_b4_0, c_b4_2, c_b4_3, c_b4_4, c_b4_5 = (2825.0 / 27648, 18575.0 / 48384,
                                              13525.0 / 55296, 277.0 / 14336, 0.25)
    mono_viol = 0
    for ipt in range(len(z0_re)):
        x = z0_re[ipt]
        y = z0_im[ipt]
        dt = 0.02
        st = -9
        stall = 0
        nudges = 0
        nsteps = 0
        lcg = np.uint64(ipt * 2654435761 + 12345)

        # inline bilinear helpers
        def _vel(px, py):
            gx = (px + half) / spacing
            gy = (py + half) / spacing
            if gx < 0.0:
                gx = 0.0
            if gy < 0.0:
                gy = 0.0
            if gx > n - 1.000001:
                gx = n - 1.000001
            if gy > n - 1.000001:
                gy = n - 1.000001
            i = int(gx)
            j = int(gy)
            fx = gx - i
            fy = gy - j
            w = (w_grid[j, i] * (1 - fx) * (1 - fy) + w_grid[j, i + 1] * fx * (1 - fy)
                 + w_grid[j + 1, i] * (1 - fx) * fy + w_grid[j + 1, i + 1] * fx * fy)
            # descent velocity = z - conj(W)
            return px - w.real, py + w.imag

        def _uval(px, py):
            gx = (px + half) / spacing
            gy = (py + half) / spacing
            if gx < 0.0:
                gx = 0.0
            if gy < 0.0:
                gy = 0.0
            if gx > n - 1.000001:
                gx = n - 1.000001
            if gy > n - 1.000001:
                gy = n - 1.000001
            i = int(gx)
            j = int(gy)
            fx = gx - i
            fy = gy - j
            l = (l_grid[j, i] * (1 - fx) * (1 - fy) + l_grid[j, i + 1] * fx * (1 - fy)
                 + l_grid[j + 1, i] * (1 - fx) * fy + l_grid[j + 1, i + 1] * fx * fy)
            return l - 0.5 * (px * px + py * py)

        u_prev = _uval(x, y)
        for _ in range(max_steps * 3):
            if nsteps >= max_steps or st != -9:
                break
            k1x, k1y = _vel(x, y)
            k2x, k2y = _vel(x + dt * 0.2 * k1x, y + dt * 0.2 * k1y)
            k3x, k3y = _vel(x + dt * (0.075 * k1x + 0.225 * k2x),
                            y + dt * (0.075 * k1y + 0.225 * k2y))
            k4x, k4y = _vel(x + dt * (0.3 * k1x - 0.9 * k2x + 1.2 * k3x),
                            y + dt * (0.3 * k1y - 0.9 * k2y + 1.2 * k3y))
            k5x, k5y = _vel(x + dt * (-11.0 / 54 * k1x + 2.5 * k2x - 70.0 / 27 * k3x
                                      + 35.0 / 27 * k4x),
                            y + dt * (-11.0 / 54 * k1y + 2.5 * k2y - 70.0 / 27 * k3y
                                      + 35.0 / 27 * k4y))
            k6x, k6y = _vel(x + dt * (1631.0 / 55296 * k1x + 175.0 / 512 * k2x
                                      + 575.0 / 13824 * k3x + 44275.0 / 110592 * k4x
                                      + 253.0 / 4096 * k5x),
                            y + dt * (1631.0 / 55296 * k1y + 175.0 / 512 * k2y
                                      + 575.0 / 13824 * k3y + 44275.0 / 110592 * k4y
                                      + 253.0 / 4096 * k5y))
            x5 = x + dt * (c_b5_0 * k1x + c_b5_2 * k3x + c_b5_3 * k4x + c_b5_5 * k6x)
            y5 = y + dt * (c_b5_0 * k1y + c_b5_2 * k3y + c_b5_3 * k4y + c_b5_5 * k6y)
            x4 = x + dt * (c_b4_0 * k1x + c_b4_2 * k3x + c_b4_3 * k4x + c_b4_4 * k5x
                           + c_b4_5 * k6x)
            y4 = y + dt * (c_b4_0 * k1y + c_b4_2 * k3y + c_b4_3 * k4y + c_b4_4 * k5y
                           + c_b4_5 * k6y)
            err = math.hypot(x5 - x4, y5 - y4)
            mag = math.hypot(x5, y5)
            mag0 = math.hypot(x, y)
            tol = atol + rtol * (mag if mag > mag0 else mag0)
            accept = err <= tol
            mono_reject = False
            if accept:
                u_new = _uval(x5, y5)
                if u_new > u_prev + 1e-9 * (1.0 + abs(u_prev)):
                    mono_viol += 1
                    accept = False
                    mono_reject = True
            if mono_reject:
                fac = 0.5
            elif err > 0.0:
                fac = 0.9 * (tol / err) ** 0.2
            else:
                fac = 5.0
            if fac < 0.2:
                fac = 0.2
            if fac > 5.0:
                fac = 5.0
            dt = dt * fac
            if dt < 1e-9:
                dt = 1e-9
            if dt > 0.25:
                dt = 0.25
            if not accept:
                continue
            x = x5
            y = y5
            u_prev = u_new
            nsteps += 1
            # capture via spatial hash of nearest zero
            hi = int((x + half) / hash_step)
            hj = int((y + half) / hash_step)
            if hi < 0:
                hi = 0
            if hj < 0:
                hj = 0
            if hi > nh - 1:
                hi = nh - 1
            if hj > nh - 1:
                hj = nh - 1
            cand = near_idx[hj, hi]
            if cand >= 0:
                dzx = x - zeros_re[cand]
                dzy = y - zeros_im[cand]
                if dzx * dzx + dzy * dzy < capture * capture:
                    st = cand
                    break
            if abs(x) > escape_half or abs(y) > escape_half:
                st = -1
                break
            speed = math.hypot(k1x, k1y)
            if speed < 1e-7:
                stall += 1
            else:
                stall = 0
            if stall >= 60:
                if nudges < 3:
                    lcg = np.uint64(lcg * np.uint64(6364136223846793005) + np.uint64(1442695040888963407))
                    ang = 6.283185307179586 * (float(lcg >> np.uint64(11)) / 9007199254740992.0)
                    x += 1e-6 * math.cos(ang)
                    y += 1e-6 * math.sin(ang)
                    u_prev = _uval(x, y)
                    nudges += 1
                    stall = 0
                else:
                    st = -2
                    break
        if st == -9:
            st = -3
        status[ipt] = st
        end_re[ipt] = x
        end_im[ipt] = y
        steps_out[ipt] = nsteps
    return mono_viol


if _njit is not None:
    _flow_grid_kernel = _njit(cache=True)(_flow_grid_kernel)


def _nearest_zero_hash(zeros: np.ndarray, half: float, step: float = 0.04) -> np.ndarray:
    from scipy.spatial import cKDTree
    n = int(math.ceil(2.0 * half / step)) + 1
    xs = -half + step * np.arange(n)
    xx, yy = np.meshgrid(xs, xs)
    tree = cKDTree(np.column_stack([zeros.real, zeros.imag]))
    _, idx = tree.query(np.column_stack([xx.ravel(), yy.ravel()]))
    return idx.astype(np.int64).reshape(n, n)


def basin_partition(p: Potential, window_half: float, grid_n: int,
                    spacing: float = 0.01, capture: float = CAPTURE_GRID,
                    rng_seed: int = 0) -> BasinMap:
    """Assign every cell center of the window grid to its gradient-flow sink."""
    if p.zeros is None:
        raise ValueError("potential needs zeros attached (find_zeros on the window)")
    reach = window_half * math.sqrt(2.0) + 1.6
    if reach > p.f.r_max:
        raise ConfigurationError(
            f"window exceeds certified disk: need r_max >= {reach:.1f}")
    field_half = min(reach + 0.1, p.f.r_max)
    fld = p.build_field(field_half, spacing)
    h = 2.0 * window_half / grid_n
    xs = -window_half + h * (0.5 + np.arange(grid_n))
    zz = (xs[None, :] + 1j * xs[:, None]).ravel()
    escape_half = field_half - 0.05
    hash_step = 0.04
    near_idx = _nearest_zero_hash(p.zeros, field_half, hash_step)
    m = len(zz)
    status = np.empty(m, dtype=np.int64)
    end_re = np.empty(m)
    end_im = np.empty(m)
    steps = np.empty(m, dtype=np.int64)
    mono_viol = _flow_grid_kernel(
        fld.w_grid, fld.l_grid, fld.half, fld.spacing, near_idx, hash_step,
        np.ascontiguousarray(p.zeros.real), np.ascontiguousarray(p.zeros.imag),
        capture, escape_half, np.ascontiguousarray(zz.real),
        np.ascontiguousarray(zz.imag), 4000, 1e-5, 1e-7,
        status, end_re, end_im, steps)
    labels = status.reshape(grid_n, grid_n)
    unresolved = float(np.mean((labels == SADDLE_STALL) | (labels == BUDGET_EXHAUSTED)))
    return BasinMap(window_half=window_half, grid_n=grid_n, labels=labels,
                    zeros=p.zeros, cell_area=h * h, unresolved_fraction=unresolved,
                    monotonicity_violations=mono_viol)


def distance_to_sink_tail(r_list, trials: int, stream: GaussianStream,
                          points_per_trial: int = 64, window_half: float = 4.0,
                          tol: float = 1e-6) -> dict:
    """Empirical P{ |z - a_z| > R } for uniform points z and their sinks a_z."""
    from .zeros import find_zeros
    r_list = sorted(float(r) for r in r_list)
    reach = window_half * math.sqrt(2.0) + 1.6
    r_max = (reach + 0.6) / 0.8
    dists = []
    for t in range(trials):
        st = stream.substream(t + 1)
        f_ = __import__("zerolab.gef", fromlist=["sample_gef"]).sample_gef(r_max, tol, st)
        zs = find_zeros(f_, reach + 0.5)
        pot = Potential(f_, zs.zeros)
        fld = pot.build_field(min(reach + 1.0, f_.r_max), 0.01)
        pts = (st.uniform(points_per_trial) * 2 - 1) * window_half \
            + 1j * ((st.uniform(points_per_trial) * 2 - 1) * window_half)
        out = flow_batch(fld, pts, zs.zeros, CAPTURE_GRID,
                         escape=lambda w: np.abs(w) > reach + 0.7, rng_seed=t)
        good = out.status >= 0
        dists.extend(np.abs(pts[good] - zs.zeros[out.status[good]]).tolist())
    dists = np.asarray(dists)
    table = []
    for r in r_list:
        hits = int((dists > r).sum())
        p, lo, hi = wilson_interval(hits, len(dists))
        table.append({"R": r, "p": p, "lo": lo, "hi": hi, "hits": hits})
    return {"n_points": len(dists), "table": table, "distances": dists}


# -- critical points --------------------------------------------------------------


@dataclass
class SaddleCensus:
    saddles: np.ndarray
    maxima: np.ndarray
    window_half: float
    merged_duplicates: int
    degenerate: int

    @property
    def saddle_density(self) -> float:
        return len(self.saddles) / (2.0 * self.window_half) ** 2

    @property
    def max_density(self) -> float:
        return len(self.maxima) / (2.0 * self.window_half) ** 2


def count_saddles(p: Potential, window_half: float, grid_n: int = 384,
                  dedupe_radius: float = 1e-5) -> SaddleCensus:
    """Critical points of U in the window, classified by Hessian signature.

    grad U = 0 away from zeros iff s(z) = F'(z) - conj(z) F(z) = 0; sign
    changes of Re s and Im s over grid cells seed a Wirtinger Newton solve.
    With p = U_zz and U_zzbar = -1/2, det Hess = 4(1/4 - |p|^2): saddle for
    |p| > 1/2, local maximum for |p| < 1/2 (minima only at the zeros).
    """
    pad = 0.04 * window_half
    half = window_half + pad
    xs = np.linspace(-half, half, grid_n + 1)
    zz = xs[None, :] + 1j * xs[:, None]
    val, der = p.f.eval_deriv(zz.ravel(), check=False)
    s = (der - np.conj(zz.ravel()) * val).reshape(zz.shape)

    re_sign = np.signbit(s.real)
    im_sign = np.signbit(s.imag)

    def straddle(sign):
        c = sign[:-1, :-1]
        mix = (c != sign[1:, :-1]) | (c != sign[:-1, 1:]) | (c != sign[1:, 1:])
        return mix

    cells = straddle(re_sign) & straddle(im_sign)
    ii, jj = np.nonzero(cells)
    seeds = 0.5 * (zz[ii, jj] + zz[ii + 1, jj + 1])
    if len(seeds) == 0:
        return SaddleCensus(np.empty(0, complex), np.empty(0, complex),
                            window_half, 0, 0)

    z = seeds.astype(complex)
    for _ in range(60):
        val, der, der2 = p.f.eval_deriv2(z, check=False)
        s_val = der - np.conj(z) * val
        a = der2 - np.conj(z) * der       # d s / dz
        b = -val                          # d s / dzbar
        j11 = (a + b).real
        j12 = -(a - b).imag
        j21 = (a + b).imag
        j22 = (a - b).real
        det = j11 * j22 - j12 * j21
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        dx = (-s_val.real * j22 + s_val.imag * j12) / det
        dy = (-j11 * s_val.imag + j21 * s_val.real) / det
        step = dx + 1j * dy
        step_norm = np.abs(step)
        step = np.where(step_norm > 0.25, step * 0.25 / np.maximum(step_norm, 1e-300), step)
        z = z + step
        if np.max(np.abs(step)) < 1e-13:
            break

    val, der, der2 = p.f.eval_deriv2(z, check=False)
    resid = np.abs(der - np.conj(z) * val) / (1.0 + np.abs(val))
    good = (resid < 1e-8) & (np.abs(z.real) <= window_half) & (np.abs(z.imag) <= window_half)
    z = z[good]
    val, der, der2 = val[good], der[good], der2[good]

    order = np.argsort(z.real, kind="stable")
    z = z[order]
    val, der, der2 = val[order], der[order], der2[order]
    keep = np.ones(len(z), dtype=bool)
    merged = 0
    for i in range(len(z)):
        if not keep[i]:
            continue
        j = i + 1
        while j < len(z) and z[j].real - z[i].real < dedupe_radius:
            if keep[j] and abs(z[j] - z[i]) < dedupe_radius:
                keep[j] = False
                merged += 1
            j += 1
    z, val, der, der2 = z[keep], val[keep], der[keep], der2[keep]

    with np.errstate(invalid="ignore", divide="ignore"):
        p_wirt = 0.5 * (der2 / val - (der / val) ** 2)
    degva = ~np.isfinite(p_wirt) | (np.abs(np.abs(p_wirt) - 0.5) < 1e-10)
    sad = np.abs(p_wirt) > 0.5
    return SaddleCensus(saddles=z[sad & ~degva], maxima=z[~sad & ~degva],
                        window_half=window_half, merged_duplicates=merged,
                        degenerate=int(degva.sum()))


# -- long gradient curves ----------------------------------------------------------


def long_gradient_curve_prob(r_half: float, trials: int, stream: GaussianStream,
                             seeds_per_side: int = 32, tol: float = 1e-6) -> dict:
    """P{ some gradient curve joins the boundary of Q(R) to that of Q(2R) }.

    Q(R) is the centered square of side R.  Trajectories are seeded densely
    on the outer boundary and integrated both downhill and uphill; the event
    fires when any of them reaches the inner square.  Detection quality is
    seeding limited; the seed density is part of the returned record.
    """
    from .gef import sample_gef
    from .zeros import find_zeros
    outer_half = r_half            # Q(2R): side 2R, half-side R
    inner_half = 0.5 * r_half      # Q(R): side R, half-side R/2
    reach = outer_half * math.sqrt(2.0) + 1.5
    r_max = (reach + 0.5) / 0.8
    t_side = np.linspace(-outer_half, outer_half, seeds_per_side, endpoint=False)
    seeds = np.concatenate([
        t_side + 1j * outer_half, t_side - 1j * outer_half,
        outer_half + 1j * t_side, -outer_half + 1j * t_side])

    def inner_test(w):
        return (np.abs(w.real) <= inner_half) & (np.abs(w.imag) <= inner_half)

    hits = 0
    for t in range(trials):
        f = sample_gef(r_max, tol, stream.substream(t + 1))
        zs = find_zeros(f, reach)
        pot = Potential(f, zs.zeros)
        touched = False
        for ascend in (False, True):
            out = flow_batch(pot, seeds, zs.zeros, CAPTURE_EXACT,
                             escape=lambda w: np.abs(w) > reach + 0.4,
                             ascend=ascend, rng_seed=2 * t + ascend,
                             inner_test=inner_test, max_steps=2500)
            if out.touched_inner.any():
                touched = True
                break
        hits += touched
    p, lo, hi = wilson_interval(hits, trials)
    return {"R": r_half, "p": p, "lo": lo, "hi": hi, "trials": trials,
            "seeds": 4 * seeds_per_side}


# -- bottleneck matching -----------------------------------------------------------


@dataclass
class Matching:
    zero_points: np.ndarray      # matched zeros (trimmed window)
    lattice_points: np.ndarray   # matched lattice partners, aligned with zero_points
    bottleneck: float
    displacements: np.ndarray
    n_zeros_inner: int
    n_lattice: int
    margin: float


def _feasible_radius(dist: np.ndarray, radius: float) -> np.ndarray | None:
    nz, nl = dist.shape
    rows, cols = np.nonzero(dist <= radius)
    graph = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(nz, nl))
    match = maximum_bipartite_matching(graph, perm_type="column")
    if np.any(match < 0):
        return None
    return match


def bottleneck_matching(zeros, window_half: float, margin: float = 2.0) -> Matching:
    """Minimal-bottleneck injection of window-interior zeros into sqrt(pi) Z^2.

    Zeros inside the margin-trimmed square are matched to lattice points of
    the full square; binary search over the sorted distance multiset with a
    Hopcroft-Karp feasibility check at each candidate radius certifies the
    optimum (the next-smaller candidate is infeasible).  If saturation fails
    even at the largest distance the margin is widened and the match retried.
    """
    zeros = np.asarray(zeros, dtype=complex)
    lattice = _square_lattice(window_half)
    for attempt in range(4):
        m = margin + attempt * 0.75
        inner = zeros[(np.abs(zeros.real) <= window_half - m)
                      & (np.abs(zeros.imag) <= window_half - m)]
        if len(inner) == 0:
            raise ConfigurationError("no zeros left after trimming; window too small")
        dist = np.abs(inner[:, None] - lattice[None, :])
        if len(inner) > len(lattice):
            continue
        cands = np.unique(dist.round(12))
        lo, hi = 0, len(cands) - 1
        if _feasible_radius(dist, cands[hi]) is None:
            continue
        best = None
        while lo <= hi:
            mid = (lo + hi) // 2
            match = _feasible_radius(dist, cands[mid])
            if match is not None:
                best = (cands[mid], match)
                hi = mid - 1
            else:
                lo = mid + 1
        radius, match = best
        partners = lattice[match]
        disp = np.abs(inner - partners)
        return Matching(zero_points=inner, lattice_points=partners,
                        bottleneck=float(radius), displacements=disp,
                        n_zeros_inner=len(inner), n_lattice=len(lattice), margin=m)
    raise ConfigurationError("matching infeasible even after margin growth")


def _square_lattice(window_half: float) -> np.ndarray:
    m = int(math.floor(window_half / ROOT_PI))
    g = np.arange(-m, m + 1) * ROOT_PI
    xx, yy = np.meshgrid(g, g)
    return (xx + 1j * yy).ravel()


# -- transportation discrepancy bound -----------------------------------------------


def discrepancy_bound(u_values: np.ndarray, spacing: float, r_list) -> dict:
    """min over r of [ r + sqrt(max_interior |u * chi_r|) ].

    chi_r is the disk indicator normalized to unit discrete L^1 mass, so a
    constant field convolves to itself exactly.  The interior excludes a
    frame of width r so only fully covered convolution values enter the max.
    """
    u = np.asarray(u_values, dtype=float)
    out = []
    for r in sorted(float(x) for x in r_list):
        k = int(math.floor(r / spacing))
        if 2 * k + 1 > min(u.shape):
            raise ConfigurationError(f"grid too small for convolution radius r={r}")
        ax = spacing * np.arange(-k, k + 1)
        mask = (ax[:, None] ** 2 + ax[None, :] ** 2) <= r * r
        kernel = mask / mask.sum()
        conv = fftconvolve(u, kernel, mode="same")
        interior = conv[k:-k, k:-k] if k > 0 else conv
        val = float(np.max(np.abs(interior)))
        out.append({"r": r, "sup_conv": val, "bound": r + math.sqrt(val)})
    best = min(out, key=lambda d: d["bound"])
    return {"bound": best["bound"], "argmin_r": best["r"], "table": out}
