"""Half-space Stokes evaluation through the Lorentz (Oseen) tensor.

A compactly supported stress field F on the upper half plane is extended by
the parity reflection E F(Y1, -Y2) = [F11, -F12; -F21, F22](Y1, Y2); the
velocity of the forced whole-plane Stokes problem

    grad Q = Lap u + div(E F),   div u = 0

is then the convolution u_i = -sum_jk d_k U_ij * (E F)_jk with the tensor

    U_ij(x) = -(1/4 pi) delta_ij log|x| + (1/4 pi) x_i x_j / |x|^2,
    Q_j(x)  = x_j / (2 pi |x|^2),

(unit-disk measure pi).  The parity of the extension makes u2 and the shear
du1/dY2 vanish on the wall, so the restriction solves the free-slip
half-space problem.  Quadrature: trapezoid over the stress lattice with the
cells near the singularity replaced by a polar rule on bilinearly
interpolated data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .grid import RectGrid, ScalarField, VectorField, gradient, integrate


class OseenError(ValueError):
    pass


# ---------------------------------------------------------------------------
# stress fields
# ---------------------------------------------------------------------------

@dataclass
class StressField:
    """2x2 stress samples on the uniform half-plane box [-L, L] x [0, L].

    Arrays are indexed [i, j] with Y1 = -L + i h, Y2 = j h, h = L/m and
    shapes (2m+1, m+1); all components vanish identically beyond the
    support radius r_supp.
    """

    L: float
    m: int
    r_supp: float
    F11: np.ndarray
    F12: np.ndarray
    F21: np.ndarray
    F22: np.ndarray

    def __post_init__(self):
        shape = (2 * self.m + 1, self.m + 1)
        for name in ("F11", "F12", "F21", "F22"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise OseenError(f"{name} has shape {arr.shape}, want {shape}")
            if not np.all(np.isfinite(arr)):
                raise OseenError(f"{name} contains non-finite samples")
            setattr(self, name, arr)
        if not (0.0 < self.r_supp <= self.L):
            raise OseenError("support radius must lie in (0, L]")
        Y1, Y2 = self.nodes()
        outside = np.hypot(Y1, Y2) > self.r_supp
        for name in ("F11", "F12", "F21", "F22"):
            if np.any(getattr(self, name)[outside] != 0.0):
                raise OseenError("stress must vanish beyond the support radius")

    @property
    def h(self) -> float:
        return self.L / self.m

    def nodes(self):
        y1 = np.linspace(-self.L, self.L, 2 * self.m + 1)
        y2 = np.linspace(0.0, self.L, self.m + 1)
        return np.meshgrid(y1, y2, indexing="ij")

    def max_abs(self) -> float:
        return max(np.max(np.abs(self.F11)), np.max(np.abs(self.F12)),
                   np.max(np.abs(self.F21)), np.max(np.abs(self.F22)))


def stress_from_functions(L: float, m: int, r_supp: float,
                          f11=None, f12=None, f21=None, f22=None) -> StressField:
    y1 = np.linspace(-L, L, 2 * m + 1)
    y2 = np.linspace(0.0, L, m + 1)
    Y1, Y2 = np.meshgrid(y1, y2, indexing="ij")
    cut = np.hypot(Y1, Y2) <= r_supp

    def sample(f):
        if f is None:
            return np.zeros_like(Y1)
        return np.where(cut, f(Y1, Y2), 0.0)

    return StressField(L, m, r_supp, sample(f11), sample(f12),
                       sample(f21), sample(f22))


def extend_reflect(F: StressField):
    """Whole-plane samples of E F on the (2m+1)^2 lattice.

    F11 and F22 are extended evenly across the wall, F12 and F21 oddly.
    Returns (grid1d, components dict)."""
    m = F.m

    def ext(arr, sign):
        full = np.zeros((2 * m + 1, 2 * m + 1))
        full[:, m:] = arr
        full[:, :m] = sign * arr[:, :0:-1]
        return full

    comps = {
        (0, 0): ext(F.F11, +1.0),
        (0, 1): ext(F.F12, -1.0),
        (1, 0): ext(F.F21, -1.0),
        (1, 1): ext(F.F22, +1.0),
    }
    y = np.linspace(-F.L, F.L, 2 * m + 1)
    return y, comps


# ---------------------------------------------------------------------------
# Lorentz tensor
# ---------------------------------------------------------------------------

def oseen_U(x1, x2):
    """2x2 tensor U_ij(x); x = 0 is rejected."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    r2 = x1 ** 2 + x2 ** 2
    if np.any(r2 == 0.0):
        raise OseenError("Lorentz tensor is singular at x = 0")
    pref = 1.0 / (4.0 * np.pi)
    logr = 0.5 * np.log(r2)
    U11 = pref * (-logr + x1 * x1 / r2)
    U12 = pref * (x1 * x2 / r2)
    U22 = pref * (-logr + x2 * x2 / r2)
    return U11, U12, U22


def oseen_Q(x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    r2 = x1 ** 2 + x2 ** 2
    if np.any(r2 == 0.0):
        raise OseenError("pressure kernel is singular at x = 0")
    return x1 / (2.0 * np.pi * r2), x2 / (2.0 * np.pi * r2)


def _grad_U(x1, x2):
    """d_k U_ij as a dict[(i, j, k)]; homogeneous of degree -1 and odd."""
    r2 = x1 ** 2 + x2 ** 2
    pref = 1.0 / (4.0 * np.pi)
    x = (x1, x2)
    out = {}
    for i in (0, 1):
        for j in (0, 1):
            for k in (0, 1):
                val = -(1.0 if i == j else 0.0) * x[k] / r2
                val += ((1.0 if i == k else 0.0) * x[j]
                        + (1.0 if j == k else 0.0) * x[i]) / r2
                val -= 2.0 * x[i] * x[j] * x[k] / r2 ** 2
                out[(i, j, k)] = pref * val
    return out


def _grad_Q(x1, x2):
    """d_k Q_j as dict[(j, k)]."""
    r2 = x1 ** 2 + x2 ** 2
    x = (x1, x2)
    out = {}
    for j in (0, 1):
        for k in (0, 1):
            val = (1.0 if j == k else 0.0) / r2 - 2.0 * x[j] * x[k] / r2 ** 2
            out[(j, k)] = val / (2.0 * np.pi)
    return out


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class OseenEval:
    targets: np.ndarray
    u: np.ndarray          # (nt, 2)
    P: np.ndarray | None   # (nt,) when requested
    tolerance: float       # a-posteriori quadrature estimate


def _bilinear(y, comps, pts):
    """Bilinear interpolation of each extended component at pts (n, 2)."""
    h = y[1] - y[0]
    fx = (pts[:, 0] - y[0]) / h
    fy = (pts[:, 1] - y[0]) / h
    i0 = np.clip(np.floor(fx).astype(int), 0, len(y) - 2)
    j0 = np.clip(np.floor(fy).astype(int), 0, len(y) - 2)
    tx = fx - i0
    ty = fy - j0
    out = {}
    for key, arr in comps.items():
        out[key] = (arr[i0, j0] * (1 - tx) * (1 - ty)
                    + arr[i0 + 1, j0] * tx * (1 - ty)
                    + arr[i0, j0 + 1] * (1 - tx) * ty
                    + arr[i0 + 1, j0 + 1] * tx * ty)
    return out


def _polar_patch(radius: float, n_ang: int = 48, n_rad: int = 12):
    """Quadrature nodes/weights on the disk |x| <= radius (polar rule)."""
    xg, wg = leggauss(n_rad)
    r = 0.5 * radius * (xg + 1.0)
    wr = 0.5 * radius * wg
    th = 2.0 * np.pi * np.arange(n_ang) / n_ang
    wth = 2.0 * np.pi / n_ang
    R, TH = np.meshgrid(r, th, indexing="ij")
    WX = (wr[:, None] * wth * R).ravel()
    return (R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel(), WX


def velocity_from_stress(F: StressField, targets: np.ndarray,
                         want_pressure: bool = False,
                         patch_factor: float = 2.0) -> OseenEval:
    """u_i(Y) = -sum_jk int d_k U_ij(Y - z) (E F)_jk(z) dz on the closed
    upper half plane, with the singular disk |z - Y| <= patch_factor*h
    handled by a polar rule on interpolated samples.

    The reported tolerance is the difference against a half-resolution
    re-evaluation (a-posteriori estimate)."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if np.any(targets[:, 1] < 0.0):
        raise OseenError("targets must lie in the closed upper half plane")
    u, P = _eval(F, targets, want_pressure, patch_factor, stride=1)
    u2, P2 = _eval(F, targets, want_pressure, patch_factor, stride=2)
    tol = float(np.max(np.abs(u - u2)))
    return OseenEval(targets, u, P if want_pressure else None, tol)


def _eval(F: StressField, targets, want_pressure, patch_factor, stride):
    y, comps = extend_reflect(F)
    if stride > 1:
        y = y[::stride]
        comps = {k: v[::stride, ::stride] for k, v in comps.items()}
    h = y[1] - y[0]
    delta = patch_factor * h
    width = 3.0 * h  # singularity-subtraction Gaussian width
    Z1, Z2 = np.meshgrid(y, y, indexing="ij")
    w = np.ones(len(y))
    w[0] = w[-1] = 0.5
    W2 = np.outer(w, w) * h * h
    # only the support contributes
    mask_supp = np.hypot(Z1, Z2) <= F.r_supp + h
    z1 = Z1[mask_supp]
    z2 = Z2[mask_supp]
    wts = W2[mask_supp]
    vals = {k: v[mask_supp] for k, v in comps.items()}
    px, py, pw = _polar_patch(delta)

    # central differences of the extended stress for the near-field
    # pressure integrand
    if want_pressure:
        dcomp = {}
        for (j, k), arr in comps.items():
            d1 = np.gradient(arr, h, axis=0, edge_order=2)
            d2 = np.gradient(arr, h, axis=1, edge_order=2)
            dcomp[(j, k, 0)] = d1
            dcomp[(j, k, 1)] = d2

    nt = len(targets)
    u = np.zeros((nt, 2))
    P = np.zeros(nt)
    for t in range(nt):
        Y1, Y2 = targets[t]
        # singularity subtraction: the Gaussian-weighted value at the
        # target integrates to zero against the odd kernel, so subtracting
        # F(Y) exp(-r^2/2w^2) removes the near-field mass without changing
        # the integral
        FY = _bilinear(y, comps, np.array([[Y1, Y2]]))
        dx = Y1 - z1
        dy = Y2 - z2
        r2 = dx ** 2 + dy ** 2
        far = r2 > delta ** 2
        gU = _grad_U(dx[far], dy[far])
        bump_far = np.exp(-r2[far] / (2.0 * width ** 2))
        for i in (0, 1):
            acc = 0.0
            for jj in (0, 1):
                for kk in (0, 1):
                    dev = vals[(jj, kk)][far] - FY[(jj, kk)][0] * bump_far
                    acc += np.dot(gU[(i, jj, kk)] * dev, wts[far])
            u[t, i] = -acc
        # polar patch on |z - Y| <= delta with the same subtraction
        pts = np.column_stack([Y1 - px, Y2 - py])
        inside = np.abs(pts).max(axis=1) <= F.L
        if np.any(inside):
            fv = _bilinear(y, comps, pts[inside])
            gUp = _grad_U(px[inside], py[inside])
            bump_p = np.exp(-(px[inside] ** 2 + py[inside] ** 2)
                            / (2.0 * width ** 2))
            for i in (0, 1):
                acc = 0.0
                for jj in (0, 1):
                    for kk in (0, 1):
                        dev = fv[(jj, kk)] - FY[(jj, kk)][0] * bump_p
                        acc += np.dot(gUp[(i, jj, kk)] * dev, pw[inside])
                u[t, i] -= acc
        if want_pressure:
            # far field: integrate by parts, d_k Q_j against F
            gQ = _grad_Q(dx[far], dy[far])
            acc = 0.0
            for jj in (0, 1):
                for kk in (0, 1):
                    acc += np.dot(gQ[(jj, kk)] * vals[(jj, kk)][far], wts[far])
            # surface term on the patch circle
            nang = 64
            th = 2.0 * np.pi * np.arange(nang) / nang
            cx = delta * np.cos(th)
            cy = delta * np.sin(th)
            spts = np.column_stack([Y1 - cx, Y2 - cy])
            sin_ok = np.abs(spts).max(axis=1) <= F.L
            if np.any(sin_ok):
                fv = _bilinear(y, comps, spts[sin_ok])
                Qx, Qy = oseen_Q(cx[sin_ok], cy[sin_ok])
                nx = -np.cos(th[sin_ok])  # outward normal of the patch at z
                ny = -np.sin(th[sin_ok])
                ds = 2.0 * np.pi * delta / nang
                surf = np.sum((Qx * (fv[(0, 0)] * nx + fv[(0, 1)] * ny)
                               + Qy * (fv[(1, 0)] * nx + fv[(1, 1)] * ny))) * ds
            else:
                surf = 0.0
            # near field: Q against div F (polar rule)
            near = 0.0
            if np.any(inside):
                dfv = _bilinear(y, dcomp, pts[inside])
                Qx, Qy = oseen_Q(px[inside], py[inside])
                near = np.dot(Qx * (dfv[(0, 0, 0)] + dfv[(0, 1, 1)])
                              + Qy * (dfv[(1, 0, 0)] + dfv[(1, 1, 1)]),
                              pw[inside])
            P[t] = acc - surf + near
    return u, P


# ---------------------------------------------------------------------------
# pressure and decay
# ---------------------------------------------------------------------------

def pressure_from_stress(F: StressField, targets: np.ndarray,
                         patch_factor: float = 2.0) -> np.ndarray:
    ev = velocity_from_stress(F, targets, want_pressure=True,
                              patch_factor=patch_factor)
    return ev.P


def _hess_U(x1, x2):
    """d_l d_k U_ij as dict[(i, j, k, l)]; even, homogeneous degree -2."""
    r2 = x1 ** 2 + x2 ** 2
    x = (x1, x2)
    d = lambda a, b: 1.0 if a == b else 0.0
    out = {}
    for i in (0, 1):
        for j in (0, 1):
            for k in (0, 1):
                for l in (0, 1):
                    val = -d(i, j) * (d(k, l) / r2 - 2.0 * x[k] * x[l] / r2 ** 2)
                    val += (d(i, k) * d(j, l) + d(j, k) * d(i, l)) / r2
                    val -= 2.0 * (d(i, k) * x[j] + d(j, k) * x[i]) * x[l] / r2 ** 2
                    val -= 2.0 * (d(i, l) * x[j] * x[k] + d(j, l) * x[i] * x[k]
                                  + d(k, l) * x[i] * x[j]) / r2 ** 2
                    val += 8.0 * x[i] * x[j] * x[k] * x[l] / r2 ** 3
                    out[(i, j, k, l)] = val / (4.0 * np.pi)
    return out


def wall_shear(F: StressField, y1_samples: np.ndarray) -> np.ndarray:
    """d u1 / d Y2 on the wall Y2 = 0, by differentiating under the
    integral: the second-derivative kernel paired with the parity of the
    reflected stress cancels pairwise on the wall-symmetric lattice, so the
    principal value is computed directly (the excluded singular disk
    contributes zero by the same symmetry)."""
    y, comps = extend_reflect(F)
    h = y[1] - y[0]
    delta = 2.0 * h
    Z1, Z2 = np.meshgrid(y, y, indexing="ij")
    w = np.ones(len(y))
    w[0] = w[-1] = 0.5
    W2 = np.outer(w, w) * h * h
    mask_supp = np.hypot(Z1, Z2) <= F.r_supp + h
    z1 = Z1[mask_supp]
    z2 = Z2[mask_supp]
    wts = W2[mask_supp]
    vals = {k: v[mask_supp] for k, v in comps.items()}
    out = np.zeros(len(np.atleast_1d(y1_samples)))
    for t, Y1 in enumerate(np.atleast_1d(y1_samples)):
        dx = Y1 - z1
        dy = -z2
        r2 = dx ** 2 + dy ** 2
        far = r2 > delta ** 2
        H = _hess_U(dx[far], dy[far])
        acc = 0.0
        for jj in (0, 1):
            for kk in (0, 1):
                acc += np.dot(H[(0, jj, kk, 1)] * vals[(jj, kk)][far],
                              wts[far])
        out[t] = -acc
    return out


def check_decay(F: StressField, radii, n_angles: int = 12) -> dict:
    """Fitted log-log decay exponents of max|u|, max|P| and max|grad u| on
    upper-half rings of the given radii (all beyond twice the support)."""
    radii = np.asarray(radii, dtype=float)
    if radii.size < 4:
        raise OseenError("need at least 4 radii for a decay fit")
    if np.any(radii < 2.0 * F.r_supp):
        raise OseenError("decay radii must exceed twice the support radius")
    th = np.linspace(0.05, np.pi - 0.05, n_angles)
    d = 1e-3 * F.r_supp
    umax, pmax, gmax = [], [], []
    for r in radii:
        base = np.column_stack([r * np.cos(th), r * np.sin(th)])
        ev = velocity_from_stress(F, base, want_pressure=True)
        umax.append(np.max(np.hypot(ev.u[:, 0], ev.u[:, 1])))
        pmax.append(np.max(np.abs(ev.P)))
        shifted = np.vstack([base + [d, 0.0], base - [d, 0.0],
                             base + [0.0, d], base - [0.0, d]])
        us = velocity_from_stress(F, shifted).u
        n = len(base)
        gx = (us[:n] - us[n:2 * n]) / (2 * d)
        gy = (us[2 * n:3 * n] - us[3 * n:]) / (2 * d)
        gmax.append(np.max(np.abs(np.concatenate([gx, gy]))))
    fit = lambda v: float(-np.polyfit(np.log(radii), np.log(v), 1)[0])
    return {
        "radii": radii,
        "u_exponent": fit(umax),
        "P_exponent": fit(pmax),
        "grad_u_exponent": fit(gmax),
        "max_u": np.array(umax),
        "max_P": np.array(pmax),
        "max_grad_u": np.array(gmax),
    }


# ---------------------------------------------------------------------------
# compatibility identities on the rectangle
# ---------------------------------------------------------------------------

def check_compatibility(c: ScalarField, u: VectorField | None = None,
                        rotation: float = 1.0) -> tuple[float, float]:
    """Solvability identities for the stress grad(c) x grad(c) against the
    rigid field beta = rotation * (-y, x).

    Returns (|boundary term|, |int F : grad beta|): the wall integral of
    (F nu)_tau . beta vanishes with the Neumann data of c, and the
    contraction vanishes identically because F is symmetric and grad beta
    antisymmetric.
    """
    g = c.grid
    gc = gradient(c)
    cx, cy = gc.ux.values, gc.uy.values
    F11 = cx * cx
    F12 = cx * cy
    F22 = cy * cy
    X, Y = g.nodes()
    bx = -rotation * Y
    by = rotation * X

    # contraction: F : grad beta with (grad beta)_ij = d_i beta_j
    dbx_dy = np.gradient(bx, g.hy, axis=1, edge_order=2)
    dby_dx = np.gradient(by, g.hx, axis=0, edge_order=2)
    contraction = integrate(ScalarField(g, F12 * dby_dx + F12 * dbx_dy))

    # boundary term: sum over the four walls of (F nu)_tau . beta
    def edge_integral(idx, nu, axis):
        if axis == 0:
            fx, fy = F11[idx, :], F12[idx, :]
            f2x, f2y = F12[idx, :], F22[idx, :]
            b1, b2 = bx[idx, :], by[idx, :]
            w = np.ones(g.ny)
            w[0] = w[-1] = 0.5
            ds = g.hy
        else:
            fx, fy = F11[:, idx], F12[:, idx]
            f2x, f2y = F12[:, idx], F22[:, idx]
            b1, b2 = bx[:, idx], by[:, idx]
            w = np.ones(g.nx)
            w[0] = w[-1] = 0.5
            ds = g.hx
        Fn1 = fx * nu[0] + fy * nu[1]
        Fn2 = f2x * nu[0] + f2y * nu[1]
        # tangential projection: subtract the normal component
        dot_n = Fn1 * nu[0] + Fn2 * nu[1]
        t1 = Fn1 - dot_n * nu[0]
        t2 = Fn2 - dot_n * nu[1]
        return np.sum(w * (t1 * b1 + t2 * b2)) * ds

    boundary = (edge_integral(0, (-1.0, 0.0), axis=0)
                + edge_integral(-1, (1.0, 0.0), axis=0)
                + edge_integral(0, (0.0, -1.0), axis=1)
                + edge_integral(-1, (0.0, 1.0), axis=1))
    return abs(boundary), abs(contraction)


def advective_pairing(u: VectorField, beta=("rotation", 1.0)) -> float:
    """int (u . grad u) . beta, the left side of the stress solvability
    identity; vanishes for impermeable u when beta is rigid."""
    g = u.grid
    X, Y = g.nodes()
    if beta[0] == "rotation":
        bx, by = -beta[1] * Y, beta[1] * X
    else:
        bx = np.full(g.shape, beta[1][0])
        by = np.full(g.shape, beta[1][1])
    dux = gradient(u.ux)
    duy = gradient(u.uy)
    ax = u.ux.values * dux.ux.values + u.uy.values * dux.uy.values
    ay = u.ux.values * duy.ux.values + u.uy.values * duy.uy.values
    return integrate(ScalarField(g, ax * bx + ay * by))
