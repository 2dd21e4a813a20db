"""Coupled two-mode (vertical v1 + torsional t1) flutter analysis.

The flutter condition is the vanishing of ``det E(K, chi)`` where ``E`` is the
2x2 complex matrix of the Fourier-domain generalized equations and
``chi = K/K_t1`` the frequency ratio.  ``solve_flutter`` searches it directly;
``eigen_sweep_oracle`` is an independent state-space check.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .derivatives import NAMES
from .errors import DomainError, NoFlutterInRange, NumericalFailure

_IDX = {name: i for i, name in enumerate(NAMES)}


def _sine_shape(span, waves=1):
    return lambda x: np.sin(2 * np.pi * waves * np.asarray(x) / span)


@dataclass
class BridgeModel:
    """Deck constants and the two participating mode shapes.

    ``shape_v1`` and ``shape_t1`` are callables of the span coordinate or
    ``(x, values)`` samples over ``[0, span]``; ``None`` selects the first
    antisymmetric shape ``sin(2*pi*x/span)``.
    """

    B: float
    span: float
    m0: float
    I0: float
    rho: float = 1.225
    shape_v1: object = None
    shape_t1: object = None

    def __post_init__(self):
        for name in ("B", "span", "m0", "I0"):
            if not getattr(self, name) > 0:
                raise DomainError(f"bridge constant {name} must be positive")
        if self.rho < 0:
            raise DomainError("air density must be non-negative")

    def to_dict(self):
        return {"B": self.B, "span": self.span, "m0": self.m0, "I0": self.I0, "rho": self.rho}


@dataclass
class ModalIntegrals:
    G_v1v1: float
    G_t1t1: float
    G_v1t1: float
    I_v1: float
    I_t1: float
    q_v1: float
    q_t1: float


@dataclass
class FlutterSolution:
    U_cr: float
    K: float
    chi: float
    omega_F: float
    crossings: list = field(default_factory=list)

    @property
    def ur(self):
        return 2 * np.pi / self.K

    def to_dict(self):
        return {
            "U_cr": self.U_cr,
            "K": self.K,
            "chi": self.chi,
            "omega_F": self.omega_F,
            "flutter_frequency_hz": self.omega_F / (2 * np.pi),
            "ur": self.ur,
            "crossings": self.crossings,
        }


def _shape_samples(shape, span, n=4001):
    if shape is None:
        shape = _sine_shape(span)
    if callable(shape):
        x = np.linspace(0.0, span, n)
        return x, np.asarray(shape(x), dtype=float)
    x, y = (np.asarray(a, dtype=float) for a in shape)
    return x, y


def modal_integrals(bridge):
    """Span-normalized shape integrals, generalized inertias and force coefficients."""
    xv, hv = _shape_samples(bridge.shape_v1, bridge.span)
    xt, at = _shape_samples(bridge.shape_t1, bridge.span)
    if bridge.shape_v1 is None and bridge.shape_t1 is None:
        G_vv = G_tt = G_vt = 0.5
    else:
        if xv.shape != xt.shape or not np.allclose(xv, xt):
            at = np.interp(xv, xt, at)
        G_vv = integrate.simpson(hv**2, x=xv) / bridge.span
        G_tt = integrate.simpson(at**2, x=xv) / bridge.span
        G_vt = integrate.simpson(hv * at, x=xv) / bridge.span
    if G_vv <= 0 or G_tt <= 0:
        raise DomainError("degenerate mode shape (zero integral of its square)")
    I_v = bridge.m0 * bridge.span * bridge.B**2 * G_vv
    I_t = bridge.I0 * bridge.span * G_tt
    base = 0.5 * bridge.rho * bridge.B**4 * bridge.span
    return ModalIntegrals(
        G_v1v1=float(G_vv), G_t1t1=float(G_tt), G_v1t1=float(G_vt),
        I_v1=float(I_v), I_t1=float(I_t), q_v1=base / I_v, q_t1=base / I_t,
    )


def _det_coefficients(d, mi, zeta_v1, zeta_t1, ratio, corrected=True):
    """Complex polynomial coefficients (ascending powers of chi) of the E entries.

    ``d`` holds the eight derivatives, possibly as arrays over K.
    """
    H1, H2, H3, H4, A1, A2, A3, A4 = d
    qv, qt = mi.q_v1, mi.q_t1
    e11 = (ratio**2, 2j * zeta_v1 * ratio, -1 - qv * mi.G_v1v1 * (H4 + 1j * H1))
    e12 = -qv * mi.G_v1t1 * (H3 + 1j * H2)
    q21 = qt if corrected else qv
    e21 = -q21 * mi.G_v1t1 * (A4 + 1j * A1)
    lead22 = -1.0 if corrected else 1.0
    e22 = (1.0, 2j * zeta_t1, lead22 - qt * mi.G_t1t1 * (A3 + 1j * A2))
    return e11, e12, e21, e22


def assemble_E(K, chi, integrals, derivs, zeta_v1, zeta_t1, ratio, corrected=True):
    """The 2x2 complex flutter matrix at reduced frequency ``K`` and ratio ``chi``.

    ``ratio`` is ``K_v1/K_t1 = f_v1/f_t1``.  ``derivs`` is a derivative set or
    an already evaluated length-8 array.  ``corrected=False`` reproduces the
    printed variant (``chi**2 + 1`` leading term and ``q_v1`` on E21).
    """
    if K <= 0 or chi <= 0:
        raise DomainError("K and chi must be positive")
    d = derivs.evaluate(K) if hasattr(derivs, "evaluate") else np.asarray(derivs)
    e11, e12, e21, e22 = _det_coefficients(d, integrals, zeta_v1, zeta_t1, ratio, corrected)
    c2 = chi**2
    return np.array([
        [e11[0] + e11[1] * chi + e11[2] * c2, e12 * c2],
        [e21 * c2, e22[0] + e22[1] * chi + e22[2] * c2],
    ])


def _det_poly(d, mi, zeta_v1, zeta_t1, ratio, corrected=True):
    """Quartic det E(chi) coefficients, ascending order, shape ``(5,) + K.shape``."""
    e11, e12, e21, e22 = _det_coefficients(d, mi, zeta_v1, zeta_t1, ratio, corrected)
    shape = np.shape(e12)
    p = np.zeros((5,) + shape, dtype=complex)
    for i in range(3):
        for j in range(3):
            p[i + j] = p[i + j] + e11[i] * e22[j]
    p[4] = p[4] - e12 * e21
    return p


def _polyval(p, x):
    # ascending coefficients, p[:, None] broadcast against x
    out = np.zeros(np.broadcast_shapes(p.shape[1:], np.shape(x)), dtype=p.dtype)
    for c in p[::-1]:
        out = out * x + c
    return out


class _Branches:
    """Positive real roots of Re det and Im det/chi in chi at fixed K."""

    def __init__(self, chi_grid):
        self.chi_grid = chi_grid

    def approx_roots(self, coeffs):
        """Sign changes on the chi grid for each K row, polished by Newton steps.

        ``coeffs`` has shape ``(nK, ncoef)``.  Polishing keeps the sign of the
        branch gap consistent with the bracketed roots used in refinement.
        """
        x = self.chi_grid
        vals = _polyval(coeffs.T[:, :, None], x[None, :])  # (nK, nchi)
        deriv = coeffs[:, 1:] * np.arange(1, coeffs.shape[1])
        out = []
        for row, c, dc in zip(vals, coeffs, deriv):
            s = np.sign(row)
            idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
            lo, hi = x[idx], x[idx + 1]
            r = lo - row[idx] * (hi - lo) / (row[idx + 1] - row[idx])
            for _ in range(3):
                step = _polyval(c[:, None], r) / _polyval(dc[:, None], r)
                r = np.clip(r - step, lo, hi)
            out.append(r)
        return out

    def exact_root_near(self, coeffs, ref):
        """Bracket the root nearest ``ref`` on the grid and refine it by Brent's method."""
        x = self.chi_grid
        vals = _polyval(coeffs[:, None], x)
        s = np.sign(vals)
        idx = np.nonzero(s[:-1] * s[1:] <= 0)[0]
        if idx.size == 0:
            return np.nan
        mids = 0.5 * (x[idx] + x[idx + 1])
        i = idx[np.argmin(np.abs(mids - ref))]
        a, b = x[i], x[i + 1]
        fa = _polyval(coeffs[:, None], np.array([a]))[0]
        if fa == 0:
            return a
        return optimize.brentq(lambda c: _polyval(coeffs[:, None], np.array([c]))[0], a, b,
                               xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def solve_flutter(bridge, derivatives, f_v1, f_t1, zeta_v1, zeta_t1, ur_range=(5.0, 16.0),
                  n_k=240, chi_range=(0.02, 3.0), n_chi=1500, corrected=True,
                  integrals=None):
    """Critical wind speed from the determinant condition det E(K, chi) = 0.

    For each K on a grid spanning ``ur_range`` the real-part and imaginary-part
    root branches in chi are located; a flutter point is a K where a real-part
    branch and an imaginary-part branch cross.  Crossings are refined on the
    branch gap and the one with the lowest critical speed is returned; all are
    listed in ``crossings``.
    """
    if not f_t1 > f_v1 > 0:
        raise DomainError("expected f_t1 > f_v1 > 0")
    for z in (zeta_v1, zeta_t1):
        if not 0 < z < 0.2:
            raise DomainError("damping ratios must lie in (0, 0.2)")
    mi = integrals or modal_integrals(bridge)
    ratio = f_v1 / f_t1
    omega_t = 2 * np.pi * f_t1
    ur = np.linspace(ur_range[0], ur_range[1], n_k)
    Ks = 2 * np.pi / ur
    try:
        d_grid = derivatives.evaluate(Ks)
    except DomainError as exc:
        raise DomainError(
            f"scan range U_r in [{ur_range[0]:g}, {ur_range[1]:g}] exceeds the derivative "
            "valid range [{:g}, {:g}]".format(*derivatives.ur_range)
        ) from exc

    branches = _Branches(np.linspace(chi_range[0], chi_range[1], n_chi))
    poly = _det_poly(d_grid, mi, zeta_v1, zeta_t1, ratio, corrected)
    re_c = poly.real.T  # (nK, 5)
    im_c = poly.imag[1:].T  # Im det has a trivial root at chi = 0
    re_roots = branches.approx_roots(re_c)
    im_roots = branches.approx_roots(im_c)

    def coeffs_at(K):
        d = derivatives.evaluate(K)
        p = _det_poly(d, mi, zeta_v1, zeta_t1, ratio, corrected)
        return p.real, p.imag[1:]

    def gap(K, ref_r, ref_i):
        pr, pi_ = coeffs_at(K)
        cr = branches.exact_root_near(pr, ref_r)
        ci = branches.exact_root_near(pi_, ref_i)
        return cr - ci, cr, ci

    crossings = []
    for m in range(n_k - 1):
        for cr0 in re_roots[m]:
            for ci0 in im_roots[m]:
                if re_roots[m + 1].size == 0 or im_roots[m + 1].size == 0:
                    continue
                cr1 = re_roots[m + 1][np.argmin(np.abs(re_roots[m + 1] - cr0))]
                ci1 = im_roots[m + 1][np.argmin(np.abs(im_roots[m + 1] - ci0))]
                if (cr0 - ci0) * (cr1 - ci1) > 0:
                    continue
                # reject sign flips caused by branch jumps rather than true crossings
                step = max(abs(cr1 - cr0), abs(ci1 - ci0))
                if step > 0.2:
                    continue
                Ka, Kb = Ks[m], Ks[m + 1]

                def g(K, Ka=Ka, Kb=Kb, cr0=cr0, cr1=cr1, ci0=ci0, ci1=ci1):
                    w = (K - Ka) / (Kb - Ka)
                    return gap(K, cr0 + w * (cr1 - cr0), ci0 + w * (ci1 - ci0))[0]

                ga, gb = g(Ka), g(Kb)
                if not (np.isfinite(ga) and np.isfinite(gb)) or ga * gb > 0:
                    continue
                Kst = optimize.brentq(g, Ka, Kb, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                                      maxiter=200)
                w = (Kst - Ka) / (Kb - Ka)
                dchi, cr, ci = gap(Kst, cr0 + w * (cr1 - cr0), ci0 + w * (ci1 - ci0))
                if abs(dchi) >= 1e-8:
                    raise NumericalFailure(
                        f"branch gap did not close at K={Kst:.6g} (|dchi|={abs(dchi):.2e})"
                    )
                chi = 0.5 * (cr + ci)
                U = chi * omega_t * bridge.B / Kst
                crossings.append({"K": float(Kst), "chi": float(chi), "U": float(U),
                                  "ur": float(2 * np.pi / Kst)})
    if not crossings:
        raise NoFlutterInRange(
            f"no flutter crossing for U_r in [{ur_range[0]:g}, {ur_range[1]:g}]"
        )
    crossings.sort(key=lambda c: c["U"])
    best = crossings[0]
    return FlutterSolution(U_cr=best["U"], K=best["K"], chi=best["chi"],
                           omega_F=best["chi"] * omega_t, crossings=crossings)


def det_residual(solution, bridge, derivatives, f_v1, f_t1, zeta_v1, zeta_t1, corrected=True):
    """|det E| at the solution divided by the squared largest entry magnitude."""
    E = assemble_E(solution.K, solution.chi, modal_integrals(bridge), derivatives,
                   zeta_v1, zeta_t1, f_v1 / f_t1, corrected)
    return abs(np.linalg.det(E)) / np.max(np.abs(E)) ** 2


def branch_table(bridge, derivatives, f_v1, f_t1, zeta_v1, zeta_t1, ur_range=(5.0, 16.0),
                 n_k=240, chi_range=(0.02, 3.0), n_chi=1500, corrected=True):
    """Rows ``(ur, K, kind, chi)`` of the scanned det branches, for diagnostics."""
    mi = modal_integrals(bridge)
    ur = np.linspace(ur_range[0], ur_range[1], n_k)
    Ks = 2 * np.pi / ur
    poly = _det_poly(derivatives.evaluate(Ks), mi, zeta_v1, zeta_t1, f_v1 / f_t1, corrected)
    branches = _Branches(np.linspace(chi_range[0], chi_range[1], n_chi))
    rows = []
    for kind, roots in (("real", branches.approx_roots(poly.real.T)),
                        ("imag", branches.approx_roots(poly.imag[1:].T))):
        for u, K, rs in zip(ur, Ks, roots):
            rows.extend((float(u), float(K), kind, float(r)) for r in rs)
    return rows


# --- independent state-space oracle -------------------------------------------------


def _state_matrix(U, omega, d, mi, bridge, f_v1, f_t1, zeta_v1, zeta_t1):
    H1, H2, H3, H4, A1, A2, A3, A4 = d
    wv, wt = 2 * np.pi * f_v1, 2 * np.pi * f_t1
    q = np.array([[mi.q_v1], [mi.q_t1]])
    Cae = q * np.array([[H1 * mi.G_v1v1, H2 * mi.G_v1t1], [A1 * mi.G_v1t1, A2 * mi.G_t1t1]])
    Kae = q * np.array([[H4 * mi.G_v1v1, H3 * mi.G_v1t1], [A4 * mi.G_v1t1, A3 * mi.G_t1t1]])
    C = np.diag([2 * zeta_v1 * wv, 2 * zeta_t1 * wt]) - omega * Cae
    Kmat = np.diag([wv**2, wt**2]) - omega**2 * Kae
    return np.block([[np.zeros((2, 2)), np.eye(2)], [-Kmat, -C]])


class _OutOfRange(Exception):
    pass


def _branch_eigen(U, rank, omega0, derivatives, mi, bridge, f_v1, f_t1, zeta_v1, zeta_t1,
                  tol=1e-8, max_iter=500):
    """Fixed-point iteration on the response frequency of one eigen-branch.

    Branches are identified by frequency rank (0 = vertical-like, 1 =
    torsional-like).  Returns ``(lambda, omega)`` or ``None`` when the branch
    frequency leaves the derivative valid range or the branch is overdamped.
    """
    lo, hi = derivatives.ur_range

    def eig(omega):
        K = omega * bridge.B / U
        if omega <= 0:
            raise _OutOfRange
        ur = 2 * np.pi / K
        if not derivatives.allow_extrapolation and not (lo <= ur <= hi):
            raise _OutOfRange
        d = derivatives.evaluate(K)
        lam = np.linalg.eigvals(_state_matrix(U, omega, d, mi, bridge, f_v1, f_t1,
                                              zeta_v1, zeta_t1))
        lam = np.sort_complex(lam[lam.imag > 0] * -1j) * 1j  # ascending imaginary part
        if lam.size < 2:
            # one pair went overdamped; only the surviving oscillatory pair is the upper branch
            if lam.size == 0 or rank == 0:
                raise _OutOfRange
            return lam[0]
        return lam[rank]

    def converged(a, b):
        return abs(b - a) <= tol * abs(b)

    try:
        w0 = omega0
        for _ in range(max_iter):
            w1 = eig(w0).imag
            if converged(w0, w1):
                omega = w1
                break
            w2 = eig(w1).imag
            if converged(w1, w2):
                omega = w2
                break
            # safeguarded Aitken extrapolation; plain substitution when it misbehaves
            nxt = w2
            denom = w2 - 2 * w1 + w0
            if denom != 0:
                wa = w0 - (w1 - w0) ** 2 / denom
                if 0 < wa and abs(wa - w2) < 0.5 * w2:
                    try:
                        eig(wa)
                        nxt = wa
                    except _OutOfRange:
                        pass
            w0 = nxt
        else:
            raise NumericalFailure(f"frequency fixed point did not converge at U={U:.6g}")
        lam = eig(omega)
    except _OutOfRange:
        return None
    return lam, float(omega)


def eigen_sweep_oracle(bridge, derivatives, f_v1, f_t1, zeta_v1, zeta_t1, U_range=None,
                       n_u=200, integrals=None):
    """Smallest wind speed at which an aeroelastic eigenvalue crosses into instability.

    Both eigen-branches are tracked (seeded at the vertical and torsional
    natural frequencies); at each speed the branch frequency is iterated until
    the derivatives are evaluated at the branch's own response frequency.
    """
    mi = integrals or modal_integrals(bridge)
    if U_range is None:
        lo, hi = derivatives.ur_range
        lo = max(lo, 1.0)
        hi = hi if np.isfinite(hi) else 30.0
        U_range = (0.5 * lo * f_v1 * bridge.B, 1.5 * hi * f_t1 * bridge.B)
    Us = np.linspace(U_range[0], U_range[1], n_u)
    starts = (2 * np.pi * f_v1, 2 * np.pi * f_t1)
    args = (derivatives, mi, bridge, f_v1, f_t1, zeta_v1, zeta_t1)

    def growth(U, rank):
        r = _branch_eigen(U, rank, starts[rank], *args)
        return (np.nan, np.nan) if r is None else (r[0].real, r[1])

    best = None
    for rank in (0, 1):
        prev = None
        for U in Us:
            g, _ = growth(U, rank)
            if np.isnan(g):
                prev = None
                continue
            if prev is not None and prev[1] < 0 <= g:
                Ua, Ub = prev[0], U
                for _ in range(200):
                    Um = 0.5 * (Ua + Ub)
                    gm, _ = growth(Um, rank)
                    if np.isnan(gm):
                        raise NumericalFailure("branch left the derivative range during bisection")
                    if gm < 0:
                        Ua = Um
                    else:
                        Ub = Um
                    if Ub - Ua <= 1e-12 * Ub:
                        break
                Uc = 0.5 * (Ua + Ub)
                if best is None or Uc < best[0]:
                    _, omega = growth(Uc, rank)
                    best = (Uc, omega)
                break
            prev = (U, g)
    if best is None:
        raise NoFlutterInRange(
            f"no eigenvalue crossing for U in [{U_range[0]:.4g}, {U_range[1]:.4g}] m/s"
        )
    Uc, omega = best
    K = omega * bridge.B / Uc
    return FlutterSolution(U_cr=float(Uc), K=float(K), chi=float(omega / (2 * np.pi * f_t1)),
                           omega_F=float(omega))
