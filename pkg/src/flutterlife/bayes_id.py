"""Bayesian FFT identification of a single well-separated mode.

For one mode the model spectral density ``H_k = S / ((b^2-1)^2 + (2 zeta b)^2)``
(``b = f/f_k``) is real, so the FFT covariance ``C_k`` has eigenvalue
``(S*D_k + s2)/2`` on the two directions ``[phi; 0]`` and ``[0; phi]`` and
``s2/2`` elsewhere.  ``nll`` uses that closed form; ``nll_dense`` assembles
``C_k`` explicitly and serves as the reference implementation.
"""

import logging
import warnings
from dataclasses import dataclass, field, replace
from datetime import datetime

import numpy as np
from scipy import ndimage, optimize

from .errors import DomainError, IdentificationSkipped, NumericalFailure

log = logging.getLogger(__name__)

PARAM_NAMES = ("f", "zeta", "S", "sigma2")
COV_F_LIMIT = 0.05
ZETA_LIMITS = (1e-4, 0.1)


@dataclass(frozen=True)
class FrequencyBand:
    f_lo: float
    f_hi: float
    name: str = ""

    def __post_init__(self):
        if not 0 < self.f_lo < self.f_hi:
            raise DomainError("band requires 0 < f_lo < f_hi")

    @property
    def center(self):
        return 0.5 * (self.f_lo + self.f_hi)


@dataclass
class ModalTheta:
    f: float
    zeta: float
    phi: np.ndarray
    S: float
    sigma2: float

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)

    def canonical(self):
        """Copy with unit-norm ``phi`` whose first nonzero component is positive."""
        phi = self.phi / np.linalg.norm(self.phi)
        nz = np.nonzero(np.abs(phi) > 1e-12)[0]
        if nz.size and phi[nz[0]] < 0:
            phi = -phi
        return replace(self, phi=phi)


@dataclass
class ModalEstimate:
    mpv: ModalTheta
    posterior_covariance: np.ndarray = field(repr=False)
    cov_f: float
    cov_zeta: float
    segment_time: datetime = None
    band: FrequencyBand = None
    converged: bool = True
    flagged: bool = False
    flag_reason: str = ""
    nll: float = float("nan")

    @property
    def std(self):
        """Posterior standard deviations of (f, zeta, S, sigma2)."""
        return np.sqrt(np.diag(self.posterior_covariance)[:4])

    def to_record(self):
        rec = {
            "timestamp": self.segment_time.isoformat() if self.segment_time else None,
            "band": {"name": self.band.name, "f_lo": self.band.f_lo, "f_hi": self.band.f_hi}
            if self.band else None,
            "status": "flagged" if self.flagged else "ok",
            "converged": self.converged,
            "f": self.mpv.f,
            "zeta": self.mpv.zeta,
            "S": self.mpv.S,
            "sigma2": self.mpv.sigma2,
            "phi": self.mpv.phi.tolist(),
            "cov_f": self.cov_f,
            "cov_zeta": self.cov_zeta,
            "std": dict(zip(PARAM_NAMES, self.std.tolist())),
            "nll": self.nll,
        }
        if self.flagged:
            rec["flag_reason"] = self.flag_reason
        return rec


def _dynamic_amplification(f, zeta, fk):
    beta = f / fk
    return 1.0 / ((beta**2 - 1) ** 2 + (2 * zeta * beta) ** 2)


def spectral_model(theta, fk):
    """Model spectral density ``H_k`` (complex, 1x1) and the 2n x 2n covariance ``C_k``."""
    if not fk > 0:
        raise DomainError("frequency must be positive")
    beta = theta.f / fk
    a = (beta**2 - 1) + 1j * (2 * theta.zeta * beta)
    H = complex(theta.S / abs(a) ** 2)  # real for a single mode
    phi = np.asarray(theta.phi, dtype=float)
    n = phi.size
    outer = np.outer(phi, phi)
    re, im = H.real * outer, H.imag * outer
    C = 0.5 * np.block([[re, -im], [im, re]]) + 0.5 * theta.sigma2 * np.eye(2 * n)
    return np.atleast_2d(H), C


def _band_data(fft, band, min_points=20):
    freqs, Z = fft.band(band.f_lo, band.f_hi)
    if freqs.size < min_points:
        raise DomainError(
            f"band [{band.f_lo:g}, {band.f_hi:g}] Hz holds {freqs.size} FFT ordinates; "
            f"at least {min_points} are required"
        )
    return freqs, Z


def _nll_terms(theta_vec, phi, freqs, Z):
    f, zeta, S, s2 = theta_vec
    n = Z.shape[1] // 2
    F, G = Z[:, :n], Z[:, n:]
    D = _dynamic_amplification(f, zeta, freqs)
    lam = S * D
    p = (F @ phi) ** 2 + (G @ phi) ** 2
    E = np.sum(Z**2, axis=1)
    return lam, p, E, D, n


def nll_vec(theta_vec, phi, freqs, Z):
    """Negative log-likelihood for (f, zeta, S, sigma2) and unit ``phi`` on band data."""
    s2 = theta_vec[3]
    lam, p, E, _, n = _nll_terms(theta_vec, phi, freqs, Z)
    if s2 <= 0 or np.any(lam + s2 <= 0):
        raise NumericalFailure("singular covariance (non-positive prediction-error PSD)")
    return float(np.sum(
        np.log(0.5 * (lam + s2)) + (n - 1) * np.log(0.5 * s2)
        + (E - p) / s2 + p / (lam + s2)
    ))


def nll(theta, fft, band):
    """Negative log-likelihood ``0.5 * sum_k [ln det C_k + Z_k^T C_k^-1 Z_k]`` over ``band``."""
    freqs, Z = _band_data(fft, band)
    phi = np.asarray(theta.phi, dtype=float)
    phi = phi / np.linalg.norm(phi)
    return nll_vec((theta.f, theta.zeta, theta.S, theta.sigma2), phi, freqs, Z)


def nll_dense(theta, freqs, Z):
    """Reference evaluation with explicit ``C_k`` matrices and dense linear algebra."""
    total = 0.0
    for fk, z in zip(freqs, Z):
        _, C = spectral_model(theta, fk)
        sign, logdet = np.linalg.slogdet(C)
        if sign <= 0:
            raise NumericalFailure("covariance matrix is not positive definite")
        total += 0.5 * (logdet + z @ np.linalg.solve(C, z))
    return total


def nll_gradient(theta_vec, phi, freqs, Z):
    """Analytic gradient of ``nll_vec`` w.r.t. (f, zeta, S, sigma2) and unconstrained ``phi``."""
    f, zeta, S, s2 = theta_vec
    lam, p, E, D, n = _nll_terms(theta_vec, phi, freqs, Z)
    tot = lam + s2
    dL_dlam = 1 / tot - p / tot**2
    beta = f / freqs
    dg_df = (4 * beta * (beta**2 - 1) + 8 * zeta**2 * beta) / freqs
    dD_df = -(D**2) * dg_df
    dD_dz = -(D**2) * 8 * zeta * beta**2
    g_f = np.sum(dL_dlam * S * dD_df)
    g_z = np.sum(dL_dlam * S * dD_dz)
    g_S = np.sum(dL_dlam * D)
    g_s2 = np.sum(1 / tot + (n - 1) / s2 - (E - p) / s2**2 - p / tot**2)
    nn = Z.shape[1] // 2
    F, G = Z[:, :nn], Z[:, nn:]
    w = 1 / s2 - 1 / tot
    g_phi = -2 * (F.T @ (w * (F @ phi)) + G.T @ (w * (G @ phi)))
    return np.array([g_f, g_z, g_S, g_s2]), g_phi


def _optimal_phi(theta_vec, freqs, Z):
    """Mode shape minimizing the NLL for fixed spectral parameters (leading eigenvector)."""
    f, zeta, S, s2 = theta_vec
    lam = S * _dynamic_amplification(f, zeta, freqs)
    w = 1 / s2 - 1 / (lam + s2)
    n = Z.shape[1] // 2
    F, G = Z[:, :n], Z[:, n:]
    M = (F * w[:, None]).T @ F + (G * w[:, None]).T @ G
    vals, vecs = np.linalg.eigh(M)
    return vecs[:, -1]


def initial_guess(fft, band, smooth_bins=None):
    """Starting point from the smoothed, channel-summed periodogram of the band.

    Raises ``IdentificationSkipped`` when the smoothed peak is not at least
    3 dB above the band-edge level.
    """
    freqs, Z = _band_data(fft, band)
    n = Z.shape[1] // 2
    trace = np.sum(Z**2, axis=1)
    m = smooth_bins or max(3, freqs.size // 12)
    smooth = ndimage.uniform_filter1d(trace, size=m, mode="nearest")
    edge_n = max(2, freqs.size // 10)
    edge = 0.5 * (np.mean(trace[:edge_n]) + np.mean(trace[-edge_n:]))
    ipk = int(np.argmax(smooth))
    peak = smooth[ipk]
    if not peak > 2.0 * edge or ipk < edge_n or ipk >= freqs.size - edge_n:
        raise IdentificationSkipped(
            f"no spectral peak 3 dB above the edges in [{band.f_lo:g}, {band.f_hi:g}] Hz"
        )
    # raw-spectrum peak near the smoothed maximum locates the frequency to one bin
    lo, hi = max(0, ipk - m), min(freqs.size, ipk + m + 1)
    ipk = lo + int(np.argmax(trace[lo:hi]))
    f0 = freqs[ipk]
    half = 0.5 * smooth[ipk] if smooth[ipk] > 0 else 0.5 * peak
    left = ipk
    while left > 0 and smooth[left] > half:
        left -= 1
    right = ipk
    while right < freqs.size - 1 and smooth[right] > half:
        right += 1
    zeta0 = float(np.clip((freqs[right] - freqs[left]) / (2 * f0), 1e-3, 0.05))
    sigma2 = max(edge / n, 1e-300)
    S0 = max(peak - edge, peak * 1e-3) * 4 * zeta0**2
    A = Z[:, :n].T @ Z[:, :n] + Z[:, n:].T @ Z[:, n:]
    phi0 = np.linalg.eigh(A)[1][:, -1]
    return ModalTheta(f=float(f0), zeta=zeta0, phi=phi0, S=float(S0), sigma2=float(sigma2)).canonical()


def _tangent_basis(phi):
    """Orthonormal basis of the complement of ``phi`` (columns)."""
    n = phi.size
    q, _ = np.linalg.qr(np.column_stack([phi, np.eye(n)]))
    return q[:, 1:n]


def _hessian(fun, x0, step=1e-4):
    """Central finite-difference Hessian."""
    x0 = np.asarray(x0, dtype=float)
    m = x0.size
    H = np.empty((m, m))
    f0 = fun(x0)
    e = np.eye(m) * step
    fp = np.array([fun(x0 + e[i]) for i in range(m)])
    fm = np.array([fun(x0 - e[i]) for i in range(m)])
    for i in range(m):
        H[i, i] = (fp[i] - 2 * f0 + fm[i]) / step**2
        for j in range(i + 1, m):
            fpp = fun(x0 + e[i] + e[j])
            fmm = fun(x0 - e[i] - e[j])
            fpm = fun(x0 + e[i] - e[j])
            fmp = fun(x0 - e[i] + e[j])
            H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4 * step**2)
    return H


def identify_mode(fft, band, theta0=None, max_iter=500, gtol=1e-6, lr_threshold=25.0):
    """Most probable modal parameters and their Gaussian posterior covariance.

    The mode shape is profiled out (optimal ``phi`` for given spectral
    parameters) and the remaining four parameters are minimized in
    unconstrained coordinates (logit of ``f`` within the band, logs of the
    rest) by BFGS.  The covariance is the inverse finite-difference Hessian
    of the full NLL in (log f, log zeta, log S, log sigma2, phi tangent)
    coordinates, mapped back to physical parameters.
    """
    freqs, Z = _band_data(fft, band)
    if theta0 is None:
        theta0 = initial_guess(fft, band)
    lo, hi = band.f_lo, band.f_hi

    def unpack(u):
        f = lo + (hi - lo) / (1 + np.exp(-u[0]))
        return np.array([f, np.exp(u[1]), np.exp(u[2]), np.exp(u[3])])

    def profile(u):
        tv = unpack(u)
        return nll_vec(tv, _optimal_phi(tv, freqs, Z), freqs, Z)

    def profile_grad(u):
        tv = unpack(u)
        phi = _optimal_phi(tv, freqs, Z)
        g, _ = nll_gradient(tv, phi, freqs, Z)  # envelope theorem: phi is optimal
        s = (tv[0] - lo) * (hi - tv[0]) / (hi - lo)
        return g * np.array([s, tv[1], tv[2], tv[3]])

    f0 = float(np.clip(theta0.f, lo + 1e-6 * (hi - lo), hi - 1e-6 * (hi - lo)))
    u0 = np.array([np.log((f0 - lo) / (hi - f0)), np.log(theta0.zeta), np.log(theta0.S),
                   np.log(theta0.sigma2)])
    with warnings.catch_warnings():
        # line-search stalls are expected near the optimum and handled below
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(profile, u0, jac=profile_grad, method="BFGS",
                                options={"maxiter": max_iter, "gtol": gtol})
    # BFGS line searches stall on the flat NLL surface before the gradient
    # tolerance is met; finish with Newton steps on a finite-difference Hessian
    u, decrement = res.x, np.inf
    for _ in range(8):
        g = profile_grad(u)
        Hu = np.array([(profile_grad(u + 1e-5 * e) - profile_grad(u - 1e-5 * e)) / 2e-5
                       for e in np.eye(4)])
        Hu = 0.5 * (Hu + Hu.T)
        try:
            np.linalg.cholesky(Hu)
        except np.linalg.LinAlgError:
            break
        step = np.linalg.solve(Hu, g)
        decrement = float(g @ step)
        if decrement < 1e-10:
            break
        t, L0 = 1.0, profile(u)
        while t > 1e-4 and profile(u - t * step) > L0:
            t *= 0.5
        u = u - t * step
    tv = unpack(u)
    phi = _optimal_phi(tv, freqs, Z)
    best = ModalTheta(tv[0], tv[1], phi, tv[2], tv[3]).canonical()
    converged = bool(decrement < 1e-6)
    if not converged:
        raise NumericalFailure(f"optimizer did not converge: {res.message}", best=best)

    L_hat = nll_vec(tv, best.phi, freqs, Z)
    # noise-only MLE: each of the 2n FFT components has variance sigma2/2
    s2_noise = np.mean(np.sum(Z**2, 1)) / (Z.shape[1] // 2)
    L_noise = nll_vec(np.array([tv[0], tv[1], 0.0, s2_noise]), best.phi, freqs, Z)
    if 2 * (L_noise - L_hat) < lr_threshold:
        raise IdentificationSkipped("modal peak not significant against the noise-only model")

    # Hessian of the full NLL in transformed coordinates
    T = _tangent_basis(best.phi)
    y0 = np.concatenate([np.log(tv), np.zeros(T.shape[1])])

    def full(y):
        v = best.phi + T @ y[4:]
        return nll_vec(np.exp(y[:4]), v / np.linalg.norm(v), freqs, Z)

    Hy = _hessian(full, y0, step=1e-4)
    Hy = 0.5 * (Hy + Hy.T)
    flagged, reason = False, ""
    try:
        np.linalg.cholesky(Hy)
        cov_y = np.linalg.inv(Hy)
    except np.linalg.LinAlgError:
        flagged, reason = True, "Hessian not positive definite"
        cov_y = np.linalg.pinv(Hy)
    # delta method: d(theta)/dy = diag(theta) for the log block, T for the shape block
    n = best.phi.size
    J = np.zeros((4 + n, 4 + T.shape[1]))
    J[:4, :4] = np.diag(tv)
    J[4:, 4:] = T
    cov = J @ cov_y @ J.T
    cov = 0.5 * (cov + cov.T)
    var = np.diag(cov)
    cov_f = float(np.sqrt(max(var[0], 0.0)) / tv[0])
    cov_z = float(np.sqrt(max(var[1], 0.0)) / tv[1])
    if not flagged and cov_f > COV_F_LIMIT:
        flagged, reason = True, f"frequency COV {cov_f:.3g} exceeds {COV_F_LIMIT}"
    if not flagged and not ZETA_LIMITS[0] < tv[1] < ZETA_LIMITS[1]:
        flagged, reason = True, f"damping ratio {tv[1]:.3g} outside {ZETA_LIMITS}"
    return ModalEstimate(mpv=best, posterior_covariance=cov, cov_f=cov_f, cov_zeta=cov_z,
                         segment_time=fft.start_time, band=band, converged=converged,
                         flagged=flagged, flag_reason=reason, nll=L_hat)
