"""Maximum-likelihood skew-normal fits for reference-panel statistics.

Pixel values recorded along Y over a reference standard are skewed by dirt
and surface defects, which pull the mean and median low. The mode of a
fitted skew-normal density

    f(x) = (2 / omega) * phi((x - xi) / omega) * Phi(alpha * (x - xi) / omega)

is a better estimate of the clean panel level.

Fits run on standardized data: method-of-moments start, Nelder-Mead on
``(xi, log omega, alpha)``, then golden-section search for the density mode
over the sample range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

from ._parallel import map_blocks
from .errors import ConvergenceError, InsufficientDataError
from .optimize import golden_max_batch, nelder_mead_batch

MIN_SAMPLES = 20
ALPHA_CAP = 50.0
_MAX_SKEW = 0.995  # supremum of skew-normal skewness is ~0.9953
_LOG_NORM = np.log(2.0) - 0.5 * np.log(2.0 * np.pi)
_OMEGA_FLOOR = 1e-12


@dataclass(frozen=True)
class SkewNormalFit:
    xi: float
    omega: float
    alpha: float
    mode: float
    log_likelihood: float
    converged: bool = True
    degenerate: bool = False
    iterations: int = 0

    @property
    def mean(self) -> float:
        delta = self.alpha / np.sqrt(1.0 + self.alpha**2)
        return self.xi + self.omega * delta * np.sqrt(2.0 / np.pi)


@dataclass
class SkewNormalBatch:
    """Column-wise fit results for a ``(P, n)`` sample matrix."""

    xi: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray
    mode: np.ndarray
    log_likelihood: np.ndarray
    converged: np.ndarray
    degenerate: np.ndarray
    iterations: np.ndarray

    def __len__(self):
        return self.xi.size

    def __getitem__(self, i) -> SkewNormalFit:
        return SkewNormalFit(
            float(self.xi[i]), float(self.omega[i]), float(self.alpha[i]), float(self.mode[i]),
            float(self.log_likelihood[i]), bool(self.converged[i]), bool(self.degenerate[i]),
            int(self.iterations[i]),
        )


def _log_phi(v):
    """log of the standard normal CDF; ``log(ndtr)`` is exact enough above -30."""
    out = np.log(ndtr(v))
    far = v < -30.0
    if far.any():
        out[far] = log_ndtr(v[far])
    return out


def skewnorm_logpdf(x, xi, omega, alpha):
    z = (np.asarray(x, dtype=float) - xi) / omega
    return _LOG_NORM - np.log(omega) - 0.5 * z * z + log_ndtr(alpha * z)


def moment_start(skewness):
    """Method-of-moments shape ``alpha`` and the standardized ``(xi, omega)``."""
    g = np.clip(skewness, -_MAX_SKEW, _MAX_SKEW)
    ag = np.abs(g) ** (2.0 / 3.0)
    delta = np.sign(g) * np.sqrt((np.pi / 2.0) * ag / (ag + ((4.0 - np.pi) / 2.0) ** (2.0 / 3.0)))
    delta = np.clip(delta, -0.99, 0.99)
    alpha = delta / np.sqrt(1.0 - delta**2)
    omega = 1.0 / np.sqrt(1.0 - 2.0 * delta**2 / np.pi)
    xi = -omega * delta * np.sqrt(2.0 / np.pi)
    return xi, omega, alpha


def _alpha(a):
    return ALPHA_CAP * np.tanh(a / ALPHA_CAP)


def _fit_standardized(y, max_iter):
    """Fit rows of standardized data ``y`` (P, n); returns parameter arrays."""
    P, n = y.shape
    skew = np.mean(y**3, axis=1)
    xi0, om0, al0 = moment_start(skew)
    a0 = ALPHA_CAP * np.arctanh(np.clip(al0 / ALPHA_CAP, -0.999, 0.999))
    x0 = np.column_stack([xi0, np.log(om0), a0])

    def nll(theta, idx):
        xi = theta[:, 0:1]
        log_om = theta[:, 1:2]
        z = (y[idx] - xi) * np.exp(-log_om)
        ll = np.mean(-0.5 * z * z + _log_phi(_alpha(theta[:, 2:3]) * z), axis=1)
        return -(ll - log_om[:, 0])

    def spread(s):
        out = s.copy()
        out[..., 2] = _alpha(s[..., 2])
        return out

    res = nelder_mead_batch(nll, x0, step=(0.2, 0.1, 0.5), xatol=1e-4, fatol=1e-10,
                            max_iter=max_iter, spread=spread)
    xi = res.x[:, 0]
    omega = np.exp(res.x[:, 1])
    alpha = _alpha(res.x[:, 2])

    def logdens(x, idx):
        z = (x - xi[idx]) / omega[idx]
        return -0.5 * z * z + _log_phi(alpha[idx] * z)

    mode = golden_max_batch(logdens, y.min(axis=1), y.max(axis=1), 1e-6 * omega)
    loglik = -n * res.fun + n * _LOG_NORM
    return xi, omega, alpha, mode, loglik, res.converged, res.iterations


def _fit_block(x, max_iter):
    P, n = x.shape
    m = x.mean(axis=1)
    s = x.std(axis=1)
    degenerate = s <= 1e-12 * np.maximum(1.0, np.abs(m))
    out = {
        "xi": m.copy(),
        "omega": np.full(P, _OMEGA_FLOOR) * np.maximum(1.0, np.abs(m)),
        "alpha": np.zeros(P),
        "mode": m.copy(),
        "log_likelihood": np.full(P, np.inf),
        "converged": np.ones(P, dtype=bool),
        "degenerate": degenerate,
        "iterations": np.zeros(P, dtype=int),
    }
    live = np.flatnonzero(~degenerate)
    if live.size:
        ml, sl = m[live, None], s[live, None]
        y = (x[live] - ml) / sl
        xi, om, al, mo, ll, conv, its = _fit_standardized(y, max_iter)
        out["xi"][live] = ml[:, 0] + sl[:, 0] * xi
        out["omega"][live] = sl[:, 0] * om
        out["alpha"][live] = al
        out["mode"][live] = ml[:, 0] + sl[:, 0] * mo
        out["log_likelihood"][live] = ll - n * np.log(sl[:, 0])
        out["converged"][live] = conv
        out["iterations"][live] = its
    return out


def fit_skew_normal_batch(samples, *, max_iter=1000, block=2048, workers=1) -> SkewNormalBatch:
    """Fit one skew-normal per row of ``samples`` (shape ``(P, n)``).

    Rows are processed in fixed blocks of ``block`` problems, optionally on
    ``workers`` threads; results are identical for any worker count.
    Non-converged rows are flagged rather than raised.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2:
        raise ValueError("samples must be a 2-D (problems, observations) array")
    if x.shape[1] < MIN_SAMPLES:
        raise InsufficientDataError(f"skew-normal fit needs >= {MIN_SAMPLES} samples, got {x.shape[1]}")
    parts = map_blocks(lambda sl: _fit_block(x[sl], max_iter), x.shape[0], block, workers)
    keys = ("xi", "omega", "alpha", "mode", "log_likelihood", "converged", "degenerate", "iterations")
    return SkewNormalBatch(**{k: np.concatenate([p[k] for p in parts]) for k in keys})


def fit_skew_normal(samples, *, max_iter=2000) -> SkewNormalFit:
    """Maximum-likelihood skew-normal fit of a 1-D sample.

    A constant sample yields a degenerate fit with ``mode`` equal to the
    constant. Raises ``ConvergenceError`` (carrying the best iterate as
    ``.best``) if the simplex does not converge within ``max_iter``.
    """
    x = np.asarray(samples, dtype=float).reshape(1, -1)
    if x.shape[1] < MIN_SAMPLES:
        raise InsufficientDataError(f"skew-normal fit needs >= {MIN_SAMPLES} samples, got {x.shape[1]}")
    fit = fit_skew_normal_batch(x, max_iter=max_iter)[0]
    if not fit.converged:
        raise ConvergenceError(f"skew-normal fit did not converge in {max_iter} iterations", best=fit)
    return fit
