"""Entropy special functions and the Gibbs density on [0, 1].

    phi(x)       = ln((e^x - 1) / x),  phi(0) = 0
    psi(x)       = phi(x) / x,          psi(0) = 1/2
    phi_prime(x) = mean of the Gibbs density with rate x

All evaluators accept scalars or numpy arrays and return the same shape.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

TAYLOR_CUTOFF = 1e-4
OVERFLOW_CUTOFF = 30.0
# 1 - ln(1 - e^{-1}), the constant in the regularisation error envelope
ENVELOPE_CONST = 1.0 - np.log1p(-np.exp(-1.0))


def _as_finite(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _out(arr, scalar):
    return float(np.asarray(arr).reshape(-1)[0]) if scalar else arr


def _phi(x, taylor_cutoff, overflow_cutoff):
    out = np.empty_like(x)
    small = np.abs(x) < taylor_cutoff
    high = x > overflow_cutoff
    low = x < -overflow_cutoff
    mid = ~(small | high | low)
    xs = x[small]
    out[small] = xs / 2 + xs**2 / 24 - xs**4 / 2880
    xh = x[high]
    out[high] = xh - np.log(xh) + np.log1p(-np.exp(-xh))
    xl = x[low]
    out[low] = -np.log(-xl) + np.log1p(-np.exp(xl))
    xm = x[mid]
    out[mid] = np.log(np.expm1(xm) / xm)
    return out


def phi(x, taylor_cutoff=TAYLOR_CUTOFF, overflow_cutoff=OVERFLOW_CUTOFF):
    """Phi(x) = ln((e^x - 1)/x), continuous at 0 with Phi(0) = 0."""
    arr = _as_finite(x)
    res = _phi(np.atleast_1d(arr), taylor_cutoff, overflow_cutoff)
    return _out(res.reshape(arr.shape), arr.ndim == 0)


def psi(x, taylor_cutoff=TAYLOR_CUTOFF, overflow_cutoff=OVERFLOW_CUTOFF):
    """Psi(x) = Phi(x)/x with Psi(0) = 1/2. A distribution function on the real line."""
    arr = _as_finite(x)
    a = np.atleast_1d(arr)
    out = np.empty_like(a)
    small = np.abs(a) < taylor_cutoff
    xs = a[small]
    out[small] = 0.5 + xs / 24 - xs**3 / 2880
    xo = a[~small]
    out[~small] = _phi(xo, taylor_cutoff, overflow_cutoff) / xo
    return _out(out.reshape(arr.shape), arr.ndim == 0)


def phi_prime(x, taylor_cutoff=TAYLOR_CUTOFF):
    """Derivative of Phi; equals the mean of the Gibbs density with rate x, in [0, 1]."""
    arr = _as_finite(x)
    a = np.atleast_1d(arr)
    out = np.empty_like(a)
    small = np.abs(a) < taylor_cutoff
    xs = a[small]
    out[small] = 0.5 + xs / 12 - xs**3 / 720
    pos = (~small) & (a > 0)
    neg = (~small) & (a < 0)
    xp = a[pos]
    out[pos] = -1.0 / np.expm1(-xp) - 1.0 / xp
    xn = a[neg]
    out[neg] = np.exp(xn) / np.expm1(xn) - 1.0 / xn
    return _out(out.reshape(arr.shape), arr.ndim == 0)


def regularised_driver(gap, lam):
    """lam * Phi(gap / lam) for lam > 0; the classical limit lives in EntropyKernel(0)."""
    g = _as_finite(gap, "gap")
    if not np.isfinite(lam) or lam <= 0:
        raise DomainError("lambda must be a positive finite number")
    return lam * phi(g / lam)


def gibbs_density_at(rate, u):
    """Density u -> rate e^{rate u} / (e^rate - 1) on [0, 1]; uniform when rate = 0."""
    r = _as_finite(rate, "rate")
    uu = _as_finite(u, "u")
    if np.any(uu < 0) or np.any(uu > 1):
        raise DomainError("u must lie in [0, 1]")
    r, uu = np.broadcast_arrays(r, uu)
    scalar = r.ndim == 0
    r = np.atleast_1d(r).astype(float)
    uu = np.atleast_1d(uu).astype(float)
    out = np.ones_like(r)
    nz = np.abs(r) >= 1e-12
    rp = r[nz]
    up = uu[nz]
    pos = rp > 0
    # factor the exponential so neither branch overflows
    val = np.empty_like(rp)
    val[pos] = rp[pos] * np.exp(rp[pos] * (up[pos] - 1.0)) / -np.expm1(-rp[pos])
    val[~pos] = rp[~pos] * np.exp(rp[~pos] * up[~pos]) / np.expm1(rp[~pos])
    out[nz] = val
    return _out(out, scalar)


def error_scale(lam):
    """lam - lam ln(lam), the rate at which regularised values approach classical ones."""
    if lam <= 0:
        raise DomainError("lambda must be positive")
    return lam - lam * np.log(lam)


def driver_gap_bound(gap, lam, eps):
    """Upper envelope for gap^+ - lam*Phi(gap/lam), valid for any eps in (0, 1)."""
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    g = np.abs(_as_finite(gap, "gap"))
    with np.errstate(divide="ignore"):
        logpart = np.maximum(np.log(g), 0.0)
    res = eps - lam * np.log(-np.expm1(-eps / lam)) + lam * logpart - lam * np.log(lam)
    return _out(np.asarray(res), np.ndim(gap) == 0)


@dataclass(frozen=True)
class EntropyKernel:
    """Bundles a temperature with the cutoffs used by the evaluators.

    lam = 0 selects the classical mode where the driver is gap^+.
    """

    lam: float
    taylor_cutoff: float = TAYLOR_CUTOFF
    overflow_cutoff: float = OVERFLOW_CUTOFF

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise DomainError("lambda must be a non-negative finite number")
        if not 0 < self.taylor_cutoff < 1 < self.overflow_cutoff:
            raise DomainError("cutoffs must satisfy 0 < taylor_cutoff < 1 < overflow_cutoff")

    @property
    def classical(self) -> bool:
        return self.lam == 0

    def phi(self, x):
        return phi(x, self.taylor_cutoff, self.overflow_cutoff)

    def psi(self, x):
        return psi(x, self.taylor_cutoff, self.overflow_cutoff)

    def phi_prime(self, x):
        return phi_prime(x, self.taylor_cutoff)

    def driver(self, gap):
        if self.classical:
            g = _as_finite(gap, "gap")
            return _out(np.maximum(g, 0.0), g.ndim == 0)
        return self.lam * self.phi(np.asarray(gap, dtype=float) / self.lam)

    def hazard(self, gap):
        """Jump of the hazard process: Psi(gap/lam), or the bang-bang indicator when lam = 0."""
        g = np.asarray(gap, dtype=float)
        if self.classical:
            return _out(np.where(g > 0, 1.0, np.where(g == 0, 0.5, 0.0)), g.ndim == 0)
        return self.psi(g / self.lam)

    def gibbs_mean(self, gap):
        g = np.asarray(gap, dtype=float)
        if self.classical:
            return _out(np.where(g > 0, 1.0, np.where(g == 0, 0.5, 0.0)), g.ndim == 0)
        return self.phi_prime(g / self.lam)
