"""Exponential integral and the cell-integrated slab kernel.

Integrating the point-to-point disorder propagator over the transverse plane
of a slab leaves ``E1(mu * |z - z'|) / 2``.  Depth is measured in units of the
disorder mean free path, so ``mu = 1`` for ladder propagation and
``mu = 1 - i*k_ell*(sqrt(E) - sqrt(E~))`` for counter-propagating amplitudes.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _sp

__all__ = [
    "e1_real",
    "e1_complex",
    "e1_antiderivative",
    "cell_integrated_e1",
    "e2_real",
    "e3_real",
]


def e1_real(x):
    """E1(x) for real ``x > 0``; scalar or array."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("e1_real requires x > 0")
    out = _sp.exp1(arr)
    return float(out) if out.ndim == 0 else out


def e1_complex(w):
    """Analytic continuation of E1 on the open right half-plane."""
    arr = np.asarray(w, dtype=complex)
    if np.any(~(arr.real > 0)):
        raise ValueError("e1_complex requires Re(w) > 0")
    out = _sp.exp1(arr)
    return complex(out) if out.ndim == 0 else out


def e1_antiderivative(mu, t):
    """F(t) = t*E1(mu*t) - exp(-mu*t)/mu, with F(0) = -1/mu and F(inf) = 0.

    ``t`` may be an array (t >= 0, ``np.inf`` allowed).
    """
    mu = complex(mu)
    if not mu.real > 0:
        raise ValueError("decay rate must have Re(mu) > 0")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    out = np.zeros(t.shape, dtype=complex)
    pos = (t > 0) & np.isfinite(t)
    tp = t[pos]
    out[pos] = tp * _sp.exp1(mu * tp) - np.exp(-mu * tp) / mu
    out[t == 0] = -1.0 / mu
    if mu.imag == 0:
        return out.real
    return out


def cell_integrated_e1(mu, a, b):
    """Integral of E1(mu*t) for t in [a, b], via the exact antiderivative.

    The logarithmic singularity at ``t = 0`` is absorbed analytically, so
    ``a = 0`` is allowed.  ``b`` may be ``np.inf``.  Returns a real number for
    real ``mu`` and a complex one otherwise.
    """
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(a_arr < 0) or np.any(~(b_arr > a_arr)):
        raise ValueError("need 0 <= a < b")
    val = e1_antiderivative(mu, b_arr) - e1_antiderivative(mu, a_arr)
    if np.ndim(val) == 0:
        val = val[()]
        return float(val) if np.isrealobj(val) else complex(val)
    return val


def e2_real(x):
    """E2(x) = exp(-x) - x*E1(x), x >= 0 (E2(0) = 1)."""
    x = np.asarray(x, dtype=float)
    return _sp.expn(2, x)


def e3_real(x):
    """E3(x) = (exp(-x) - x*E2(x)) / 2, x >= 0 (E3(0) = 1/2)."""
    x = np.asarray(x, dtype=float)
    return _sp.expn(3, x)
