"""Independent reference solutions used by the tests."""

import numpy as np
from scipy.optimize import brentq


def robin_slab_eigenvalues(biot_half, n_terms):
    """Roots of ``lam tan(lam) = Bi`` (one per branch of tan)."""
    f = lambda lam: lam * np.sin(lam) - biot_half * np.cos(lam)  # noqa: E731
    roots = []
    for n in range(n_terms):
        lo = n * np.pi + 1e-12
        hi = n * np.pi + 0.5 * np.pi - 1e-12
        roots.append(brentq(f, lo, hi, xtol=1e-15))
    return np.array(roots)


def robin_slab(chi, tau, fo, bi, u_ini, u_inf, n_terms=50):
    """Slab ``u_t = fo u_xx`` on [0, 1] with ``u_x = +-bi (u - u_inf)`` on both faces.

    Separation of variables about the mid-plane, half thickness 1/2.
    """
    half = 0.5
    lam = robin_slab_eigenvalues(bi * half, n_terms)
    coef = 4 * np.sin(lam) / (2 * lam + np.sin(2 * lam))
    xi = (np.asarray(chi, dtype=float) - half) / half
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    decay = np.exp(-np.outer(fo * tau / half ** 2, lam ** 2))  # (n_tau, n_terms)
    modes = np.cos(np.outer(lam, xi))  # (n_terms, n_chi)
    theta = (decay * coef) @ modes
    return u_inf + (u_ini - u_inf) * theta
