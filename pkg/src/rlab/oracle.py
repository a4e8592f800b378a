"""Dense small-instance oracles (independent routes for testing, n <= 400)."""

import numpy as np

from .errors import CapError, DomainError

ORACLE_CAP = 400


def _dense_form_matrix(g, m, region=None):
    if region is None:
        n = g.n
        W = g.W.toarray()
        mu = g.mu
    else:
        idx = region.ids
        n = len(idx)
        W = g.W[idx][:, idx].toarray()
        mu = g.mu[idx]
    if n > ORACLE_CAP:
        raise CapError(f"dense oracle capped at {ORACLE_CAP} vertices")
    P = W / mu[:, None]
    A = np.diag(mu) @ np.linalg.matrix_power(np.eye(n) - P, m)
    return 0.5 * (A + A.T), mu


def rm_matrix_oracle(g, m):
    """Quasi-metric table by dense pseudoinverse of the form matrix."""
    A, _ = _dense_form_matrix(g, m)
    Aplus = np.linalg.pinv(A, hermitian=True)
    d = np.diag(Aplus)
    R = d[:, None] + d[None, :] - Aplus - Aplus.T
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 0.0)
    return R


def green_matrix_oracle(g, region, m):
    """Dense killed Green kernel g_m^A (region-local indexing)."""
    if region.is_whole_graph():
        raise DomainError("oracle Green kernel needs a strict subregion")
    A, _ = _dense_form_matrix(g, m, region)
    return np.linalg.inv(A)


def spectral_bottom(g, region=None):
    """Smallest Rayleigh quotient of the (killed) order-1 form in l2(mu).

    Exposed for inspection only; no scan consumes it.
    """
    A, mu = _dense_form_matrix(g, 1, region)
    s = np.sqrt(mu)
    S = A / s[:, None] / s[None, :]
    vals = np.linalg.eigvalsh(0.5 * (S + S.T))
    return float(vals[0])
