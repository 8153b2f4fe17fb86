"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``BLOCHOPT_NO_NUMBA=1`` in the environment to force the numpy versions.
Both variants are always importable under explicit names so the benchmark
and the tests can compare them directly.
"""
import os

import numpy as np
import scipy.linalg

_DISABLED = os.environ.get("BLOCHOPT_NO_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by BLOCHOPT_NO_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

JIT_OPTIONS = {"nogil": True, "cache": True}

_CHUNK = 2048


# --------------------------------------------------------------------------
# Bloch synthesis:
#   out(x) = w * sum_j uhat_j exp(2 pi i eta_j . x) * sum_p C_jp exp(2 pi i k_p . x / eps)
# --------------------------------------------------------------------------

def bloch_synthesis_numpy(x, eta, uhat, coeffs, kidx, inv_eps, weight):
    x = np.ascontiguousarray(x, dtype=float)
    out = np.empty(x.shape[0], dtype=complex)
    ct = np.ascontiguousarray(coeffs.T)
    kf = kidx.astype(float)
    for start in range(0, x.shape[0], _CHUNK):
        xs = x[start:start + _CHUNK]
        basis = np.exp(2j * np.pi * inv_eps * (xs @ kf.T))
        phi = basis @ ct
        phase = np.exp(2j * np.pi * (xs @ eta.T))
        out[start:start + _CHUNK] = weight * ((phi * phase) @ uhat)
    return out


def _bloch_synthesis_loops(x, eta, uhat, coeffs, kidx, inv_eps, weight):
    npts, ndim = x.shape
    nnodes = eta.shape[0]
    nbasis = kidx.shape[0]
    kmax = 0
    for p in range(nbasis):
        for d in range(ndim):
            a = abs(kidx[p, d])
            if a > kmax:
                kmax = a
    width = 2 * kmax + 1
    powers = np.empty((ndim, width), dtype=np.complex128)
    basis = np.empty(nbasis, dtype=np.complex128)
    out = np.empty(npts, dtype=np.complex128)
    twopi = 2.0 * np.pi
    for i in range(npts):
        for d in range(ndim):
            z = np.exp(1j * twopi * x[i, d] * inv_eps)
            zc = np.conj(z)
            powers[d, kmax] = 1.0
            for m in range(1, kmax + 1):
                powers[d, kmax + m] = powers[d, kmax + m - 1] * z
                powers[d, kmax - m] = powers[d, kmax - m + 1] * zc
        for p in range(nbasis):
            b = powers[0, kidx[p, 0] + kmax]
            for d in range(1, ndim):
                b = b * powers[d, kidx[p, d] + kmax]
            basis[p] = b
        acc = 0.0 + 0.0j
        for j in range(nnodes):
            phi = 0.0 + 0.0j
            for p in range(nbasis):
                phi += coeffs[j, p] * basis[p]
            arg = 0.0
            for d in range(ndim):
                arg += eta[j, d] * x[i, d]
            acc += uhat[j] * phi * np.exp(1j * twopi * arg)
        out[i] = weight * acc
    return out


# --------------------------------------------------------------------------
# Cyclic tridiagonal solve (periodic 1D flux-form operator):
#   lower[i] y[i-1] + diag[i] y[i] + upper[i] y[i+1] = rhs[i], indices mod n
# --------------------------------------------------------------------------

def cyclic_tridiag_numpy(lower, diag, upper, rhs):
    n = diag.shape[0]
    # Sherman-Morrison on top of a banded solve.
    gamma = -diag[0]
    d = diag.astype(float).copy()
    d[0] -= gamma
    d[-1] -= lower[0] * upper[-1] / gamma
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = d
    ab[2, :-1] = lower[1:]
    uvec = np.zeros(n)
    uvec[0] = gamma
    uvec[-1] = upper[-1]
    sol = scipy.linalg.solve_banded((1, 1), ab, np.column_stack([rhs, uvec]), check_finite=False)
    y, z = sol[:, 0], sol[:, 1]
    vy = y[0] + lower[0] / gamma * y[-1]
    vz = z[0] + lower[0] / gamma * z[-1]
    return y - (vy / (1.0 + vz)) * z


def _cyclic_tridiag_loops(lower, diag, upper, rhs):
    n = diag.shape[0]
    gamma = -diag[0]
    d = np.empty(n)
    for i in range(n):
        d[i] = diag[i]
    d[0] -= gamma
    d[n - 1] -= lower[0] * upper[n - 1] / gamma
    uvec = np.zeros(n)
    uvec[0] = gamma
    uvec[n - 1] = upper[n - 1]
    # Thomas elimination with two right-hand sides.
    cp = np.empty(n)
    yp = np.empty(n)
    zp = np.empty(n)
    cp[0] = upper[0] / d[0]
    yp[0] = rhs[0] / d[0]
    zp[0] = uvec[0] / d[0]
    for i in range(1, n):
        m = d[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / m if i < n - 1 else 0.0
        yp[i] = (rhs[i] - lower[i] * yp[i - 1]) / m
        zp[i] = (uvec[i] - lower[i] * zp[i - 1]) / m
    for i in range(n - 2, -1, -1):
        yp[i] -= cp[i] * yp[i + 1]
        zp[i] -= cp[i] * zp[i + 1]
    vy = yp[0] + lower[0] / gamma * yp[n - 1]
    vz = zp[0] + lower[0] / gamma * zp[n - 1]
    fac = vy / (1.0 + vz)
    out = np.empty(n)
    for i in range(n):
        out[i] = yp[i] - fac * zp[i]
    return out


if HAS_NUMBA:
    bloch_synthesis_numba = njit(**JIT_OPTIONS)(_bloch_synthesis_loops)
    cyclic_tridiag_numba = njit(**JIT_OPTIONS)(_cyclic_tridiag_loops)
else:
    bloch_synthesis_numba = None
    cyclic_tridiag_numba = None


def bloch_synthesis(x, eta, uhat, coeffs, kidx, inv_eps, weight):
    """Evaluate a Bloch-wave superposition at real-space points.

    ``x`` is (npts, n), ``eta`` is (J, n), ``coeffs`` is (J, P) plane-wave
    coefficients of the periodic factors over the multi-indices ``kidx`` (P, n).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    uhat = np.ascontiguousarray(uhat, dtype=np.complex128)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
    kidx = np.ascontiguousarray(kidx, dtype=np.int64)
    if HAS_NUMBA:
        return bloch_synthesis_numba(x, eta, uhat, coeffs, kidx, float(inv_eps), float(weight))
    return bloch_synthesis_numpy(x, eta, uhat, coeffs, kidx, float(inv_eps), float(weight))


def cyclic_tridiag_solve(lower, diag, upper, rhs):
    """Solve a periodic tridiagonal system; ``lower[0]`` and ``upper[-1]`` wrap."""
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (lower, diag, upper, rhs)]
    if HAS_NUMBA:
        return cyclic_tridiag_numba(*args)
    return cyclic_tridiag_numpy(*args)
