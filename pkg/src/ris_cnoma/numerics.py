"""Small dense Hermitian linear-algebra helpers shared by the optimizers."""
import numpy as np

HERMITIAN_ATOL = 1e-12


class InvalidMatrix(ValueError):
    """Raised when a matrix that must be Hermitian is not."""


def check_hermitian(A, atol=HERMITIAN_ATOL):
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise InvalidMatrix(f"expected a non-empty square matrix, got shape {A.shape}")
    # relative to the matrix scale so tiny lifted channels are not rejected
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.conj().T)) > atol * scale:
        raise InvalidMatrix("matrix is not Hermitian")
    return A


def canonical_phase(u):
    """Rotate ``u`` so its first nonzero entry is real and positive."""
    u = np.asarray(u, dtype=complex)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(u)))) if u.size else 0.0
    nz = np.flatnonzero(np.abs(u) > tol)
    if nz.size == 0:
        return u
    k = nz[0]
    return u * (np.abs(u[k]) / u[k])


def max_eigpair(A):
    """Largest eigenvalue of a Hermitian matrix and a unit eigenvector.

    The eigenvector is normalised so that its first nonzero component is
    real and positive, which makes the result reproducible across runs.
    When the top eigenvalue is repeated, the eigenvector is taken as the
    normalised projection of the first canonical basis vector with a nonzero
    component in the top eigenspace.
    """
    A = check_hermitian(A)
    A = 0.5 * (A + A.conj().T)
    w, V = np.linalg.eigh(A)
    lam = float(w[-1])
    tol = 1e-10 * max(1.0, float(np.max(np.abs(w))))
    top = V[:, w >= lam - tol]
    if top.shape[1] == 1:
        u = top[:, 0]
    else:
        P = top @ top.conj().T
        col = np.argmax(np.linalg.norm(P, axis=0) > 1e-8)
        u = P[:, col]
    u = u / np.linalg.norm(u)
    return lam, canonical_phase(u)


def spectral_norm_subgradient(A):
    """Subgradient ``u u^H`` of the spectral norm at a PSD matrix ``A``."""
    _, u = max_eigpair(A)
    return np.outer(u, u.conj())


def project_unit_modulus(v):
    """Entrywise projection onto the unit circle; zeros map to 1."""
    v = np.asarray(v, dtype=complex)
    mag = np.abs(v)
    out = np.ones_like(v)
    nz = mag > 0
    out[nz] = v[nz] / mag[nz]
    return out


def rank_gap(A):
    """``1 - lambda_max / trace`` for a PSD matrix (0 for an exact rank-one)."""
    A = np.asarray(A, dtype=complex)
    tr = float(np.real(np.trace(A)))
    if tr <= 0:
        return 0.0
    lam = float(np.linalg.eigvalsh(0.5 * (A + A.conj().T))[-1])
    return max(0.0, 1.0 - lam / tr)


def hermitian_part(A):
    A = np.asarray(A, dtype=complex)
    return 0.5 * (A + A.conj().T)
