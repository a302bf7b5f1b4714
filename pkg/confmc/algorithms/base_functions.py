from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import svd as scipy_svd


@dataclass
class ContractViolationError(ValueError):
    message: str

    def __str__(self):
        return f"Contract violation: {self.message}"


@dataclass
class NumericalFailureError(ArithmeticError):
    message: str
    location: Optional[str] = None

    def __str__(self):
        if self.location is None:
            return f"Numerical failure: {self.message}"
        return f"Numerical failure at {self.location}: {self.message}"


def check_contract(condition: bool, message: str):
    """Raise ContractViolationError with `message` unless `condition` holds"""
    if not condition:
        raise ContractViolationError(message)


def thin_svd(A: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return the rank-`k` truncated singular value decomposition of `A`

    Parameters
    ----------
    A:
        (m, n) real matrix
    k:
        number of singular triplets to keep, 1 <= k <= min(m, n)

    Returns
    -------
    U:
        (m, k) matrix with orthonormal columns
    sigma:
        (k,) non-negative singular values in descending order
    V:
        (n, k) matrix with orthonormal columns, so that U @ diag(sigma) @ V.T is the best rank-k approximation

    Notes
    -----
    LAPACK `gesvd` (Golub-Kahan bidiagonalisation followed by implicit QR) is used instead of the divide-and-conquer
    default, and the sign of every singular pair is fixed so that the largest-magnitude entry of each column of U
    is positive. Both make the output reproducible across platforms.
    """
    A = np.asarray(A, dtype=np.float64)
    check_contract(A.ndim == 2, f"thin_svd expects a matrix, got an array of shape {A.shape}")
    m, n = A.shape
    check_contract(isinstance(k, (int, np.integer)) and 1 <= k <= min(m, n),
                   f"rank k={k} is out of range [1, {min(m, n)}] for a {m}x{n} matrix")

    U, sigma, Vt = scipy_svd(A, full_matrices=False, lapack_driver='gesvd')
    U, sigma, V = U[:, :k], sigma[:k], Vt[:k].T

    pivots = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivots, np.arange(k)])
    signs[signs == 0] = 1
    return U * signs, sigma, V * signs


def project_simplex(v: np.ndarray, radius: float = 1) -> np.ndarray:
    """Euclidean projection of `v` onto the simplex {w : w >= 0, sum(w) = radius}

    Sort-based algorithm of Duchi, Shalev-Shwartz, Singer and Chandra, O(n log n).
    """
    assert radius > 0, f"Radius of the simplex must be strictly positive ({radius} <= 0)"
    v = np.asarray(v, dtype=np.float64)
    if v.sum() == radius and np.all(v >= 0):
        return v.copy()

    u = np.sort(v)[::-1]
    cssv = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, len(v) + 1) > (cssv - radius))[0][-1]
    theta = (cssv[rho] - radius) / (rho + 1.0)
    return np.maximum(v - theta, 0)


def project_l1_ball(v: np.ndarray, radius: float = 1) -> np.ndarray:
    """Euclidean projection of `v` onto the l1-ball {w : ||w||_1 <= radius}"""
    assert radius > 0, f"Radius of the l1-ball must be strictly positive ({radius} <= 0)"
    v = np.asarray(v, dtype=np.float64)
    abs_v = np.abs(v)
    if abs_v.sum() <= radius:
        return v.copy()
    return np.sign(v) * project_simplex(abs_v, radius)


def nuclear_norm(B: np.ndarray) -> float:
    return float(np.linalg.svd(B, compute_uv=False).sum())


def project_nuclear_ball(B: np.ndarray, radius: float) -> np.ndarray:
    """Project `B` onto {X : ||X||_* <= radius} by projecting its singular values onto the l1-ball"""
    U, sigma, V = thin_svd(B, min(B.shape))
    if sigma.sum() <= radius:
        return B.copy()
    return (U * project_l1_ball(sigma, radius)) @ V.T


def project_nuclear_infty(B: np.ndarray, radius: float, tau: float, sweeps: int = 2) -> np.ndarray:
    """Return a point of {X : ||X||_* <= radius, ||X||_inf <= tau} close to `B`

    Runs `sweeps` rounds of alternating projections (nuclear-norm ball, then the entrywise box).
    If the result still leaves the nuclear-norm ball by more than 1e-9, it is shrunk towards zero,
    which keeps the box constraint. So the output is always feasible.
    """
    check_contract(radius > 0 and tau > 0, f"radius ({radius}) and tau ({tau}) must be positive")
    B = np.asarray(B, dtype=np.float64)
    if np.abs(B).max(initial=0) <= tau and nuclear_norm(B) <= radius:
        return B.copy()

    X = B
    for _ in range(max(sweeps, 1)):
        X = np.clip(project_nuclear_ball(X, radius), -tau, tau)

    nuc = nuclear_norm(X)
    if nuc > radius + 1e-9:
        X = X * (radius / nuc)
    return X
