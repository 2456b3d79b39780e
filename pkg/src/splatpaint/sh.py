"""Real spherical-harmonics basis (degrees 0..3) and its direction gradient.

Coefficient layout follows the usual splatting convention: index 0 is the DC
term, indices 1..3 the degree-1 band, 4..8 degree-2, 9..15 degree-3. Colors
are reconstructed as clip(sum_k f_k * Y_k(dir) + 0.5, 0, 1).
"""

from __future__ import annotations

import numpy as np

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
      -1.0925484305920792, 0.5462742152960396)
C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
      0.3731763325901154, -0.4570457994644658, 1.445305721320277,
      -0.5900435899266435)

COLOR_OFFSET = 0.5


def num_coeffs(degree: int) -> int:
    if degree not in (0, 1, 2, 3):
        raise ValueError(f"unsupported SH degree {degree}")
    return (degree + 1) ** 2


def sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Evaluate the SH basis at unit directions.

    Parameters
    ----------
    dirs : (N, 3) unit vectors.
    degree : highest band, 0..3.

    Returns
    -------
    (N, K) basis values, K = (degree + 1)^2.
    """
    n = dirs.shape[0]
    k = num_coeffs(degree)
    B = np.empty((n, k), dtype=dirs.dtype)
    B[:, 0] = C0
    if degree < 1:
        return B
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    B[:, 1] = -C1 * y
    B[:, 2] = C1 * z
    B[:, 3] = -C1 * x
    if degree < 2:
        return B
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z
    B[:, 4] = C2[0] * xy
    B[:, 5] = C2[1] * yz
    B[:, 6] = C2[2] * (2.0 * zz - xx - yy)
    B[:, 7] = C2[3] * xz
    B[:, 8] = C2[4] * (xx - yy)
    if degree < 3:
        return B
    B[:, 9] = C3[0] * y * (3.0 * xx - yy)
    B[:, 10] = C3[1] * xy * z
    B[:, 11] = C3[2] * y * (4.0 * zz - xx - yy)
    B[:, 12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    B[:, 13] = C3[4] * x * (4.0 * zz - xx - yy)
    B[:, 14] = C3[5] * z * (xx - yy)
    B[:, 15] = C3[6] * x * (xx - 3.0 * yy)
    return B


def sh_basis_grad(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Gradient of each basis function with respect to the direction vector.

    Returns (N, K, 3); entry [n, k] is dY_k/d(dir_n). The normalization of
    `dirs` is the caller's business (these are raw polynomial derivatives).
    """
    n = dirs.shape[0]
    k = num_coeffs(degree)
    G = np.zeros((n, k, 3), dtype=dirs.dtype)
    if degree < 1:
        return G
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    G[:, 1, 1] = -C1
    G[:, 2, 2] = C1
    G[:, 3, 0] = -C1
    if degree < 2:
        return G
    G[:, 4, 0] = C2[0] * y
    G[:, 4, 1] = C2[0] * x
    G[:, 5, 1] = C2[1] * z
    G[:, 5, 2] = C2[1] * y
    G[:, 6, 0] = C2[2] * (-2.0 * x)
    G[:, 6, 1] = C2[2] * (-2.0 * y)
    G[:, 6, 2] = C2[2] * (4.0 * z)
    G[:, 7, 0] = C2[3] * z
    G[:, 7, 2] = C2[3] * x
    G[:, 8, 0] = C2[4] * (2.0 * x)
    G[:, 8, 1] = C2[4] * (-2.0 * y)
    if degree < 3:
        return G
    xx, yy, zz = x * x, y * y, z * z
    G[:, 9, 0] = C3[0] * 6.0 * x * y
    G[:, 9, 1] = C3[0] * (3.0 * xx - 3.0 * yy)
    G[:, 10, 0] = C3[1] * y * z
    G[:, 10, 1] = C3[1] * x * z
    G[:, 10, 2] = C3[1] * x * y
    G[:, 11, 0] = C3[2] * (-2.0 * x * y)
    G[:, 11, 1] = C3[2] * (4.0 * zz - xx - 3.0 * yy)
    G[:, 11, 2] = C3[2] * (8.0 * y * z)
    G[:, 12, 0] = C3[3] * (-6.0 * x * z)
    G[:, 12, 1] = C3[3] * (-6.0 * y * z)
    G[:, 12, 2] = C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy)
    G[:, 13, 0] = C3[4] * (4.0 * zz - 3.0 * xx - yy)
    G[:, 13, 1] = C3[4] * (-2.0 * x * y)
    G[:, 13, 2] = C3[4] * (8.0 * x * z)
    G[:, 14, 0] = C3[5] * (2.0 * x * z)
    G[:, 14, 1] = C3[5] * (-2.0 * y * z)
    G[:, 14, 2] = C3[5] * (xx - yy)
    G[:, 15, 0] = C3[6] * (3.0 * xx - 3.0 * yy)
    G[:, 15, 1] = C3[6] * (-6.0 * x * y)
    return G


def eval_sh_color(coeffs: np.ndarray, dirs: np.ndarray, degree: int) -> np.ndarray:
    """Reconstruct RGB colors from SH coefficients along view directions.

    coeffs: (N, K, 3), dirs: (N, 3) unit vectors. Returns (N, 3) in [0, 1].
    """
    B = sh_basis(dirs, degree)  # (N, K)
    raw = np.einsum("nk,nkc->nc", B, coeffs) + COLOR_OFFSET
    return np.clip(raw, 0.0, 1.0)
