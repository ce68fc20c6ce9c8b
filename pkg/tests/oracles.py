"""Independent brute-force reference implementations used only by tests.

These deliberately avoid the library's numerical paths: covariances are
accumulated with explicit loops, inverses go through numpy's dense
inverse, eigen-clipping uses the general eigensolver, and rankings are
rebuilt with python sorting.
"""

from __future__ import annotations

import numpy as np


def kissme_bruteforce(similar, dissimilar, lam: float) -> np.ndarray:
    """KISSME by explicit outer-product sums, dense inverse, eigen-clip."""
    d = len(similar[0][0])
    sigma_s = np.zeros((d, d))
    for x, y in similar:
        diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        sigma_s += np.outer(diff, diff)
    sigma_s /= len(similar)
    sigma_d = np.zeros((d, d))
    for x, y in dissimilar:
        diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        sigma_d += np.outer(diff, diff)
    sigma_d /= len(dissimilar)
    eye = np.eye(d)
    m_hat = np.linalg.inv(sigma_s + lam * eye) - np.linalg.inv(sigma_d + lam * eye)
    m_hat = 0.5 * (m_hat + m_hat.T)
    w, v = np.linalg.eigh(m_hat)
    w = np.where(w < 0, 0.0, w)
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


def min_eigenvalue_independent(matrix: np.ndarray) -> float:
    """Smallest eigenvalue via the general (non-symmetric) eigensolver."""
    return float(np.min(np.linalg.eigvals(np.asarray(matrix, dtype=float)).real))


def cmc_bruteforce(dist, query_meta, gallery_meta, ks, exclusion: str = "none"):
    """CMC by re-sorting every row with python sorting and a linear scan."""
    entries = np.asarray(dist, dtype=float)
    n_q, n_g = entries.shape
    hits = {k: 0 for k in ks}
    for qi in range(n_q):
        row = entries[qi]
        order = sorted(range(n_g), key=lambda j: (row[j], j))
        q_id = query_meta[qi].identity
        q_cam = query_meta[qi].camera
        rank = 0
        found = False
        for j in order:
            if exclusion == "same_id_same_camera":
                if gallery_meta[j].identity == q_id and gallery_meta[j].camera == q_cam:
                    continue
            rank += 1
            if gallery_meta[j].identity == q_id:
                found = True
                break
        if not found:
            raise ValueError(f"query {qi} has no gallery match")
        for k in ks:
            if rank <= k:
                hits[k] += 1
    return {k: hits[k] / n_q for k in ks}
