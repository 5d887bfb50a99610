"""
Ewald lattice sums for the Green function of the flat unit-square torus.

The mean-zero solution of -Delta g = delta - 1 splits at heat time tau into

    g(x) = 1/(4 pi) sum_m E1(|x - m|^2 / (4 tau)) - tau
           + sum_{k != 0} exp(-4 pi^2 |k|^2 tau) cos(2 pi k.x) / (4 pi^2 |k|^2),

independently of tau. The laboratory's normalization is G = 8 pi g, so the
regular part is A = 8 pi R with R the Robin constant of g.
"""

import numpy as np
from scipy.special import exp1

DEFAULT_TAU = 1.0 / (4.0 * np.pi)


def _lattice(cutoff: int):
    m = np.arange(-cutoff, cutoff + 1)
    m1, m2 = np.meshgrid(m, m, indexing='ij')
    return m1.ravel().astype(float), m2.ravel().astype(float)


def flat_torus_green(x1, x2, tau: float = DEFAULT_TAU, cutoff: int = 6) -> np.ndarray:
    """G(x, 0) = 8 pi g(x) at points x != 0 (arrays broadcast together)."""
    x1 = np.asarray(x1, dtype=float)[..., None]
    x2 = np.asarray(x2, dtype=float)[..., None]
    m1, m2 = _lattice(cutoff)

    real = exp1(((x1 - m1) ** 2 + (x2 - m2) ** 2) / (4.0 * tau)).sum(axis=-1) / (4.0 * np.pi)

    nonzero = (m1 != 0) | (m2 != 0)
    k1, k2 = m1[nonzero], m2[nonzero]
    k_sq = k1 ** 2 + k2 ** 2
    factors = np.exp(-4.0 * np.pi ** 2 * k_sq * tau) / (4.0 * np.pi ** 2 * k_sq)
    reciprocal = (factors * np.cos(2.0 * np.pi * (k1 * x1 + k2 * x2))).sum(axis=-1)

    return 8.0 * np.pi * (real - tau + reciprocal)


def flat_torus_robin_constant(tau: float = DEFAULT_TAU, cutoff: int = 6) -> float:
    """A = lim_{x -> 0} (G(x, 0) + 4 ln |x|) for the flat unit-square torus."""
    m1, m2 = _lattice(cutoff)
    nonzero = (m1 != 0) | (m2 != 0)
    m_sq = m1[nonzero] ** 2 + m2[nonzero] ** 2

    # m = 0 image: E1(z) = -gamma - ln z + O(z), with the -ln|x|/(2 pi) part removed
    self_term = (np.log(4.0 * tau) - np.euler_gamma) / (4.0 * np.pi)
    images = exp1(m_sq / (4.0 * tau)).sum() / (4.0 * np.pi)
    reciprocal = (np.exp(-4.0 * np.pi ** 2 * m_sq * tau) / (4.0 * np.pi ** 2 * m_sq)).sum()

    return float(8.0 * np.pi * (self_term + images - tau + reciprocal))
