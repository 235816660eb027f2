"""
Random problem instances shared by the test modules.

All generators take a seeded numpy Generator so every test is reproducible.
"""

import numpy as np

from qho_observer.coupling.composite import PlantObserverSystem
from qho_observer.data_loading.loader import canonical_ccr
from qho_observer.linalg import matlib


def random_spd(rng: np.random.Generator, n: int, floor: float = 0.5) -> np.ndarray:
    g = rng.standard_normal((n, n))
    return matlib.symmetrize(g @ g.T / n + floor * np.eye(n))


def random_covariance(rng: np.random.Generator, n: int) -> np.ndarray:
    """Sigma >= I/2 satisfies Sigma + i Theta >= 0 for the canonical CCR matrix."""
    return random_spd(rng, n, floor=0.5)


def random_oscillator(rng: np.random.Generator, n: int):
    """(theta, energy, sigma) with R > 0."""
    return canonical_ccr(n), random_spd(rng, n), random_covariance(rng, n)


def random_system(rng: np.random.Generator, n: int = 2, nu: int = 2, p: int = 2,
                  contraction: float = 0.3, tau: float = 1.0, lam: float = 1.0) -> PlantObserverSystem:
    """
    Plant-observer system with K, M > 0 and ||K^{-1/2} L M^{-1/2}|| = contraction < 1,
    so R > 0 and every horizon is admissible.
    """
    k_energy = random_spd(rng, n)
    m_energy = random_spd(rng, nu)
    raw = rng.standard_normal((n, nu))
    scaled = matlib.sym_inv_sqrt(k_energy) @ raw @ matlib.sym_inv_sqrt(m_energy)
    coupling = contraction * raw / np.linalg.norm(scaled, 2)
    return PlantObserverSystem(
        theta1=canonical_ccr(n),
        theta2=canonical_ccr(nu),
        k_energy=k_energy,
        m_energy=m_energy,
        coupling=coupling,
        sigma1=random_covariance(rng, n),
        sigma2=random_covariance(rng, nu),
        s1=rng.standard_normal((p, n)),
        s2=rng.standard_normal((p, nu)),
        pi_weight=random_spd(rng, n),
        lam=lam,
        tau=tau,
    )
