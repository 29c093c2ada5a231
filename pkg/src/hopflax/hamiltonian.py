"""Legendre conjugates H* of convex Hamiltonians."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class ConjugateHamiltonian:
    """Evaluator of ``q -> H*(q)``.

    The built-in family is quadratic, ``H*(q) = 1/2 q^T M q`` with ``M``
    symmetric positive definite; the compiled sweep kernels use ``M``
    directly. A custom conjugate can be supplied as ``func`` (vectorised
    over an ``(n, 2)`` array); it is then evaluated from Python, which is
    far slower. Bounded second and third derivatives of a custom ``func``
    are the caller's responsibility.
    """

    kind: str
    matrix: np.ndarray | None = None
    func: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    @classmethod
    def quadratic(cls, gamma: float = 1.0) -> "ConjugateHamiltonian":
        """Conjugate of ``H(p) = |p|^2 / (2 gamma)``, i.e. ``gamma |q|^2 / 2``."""
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        return cls("quadratic_isotropic", gamma * np.eye(2))

    @classmethod
    def anisotropic(cls, m_inv) -> "ConjugateHamiltonian":
        m_inv = np.array(m_inv, dtype=np.float64).reshape(2, 2)
        if not np.allclose(m_inv, m_inv.T):
            raise ValueError("matrix must be symmetric")
        if np.any(np.linalg.eigvalsh(m_inv) <= 0):
            raise ValueError("matrix must be positive definite")
        return cls("quadratic_anisotropic", m_inv)

    @classmethod
    def custom(cls, func: Callable[[np.ndarray], np.ndarray]) -> "ConjugateHamiltonian":
        return cls("custom", None, func)

    @property
    def is_quadratic(self) -> bool:
        return self.matrix is not None

    def __call__(self, q) -> np.ndarray | float:
        return eval_conjugate(self, q)


def eval_conjugate(h: ConjugateHamiltonian, q):
    """Evaluate ``H*`` at one point or at each row of an ``(n, 2)`` array."""
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    q2 = q.reshape(-1, 2)
    if h.matrix is None:
        out = np.asarray(h.func(q2), dtype=np.float64)
    else:
        m = h.matrix
        q0 = q2[:, 0]
        q1 = q2[:, 1]
        # same operation order as the compiled kernels, so values agree bitwise
        out = 0.5 * (m[0, 0] * q0 * q0 + 2.0 * m[0, 1] * q0 * q1 + m[1, 1] * q1 * q1)
    return float(out[0]) if single else out


_REGISTRY: dict[str, Callable[..., ConjugateHamiltonian]] = {
    "quadratic": ConjugateHamiltonian.quadratic,
    "anisotropic": ConjugateHamiltonian.anisotropic,
}


def register(name: str, factory: Callable[..., ConjugateHamiltonian]) -> None:
    """Make a conjugate available by name (used by the CLI)."""
    _REGISTRY[name] = factory


def by_name(name: str, *args) -> ConjugateHamiltonian:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown Hamiltonian {name!r}; known: {sorted(_REGISTRY)}") from None
    return factory(*args)
