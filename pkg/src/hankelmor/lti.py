"""Discrete-time LTI systems, their adjoints, impulse simulation and the
bundled test plants."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .errors import DegenerateDraw, DimensionMismatch, UnstableSystem, ConfigError

STABILITY_MARGIN = 1e-12
DENSE_EIG_LIMIT = 2000


def spectral_radius(A) -> float:
    """Largest eigenvalue magnitude of a square matrix.

    Dense eigenvalue solve up to ``n = 2000``; Arnoldi (ARPACK) with
    relative tolerance 1e-10 beyond that.
    """
    A = np.asarray(A)
    n = A.shape[0]
    if n == 0:
        return 0.0
    if n <= DENSE_EIG_LIMIT:
        return float(np.max(np.abs(la.eigvals(A))))
    vals = spla.eigs(A, k=1, which="LM", tol=1e-10, return_eigenvectors=False)
    return float(np.abs(vals[0]))


def _frozen(M, name, ndmin=2):
    M = np.array(M, dtype=float, ndmin=ndmin)
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got ndim={M.ndim}")
    M.setflags(write=False)
    return M


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Dense triple ``(A, B, C)`` of ``x[k+1] = A x[k] + B u[k], y[k] = C x[k]``.

    Instances are immutable: the arrays are flagged read-only.  Use
    :func:`make_system` to build one; it validates dimensions and records the
    spectral radius.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    rho: float = field(default=float("nan"))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.B.shape[1]

    @property
    def q(self):
        return self.C.shape[0]

    @property
    def stable(self):
        return self.rho < 1.0 - STABILITY_MARGIN

    def __eq__(self, other):
        if not isinstance(other, StateSpaceModel):
            return NotImplemented
        return (np.array_equal(self.A, other.A)
                and np.array_equal(self.B, other.B)
                and np.array_equal(self.C, other.C))

    __hash__ = None

    def __repr__(self):
        return (f"StateSpaceModel(n={self.n}, p={self.p}, q={self.q}, "
                f"rho={self.rho:.6g})")


def make_system(A, B, C, require_stable=True) -> StateSpaceModel:
    """Validate ``(A, B, C)`` and return a :class:`StateSpaceModel`.

    Raises
    ------
    DimensionMismatch
        If ``A`` is not square or ``B``/``C`` do not conform to it.
    UnstableSystem
        If ``require_stable`` and the spectral radius is at least
        ``1 - 1e-12``.
    """
    A = _frozen(A, "A")
    B = _frozen(B, "B")
    C = _frozen(C, "C")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
    if C.shape[1] != n:
        raise DimensionMismatch(f"C has {C.shape[1]} columns, expected {n}")
    rho = spectral_radius(A)
    if require_stable and rho >= 1.0 - STABILITY_MARGIN:
        raise UnstableSystem(f"spectral radius {rho:.16g} is not below 1")
    return StateSpaceModel(A, B, C, rho)


def adjoint_system(model: StateSpaceModel) -> StateSpaceModel:
    """Return ``(A^T, C^T, B^T)``: inputs and outputs trade places."""
    return StateSpaceModel(_frozen(model.A.T, "A"), _frozen(model.C.T, "B"),
                           _frozen(model.B.T, "C"), model.rho)


# -- simulation ------------------------------------------------------------------
def simulate_columns(A, V, exponents):
    """Step each column of ``V`` through ``x <- A x`` independently.

    Returns an array of shape ``(len(exponents), n, ncols)`` whose slice ``i``
    holds ``A^{exponents[i]} V``.  Powers of ``A`` are never formed, and every
    column follows its own recursion so results do not depend on how many
    channels are simulated together.
    """
    A = np.ascontiguousarray(A)
    V = np.asarray(V, dtype=float)
    exponents = [int(e) for e in exponents]
    if any(e < 0 for e in exponents):
        raise ValueError("exponents must be nonnegative")
    n, ncols = V.shape
    out = np.empty((len(exponents), n, ncols))
    if not exponents:
        return out
    slots = {}
    for i, e in enumerate(exponents):
        slots.setdefault(e, []).append(i)
    kmax = max(exponents)
    for c in range(ncols):
        x = V[:, c].copy()
        for i in slots.get(0, ()):
            out[i, :, c] = x
        for k in range(1, kmax + 1):
            x = A @ x
            for i in slots.get(k, ()):
                out[i, :, c] = x
    return out


def impulse_response_states(model: StateSpaceModel, m: int, P: int = 1):
    """Snapshot matrix ``[B, A^P B, ..., A^{mP} B]``.

    Column ``j*p + c`` holds channel ``c`` of block ``j``.
    """
    from .sampling import SnapshotMatrix

    if m < 0 or P < 1:
        raise ValueError(f"need m >= 0 and P >= 1, got m={m}, P={P}")
    blocks = simulate_columns(model.A, model.B, [j * P for j in range(m + 1)])
    data = np.concatenate(list(blocks), axis=1)
    return SnapshotMatrix(data, model.p, P, "primal")


def markov_parameters(model: StateSpaceModel, count: int):
    """First ``count`` Markov parameters ``C A^k B``, ``k = 0..count-1``."""
    from .sampling import MarkovSequence

    if count < 1:
        raise ValueError("count must be at least 1")
    states = simulate_columns(model.A, model.B, range(count))
    blocks = np.einsum("qn,knp->kqp", model.C, states)
    return MarkovSequence(blocks, np.arange(count))


def tail_horizon(model: StateSpaceModel, tol=1e-8, kmax=100_000):
    """Smallest ``k`` with ``||A^k B||_F < tol * ||B||_F``."""
    ref = np.linalg.norm(model.B)
    if ref == 0:
        return 0
    X = np.array(model.B, dtype=float)
    A = np.ascontiguousarray(model.A)
    for k in range(1, kmax + 1):
        X = A @ X
        if np.linalg.norm(X) < tol * ref:
            return k
    raise UnstableSystem(f"impulse response did not decay to {tol} "
                         f"within {kmax} steps")


# -- fixtures ----------------------------------------------------------------------
def random_stable_system(n, p, q, target_radius=0.9, seed=0) -> StateSpaceModel:
    """Gaussian random system with ``A`` rescaled to spectral radius
    ``target_radius``.  Deterministic for a fixed ``seed``."""
    if not 0.0 < target_radius < 1.0:
        raise ValueError("target_radius must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    for _ in range(10):
        A = rng.standard_normal((n, n))
        rho = spectral_radius(A)
        if rho > 1e-12 * max(np.linalg.norm(A, 2), 1e-300):
            break
    else:
        raise DegenerateDraw("random state matrix nilpotent in 10 draws")
    A *= target_radius / rho
    B = rng.standard_normal((n, p))
    C = rng.standard_normal((q, n))
    return make_system(A, B, C, require_stable=True)


@dataclass
class PlantConfig:
    """2-D convection-diffusion plant on an ``nx`` x ``ny`` grid.

    ``nu``, ``cx`` and ``cy`` are rates per unit time in grid units; one step
    of the discrete system advances time by ``dt``.
    """

    nx: int = 16
    ny: int = 16
    nu: float = 0.2
    cx: float = 0.3
    cy: float = 0.0
    forcing_center: tuple = (3.0, 7.5)
    forcing_width: float = 1.5
    dt: float = 0.5

    def __post_init__(self):
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise ConfigError("grid sizes must be positive")
        if self.nu < 0:
            raise ConfigError("diffusion coefficient must be nonnegative")
        if self.dt <= 0:
            raise ConfigError("time step must be positive")
        self.nx, self.ny = int(self.nx), int(self.ny)
        self.forcing_center = tuple(float(v) for v in self.forcing_center)
        if len(self.forcing_center) != 2:
            raise ConfigError("forcing_center needs two coordinates")

    @classmethod
    def from_json(cls, path):
        raw = json.loads(Path(path).read_text())
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown plant fields: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self):
        d = asdict(self)
        d["forcing_center"] = list(self.forcing_center)
        return d


def _axis_operator(N, nu, c):
    """1-D central diffusion plus first-order upwind convection,
    homogeneous Dirichlet ends."""
    L = nu * (np.diag(np.full(N, -2.0)) + np.diag(np.ones(N - 1), 1)
              + np.diag(np.ones(N - 1), -1))
    if c > 0:
        L += c * (np.diag(np.ones(N - 1), -1) - np.eye(N))
    elif c < 0:
        L += -c * (np.diag(np.ones(N - 1), 1) - np.eye(N))
    return L


def build_plant(config: PlantConfig) -> StateSpaceModel:
    """Explicit-Euler convection-diffusion plant.

    State index is ``j * nx + i`` for grid cell ``(i, j)``.  The single input
    is a Gaussian body force centred at ``forcing_center``; the output is the
    full state (``C = I``).
    """
    nx, ny = config.nx, config.ny
    Lx = _axis_operator(nx, config.nu, config.cx)
    Ly = _axis_operator(ny, config.nu, config.cy)
    L = np.kron(np.eye(ny), Lx) + np.kron(Ly, np.eye(nx))
    A = np.eye(nx * ny) + config.dt * L
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    x0, y0 = config.forcing_center
    w = config.forcing_width
    force = np.exp(-((ii - x0) ** 2 + (jj - y0) ** 2) / (2.0 * w * w))
    B = config.dt * force.reshape(-1, 1)
    C = np.eye(nx * ny)
    return make_system(A, B, C, require_stable=True)


# Small named systems used throughout the tests and the CLI.
def scalar_system():
    return make_system([[0.5]], [[1.0]], [[1.0]])


def s2_system():
    return make_system([[0.5, 1.0], [0.0, 0.6]], [[0.0], [1.0]], [[1.0, 0.0]])
