"""Reduced models from Hankel and snapshot data: ERA, balanced POD,
ERA with pseudo-adjoint modes, and POD/Galerkin."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dmat
from .errors import (BiorthogonalityFailure, DimensionMismatch, IllConditioned,
                     RankExceeded, ZeroMatrix)
from .hankel import HankelPair
from .lti import StateSpaceModel, make_system
from .sampling import OutputProjector, SnapshotMatrix, fix_column_signs

ERA = "era"
BPOD = "bpod"
PSEUDO = "pseudo"
POD = "pod"
BT_ORACLE = "bt-oracle"
METHODS = (ERA, BPOD, PSEUDO, POD, BT_ORACLE)

TRUE_ADJOINT = "true-adjoint"
PSEUDO_ADJOINT = "pseudo-adjoint"
POD_FLAVOR = "pod"
_FLAVOR_METHOD = {TRUE_ADJOINT: BPOD, PSEUDO_ADJOINT: PSEUDO, POD_FLAVOR: POD}

DEFAULT_RANK_TOL = 1e-10
BIORTHO_TOL = 1e-8
MAX_GRAM_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class HankelSVD:
    """Leading singular triples of a Hankel matrix.

    ``U`` and ``V`` hold the retained left/right singular vectors as columns,
    ``s`` the singular values in non-increasing order, ``n1`` the numerical
    rank (count of ``s_i > rank_tol * s_1``), which may exceed ``len(s)``.
    """

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    rank_tol: float
    n1: int

    @property
    def r(self):
        return self.s.shape[0]

    def leading(self, r):
        if r > self.r:
            raise RankExceeded(f"requested r={r} but only {self.r} singular "
                               f"triples retained (numerical rank {self.n1})")
        return self.U[:, :r], self.s[:r], self.V[:, :r]


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Primal modes ``phi`` and adjoint (or pseudo-adjoint) modes ``psi``
    with ``psi^T phi = I``.  For POD, ``psi`` is ``phi``."""

    phi: np.ndarray
    psi: np.ndarray
    flavor: str
    sigma: np.ndarray | None = None

    @property
    def r(self):
        return self.phi.shape[1]

    @property
    def n(self):
        return self.phi.shape[0]

    def leading(self, r):
        if r > self.r:
            raise RankExceeded(f"requested {r} modes, only {self.r} available")
        sigma = None if self.sigma is None else self.sigma[:r]
        return ModeSet(self.phi[:, :r], self.psi[:, :r], self.flavor, sigma)

    def biorthogonality_error(self):
        return float(np.max(np.abs(self.psi.T @ self.phi - np.eye(self.r)),
                            initial=0.0))


@dataclass(frozen=True, eq=False)
class ReducedModel:
    """Reduced triple plus the singular values that ranked its states.

    When ``output_projector`` is set, ``C`` maps to projected outputs
    ``theta^T y``; :meth:`lifted_output` maps back to the full output space.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    hsv: np.ndarray
    method: str
    output_projector: OutputProjector | None = None

    def __post_init__(self):
        r = self.A.shape[0]
        if self.A.shape != (r, r) or self.B.shape[0] != r or self.C.shape[1] != r:
            raise DimensionMismatch(
                f"inconsistent reduced shapes A{self.A.shape} "
                f"B{self.B.shape} C{self.C.shape}")
        hsv = np.asarray(self.hsv, dtype=float)
        if hsv.size and np.any(np.diff(hsv) > 1e-12 * abs(hsv[0])):
            raise ValueError("hsv must be non-increasing")

    @property
    def r(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.B.shape[1]

    @property
    def q(self):
        return self.C.shape[0]

    def system(self) -> StateSpaceModel:
        return make_system(self.A, self.B, self.C, require_stable=False)

    def lifted_output(self):
        """Output matrix in the full output space: ``theta C_r``."""
        if self.output_projector is None:
            return self.C
        return self.output_projector.theta @ self.C

    def save(self, directory):
        d = Path(directory)
        dmat.write_dmat(d / "A.dmat", self.A)
        dmat.write_dmat(d / "B.dmat", self.B)
        dmat.write_dmat(d / "C.dmat", self.C)
        meta = {"method": self.method, "r": self.r,
                "hsv": [float(v) for v in self.hsv],
                "projector_id": (None if self.output_projector is None
                                 else self.output_projector.ident)}
        dmat.write_sidecar(d / "model.json", meta)

    @classmethod
    def load(cls, directory, projector=None):
        d = Path(directory)
        meta = dmat.read_sidecar(d / "model.json")
        if meta.get("projector_id") and projector is not None \
                and projector.ident != meta["projector_id"]:
            raise DimensionMismatch("projector does not match the saved model")
        return cls(dmat.read_dmat(d / "A.dmat"), dmat.read_dmat(d / "B.dmat"),
                   dmat.read_dmat(d / "C.dmat"),
                   np.asarray(meta["hsv"], dtype=float), meta["method"],
                   projector if meta.get("projector_id") else None)


# -- SVD and order selection ---------------------------------------------------------
def svd_truncate(H, r=None, rank_tol=DEFAULT_RANK_TOL) -> HankelSVD:
    """Thin SVD of ``H`` keeping ``r`` triples (all ``n1`` when ``r`` is None).

    Columns of ``U`` are sign-fixed (largest-magnitude entry positive) and
    the same flips are applied to ``V``, so two pipelines that factor nearly
    equal matrices produce entrywise comparable results.
    """
    H = np.asarray(H, dtype=float)
    if r == 0:
        return HankelSVD(np.zeros((H.shape[0], 0)), np.zeros(0),
                         np.zeros((H.shape[1], 0)), rank_tol, 0)
    if H.size == 0 or not np.any(H):
        raise ZeroMatrix("cannot factor an all-zero Hankel matrix")
    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    n1 = int(np.sum(s > rank_tol * s[0]))
    k = n1 if r is None else int(r)
    if k > n1:
        raise RankExceeded(f"r={k} exceeds the numerical rank n1={n1}")
    U, V = fix_column_signs(U[:, :k], Vt[:k].T)
    return HankelSVD(U, s[:k].copy(), V, rank_tol, n1)


def choose_order(s, tail=1e-3, rtol=1e-10):
    """Smallest ``r`` whose discarded singular values carry less than
    ``tail`` of the total sum.  A group of equal singular values is never
    split: ``r`` is pushed past any ``s[r] == s[r-1]`` tie."""
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        return 0
    total = s.sum()
    tails = total - np.cumsum(s)
    r = int(np.argmax(tails < tail * total)) + 1
    while r < s.size and abs(s[r] - s[r - 1]) <= rtol * s[0]:
        r += 1
    return r


# -- balanced POD --------------------------------------------------------------------
def primal_modes(X: SnapshotMatrix, svd: HankelSVD, r=None):
    """``X V_r Sigma_r^{-1/2}``."""
    r = svd.r if r is None else r
    _, s, V = svd.leading(r)
    return (X.data @ V) / np.sqrt(s)


def bpod_modes(X: SnapshotMatrix, Y: SnapshotMatrix, svd: HankelSVD, r=None) -> ModeSet:
    """Balancing modes ``Phi = X V Sigma^{-1/2}``, ``Psi = Y U Sigma^{-1/2}``.

    Raises BiorthogonalityFailure if ``Psi^T Phi`` departs from the identity
    by more than ``1e-8 * s_1 / s_r``, which means ``svd`` was not computed
    from ``Y^T X``.  Rounding in the singular vectors alone leaves errors
    near ``eps * s_1 / s_r``; one correction ``Psi <- Psi (Phi^T Psi)^{-1}``
    then removes them, so the returned modes are biorthogonal to working
    precision.
    """
    r = svd.r if r is None else r
    U, s, V = svd.leading(r)
    root = np.sqrt(s)
    if X.data.shape[1] != V.shape[0] or Y.data.shape[1] != U.shape[0]:
        raise BiorthogonalityFailure("snapshot sizes do not match the SVD")
    modes = ModeSet((X.data @ V) / root, (Y.data @ U) / root, TRUE_ADJOINT, s)
    err = modes.biorthogonality_error()
    tol = BIORTHO_TOL * (s[0] / s[-1] if r else 1.0)
    if not err <= tol:
        raise BiorthogonalityFailure(
            f"|Psi^T Phi - I| = {err:.3g} exceeds {tol:.3g}")
    if r:
        psi = np.linalg.solve(modes.psi.T @ modes.phi, modes.psi.T).T
        modes = ModeSet(modes.phi, psi, TRUE_ADJOINT, s)
    return modes


def _project(model, phi, psi, projector):
    if phi.shape[0] != model.n or psi.shape[0] != model.n:
        raise DimensionMismatch(
            f"modes have {phi.shape[0]} rows, model has n={model.n}")
    C = model.C if projector is None else projector.theta.T @ model.C
    return psi.T @ (model.A @ phi), psi.T @ model.B, C @ phi


def bpod_reduce(model: StateSpaceModel, modes: ModeSet,
                projector: OutputProjector | None = None) -> ReducedModel:
    """Petrov-Galerkin projection ``(Psi^T A Phi, Psi^T B, C Phi)``."""
    A, B, C = _project(model, modes.phi, modes.psi, projector)
    hsv = modes.sigma if modes.sigma is not None else np.zeros(0)
    return ReducedModel(A, B, C, np.asarray(hsv), _FLAVOR_METHOD[modes.flavor],
                        projector)


# -- ERA -------------------------------------------------------------------------------
def era_reduce(pair: HankelPair, svd: HankelSVD, r: int, p=None, q=None,
               projector: OutputProjector | None = None) -> ReducedModel:
    """ERA realization of order ``r``.

    ``A_r = S^{-1/2} U^T H' V S^{-1/2}``, ``B_r`` the first ``p`` columns of
    ``S^{1/2} V^T`` and ``C_r`` the first ``q`` rows of ``U S^{1/2}``.
    """
    q_blk, p_blk = pair.block_shape
    p = p_blk if p is None else p
    q = q_blk if q is None else q
    U, s, V = svd.leading(r)
    if U.shape[0] != pair.H.shape[0] or V.shape[0] != pair.H.shape[1]:
        raise DimensionMismatch("SVD does not belong to this Hankel pair")
    root = np.sqrt(s)
    A = (U.T @ pair.Hprime @ V) / np.outer(root, root) if r else np.zeros((0, 0))
    B = (root[:, None] * V.T)[:, :p]
    C = (U * root)[:q, :]
    return ReducedModel(A, B, C, s.copy(), ERA, projector)


# -- pseudo-adjoint modes ----------------------------------------------------------------
def pseudo_adjoint_modes(phi1) -> ModeSet:
    """``Psi~ = Phi (Phi^T Phi)^{-1}``, the Moore-Penrose surrogate for the
    adjoint modes."""
    phi1 = np.asarray(phi1, dtype=float)
    G = phi1.T @ phi1
    cond = np.linalg.cond(G) if G.size else 1.0
    if not cond < MAX_GRAM_CONDITION:
        raise IllConditioned(
            f"Phi^T Phi has condition number {cond:.3g}", condition_number=cond)
    psi = np.linalg.solve(G, phi1.T).T
    return ModeSet(phi1, psi, PSEUDO_ADJOINT)


def pseudo_reduce(model: StateSpaceModel, phi_r, psi_r, hsv=None,
                  projector: OutputProjector | None = None) -> ReducedModel:
    A, B, C = _project(model, np.asarray(phi_r), np.asarray(psi_r), projector)
    hsv = np.zeros(0) if hsv is None else np.asarray(hsv)[:A.shape[0]]
    return ReducedModel(A, B, C, hsv, PSEUDO, projector)


# -- POD/Galerkin --------------------------------------------------------------------------
def pod_modes(X: SnapshotMatrix, r: int, rank_tol=DEFAULT_RANK_TOL) -> ModeSet:
    U, s, _ = np.linalg.svd(X.data, full_matrices=False)
    rank = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
    if r > rank:
        raise RankExceeded(f"r={r} exceeds snapshot rank {rank}")
    phi = fix_column_signs(U[:, :r])
    return ModeSet(phi, phi, POD_FLAVOR, s[:r].copy())


def pod_reduce(X: SnapshotMatrix, model: StateSpaceModel, r: int,
               projector: OutputProjector | None = None) -> ReducedModel:
    """Galerkin projection onto the leading ``r`` POD modes of ``X``."""
    return bpod_reduce(model, pod_modes(X, r), projector)
