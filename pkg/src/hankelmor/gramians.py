"""Exact and empirical Gramians, the exact balanced-truncation oracle and
transformed-Gramian block diagnostics."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dmat
from .errors import (BiorthogonalityFailure, ConfigError, DimensionMismatch,
                     RankExceeded, SingularTransformation, UnstableSystem)
from .lti import StateSpaceModel, adjoint_system, make_system
from .reduction import BT_ORACLE, ReducedModel
from .sampling import OutputProjector, SnapshotMatrix, fix_column_signs

EXACT = "exact"
EMPIRICAL = "empirical"
ORACLE_MAX_N = 2000


@dataclass(frozen=True, eq=False)
class GramianPair:
    Wc: np.ndarray
    Wo: np.ndarray
    kind: str

    @property
    def n(self):
        return self.Wc.shape[0]


def empirical_gramians(X: SnapshotMatrix, Y: SnapshotMatrix) -> GramianPair:
    Xd = X.data if isinstance(X, SnapshotMatrix) else np.asarray(X, dtype=float)
    Yd = Y.data if isinstance(Y, SnapshotMatrix) else np.asarray(Y, dtype=float)
    if Xd.shape[0] != Yd.shape[0]:
        raise DimensionMismatch(f"X has {Xd.shape[0]} rows, Y has {Yd.shape[0]}")
    return GramianPair(Xd @ Xd.T, Yd @ Yd.T, EMPIRICAL)


def stein_doubling(A, Q, rtol=1e-14, max_iter=64):
    """Solve ``W = A W A^T + Q`` by squared iteration.

    ``W_{k+1} = W_k + A_k W_k A_k^T`` with ``A_{k+1} = A_k^2`` sums the series
    ``sum_j A^j Q (A^T)^j`` in doubling chunks; stop once an update is below
    ``rtol * ||W||``.
    """
    W = np.array(Q, dtype=float)
    Ak = np.array(A, dtype=float)
    for _ in range(max_iter):
        update = Ak @ W @ Ak.T
        W = W + update
        if np.linalg.norm(update) <= rtol * np.linalg.norm(W):
            return 0.5 * (W + W.T)
        Ak = Ak @ Ak
        if not np.all(np.isfinite(Ak)):
            break
    raise UnstableSystem("Stein iteration did not converge")


def _check_oracle(model):
    if model.n > ORACLE_MAX_N:
        raise ConfigError(f"exact Gramians limited to n <= {ORACLE_MAX_N}")
    if not model.stable:
        raise UnstableSystem(f"spectral radius {model.rho:.6g} is not below 1")


def exact_gramians(model: StateSpaceModel, period: int = 1) -> GramianPair:
    """Solutions of ``A Wc A^T - Wc + B B^T = 0`` and
    ``A^T Wo A - Wo + C^T C = 0``.

    With ``period = P > 1`` the step matrix is ``A^P``: these are the limits of
    the empirical Gramians ``X X^T`` and ``Y Y^T`` sampled every ``P`` steps.
    """
    _check_oracle(model)
    AP = np.linalg.matrix_power(np.asarray(model.A), int(period))
    Wc = stein_doubling(AP, model.B @ model.B.T)
    Wo = stein_doubling(AP.T, model.C.T @ model.C)
    return GramianPair(Wc, Wo, EXACT)


def _psd_factor(W):
    lam, V = np.linalg.eigh(W)
    return V * np.sqrt(np.clip(lam, 0.0, None))


def exact_hankel_singular_values(model: StateSpaceModel, period: int = 1):
    """All Hankel singular values ``sqrt(eig(Wc Wo))``, non-increasing."""
    g = exact_gramians(model, period)
    return np.linalg.svd(_psd_factor(g.Wo).T @ _psd_factor(g.Wc),
                         compute_uv=False)


def exact_balanced_truncation(model: StateSpaceModel, r: int, period: int = 1,
                              projector: OutputProjector | None = None,
                              rank_tol=1e-10) -> ReducedModel:
    """Square-root balanced truncation from Lyapunov-solved Gramians.

    Serves as the oracle for the snapshot methods.  ``period`` balances the
    Gramians of the ``P``-step sampled system (see :func:`exact_gramians`)
    while the projection is applied to the one-step ``A``, which is what the
    snapshot methods converge to.
    """
    if projector is not None:
        model = make_system(model.A, model.B, projector.theta.T @ model.C,
                            require_stable=False)
    g = exact_gramians(model, period)
    Lc, Lo = _psd_factor(g.Wc), _psd_factor(g.Wo)
    U, s, Vt = np.linalg.svd(Lo.T @ Lc)
    if r > s.size or (r > 0 and s[r - 1] <= rank_tol * s[0]):
        raise RankExceeded(f"order {r} exceeds the numerical Hankel rank")
    U, V = fix_column_signs(U[:, :r], Vt[:r].T)
    root = np.sqrt(s[:r])
    T = (Lc @ V) / root
    S = (Lo @ U) / root
    Ar = S.T @ model.A @ T
    return ReducedModel(Ar, S.T @ model.B, model.C @ T, s[:r].copy(),
                        BT_ORACLE, projector)


# -- full transformations and block diagnostics -----------------------------------------
@dataclass(frozen=True, eq=False)
class FullTransformation:
    T: np.ndarray
    Tinv: np.ndarray
    split: int

    @property
    def phi2(self):
        return self.T[:, self.split:]


def build_full_transformation(phi1, psi1) -> FullTransformation:
    """``T = [Phi1 Phi2]`` with ``Phi2`` an orthonormal basis of the null
    space of ``Psi1^T``, so the leading rows of ``T^{-1}`` are ``Psi1^T``.

    For pseudo-adjoint ``psi1`` the range matches that of ``phi1`` and
    ``Phi2`` comes out orthogonal to the primal modes.
    """
    phi1 = np.asarray(phi1, dtype=float)
    psi1 = np.asarray(psi1, dtype=float)
    n, r1 = phi1.shape
    if psi1.shape != (n, r1):
        raise DimensionMismatch(f"Phi1 is {phi1.shape}, Psi1 is {psi1.shape}")
    err = np.max(np.abs(psi1.T @ phi1 - np.eye(r1)), initial=0.0)
    if err > 1e-8:
        raise BiorthogonalityFailure(f"|Psi1^T Phi1 - I| = {err:.3g}")
    U = np.linalg.svd(psi1, full_matrices=True)[0]
    T = np.hstack([phi1, U[:, r1:]])
    cond = np.linalg.cond(T)
    if not cond < 1e14:
        raise SingularTransformation(f"transformation condition {cond:.3g}")
    Tinv = np.linalg.solve(T, np.eye(n))
    return FullTransformation(T, Tinv, r1)


def _blocks(M, k):
    return M[:k, :k], M[:k, k:], M[k:, :k], M[k:, k:]


@dataclass(frozen=True, eq=False)
class BlockDiagnostics:
    """Gramians in transformed coordinates, partitioned after ``split`` rows.

    ``Wc_t = T^{-1} Wc T^{-T}``, ``Wo_t = T^T Wo T`` and
    ``product_t = T^{-1} Wc Wo T``.  ``M3`` is the observed upper-right block
    of ``Wo_t``; ``M3_independent`` is ``Sigma1 Psi1^T Phi2`` from the true
    adjoint modes, when those were supplied.
    """

    Wc_t: np.ndarray
    Wo_t: np.ndarray
    product_t: np.ndarray
    split: int
    sigma1: np.ndarray
    M3: np.ndarray
    M3_independent: np.ndarray | None = None

    def block(self, name, which):
        M = {"Wc": self.Wc_t, "Wo": self.Wo_t, "product": self.product_t}[name]
        return dict(zip(("ul", "ur", "ll", "lr"), _blocks(M, self.split)))[which]

    def metrics(self):
        S = np.diag(self.sigma1)
        out = {"split": self.split, "sigma_1": float(self.sigma1[0]) if self.sigma1.size else 0.0}
        for name, target in (("Wc", S), ("Wo", S), ("product", S @ S)):
            ul, ur, ll, lr = (self.block(name, w) for w in ("ul", "ur", "ll", "lr"))
            out[f"{name}_ul_dev"] = float(np.linalg.norm(ul - target))
            out[f"{name}_ur_norm"] = float(np.linalg.norm(ur))
            out[f"{name}_ll_norm"] = float(np.linalg.norm(ll))
            out[f"{name}_lr_norm"] = float(np.linalg.norm(lr))
        out["M3_norm"] = float(np.linalg.norm(self.M3))
        if self.M3_independent is not None:
            out["M3_crosscheck"] = float(
                np.linalg.norm(self.M3 - self.M3_independent))
            out["product_ur_vs_sigma_M3"] = float(np.linalg.norm(
                self.block("product", "ur") - S @ self.M3_independent))
        return out

    def save(self, directory, prefix="transformed"):
        d = Path(directory)
        for name, M in (("Wc", self.Wc_t), ("Wo", self.Wo_t),
                        ("product", self.product_t)):
            dmat.write_dmat(d / f"{prefix}_{name}.dmat", M)
            np.savetxt(d / f"{prefix}_{name}_abs.csv", np.abs(M),
                       delimiter=",", fmt="%.6e")
        dmat.write_sidecar(d / f"{prefix}.json", self.metrics())


def transformed_gramians(trans: FullTransformation, grams: GramianPair, sigma1,
                         psi1_true=None) -> BlockDiagnostics:
    if grams.n != trans.T.shape[0]:
        raise DimensionMismatch(
            f"Gramians are {grams.n}x{grams.n}, transformation {trans.T.shape}")
    sigma1 = np.asarray(sigma1, dtype=float)
    if sigma1.shape != (trans.split,):
        raise DimensionMismatch("sigma1 must have one entry per leading mode")
    T, Ti = trans.T, trans.Tinv
    Wc_t = Ti @ grams.Wc @ Ti.T
    Wo_t = T.T @ grams.Wo @ T
    prod_t = Ti @ grams.Wc @ grams.Wo @ T
    k = trans.split
    M3_ind = None
    if psi1_true is not None:
        psi1_true = np.asarray(psi1_true, dtype=float)
        if psi1_true.shape != (T.shape[0], k):
            raise DimensionMismatch("true adjoint modes have the wrong shape")
        M3_ind = sigma1[:, None] * (psi1_true.T @ trans.phi2)
    return BlockDiagnostics(Wc_t, Wo_t, prod_t, k, sigma1, Wo_t[:k, k:].copy(),
                            M3_ind)


# -- reduced-model Gramian diagonals ---------------------------------------------------------
def gramian_diagonals_report(reduced: ReducedModel, horizon=None):
    """Rows ``(i, sigma_i, Wc_ii, Wo_ii)`` for the reduced model's Gramians.

    ``horizon=None`` uses the infinite-horizon (Lyapunov) Gramians; an integer
    sums the first ``horizon`` terms instead.
    """
    sys = reduced.system()
    if horizon is None:
        if not sys.stable:
            raise UnstableSystem(
                f"reduced {reduced.method} model has spectral radius {sys.rho:.6g}")
        g = exact_gramians(sys)
        Wc, Wo = g.Wc, g.Wo
    else:
        Wc = np.zeros((sys.n, sys.n))
        Wo = np.zeros_like(Wc)
        Xk, Yk = np.array(sys.B), np.array(sys.C.T)
        for _ in range(int(horizon)):
            Wc += Xk @ Xk.T
            Wo += Yk @ Yk.T
            Xk, Yk = sys.A @ Xk, sys.A.T @ Yk
    sig = np.full(sys.n, np.nan)
    sig[:len(reduced.hsv)] = reduced.hsv[:sys.n]
    return [(i + 1, float(sig[i]), float(Wc[i, i]), float(Wo[i, i]))
            for i in range(sys.n)]


def balance_defect(reduced: ReducedModel) -> float:
    """How far the reduced model is from balanced: off-diagonal mass of both
    Gramians plus their mismatch, relative to their size."""
    g = exact_gramians(reduced.system())
    off = lambda W: W - np.diag(np.diag(W))
    scale = np.linalg.norm(g.Wc) + np.linalg.norm(g.Wo)
    return float((np.linalg.norm(off(g.Wc)) + np.linalg.norm(off(g.Wo))
                  + np.linalg.norm(g.Wc - g.Wo)) / scale)


def perturb_adjoint(model: StateSpaceModel, eps: float, seed: int = 0) -> StateSpaceModel:
    """Adjoint system with ``A^T`` replaced by ``A^T + eps E``, ``E`` a fixed
    seeded Gaussian matrix of unit spectral norm.  ``eps = 0`` gives the
    exact adjoint."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    adj = adjoint_system(model)
    if eps == 0:
        return adj
    E = np.random.default_rng(seed).standard_normal((model.n, model.n))
    E /= np.linalg.norm(E, 2)
    return make_system(adj.A + eps * E, adj.B, adj.C, require_stable=False)
