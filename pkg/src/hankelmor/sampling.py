"""Snapshot collection for balanced POD and ERA, plus output projection."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dmat
from .errors import (DimensionMismatch, MissingExponent,
                     ProjectorDimensionMismatch, RankDeficient, UnstableSystem)
from .lti import (StateSpaceModel, adjoint_system, simulate_columns,
                  tail_horizon, impulse_response_states)

PRIMAL = "primal"
ADJOINT = "adjoint"


@dataclass(frozen=True, eq=False)
class SnapshotMatrix:
    """Column-stacked impulse-response states.

    Block ``j`` (columns ``j*block_width`` to ``(j+1)*block_width``) holds
    ``A^{jP} B`` for a primal matrix or ``(A^T)^{jP} C^T`` for an adjoint one.
    """

    data: np.ndarray
    block_width: int
    sampling_period: int
    kind: str = PRIMAL

    def __post_init__(self):
        if self.kind not in (PRIMAL, ADJOINT):
            raise ValueError(f"unknown snapshot kind {self.kind!r}")
        if self.block_width < 1 or self.data.shape[1] % self.block_width:
            raise DimensionMismatch(
                f"{self.data.shape[1]} columns not divisible by block "
                f"width {self.block_width}")

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def nblocks(self):
        return self.data.shape[1] // self.block_width

    @property
    def m(self):
        """Index of the last snapshot block (``m_c`` or ``m_o``)."""
        return self.nblocks - 1

    def block(self, j):
        w = self.block_width
        return self.data[:, j * w:(j + 1) * w]

    def save(self, stem):
        stem = Path(stem)
        dmat.write_dmat(stem.with_suffix(".dmat"), self.data)
        dmat.write_sidecar(stem.with_suffix(".json"), {
            "kind": self.kind, "P": self.sampling_period,
            "block_width": self.block_width,
            "indices": [j * self.sampling_period for j in range(self.nblocks)],
        })

    @classmethod
    def load(cls, stem):
        stem = Path(stem)
        meta = dmat.read_sidecar(stem.with_suffix(".json"))
        data = dmat.read_dmat(stem.with_suffix(".dmat"))
        return cls(data, int(meta["block_width"]), int(meta["P"]), meta["kind"])


@dataclass(frozen=True, eq=False)
class MarkovSequence:
    """Output blocks ``C A^k B`` stored once per distinct exponent ``k``.

    ``blocks`` has shape ``(N, q, p)``; ``indices`` are strictly increasing.
    """

    blocks: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=float)
        indices = np.asarray(self.indices, dtype=int)
        if blocks.ndim != 3 or blocks.shape[0] != indices.shape[0]:
            raise DimensionMismatch("blocks must be (N, q, p) with N indices")
        if np.any(np.diff(indices) <= 0):
            raise ValueError("Markov indices must be strictly increasing")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "_where",
                           {int(k): i for i, k in enumerate(indices)})

    @property
    def block_shape(self):
        return self.blocks.shape[1:]

    def __len__(self):
        return self.blocks.shape[0]

    def __contains__(self, k):
        return int(k) in self._where

    def block(self, k):
        try:
            return self.blocks[self._where[int(k)]]
        except KeyError:
            raise MissingExponent(int(k)) from None

    def as_columns(self):
        """All blocks side by side: a ``q x (N p)`` matrix of output snapshots."""
        return np.concatenate(list(self.blocks), axis=1)

    def project(self, projector: "OutputProjector") -> "MarkovSequence":
        if projector.q != self.block_shape[0]:
            raise ProjectorDimensionMismatch(
                f"projector acts on {projector.q} outputs, blocks have "
                f"{self.block_shape[0]}")
        return MarkovSequence(
            np.einsum("qm,kqp->kmp", projector.theta, self.blocks), self.indices)

    def save(self, stem):
        stem = Path(stem)
        N, q, p = self.blocks.shape
        dmat.write_dmat(stem.with_suffix(".dmat"), self.blocks.reshape(N * q, p))
        dmat.write_sidecar(stem.with_suffix(".json"), {
            "kind": "markov", "block_shape": [q, p],
            "indices": [int(k) for k in self.indices],
        })

    @classmethod
    def load(cls, stem):
        stem = Path(stem)
        meta = dmat.read_sidecar(stem.with_suffix(".json"))
        q, p = meta["block_shape"]
        flat = dmat.read_dmat(stem.with_suffix(".dmat"))
        return cls(flat.reshape(-1, q, p), np.asarray(meta["indices"]))


@dataclass(frozen=True, eq=False)
class OutputProjector:
    """Orthonormal output basis ``theta`` (``q x m_out``) with the singular
    values of the output-snapshot matrix it was fitted on."""

    theta: np.ndarray
    energies: np.ndarray

    @property
    def q(self):
        return self.theta.shape[0]

    @property
    def m_out(self):
        return self.theta.shape[1]

    @property
    def ident(self):
        return hashlib.sha256(np.ascontiguousarray(self.theta).tobytes()).hexdigest()[:16]

    def save(self, stem):
        stem = Path(stem)
        dmat.write_dmat(stem.with_suffix(".dmat"), self.theta)
        dmat.write_sidecar(stem.with_suffix(".json"), {
            "kind": "projector", "id": self.ident,
            "energies": [float(e) for e in self.energies]})

    @classmethod
    def load(cls, stem):
        stem = Path(stem)
        meta = dmat.read_sidecar(stem.with_suffix(".json"))
        return cls(dmat.read_dmat(stem.with_suffix(".dmat")),
                   np.asarray(meta["energies"], dtype=float))


def fix_column_signs(U, *others):
    """Flip columns so the largest-magnitude entry of each column of ``U`` is
    positive; apply the same flips to the matching columns of ``others``."""
    if U.shape[1] == 0:
        return (U, *others) if others else U
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    out = [U * signs] + [M * signs for M in others]
    return tuple(out) if others else out[0]


# -- collection ------------------------------------------------------------------
def _require_stable(model, what):
    if not model.stable:
        raise UnstableSystem(f"{what} has spectral radius {model.rho:.6g}")


def collect_primal(model: StateSpaceModel, m_c: int, P: int = 1) -> SnapshotMatrix:
    """``X = [B, A^P B, ..., A^{m_c P} B]``, ``m_c + 1`` blocks."""
    _require_stable(model, "model")
    if m_c < 1 or P < 1:
        raise ValueError("need m_c >= 1 and P >= 1")
    return impulse_response_states(model, m_c, P)


def collect_adjoint(model: StateSpaceModel, m_o: int, P: int = 1,
                    projector: OutputProjector | None = None,
                    adjoint: StateSpaceModel | None = None) -> SnapshotMatrix:
    """``Y = [C^T, (A^T)^P C^T, ..., (A^T)^{m_o P} C^T]``.

    With a projector the adjoint runs start from ``C^T theta`` instead, one run
    per retained output mode.  ``adjoint`` substitutes an (inexact) adjoint
    system for the transpose of ``model``; its input matrix is still taken as
    ``C^T`` of ``model``.
    """
    if m_o < 1 or P < 1:
        raise ValueError("need m_o >= 1 and P >= 1")
    adj = adjoint_system(model) if adjoint is None else adjoint
    if adj.n != model.n:
        raise DimensionMismatch("adjoint system has a different state size")
    _require_stable(adj, "adjoint system")
    inputs = np.asarray(model.C.T)
    if projector is not None:
        if projector.q != model.q:
            raise ProjectorDimensionMismatch(
                f"projector acts on {projector.q} outputs, model has {model.q}")
        inputs = inputs @ projector.theta
    blocks = simulate_columns(adj.A, inputs, [j * P for j in range(m_o + 1)])
    return SnapshotMatrix(np.concatenate(list(blocks), axis=1),
                          inputs.shape[1], P, ADJOINT)


def markov_pair_exponents(m_c, m_o, P):
    """Sorted distinct exponents ``{kP, kP+1 : 0 <= k <= m_c + m_o}``."""
    return sorted({e for k in range(m_c + m_o + 1) for e in (k * P, k * P + 1)})


def collect_markov_pairs(model: StateSpaceModel, m_c: int, m_o: int, P: int = 1,
                         projector: OutputProjector | None = None) -> MarkovSequence:
    """Output blocks at exponents ``kP`` and ``kP + 1`` from a single impulse
    run of ``(m_c + m_o) P + 2`` steps.  Exponents shared by two pattern
    positions (``P = 1``) are stored once."""
    _require_stable(model, "model")
    if projector is not None and projector.q != model.q:
        raise ProjectorDimensionMismatch(
            f"projector acts on {projector.q} outputs, model has {model.q}")
    exps = markov_pair_exponents(m_c, m_o, P)
    states = simulate_columns(model.A, model.B, exps)
    C = model.C if projector is None else projector.theta.T @ model.C
    return MarkovSequence(np.einsum("qn,knp->kqp", C, states), np.asarray(exps))


def fit_output_projector(outputs, m_out: int) -> OutputProjector:
    """Leading ``m_out`` POD modes of a set of output snapshots.

    ``outputs`` is a :class:`MarkovSequence` (every column of every block is a
    snapshot) or a ``q x N`` array.
    """
    Yout = outputs.as_columns() if isinstance(outputs, MarkovSequence) \
        else np.atleast_2d(np.asarray(outputs, dtype=float))
    q, N = Yout.shape
    if m_out < 1 or m_out > q or m_out > N:
        raise ProjectorDimensionMismatch(
            f"m_out={m_out} must lie in [1, min(q={q}, snapshots={N})]")
    U, s, _ = np.linalg.svd(Yout, full_matrices=False)
    if s[0] == 0 or s[m_out - 1] <= 1e-12 * s[0]:
        rank = int(np.sum(s > 1e-12 * s[0])) if s[0] > 0 else 0
        raise RankDeficient(f"output snapshots have rank {rank} < m_out={m_out}")
    theta = fix_column_signs(U[:, :m_out])
    return OutputProjector(theta, s)


def default_sampling(model: StateSpaceModel, cap=200, tail=1e-4):
    """Default ``(m_c, m_o, P)``: the sampled horizon ``m P`` reaches the point
    where both the primal and adjoint impulse responses have decayed below
    ``tail`` of their initial size, with at most ``cap`` snapshots."""
    horizon = max(tail_horizon(model, tail),
                  tail_horizon(adjoint_system(model), tail), 1)
    P = max(1, math.ceil(horizon / cap))
    m = max(1, math.ceil(horizon / P))
    return m, m, P
