"""Generalized Hankel matrices H and H' by the snapshot and Markov routes.

Both routes record how many q x p block inner products they evaluate, which
is the currency of the cost comparison between balanced POD and ERA.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dmat
from .errors import DimensionMismatch, MissingExponent, PeriodMismatch
from .lti import StateSpaceModel, simulate_columns
from .sampling import ADJOINT, PRIMAL, MarkovSequence, SnapshotMatrix

BPOD = "bpod"
ERA = "era"


@dataclass(frozen=True, eq=False)
class HankelPair:
    H: np.ndarray
    Hprime: np.ndarray
    block_rows: int
    block_cols: int
    block_shape: tuple
    source: str
    counters: dict = field(default_factory=dict)

    @property
    def m_o(self):
        return self.block_rows - 1

    @property
    def m_c(self):
        return self.block_cols - 1

    def block(self, i, j, prime=False):
        q, p = self.block_shape
        M = self.Hprime if prime else self.H
        return M[i * q:(i + 1) * q, j * p:(j + 1) * p]

    def save(self, stem):
        stem = Path(stem)
        dmat.write_dmat(stem.parent / f"{stem.name}_H.dmat", self.H)
        dmat.write_dmat(stem.parent / f"{stem.name}_Hprime.dmat", self.Hprime)
        dmat.write_sidecar(stem.with_suffix(".json"), {
            "source": self.source, "block_rows": self.block_rows,
            "block_cols": self.block_cols,
            "block_shape": list(self.block_shape),
            "counters": dict(self.counters)})

    @classmethod
    def load(cls, stem):
        stem = Path(stem)
        meta = dmat.read_sidecar(stem.with_suffix(".json"))
        return cls(dmat.read_dmat(stem.parent / f"{stem.name}_H.dmat"),
                   dmat.read_dmat(stem.parent / f"{stem.name}_Hprime.dmat"),
                   meta["block_rows"], meta["block_cols"],
                   tuple(meta["block_shape"]), meta["source"], meta["counters"])


def hankel_from_snapshots(X: SnapshotMatrix, Y: SnapshotMatrix,
                          model: StateSpaceModel) -> HankelPair:
    """``H = Y^T X`` and ``H' = Y^T (A X)``.

    ``A X`` is one further time step of every primal snapshot.  Every pairing
    of a primal block with an adjoint block counts as one block inner product,
    for each of ``H`` and ``H'``.
    """
    if X.kind != PRIMAL or Y.kind != ADJOINT:
        raise DimensionMismatch("expected a primal X and an adjoint Y")
    if X.sampling_period != Y.sampling_period:
        raise PeriodMismatch(
            f"sampling periods differ: X has P={X.sampling_period}, "
            f"Y has P={Y.sampling_period}")
    if X.n != Y.n or X.n != model.n:
        raise DimensionMismatch(
            f"state sizes differ: X {X.n}, Y {Y.n}, model {model.n}")
    H = Y.data.T @ X.data
    AX = simulate_columns(model.A, X.data, [1])[0]
    Hprime = Y.data.T @ AX
    nblk = X.nblocks * Y.nblocks
    return HankelPair(H, Hprime, Y.nblocks, X.nblocks,
                      (Y.block_width, X.block_width), BPOD,
                      {"H": nblk, "Hprime": nblk})


def hankel_from_markov(markov: MarkovSequence, m_c: int, m_o: int,
                       P: int = 1) -> HankelPair:
    """Block Hankel matrices from Markov parameters.

    Block ``(i, j)`` of ``H`` is the Markov block at exponent ``(i + j) P`` and
    of ``H'`` the one at ``(i + j) P + 1``.  Only the ``m_c + m_o + 1`` distinct
    blocks of each are fetched; every other position is a copy.
    """
    for k in range(m_c + m_o + 1):
        for e in (k * P, k * P + 1):
            if e not in markov:
                raise MissingExponent(e)
    q, p = markov.block_shape
    H = np.empty((q * (m_o + 1), p * (m_c + 1)))
    Hprime = np.empty_like(H)
    for d in range(m_c + m_o + 1):
        G = markov.block(d * P)
        G1 = markov.block(d * P + 1)
        for i in range(max(0, d - m_c), min(d, m_o) + 1):
            j = d - i
            H[i * q:(i + 1) * q, j * p:(j + 1) * p] = G
            Hprime[i * q:(i + 1) * q, j * p:(j + 1) * p] = G1
    distinct = m_c + m_o + 1
    return HankelPair(H, Hprime, m_o + 1, m_c + 1, (q, p), ERA,
                      {"H": distinct, "Hprime": distinct})
