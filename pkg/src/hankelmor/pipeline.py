"""End-to-end reduction runs: collect data once, build every requested
method at every requested order."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .gramians import exact_balanced_truncation, perturb_adjoint
from .hankel import HankelPair, hankel_from_markov, hankel_from_snapshots
from .lti import StateSpaceModel
from .reduction import (BPOD, BT_ORACLE, ERA, METHODS, POD, PSEUDO, HankelSVD,
                        ModeSet, ReducedModel, bpod_modes, bpod_reduce,
                        era_reduce, pod_reduce, primal_modes,
                        pseudo_adjoint_modes, pseudo_reduce, svd_truncate)
from .sampling import (MarkovSequence, OutputProjector, SnapshotMatrix,
                       collect_adjoint, collect_markov_pairs, collect_primal,
                       fit_output_projector)

PSEUDO_MODE_COUNT = 100


@dataclass
class PipelineResult:
    model: StateSpaceModel
    m_c: int
    m_o: int
    P: int
    projector: OutputProjector | None = None
    X: SnapshotMatrix | None = None
    Y: SnapshotMatrix | None = None
    markov: MarkovSequence | None = None
    era_pair: HankelPair | None = None
    bpod_pair: HankelPair | None = None
    era_svd: HankelSVD | None = None
    bpod_svd: HankelSVD | None = None
    pseudo_modes: ModeSet | None = None
    models: dict = field(default_factory=dict)

    @property
    def counters(self):
        out = {}
        if self.bpod_pair is not None:
            out["bpod"] = dict(self.bpod_pair.counters)
        if self.era_pair is not None:
            out["era"] = dict(self.era_pair.counters)
        return out


def fit_projector(model, m_c, m_o, P, m_out):
    """POD output basis of the unprojected Markov data ERA would collect."""
    raw = collect_markov_pairs(model, m_c, m_o, P)
    return fit_output_projector(raw, m_out)


def run_pipelines(model: StateSpaceModel, m_c: int, m_o: int, P: int,
                  orders, methods=(ERA, BPOD), m_out: int | None = None,
                  adjoint_eps: float = 0.0, seed: int = 0,
                  pseudo_count: int = PSEUDO_MODE_COUNT,
                  projector: OutputProjector | None = None) -> PipelineResult:
    """Run every method in ``methods`` at every order in ``orders``.

    The Markov data, state snapshots and adjoint snapshots are each collected
    at most once.  ``adjoint_eps > 0`` feeds balanced POD a perturbed adjoint
    (seeded by ``seed``).
    """
    methods = list(methods)
    if not methods:
        raise ConfigError("at least one method is required")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ConfigError(f"unknown methods: {sorted(unknown)}")
    orders = sorted({int(r) for r in orders})
    if not orders or orders[0] < 1:
        raise ConfigError("orders must be positive integers")

    if projector is None and m_out is not None:
        projector = fit_projector(model, m_c, m_o, P, m_out)
    res = PipelineResult(model, m_c, m_o, P, projector)

    if ERA in methods or PSEUDO in methods:
        res.markov = collect_markov_pairs(model, m_c, m_o, P, projector)
        res.era_pair = hankel_from_markov(res.markov, m_c, m_o, P)
        res.era_svd = svd_truncate(res.era_pair.H)
    if {BPOD, PSEUDO, POD} & set(methods):
        res.X = collect_primal(model, m_c, P)
    if BPOD in methods:
        adj = perturb_adjoint(model, adjoint_eps, seed) if adjoint_eps else None
        res.Y = collect_adjoint(model, m_o, P, projector, adjoint=adj)
        res.bpod_pair = hankel_from_snapshots(res.X, res.Y, model)
        res.bpod_svd = svd_truncate(res.bpod_pair.H)
    if PSEUDO in methods:
        k = min(max(pseudo_count, orders[-1]), res.era_svd.r)
        res.pseudo_modes = pseudo_adjoint_modes(primal_modes(res.X, res.era_svd, k))

    for r in orders:
        if ERA in methods:
            res.models[ERA, r] = era_reduce(res.era_pair, res.era_svd, r,
                                            projector=projector)
        if BPOD in methods:
            modes = bpod_modes(res.X, res.Y, res.bpod_svd, r)
            res.models[BPOD, r] = bpod_reduce(model, modes, projector)
        if PSEUDO in methods:
            pm = res.pseudo_modes.leading(r)
            res.models[PSEUDO, r] = pseudo_reduce(model, pm.phi, pm.psi,
                                                  res.era_svd.s, projector)
        if POD in methods:
            res.models[POD, r] = pod_reduce(res.X, model, r, projector)
        if BT_ORACLE in methods:
            res.models[BT_ORACLE, r] = exact_balanced_truncation(
                model, r, projector=projector)
    return res


def max_entry_difference(a: ReducedModel, b: ReducedModel) -> float:
    """Largest entrywise gap between two reduced triples, relative to the
    largest entry of each matrix in ``a``."""
    gaps = []
    for Ma, Mb in ((a.A, b.A), (a.B, b.B), (a.C, b.C)):
        scale = np.max(np.abs(Ma), initial=0.0)
        gaps.append(np.max(np.abs(Ma - Mb), initial=0.0) / (scale or 1.0))
    return float(max(gaps))
