"""Error norms, impulse traces and frequency-response diagnostics."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as la
from scipy import signal

from .errors import ShapeMismatch, SingularResolvent, TruncationWarning
from .gramians import gramian_diagonals_report
from .lti import StateSpaceModel, make_system, simulate_columns
from .reduction import ReducedModel
from .sampling import OutputProjector

TAIL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ImpulseTrace:
    """Impulse-response blocks ``G(k)``, shape ``(K, q, p)``."""

    outputs: np.ndarray
    dt: float = 1.0

    @property
    def K(self):
        return self.outputs.shape[0]

    @property
    def times(self):
        return self.dt * np.arange(self.K)


@dataclass(frozen=True, eq=False)
class FrequencySweep:
    """Largest singular value of the transfer matrix at each frequency
    (radians per step).  Estimated sweeps also carry the mean coherence."""

    frequencies: np.ndarray
    gains: np.ndarray
    coherence: np.ndarray | None = field(default=None)


def as_system(model, projector: OutputProjector | None = None, lifted=False):
    """StateSpaceModel view of a full or reduced model.

    ``lifted`` maps a reduced model's projected outputs back to the full
    output space; ``projector`` then projects whatever outputs result.
    """
    if isinstance(model, ReducedModel):
        C = model.lifted_output() if lifted else model.C
        A, B = model.A, model.B
    else:
        A, B, C = model.A, model.B, model.C
    if projector is not None:
        if projector.q != C.shape[0]:
            raise ShapeMismatch(
                f"projector acts on {projector.q} outputs, model has {C.shape[0]}")
        C = projector.theta.T @ C
    if isinstance(model, StateSpaceModel) and C is model.C:
        return model
    return make_system(A, B, C, require_stable=False)


def impulse_trace(model, K: int, projector: OutputProjector | None = None,
                  dt=1.0, lifted=False) -> ImpulseTrace:
    """``G(k) = C A^k B`` for ``k = 0..K-1`` (outputs projected by
    ``theta^T`` when a projector is given)."""
    if K < 1:
        raise ValueError("K must be at least 1")
    sys = as_system(model, projector, lifted)
    states = simulate_columns(sys.A, sys.B, range(K))
    return ImpulseTrace(np.einsum("qn,knp->kqp", sys.C, states), dt)


def error_horizon(model, tol=TAIL_TOL, kmax=200_000) -> int:
    """Trace length after which both the state and the output impulse
    responses have fallen below ``tol`` of their peak."""
    sys = as_system(model)
    A = np.ascontiguousarray(sys.A)
    X = np.array(sys.B, dtype=float)
    xmax = ymax = 0.0
    for k in range(kmax):
        xn = np.linalg.norm(X)
        yn = np.linalg.norm(sys.C @ X)
        xmax, ymax = max(xmax, xn), max(ymax, yn)
        if k > 0 and xn <= tol * xmax and yn <= tol * ymax:
            return k + 1
        X = A @ X
    warnings.warn(f"impulse response still above {tol:g} after {kmax} steps",
                  TruncationWarning, stacklevel=2)
    return kmax


def _check_tail(trace: ImpulseTrace, tol=TAIL_TOL):
    norms = np.linalg.norm(trace.outputs, axis=(1, 2))
    peak = norms.max(initial=0.0)
    if peak > 0 and not norms[-1] < tol * peak:
        warnings.warn(
            f"trace of length {trace.K} ends at {norms[-1] / peak:.2e} of its "
            f"peak; the error norm omits a non-negligible tail",
            TruncationWarning, stacklevel=3)


def h2_error(full: ImpulseTrace, reduced: ImpulseTrace) -> float:
    """``sqrt(sum_k ||G(k) - G_r(k)||_F^2)`` over the common horizon."""
    if full.outputs.shape != reduced.outputs.shape:
        raise ShapeMismatch(
            f"trace shapes differ: {full.outputs.shape} vs {reduced.outputs.shape}")
    _check_tail(full)
    diff = full.outputs - reduced.outputs
    return float(np.sqrt(np.sum(diff * diff)))


def lower_bound_error(full_model: StateSpaceModel, projector: OutputProjector,
                      K: int | None = None) -> float:
    """Error of the output-projected system itself:
    ``sqrt(sum_k ||(I - theta theta^T) C A^k B||_F^2)``.  No reduced model of
    the projected system can do better."""
    K = error_horizon(full_model) if K is None else K
    G = impulse_trace(full_model, K).outputs
    theta = projector.theta
    resid = G - np.einsum("qm,mr,krp->kqp", theta, theta.T, G)
    return float(np.sqrt(np.sum(resid * resid)))


def frequency_response(model, frequencies,
                       projector: OutputProjector | None = None,
                       lifted=False) -> FrequencySweep:
    """``sigma_max(C (e^{iw} I - A)^{-1} B)`` by a direct solve per frequency."""
    w = np.asarray(frequencies, dtype=float)
    if w.ndim != 1 or np.any(w <= 0) or np.any(w > np.pi + 1e-12):
        raise ValueError("frequencies must lie in (0, pi]")
    sys = as_system(model, projector, lifted)
    eig = la.eigvals(sys.A) if sys.n else np.zeros(0)
    I = np.eye(sys.n)
    gains = np.empty(w.size)
    for i, wi in enumerate(w):
        z = np.exp(1j * wi)
        if eig.size and np.min(np.abs(eig - z)) < 1e-12:
            raise SingularResolvent(f"e^(i*{wi:g}) is an eigenvalue of A")
        G = sys.C @ la.solve(z * I - sys.A, sys.B) if sys.n else \
            np.zeros((sys.q, sys.p))
        gains[i] = np.linalg.norm(G, 2) if G.size else 0.0
    return FrequencySweep(w, gains)


def simulate(model: StateSpaceModel, u, x0=None, return_state=False):
    """Response ``y[k] = C x[k]``, ``x[k+1] = A x[k] + B u[k]`` from ``x0``
    (zero by default).

    ``u`` has shape ``(K, p)``; returns ``(K, q)``, plus the final state when
    ``return_state`` is set.
    """
    A = np.ascontiguousarray(model.A)
    B = np.ascontiguousarray(model.B)
    C = np.ascontiguousarray(model.C)
    u = np.asarray(u, dtype=float).reshape(len(u), -1)
    K = u.shape[0]
    X = np.empty((K, model.n))
    x = np.zeros(model.n) if x0 is None else np.array(x0, dtype=float)
    Bu = u @ B.T
    for k in range(K):
        X[k] = x
        x = A @ x + Bu[k]
    y = X @ C.T
    return (y, x) if return_state else y


def _welch_spectra(sys, u, nperseg, chunk_segments=32):
    """Welch auto/cross spectra of input ``u`` and the simulated output.

    The output is simulated in chunks so memory stays bounded for long runs
    of many-output models.  Consecutive chunks share ``nperseg // 2`` samples,
    so every segment of the full-record Welch average is used exactly once
    and the weighted mean of the chunk estimates equals the full-record
    estimate.
    """
    hop = nperseg // 2
    kw = dict(fs=2 * np.pi, window="hann", nperseg=nperseg, noverlap=hop,
              detrend=False, axis=0)
    K = u.shape[0]
    step = chunk_segments * hop
    x = np.zeros(sys.n)
    prev_u = prev_y = None
    Suu = Syu = Syy = None
    total = 0
    for start in range(0, K, step):
        uc = u[start:start + step]
        yc, x = simulate(sys, uc, x, return_state=True)
        if prev_u is not None:
            uc_seg = np.concatenate([prev_u, uc])
            yc_seg = np.concatenate([prev_y, yc])
        else:
            uc_seg, yc_seg = uc, yc
        prev_u, prev_y = uc_seg[-hop:], yc_seg[-hop:]
        nseg = (len(uc_seg) - nperseg) // hop + 1 if len(uc_seg) >= nperseg else 0
        if nseg == 0:
            continue
        used = (nseg - 1) * hop + nperseg
        uc_seg, yc_seg = uc_seg[:used], yc_seg[:used]
        puu = np.stack([signal.csd(uc_seg[:, j:j + 1], uc_seg, **kw)[1]
                        for j in range(sys.p)], axis=2)
        f, pyu = None, []
        for j in range(sys.p):
            f, P = signal.csd(uc_seg[:, j:j + 1], yc_seg, **kw)
            pyu.append(P)
        pyu = np.stack(pyu, axis=2)
        pyy = signal.welch(yc_seg, **kw)[1]
        if Suu is None:
            Suu, Syu, Syy = nseg * puu, nseg * pyu, nseg * pyy
        else:
            Suu += nseg * puu
            Syu += nseg * pyu
            Syy += nseg * pyy
        total += nseg
    return f, Suu / total, Syu / total, Syy / total


def spectral_estimate(model, K: int, seed: int = 0,
                      projector: OutputProjector | None = None,
                      nperseg: int = 1024, lifted=False) -> FrequencySweep:
    """Transfer-function gain estimated from a random-input simulation.

    The model is driven for ``K`` steps by i.i.d. uniform(-0.5, 0.5) inputs.
    Welch-averaged cross spectra (Hann window, ``nperseg`` samples, 50 %
    overlap, no detrending) give ``H = S_yu S_uu^{-1}`` per bin; the gain is
    the largest singular value of ``H``.  The zero-frequency bin is dropped.
    """
    if K < 2 ** 14:
        raise ValueError("K must be at least 2**14 samples")
    sys = as_system(model, projector, lifted)
    rng = np.random.default_rng(seed)
    u = rng.uniform(-0.5, 0.5, size=(K, sys.p))
    f, Suu, Syu, Syy = _welch_spectra(sys, u, nperseg)
    keep = f > 0
    # Suu[b, j, k] = csd(u_k, u_j), Syu[b, i, j] = csd(u_j, y_i)
    gains = np.empty(f.size)
    for b in range(f.size):
        Hb = np.linalg.solve(Suu[b].T, Syu[b].T).T
        gains[b] = np.linalg.norm(Hb, 2)
    coh = None
    if sys.p == 1:
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.abs(Syu[:, :, 0]) ** 2 / (Suu[:, :1, 0].real * Syy)
        live = Syy > 0
        coh = np.zeros(f.size)
        rows = live.any(axis=1)
        coh[rows] = np.array([c[b, live[b]].mean() for b in np.flatnonzero(rows)])
        coh = coh[keep]
    return FrequencySweep(f[keep], gains[keep], coh)


# -- model comparison report -----------------------------------------------------------
@dataclass
class ComparisonReport:
    """Tables behind the error, Gramian, transient and sigma comparisons."""

    errors: list = field(default_factory=list)
    gramian_diagonals: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    sigma: list = field(default_factory=list)
    lower_bound: float | None = None
    horizon: int = 0

    HEADERS = {
        "errors": ("method", "order", "h2_error", "lower_bound"),
        "gramian_diagonals": ("method", "order", "i", "hsv", "wc_ii", "wo_ii"),
        "traces": ("method", "order", "k", "a1"),
        "sigma": ("method", "order", "omega", "gain"),
    }

    def error(self, method, order):
        for row in self.errors:
            if row[0] == method and row[1] == order:
                return row[2]
        raise KeyError((method, order))

    def write(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {}
        for name, header in self.HEADERS.items():
            path = d / f"{name}.csv"
            write_csv(path, header, getattr(self, name))
            paths[name] = path
        return paths


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


def compare_models(full_model: StateSpaceModel, reduced: dict,
                   projector: OutputProjector | None = None,
                   horizon: int | None = None, frequencies=None,
                   trace_length: int | None = None) -> ComparisonReport:
    """Evaluate reduced models against the full system.

    ``reduced`` maps ``(method, order)`` to :class:`ReducedModel`.  Errors are
    measured in the full output space (reduced outputs are lifted through the
    projector); traces show the first projected output coordinate ``a1``;
    sigma sweeps compare everything in projected output coordinates.
    """
    for model in reduced.values():
        if projector is not None and model.output_projector is not None \
                and model.output_projector.ident != projector.ident:
            raise ShapeMismatch("reduced models must share the projector")
    K = error_horizon(full_model) if horizon is None else int(horizon)
    w = np.geomspace(1e-3, np.pi, 200) if frequencies is None else frequencies
    report = ComparisonReport(horizon=K)
    full_trace = impulse_trace(full_model, K)
    if projector is not None:
        report.lower_bound = lower_bound_error(full_model, projector, K)
    a1_rows = projector if projector is not None else None
    L = K if trace_length is None else min(K, trace_length)

    def a1(trace):
        G = trace.outputs[:L, :, 0]
        if a1_rows is not None:
            return G @ a1_rows.theta[:, 0]
        return G[:, 0]

    for k, v in enumerate(a1(full_trace)):
        report.traces.append(("full", full_model.n, k, float(v)))
    for wi, g in zip(w, frequency_response(full_model, w, projector).gains):
        report.sigma.append(("full", full_model.n, float(wi), float(g)))

    for (method, order), model in sorted(reduced.items()):
        lifted = model.output_projector is not None
        tr = impulse_trace(model, K, lifted=lifted)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            err = h2_error(full_trace, tr)
        report.errors.append((method, order, err, report.lower_bound))
        for k, v in enumerate(a1(tr)):
            report.traces.append((method, order, k, float(v)))
        gains = frequency_response(model, w, projector, lifted=lifted).gains
        for wi, g in zip(w, gains):
            report.sigma.append((method, order, float(wi), float(g)))
        sys = model.system()
        if sys.stable:
            for i, s, wc, wo in gramian_diagonals_report(model):
                report.gramian_diagonals.append((method, order, i, s, wc, wo))
    return report
