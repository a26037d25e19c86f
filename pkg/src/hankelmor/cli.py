"""Command-line front end.

    hankelmor reduce   --plant plant16 --method era,bpod --order 4,8 --out run/
    hankelmor compare  --plant plant16 --method era,bpod,pseudo,pod --out cmp/
    hankelmor counters --mc 200 --mo 200

Flags override built-in defaults and a ``--config`` JSON file overrides
flags.  Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, dmat
from .errors import (ArtifactIOError, ConfigError, MissingArtifact,
                     NumericalError, ReductionError)
from .evaluation import compare_models, write_csv
from .gramians import (build_full_transformation, empirical_gramians,
                       transformed_gramians)
from .hankel import hankel_from_markov, hankel_from_snapshots
from .lti import (PlantConfig, build_plant, make_system, random_stable_system,
                  s2_system, scalar_system)
from .pipeline import PipelineResult, max_entry_difference, run_pipelines
from .reduction import (BPOD, ERA, METHODS, PSEUDO, ReducedModel, choose_order,
                        svd_truncate)
from .sampling import (OutputProjector, collect_adjoint, collect_markov_pairs,
                       collect_primal, default_sampling)

log = logging.getLogger("hankelmor")

BUILTIN_PLANTS = ("scalar", "s2", "plant16", "random")


@dataclass
class ExperimentConfig:
    plant: str = "plant16"
    plant_config: dict = field(default_factory=dict)
    random: dict = field(default_factory=lambda: {"n": 20, "p": 1, "q": 1, "rho": 0.9})
    dmat: list | None = None
    m_c: int | None = None
    m_o: int | None = None
    P: int | None = None
    m_out: int | None = None
    methods: list = field(default_factory=lambda: [ERA, BPOD])
    orders: list = field(default_factory=list)
    adjoint_eps: float = 0.0
    seed: int = 0
    out: str = "hankelmor-out"

    def validate(self):
        if not self.methods:
            raise ConfigError("methods must be a non-empty subset of "
                              f"{list(METHODS)}")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ConfigError(f"unknown methods {sorted(bad)}")
        if self.dmat is None and self.plant not in BUILTIN_PLANTS:
            raise ConfigError(f"unknown plant {self.plant!r}; choose from "
                              f"{BUILTIN_PLANTS} or give DMAT files")
        if self.dmat is not None and len(self.dmat) != 3:
            raise ConfigError("dmat needs exactly three paths: A B C")
        for name in ("m_c", "m_o", "P", "m_out"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or v < (1 if name == "P" else 0)):
                raise ConfigError(f"{name} must be a nonnegative integer"
                                  if name != "P" else "P must be a positive integer")
        if any((not isinstance(r, int)) or r < 1 for r in self.orders):
            raise ConfigError("orders must be positive integers")
        if self.adjoint_eps < 0:
            raise ConfigError("adjoint_eps must be nonnegative")
        if self.m_out == 0:
            self.m_out = None
        return self

    def canonical(self):
        d = asdict(self)
        d.pop("out")
        return d

    def digest(self):
        return sha256_json(self.canonical())


def sha256_json(obj):
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_model(cfg: ExperimentConfig):
    if cfg.dmat is not None:
        A, B, C = (dmat.read_dmat(p) for p in cfg.dmat)
        return make_system(A, B, C, require_stable=True)
    if cfg.plant == "scalar":
        return scalar_system()
    if cfg.plant == "s2":
        return s2_system()
    if cfg.plant == "random":
        r = cfg.random
        return random_stable_system(int(r["n"]), int(r["p"]), int(r["q"]),
                                    float(r.get("rho", 0.9)), cfg.seed)
    try:
        return build_plant(PlantConfig(**cfg.plant_config))
    except TypeError as exc:
        raise ConfigError(f"bad plant configuration: {exc}") from exc


def resolve_sampling(cfg, model):
    m_c, m_o, P = default_sampling(model)
    pick = lambda given, default: default if given is None else given
    return pick(cfg.m_c, m_c), pick(cfg.m_o, m_o), pick(cfg.P, P)


def run_experiment(cfg: ExperimentConfig, model=None) -> PipelineResult:
    model = load_model(cfg) if model is None else model
    m_c, m_o, P = resolve_sampling(cfg, model)
    if cfg.m_out is not None and cfg.m_out > model.q:
        raise ConfigError(f"m_out={cfg.m_out} exceeds the output count {model.q}")
    orders = list(cfg.orders)
    projector = None
    if not orders:
        from .pipeline import fit_projector
        from .sampling import collect_markov_pairs
        if cfg.m_out is not None:
            projector = fit_projector(model, m_c, m_o, P, cfg.m_out)
        mk = collect_markov_pairs(model, m_c, m_o, P, projector)
        orders = [choose_order(svd_truncate(hankel_from_markov(mk, m_c, m_o, P).H).s)]
        log.info("order chosen from Hankel singular values: %d", orders[0])
    return run_pipelines(model, m_c, m_o, P, orders, cfg.methods,
                         m_out=cfg.m_out, adjoint_eps=cfg.adjoint_eps,
                         seed=cfg.seed, projector=projector)


# -- commands ----------------------------------------------------------------------------
def cmd_reduce(cfg: ExperimentConfig, result: PipelineResult | None = None):
    out = Path(cfg.out)
    result = run_experiment(cfg) if result is None else result
    artifacts = []
    for (method, r), model in sorted(result.models.items()):
        d = out / "models" / f"{method}_r{r}"
        model.save(d)
        artifacts += [d / "A.dmat", d / "B.dmat", d / "C.dmat", d / "model.json"]
    hsv_rows = []
    for method, svd in ((ERA, result.era_svd), (BPOD, result.bpod_svd)):
        if svd is not None:
            hsv_rows += [(method, i + 1, float(s)) for i, s in enumerate(svd.s)]
    write_csv(out / "hsv.csv", ("method", "i", "sigma"), hsv_rows)
    artifacts.append(out / "hsv.csv")
    counters = counters_report(result.m_c, result.m_o, result.counters)
    dmat.write_sidecar(out / "counters.json", counters)
    artifacts.append(out / "counters.json")
    if result.projector is not None:
        result.projector.save(out / "projector")
        artifacts += [out / "projector.dmat", out / "projector.json"]
    manifest = {
        "version": __version__,
        "config": cfg.canonical(),
        "config_hash": cfg.digest(),
        "sampling": {"m_c": result.m_c, "m_o": result.m_o, "P": result.P},
        "models": [{"method": m, "order": r, "path": f"models/{m}_r{r}"}
                   for (m, r) in sorted(result.models)],
        "artifacts": {str(p.relative_to(out)): sha256_file(p) for p in artifacts},
    }
    manifest["manifest_hash"] = sha256_json(manifest)
    dmat.write_sidecar(out / "manifest.json", manifest)
    return manifest


def load_reduced(directory):
    """Reduced models and projector written by ``reduce``."""
    d = Path(directory)
    manifest = dmat.read_sidecar(d / "manifest.json")
    projector = None
    if (d / "projector.json").exists():
        projector = OutputProjector.load(d / "projector")
    models = {}
    for entry in manifest["models"]:
        models[entry["method"], int(entry["order"])] = ReducedModel.load(
            d / entry["path"], projector)
    return manifest, models, projector


def _transformed_reports(result: PipelineResult, out: Path):
    """Transformed empirical Gramians for true and pseudo adjoint modes."""
    notes = {}
    if result.X is None:
        return notes
    if result.Y is None:
        Y = collect_adjoint(result.model, result.m_o, result.P, result.projector)
    else:
        Y = result.Y
    pair = hankel_from_snapshots(result.X, Y, result.model)
    svd = svd_truncate(pair.H)
    root = np.sqrt(svd.s)
    phi1 = (result.X.data @ svd.V) / root
    psi1 = (Y.data @ svd.U) / root
    grams = empirical_gramians(result.X, Y)
    if phi1.shape[1] >= result.model.n:
        notes["skipped"] = "snapshot rank equals the state dimension"
        return notes
    from .reduction import pseudo_adjoint_modes
    for label, psi in (("true", psi1), ("pseudo", None)):
        try:
            if psi is None:
                psi = pseudo_adjoint_modes(phi1).psi
            trans = build_full_transformation(phi1, psi)
            diag = transformed_gramians(trans, grams, svd.s, psi1)
            diag.save(out / "transformed", prefix=label)
            notes[label] = diag.metrics()
        except NumericalError as exc:
            notes[label] = {"error": str(exc)}
    return notes


def cmd_compare(cfg: ExperimentConfig, source=None):
    out = Path(cfg.out)
    model = load_model(cfg)
    if source is not None:
        manifest, models, projector = load_reduced(source)
        result = None
    else:
        result = run_experiment(cfg, model)
        cmd_reduce(cfg, result)
        models, projector = result.models, result.projector
    report = compare_models(model, models, projector)
    paths = report.write(out)
    rows = []
    orders = sorted({r for (_, r) in models})
    for r in orders:
        if (ERA, r) in models and (BPOD, r) in models:
            diff = max_entry_difference(models[ERA, r], models[BPOD, r])
            rows.append((r, diff, report.error(ERA, r), report.error(BPOD, r),
                         report.error(BPOD, r) - report.error(ERA, r)))
    write_csv(out / "equivalence.csv",
              ("order", "max_entry_diff_era_bpod", "h2_era", "h2_bpod",
               "deviation"), rows)
    summary = {"horizon": report.horizon, "lower_bound": report.lower_bound,
               "adjoint_eps": cfg.adjoint_eps,
               "max_entry_diff_era_bpod": max((r[1] for r in rows), default=None)}
    if result is not None:
        summary["transformed_gramians"] = _transformed_reports(result, out)
    dmat.write_sidecar(out / "compare.json", summary)
    return summary


def counters_report(m_c, m_o, measured=None):
    bpod = (m_c + 1) * (m_o + 1)
    era = m_c + m_o + 1
    ratio = Fraction(bpod, era)
    rep = {"m_c": m_c, "m_o": m_o, "bpod_H_blocks": bpod, "era_H_blocks": era,
           "ratio": f"{ratio.numerator}/{ratio.denominator}",
           "ratio_float": float(ratio)}
    if measured:
        rep["measured"] = measured
    return rep


def cmd_counters(cfg: ExperimentConfig):
    model = load_model(cfg)
    m_c, m_o, P = resolve_sampling(cfg, model)
    X = collect_primal(model, max(m_c, 1), P)
    Y = collect_adjoint(model, max(m_o, 1), P)
    if m_c == 0 or m_o == 0:
        # collectors need one step; trim to the requested block count
        from .sampling import SnapshotMatrix
        X = SnapshotMatrix(X.data[:, :X.block_width * (m_c + 1)], X.block_width, P)
        Y = SnapshotMatrix(Y.data[:, :Y.block_width * (m_o + 1)], Y.block_width,
                           P, Y.kind)
    bp = hankel_from_snapshots(X, Y, model)
    er = hankel_from_markov(collect_markov_pairs(model, m_c, m_o, P), m_c, m_o, P)
    measured = {"bpod": bp.counters, "era": er.counters}
    rep = counters_report(m_c, m_o, measured)
    measured_ratio = Fraction(bp.counters["H"], er.counters["H"])
    rep["measured_ratio"] = f"{measured_ratio.numerator}/{measured_ratio.denominator}"
    rep["hankel_route_gap"] = float(np.linalg.norm(bp.H - er.H))
    return rep


# -- argument handling ----------------------------------------------------------------------
def _csv_list(text, cast=str):
    return [cast(t) for t in text.split(",") if t.strip()] if text else []


def build_parser():
    ap = argparse.ArgumentParser(prog="hankelmor", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("reduce", "compare", "counters"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file; its keys override flags")
        p.add_argument("--plant", choices=BUILTIN_PLANTS)
        p.add_argument("--plant-config", help="JSON file with PlantConfig fields")
        p.add_argument("--dmat", nargs=3, metavar=("A", "B", "C"))
        p.add_argument("--method", help="comma list of " + ",".join(METHODS))
        p.add_argument("--order", help="comma list of reduced orders")
        p.add_argument("--mc", type=int)
        p.add_argument("--mo", type=int)
        p.add_argument("--period", type=int)
        p.add_argument("--output-proj", type=int, help="output POD modes (0: none)")
        p.add_argument("--adjoint-eps", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        if name == "compare":
            p.add_argument("--from", dest="source",
                           help="reuse models written by a previous reduce")
    return ap


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.command == "counters":
        cfg.plant = "scalar"
    flag_map = {"plant": args.plant, "dmat": args.dmat, "m_c": args.mc,
                "m_o": args.mo, "P": args.period, "m_out": args.output_proj,
                "adjoint_eps": args.adjoint_eps, "seed": args.seed, "out": args.out}
    for k, v in flag_map.items():
        if v is not None:
            setattr(cfg, k, v)
    if args.method is not None:
        cfg.methods = _csv_list(args.method)
    if args.order is not None:
        try:
            cfg.orders = _csv_list(args.order, int)
        except ValueError as exc:
            raise ConfigError(f"bad --order: {exc}") from exc
    if args.plant_config:
        cfg.plant_config = _read_json(args.plant_config)
        if args.plant is None:
            cfg.plant = "plant16"
    if args.config:
        raw = _read_json(args.config)
        names = {f.name for f in fields(ExperimentConfig)}
        unknown = set(raw) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for k, v in raw.items():
            setattr(cfg, k, v)
    return cfg.validate()


def _read_json(path):
    p = Path(path)
    if not p.exists():
        raise MissingArtifact(f"no such file: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p} is not valid JSON: {exc}") from exc


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "reduce":
            result = cmd_reduce(cfg)
        elif args.command == "compare":
            result = cmd_compare(cfg, getattr(args, "source", None))
        else:
            result = cmd_counters(cfg)
            if args.out:
                dmat.write_sidecar(Path(cfg.out) / "counters.json", result)
        json.dump(result if args.command != "reduce" else
                  {"manifest_hash": result["manifest_hash"], "out": cfg.out},
                  sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
        return 0
    except ReductionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ArtifactIOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
