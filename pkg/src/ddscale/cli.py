"""Command-line front end: ``python -m ddscale <group> <action> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


from . import dataset, doe, geom, scaling, surrogate, vlm

log = logging.getLogger("ddscale")

OUT_ENV = "DDSCALE_OUT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4


class ConfigKeyError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class PipelineConfig:
    names: list = field(default_factory=lambda: list(doe.VARIABLES))
    lower: list = field(default_factory=lambda: list(doe.DesignSpace().lower))
    upper: list = field(default_factory=lambda: list(doe.DesignSpace().upper))
    levels: list = field(default_factory=lambda: [1, 2, 3, 4])
    skip: int = 16
    holdout_count: int = 16
    holdout_seed: int = 1
    aoas: list = field(default_factory=lambda: list(dataset.TRAINING_AOAS))
    mach: float = dataset.MACH
    lattice: dict = field(default_factory=lambda: asdict(vlm.LatticeConfig()))
    hf_source: str = "synthetic"
    models: list = field(default_factory=lambda: [asdict(surrogate.SurrogateConfig())])
    train: dict = field(default_factory=lambda: asdict(surrogate.TrainConfig()))
    region: list = field(default_factory=lambda: [scaling.SMALL_MAX, scaling.POWER_MAX])
    out: str = ""

    def space(self) -> doe.DesignSpace:
        try:
            return doe.DesignSpace(tuple(self.names), tuple(map(float, self.lower)), tuple(map(float, self.upper)))
        except ValueError as exc:
            raise ConfigKeyError("lower/upper", str(exc)) from exc

    def lattice_config(self) -> vlm.LatticeConfig:
        try:
            return vlm.LatticeConfig(**self.lattice)
        except (TypeError, ValueError) as exc:
            raise ConfigKeyError("lattice", str(exc)) from exc

    def model_configs(self) -> list[surrogate.SurrogateConfig]:
        out = []
        for i, m in enumerate(self.models):
            try:
                out.append(surrogate.SurrogateConfig(**m))
            except (TypeError, ValueError) as exc:
                raise ConfigKeyError(f"models[{i}]", str(exc)) from exc
        return out

    def train_config(self) -> surrogate.TrainConfig:
        try:
            return surrogate.TrainConfig(**self.train)
        except (TypeError, ValueError) as exc:
            raise ConfigKeyError("train", str(exc)) from exc

    def validate(self) -> PipelineConfig:
        self.space()
        self.lattice_config()
        self.model_configs()
        self.train_config()
        if not self.levels or any(int(lv) != lv or not 1 <= lv <= 6 for lv in self.levels):
            raise ConfigKeyError("levels", f"must be a non-empty subset of 1..6, got {self.levels}")
        if self.skip < 0:
            raise ConfigKeyError("skip", "must be >= 0")
        if self.holdout_count < 1:
            raise ConfigKeyError("holdout_count", "must be >= 1")
        if not self.aoas:
            raise ConfigKeyError("aoas", "must not be empty")
        try:
            for a in self.aoas:
                vlm.FlowCondition(self.mach, a)
        except ValueError as exc:
            raise ConfigKeyError("mach/aoas", str(exc)) from exc
        if self.hf_source != "synthetic" and not Path(self.hf_source).is_dir():
            raise ConfigKeyError("hf_source", f"'synthetic' or an existing directory, got {self.hf_source!r}")
        if len(self.region) != 2 or not self.region[0] < self.region[1]:
            raise ConfigKeyError("region", "must be [small_max, power_max] with small_max < power_max")
        return self


def load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig().validate()
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigKeyError("config", f"cannot read {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigKeyError("config", "top level must be a JSON object")
    known = {f.name for f in fields(PipelineConfig)}
    for key in raw:
        if key not in known:
            raise ConfigKeyError(key, "unknown configuration key")
    return PipelineConfig(**raw).validate()


def _out_dir(args, cfg: PipelineConfig) -> Path:
    root = args.out or cfg.out or os.environ.get(OUT_ENV) or "ddscale_out"
    return Path(root)


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True, default=float))


def _design_from_args(args) -> geom.DesignVector:
    if args.design:
        values = json.loads(args.design) if args.design.strip().startswith("[") else \
            [float(v) for v in args.design.split(",")]
        if len(values) != 6:
            raise ConfigKeyError("design", f"expected 6 values, got {len(values)}")
        return geom.DesignVector.from_array(values)
    return geom.DesignVector.nominal()


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_doe_sample(args, cfg):
    space = cfg.space()
    out = _out_dir(args, cfg) / "doe"
    if args.holdout:
        seed = cfg.holdout_seed if args.seed is None else args.seed
        samples = doe.lhs_holdout(cfg.holdout_count, space, seed)
        path = doe.write_samples_csv(out / "holdout.csv", samples, space, unit=args.unit)
    else:
        level = args.level or max(cfg.levels)
        samples = doe.saltelli_level(level, space, cfg.skip if args.skip is None else args.skip)
        path = doe.write_samples_csv(out / f"level{level}.csv", samples, space, unit=args.unit)
    _emit({"command": "doe sample", "level": samples.level, "rows": len(samples),
           "unique": int(len(set(samples.call_signs))), "path": str(path)})
    return EXIT_OK


def cmd_geom_check(args, cfg):
    if args.level:
        samples = doe.saltelli_level(args.level, cfg.space(), cfg.skip if args.skip is None else args.skip)
        bad = []
        for cs, row in zip(samples.call_signs, samples.scaled_samples):
            ok, margin = geom.check_feasibility(geom.DesignVector.from_array(row))
            if not ok:
                bad.append({"call_sign": cs, "margin": margin})
        _emit({"command": "geom check", "level": args.level, "rows": len(samples),
               "infeasible_rows": len(bad), "infeasible": sorted({b["call_sign"] for b in bad})})
        return EXIT_OK
    dv = _design_from_args(args)
    ok, margin = geom.check_feasibility(dv)
    p = geom.solve_planform(dv)
    summary = {"command": "geom check", "call_sign": doe.call_sign(dv.as_array()), "feasible": ok,
               "margin": margin, "root_chord": p.root_chord, "break_chord": p.break_chord,
               "tip_chord": p.tip_chord, "area": p.area, "mac": p.mac}
    if ok:
        wing = geom.build_wing(dv)
        path = geom.write_geometry(_out_dir(args, cfg) / "geometry" / f"{summary['call_sign']}.json", wing)
        summary["droop_residual"] = wing.morph.continuity_residual if wing.morph else 0.0
        summary["path"] = str(path)
    _emit(summary)
    if not ok:
        print(f"infeasible design {summary['call_sign']}: tip chord {p.tip_chord:.3f}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_vlm_run(args, cfg):
    dv = _design_from_args(args)
    cs = doe.call_sign(dv.as_array())
    try:
        wing = geom.build_wing(dv)
    except geom.GeometryError as exc:
        print(f"{cs}: {exc}", file=sys.stderr)
        _emit({"command": "vlm run", "call_sign": cs, "error": "infeasible"})
        return EXIT_INFEASIBLE
    lat = vlm.build_lattice(wing, cfg.lattice_config())
    aoas = [args.aoa] if args.aoa is not None else cfg.aoas
    try:
        sols = vlm.run_vlm_sweep(lat, [vlm.FlowCondition(cfg.mach, a) for a in aoas])
    except vlm.SolverError as exc:
        print(f"{cs}: {exc}", file=sys.stderr)
        _emit({"command": "vlm run", "call_sign": cs, "error": "solver"})
        return EXIT_SOLVER
    out = _out_dir(args, cfg) / "vlm"
    out.mkdir(parents=True, exist_ok=True)
    for sol in sols:
        (out / f"{cs}_{sol.flow.aoa_deg:g}.json").write_text(json.dumps(vlm.solution_record(sol, lat, dv)))
    _emit({"command": "vlm run", "call_sign": cs, "aoa": aoas,
           "cl": [s.cl for s in sols], "cdi": [s.cdi for s in sols], "cm": [s.cm for s in sols],
           "path": str(out)})
    return EXIT_OK


def _attach_hf(cfg, snaps):
    if cfg.hf_source == "synthetic":
        dataset.attach_synthetic_hf(snaps)
    else:
        dataset.attach_external_hf(snaps, cfg.hf_source)


def _build_all(args, cfg):
    """Nested training levels plus the holdout, with high-fidelity targets attached."""
    lc = cfg.lattice_config()
    levels = [args.level] if args.level else cfg.levels
    built = dataset.nested_levels(levels, cfg.aoas, cfg.mach, lc, cfg.space(), cfg.skip, args.jobs)
    hm, hs = dataset.build_holdout(cfg.holdout_count, cfg.holdout_seed if args.seed is None else args.seed,
                                   cfg.aoas, cfg.mach, lc, cfg.space(), args.jobs)
    for _, snaps in built.values():
        _attach_hf(cfg, snaps)
    _attach_hf(cfg, hs)
    return built, (hm, hs)


def cmd_dataset_build(args, cfg):
    try:
        built, (hm, hs) = _build_all(args, cfg)
    except RuntimeError as exc:
        print(str(exc), file=sys.stderr)
        _emit({"command": "dataset build", "error": "solver"})
        return EXIT_SOLVER
    root = _out_dir(args, cfg) / "dataset"
    summary = {"command": "dataset build", "levels": {}}
    for level, (m, snaps) in built.items():
        dataset.write_dataset(root / f"level{level}", m, snaps)
        dataset.write_summary_csv(root / f"level{level}_summary.csv", snaps)
        summary["levels"][str(level)] = {"geometries": m.geometry_count, "D": m.snapshot_count,
                                         "tip_clipped": len(m.provenance["tip_clipped"])}
    dataset.write_dataset(root / "holdout", hm, hs)
    dataset.write_summary_csv(root / "holdout_summary.csv", hs)
    summary["holdout"] = {"geometries": hm.geometry_count, "D": hm.snapshot_count}
    summary["path"] = str(root)
    _emit(summary)
    return EXIT_OK


def cmd_surrogate_scale(args, cfg):
    root = _out_dir(args, cfg)
    ds_root = root / "dataset"
    levels = [args.level] if args.level else cfg.levels
    if all((ds_root / f"level{lv}" / "manifest.json").exists() for lv in levels) and \
            (ds_root / "holdout" / "manifest.json").exists():
        train = {lv: dataset.read_dataset(ds_root / f"level{lv}")[1] for lv in levels}
        holdout = dataset.read_dataset(ds_root / "holdout")[1]
    else:
        try:
            built, (_, holdout) = _build_all(args, cfg)
        except RuntimeError as exc:
            print(str(exc), file=sys.stderr)
            _emit({"command": "surrogate scale", "error": "solver"})
            return EXIT_SOLVER
        train = {lv: snaps for lv, (_, snaps) in built.items()}
    tconf = cfg.train_config()
    seeds = list(range(tconf.trials)) if args.seed is None else [args.seed]
    records = surrogate.run_scaling_experiment(train, holdout, cfg.model_configs(), tconf, seeds, args.jobs)
    path = surrogate.write_mse_csv(root / "scaling" / "mse.csv", records)
    stats = scaling.aggregate(records)
    _emit({"command": "surrogate scale", "records": len(records), "path": str(path),
           "mean_mse": {f"{n}:{d}": s.mean for (n, d), s in stats.items()},
           "max_updates": max(h.updates for r in records for h in r.histories)})
    return EXIT_OK


def _records_path(args, cfg) -> Path:
    return Path(args.records) if args.records else _out_dir(args, cfg) / "scaling" / "mse.csv"


def cmd_scaling_fit(args, cfg):
    records = surrogate.read_mse_csv(_records_path(args, cfg))
    stats = scaling.aggregate(records)
    fits = {}
    for n in sorted({k[0] for k in stats}):
        f = scaling.fit_stats(scaling.stats_for_model(stats, n), tuple(cfg.region))
        fits[str(n)] = {"a2": f.a2, "beta": f.beta, "r_squared": f.r_squared}
    _emit({"command": "scaling fit", "region": cfg.region, "fits": fits})
    return EXIT_OK


def cmd_scaling_report(args, cfg):
    records = surrogate.read_mse_csv(_records_path(args, cfg))
    stats = scaling.aggregate(records)
    report = scaling.build_report(stats, region=tuple(cfg.region))
    out = _out_dir(args, cfg) / "scaling"
    csv_path = scaling.write_report_csv(out / "report.csv", report)
    scaling.write_stats_csv(out / "stats.csv", stats)
    plots = scaling.plot_report(out, stats, report)
    _emit({"command": "scaling report", "dstar": {str(k): v for k, v in report.dstar.items()},
           "beta": {str(k): f.beta for k, f in report.fits.items()},
           "path": str(csv_path), "plots": [str(p) for p in plots]})
    return EXIT_OK


def cmd_reproduce_dstar(args, cfg):
    rows = scaling.reproduce_dstar()
    for r in rows:
        print(f"{r['model']:>12s}  a2={r['a2']:.4f}  beta={r['beta']:.4f}  target={r['target_mse']:.2e}"
              f"  D*={r['dstar']}  G*={r['gstar']:.1f}  h*={r['hstar']:.3f}", file=sys.stderr)
    _emit({"command": "reproduce dstar", "dstar": [r["dstar"] for r in rows],
           "gstar": [r["gstar"] for r in rows], "hstar": [round(r["hstar"], 3) for r in rows]})
    return EXIT_OK


COMMANDS = {
    ("doe", "sample"): cmd_doe_sample,
    ("geom", "check"): cmd_geom_check,
    ("vlm", "run"): cmd_vlm_run,
    ("dataset", "build"): cmd_dataset_build,
    ("surrogate", "scale"): cmd_surrogate_scale,
    ("scaling", "fit"): cmd_scaling_fit,
    ("scaling", "report"): cmd_scaling_report,
    ("reproduce", "dstar"): cmd_reproduce_dstar,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline configuration (defaults used when omitted)")
    common.add_argument("--level", type=int, help="dataset level 1..6")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--seed", type=int, help="holdout or training seed override")
    common.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./ddscale_out)")
    common.add_argument("--skip", type=int, help="Sobol rows discarded before sampling (default 16)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ddscale", description=__doc__)
    groups = parser.add_subparsers(dest="group", required=True)
    actions = {}
    for group, action in COMMANDS:
        if group not in actions:
            actions[group] = groups.add_parser(group).add_subparsers(dest="action", required=True)
        sub = actions[group].add_parser(action, parents=[common])
        if group == "doe":
            sub.add_argument("--holdout", action="store_true", help="LHS holdout instead of a Saltelli level")
            sub.add_argument("--unit", action="store_true", help="also write unit-cube samples")
        if group in ("geom", "vlm"):
            sub.add_argument("--design", help="six comma-separated values or a JSON list")
        if group == "vlm":
            sub.add_argument("--aoa", type=float, help="single angle of attack in degrees")
        if group == "scaling":
            sub.add_argument("--records", help="MSE record CSV (N, D, seed, mse)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.level is not None and not 1 <= args.level <= 6:
            raise ConfigKeyError("level", f"must be in 1..6, got {args.level}")
        if args.jobs < 1:
            raise ConfigKeyError("jobs", "must be >= 1")
        return COMMANDS[(args.group, args.action)](args, cfg)
    except ConfigKeyError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        _emit({"command": f"{args.group} {args.action}", "error": "config", "key": exc.key})
        return EXIT_CONFIG
    except geom.GeometryError as exc:
        print(f"infeasible design: {exc}", file=sys.stderr)
        _emit({"command": f"{args.group} {args.action}", "error": "infeasible"})
        return EXIT_INFEASIBLE
    except dataset.DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        _emit({"command": f"{args.group} {args.action}", "error": "dataset"})
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
