"""Command-line orchestration: configuration, experiment loops, persistence.

Configs are JSON files whose nested sections mirror the experiment structure
(model / params / bath / prep / engine / analysis / seeds / output); every
value has a default, flags override file values, and a manifest records the
config hash, seeds and output inventory so reruns are bit-reproducible.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .engine import (EvolutionJob, SizeLimitError, combine_curves,
                     constant_global_curve, evolve_correlation,
                     free_fermion_autocorrelation, is_conserved)
from .model import (BathModel, ChainModel, DisorderRealization,
                    HamiltonianParams, build_tunable, bath_statistics,
                    draw_disorder, load_geometry_csv, local_energy_density)
from .mqc import RotationScan, extract_correlation, synthesize_scan
from .operators import OperatorSum, Z as AXIS_Z, collective_spin, spin
from .prep import closed_form_rdq, closed_form_rz, simulate_prep_sequence
from .sequence import (NegativeDelayError, compile_target,
                       compiled_roundtrip_residual, sequence_to_json,
                       simulate_finite_pulses, sixteen_pulse)
from .transport import (CorrelationCurve, FitWindowError, exponent_sweep,
                        fit_exponent, normalize_by_global, sweep_to_csv)


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "model": {"n_sites": 12, "J": 30.4, "coupling_range": 1,
              "boundary": "open", "lattice_constant_angstrom": 3.442},
    "params": {"u": -0.15, "v": 0.3, "h": 0.0},
    "bath": {"mode": "gaussian", "width_krad": 7.0, "fp_coupling_krad": 6.12,
             "component_width_krad": 2.0, "n_columns": 3, "geometry_csv": None},
    "prep": {"kind": "site_z", "n_cycles": 18, "mode": "closed_form"},
    "engine": {"method": "krylov", "n_vectors": 8, "tolerance": 1e-8,
               "t_max_over_J": 30.0, "n_points": 45, "grid": "log"},
    "analysis": {"t_start": 7.7, "t_end": [25.0], "normalize": True,
                 "n_log_bins": None},
    "seeds": {"base_seed": 0, "n_realizations": 1},
    "output": "out",
}

CASE_TEMPLATES = {
    # the three interaction classes studied with this pipeline
    "case1": {"params": {"u": 0.5, "v": 0.0, "h": 0.0}},
    "case2": {"params": {"u": -0.15, "v": 0.3, "h": 0.0}},
    "case3": {"params": {"u": -0.15, "v": 0.3, "h": 0.23}},
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = val
    return out


def load_config(path: str | None, overrides: list[str] | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if "template" in user:
            name = user.pop("template")
            if name not in CASE_TEMPLATES:
                raise ConfigError(f"unknown template {name!r}")
            cfg = _merge(cfg, CASE_TEMPLATES[name])
        cfg = _merge(cfg, user)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set needs key.path=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config section {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = val
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    problems = []
    if cfg["seeds"]["n_realizations"] < 1:
        problems.append("seeds.n_realizations must be >= 1")
    if cfg["engine"]["n_points"] < 2:
        problems.append("engine.n_points must be >= 2")
    if cfg["engine"]["grid"] not in ("linear", "log"):
        problems.append("engine.grid must be linear or log")
    if cfg["prep"]["kind"] not in ("site_z", "bond_energy", "rZ_x", "rZ_y",
                                   "rZ_z", "rDQ_y", "rDQ_z"):
        problems.append(f"unknown prep.kind {cfg['prep']['kind']!r}")
    if cfg["engine"]["method"] not in ("dense", "krylov", "typicality",
                                       "free_fermion"):
        problems.append(f"unknown engine.method {cfg['engine']['method']!r}")
    if problems:
        raise ConfigError("; ".join(problems))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _chain_model(cfg: dict, unit_j: bool = True) -> ChainModel:
    m = cfg["model"]
    rng = m["coupling_range"]
    return ChainModel(n_sites=m["n_sites"], J=1.0 if unit_j else m["J"],
                      coupling_range=None if rng in (None, 0, "full") else int(rng),
                      boundary=m["boundary"],
                      lattice_constant_angstrom=m["lattice_constant_angstrom"])


def _bath_model(cfg: dict) -> BathModel:
    b = cfg["bath"]
    kwargs = dict(mode=b["mode"], width_krad=b["width_krad"],
                  fp_coupling_krad=b["fp_coupling_krad"],
                  component_width_krad=b["component_width_krad"],
                  n_columns=b["n_columns"])
    if b.get("geometry_csv"):
        kwargs["geometry"] = tuple(load_geometry_csv(b["geometry_csv"]))
    return BathModel(**kwargs)


def _time_grid(cfg: dict) -> np.ndarray:
    e = cfg["engine"]
    if e["grid"] == "linear":
        return np.linspace(0.0, e["t_max_over_J"], e["n_points"])
    pts = np.geomspace(e["t_max_over_J"] / e["n_points"] / 4.0,
                       e["t_max_over_J"], e["n_points"] - 1)
    return np.concatenate([[0.0], pts])


def _observable(cfg: dict, model: ChainModel, dis: DisorderRealization | None):
    """(A-operator, channel label, conserved global sum) for the configured probe."""
    kind = cfg["prep"]["kind"]
    params = HamiltonianParams(**cfg["params"])
    L = model.n_sites
    if kind == "site_z":
        return spin(AXIS_Z, L // 2, L), "spin", collective_spin(AXIS_Z, L)
    if kind == "bond_energy":
        op = local_energy_density(model, params, dis, (L - 1) // 2)
        return op, "energy", build_tunable(model, params, dis)
    if dis is None:
        raise ConfigError(f"prep.kind {kind!r} needs a disorder bath")
    n_cycles = cfg["prep"]["n_cycles"]
    tau_ms = n_cycles * 0.06
    if cfg["prep"]["mode"] == "full_sequence":
        sim = simulate_prep_sequence(kind, _chain_model(cfg, unit_j=False), dis,
                                     n_cycles, encode="wahuha",
                                     include_couplings=True)
        obs = sim.observable
    elif kind.startswith("rZ"):
        obs = closed_form_rz(dis, tau_ms, axis=kind.rsplit("_", 1)[1])
    else:
        obs = closed_form_rdq(dis, tau_ms, axis=kind.rsplit("_", 1)[1], model=model)
    channel = "spin" if kind.startswith("rZ") else "energy"
    global_op = (collective_spin(AXIS_Z, L) if channel == "spin"
                 else build_tunable(model, params, dis))
    return obs.operator, channel, global_op


class Manifest:
    def __init__(self, cfg: dict, out_dir: Path):
        self.data = {
            "config": cfg,
            "config_hash": config_hash(cfg),
            "code_version": __version__,
            "realization_seeds": [],
            "files": {},
            "wall_clock_s": None,
            "summary": {},
        }
        self.out_dir = out_dir
        self.t0 = time.time()

    def add_file(self, path: Path) -> None:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.data["files"][path.name] = digest

    def write(self) -> Path:
        self.data["wall_clock_s"] = round(time.time() - self.t0, 3)
        # one digest covering configuration, seeds and code version
        ident = json.dumps([self.data["config_hash"],
                            self.data["realization_seeds"],
                            self.data["code_version"]],
                           separators=(",", ":"))
        self.data["run_fingerprint"] = hashlib.sha256(ident.encode()).hexdigest()
        path = self.out_dir / "manifest.json"
        with open(path, "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def run_transport(cfg: dict) -> Path:
    """Disorder loop x typicality loop x time grid; writes curves and fits."""
    out_dir = Path(cfg["output"])
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(cfg, out_dir)
    model = _chain_model(cfg)
    params = HamiltonianParams(**cfg["params"])
    bath = _bath_model(cfg)
    t_grid = _time_grid(cfg)
    e = cfg["engine"]
    J_phys = cfg["model"]["J"]
    needs_disorder = params.h != 0.0 or cfg["prep"]["kind"].startswith("r")

    locals_, globals_ = [], []
    global_constant = None
    for r in range(cfg["seeds"]["n_realizations"]):
        seed = cfg["seeds"]["base_seed"] + r
        manifest.data["realization_seeds"].append(seed)
        dis = None
        if needs_disorder:
            raw = draw_disorder(bath, _chain_model(cfg, unit_j=False), seed)
            dis = DisorderRealization(w=raw.w / J_phys, seed=seed,
                                      bath_spins=raw.bath_spins)
        H = build_tunable(model, params, dis)
        A, channel, G = _observable(cfg, model, dis)
        if e["method"] == "free_fermion":
            curve = free_fermion_autocorrelation(model, params.u,
                                                 model.n_sites // 2, t_grid)
        else:
            curve = evolve_correlation(EvolutionJob(
                H=H, A=A, B=A, t_grid=t_grid, method=e["method"],
                n_vectors=e["n_vectors"], tolerance=e["tolerance"], seed=seed,
                label=channel))
        locals_.append(curve)
        if is_conserved(H, G):
            global_constant = constant_global_curve(G, t_grid, label=channel + "_global")
            globals_.append(global_constant)
        else:
            globals_.append(evolve_correlation(EvolutionJob(
                H=H, A=G, B=G, t_grid=t_grid, method=e["method"],
                n_vectors=e["n_vectors"], tolerance=e["tolerance"], seed=seed,
                label=channel + "_global")))

    channel = locals_[0].label
    local = combine_curves(locals_, label=channel + "_local")
    glob = combine_curves(globals_, label=channel + "_global")
    files = []
    local.to_csv(out_dir / f"{channel}_local.csv")
    files.append(out_dir / f"{channel}_local.csv")
    glob.to_csv(out_dir / f"{channel}_global.csv")
    files.append(out_dir / f"{channel}_global.csv")
    if cfg["analysis"]["normalize"]:
        normed = normalize_by_global(local, glob)
        normed.to_csv(out_dir / f"{channel}_normalized.csv")
        files.append(out_dir / f"{channel}_normalized.csv")
    # the staggered sum is conserved for the pure double-quantum chain and is
    # worth emitting even though experiments cannot see it
    stag = OperatorSum(model.n_sites, {((j, AXIS_Z),): 0.5 * (-1.0) ** j
                                       for j in range(model.n_sites)})
    H0 = build_tunable(model, params, None) if params.h == 0.0 else None
    if H0 is not None and is_conserved(H0, stag):
        constant_global_curve(stag, t_grid, "staggered_global").to_csv(
            out_dir / "spin_staggered_global.csv")
        files.append(out_dir / "spin_staggered_global.csv")

    fits = {}
    for t_end in cfg["analysis"]["t_end"]:
        try:
            fit = fit_exponent(local, cfg["analysis"]["t_start"], float(t_end),
                               n_log_bins=cfg["analysis"]["n_log_bins"])
            fits[str(t_end)] = fit.to_dict()
        except FitWindowError as exc:
            fits[str(t_end)] = {"error": str(exc)}
    fit_path = out_dir / f"{channel}_fits.json"
    with open(fit_path, "w") as fh:
        json.dump(fits, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files.append(fit_path)

    for path in files:
        manifest.add_file(path)
    manifest.data["summary"]["fits"] = fits
    return manifest.write()


def run_exponent_sweep(cfg: dict, h_list: list[float]) -> Path:
    """z(t_end) per disorder strength h; one curve and one sweep CSV per h."""
    out_dir = Path(cfg["output"])
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(cfg, out_dir)
    summary = {}
    for h in h_list:
        sub = copy.deepcopy(cfg)
        sub["params"]["h"] = float(h)
        sub["output"] = str(out_dir / f"h_{h:g}")
        run_transport(sub)
        channel = "spin" if sub["prep"]["kind"] in ("site_z",) or \
            sub["prep"]["kind"].startswith("rZ") else "energy"
        curve = CorrelationCurve.from_csv(Path(sub["output"]) / f"{channel}_local.csv")
        fits = exponent_sweep(curve, cfg["analysis"]["t_start"],
                              cfg["analysis"]["t_end"],
                              n_log_bins=cfg["analysis"]["n_log_bins"])
        path = out_dir / f"sweep_h_{h:g}.csv"
        sweep_to_csv(fits, path)
        manifest.add_file(path)
        summary[f"h={h:g}"] = [f.to_dict() for f in fits]
    manifest.data["summary"]["sweeps"] = summary
    return manifest.write()


def run_compile(u: float, v: float, h: float, tau0_us: float, out_path: Path,
                n_sites: int = 8, verify_l: int = 6) -> dict:
    """Compile a target Hamiltonian into sequence parameters and verify."""
    model = ChainModel(n_sites=n_sites, J=1.0, coupling_range=None)
    target = HamiltonianParams(u=u, v=v, h=h)
    rng = np.random.default_rng(12)
    dis = DisorderRealization(w=rng.normal(0.0, 0.23, size=n_sites), seed=12)
    from .model import build_dipolar, build_field

    H_native = build_dipolar(model) + build_field(model, dis.w)
    params, residual = compiled_roundtrip_residual(model, target, dis,
                                                   H_native, tau0_us)
    seq = sixteen_pulse(params)
    small = ChainModel(n_sites=verify_l, J=1.0, coupling_range=None)
    H_small = build_dipolar(small) + build_field(
        small, dis.w[:verify_l])
    finite = simulate_finite_pulses(seq, H_small)
    report = {
        "target": {"u": u, "v": v, "h": h},
        "tau0_us": tau0_us,
        "params": {"u": params.u, "v": params.v, "w": params.w,
                   "a": params.a, "b": params.b, "c": params.c},
        "delays_us": params.delays_us(),
        "cycle_time_us": seq.cycle_time_us(),
        "roundtrip_residual": residual,
        "delta_pulse_hamiltonian_residual": finite.hamiltonian_residual,
        "sequence": sequence_to_json(seq),
    }
    with open(out_path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return report


def run_mqc(cfg: dict, scan_csv: str | None, l_max: int, out_path: Path) -> dict:
    """Spectrum of a simulated preparation or an ingested scan CSV."""
    if scan_csv is not None:
        scan = RotationScan.from_csv(scan_csv, n_sites=cfg["model"]["n_sites"])
    else:
        bath = _bath_model(cfg)
        model_phys = _chain_model(cfg, unit_j=False)
        kind = cfg["prep"]["kind"]
        if not kind.startswith("r"):
            raise ConfigError("mqc needs a random prep.kind (rZ_* or rDQ_*)")
        tau_ms = cfg["prep"]["n_cycles"] * 0.06
        acc = None
        n_r = cfg["seeds"]["n_realizations"]
        for r in range(n_r):
            dis = draw_disorder(bath, model_phys, cfg["seeds"]["base_seed"] + r)
            if kind.startswith("rZ"):
                obs = closed_form_rz(dis, tau_ms, axis=kind.rsplit("_", 1)[1])
            else:
                obs = closed_form_rdq(dis, tau_ms, axis=kind.rsplit("_", 1)[1])
            vals = synthesize_scan(obs).values
            acc = vals if acc is None else acc + vals
        scan = RotationScan(values=acc / n_r, n_sites=cfg["model"]["n_sites"])
    spectrum = extract_correlation(scan, l_max=l_max)
    spectrum.to_json(out_path)
    return {"eigenvalues": [float(x) for x in spectrum.eigenvalues[:6]],
            "clipped_weight": spectrum.clipped_weight}


# ---- argument parsing ----

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                   help="override a config value (dotted path, JSON value)")
    p.add_argument("--out", help="output directory (overrides config)")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="spinhydro",
        description="spin-chain transport simulator and analysis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transport", help="run the autocorrelation pipeline")
    _add_common(p)

    p = sub.add_parser("sweep", help="dynamical exponent vs window end, per h")
    _add_common(p)
    p.add_argument("--h-list", default="0,0.1,0.2,0.3",
                   help="comma-separated disorder strengths")

    p = sub.add_parser("compile", help="compile target couplings into a pulse sequence")
    p.add_argument("-u", type=float, required=True)
    p.add_argument("-v", type=float, required=True)
    p.add_argument("--field", type=float, default=0.0, dest="h",
                   help="on-site field weight h")
    p.add_argument("--tau0-us", type=float, default=5.0)
    p.add_argument("--out", default="sequence.json")

    p = sub.add_parser("mqc", help="rotation-scan tomography")
    _add_common(p)
    p.add_argument("--scan-csv", help="ingest an external scan instead of simulating")
    p.add_argument("--l-max", type=int, default=3)

    p = sub.add_parser("disorder-stats", help="bath field statistics")
    _add_common(p)
    p.add_argument("--n-samples", type=int, default=20000)

    p = sub.add_parser("prep-verify", help="closed form vs full-sequence preparation")
    _add_common(p)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, NegativeDelayError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (SizeLimitError, FitWindowError, np.linalg.LinAlgError,
            ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "compile":
        report = run_compile(args.u, args.v, args.h, args.tau0_us,
                             Path(args.out))
        print(json.dumps({"roundtrip_residual": report["roundtrip_residual"],
                          "delays_us": report["delays_us"]}, indent=2))
        return 0

    cfg = load_config(args.config, args.set)
    if getattr(args, "out", None):
        cfg["output"] = args.out

    if args.command == "transport":
        manifest = run_transport(cfg)
        print(f"wrote {manifest}")
        return 0
    if args.command == "sweep":
        h_list = [float(x) for x in args.h_list.split(",") if x.strip()]
        manifest = run_exponent_sweep(cfg, h_list)
        print(f"wrote {manifest}")
        return 0
    if args.command == "mqc":
        out_dir = Path(cfg["output"])
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = run_mqc(cfg, args.scan_csv, args.l_max, out_dir / "spectrum.json")
        print(json.dumps(summary, indent=2))
        return 0
    if args.command == "disorder-stats":
        out_dir = Path(cfg["output"])
        out_dir.mkdir(parents=True, exist_ok=True)
        bath = _bath_model(cfg)
        rep = bath_statistics(bath, _chain_model(cfg, unit_j=False),
                              args.n_samples, seed=cfg["seeds"]["base_seed"])
        payload = {
            "neighbor_correlation": rep.neighbor_correlation,
            "field_std_krad": rep.field_std_krad,
            "histogram": {"edges": rep.histogram_edges.tolist(),
                          "counts": rep.histogram_counts.tolist()},
            "dephasing": {"tau_ms": rep.dephasing_tau_ms.tolist(),
                          "values": rep.dephasing.tolist()},
        }
        with open(out_dir / "disorder_stats.json", "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        print(json.dumps({"neighbor_correlation": rep.neighbor_correlation,
                          "field_std_krad": rep.field_std_krad}, indent=2))
        return 0
    if args.command == "prep-verify":
        model = _chain_model(cfg, unit_j=False)
        bath = _bath_model(cfg)
        dis = draw_disorder(bath, model, cfg["seeds"]["base_seed"])
        kind = cfg["prep"]["kind"] if cfg["prep"]["kind"].startswith("r") else "rZ_z"
        n_cycles = cfg["prep"]["n_cycles"]
        sim = simulate_prep_sequence(kind, model, dis, n_cycles, encode="ideal")
        ctrl = simulate_prep_sequence(kind, model, dis, n_cycles, encode="ideal",
                                      with_pi_control=True)
        if kind.startswith("rZ"):
            ref = closed_form_rz(dis, sim.tau_ms, axis=kind.rsplit("_", 1)[1])
        else:
            ref = closed_form_rdq(dis, sim.tau_ms, axis=kind.rsplit("_", 1)[1])
        report = {
            "kind": kind,
            "coeff_max_dev": float(np.max(np.abs(sim.coeffs - ref.coeffs)))
            if kind.startswith("rZ") else None,
            "overlap_with_closed_form": sim.overlap_with(ref.operator),
            "pi_control_magnitude_ratio": ctrl.magnitude() / sim.magnitude(),
        }
        print(json.dumps(report, indent=2))
        return 0
    raise ConfigError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
