"""Command-line front end: JSON experiment configs in, hashed JSON/CSV reports out.

    chaoskit --config exp.json --out results/ [--threads 4] [--seed 7]

Exit codes: 0 success, 1 usage or config error, 2 runtime failure,
3 an audit found a violated bound.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .audits import DEFAULT_NS, operator_audit, partition_audit
from .chaos import ChaosReport, FreqProbe, chaos_norms, estimate_correlations, fit_scaling
from .clt import CltReport, TestFunction, clt_cell, variance_limit
from .fourier import (KernelSpec, SpectralField, cosine_density, kuramoto_kernel,
                      uniform_density, zero_kernel)
from .meanfield import PdeRunConfig, dump_trajectory, solve_b, solve_rho
from .particles import SimConfig, dump_snapshot, run

COMMANDS = ("simulate", "chaos", "mv-solve", "clt", "partition-audit", "operator-audit")

TOP_KEYS = {"command", "seed", "sim", "pde", "probe", "N_list", "phi", "max_order",
            "m_max", "N_values", "trials", "threads", "block_size"}
SIM_KEYS = {"N", "d", "sigma", "dt", "t_end", "obs_times", "replicas", "drift_mode",
            "kernel", "rho0"}
PDE_KEYS = {"sigma", "dt", "t_end", "cutoff", "obs_times", "b_form", "kernel", "rho0"}
PROBE_KEYS = {"m", "cutoff", "include_zero_planes", "jackknife_groups"}
NEEDS = {"simulate": {"sim"}, "chaos": {"sim"}, "mv-solve": {"pde"}, "clt": {"sim"},
         "partition-audit": set(), "operator-audit": set()}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# presets ---------------------------------------------------------------------

def _kernel(spec, where: str, errors: list[str]):
    if not isinstance(spec, dict):
        errors.append(f"{where}.kernel must be an object")
        return None
    try:
        if "preset" in spec:
            extra = set(spec) - {"preset", "coupling", "d"}
            if extra:
                errors.append(f"{where}.kernel: unknown keys {sorted(extra)}")
                return None
            if spec["preset"] == "kuramoto":
                return kuramoto_kernel(float(spec.get("coupling", 1.0)))
            if spec["preset"] == "zero":
                return zero_kernel(int(spec.get("d", 1)))
            errors.append(f"{where}.kernel: unknown preset {spec['preset']!r}")
            return None
        return KernelSpec.from_dict(spec)
    except (ValueError, TypeError, KeyError) as exc:
        errors.append(f"{where}.kernel: {exc}")
        return None


def _density(spec, where: str, errors: list[str]):
    if not isinstance(spec, dict):
        errors.append(f"{where}.rho0 must be an object")
        return None
    try:
        if "preset" in spec:
            extra = set(spec) - {"preset", "amplitude", "freq", "d"}
            if extra:
                errors.append(f"{where}.rho0: unknown keys {sorted(extra)}")
                return None
            d = int(spec.get("d", 1))
            if spec["preset"] == "uniform":
                return uniform_density(d)
            if spec["preset"] == "cosine":
                return cosine_density(float(spec.get("amplitude", 0.5)), int(spec.get("freq", 1)), d)
            errors.append(f"{where}.rho0: unknown preset {spec['preset']!r}")
            return None
        return SpectralField.from_dict(spec)
    except (ValueError, TypeError, KeyError) as exc:
        errors.append(f"{where}.rho0: {exc}")
        return None


def _phi(spec, errors: list[str]):
    if spec is None:
        return TestFunction.cosine()
    try:
        if "preset" in spec:
            extra = set(spec) - {"preset", "freq", "order"}
            if extra:
                errors.append(f"phi: unknown keys {sorted(extra)}")
                return None
            if spec["preset"] == "cosine":
                return TestFunction.cosine(int(spec.get("freq", 1)))
            if spec["preset"] == "fejer":
                return TestFunction.fejer(int(spec.get("order", 8)))
            errors.append(f"phi: unknown preset {spec['preset']!r}")
            return None
        return TestFunction(SpectralField.from_dict(spec))
    except (ValueError, TypeError, KeyError) as exc:
        errors.append(f"phi: {exc}")
        return None


# config -----------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    command: str
    raw: dict
    seed: int = 0
    sim: SimConfig | None = None
    pde: PdeRunConfig | None = None
    phi: TestFunction | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def _strict(section: dict, allowed: set, where: str, errors: list[str]) -> None:
    for key in sorted(set(section) - allowed):
        errors.append(f"unknown key {key!r} in {where}")


def _section(raw: dict, allowed: set, required: tuple, where: str, errors: list[str]):
    """Strict keys plus required keys; missing entries get placeholders so that
    the remaining invariants are still checked and reported together."""
    _strict(raw, allowed, where, errors)
    for k in required:
        if k not in raw:
            errors.append(f"{where}.{k} is required")
    kernel = _kernel(raw["kernel"], where, errors) if "kernel" in raw else None
    rho0 = _density(raw["rho0"], where, errors) if "rho0" in raw else None
    d = kernel.dim if kernel is not None else int(raw.get("d", 1))
    return (kernel if kernel is not None else zero_kernel(d),
            rho0 if rho0 is not None else uniform_density(d))


def _num(raw: dict, key: str, cast, default, where: str, errors: list[str]):
    if key not in raw:
        return default
    try:
        return cast(raw[key])
    except (TypeError, ValueError):
        errors.append(f"{where}.{key} has an invalid value {raw[key]!r}")
        return default


def _times(raw: dict, t_end: float, where: str, errors: list[str]) -> tuple:
    try:
        return tuple(float(t) for t in raw.get("obs_times", [t_end]))
    except (TypeError, ValueError):
        errors.append(f"{where}.obs_times must be a list of numbers")
        return (t_end,)


def _sim(raw: dict, seed: int, errors: list[str]) -> SimConfig:
    kernel, rho0 = _section(raw, SIM_KEYS, ("N", "sigma", "dt", "t_end", "kernel", "rho0"),
                            "sim", errors)
    t_end = _num(raw, "t_end", float, 0.0, "sim", errors)
    cfg = SimConfig(N=_num(raw, "N", int, 2, "sim", errors),
                    sigma=_num(raw, "sigma", float, 0.0, "sim", errors),
                    dt=_num(raw, "dt", float, 1.0, "sim", errors), t_end=t_end,
                    kernel=kernel, rho0=rho0, obs_times=_times(raw, t_end, "sim", errors),
                    replicas=_num(raw, "replicas", int, 1, "sim", errors), seed=seed,
                    d=_num(raw, "d", int, kernel.dim, "sim", errors),
                    drift_mode=raw.get("drift_mode", "spectral"))
    errors.extend(f"sim: {e}" for e in cfg.violations())
    return cfg


def _pde(raw: dict, errors: list[str]) -> PdeRunConfig:
    kernel, rho0 = _section(raw, PDE_KEYS, ("sigma", "dt", "t_end", "cutoff", "kernel", "rho0"),
                            "pde", errors)
    t_end = _num(raw, "t_end", float, 0.0, "pde", errors)
    cfg = PdeRunConfig(sigma=_num(raw, "sigma", float, 0.0, "pde", errors),
                       dt=_num(raw, "dt", float, 1.0, "pde", errors), t_end=t_end,
                       cutoff=_num(raw, "cutoff", int, max(kernel.max_mode, rho0.cutoff),
                                   "pde", errors),
                       kernel=kernel, rho0=rho0, obs_times=_times(raw, t_end, "pde", errors),
                       b_form=raw.get("b_form", "hierarchy"))
    errors.extend(f"pde: {e}" for e in cfg.violations())
    return cfg


def parse_config(source) -> ExperimentConfig:
    """Parse a JSON config (path, text or dict); raises ConfigError listing every problem."""
    if isinstance(source, dict):
        raw = source
    else:
        text = str(source)
        path = Path(text) if len(text) < 4096 and not text.lstrip().startswith("{") else None
        if path is not None:
            try:
                text = path.read_text()
            except OSError as exc:
                raise ConfigError([f"cannot read config: {exc}"]) from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    errors: list[str] = []
    _strict(raw, TOP_KEYS, "config", errors)
    command = raw.get("command")
    if command not in COMMANDS:
        errors.append(f"unknown command {command!r}; expected one of {list(COMMANDS)}")
        raise ConfigError(errors)
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        errors.append("seed must be an integer in [0, 2^64)")
        seed = 0
    for section in sorted(NEEDS[command]):
        if section not in raw:
            errors.append(f"command {command!r} needs a {section!r} section")
    sim = _sim(raw["sim"], seed, errors) if isinstance(raw.get("sim"), dict) else None
    pde = _pde(raw["pde"], errors) if isinstance(raw.get("pde"), dict) else None
    phi = _phi(raw.get("phi"), errors) if command == "clt" else None
    if "probe" in raw:
        if isinstance(raw["probe"], dict):
            _strict(raw["probe"], PROBE_KEYS, "probe", errors)
            ms = raw["probe"].get("m", [2])
            if any(not isinstance(m, int) or not 1 <= m <= 3 for m in ms):
                errors.append("probe.m entries must be integers in 1..3")
        else:
            errors.append("probe must be an object")
    for key in ("N_list", "N_values"):
        if key in raw and (not isinstance(raw[key], list)
                           or any(not isinstance(n, int) or n < 2 for n in raw[key])):
            errors.append(f"{key} must be a list of integers >= 2")
    if command == "clt" and "pde" in raw and pde is not None and sim is not None:
        if set(pde.obs_times) != set(sim.obs_times):
            errors.append("clt: pde.obs_times must equal sim.obs_times for the variance limit")
    if errors:
        raise ConfigError(errors)
    extras = {k: raw[k] for k in ("probe", "N_list", "max_order", "m_max", "N_values",
                                  "trials", "threads", "block_size") if k in raw}
    return ExperimentConfig(command, raw, seed, sim, pde, phi, extras)


# execution ---------------------------------------------------------------------

@dataclass
class ExperimentReport:
    config: ExperimentConfig
    payload: dict
    tables: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    audit_passed: bool = True

    def payload_hash(self) -> str:
        blob = json.dumps(self.payload, sort_keys=True, default=str)
        blob += "".join(self.tables[k] for k in sorted(self.tables))
        return hashlib.sha256(blob.encode()).hexdigest()

    def summary(self) -> dict:
        return {"config_hash": self.config.hash, "config": self.config.raw,
                "tool": "chaoskit", "version": __version__, "command": self.config.command,
                "wall_clock_s": self.wall_clock, "payload_hash": self.payload_hash(),
                "audit_passed": self.audit_passed, "payload": self.payload}


def _rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    keys = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _n_list(cfg: ExperimentConfig) -> list[int]:
    return list(cfg.extras.get("N_list", [cfg.sim.N]))


def _simulate(cfg: ExperimentConfig, threads: int):
    from dataclasses import replace

    block = int(cfg.extras.get("block_size", 1000))
    for N in _n_list(cfg):
        yield N, run(replace(cfg.sim, N=N), block_size=block, threads=threads)


def _run_simulate(cfg, threads):
    payload, artifacts = {"snapshots": []}, {}
    for N, snaps in _simulate(cfg, threads):
        for t, ens in snaps:
            digest = hashlib.sha256(np.ascontiguousarray(ens.positions).tobytes()).hexdigest()
            payload["snapshots"].append({"N": N, "t": t, "shape": list(ens.positions.shape),
                                         "sha256": digest})
            artifacts[f"snapshot.N{N}.t{t:g}"] = (ens, cfg.sim)
    return payload, {}, artifacts


def _run_chaos(cfg, threads):
    probe_cfg = cfg.extras.get("probe", {})
    ms = probe_cfg.get("m", [2])
    cutoff = int(probe_cfg.get("cutoff", 1))
    zero = bool(probe_cfg.get("include_zero_planes", False))
    groups = probe_cfg.get("jackknife_groups")
    d = cfg.sim.d
    report = ChaosReport()
    for N, snaps in _simulate(cfg, threads):
        for t, ens in snaps:
            for m in ms:
                probe = FreqProbe.box(m, d, cutoff, include_zero_planes=zero or m == 1)
                entry = estimate_correlations(ens.positions, m, probe, t, groups)
                entry.N = N
                report.entries.append(entry)
    Ns = _n_list(cfg)
    if len(Ns) >= 3:
        for m in ms:
            for t in sorted({e.t for e in report.entries}):
                cell = sorted((e for e in report.entries if e.m == m and e.t == t), key=lambda e: e.N)
                stats = [chaos_norms(e) for e in cell]
                report.fits[f"m{m}_t{t:g}"] = fit_scaling([e.N for e in cell],
                                                          [s["linf"] for s in stats],
                                                          [s["linf_se"] for s in stats])
    return report.summary(), {"chaos": report.to_csv()}, {}


def _run_mv(cfg, threads):
    pde = cfg.pde
    traj = solve_rho(pde, full=True)
    keep = set(pde.obs_steps())
    rho_obs = [traj[n] for n in sorted(keep)]
    b_obs = solve_b(traj, pde)
    payload = {"rho": [{"t": t, "l2": float(np.linalg.norm(r.coeffs)),
                        "mode1": [r.coefficient((1,) + (0,) * (r.dim - 1)).real,
                                  r.coefficient((1,) + (0,) * (r.dim - 1)).imag]}
                       for t, r in rho_obs],
               "b": [{"t": t, "linf": float(np.abs(b.coeffs).max()),
                      "l2": float(np.linalg.norm(b.coeffs))} for t, b in b_obs]}
    return payload, {}, {"rho": rho_obs, "b": b_obs}


def _run_clt(cfg, threads):
    phi = cfg.phi
    max_order = int(cfg.extras.get("max_order", 4))
    limits = {}
    if cfg.pde is not None:
        traj = solve_rho(cfg.pde, full=True)
        for (t, b) in solve_b(traj, cfg.pde):
            rho = traj[int(round(t / cfg.pde.dt))][1]
            limits[round(t, 12)] = variance_limit(phi, rho, b)
    report = CltReport()
    for N, snaps in _simulate(cfg, threads):
        for t, ens in snaps:
            report.cells.append(clt_cell(ens.positions, phi, t, max_order,
                                         limits.get(round(t, 12))))
    return report.summary(), {"clt": report.to_csv()}, {}


def _run_partition_audit(cfg, threads):
    rows = partition_audit(int(cfg.extras.get("m_max", 8)),
                           tuple(cfg.extras.get("N_values", DEFAULT_NS)))
    return {"rows": rows, "passed": all(r["passed"] for r in rows)}, {"audit": _rows_csv(rows)}, {}


def _run_operator_audit(cfg, threads):
    rows = operator_audit(int(cfg.extras.get("trials", 1000)), cfg.seed)
    return {"rows": rows, "passed": all(r["passed"] for r in rows)}, {"audit": _rows_csv(rows)}, {}


DISPATCH = {"simulate": _run_simulate, "chaos": _run_chaos, "mv-solve": _run_mv,
            "clt": _run_clt, "partition-audit": _run_partition_audit,
            "operator-audit": _run_operator_audit}


def execute(cfg: ExperimentConfig, threads: int | None = None) -> ExperimentReport:
    """Run the command; identical config and seed give an identical payload hash."""
    threads = int(threads or cfg.extras.get("threads", 1))
    start = time.perf_counter()
    try:
        payload, tables, artifacts = DISPATCH[cfg.command](cfg, threads)
    except Exception as exc:
        raise RuntimeError(f"{cfg.command}: {type(exc).__name__}: {exc}") from exc
    report = ExperimentReport(cfg, payload, tables, artifacts, time.perf_counter() - start)
    report.audit_passed = bool(payload.get("passed", True))
    return report


def write_report(report: ExperimentReport, out_dir) -> list[Path]:
    """Write ``<hash12>.summary.json`` plus CSV/JSONL/NPY payloads into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prefix = report.config.hash[:12]
    written = []
    summary = out / f"{prefix}.summary.json"
    summary.write_text(json.dumps(report.summary(), indent=2, sort_keys=True, default=str))
    written.append(summary)
    for name, text in report.tables.items():
        p = out / f"{prefix}.{name}.csv"
        p.write_text(text)
        written.append(p)
    for name, art in report.artifacts.items():
        if name in ("rho", "b"):
            written.append(dump_trajectory(art, out / f"{prefix}.{name}.jsonl", name))
        else:
            ens, sim = art
            written.extend(dump_snapshot(ens, out / f"{prefix}.{name}", sim))
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="chaoskit", description=__doc__.splitlines()[0])
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", default="reports", help="output directory")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for replicas")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        raw_text = Path(args.config).read_text()
        raw = json.loads(raw_text)
        if args.seed is not None and isinstance(raw, dict):
            raw["seed"] = args.seed
        cfg = parse_config(raw)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        report = execute(cfg, args.threads)
        paths = write_report(report, args.out)
    except (RuntimeError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    print(f"{cfg.command}: wrote {len(paths)} files to {args.out} (config {cfg.hash[:12]})")
    if not report.audit_passed:
        print("audit failure: a bound was violated", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
