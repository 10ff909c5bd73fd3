"""Command-line surface: one JSON config in, one artifact out.

Every command is a thin adapter over the library modules; the config
file carries the command name, parameter blocks, and command options,
so a run is fully archivable.  Outputs are deterministic for a given
config and seed, and every artifact embeds a provenance header (config
hash and package version, no timestamps) so reruns are byte-identical.

Usage: snspin --config run.json [--out path] [--seed N] [--threads N]

Config layout::

    {
      "command": "rabi",
      "seed": 1,
      "output": "rabi.csv",
      "ground":  { ... ManifoldParams fields, Hz ... },
      "excited": { ... },
      "field":   {"bx_t": 2.2e-4} or {"b_x_hz": 6.03e6},
      "options": { ... per-command options ... }
    }

Grids are {"start": lo, "stop": hi, "points": n} blocks.  Unset
parameter blocks fall back to the package's fitted defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

ENV_OUT_DIR = "SNSPIN_OUT_DIR"

COMMANDS = (
    "levels", "transitions", "ple", "cyclicity-map", "pump",
    "fidelity-budget", "rabi", "ramsey", "decouple", "rb",
    "coherence-map", "fit",
)


class ConfigError(Exception):
    """Config schema violation; ``path`` names the offending entry."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path


def _get(cfg: dict, path: str, default=None, required: bool = False):
    node = cfg
    walked = []
    for part in path.split("."):
        walked.append(part)
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigError(f"missing required entry", ".".join(walked))
            return default
        node = node[part]
    return node


def _number(cfg: dict, path: str, default=None, required: bool = False) -> float:
    val = _get(cfg, path, default, required)
    if val is None:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"expected a number, got {val!r}", path)
    return float(val)


def _grid(cfg: dict, path: str, required: bool = True):
    import numpy as np

    block = _get(cfg, path, required=required)
    if block is None:
        return None
    if isinstance(block, list):
        if not block:
            raise ConfigError("grid list must be non-empty", path)
        return np.asarray([float(x) for x in block])
    for key in ("start", "stop", "points"):
        if key not in block:
            raise ConfigError(f"grid needs start/stop/points", f"{path}.{key}")
    n = block["points"]
    if not isinstance(n, int) or n < 1:
        raise ConfigError("points must be a positive integer", f"{path}.points")
    return np.linspace(float(block["start"]), float(block["stop"]), n)


def _manifold(cfg: dict, key: str, default_factory):
    from .params import ManifoldParams

    block = _get(cfg, key)
    if block is None:
        return default_factory()
    if not isinstance(block, dict):
        raise ConfigError("expected a parameter object", key)
    try:
        return ManifoldParams.from_dict(block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), key)


def _field(cfg: dict):
    from .params import MagneticField, field_for_larmor, reference_field

    block = _get(cfg, "field")
    if block is None:
        return reference_field()
    components = {}
    for axis in ("x", "y", "z"):
        tesla_key, hz_key = f"b{axis}_t", f"b_{axis}_hz"
        if tesla_key in block and hz_key in block:
            raise ConfigError(f"give either {tesla_key} or {hz_key}, not both",
                              f"field.{tesla_key}")
        if tesla_key in block:
            components[f"b{axis}"] = float(block[tesla_key])
        elif hz_key in block:
            components[f"b{axis}"] = field_for_larmor(float(block[hz_key]))
        else:
            components[f"b{axis}"] = 0.0
    unknown = set(block) - {f"b{a}_t" for a in "xyz"} - {f"b_{a}_hz" for a in "xyz"}
    if unknown:
        raise ConfigError(f"unknown field keys {sorted(unknown)}", "field")
    return MagneticField(**components)


def _noise(cfg: dict, path: str):
    from .dynamics import NoiseModel

    block = _get(cfg, path)
    if block is None:
        return None
    try:
        return NoiseModel(
            kind=block.get("kind", "none"),
            sigma_hz=float(block.get("sigma_hz", 0.0)),
            correlation_time_s=float(block.get("correlation_time_s", float("inf"))),
            samples=int(block.get("samples", 100)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path)


# --- command handlers --------------------------------------------------------
# Each returns (payload, flavor) where flavor is "json" or rows for CSV.

def _cmd_levels(cfg, seed):
    from .params import ground_defaults, excited_defaults
    from .spinmodel import manifold_eigensystem

    field = _field(cfg)
    which = _get(cfg, "options.manifold", "ground")
    out = {}
    if which in ("ground", "both"):
        es = manifold_eigensystem(_manifold(cfg, "ground", ground_defaults), field)
        out["ground"] = {k: float(v) for k, v in es.level_dict().items()}
    if which in ("excited", "both"):
        es = manifold_eigensystem(_manifold(cfg, "excited", excited_defaults), field)
        out["excited"] = {k: float(v) for k, v in es.level_dict().items()}
    if not out:
        raise ConfigError("manifold must be ground, excited, or both",
                          "options.manifold")
    return out, "json"


def _cmd_transitions(cfg, seed):
    from .params import ground_defaults, excited_defaults
    from .spinmodel import manifold_eigensystem
    from .spectrum import mw_transitions, optical_transitions

    field = _field(cfg)
    ground = manifold_eigensystem(_manifold(cfg, "ground", ground_defaults), field)
    table = mw_transitions(ground)
    rows = table.csv_rows()
    if _get(cfg, "options.include_optical", True):
        excited = manifold_eigensystem(_manifold(cfg, "excited", excited_defaults), field)
        zpl = _number(cfg, "options.zpl_hz", 0.0)
        rows.extend(optical_transitions(ground, excited, zpl=zpl).csv_rows()[1:])
    return rows, "csv"


def _cmd_ple(cfg, seed):
    from .params import ground_defaults, excited_defaults, OPTICAL_LINEWIDTH_HZ
    from .spinmodel import manifold_eigensystem
    from .spectrum import optical_transitions, ple_spectrum

    field = _field(cfg)
    ground = manifold_eigensystem(_manifold(cfg, "ground", ground_defaults), field)
    excited = manifold_eigensystem(_manifold(cfg, "excited", excited_defaults), field)
    table = optical_transitions(ground, excited, zpl=_number(cfg, "options.zpl_hz", 0.0))
    trace = ple_spectrum(
        table,
        linewidth=_number(cfg, "options.linewidth_hz", OPTICAL_LINEWIDTH_HZ),
        grid=_grid(cfg, "options.detuning_hz", required=False),
    )
    return trace.csv_rows(), "csv"


def _cmd_cyclicity_map(cfg, seed):
    from .params import ground_defaults, excited_defaults, MagneticField
    from .spinmodel import manifold_eigensystem
    from .optics import cyclicity

    gp = _manifold(cfg, "ground", ground_defaults)
    ep = _manifold(cfg, "excited", excited_defaults)
    bx_grid = _grid(cfg, "options.bx_t")
    bz_grid = _grid(cfg, "options.bz_t")
    rows = [("bx_t", "bz_t", "lambda_f0")]
    for bx in bx_grid:
        for bz in bz_grid:
            field = MagneticField(bx=float(bx), bz=float(bz))
            ground = manifold_eigensystem(gp, field)
            excited = manifold_eigensystem(ep, field)
            lam = cyclicity(ground, excited).lambda_f0
            rows.append((repr(float(bx)), repr(float(bz)), repr(float(lam))))
    return rows, "csv"


def _cmd_pump(cfg, seed):
    from .params import ground_defaults, excited_defaults, LIFETIME_S, OPTICAL_LINEWIDTH_HZ
    from .spinmodel import manifold_eigensystem
    from .optics import pump_dynamics

    field = _field(cfg)
    ground = manifold_eigensystem(_manifold(cfg, "ground", ground_defaults), field)
    excited = manifold_eigensystem(_manifold(cfg, "excited", excited_defaults), field)
    line = _get(cfg, "options.line", "f2")
    if not isinstance(line, str):
        line = float(line)
    result = pump_dynamics(
        ground, excited, dipoles=None,
        pump_line=line,
        rabi_hz=_number(cfg, "options.rabi_hz", required=True),
        linewidth_hz=_number(cfg, "options.linewidth_hz", OPTICAL_LINEWIDTH_HZ),
        duration_s=_number(cfg, "options.duration_s", 10e-6),
        lifetime_s=_number(cfg, "options.lifetime_s", LIFETIME_S),
    )
    return {
        "populations": {k: float(v) for k, v in result.populations.items()},
        "steady_state": {k: float(v) for k, v in result.steady_state.items()},
        "tau_pol_s": result.tau_pol_s,
        "target": result.target,
        "converged": result.converged,
        "message": result.message,
    }, "json"


def _cmd_fidelity_budget(cfg, seed):
    import numpy as np
    from .params import ground_defaults, excited_defaults, LIFETIME_S
    from .spinmodel import manifold_eigensystem
    from .spectrum import memory_detuning
    from .optics import excitation_fidelity, max_excitations

    tau = _number(cfg, "options.tau_s", LIFETIME_S)
    delta = _number(cfg, "options.delta_omega_rad_s")
    if delta is None:
        field = _field(cfg)
        ground = manifold_eigensystem(_manifold(cfg, "ground", ground_defaults), field)
        excited = manifold_eigensystem(_manifold(cfg, "excited", excited_defaults), field)
        delta = 2.0 * np.pi * memory_detuning(ground, excited)
    ns = _get(cfg, "options.n_list")
    if ns is None:
        ns = [int(x) for x in np.unique(np.round(np.geomspace(1, 1e7, 29)))]
    f_min = _number(cfg, "options.f_min", 0.95)
    return {
        "delta_omega_rad_s": float(delta),
        "tau_s": float(tau),
        "budget": [
            {"n": int(n), "fidelity": float(excitation_fidelity(delta, tau, int(n)))}
            for n in ns
        ],
        "f_min": float(f_min),
        "n_max": float(max_excitations(delta, tau, f_min)),
    }, "json"


def _map_common(cfg):
    from .params import ground_defaults

    params = _manifold(cfg, "ground", ground_defaults)
    field = _field(cfg)
    ax = _number(cfg, "options.amplitude_x_hz", 8.92e6)
    az = _number(cfg, "options.amplitude_z_hz", 5.00e6)
    transition = _get(cfg, "options.transition")
    return params, field, ax, az, transition


def _cmd_rabi(cfg, seed):
    from .dynamics import rabi_map

    params, field, ax, az, transition = _map_common(cfg)
    m = rabi_map(params, field, ax, az,
                 _grid(cfg, "options.freq_hz"), _grid(cfg, "options.duration_s"),
                 transition=transition)
    meta = {"kind": "rabi"}
    if transition:
        meta["transition"] = transition
    return (m, meta), "signal-csv"


def _cmd_ramsey(cfg, seed):
    from .dynamics import ramsey_map

    params, field, ax, az, transition = _map_common(cfg)
    pi_half = _number(cfg, "options.pi_half_s")
    m = ramsey_map(params, field, ax, az,
                   _grid(cfg, "options.freq_hz"), _grid(cfg, "options.delay_s"),
                   noise=_noise(cfg, "options.noise"),
                   transition=transition, pi_half_s=pi_half)
    meta = {"kind": "ramsey"}
    if transition:
        meta["transition"] = transition
    if pi_half is not None:
        meta["pi_half_s"] = repr(float(pi_half))
    return (m, meta), "signal-csv"


def _cmd_decouple(cfg, seed):
    from .params import ground_defaults
    from .dynamics import decoupling_scan

    noise = _noise(cfg, "options.noise")
    if noise is None:
        raise ConfigError("decouple needs an ornstein-uhlenbeck noise block",
                          "options.noise")
    result = decoupling_scan(
        _manifold(cfg, "ground", ground_defaults), _field(cfg),
        n_pulses=int(_number(cfg, "options.n_pulses", required=True)),
        delay_grid=_grid(cfg, "options.total_time_s"),
        noise=noise, seed=seed,
        transition=_get(cfg, "options.transition", "memory"),
    )
    return {
        "n_pulses": result.n_pulses,
        "total_time_s": [float(t) for t in result.total_time_s],
        "coherence": [float(c) for c in result.coherence],
        "t2_s": result.t2_s,
        "stretch": result.stretch,
        "fit_ok": result.fit_ok,
        "message": result.message,
    }, "json"


def _cmd_rb(cfg, seed):
    from .dynamics import rb_simulate, clifford_adjust

    spam = _get(cfg, "options.spam", [1.0, 0.0])
    result = rb_simulate(
        gate_fidelity=_number(cfg, "options.gate_fidelity", required=True),
        lengths=_get(cfg, "options.lengths"),
        sequences_per_length=int(_number(cfg, "options.sequences_per_length", 300)),
        seed=seed,
        spam=(float(spam[0]), float(spam[1])),
    )
    out = {
        "lengths": [int(n) for n in result.lengths],
        "mean_survival": [float(x) for x in result.mean_survival],
        "stderr": [float(x) for x in result.stderr],
        "fidelity": result.fidelity,
        "fidelity_err": result.fidelity_err,
        "decay": result.decay,
        "amplitude": result.amplitude,
        "offset": result.offset,
        "fit_ok": result.fit_ok,
        "message": result.message,
    }
    if result.fit_ok:
        out["clifford_fidelity"] = clifford_adjust(result.fidelity)
    return out, "json"


def _cmd_coherence_map(cfg, seed):
    from .params import ground_defaults
    from .coherence import coherence_map, CoherenceParams

    coh = CoherenceParams(
        gamma_phonon=_number(cfg, "options.gamma_phonon", CoherenceParams().gamma_phonon),
        temperature_k=_number(cfg, "options.temperature_k", 1.7),
    )
    m = coherence_map(
        _manifold(cfg, "ground", ground_defaults),
        _grid(cfg, "options.upsilon_hz"), _grid(cfg, "options.alpha_hz"),
        sign_convention=_get(cfg, "options.sign_convention", "opposite"),
        coherence=coh,
    )
    return m.csv_rows(), "csv"


def _cmd_fit(cfg, seed):
    from .fitkit import (
        FIT_PARAM_NAMES, FitParams, ExperimentSpec, FitProblem,
        fit_parameters, load_signal_csv,
    )

    blocks = _get(cfg, "options.datasets", required=True)
    if not isinstance(blocks, list) or not blocks:
        raise ConfigError("datasets must be a non-empty list", "options.datasets")
    specs, data = [], []
    base = os.path.dirname(os.path.abspath(cfg["_config_path"]))
    for i, block in enumerate(blocks):
        path = block.get("path")
        if not path:
            raise ConfigError("dataset needs a csv path", f"options.datasets[{i}].path")
        if not os.path.isabs(path):
            path = os.path.join(base, path)
        meta, m = load_signal_csv(path)
        kind = block.get("kind", meta.get("kind"))
        transition = block.get("transition", meta.get("transition"))
        pi_half = block.get("pi_half_s", meta.get("pi_half_s"))
        if kind is None or transition is None:
            raise ConfigError(
                "dataset needs kind and transition (in the block or the csv header)",
                f"options.datasets[{i}]",
            )
        try:
            spec = ExperimentSpec(
                kind=kind, transition=transition,
                freq_hz=tuple(float(f) for f in m.freq_hz),
                time_s=tuple(float(t) for t in m.duration_s),
                pi_half_s=None if pi_half is None else float(pi_half),
                label=block.get("label", ""),
            )
        except ValueError as exc:
            raise ConfigError(str(exc), f"options.datasets[{i}]")
        specs.append(spec)
        data.append(m.signal)

    initial_block = _get(cfg, "options.initial", required=True)
    try:
        initial = FitParams(**{k: float(v) for k, v in initial_block.items()})
    except TypeError as exc:
        raise ConfigError(str(exc), "options.initial")
    free = tuple(_get(cfg, "options.free", list(FIT_PARAM_NAMES)))
    bounds_block = _get(cfg, "options.bounds", {}) or {}
    bounds = {k: (float(v[0]), float(v[1])) for k, v in bounds_block.items()}
    try:
        problem = FitProblem(tuple(specs), tuple(data), initial, free=free,
                             bounds=bounds or None,
                             nuisance=bool(_get(cfg, "options.nuisance", False)))
    except ValueError as exc:
        raise ConfigError(str(exc), "options")
    result = fit_parameters(
        problem, seed=seed,
        restarts=int(_number(cfg, "options.restarts", 0)),
        max_eval=int(_number(cfg, "options.max_eval", 2000)),
    )
    out = result.to_dict()
    del out["acceptance_log"]  # can be large; keep artifacts compact
    out["acceptance_improvements"] = len(result.acceptance_log)
    return out, "json"


_HANDLERS = {
    "levels": _cmd_levels,
    "transitions": _cmd_transitions,
    "ple": _cmd_ple,
    "cyclicity-map": _cmd_cyclicity_map,
    "pump": _cmd_pump,
    "fidelity-budget": _cmd_fidelity_budget,
    "rabi": _cmd_rabi,
    "ramsey": _cmd_ramsey,
    "decouple": _cmd_decouple,
    "rb": _cmd_rb,
    "coherence-map": _cmd_coherence_map,
    "fit": _cmd_fit,
}


def _provenance(config_bytes: bytes, seed: int) -> dict:
    from . import __version__

    return {
        "config_sha256": hashlib.sha256(config_bytes).hexdigest(),
        "version": __version__,
        "seed": seed,
    }


def _write_output(path: str, payload, flavor: str, provenance: dict):
    if flavor == "json":
        doc = {"_provenance": provenance}
        doc.update(payload)
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        if flavor == "signal-csv":
            m, meta = payload
            rows = m.csv_rows()
            header_meta = dict(meta)
        else:
            rows = payload
            header_meta = {}
        lines = [f"# {k}={v}" for k, v in provenance.items()]
        lines.extend(f"# {k}={v}" for k, v in header_meta.items())
        lines.extend(",".join(str(c) for c in row) for row in rows)
        text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(text)


def run(config_path: str, out_override: str | None = None,
        seed_override: int | None = None) -> str:
    """Execute one config; returns the written artifact path."""
    try:
        with open(config_path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    cfg["_config_path"] = os.path.abspath(config_path)

    command = _get(cfg, "command", required=True)
    if command not in _HANDLERS:
        raise ConfigError(
            f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}",
            "command",
        )
    seed = seed_override if seed_override is not None else int(_get(cfg, "seed", 0))

    output = out_override or _get(cfg, "output")
    if output is None:
        ext = "json" if command in (
            "levels", "pump", "fidelity-budget", "decouple", "rb", "fit"
        ) else "csv"
        output = f"{command}.{ext}"
    if not os.path.isabs(output):
        output = os.path.join(os.environ.get(ENV_OUT_DIR, "."), output)

    payload, flavor = _HANDLERS[command](cfg, seed)
    _write_output(output, payload, flavor, _provenance(raw, seed))
    return output


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="snspin",
        description="Color-center spin-photon interface model runner",
    )
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output path (overrides config)")
    parser.add_argument("--seed", type=int, help="seed (overrides config)")
    parser.add_argument("--threads", type=int, default=1,
                        help="BLAS/OpenMP thread budget (default 1, deterministic)")
    args = parser.parse_args(argv)

    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(args.threads))

    try:
        written = run(args.config, args.out, args.seed)
    except ConfigError as exc:
        json.dump({"error": {"type": "config", "message": str(exc),
                             "path": exc.path}}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        json.dump({"error": {"type": "runtime", "message": str(exc)}}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    print(written)
    return 0


if __name__ == "__main__":
    sys.exit(main())
