"""Parameter recovery from driven-dynamics maps.

The measurable inputs are Rabi chevrons and Ramsey fringes of the three
microwave transitions.  Seven parameters are free by default: the
static bias and drive amplitudes along x and z (as electron drive
strengths, Hz), the two hyperfine constants, and the Jahn-Teller
coupling.  The spin-orbit splitting and the orbital quenching factor
are held fixed -- the maps constrain them only through ratios that the
hyperfine parameters already absorb.

Fitting is derivative-free simplex descent (optionally restarted) on
parameters normalized by their starting values, since the raw scales
span Hz to THz.  Parameter uncertainties are the Gauss-Newton curvature
errors of the sum-of-squares loss at the optimum, reported relative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .params import ManifoldParams, MagneticField, field_for_larmor
from . import dynamics
from .dynamics import SignalMap

FIT_PARAM_NAMES = (
    "b_x_dc_hz", "b_z_dc_hz", "b_x_ac_hz", "b_z_ac_hz",
    "a_par_hz", "a_perp_hz", "alpha_hz",
)


@dataclass(frozen=True)
class FitParams:
    """The fit's parameter bundle: seven free values plus fixed context.

    Field and drive amplitudes are electron drive strengths g mu_B B / h
    in Hz.  ``lambda_soc_hz`` and ``orbital_quench_q`` are fixed inputs,
    not fitted.
    """

    b_x_dc_hz: float
    b_z_dc_hz: float
    b_x_ac_hz: float
    b_z_ac_hz: float
    a_par_hz: float
    a_perp_hz: float
    alpha_hz: float
    lambda_soc_hz: float = 830.0e9
    orbital_quench_q: float = 0.171

    @classmethod
    def reference(cls) -> "FitParams":
        return cls(
            b_x_dc_hz=6.03e6, b_z_dc_hz=1.55e6,
            b_x_ac_hz=8.92e6, b_z_ac_hz=5.00e6,
            a_par_hz=673.8e6, a_perp_hz=670.95e6, alpha_hz=928.4e9,
        )

    def free_values(self, names=FIT_PARAM_NAMES) -> np.ndarray:
        return np.array([getattr(self, n) for n in names])

    def with_free_values(self, values, names=FIT_PARAM_NAMES) -> "FitParams":
        return replace(self, **dict(zip(names, map(float, values))))

    def to_model(self):
        """(ManifoldParams, MagneticField, (ax_hz, az_hz)) for the engine."""
        params = ManifoldParams(
            lambda_soc=self.lambda_soc_hz,
            a_par=self.a_par_hz,
            a_perp=self.a_perp_hz,
            strain_egx=self.alpha_hz,
            orbital_quench_q=self.orbital_quench_q,
        )
        field = MagneticField(
            bx=field_for_larmor(self.b_x_dc_hz, params.g_electron),
            bz=field_for_larmor(self.b_z_dc_hz, params.g_electron),
        )
        return params, field, (self.b_x_ac_hz, self.b_z_ac_hz)

    def to_dict(self) -> dict:
        return {n: float(getattr(self, n)) for n in FIT_PARAM_NAMES} | {
            "lambda_soc_hz": float(self.lambda_soc_hz),
            "orbital_quench_q": float(self.orbital_quench_q),
        }


@dataclass(frozen=True)
class ExperimentSpec:
    """One measured map: what was driven and on which grid.

    ``time_s`` is the drive duration axis for a Rabi map and the free
    delay axis for a Ramsey map.  ``pi_half_s`` freezes the Ramsey
    pulse duration at its value when the data were taken; it is part of
    the measurement, not of the model, so the fit never varies it.
    ``field_scale`` records maps taken at a different bias-coil current
    with a known ratio to the primary setting; both static components
    scale together while the fitted baseline values stay shared.
    Initialization is always 0B0M and readout the 1B population; the
    pre/post mapping-pulse routing follows the transition under test.
    """

    kind: str
    transition: str
    freq_hz: tuple
    time_s: tuple
    pi_half_s: float | None = None
    field_scale: float = 1.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("rabi", "ramsey"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.transition not in dynamics.TRANSITIONS:
            raise ValueError(f"unknown transition {self.transition!r}")
        if len(self.freq_hz) == 0 or len(self.time_s) == 0:
            raise ValueError("grids must be non-empty")
        if self.kind == "ramsey" and self.pi_half_s is None:
            raise ValueError("a ramsey spec needs its calibrated pi_half_s")
        if not self.field_scale > 0:
            raise ValueError("field_scale must be positive")

    @property
    def size(self) -> int:
        return len(self.freq_hz) * len(self.time_s)

    def metadata(self) -> dict:
        meta = {"kind": self.kind, "transition": self.transition}
        if self.pi_half_s is not None:
            meta["pi_half_s"] = repr(float(self.pi_half_s))
        if self.field_scale != 1.0:
            meta["field_scale"] = repr(float(self.field_scale))
        if self.label:
            meta["label"] = self.label
        return meta


def simulate_experiment(theta: FitParams, spec: ExperimentSpec) -> SignalMap:
    """Model map for one spec, delegated to the dynamics engine."""
    params, field, (ax, az) = theta.to_model()
    if spec.field_scale != 1.0:
        s = spec.field_scale
        field = MagneticField(bx=s * field.bx, by=s * field.by, bz=s * field.bz)
    if spec.kind == "rabi":
        return dynamics.rabi_map(params, field, ax, az, spec.freq_hz, spec.time_s,
                                 transition=spec.transition)
    return dynamics.ramsey_map(params, field, ax, az, spec.freq_hz, spec.time_s,
                               transition=spec.transition,
                               pi_half_s=spec.pi_half_s)


def _nuisance_rescale(sim: np.ndarray, data: np.ndarray) -> np.ndarray:
    """Best amplitude/offset a*sim + b against data, in closed form."""
    s = sim.ravel()
    d = data.ravel()
    var = s.var()
    if var <= 0:
        return np.full_like(sim, d.mean() - sim.mean())  # offset-only
    a = ((s - s.mean()) @ (d - d.mean())) / (var * s.size)
    b = d.mean() - a * s.mean()
    return a * sim + b


@dataclass(frozen=True)
class FitProblem:
    """Datasets plus the parameterization of the fit.

    ``free`` names the parameters the optimizer may move (the rest stay
    at ``initial``); ``bounds`` optionally limits them as absolute
    (low, high) pairs.  ``nuisance`` enables a per-dataset closed-form
    amplitude/offset pair absorbing unquantified readout scaling.  The
    loss is the plain sum of squared residuals over all datasets.
    """

    specs: tuple
    data: tuple
    initial: FitParams
    free: tuple = FIT_PARAM_NAMES
    bounds: dict | None = None
    nuisance: bool = False

    def __post_init__(self):
        if len(self.specs) != len(self.data) or not self.specs:
            raise ValueError("need one data array per spec")
        for spec, d in zip(self.specs, self.data):
            d = np.asarray(d)
            if d.shape != (len(spec.freq_hz), len(spec.time_s)):
                raise ValueError(
                    f"data shape {d.shape} does not match spec grid "
                    f"({len(spec.freq_hz)}, {len(spec.time_s)})"
                )
        unknown = set(self.free) - set(FIT_PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown free parameters: {sorted(unknown)}")
        for name, (lo, hi) in (self.bounds or {}).items():
            if name not in FIT_PARAM_NAMES:
                raise ValueError(f"bound on unknown parameter {name!r}")
            if not lo < hi:
                raise ValueError(f"bounds for {name} must be ordered (low < high)")
            v = getattr(self.initial, name)
            if not lo <= v <= hi:
                raise ValueError(f"initial {name}={v:g} outside bounds ({lo:g}, {hi:g})")

    def residual_maps(self, theta: FitParams) -> tuple:
        maps = []
        for spec, d in zip(self.specs, self.data):
            sim = simulate_experiment(theta, spec).signal
            if self.nuisance:
                sim = _nuisance_rescale(sim, np.asarray(d))
            maps.append(sim - np.asarray(d))
        return tuple(maps)

    def residuals(self, theta: FitParams) -> np.ndarray:
        return np.concatenate([m.ravel() for m in self.residual_maps(theta)])

    def loss(self, theta: FitParams) -> float:
        r = self.residuals(theta)
        return float(r @ r)


@dataclass(frozen=True)
class FitResult:
    params: FitParams
    loss: float
    errors_rel: dict
    residual_maps: tuple
    transitions_hz: dict
    n_eval: int
    acceptance_log: tuple   # (eval index, best loss so far) pairs
    success: bool
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "loss": self.loss,
            "errors_rel": dict(self.errors_rel),
            "transitions_hz": dict(self.transitions_hz),
            "n_eval": self.n_eval,
            "acceptance_log": [list(x) for x in self.acceptance_log],
            "success": self.success,
            "message": self.message,
        }


def _jacobian(problem: FitProblem, theta: FitParams, names,
              step: float = 1e-4) -> np.ndarray:
    """Central-difference residual Jacobian wrt normalized parameters."""
    base = theta.free_values(names)
    cols = []
    for k in range(len(base)):
        hi = base.copy()
        lo = base.copy()
        hi[k] = base[k] * (1 + step)
        lo[k] = base[k] * (1 - step)
        r_hi = problem.residuals(theta.with_free_values(hi, names))
        r_lo = problem.residuals(theta.with_free_values(lo, names))
        cols.append((r_hi - r_lo) / (2 * step))
    return np.column_stack(cols)


def derived_transitions(theta: FitParams) -> dict:
    """Microwave transition frequencies (Hz) at a parameter point."""
    params, field, _ = theta.to_model()
    engine = dynamics._Engine(params, field)
    return {key: engine.transition_frequency(key) for key in dynamics.TRANSITIONS}


def estimate_transition_frequency(spec: ExperimentSpec, data) -> float:
    """Signal-weighted center frequency of one measured chevron map.

    Weighs each drive frequency by the peak-to-peak signal along the
    duration axis, which peaks on resonance.  Good to a fraction of the
    Rabi width; meant to seed :func:`calibrate_initial`, not to replace
    the fit.
    """
    data = np.asarray(data, dtype=float)
    freqs = np.asarray(spec.freq_hz, dtype=float)
    if data.shape != (freqs.size, len(spec.time_s)):
        raise ValueError(f"data shape {data.shape} does not match the spec grid")
    weights = data.max(axis=1) - data.min(axis=1)
    total = weights.sum()
    if total <= 0:
        raise ValueError("map has no signal contrast to locate a transition")
    return float(weights @ freqs / total)


# Parameters that set transition frequencies and Rabi rates; the DC field
# components barely move either (< 0.03% per 1%), so the coarse
# calibration leaves them alone.  The strain is deliberately excluded:
# at calibration precision it is exactly degenerate with a_perp (both
# only enter through the product a_perp * mixing angle), and freeing it
# here lets the calibration wander along that degenerate direction into
# the wrong basin of the full fit.  The full fit resolves the strain
# through second-order structure (the 1B splitting and the off-resonant
# map shape) that the calibration columns barely see.
_CALIBRATION_NAMES = ("a_par_hz", "a_perp_hz", "b_x_ac_hz", "b_z_ac_hz")

# Relative frequency residuals are worth roughly this many squared
# signal units in the calibration loss (0.1% off-frequency ~ one 10%
# signal mismatch).
_CALIBRATION_FREQ_WEIGHT = 1e4


def calibrate_initial(problem: FitProblem, max_eval: int = 2000) -> FitParams:
    """Coarse spectroscopic calibration before the full fit.

    A ±5% parameter offset moves the microwave transitions by tens of
    MHz -- several chevron windows -- so a simplex descent started there
    only sees flat loss.  This stage reads the transition frequency off
    each measured chevron (weighted centroid) and adjusts the hyperfine,
    strain and drive-amplitude parameters until the model reproduces
    both that frequency and the measured resonant column.  The column
    comparison breaks the (a_perp, alpha) degeneracy that frequencies
    alone leave open: the Rabi rates of the three transitions depend on
    the orbital mixing angle directly.

    Only parameters in ``problem.free`` are touched; returns the
    calibrated parameter set (the problem itself is immutable).
    """
    free = tuple(n for n in _CALIBRATION_NAMES if n in problem.free)
    targets = []
    for spec, d in zip(problem.specs, problem.data):
        if spec.kind != "rabi":
            continue
        d = np.asarray(d, dtype=float)
        f_hat = estimate_transition_frequency(spec, d)
        col = int(np.argmin(np.abs(np.asarray(spec.freq_hz) - f_hat)))
        targets.append((spec, float(spec.freq_hz[col]), f_hat, d[col]))
    if not free or not targets:
        return problem.initial

    initial = problem.initial
    base = initial.free_values(free)

    def objective(x):
        theta = initial.with_free_values(x * base, free)
        params, field, (ax, az) = theta.to_model()
        engine = dynamics._Engine(params, field)
        total = 0.0
        for spec, f_col, f_hat, col_data in targets:
            f_model = engine.transition_frequency(spec.transition)
            total += _CALIBRATION_FREQ_WEIGHT * ((f_model - f_hat) / f_hat) ** 2
            sim = dynamics.rabi_map(params, field, ax, az, (f_col,),
                                    spec.time_s, transition=spec.transition)
            diff = sim.signal[0] - col_data
            total += float(diff @ diff)
        return total

    res = minimize(
        objective, np.ones(len(free)), method="Nelder-Mead",
        options={"xatol": 1e-6, "fatol": 1e-12, "maxfev": max_eval,
                 "adaptive": True},
    )
    return initial.with_free_values(res.x * base, free)


def fit_parameters(problem: FitProblem, seed: int = 0, restarts: int = 0,
                   max_eval: int = 2000, xatol: float = 1e-4,
                   with_errors: bool = True) -> FitResult:
    """Recover the free parameters by restarted Nelder-Mead.

    The optimizer works on values normalized by the problem's initial
    point so all directions have comparable scale.  Restarts re-launch
    the simplex from the running best with small seeded perturbations.
    The acceptance log records every improvement of the best loss
    (monotone by construction).  Relative uncertainties come from the
    Gauss-Newton curvature of the loss at the optimum (the
    finite-difference residual Jacobian); a singular information matrix
    is reported in the message rather than raised.
    """
    names = tuple(problem.free)
    initial = problem.initial
    if not names:
        return FitResult(
            params=initial, loss=problem.loss(initial), errors_rel={},
            residual_maps=problem.residual_maps(initial),
            transitions_hz=derived_transitions(initial),
            n_eval=1, acceptance_log=((1, problem.loss(initial)),),
            success=True, message="no free parameters; loss evaluated only",
        )
    start = initial.free_values(names)
    if np.any(start == 0):
        raise ValueError("initial values must be non-zero (they set the scale)")

    norm_bounds = None
    if problem.bounds:
        lo = np.full(len(names), -np.inf)
        hi = np.full(len(names), np.inf)
        for k, n in enumerate(names):
            if n in problem.bounds:
                lo[k] = problem.bounds[n][0] / start[k]
                hi[k] = problem.bounds[n][1] / start[k]
                if lo[k] > hi[k]:
                    lo[k], hi[k] = hi[k], lo[k]  # negative start flips the ratio
        norm_bounds = list(zip(lo, hi))

    log = []
    state = {"best": math.inf, "n": 0}

    def loss_of(x):
        theta = initial.with_free_values(start * x, names)
        val = problem.loss(theta)
        state["n"] += 1
        if val < state["best"]:
            state["best"] = val
            log.append((state["n"], val))
        return val

    rng = np.random.default_rng(seed)
    best_x = np.ones(len(names))
    best_fun = math.inf
    success = False
    message = ""
    for attempt in range(restarts + 1):
        x0 = best_x if attempt == 0 else best_x * (1 + 0.02 * rng.standard_normal(len(names)))
        res = minimize(
            loss_of, x0, method="Nelder-Mead", bounds=norm_bounds,
            options={"maxfev": max_eval, "xatol": xatol, "fatol": 1e-14,
                     "adaptive": True},
        )
        if res.fun < best_fun:
            best_fun = res.fun
            best_x = res.x
            success = bool(res.success)
            message = str(res.message)
    best = initial.with_free_values(start * best_x, names)

    errors = {}
    if with_errors:
        r = problem.residuals(best)
        dof = max(r.size - len(names), 1)
        s2 = float(r @ r) / dof
        jac = _jacobian(problem, best, names)
        jtj = jac.T @ jac
        try:
            cov = s2 * np.linalg.inv(jtj)
            rel = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        except np.linalg.LinAlgError:
            rel = np.full(len(names), math.nan)
            message = (message + "; information matrix singular").strip("; ")
        errors = dict(zip(names, map(float, rel)))

    return FitResult(
        params=best, loss=float(best_fun), errors_rel=errors,
        residual_maps=problem.residual_maps(best),
        transitions_hz=derived_transitions(best),
        n_eval=state["n"], acceptance_log=tuple(log),
        success=success, message=message,
    )


def save_signal_csv(path, signal_map: SignalMap, metadata: dict | None = None):
    """Write a map as freq_hz,duration_s,signal rows with '#' metadata lines."""
    lines = []
    for key, val in (metadata or {}).items():
        lines.append(f"# {key}={val}")
    for row in signal_map.csv_rows():
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_signal_csv(path) -> tuple:
    """Read a freq_hz,duration_s,signal CSV into (metadata, SignalMap).

    Leading '#' lines carry optional key=value metadata (experiment
    kind, transition, calibrated pulse duration) written by the
    exporter.  The rows must cover a full rectangular grid; malformed
    content is reported with its line number.
    """
    import csv

    meta = {}
    rows = []
    with open(path, newline="") as fh:
        raw = fh.read().splitlines()
    body_start = 0
    for line in raw:
        if not line.startswith("#"):
            break
        body_start += 1
        text = line.lstrip("#").strip()
        if "=" in text:
            key, _, val = text.partition("=")
            meta[key.strip()] = val.strip()
    reader = csv.reader(raw[body_start:])
    header = next(reader, None)
    if header is None:
        raise ValueError(f"{path}: empty file")
    if [h.strip() for h in header] != ["freq_hz", "duration_s", "signal"]:
        raise ValueError(
            f"{path}: line {body_start + 1}: expected header "
            f"'freq_hz,duration_s,signal', got {','.join(header)!r}"
        )
    freqs, times, vals = [], [], []
    for offset, row in enumerate(reader, start=body_start + 2):
        if not row:
            continue
        if len(row) != 3:
            raise ValueError(f"{path}: line {offset}: expected 3 fields, got {len(row)}")
        try:
            f, t, s = (float(x) for x in row)
        except ValueError:
            raise ValueError(f"{path}: line {offset}: non-numeric value in {row!r}")
        if not (math.isfinite(f) and math.isfinite(t) and math.isfinite(s)):
            raise ValueError(f"{path}: line {offset}: non-finite value in {row!r}")
        freqs.append(f)
        times.append(t)
        vals.append(s)
    if not vals:
        raise ValueError(f"{path}: no data rows")
    freq_axis = np.unique(freqs)
    time_axis = np.unique(times)
    if len(vals) != freq_axis.size * time_axis.size:
        raise ValueError(
            f"{path}: {len(vals)} rows do not fill a "
            f"{freq_axis.size} x {time_axis.size} grid"
        )
    signal = np.full((freq_axis.size, time_axis.size), math.nan)
    fi = {v: i for i, v in enumerate(freq_axis)}
    ti = {v: i for i, v in enumerate(time_axis)}
    for f, t, s in zip(freqs, times, vals):
        i, j = fi[f], ti[t]
        if not math.isnan(signal[i, j]):
            raise ValueError(f"{path}: duplicate grid point ({f!r}, {t!r})")
        signal[i, j] = s
    return meta, SignalMap(freq_axis, time_axis, signal)


def _period_aligned(delays, freq_hz):
    """Round free delays to drive-period multiples (synthesized clock).

    Keeping the second Ramsey pulse phase-locked to the tone makes every
    delay share one cached pulse propagator, which is also how a
    synthesizer-timed measurement behaves.  The sub-period rounding
    (< 2 ns) is stored in the spec, so data and model stay consistent.
    """
    period = 1.0 / freq_hz
    return tuple(np.round(np.asarray(delays) / period) * period)


def reference_problem(theta: FitParams | None = None,
                      noise_rel: float = 0.0, seed: int = 0,
                      n_freq: int = 7, n_time: int = 14,
                      n_delay: int = 40, n_long: int = 44,
                      long_delay_s: float = 40e-6,
                      **problem_kwargs) -> FitProblem:
    """Synthesize the standard fit input at a truth value.

    One Rabi chevron per microwave transition (windowed around each
    transition frequency), detuned single-frequency Ramsey scans of the
    broker and green transitions, and one long-delay Ramsey scan per
    transition.  The chevrons pin the drive amplitudes and hyperfine
    scales; the short Ramsey fringes resolve the 1B beat; the long
    fringes amplify sub-kilohertz transition-frequency errors that the
    chevrons cannot see, which is what separates the strain from the
    transverse hyperfine scale (their level shifts are otherwise nearly
    proportional).  Optional proportional Gaussian noise is added to
    every point.  The problem's initial point defaults to the truth.
    """
    theta = theta or FitParams.reference()
    params, field, (ax, az) = theta.to_model()
    engine = dynamics._Engine(params, field)
    rng = np.random.default_rng(seed)
    specs, data = [], []
    spans = {"broker": 620e-9, "memory": 900e-9, "broker_m1": 620e-9}
    for key in ("broker", "memory", "broker_m1"):
        nu0 = engine.transition_frequency(key)
        freqs = tuple(nu0 + np.linspace(-8e6, 8e6, n_freq))
        times = tuple(np.linspace(20e-9, spans[key], n_time))
        specs.append(ExperimentSpec("rabi", key, freqs, times, label=key))
    for key, detune in (("broker", 3.0e6), ("broker_m1", 2.5e6)):
        nu0 = engine.transition_frequency(key)
        pi_half = 0.5 * engine.pi_time(key, ax, az)
        nu = nu0 + detune
        delays = _period_aligned(np.linspace(0.0, 6.0e-6, n_delay), nu)
        specs.append(ExperimentSpec("ramsey", key, (nu,), delays,
                                    pi_half_s=pi_half, label=f"{key}-ramsey"))
    for key, detune in (("broker", 3.0e6), ("memory", 2.5e6),
                        ("broker_m1", 2.5e6)):
        nu0 = engine.transition_frequency(key)
        pi_half = 0.5 * engine.pi_time(key, ax, az)
        nu = nu0 + detune
        delays = _period_aligned(np.linspace(0.0, long_delay_s, n_long), nu)
        specs.append(ExperimentSpec("ramsey", key, (nu,), delays,
                                    pi_half_s=pi_half, label=f"{key}-ramsey-long"))
    for spec in specs:
        sig = simulate_experiment(theta, spec).signal
        if noise_rel > 0:
            sig = sig + noise_rel * rng.standard_normal(sig.shape)
        data.append(sig)
    problem_kwargs.setdefault("initial", theta)
    return FitProblem(tuple(specs), tuple(data), **problem_kwargs)


__all__ = [
    "FIT_PARAM_NAMES", "FitParams", "ExperimentSpec", "simulate_experiment",
    "FitProblem", "FitResult", "fit_parameters", "derived_transitions",
    "estimate_transition_frequency", "calibrate_initial",
    "save_signal_csv", "load_signal_csv", "reference_problem",
]
