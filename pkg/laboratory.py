"""Command-line front end: JSON run configurations in, CSV tables and a JSON sidecar out."""
import json
import logging
import os
import sys
import time
from argparse import ArgumentParser
from dataclasses import asdict, dataclass, field
from multiprocessing import Pool
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import wandb
from tqdm import tqdm

from analytic import find_scale_free_ep, scan_scale_free
from dynamics import (
    dirac_probability,
    evolve_ode,
    export_trajectory,
    propagator_element,
    spacing_analysis,
    xi_frame,
)
from effective import StarkLadder, build_stark_ladder, continuum_band, coupling_row, wannier_basis
from errors import VALIDATION_ERRORS, ConfigParseError, ConfigValidationError
from fgh import PRESETS, ContinuousModel
from spectral import detect_coalescence, fidelity_matrix

__version__ = "0.1.0"

logger = logging.getLogger(__name__)

MODES = ("spectrum-sweep", "fidelity", "effective-couplings", "scale-free", "evolve", "propagator", "spacing")
FLOAT_FORMAT = "%.16e"

# which sweep parameter each mode accepts, keyed by the system it runs on
SWEEP_PARAMETERS = {"model": "kappa", "ladder": "tilt", "scale_free": "ratio"}


@dataclass(frozen=True)
class Sweep:
    parameter: str
    lo: float
    hi: float
    steps: int

    def grid(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.steps)


@dataclass(frozen=True)
class Tolerances:
    fidelity_threshold: float = 0.99
    energy_tol: float = 0.1
    ep_threshold: float = 1e-6
    max_spread: float = 0.2


@dataclass(frozen=True)
class EvolveSpec:
    t_max: float = 10.0
    samples: int = 1001
    initial_site: Optional[int] = None
    initial_state: Optional[Tuple[complex, ...]] = None
    frame: str = "xi"


@dataclass(frozen=True)
class ScaleFreeSpec:
    sizes: Tuple[int, ...] = (5, 7, 15)
    ratio_lo: float = 1.0
    ratio_hi: float = 2.0


@dataclass(frozen=True)
class PropagatorSpec:
    source: int = 0
    sites: Tuple[int, ...] = (-2, -1, 0, 1, 2)
    t_max: float = 3.0
    samples: int = 301


@dataclass(frozen=True)
class RunConfig:
    mode: str
    preset: Optional[str] = None
    model: Optional[ContinuousModel] = None
    ladder: Optional[StarkLadder] = None
    sweep: Optional[Sweep] = None
    output_path: str = "results"
    tolerances: Tolerances = field(default_factory=Tolerances)
    evolve: Optional[EvolveSpec] = None
    scale_free: Optional[ScaleFreeSpec] = None
    propagator: Optional[PropagatorSpec] = None


TOP_KEYS = {"mode", "preset", "model", "ladder", "sweep", "output_path", "tolerances",
            "evolve", "scale_free", "propagator"}
MODEL_KEYS = {"length", "n_grid", "gamma", "omega", "b", "a", "kappa", "hbar", "mass"}
LADDER_KEYS = {"size", "hopping", "tilt"}
SWEEP_KEYS = {"parameter", "lo", "hi", "steps"}
TOLERANCE_KEYS = set(Tolerances.__dataclass_fields__)
EVOLVE_KEYS = set(EvolveSpec.__dataclass_fields__)
SCALE_FREE_KEYS = set(ScaleFreeSpec.__dataclass_fields__)
PROPAGATOR_KEYS = set(PropagatorSpec.__dataclass_fields__)


# helpers functions
def _unknown(section: dict, allowed: set, where: str, violations: list):
    for key in sorted(set(section) - allowed):
        violations.append(f"unknown key '{where}{key}'")


def _section(raw: dict, key: str, allowed: set, violations: list) -> Optional[dict]:
    value = raw.get(key)
    if value is None:
        return None
    if not isinstance(value, dict):
        violations.append(f"'{key}' must be an object")
        return None
    _unknown(value, allowed, f"{key}.", violations)
    return {k: v for k, v in value.items() if k in allowed}


def _complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        re, im = value
        return complex(float(re), float(im))
    return complex(float(value))


def _build(factory, kwargs: dict, where: str, violations: list):
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as err:
        violations.append(f"{where}: {err}")
        return None


def _json_line(text: str, key: str) -> Optional[int]:
    needle = f'"{key}"'
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return None


def parse_config(text: str, overrides: Optional[dict] = None) -> RunConfig:
    """Parse and validate a JSON run configuration; every violation is reported at once."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigParseError(err.msg, line=err.lineno) from err
    if not isinstance(raw, dict):
        raise ConfigParseError("configuration must be a JSON object", line=1)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "kappa":
            raw.setdefault("model", {})
            raw["model"]["kappa"] = value
        else:
            raw[key] = value

    violations = []
    for key in sorted(set(raw) - TOP_KEYS):
        line = _json_line(text, key)
        violations.append(f"unknown key '{key}'" + (f" (line {line})" if line else ""))

    mode = raw.get("mode")
    if mode not in MODES:
        violations.append(f"mode must be one of {MODES}, got {mode!r}")

    preset = raw.get("preset")
    model = None
    model_section = _section(raw, "model", MODEL_KEYS, violations)
    if preset is not None and preset not in PRESETS:
        violations.append(f"unknown preset {preset!r}; available {sorted(PRESETS)}")
    elif preset is not None or model_section is not None:
        base = asdict(PRESETS[preset]) if preset is not None else {}
        base.update(model_section or {})
        model = _build(ContinuousModel, base, "model", violations)

    ladder = None
    ladder_section = _section(raw, "ladder", LADDER_KEYS, violations)
    if ladder_section is not None:
        try:
            ladder_section = {k: (_complex(v) if k in ("hopping", "tilt") else v) for k, v in ladder_section.items()}
        except (TypeError, ValueError):
            violations.append("ladder.hopping and ladder.tilt must be numbers or [re, im] pairs")
        else:
            ladder = _build(StarkLadder, ladder_section, "ladder", violations)

    sweep = None
    sweep_section = _section(raw, "sweep", SWEEP_KEYS, violations)
    if sweep_section is not None:
        missing = SWEEP_KEYS - set(sweep_section)
        if missing:
            violations.append(f"sweep is missing {sorted(missing)}")
        else:
            steps = sweep_section["steps"]
            sweep_ok = True
            if not isinstance(steps, int) or steps < 2:
                violations.append(f"sweep.steps must be an integer >= 2, got {steps!r}")
                sweep_ok = False
            if sweep_section["parameter"] not in SWEEP_PARAMETERS.values():
                violations.append(f"sweep.parameter must be one of {sorted(SWEEP_PARAMETERS.values())}")
                sweep_ok = False
            if sweep_ok:
                sweep = Sweep(sweep_section["parameter"], float(sweep_section["lo"]),
                              float(sweep_section["hi"]), int(steps))

    tolerances = _build(Tolerances, _section(raw, "tolerances", TOLERANCE_KEYS, violations) or {},
                        "tolerances", violations)

    evolve = None
    evolve_section = _section(raw, "evolve", EVOLVE_KEYS, violations)
    if evolve_section is not None:
        state = evolve_section.get("initial_state")
        if state is not None:
            evolve_section["initial_state"] = tuple(_complex(v) for v in state)
        evolve = _build(EvolveSpec, evolve_section, "evolve", violations)

    scale_free = None
    scale_free_section = _section(raw, "scale_free", SCALE_FREE_KEYS, violations)
    if scale_free_section is not None:
        if "sizes" in scale_free_section:
            scale_free_section["sizes"] = tuple(int(n) for n in scale_free_section["sizes"])
        scale_free = _build(ScaleFreeSpec, scale_free_section, "scale_free", violations)

    propagator = None
    propagator_section = _section(raw, "propagator", PROPAGATOR_KEYS, violations)
    if propagator_section is not None:
        if "sites" in propagator_section:
            propagator_section["sites"] = tuple(int(n) for n in propagator_section["sites"])
        propagator = _build(PropagatorSpec, propagator_section, "propagator", violations)

    config = RunConfig(
        mode=mode,
        preset=preset,
        model=model,
        ladder=ladder,
        sweep=sweep,
        output_path=str(raw.get("output_path", "results")),
        tolerances=tolerances or Tolerances(),
        evolve=evolve,
        scale_free=scale_free,
        propagator=propagator,
    )
    violations.extend(_mode_violations(config, raw))
    if violations:
        raise ConfigValidationError(violations)
    return config


def _mode_violations(config: RunConfig, raw: dict) -> list:
    problems = []
    mode = config.mode
    if mode in ("fidelity", "effective-couplings") and config.model is None and "model" not in raw \
            and config.preset is None:
        problems.append(f"mode {mode} needs a continuum model (preset or model section)")
    if mode in ("evolve", "propagator", "spacing") and config.ladder is None and "ladder" not in raw:
        problems.append(f"mode {mode} needs a ladder section")
    if mode == "spectrum-sweep":
        if config.model is None and config.ladder is None and not {"model", "ladder", "preset"} & set(raw):
            problems.append("mode spectrum-sweep needs a continuum model or a ladder")
        if "sweep" not in raw:
            problems.append("mode spectrum-sweep needs a sweep section")
    if mode == "scale-free" and "scale_free" not in raw:
        problems.append("mode scale-free needs a scale_free section")
    if mode == "evolve" and config.evolve is not None:
        spec = config.evolve
        if (spec.initial_site is None) == (spec.initial_state is None):
            problems.append("evolve needs exactly one of initial_site and initial_state")
        if spec.frame not in ("xi", "h"):
            problems.append(f"evolve.frame must be 'xi' or 'h', got {spec.frame!r}")
        if spec.samples < 2 or spec.t_max <= 0:
            problems.append("evolve needs t_max > 0 and samples >= 2")
        if config.ladder is not None:
            n = int(config.ladder.size)
            if spec.initial_site is not None and not 1 <= spec.initial_site <= n:
                problems.append(f"evolve.initial_site must lie in [1, {n}]")
            if spec.initial_state is not None and len(spec.initial_state) != n:
                problems.append(f"evolve.initial_state must have {n} entries")
    if mode == "evolve" and "evolve" not in raw:
        problems.append("mode evolve needs an evolve section")
    if mode == "propagator" and "propagator" not in raw:
        problems.append("mode propagator needs a propagator section")
    if config.sweep is not None:
        system = {"scale-free": "scale_free"}.get(mode, "ladder" if config.ladder is not None else "model")
        expected = SWEEP_PARAMETERS[system]
        if config.sweep.parameter != expected:
            problems.append(f"mode {mode} sweeps '{expected}', got '{config.sweep.parameter}'")
    return problems


def _encode(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, tuple):
        return [_encode(v) for v in value]
    return value


def config_to_dict(config: RunConfig) -> dict:
    out = {"mode": config.mode, "output_path": config.output_path}
    if config.preset is not None:
        out["preset"] = config.preset
    for key in ("model", "ladder", "sweep", "tolerances", "evolve", "scale_free", "propagator"):
        value = getattr(config, key)
        if value is not None:
            out[key] = {k: _encode(v) for k, v in asdict(value).items() if v is not None}
    return out


def emit_config(config: RunConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2, sort_keys=True)


# per-point pipelines; each returns (rows, report)

def _ladder_matrix(ladder: StarkLadder, tilt: Optional[float] = None) -> np.ndarray:
    if tilt is not None:
        ladder = StarkLadder(ladder.size, ladder.hopping, tilt * ladder.hopping)
    return build_stark_ladder(ladder)


def _sorted_values(h: np.ndarray) -> np.ndarray:
    values = np.linalg.eigvals(h)
    return values[np.lexsort((values.imag, values.real))]


def _spectrum_point(config: RunConfig, value: float):
    if config.ladder is not None:
        values = _sorted_values(_ladder_matrix(config.ladder, value))
        name = "tilt"
    else:
        band = continuum_band(config.model.with_kappa(value), config.tolerances.ep_threshold)
        values = band.values
        name = "kappa"
    rows = [{name: value, "k": k, "re_E": e.real, "im_E": e.imag} for k, e in enumerate(values)]
    return rows, None


def _fidelity_point(config: RunConfig, value: float):
    tol = config.tolerances
    band = continuum_band(config.model.with_kappa(value), tol.ep_threshold)
    f = fidelity_matrix(band)
    report = detect_coalescence(f, tol.fidelity_threshold, parameter_tag=value,
                                values=band.values, energy_tol=tol.energy_tol)
    q, q_prime = np.indices(f.shape)
    rows = [{"kappa": value, "q": int(a), "q_prime": int(b), "value": float(v)}
            for a, b, v in zip(q.ravel(), q_prime.ravel(), f.ravel())]
    return rows, {"kappa": value, "clusters": report.clusters, "order_estimate": report.order_estimate}


def _couplings_point(config: RunConfig, value: float):
    model = config.model.with_kappa(value)
    return [coupling_row(model, wannier_basis(model), config.tolerances.max_spread)], None


def _spacing_point(config: RunConfig, value: float):
    values = _sorted_values(xi_frame(_ladder_matrix(config.ladder, value)))
    spacing = spacing_analysis(values)
    return [{
        "F_over_J": value,
        "mean_gap": spacing.mean_gap,
        "max_gap_dev": spacing.max_gap_dev,
        "relative_dev": spacing.max_gap_dev / abs(spacing.mean_gap) if spacing.mean_gap else np.inf,
        "axis": spacing.axis,
    }], None


def _scale_free_point(config: RunConfig, size: int):
    spec = config.scale_free
    steps = config.sweep.steps if config.sweep is not None else 11
    lo, hi = (config.sweep.lo, config.sweep.hi) if config.sweep is not None else (spec.ratio_lo, spec.ratio_hi)
    scan = scan_scale_free(size, np.linspace(lo, hi, steps))
    scan.merge_points.append(find_scale_free_ep(size, spec.ratio_lo, spec.ratio_hi))
    return scan.to_frame().to_dict("records"), {"N": size, "merge_ratio": scan.merge_points[0]}


POINT_PIPELINES = {
    "spectrum-sweep": _spectrum_point,
    "fidelity": _fidelity_point,
    "effective-couplings": _couplings_point,
    "spacing": _spacing_point,
    "scale-free": _scale_free_point,
}


def _evaluate(task):
    config, value = task
    return POINT_PIPELINES[config.mode](config, value)


def sweep_points(config: RunConfig) -> Sequence[float]:
    if config.mode == "scale-free":
        return list(config.scale_free.sizes)
    if config.sweep is not None:
        return [float(v) for v in config.sweep.grid()]
    if config.ladder is not None:
        return [config.ladder.ratio]
    return [config.model.kappa]


def _initial_state(config: RunConfig) -> np.ndarray:
    spec = config.evolve
    n = int(config.ladder.size)
    if spec.initial_state is not None:
        return np.array(spec.initial_state, dtype=complex)
    psi0 = np.zeros(n, dtype=complex)
    psi0[spec.initial_site - 1] = 1.0
    return psi0


def _run_evolve(config: RunConfig, csv_path: str) -> dict:
    spec = config.evolve
    h = build_stark_ladder(config.ladder)
    if spec.frame == "xi":
        h = xi_frame(h)
    psi0 = _initial_state(config)
    result = evolve_ode(h, psi0, np.linspace(0.0, spec.t_max, spec.samples))
    export_trajectory(result, csv_path)
    return {"P0": dirac_probability(psi0), "P_final": float(result.dirac_p[-1])}


def _run_propagator(config: RunConfig, csv_path: str) -> dict:
    spec = config.propagator
    J, F = config.ladder.hopping.real, config.ladder.tilt.real
    times = np.linspace(0.0, spec.t_max, spec.samples)
    rows = []
    for t in times:
        values = propagator_element(J, F, t, np.array(spec.sites), spec.source)
        for site, u in zip(spec.sites, values):
            rows.append({"t": t, "n_from": spec.source, "n_to": site, "re_U": u.real, "im_U": u.imag})
    pd.DataFrame(rows).to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)
    return {}


def _run_sweep(config: RunConfig, csv_path: str, jobs: int, tracker=None) -> dict:
    tasks = [(config, value) for value in sweep_points(config)]
    rows, reports = [], []
    if jobs > 1 and len(tasks) > 1:
        with Pool(jobs) as pool:
            # imap keeps the submission order
            outcomes = list(tqdm(pool.imap(_evaluate, tasks), total=len(tasks), desc=config.mode))
    else:
        outcomes = [_evaluate(task) for task in tqdm(tasks, desc=config.mode)]
    for point_rows, report in outcomes:
        rows.extend(point_rows)
        if report is not None:
            reports.append(report)
        if tracker is not None and point_rows:
            tracker({k: v for k, v in point_rows[-1].items() if isinstance(v, (int, float))})
    pd.DataFrame(rows).to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)
    return {"reports": reports} if reports else {}


def _remove_outputs(*paths):
    for path in paths:
        if os.path.exists(path):
            os.remove(path)


def run(config: RunConfig, jobs: int = 1, tracker=None) -> int:
    """Run the configured pipeline; returns 0, 2 (invalid input) or 3 (numerical failure)."""
    os.makedirs(config.output_path, exist_ok=True)
    stem = os.path.join(config.output_path, config.mode)
    csv_path, sidecar_path = f"{stem}.csv", f"{stem}.json"
    start = time.perf_counter()
    try:
        if config.mode == "evolve":
            summary = _run_evolve(config, csv_path)
        elif config.mode == "propagator":
            summary = _run_propagator(config, csv_path)
        else:
            summary = _run_sweep(config, csv_path, jobs, tracker)
    except ArithmeticError as err:
        _remove_outputs(csv_path, sidecar_path)
        logger.error("numerical failure in %s: %s", config.mode, err)
        return 3
    except ValueError as err:
        _remove_outputs(csv_path, sidecar_path)
        logger.error("invalid input for %s: %s", config.mode, err)
        return 2
    except BaseException:
        _remove_outputs(csv_path, sidecar_path)
        raise

    sidecar = {
        "config": config_to_dict(config),
        "version": __version__,
        "wall_time_s": time.perf_counter() - start,
        **summary,
    }
    with open(sidecar_path, "w") as handle:
        json.dump(sidecar, handle, indent=2, default=float)
    logger.info("wrote %s and %s", csv_path, sidecar_path)
    return 0


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=str, default=None, help="path to a JSON run configuration")
    parser.add_argument("--preset", type=str, default=None, help="continuum preset: fig1a, fig1b or fig1c")
    parser.add_argument("--mode", type=str, default=None, choices=MODES, help="pipeline to run")
    parser.add_argument("--kappa", type=float, default=None, help="loss strength, overrides the model")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--seedless", action="store_true", help="no randomness is used anywhere; accepted for scripts")
    parser.add_argument("--logsdir", type=str, default='logs', help="logging directory")
    parser.add_argument("--wandb_project", type=str, default="stark-eps", help="wandb project")
    parser.add_argument("--wandb_mode", type=str, default="disabled", choices=["disabled", "offline", "online"],
                        help="wandb tracking mode")
    parser.add_argument("--log_level", type=str, default="INFO", help="logging level")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    hparams = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, hparams.log_level.upper(), logging.INFO),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")

    if hparams.config is not None:
        with open(hparams.config) as handle:
            text = handle.read()
    else:
        text = "{}"
    overrides = {"mode": hparams.mode, "preset": hparams.preset, "kappa": hparams.kappa, "output_path": hparams.out}
    try:
        config = parse_config(text, overrides)
    except VALIDATION_ERRORS as err:
        logger.error("%s", err)
        return 2

    os.makedirs(hparams.logsdir, exist_ok=True)
    tracking = wandb.init(project=hparams.wandb_project, dir=hparams.logsdir, mode=hparams.wandb_mode,
                          config=config_to_dict(config))
    try:
        code = run(config, jobs=hparams.jobs, tracker=wandb.log)
        wandb.log({"exit_code": code})
    finally:
        tracking.finish()
    return code


if __name__ == "__main__":
    sys.exit(main())
