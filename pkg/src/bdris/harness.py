"""Experiment runner: flat-text configs, seeded Monte-Carlo trials, CSV output.

Config format: ``key = value`` lines.  Blank lines are skipped and anything
after ``#`` is a comment.  ``[section]`` headers are allowed for grouping but
keys live in one global namespace.  Lists are comma-separated.  Unknown keys,
duplicate keys, and malformed values are rejected with the offending line
number.

Example::

    experiment = rate_vs_snr       # rate_vs_snr | direct_link_sweep |
    trials = 200                   # qstem_sweep | m_sweep | det_family
    master_seed = 42

    [params]
    n_t = 4
    n_r = 4
    m = 16

    [grids]
    snr_grid_db = 0, 10, 20, 30

Trial t draws its generator seed from a SplitMix64 hash of
(master_seed, t), so runs are byte-identical for a given config regardless
of the thread count.
"""

from __future__ import annotations

import csv
import dataclasses
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import designs, metrics, qstem
from .channel import (
    ChannelParams,
    ChannelSet,
    Geometry,
    LinkBudget,
    budget_for_reference_snr,
    build_channel_set,
    derive_seed,
)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


EXPERIMENTS = ("rate_vs_snr", "direct_link_sweep", "qstem_sweep", "m_sweep", "det_family")

# Designs a config may request; det_family and qstem_sweep emit fixed rows.
SELECTABLE_DESIGNS = (
    "max_det_symmetric",
    "max_det_phase_corrected",
    "unitary_baseline",
    "random_symmetric",
    "identity",
    "no_ris",
)

_DEFAULT_DESIGNS = {
    "rate_vs_snr": ("unitary_baseline", "max_det_symmetric"),
    "direct_link_sweep": ("max_det_symmetric", "max_det_phase_corrected", "random_symmetric"),
    "m_sweep": ("unitary_baseline", "max_det_symmetric"),
    "qstem_sweep": (),
    "det_family": (),
}

_DEFAULT_SNR_GRID = {
    "rate_vs_snr": (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0),
    "direct_link_sweep": (10.0,),
    "qstem_sweep": (10.0,),
    "m_sweep": (10.0,),
    "det_family": (0.0,),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    geometry: Geometry
    params: ChannelParams
    snr_grid_db: tuple
    direct_scale_grid: tuple
    q_grid: tuple
    m_grid: tuple
    phi_grid: tuple
    trials: int
    master_seed: int
    designs: tuple
    output_path: str
    direct_blocked: bool
    apply_path_loss: bool
    snr_mode: str
    z0: float


@dataclass(frozen=True)
class ResultRecord:
    experiment: str
    trial: int
    design: str
    sweep_value: float
    rate_bits: float | None
    abs_det: float | None
    d_max: float | None
    rate_gap_bound_bits: float | None
    qstem_residual: float | None = None
    sigma_min_h: float | None = None
    error: str = ""


CSV_COLUMNS = (
    "experiment",
    "trial",
    "design",
    "sweep_value",
    "rate_bits",
    "abs_det",
    "d_max",
    "rate_gap_bound_bits",
    "qstem_residual",
    "sigma_min_h",
    "error",
)


# ---------------------------------------------------------------------------
# Config parsing


def _parse_int(s):
    return int(s, 0)


def _parse_float(s):
    return float(s)


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _split_list(s):
    items = [t.strip() for t in s.split(",")]
    if any(not t for t in items):
        raise ValueError("empty list item")
    return items


def _parse_floats(s):
    return tuple(float(t) for t in _split_list(s))


def _parse_ints(s):
    return tuple(int(t) for t in _split_list(s))


def _parse_vec3(s):
    v = _parse_floats(s)
    if len(v) != 3:
        raise ValueError(f"expected 3 coordinates, got {len(v)}")
    return v


def _parse_words(s):
    return tuple(t.lower() for t in _split_list(s))


def _parse_str(s):
    return s


_KEY_PARSERS = {
    "experiment": _parse_str,
    "trials": _parse_int,
    "master_seed": _parse_int,
    "output_path": _parse_str,
    "designs": _parse_words,
    "tx_pos": _parse_vec3,
    "ris_pos": _parse_vec3,
    "rx_pos": _parse_vec3,
    "n_t": _parse_int,
    "n_r": _parse_int,
    "m": _parse_int,
    "rician_k": _parse_float,
    "alpha_ris": _parse_float,
    "alpha_direct": _parse_float,
    "direct_scale": _parse_float,
    "carrier_wavelength": _parse_float,
    "snr_grid_db": _parse_floats,
    "direct_scale_grid": _parse_floats,
    "q_grid": _parse_ints,
    "m_grid": _parse_ints,
    "phi_grid": _parse_floats,
    "direct_blocked": _parse_bool,
    "apply_path_loss": _parse_bool,
    "snr_mode": _parse_str,
    "z0": _parse_float,
}


def _scan(text):
    values = {}
    lines = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"line {lineno}: malformed section header {line!r}")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in _KEY_PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(
                f"line {lineno}: duplicate key {key!r} (first set on line {lines[key]})"
            )
        try:
            values[key] = _KEY_PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: invalid value for {key!r}: {exc}") from exc
        lines[key] = lineno
    return values


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document, filling scenario defaults."""
    values = _scan(text)
    if "experiment" not in values:
        raise ConfigError("missing required key 'experiment'")
    experiment = values.pop("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")

    def take(key, default):
        return values.pop(key, default)

    try:
        geometry = Geometry(
            tx_pos=take("tx_pos", (0.0, 0.0, 1.5)),
            ris_pos=take("ris_pos", (5.0, 3.0, 3.0)),
            rx_pos=take("rx_pos", (50.0, 0.0, 1.5)),
        )
        params = ChannelParams(
            n_t=take("n_t", 4),
            n_r=take("n_r", 4),
            m=take("m", 16),
            rician_k=take("rician_k", 2.0),
            alpha_ris=take("alpha_ris", 2.0),
            alpha_direct=take("alpha_direct", 4.0),
            direct_scale=take("direct_scale", 1.0),
            carrier_wavelength=take("carrier_wavelength", 0.1),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    unit_variance_default = experiment in ("m_sweep", "det_family")
    config = ExperimentConfig(
        experiment=experiment,
        geometry=geometry,
        params=params,
        snr_grid_db=take("snr_grid_db", _DEFAULT_SNR_GRID[experiment]),
        direct_scale_grid=take("direct_scale_grid", (1e-3, 1.0, 20.0)),
        q_grid=take("q_grid", tuple(range(1, 11))),
        m_grid=take("m_grid", (16, 64)),
        phi_grid=take("phi_grid", tuple(np.linspace(0.0, np.pi / 2, 31))),
        trials=take("trials", 200),
        master_seed=take("master_seed", 0),
        designs=take("designs", _DEFAULT_DESIGNS[experiment]),
        output_path=take("output_path", "results.csv"),
        direct_blocked=take("direct_blocked", experiment != "direct_link_sweep"),
        apply_path_loss=take("apply_path_loss", not unit_variance_default),
        snr_mode=take("snr_mode", "rho" if unit_variance_default else "reference"),
        z0=take("z0", 50.0),
    )
    assert not values
    _validate(config)
    return config


def _validate(config: ExperimentConfig):
    if config.trials < 1:
        raise ConfigError("trials must be >= 1")
    if config.snr_mode not in ("reference", "rho"):
        raise ConfigError("snr_mode must be 'reference' or 'rho'")
    if config.z0 <= 0:
        raise ConfigError("z0 must be positive")
    if not config.snr_grid_db:
        raise ConfigError("snr_grid_db must not be empty")

    exp = config.experiment
    if exp in ("qstem_sweep", "det_family"):
        if config.designs:
            raise ConfigError(f"designs are fixed for {exp}; remove the 'designs' key")
    else:
        unknown = [d for d in config.designs if d not in SELECTABLE_DESIGNS]
        if unknown:
            raise ConfigError(f"unknown designs {unknown}; choose from {SELECTABLE_DESIGNS}")
        if not config.designs:
            raise ConfigError("designs must not be empty")
        if "max_det_phase_corrected" in config.designs and config.direct_blocked:
            raise ConfigError("max_det_phase_corrected requires direct_blocked = false")

    if exp == "direct_link_sweep":
        if config.direct_blocked:
            raise ConfigError("direct_link_sweep requires direct_blocked = false")
        if not config.direct_scale_grid:
            raise ConfigError("direct_scale_grid must not be empty")
    if exp == "qstem_sweep":
        if not config.q_grid:
            raise ConfigError("q_grid must not be empty")
        bad = [q for q in config.q_grid if not 1 <= q <= config.params.m]
        if bad:
            raise ConfigError(f"q values {bad} outside [1, m={config.params.m}]")
    if exp == "m_sweep":
        if not config.m_grid:
            raise ConfigError("m_grid must not be empty")
        if any(m < 1 for m in config.m_grid):
            raise ConfigError("m_grid entries must be >= 1")
    if exp == "det_family":
        if not config.phi_grid:
            raise ConfigError("phi_grid must not be empty")
        if min(config.params.n_t, config.params.n_r) < 2:
            raise ConfigError("det_family needs at least 2 spatial streams (r >= 2)")


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# Experiment execution


def _rho_for(config, channels, snr_db):
    if config.snr_mode == "reference":
        return budget_for_reference_snr(channels, snr_db).rho
    return 10.0 ** (snr_db / 10.0)


def _ris_abs_det(channels, theta):
    return metrics.abs_det(channels.f @ theta @ channels.g.conj().T)


def _design_theta(design, channels, trial_seed):
    """Scattering matrix for a named design; None encodes the no-RIS row."""
    if design == "max_det_symmetric":
        return designs.solve_maxdet(channels)[0].theta
    if design == "unitary_baseline":
        return designs.unitary_baseline(channels).theta
    if design == "random_symmetric":
        return designs.random_symmetric_unitary(channels.m, derive_seed(trial_seed, 101)).theta
    if design == "identity":
        return np.eye(channels.m, dtype=complex)
    if design == "no_ris":
        return None
    raise ValueError(f"unknown design {design!r}")


def _record_for(config, channels, trial, design, sweep_value, rho, trial_seed, dmax, sf, sg,
                cache, qstem_residual=None):
    try:
        if design == "max_det_phase_corrected":
            if "max_det_symmetric" not in cache:
                cache["max_det_symmetric"] = _design_theta("max_det_symmetric", channels, trial_seed)
            base = designs.ScatteringMatrix.from_theta(
                cache["max_det_symmetric"], "max_det_symmetric"
            )
            _, corrected = designs.phase_correction(
                channels, base, LinkBudget.from_rho(rho, channels.n_t)
            )
            theta = corrected.theta
        else:
            if design not in cache:
                cache[design] = _design_theta(design, channels, trial_seed)
            theta = cache[design]

        if theta is None:
            h = channels.h_direct
            if h is None:
                h = np.zeros((channels.n_r, channels.n_t), dtype=complex)
            det = 0.0
        else:
            h = metrics.equivalent_channel(channels, theta)
            det = _ris_abs_det(channels, theta)
        svals = np.linalg.svd(h, compute_uv=False)
        rate = float(np.sum(np.log2(1.0 + rho * svals**2)))
        return ResultRecord(
            experiment=config.experiment,
            trial=trial,
            design=design,
            sweep_value=float(sweep_value),
            rate_bits=rate,
            abs_det=det,
            d_max=dmax,
            rate_gap_bound_bits=metrics.rate_gap_bound(sf, sg, rho),
            qstem_residual=qstem_residual,
            sigma_min_h=float(svals[-1]),
        )
    except Exception as exc:  # per-record error column instead of aborting the run
        return ResultRecord(
            experiment=config.experiment,
            trial=trial,
            design=design,
            sweep_value=float(sweep_value),
            rate_bits=None,
            abs_det=None,
            d_max=dmax,
            rate_gap_bound_bits=None,
            error=f"{type(exc).__name__}: {exc}",
        )


def _trial_setup(config, channels):
    r = min(channels.n_t, channels.n_r)
    sf = np.linalg.svd(channels.f, compute_uv=False)[:r]
    sg = np.linalg.svd(channels.g, compute_uv=False)[:r]
    return metrics.d_max(channels), sf, sg


def _with_reference_rows(designs_list, blocked):
    # identity and no-RIS reference rows ride along whenever the direct link exists
    if blocked:
        return list(designs_list)
    out = list(designs_list)
    for forced in ("identity", "no_ris"):
        if forced not in out:
            out.append(forced)
    return out


def _trial_rate_vs_snr(config, trial):
    seed = derive_seed(config.master_seed, trial)
    channels = build_channel_set(
        config.geometry, config.params, seed,
        blocked=config.direct_blocked, apply_path_loss=config.apply_path_loss,
    )
    dmax, sf, sg = _trial_setup(config, channels)
    design_list = _with_reference_rows(config.designs, config.direct_blocked)
    cache = {}
    records = []
    for snr_db in config.snr_grid_db:
        rho = _rho_for(config, channels, snr_db)
        for design in design_list:
            records.append(_record_for(config, channels, trial, design, snr_db, rho,
                                       seed, dmax, sf, sg, cache))
    return records


def _trial_direct_link_sweep(config, trial):
    seed = derive_seed(config.master_seed, trial)
    channels = build_channel_set(
        config.geometry, config.params, seed,
        blocked=False, apply_path_loss=config.apply_path_loss,
    )
    dmax, sf, sg = _trial_setup(config, channels)
    rho = _rho_for(config, channels, config.snr_grid_db[0])
    design_list = _with_reference_rows(config.designs, blocked=False)
    records = []
    for scale in config.direct_scale_grid:
        scaled = dataclasses.replace(channels, h_direct=scale * channels.h_direct)
        cache = {}
        for design in design_list:
            records.append(_record_for(config, scaled, trial, design, scale, rho,
                                       seed, dmax, sf, sg, cache))
    return records


def _trial_qstem_sweep(config, trial):
    seed = derive_seed(config.master_seed, trial)
    channels = build_channel_set(
        config.geometry, config.params, seed,
        blocked=True, apply_path_loss=config.apply_path_loss,
    )
    dmax, sf, sg = _trial_setup(config, channels)
    rho = _rho_for(config, channels, config.snr_grid_db[0])
    bound = metrics.rate_gap_bound(sf, sg, rho)

    def success(design, sweep_value, theta, residual=None):
        h = metrics.equivalent_channel(channels, theta)
        svals = np.linalg.svd(h, compute_uv=False)
        return ResultRecord(
            experiment=config.experiment, trial=trial, design=design,
            sweep_value=float(sweep_value),
            rate_bits=float(np.sum(np.log2(1.0 + rho * svals**2))),
            abs_det=_ris_abs_det(channels, theta),
            d_max=dmax, rate_gap_bound_bits=bound,
            qstem_residual=residual, sigma_min_h=float(svals[-1]),
        )

    def failure(design, sweep_value, exc):
        return ResultRecord(
            experiment=config.experiment, trial=trial, design=design,
            sweep_value=float(sweep_value), rate_bits=None, abs_det=None,
            d_max=dmax, rate_gap_bound_bits=None,
            error=f"{type(exc).__name__}: {exc}",
        )

    records = []
    try:
        lowrank, frame = designs.solve_maxdet(channels)
    except Exception as exc:
        records.append(failure("max_det_symmetric", 0.0, exc))
        records.append(failure("max_det_fully_connected", float(config.params.m), exc))
        for q in config.q_grid:
            records.append(failure("qstem", q, exc))
        return records

    records.append(success("max_det_symmetric", 0.0, lowrank.theta))
    try:
        full = qstem.complete_to_unitary(frame)
        _, b_full = qstem.cayley_with_phase_fallback(full.theta, config.z0)
        records.append(success("max_det_fully_connected", float(config.params.m),
                               qstem.b_to_theta(b_full).theta))
    except Exception as exc:
        records.append(failure("max_det_fully_connected", float(config.params.m), exc))
    for q in config.q_grid:
        try:
            b, residual = qstem.synthesize_qstem(frame, q, config.z0)
            records.append(success("qstem", q, qstem.b_to_theta(b).theta, residual))
        except Exception as exc:
            records.append(failure("qstem", q, exc))
    return records


def _trial_m_sweep(config, trial):
    seed = derive_seed(config.master_seed, trial)
    records = []
    for m in config.m_grid:
        params = dataclasses.replace(config.params, m=m)
        channels = build_channel_set(
            config.geometry, params, derive_seed(seed, 1000 + m),
            blocked=True, apply_path_loss=config.apply_path_loss,
        )
        dmax, sf, sg = _trial_setup(config, channels)
        rho = _rho_for(config, channels, config.snr_grid_db[0])
        cache = {}
        for design in config.designs:
            records.append(_record_for(config, channels, trial, design, m, rho,
                                       seed, dmax, sf, sg, cache))
    return records


def _planar_rotation(r, phi):
    u = np.eye(r, dtype=complex)
    u[0, 0] = u[1, 1] = np.cos(phi)
    u[0, 1] = -np.sin(phi)
    u[1, 0] = np.sin(phi)
    return u


def _trial_det_family(config, trial):
    seed = derive_seed(config.master_seed, trial)
    channels = build_channel_set(
        config.geometry, config.params, seed,
        blocked=True, apply_path_loss=config.apply_path_loss,
    )
    dmax, sf, sg = _trial_setup(config, channels)
    rho = _rho_for(config, channels, config.snr_grid_db[0])
    r = min(channels.n_t, channels.n_r)
    cache = {}
    records = [
        _record_for(config, channels, trial, "max_det_symmetric", 0.0, rho,
                    seed, dmax, sf, sg, cache),
        _record_for(config, channels, trial, "unitary_baseline", 0.0, rho,
                    seed, dmax, sf, sg, cache),
    ]
    for phi in config.phi_grid:
        theta = designs.rotated_family(channels, _planar_rotation(r, phi)).theta
        records.append(_record_for(config, channels, trial, "rotated", phi, rho,
                                   seed, dmax, sf, sg, {"rotated": theta}))
    return records


_TRIAL_RUNNERS = {
    "rate_vs_snr": _trial_rate_vs_snr,
    "direct_link_sweep": _trial_direct_link_sweep,
    "qstem_sweep": _trial_qstem_sweep,
    "m_sweep": _trial_m_sweep,
    "det_family": _trial_det_family,
}


def run_experiment(config: ExperimentConfig, threads: int = 1) -> list[ResultRecord]:
    """Run all trials of the configured experiment.

    Trials own independent derived seeds and may run concurrently; the
    returned record list is always in canonical trial-major order, so output
    does not depend on the thread count.
    """
    runner = _TRIAL_RUNNERS[config.experiment]
    trials = range(config.trials)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_trial = list(pool.map(lambda t: runner(config, t), trials))
    else:
        per_trial = [runner(config, t) for t in trials]
    records = [rec for batch in per_trial for rec in batch]
    records.sort(key=lambda rec: rec.trial)  # stable: keeps within-trial order
    return records


# ---------------------------------------------------------------------------
# Output


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def emit_csv(records, path) -> None:
    """Write records as UTF-8 RFC-4180 CSV with 17-significant-digit floats."""
    if not records:
        raise ValueError("no records to write")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write_csv(records, fh)


def _write_csv(records, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow([_fmt(getattr(rec, col)) for col in CSV_COLUMNS])


def csv_bytes(records) -> bytes:
    buf = io.StringIO()
    _write_csv(records, buf)
    return buf.getvalue().encode("utf-8")


def write_susceptance_csv(b: "qstem.SusceptanceMatrix", path) -> None:
    """Susceptance matrix as CSV with a '# qstem q=<q> M=<M> Z0=<z0>' header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# qstem q={b.q} M={b.m} Z0={_fmt(float(b.z0))}\n")
        writer = csv.writer(fh, lineterminator="\n")
        for row in b.b:
            writer.writerow([format(x, ".17g") for x in row])


def m_sweep_summary(records) -> dict[int, float]:
    """Per-M mean of sigma_min(H) / M for the Max-Det rows of an m_sweep run."""
    if not records or any(rec.experiment != "m_sweep" for rec in records):
        raise ValueError("summary requires records from an m_sweep experiment")
    groups: dict[int, list[float]] = {}
    for rec in records:
        if rec.design == "max_det_symmetric" and rec.sigma_min_h is not None:
            groups.setdefault(int(rec.sweep_value), []).append(rec.sigma_min_h)
    return {m: float(np.mean(vals)) / m for m, vals in sorted(groups.items())}
