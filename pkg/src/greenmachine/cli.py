"""Command-line experiment runner.

Every subcommand reads an optional YAML config, writes CSV/JSON into ``--out``
and is reproducible from (config, seed) regardless of ``--threads``.

Exit codes: 0 success, 2 invalid config, 3 I/O or malformed stream,
4 fit or convergence failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from ._rng import child_seed32, ordered_map
from .calibration import correct_stages_sequential, wrap_phase
from .detection import estimate_mean_photon, estimate_transition_matrix
from .errors import (FitFailed, InsufficientData, InvalidArgument, InvalidConfig, MalformedStream,
                     UndefinedEstimate)
from .events import EventStream, decode_event_stream, generate_event_stream
from .infotheory import lowpass_fit, superadditivity_check
from .linkbudget import DEFAULT_REGION, LinkBudgetParams, advantage_region, link
from .optics import GreenMachineConfig, off_slot_fraction, slot_permutation
from .pipeline import PRESETS, gm_pie_both, pie_point_from_tallies, preset, simulate_tallies
from .receivers import RECEIVERS, DolinarConfig, DriftScenario, monte_carlo_pie

log = logging.getLogger("greenmachine")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_FIT = 0, 2, 3, 4
PIE_HEADER = ("receiver", "nbar", "drift_hz", "pie_bpp", "ci_bpp")
LINK_HEADER = ("range_m", "p_r_w", "nbar", "in_region")
HIST_HEADER = ("codeword", "bin_index", "count")


class Config:
    """Dict wrapper whose lookups report the dotted field name on failure."""

    def __init__(self, data, prefix=""):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise InvalidConfig(prefix or "<root>", "expected a mapping")
        self.data = data
        self.prefix = prefix

    def _name(self, key):
        return f"{self.prefix}{key}"

    def section(self, key) -> "Config":
        return Config(self.data.get(key), self._name(key) + ".")

    def get(self, key, kind=float, default=None, required=False):
        if key not in self.data or self.data[key] is None:
            if required:
                raise InvalidConfig(self._name(key), "missing required field")
            return default
        value = self.data[key]
        try:
            if kind is float:
                out = float(value)
                if not np.isfinite(out):
                    raise ValueError
                return out
            if kind is int:
                if isinstance(value, bool) or float(value) != int(float(value)):
                    raise ValueError
                return int(float(value))
            if kind is str:
                if not isinstance(value, str):
                    raise ValueError
                return value
            if kind is bool:
                if not isinstance(value, bool):
                    raise ValueError
                return value
            if kind is list:
                if not isinstance(value, list):
                    raise ValueError
                return value
        except (TypeError, ValueError):
            raise InvalidConfig(self._name(key), f"expected {kind.__name__}, got {value!r}") from None
        raise TypeError(kind)

    def positive(self, key, default=None, kind=float):
        v = self.get(key, kind, default, required=default is None)
        if not v > 0:
            raise InvalidConfig(self._name(key), "must be positive")
        return v

    def grid(self, key, default=None):
        """Float grid given as a list or as {min, max, points} (log-spaced)."""
        raw = self.data.get(key, default)
        if raw is None:
            raise InvalidConfig(self._name(key), "missing required field")
        if isinstance(raw, dict):
            sec = Config(raw, self._name(key) + ".")
            lo, hi = sec.positive("min"), sec.positive("max")
            pts = sec.positive("points", kind=int)
            if hi < lo:
                raise InvalidConfig(self._name(key), "max must be >= min")
            return np.logspace(np.log10(lo), np.log10(hi), pts)
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            raw = [raw]
        if not isinstance(raw, list) or not raw:
            raise InvalidConfig(self._name(key), "expected a non-empty list or {min, max, points}")
        try:
            vals = np.array([float(v) for v in raw])
        except (TypeError, ValueError):
            raise InvalidConfig(self._name(key), "grid entries must be numbers") from None
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise InvalidConfig(self._name(key), "grid entries must be finite and >= 0")
        return vals


def _load_config(path) -> Config:
    if path is None:
        return Config({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidConfig("<file>", f"not valid YAML: {exc}") from None
    return Config(data)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj))


def _fmt(x) -> str:
    return repr(float(x))


def _point_row(p):
    return (p.receiver, _fmt(p.nbar), _fmt(p.drift_rate), _fmt(p.pie), _fmt(p.ci_halfwidth))


def _point_json(p):
    details = {k: v for k, v in p.details.items() if k != "counts"}
    return dict(receiver=p.receiver, nbar=p.nbar, drift_hz=p.drift_rate, pie_bpp=p.pie,
                ci_bpp=p.ci_halfwidth, **details)


def _receivers(cfg: Config, default):
    names = cfg.get("receivers", list, default)
    if not names:
        raise InvalidConfig("receivers", "at least one receiver is required")
    for name in names:
        if not isinstance(name, str) or (name not in RECEIVERS and name.upper() not in PRESETS):
            raise InvalidConfig("receivers", f"unknown receiver {name!r}")
    return names


def _dolinar_cfg(cfg: Config) -> DolinarConfig:
    sec = cfg.section("dolinar")
    conv = sec.get("overlap_convention", str, "paper")
    if conv not in ("paper", "standard"):
        raise InvalidConfig("dolinar.overlap_convention", "must be 'paper' or 'standard'")
    return DolinarConfig(sec.positive("sub_slots", 1000, int), conv)


def _reference(cfg: Config) -> str:
    ref = cfg.get("reference", str, "detector")
    if ref not in ("detector", "input"):
        raise InvalidConfig("reference", "must be 'detector' or 'input'")
    return ref


def _evaluate(task):
    """One sweep point: (receiver, nbar, drift, settings, seed) -> PiePoint."""
    name, nbar, drift_hz, s, seed = task
    if name.upper() in PRESETS or name == "gm":
        key = s["preset"] if name == "gm" else name.upper()
        pipe = preset(key).with_nbar(nbar, s["reference"]).with_drift(drift_hz)
        both = gm_pie_both(pipe, s["frames_per_codeword"], seed)
        main = both[s["reference"]]
        main.receiver = name
        main.details["pie_input_reference"] = both["input"].pie
        main.details["pie_detector_reference"] = both["detector"].pie
        main.details["verdict"] = superadditivity_check(both["detector"])
        return main
    drift = DriftScenario(drift_hz, s["run_duration"], s["symbol_duration"], s["trials"])
    return monte_carlo_pie(name, nbar, drift, seed, 1, s["dolinar"], s["hadamard_order"],
                           s["preset"])


def _sweep_settings(cfg: Config, default_preset: str) -> dict:
    pre = cfg.get("preset", str, default_preset).upper()
    if pre not in PRESETS:
        raise InvalidConfig("preset", f"unknown preset {pre!r}")
    return dict(
        preset=pre,
        reference=_reference(cfg),
        frames_per_codeword=cfg.positive("frames_per_codeword", 20_000, int),
        trials=cfg.positive("trials", 250_000, int),
        run_duration=cfg.positive("run_duration", 50e-3),
        symbol_duration=cfg.positive("symbol_duration", PRESETS[pre]["tau"]),
        hadamard_order=cfg.positive("hadamard_order", 8, int),
        dolinar=_dolinar_cfg(cfg),
    )


def _run_points(tasks, threads):
    try:
        return ordered_map(_evaluate, tasks, threads)
    except InvalidArgument as exc:
        raise InvalidConfig("<parameters>", str(exc)) from None


def run_pie_sweep(cfg: Config, seed: int, out: Path, threads: int) -> int:
    receivers = _receivers(cfg, ["GM4", "homodyne-soft", "heterodyne-bound", "dolinar"])
    nbars = cfg.grid("nbar", {"min": 1e-4, "max": 1e-2, "points": 5})
    if np.any(nbars <= 0):
        raise InvalidConfig("nbar", "values must be positive")
    drift_hz = cfg.get("drift_hz", float, 0.0)
    s = _sweep_settings(cfg, "GM4")
    tasks = [(r, float(nb), drift_hz, s, child_seed32(seed, i, k))
             for k, r in enumerate(receivers) for i, nb in enumerate(nbars)]
    points = _run_points(tasks, threads)
    _write_csv(out / "pie_sweep.csv", PIE_HEADER, [_point_row(p) for p in points])
    _write_json(out / "pie_sweep.json", dict(experiment="pie-sweep", seed=seed,
                                             config=cfg.data, points=[_point_json(p) for p in points]))
    return EXIT_OK


def run_phase_sweep(cfg: Config, seed: int, out: Path, threads: int) -> int:
    receivers = _receivers(cfg, ["gm", "homodyne-soft", "homodyne-threshold-hadamard",
                                 "dolinar", "heterodyne-bound"])
    nbar = cfg.positive("nbar", 7.5e-3)
    drifts = cfg.grid("drift_hz", {"min": 10, "max": 1e7, "points": 13})
    s = _sweep_settings(cfg, "GM3")
    symbols = cfg.positive("symbols_per_point", 2_500_000, int)
    s["trials"] = symbols
    n = PRESETS[s["preset"]]["stages"]
    s["frames_per_codeword"] = max(symbols // (2**n) ** 2, 1)
    tasks = [(r, nbar, float(f), s, child_seed32(seed, i, k))
             for k, r in enumerate(receivers) for i, f in enumerate(drifts)]
    points = _run_points(tasks, threads)
    _write_csv(out / "phase_sweep.csv", PIE_HEADER, [_point_row(p) for p in points])

    summary = dict(experiment="phase-sweep", seed=seed, config=cfg.data,
                   points=[_point_json(p) for p in points], fits={})
    status = EXIT_OK
    for name in receivers:
        if not (name == "gm" or name.upper() in PRESETS):
            continue
        series = [(p.drift_rate, p.pie) for p in points if p.receiver == name and p.drift_rate > 0]
        try:
            fit = lowpass_fit(series)
            summary["fits"][name] = dict(a=fit.a, f0_hz=fit.f0, s=fit.s,
                                         residual_norm=fit.residual_norm)
        except FitFailed as exc:
            summary["fits"][name] = dict(error=str(exc))
            log.error("low-pass fit for %s failed: %s", name, exc)
            status = EXIT_FIT
    _write_json(out / "phase_sweep.json", summary)
    return status


def _link_params(cfg: Config) -> LinkBudgetParams:
    if "params" in cfg.data:
        sec = cfg.section("params")
        try:
            return LinkBudgetParams(
                sec.positive("transmit_power"), sec.positive("tx_diameter"),
                sec.positive("rx_diameter"), sec.positive("range_m", 1.0),
                sec.positive("wavelength"), sec.positive("efficiency", 0.1),
                sec.positive("pulse_duration", 2e-9))
        except InvalidArgument as exc:
            raise InvalidConfig("params", str(exc)) from None
    sec = cfg.section("link")
    try:
        base = link(sec.get("direction", str, "downlink"), sec.get("system", str, "DSOC-M"))
    except InvalidArgument as exc:
        raise InvalidConfig("link", str(exc)) from None
    return base


def run_link_budget(cfg: Config, seed: int, out: Path, threads: int) -> int:
    params = _link_params(cfg)
    ranges = cfg.grid("ranges", {"min": 1e8, "max": 1e13, "points": 51})
    region = cfg.get("region", list, list(DEFAULT_REGION))
    if len(region) != 2:
        raise InvalidConfig("region", "expected [lo, hi]")
    try:
        rows = advantage_region(params, ranges, (float(region[0]), float(region[1])))
    except InvalidArgument as exc:
        raise InvalidConfig("region", str(exc)) from None
    _write_csv(out / "link_budget.csv", LINK_HEADER,
               [(_fmt(r.range_m), _fmt(r.received_power), _fmt(r.nbar), str(r.in_region).lower())
                for r in rows])
    inside = [r.range_m for r in rows if r.in_region]
    _write_json(out / "link_budget.json", dict(
        experiment="link-budget", seed=seed, config=cfg.data,
        region=[float(region[0]), float(region[1])],
        range_in_region_m=[min(inside), max(inside)] if inside else None))
    return EXIT_OK


def _framing(cfg: Config):
    pre = cfg.get("preset", str, "GM4").upper()
    if pre not in PRESETS:
        raise InvalidConfig("preset", f"unknown preset {pre!r}")
    return preset(pre)


def _schedule(cfg: Config, order: int, default_frames: int):
    raw = cfg.get("schedule", list, None)
    if raw is None:
        frames = cfg.positive("frames_per_codeword", default_frames, int)
        return [(j, frames) for j in range(1, order + 1)]
    try:
        sched = [(int(j), int(c)) for j, c in raw]
    except (TypeError, ValueError):
        raise InvalidConfig("schedule", "expected a list of [codeword, frames] pairs") from None
    if any(not 1 <= j <= order or c < 0 for j, c in sched):
        raise InvalidConfig("schedule", f"codewords must be in 1..{order} with frames >= 0")
    return sched


def _tm_payload(counts, pipe, extra=None):
    tm = estimate_transition_matrix(counts)
    payload = dict(order=tm.order, probabilities=tm.probabilities, counts=counts,
                   columns="erasure, slot 1..N", valid_frames=tm.valid_frames)
    try:
        payload["nbar_estimate"] = estimate_mean_photon(tm)
    except ValueError as exc:
        payload["nbar_estimate"] = None
        payload["nbar_estimate_error"] = str(exc)
    if extra:
        payload.update(extra)
    return payload


def _histogram_rows(hist):
    n = hist.shape[0]
    return [(j + 1, b, int(hist[j, b])) for j in range(n) for b in range(hist.shape[1])]


def run_decode_events(cfg: Config, seed: int, out: Path, threads: int) -> int:
    path = cfg.get("stream", str, required=True)
    pipe = _framing(cfg)
    sched = _schedule(cfg, pipe.order, 1)
    end_ps = cfg.get("end_ps", int, None)
    stream = EventStream.from_csv(path)
    try:
        # the warnings are collected in res.warnings and reported once below
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            res = decode_event_stream(stream, pipe.detector, pipe.order, pipe.symbol_duration,
                                      sched, end_ps)
    except InvalidArgument as exc:
        raise InvalidConfig("schedule", str(exc)) from None
    for msg in res.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    _write_csv(out / "histogram.csv", HIST_HEADER, _histogram_rows(res.histogram))
    _write_json(out / "transition_matrix.json", dict(
        experiment="decode-events", seed=seed, config=cfg.data, frames=res.frames,
        dropped_frames=res.dropped_frames, warnings=res.warnings,
        transition_matrix=_tm_payload(res.tallies, pipe)))
    return EXIT_OK


def run_transition_matrix(cfg: Config, seed: int, out: Path, threads: int) -> int:
    base = _framing(cfg)
    ref = _reference(cfg)
    nbar = cfg.positive("nbar", 0.00146)
    pipe = base.with_nbar(nbar, ref).with_drift(cfg.get("drift_hz", float, 0.0))
    frames = cfg.positive("frames_per_codeword", 62_500, int)
    extra = {}
    if cfg.get("write_stream", bool, False):
        sched = [(j, frames) for j in range(1, pipe.order + 1)]
        stream, counts = generate_event_stream(sched, pipe, 1 / pipe.gm.frame_duration, seed,
                                               return_tallies=True)
        stream.to_csv(out / "events.csv")
        extra["stream"] = "events.csv"
    else:
        counts = simulate_tallies(pipe, frames, seed, threads)
    points = {r: pie_point_from_tallies(counts, pipe.nbar_for(r), pipe.name)
              for r in ("detector", "input")}
    extra.update(
        pie_detector_reference=points["detector"].pie,
        pie_input_reference=points["input"].pie,
        ci_bpp=points[ref].ci_halfwidth,
        nbar_detector=pipe.detector_nbar, nbar_input=pipe.input_nbar,
        verdict=superadditivity_check(points["detector"]),
        slot_permutation=slot_permutation(pipe.gm), off_slot_fraction=off_slot_fraction(pipe.gm))
    _write_json(out / "transition_matrix.json", dict(
        experiment="transition-matrix", seed=seed, config=cfg.data,
        transition_matrix=_tm_payload(counts, pipe, extra)))
    return EXIT_OK


def run_calibrate(cfg: Config, seed: int, out: Path, threads: int) -> int:
    stages = cfg.positive("stages", 4, int)
    tau = cfg.positive("symbol_duration", 10e-9)
    errors = cfg.get("phase_errors", list, None)
    if errors is None:
        errors = np.random.default_rng(np.random.SeedSequence(seed)).uniform(-np.pi, np.pi, stages)
    if len(errors) != stages:
        raise InvalidConfig("phase_errors", f"expected {stages} values")
    try:
        gm = GreenMachineConfig.build(stages, tau, [float(e) for e in errors])
    except (InvalidArgument, TypeError, ValueError) as exc:
        raise InvalidConfig("phase_errors", str(exc)) from None
    extrema = cfg.get("extrema", list, None)
    try:
        res = correct_stages_sequential(gm, cfg.positive("scan_points", 100, int),
                                        cfg.get("monitor_noise_sigma", float, 0.01), seed, extrema)
    except InvalidArgument as exc:
        raise InvalidConfig("extrema", str(exc)) from None
    _write_json(out / "calibration.json", dict(
        experiment="calibrate", seed=seed, config=cfg.data,
        initial_phase_errors=wrap_phase(np.asarray(errors, dtype=float)),
        estimates=res.estimates, targets=list(res.targets), residuals_rad=res.residuals,
        off_slot_before=off_slot_fraction(gm), off_slot_after=off_slot_fraction(res.config),
        slot_permutation=slot_permutation(res.config)))
    return EXIT_OK


COMMANDS = {
    "pie-sweep": run_pie_sweep,
    "phase-sweep": run_phase_sweep,
    "link-budget": run_link_budget,
    "decode-events": run_decode_events,
    "calibrate": run_calibrate,
    "transition-matrix": run_transition_matrix,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greenmachine", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        seed = args.seed if args.seed is not None else cfg.get("seed", int, 0)
        if seed < 0:
            raise InvalidConfig("seed", "must be a non-negative integer")
        if args.threads < 1:
            raise InvalidConfig("--threads", "must be >= 1")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, seed, out, args.threads)
    except InvalidConfig as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MalformedStream as exc:
        print(f"malformed stream: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InsufficientData, UndefinedEstimate) as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        name = getattr(exc, "filename", None)
        print(f"I/O error{f' ({name})' if name else ''}: {exc}", file=sys.stderr)
        return EXIT_IO
    except FitFailed as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
