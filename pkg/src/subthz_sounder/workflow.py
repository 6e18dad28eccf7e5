"""Stage runners behind the command line.

Each stage reads only what earlier stages wrote to the run directory, so any
stage can be rerun on its own. The in-memory helpers (``trace_band``,
``simulate_band``, ``process_band``, ``analyze_band``) are what the stages call
between reading and writing, and ``fused_run`` chains them without touching
the disk.

Run directory layout::

    scenario.yaml, manifest.json
    band_<b>/paths.csv, paths.json
    band_<b>/iq/reference.iq, iq/angle_<NN>.iq
    band_<b>/cir/cirs.csv, cir/cir_meta.json
    band_<b>/analysis/report.json, paths_estimated.csv, rose.csv, omni_cir.csv
    band_<b>/plots/cir_overlay.svg, rose.svg, sweep.svg
    band_<b>/sweep.csv, sweep.json
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, formats, plotting
from .analysis import (FIRST_PEAK_RANGE_DB, GainReport, OmniCir, PathEstimate, RoseData, combined_noise_floor,
                       extract_paths, first_peak, pseudo_omni, rose_data, strongest_path_report,
                       two_ray_gain_db)
from .config import Scenario, canonical_text, config_hash
from .pipeline import CalibratedCir, process_capture
from .scene import PathKind, Placement, PropagationPath, friis_gain_db, trace_paths
from .sounder import RawCapture, SounderConfig, simulate_capture
from .waveform import ReferenceRecord, make_b2b_reference, make_sequence, synthesize_baseband

__all__ = [
    "StageDependencyError",
    "BandContext",
    "AnalysisResult",
    "STAGES",
    "band_context",
    "trace_band",
    "simulate_band",
    "process_band",
    "analyze_band",
    "fused_run",
    "sweep_band",
    "run_stage",
]

STAGES = ("trace", "simulate", "process", "analyze", "sweep", "plot")

# Extraction threshold below the strongest CIR sample when the noise floor is
# numerically zero; sits above the correlation sidelobes of the default window.
NOISELESS_DYNAMIC_RANGE_DB = 80.0


class StageDependencyError(RuntimeError):
    """An upstream artifact needed by a stage is missing."""


@dataclass
class BandContext:
    band: str
    config: SounderConfig
    waveform: np.ndarray
    reference: ReferenceRecord  # as stored on disk (float32 samples)


@dataclass
class AnalysisResult:
    noise_floor: float
    extraction_floor: float
    estimates: list[PathEstimate]
    omni: OmniCir
    los_bin: int
    gain: GainReport | None
    rose: RoseData
    first: PathEstimate | None


def band_context(scenario: Scenario, band: str) -> BandContext:
    config = scenario.sounder_config(band)
    seq = make_sequence(config.bandwidth, config.sequence_duration, config.zc_root)
    waveform, _ = synthesize_baseband(seq, config.oversampling)
    reference = make_b2b_reference(seq, config.chain_gain, config.chain_delay,
                                   config.oversampling, config.tx_power_w)
    return BandContext(band, config, waveform, formats.quantize_reference(reference))


def trace_band(scenario: Scenario, config: SounderConfig, distance: float | None = None,
               los_only: bool = False) -> tuple[Placement, list[PropagationPath]]:
    s = scenario.scene
    placement = scenario.placement(distance)
    paths = trace_paths(scenario.geometry(), placement, config.carrier_frequency,
                        max_wall_order=0 if los_only else s.max_wall_order,
                        polarization=s.polarization, wall_polarization=s.wall_polarization,
                        include_ground=s.include_ground and not los_only)
    return placement, paths


def simulate_band(ctx: BandContext, paths: Sequence[PropagationPath]) -> list[RawCapture]:
    return simulate_capture(ctx.config, paths, ctx.waveform)


def process_band(scenario: Scenario, reference: ReferenceRecord, bandwidth: float,
                 captures: Sequence[RawCapture]) -> list[CalibratedCir]:
    p = scenario.pipeline
    return [process_capture(c, reference, bandwidth, p.window, p.compensate_drift, p.drift_gate_db)
            for c in captures]


def los_angle_bin(paths: Sequence[PropagationPath], n_bins: int) -> int:
    for p in paths:
        if p.kind is PathKind.LOS:
            return int(round(p.aoa_azimuth / (2 * math.pi / n_bins))) % n_bins
    return 0


def analyze_band(scenario: Scenario, config: SounderConfig, cirs: Sequence[CalibratedCir],
                 placement: Placement, paths: Sequence[PropagationPath]) -> AnalysisResult:
    a = scenario.analysis
    omni = pseudo_omni(cirs)
    floor = combined_noise_floor(cirs, a.noise_guard)
    if math.isfinite(floor):
        extraction_floor = floor
    else:
        extraction_floor = float(np.max(omni.power)) - NOISELESS_DYNAMIC_RANGE_DB
    estimates = extract_paths(cirs, extraction_floor, a.margin_db, config.n_angle_bins)
    if estimates:
        gain = strongest_path_report(estimates, placement, config)
        rose = rose_data(estimates, config.n_angle_bins)
        first = first_peak(estimates, FIRST_PEAK_RANGE_DB)
    else:
        gain, first = None, None
        rose = RoseData(np.zeros(config.n_angle_bins), [])
    return AnalysisResult(floor, extraction_floor, estimates, omni,
                          los_angle_bin(paths, config.n_angle_bins), gain, rose, first)


def fused_run(scenario: Scenario, band: str, distance: float | None = None,
              los_only: bool = False):
    """trace, simulate, process and analyze in memory."""
    ctx = band_context(scenario, band)
    placement, paths = trace_band(scenario, ctx.config, distance, los_only)
    captures = simulate_band(ctx, paths)
    cirs = process_band(scenario, ctx.reference, ctx.config.bandwidth, captures)
    return paths, captures, cirs, analyze_band(scenario, ctx.config, cirs, placement, paths)


def sweep_band(scenario: Scenario, band: str, distances: Sequence[float] | None = None,
               los_only: bool = False, noiseless: bool = False) -> list[dict]:
    """Strongest-path gain against free space for each RX position."""
    if noiseless:
        scenario = dataclasses.replace(
            scenario, sounder=dataclasses.replace(scenario.sounder, add_noise=False))
    ctx = band_context(scenario, band)
    cfg = ctx.config
    rows = []
    for d in (scenario.scene.sweep_distances if distances is None else distances):
        placement, paths = trace_band(scenario, cfg, d, los_only)
        cirs = process_band(scenario, ctx.reference, cfg.bandwidth, simulate_band(ctx, paths))
        result = analyze_band(scenario, cfg, cirs, placement, paths)
        theory = (friis_gain_db(placement.distance, cfg.carrier_frequency)
                  + cfg.tx_antenna_gain + cfg.rx_antenna.boresight_gain)
        g = result.gain
        rows.append(dict(
            distance_m=float(d),
            link_distance_m=placement.distance,
            measured_gain_db=g.measured_gain if g else -math.inf,
            theoretical_gain_db=theory,
            delta_db=g.delta if g else -math.inf,
            two_ray_gain_db=two_ray_gain_db(paths, cfg.tx_antenna_gain,
                                            cfg.rx_antenna.boresight_gain),
            strongest_delay_s=g.delay if g else math.nan,
            strongest_angle_bin=g.angle_bin if g else -1,
            noise_floor_db=result.noise_floor,
        ))
    return rows


# -- report serialisation -----------------------------------------------------

def report_dict(result: AnalysisResult, config: SounderConfig, band: str,
                placement: Placement, paths: Sequence[PropagationPath], margin_db: float) -> dict:
    def est(e: PathEstimate | None):
        if e is None:
            return None
        return dict(delay_s=e.delay, angle_bin=e.angle_bin, power_db=e.power)

    g = result.gain
    return dict(
        band=band,
        carrier_hz=config.carrier_frequency,
        bandwidth_hz=config.bandwidth,
        delay_resolution_s=1.0 / config.bandwidth,
        link_distance_m=placement.distance,
        noise_floor_db=result.noise_floor,
        extraction_floor_db=result.extraction_floor,
        margin_db=margin_db,
        los_angle_bin=result.los_bin,
        first_peak=est(result.first),
        strongest_path=None if g is None else dict(
            measured_gain_db=g.measured_gain, theoretical_gain_db=g.theoretical_gain,
            delta_db=g.delta, delay_s=g.delay, angle_bin=g.angle_bin),
        two_ray_gain_db=two_ray_gain_db(paths, config.tx_antenna_gain,
                                        config.rx_antenna.boresight_gain) if paths else None,
        n_paths=len(result.estimates),
        paths=[est(e) for e in result.estimates],
        rose=dict(bin_power_normalized=result.rose.bin_power_normalized,
                  path_dots=[list(d) for d in result.rose.path_dots]),
    )


def _omni_csv(result: AnalysisResult, cirs: Sequence[CalibratedCir]) -> str:
    los = next((c for c in cirs if c.angle_bin == result.los_bin), cirs[0])
    omni = result.omni
    return formats.to_csv(
        ["delay_s", "omni_power_db", "contributing_angle_bin", "los_direction_power_db"],
        zip(omni.delay_axis.tolist(), omni.power.tolist(), omni.contributing_angle.tolist(),
            los.power_db.tolist()))


def _rose_csv(rose: RoseData) -> str:
    return formats.to_csv(["angle_bin", "power_share"],
                          enumerate(rose.bin_power_normalized.tolist()))


# -- file-based stages --------------------------------------------------------

class RunDir:
    def __init__(self, root: Path, band: str):
        self.root = Path(root)
        self.band = band
        self.base = self.root / f"band_{band}"

    def __truediv__(self, rel: str) -> Path:
        return self.base / rel

    def require(self, rel: str, stage: str) -> Path:
        path = self / rel
        if not path.exists():
            raise StageDependencyError(
                f"{path} is missing; run `{stage}` first")
        return path

    def rel(self, path: Path) -> str:
        return path.relative_to(self.root).as_posix()


def _load_paths(run: RunDir) -> tuple[dict, list[PropagationPath]]:
    doc = json.loads(run.require("paths.json", "trace").read_text())
    return doc, formats.paths_from_json(doc["paths"])


def _placement_from(doc: dict) -> Placement:
    return Placement(tuple(doc["tx_position"]), tuple(doc["rx_position"]))


def stage_trace(scenario: Scenario, run: RunDir, timestamp: bool) -> list[Path]:
    cfg = scenario.sounder_config(run.band)
    placement, paths = trace_band(scenario, cfg)
    doc = dict(band=run.band, carrier_hz=cfg.carrier_frequency,
               tx_position=list(placement.tx_position), rx_position=list(placement.rx_position),
               link_distance_m=placement.distance, paths=formats.paths_to_json(paths))
    out = [run / "paths.json", run / "paths.csv"]
    formats.atomic_write_text(out[0], formats.dump_json(doc))
    formats.atomic_write_text(out[1], formats.paths_csv(paths))
    return out


def stage_simulate(scenario: Scenario, run: RunDir, timestamp: bool) -> list[Path]:
    _, paths = _load_paths(run)
    ctx = band_context(scenario, run.band)
    out = [run / "iq/reference.iq"]
    formats.write_reference(out[0], ctx.reference, ctx.config.carrier_frequency)
    width = max(2, len(str(ctx.config.n_angle_bins - 1)))
    for b in range(ctx.config.n_angle_bins):
        capture = simulate_capture(ctx.config, paths, ctx.waveform, [b])[0]
        path = run / f"iq/angle_{b:0{width}d}.iq"
        formats.write_capture(path, capture)
        out.append(path)
    return out


def _capture_files(run: RunDir) -> list[Path]:
    run.require("iq/reference.iq", "simulate")
    files = sorted((run / "iq").glob("angle_*.iq"))
    if not files:
        raise StageDependencyError(f"no angle_*.iq captures in {run / 'iq'}; run `simulate` first")
    return files


def stage_process(scenario: Scenario, run: RunDir, timestamp: bool) -> list[Path]:
    files = _capture_files(run)
    reference = formats.read_reference(run / "iq/reference.iq")
    bandwidth = scenario.scales[scenario.scale].bandwidth_hz
    cirs = []
    for f in files:
        cirs.extend(process_band(scenario, reference, bandwidth, [formats.read_capture(f)]))
    meta = dict(band=run.band, bandwidth_hz=bandwidth, delay_resolution_s=1.0 / bandwidth,
                sample_rate_hz=reference.sample_rate, window=scenario.pipeline.window,
                pointing_azimuth_rad={str(c.angle_bin): c.pointing_azimuth for c in cirs})
    out = [run / "cir/cirs.csv", run / "cir/cir_meta.json"]
    formats.atomic_write_text(out[0], formats.cirs_csv(cirs))
    formats.atomic_write_text(out[1], formats.dump_json(meta))
    return out


def _load_cirs(run: RunDir) -> list[CalibratedCir]:
    meta = json.loads(run.require("cir/cir_meta.json", "process").read_text())
    text = run.require("cir/cirs.csv", "process").read_text()
    pointing = {int(k): v for k, v in meta["pointing_azimuth_rad"].items()}
    return formats.read_cirs_csv(text, meta["delay_resolution_s"], pointing)


def stage_analyze(scenario: Scenario, run: RunDir, timestamp: bool) -> list[Path]:
    doc, paths = _load_paths(run)
    cirs = _load_cirs(run)
    cfg = scenario.sounder_config(run.band)
    placement = _placement_from(doc)
    result = analyze_band(scenario, cfg, cirs, placement, paths)
    report = report_dict(result, cfg, run.band, placement, paths, scenario.analysis.margin_db)
    out = [run / f"analysis/{n}" for n in
           ("report.json", "paths_estimated.csv", "rose.csv", "omni_cir.csv")]
    formats.atomic_write_text(out[0], formats.dump_json(report))
    formats.atomic_write_text(out[1], formats.estimates_csv(result.estimates))
    formats.atomic_write_text(out[2], _rose_csv(result.rose))
    formats.atomic_write_text(out[3], _omni_csv(result, cirs))
    return out


_SWEEP_FIELDS = ["distance_m", "link_distance_m", "measured_gain_db", "theoretical_gain_db",
                 "delta_db", "two_ray_gain_db", "strongest_delay_s", "strongest_angle_bin",
                 "noise_floor_db"]


def stage_sweep(scenario: Scenario, run: RunDir, timestamp: bool, los_only: bool = False,
                noiseless: bool = False) -> list[Path]:
    rows = sweep_band(scenario, run.band, los_only=los_only, noiseless=noiseless)
    doc = dict(band=run.band, los_only=los_only, noiseless=noiseless, rows=rows)
    out = [run / "sweep.csv", run / "sweep.json"]
    formats.atomic_write_text(out[0], formats.to_csv(
        _SWEEP_FIELDS, ([r[k] for k in _SWEEP_FIELDS] for r in rows)))
    formats.atomic_write_text(out[1], formats.dump_json(doc))
    return out


def _json_float(v) -> float:
    # non-finite values are stored as strings ("-inf")
    return math.nan if v is None else float(v)


def stage_plot(scenario: Scenario, run: RunDir, timestamp: bool) -> list[Path]:
    report = json.loads(run.require("analysis/report.json", "analyze").read_text())
    table = np.genfromtxt(run.require("analysis/omni_cir.csv", "analyze"), delimiter=",",
                          names=True, ndmin=1)
    band_label = f"{report['carrier_hz'] / 1e9:g} GHz"
    floor = _json_float(report["noise_floor_db"])
    out = [run / "plots/cir_overlay.svg", run / "plots/rose.svg"]
    formats.atomic_write_text(out[0], plotting.plot_cir_overlay(
        table["delay_s"], table["omni_power_db"], table["los_direction_power_db"],
        title=f"CIR, {band_label}", floor_db=floor, timestamp=timestamp))
    rose = report["rose"]
    formats.atomic_write_text(out[1], plotting.plot_rose(
        rose["bin_power_normalized"], [tuple(d) for d in rose["path_dots"]],
        n_bins=len(rose["bin_power_normalized"]), title=f"Rose, {band_label}",
        timestamp=timestamp))
    sweep = run / "sweep.json"
    if sweep.exists():
        rows = json.loads(sweep.read_text())["rows"]
        out.append(run / "plots/sweep.svg")
        formats.atomic_write_text(out[-1], plotting.plot_sweep(
            [r["distance_m"] for r in rows],
            [_json_float(r["measured_gain_db"]) for r in rows],
            [r["theoretical_gain_db"] for r in rows],
            [_json_float(r["two_ray_gain_db"]) for r in rows],
            title=f"Strongest path vs distance, {band_label}", timestamp=timestamp))
    return out


_RUNNERS = dict(trace=stage_trace, simulate=stage_simulate, process=stage_process,
                analyze=stage_analyze, sweep=stage_sweep, plot=stage_plot)


def run_stage(stage: str, scenario: Scenario, bands: Sequence[str], out_dir=None,
              timestamp: bool = True, **options) -> dict:
    """Run one stage for each band and record it in ``manifest.json``."""
    if stage not in _RUNNERS:
        raise ValueError(f"unknown stage {stage!r}")
    root = Path(out_dir if out_dir is not None else scenario.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    formats.atomic_write_text(root / "scenario.yaml", canonical_text(scenario))

    start = time.perf_counter()
    outputs: list[str] = []
    for band in bands:
        run = RunDir(root, band)
        written = _RUNNERS[stage](scenario, run, timestamp, **options)
        outputs.extend(run.rel(p) for p in written)
    elapsed = time.perf_counter() - start

    manifest_path = root / "manifest.json"
    digest = config_hash(scenario)
    manifest = None
    if manifest_path.exists():
        try:
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError:
            manifest = None
    if not manifest or manifest.get("config_hash") != digest:
        manifest = dict(toolkit_version=__version__, config_hash=digest, seed=scenario.seed,
                        scale=scenario.scale, stages={})
    entry = manifest["stages"].get(stage, {"outputs": []})
    entry["outputs"] = sorted(set(entry["outputs"]) | set(outputs))
    if options:
        entry["options"] = options
    if timestamp:
        entry["elapsed_s"] = round(elapsed, 3)
    else:
        entry.pop("elapsed_s", None)
    manifest["stages"][stage] = entry
    formats.atomic_write_text(manifest_path, formats.dump_json(manifest))
    return manifest
