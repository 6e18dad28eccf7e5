"""Scenario files: YAML in, validated dataclasses out, canonical text back.

Unknown keys and invalid values are rejected with the line they appear on.
The canonical form (sorted keys, fully expanded defaults) is what gets
hashed, so the hash only depends on the effective configuration.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import types
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .scene import CanyonGeometry, Placement, Polarization, placement_along_street
from .sounder import AntennaPattern, SounderConfig

__all__ = [
    "ConfigError",
    "Scenario",
    "load_scenario",
    "parse_scenario",
    "canonical_text",
    "config_hash",
    "preset_path",
]


class ConfigError(ValueError):
    pass


def _positive(v):
    return v > 0


def _non_negative(v):
    return v >= 0


def _at_least_one(v):
    return v >= 1


def _pair(v):
    return len(v) == 2


def _polarization(v):
    return v in {p.value for p in Polarization}


def _check(fn, message):
    return {"check": (fn, message)}


@dataclass
class AntennaSection:
    boresight_gain_dbi: float = 20.0
    hpbw_deg: float | None = None
    sidelobe_floor_db: float = field(default=-30.0, metadata=_check(lambda v: v <= 0, "must be <= 0"))


@dataclass
class SceneSection:
    street_width: float = field(default=15.5, metadata=_check(_positive, "must be > 0"))
    building_height: float = field(default=20.0, metadata=_check(_positive, "must be > 0"))
    canyon_length: float = field(default=200.0, metadata=_check(_positive, "must be > 0"))
    ground_permittivity: list[float] = field(default_factory=lambda: [5.0, -0.4],
                                             metadata=_check(_pair, "must be [real, imag]"))
    wall_permittivity: list[float] = field(default_factory=lambda: [6.0, -0.3],
                                           metadata=_check(_pair, "must be [real, imag]"))
    polarization: str = field(default="TM", metadata=_check(_polarization, "must be TE or TM"))
    wall_polarization: str | None = field(default=None,
                                          metadata=_check(_polarization, "must be TE or TM"))
    max_wall_order: int = field(default=2, metadata=_check(_non_negative, "must be >= 0"))
    include_ground: bool = True
    tx_position: list[float] = field(default_factory=lambda: [0.0, 0.0, 1.5],
                                     metadata=_check(lambda v: len(v) == 3, "must be [x, y, z]"))
    rx_height: float = field(default=1.5, metadata=_check(_positive, "must be > 0"))
    distance: float = field(default=30.0, metadata=_check(_positive, "must be > 0"))
    sweep_distances: list[float] = field(
        default_factory=lambda: [float(d) for d in range(10, 171, 10)])


@dataclass
class SounderSection:
    n_angle_bins: int = field(default=24, metadata=_check(_at_least_one, "must be >= 1"))
    n_snapshots: int = field(default=150, metadata=_check(_at_least_one, "must be >= 1"))
    oversampling: int = field(default=2, metadata=_check(_at_least_one, "must be >= 1"))
    zc_root: int = field(default=1, metadata=_check(_at_least_one, "must be >= 1"))
    tx_antenna_gain_dbi: float = 8.0
    rx_antenna: AntennaSection = field(default_factory=AntennaSection)
    phase_drift_std_rad: float = field(default=0.05, metadata=_check(_non_negative, "must be >= 0"))
    chain_gain_db: float = 0.0
    chain_delay_s: float = field(default=0.0, metadata=_check(_non_negative, "must be >= 0"))
    temperature_k: float = field(default=290.0, metadata=_check(_positive, "must be > 0"))
    add_noise: bool = True


@dataclass
class ScaleSection:
    bandwidth_hz: float = field(default=200e6, metadata=_check(_positive, "must be > 0"))
    sequence_duration_s: float = field(default=12.5e-6, metadata=_check(_positive, "must be > 0"))


@dataclass
class BandSection:
    carrier_hz: float = field(default=158e9, metadata=_check(_positive, "must be > 0"))
    tx_power_dbm: float = 10.0
    noise_figure_db: float = 22.7


@dataclass
class PipelineSection:
    window: str = "nuttall"
    compensate_drift: bool = True
    drift_gate_db: float = field(default=10.0, metadata=_check(_positive, "must be > 0"))


@dataclass
class AnalysisSection:
    margin_db: float = field(default=6.0, metadata=_check(_positive, "must be > 0"))
    noise_guard: float = field(default=0.1, metadata=_check(lambda v: 0 < v < 1, "must be in (0, 1)"))


def _default_scales():
    return {"desk": ScaleSection(200e6, 12.5e-6), "full": ScaleSection(2e9, 100e-6)}


def _default_bands():
    return {"158": BandSection(158e9, 10.0, 22.7), "300": BandSection(300e9, 3.0, 25.7)}


@dataclass
class Scenario:
    seed: int = field(default=0, metadata=_check(lambda v: 0 <= v < 2**63, "must be in [0, 2^63)"))
    scale: str = field(default="desk", metadata=_check(lambda v: v in ("desk", "full"),
                                                       "must be 'desk' or 'full'"))
    output_dir: str = "runs/default"
    scene: SceneSection = field(default_factory=SceneSection)
    sounder: SounderSection = field(default_factory=SounderSection)
    scales: dict[str, ScaleSection] = field(default_factory=_default_scales)
    bands: dict[str, BandSection] = field(default_factory=_default_bands)
    pipeline: PipelineSection = field(default_factory=PipelineSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)

    # -- derived objects -------------------------------------------------
    def geometry(self) -> CanyonGeometry:
        s = self.scene
        return CanyonGeometry(s.street_width, s.building_height, s.canyon_length,
                              complex(*s.ground_permittivity), complex(*s.wall_permittivity))

    def placement(self, distance: float | None = None) -> Placement:
        s = self.scene
        d = s.distance if distance is None else distance
        tx = s.tx_position
        return placement_along_street(d, height=tx[2], tx_x=tx[0], rx_height=s.rx_height) \
            if tx[1] == 0.0 else Placement(tuple(tx), (tx[0] + d, tx[1], s.rx_height))

    def sounder_config(self, band: str, seed: int | None = None) -> SounderConfig:
        if band not in self.bands:
            raise ConfigError(f"unknown band {band!r}; configured: {sorted(self.bands)}")
        b = self.bands[band]
        sc = self.scales[self.scale]
        so = self.sounder
        antenna = AntennaPattern(so.rx_antenna.boresight_gain_dbi,
                                 None if so.rx_antenna.hpbw_deg is None
                                 else math.radians(so.rx_antenna.hpbw_deg),
                                 so.rx_antenna.sidelobe_floor_db)
        return SounderConfig(
            carrier_frequency=b.carrier_hz,
            bandwidth=sc.bandwidth_hz,
            sequence_duration=sc.sequence_duration_s,
            n_angle_bins=so.n_angle_bins,
            angle_step=2 * math.pi / so.n_angle_bins,
            n_snapshots=so.n_snapshots,
            tx_power=b.tx_power_dbm,
            tx_antenna_gain=so.tx_antenna_gain_dbi,
            rx_antenna=antenna,
            rx_noise_figure=b.noise_figure_db,
            phase_drift_std_per_snapshot=so.phase_drift_std_rad,
            rng_seed=self.seed if seed is None else seed,
            oversampling=so.oversampling,
            zc_root=so.zc_root,
            chain_gain_db=so.chain_gain_db,
            chain_delay=so.chain_delay_s,
            temperature=so.temperature_k,
            add_noise=so.add_noise,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# -- YAML node walking --------------------------------------------------------

def _line(node) -> int:
    return node.start_mark.line + 1


def _where(source: str, node, path: str) -> str:
    return f"{source}:{_line(node)}: {path}"


def _scalar(node, source, path):
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigError(f"{_where(source, node, path)}: expected a scalar value")
    return yaml.constructor.SafeConstructor().construct_object(node, deep=True)


def _convert(tp, node, source: str, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or origin is types.UnionType:
        non_none = [a for a in args if a is not type(None)]
        if isinstance(node, yaml.ScalarNode) and node.tag.endswith(":null"):
            return None
        return _convert(non_none[0], node, source, path)
    if dataclasses.is_dataclass(tp):
        return _build(tp, node, source, path)
    if origin is dict:
        if not isinstance(node, yaml.MappingNode):
            raise ConfigError(f"{_where(source, node, path)}: expected a mapping")
        out = {}
        for k, v in node.value:
            key = str(_scalar(k, source, path))
            out[key] = _convert(args[1], v, source, f"{path}.{key}")
        return out
    if origin is list:
        if not isinstance(node, yaml.SequenceNode):
            raise ConfigError(f"{_where(source, node, path)}: expected a list")
        return [_convert(args[0], item, source, f"{path}[{i}]") for i, item in enumerate(node.value)]
    value = _scalar(node, source, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{_where(source, node, path)}: expected true/false, got {node.value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{_where(source, node, path)}: expected an integer, got {node.value!r}")
        return value
    if tp is float:
        if isinstance(value, str):
            try:
                value = float(value)  # YAML 1.1 misses forms like 2e9
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{_where(source, node, path)}: expected a number, got {node.value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{_where(source, node, path)}: must be finite")
        return float(value)
    if tp is str:
        if not isinstance(value, (str, int, float)) or isinstance(value, bool):
            raise ConfigError(f"{_where(source, node, path)}: expected a string")
        return str(value)
    raise TypeError(f"unsupported config type {tp!r}")


def _build(cls, node, source: str, path: str):
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{_where(source, node, path or '<root>')}: expected a mapping")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key_node, value_node in node.value:
        key = str(_scalar(key_node, source, path))
        sub = f"{path}.{key}" if path else key
        if key not in fields:
            raise ConfigError(f"{_where(source, key_node, sub)}: unknown key "
                              f"(allowed: {', '.join(sorted(fields))})")
        if key in kwargs:
            raise ConfigError(f"{_where(source, key_node, sub)}: duplicate key")
        value = _convert(hints[key], value_node, source, sub)
        check = fields[key].metadata.get("check")
        if check is not None and value is not None and not check[0](value):
            raise ConfigError(f"{_where(source, value_node, sub)}: {check[1]}, got {value!r}")
        kwargs[key] = value
    return cls(**kwargs)


def _validate(scenario: Scenario, root, source: str) -> None:
    """Cross-field checks by constructing every derived object."""
    lines = {str(_scalar(k, source, "")): _line(k) for k, _ in root.value} \
        if isinstance(root, yaml.MappingNode) else {}

    def fail(section, exc):
        where = f"{source}:{lines[section]}" if section in lines else source
        raise ConfigError(f"{where}: {section}: {exc}") from exc

    s = scenario.scene
    try:
        geometry = scenario.geometry()
        from .scene import trace_paths
        for d in [s.distance, *s.sweep_distances]:
            trace_paths(geometry, scenario.placement(d), 1e9, 0)
    except ValueError as exc:
        fail("scene", exc)
    if scenario.scale not in scenario.scales:
        fail("scales", ValueError(f"scale {scenario.scale!r} is not defined"))
    if not scenario.bands:
        fail("bands", ValueError("at least one band is required"))
    try:
        for band in scenario.bands:
            scenario.sounder_config(band)
    except ValueError as exc:
        fail("bands" if "band" in str(exc) else "sounder", exc)
    if scenario.pipeline.window not in ("none", "rect", "boxcar"):
        from scipy import signal
        try:
            signal.get_window(scenario.pipeline.window, 8)
        except ValueError as exc:
            fail("pipeline", exc)


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(f"{where}: malformed YAML: {getattr(exc, 'problem', exc)}") from exc
    if root is None:
        scenario = Scenario()
        root = yaml.MappingNode("tag:yaml.org,2002:map", [])
    else:
        scenario = _build(Scenario, root, source, "")
    _validate(scenario, root, source)
    return scenario


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(text, str(path))


def canonical_text(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.to_dict(), sort_keys=True, default_flow_style=False,
                          allow_unicode=False)


def config_hash(scenario: Scenario) -> str:
    return hashlib.sha256(canonical_text(scenario).encode("utf-8")).hexdigest()


def preset_path(name: str = "canyon") -> Path:
    ref = resources.files("subthz_sounder") / "presets" / f"{name}.yaml"
    if not ref.is_file():
        raise ConfigError(f"no bundled preset named {name!r}")
    return Path(str(ref))
