"""Scenario configuration: TOML schema, validation and model builders.

Every section is a flat table of ``key = value`` pairs (one level of
inline-table nesting is allowed for ``txline.roles``).  Units are part of
the key names and also recorded in each field's metadata.  Unknown keys
are rejected with the line they appear on.
"""

import dataclasses
import hashlib
import json
import math
import re
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .constants import DEFAULT_CONSTANTS, PhysicalConstants, areal_density_si, mobility_si
from .electrostatics import BiasConfig, ElectrodeLayout, ElectrodeStack, layer_capacitance
from .film import FilmParams, LevelTable
from .saw import IdtSpec, ReflectionSpec, SawDrive, SawMaterial, characteristic_conductivity

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Schema violation; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, source=None):
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line else f"{source}: "
        elif line:
            where = f"line {line}: "
        super().__init__(where + message)
        self.line = line


def _f(default, unit=""):
    return field(default=default, metadata={"unit": unit})


@dataclass(frozen=True)
class ConstantsSection:
    rho_He: float = _f(145.0, "kg/m^3")
    eps_He: float = _f(1.057)
    g: float = _f(DEFAULT_CONSTANTS.g, "m/s^2")


@dataclass(frozen=True)
class FilmSection:
    H_ref_m: float = _f(0.2e-3, "m")
    d0_ref_m: float = _f(77e-9, "m")
    n_cm2: float = _f(0.8e9, "cm^-2")
    H_min_m: float = _f(0.05e-3, "m")
    H_max_m: float = _f(1.0e-3, "m")
    n_max_cm2: float = _f(2.0e9, "cm^-2")
    points: int = _f(96)
    level_table: Optional[str] = _f(None, "path")


@dataclass(frozen=True)
class MaterialSection:
    v0_m_s: float = _f(3488.0, "m/s")
    K2: float = _f(0.048)
    sigma_m_S: Optional[float] = _f(None, "S")
    Gamma_He_per_m: float = _f(0.0, "1/m")


@dataclass(frozen=True)
class IdtSection:
    finger_pairs: int = _f(40)
    pitch_m: float = _f(12e-6, "m")
    aperture_m: float = _f(4e-3, "m")
    alpha_L: float = _f(0.5)
    f0_hz: Optional[float] = _f(None, "Hz")


@dataclass(frozen=True)
class ReflectionSection:
    round_trip_m: float = _f(3.2e-3, "m")
    coefficient: float = _f(0.2)


@dataclass(frozen=True)
class SawSection:
    f_min_hz: float = _f(270e6, "Hz")
    f_max_hz: float = _f(320e6, "Hz")
    points: int = _f(2001)
    sigma_min_S: float = _f(1e-9, "S")
    sigma_max_S: float = _f(1e-3, "S")
    sigma_points: int = _f(121)


@dataclass(frozen=True)
class ElectrodesSection:
    widths_m: Tuple[float, ...] = _f((4.95e-3, 4.95e-3, 4.95e-3), "m")
    length_m: float = _f(9e-3, "m")
    names: Tuple[str, ...] = _f(("source", "gate", "drain"))
    d_g_m: float = _f(70e-6, "m")
    d_s_m: float = _f(0.5e-3, "m")
    eps11: float = _f(44.3)
    eps33: float = _f(27.6)
    eps13: float = _f(0.0)
    sheet_offset_m: float = _f(0.975e-3, "m")


@dataclass(frozen=True)
class BiasesSection:
    V_s: float = _f(80.0, "V")
    V_g: float = _f(80.0, "V")
    V_d: float = _f(80.0, "V")
    V_guard: float = _f(-3.2, "V")


@dataclass(frozen=True)
class SheetSection:
    n_cm2: float = _f(1.9e9, "cm^-2")
    sigma_S: float = _f(1.58e-6, "S")
    mobility_cm2: Optional[float] = _f(None, "cm^2/Vs")


@dataclass(frozen=True)
class TxlineSection:
    nodes: int = _f(256)
    V_ex: float = _f(0.1, "V")
    f_min_hz: float = _f(1e3, "Hz")
    f_max_hz: float = _f(1e6, "Hz")
    points: int = _f(41)
    noise_rel: float = _f(0.0)
    seed: int = _f(0)
    sigma0_S: float = _f(1e-6, "S")  # starting guess of the conductivity fit
    data: Optional[str] = _f(None, "path")
    roles: Tuple[Tuple[str, str], ...] = _f((("drain", "sense"), ("gate", "ground"), ("source", "drive")))


@dataclass(frozen=True)
class FetSection:
    V_g_min: float = _f(40.0, "V")
    V_g_max: float = _f(160.0, "V")
    points: int = _f(241)
    frequency_hz: float = _f(60e3, "Hz")
    V_ex: float = _f(0.1, "V")
    power_w: float = _f(1e-3, "W")


@dataclass(frozen=True)
class PumpSection:
    frequency_hz: float = _f(296e6, "Hz")
    power_w: float = _f(1e-3, "W")
    t_p_s: float = _f(30e-6, "s")
    t_start_s: float = _f(0.0, "s")
    t_end_s: Optional[float] = _f(None, "s")
    detector: str = _f("source")
    drive_efficiency: float = _f(1.5e-7)
    gamma_tot_per_m: float = _f(0.0, "1/m")
    sheet_attenuation: bool = _f(False)  # true: use Gamma_el(sigma0) + Gamma_He instead
    cells: int = _f(512)
    steps_per_pulse: int = _f(4096)
    scheme: str = _f("semi-implicit")
    record_every: int = _f(1)


@dataclass(frozen=True)
class FitSection:
    offset: bool = _f(True)
    max_iter: int = _f(200)


@dataclass(frozen=True)
class PlotSection:
    format: str = _f("svg")


SECTIONS = {
    "constants": ConstantsSection,
    "film": FilmSection,
    "material": MaterialSection,
    "idt": IdtSection,
    "reflection": ReflectionSection,
    "saw": SawSection,
    "electrodes": ElectrodesSection,
    "biases": BiasesSection,
    "sheet": SheetSection,
    "txline": TxlineSection,
    "fet": FetSection,
    "pump": PumpSection,
    "fit": FitSection,
    "plot": PlotSection,
}

_ENUMS = {
    ("pump", "scheme"): ("semi-implicit", "explicit"),
    ("plot", "format"): ("svg", "dat"),
}


def _locate(text: Optional[str], section: Optional[str], key: Optional[str]) -> Optional[int]:
    """Line number of ``key`` inside ``[section]`` (or of the header if key is None)."""
    if text is None:
        return None
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_\-]+)\s*\]$", line)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return lineno
            continue
        if key is not None and current == section:
            if re.match(rf"^\"?{re.escape(key)}\"?\s*=", line):
                return lineno
    return None


def _kind(hint):
    """Strip ``Optional`` from a field annotation."""
    if typing.get_origin(hint) is Union:
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    return hint


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"{name} must be a number")
    if not math.isfinite(value):
        raise TypeError(f"{name} must be finite")
    return float(value)


def _coerce(value, hint, name):
    """Check ``value`` against the field annotation and normalize it."""
    kind = _kind(hint)
    if kind is bool:
        if not isinstance(value, bool):
            raise TypeError(f"{name} must be true or false")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"{name} must be an integer")
        return value
    if kind is float:
        return _number(value, name)
    if kind is str:
        if not isinstance(value, str):
            raise TypeError(f"{name} must be a string")
        return value
    inner = typing.get_args(kind)[0]
    if typing.get_origin(inner) is tuple:
        # Tuple[Tuple[str, str], ...] is an inline table of strings
        if not isinstance(value, dict) or not all(isinstance(v, str) for v in value.values()):
            raise TypeError(f"{name} must be an inline table of strings")
        return tuple(sorted(value.items()))
    if not isinstance(value, list) or not value:
        raise TypeError(f"{name} must be a non-empty array")
    if inner is float:
        return tuple(_number(v, f"{name} entry") for v in value)
    if not all(isinstance(v, str) for v in value):
        raise TypeError(f"{name} entries must be strings")
    return tuple(value)


def _build_section(cls, raw: dict, sname: str, text, source):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{sname}] must be a table", _locate(text, None, sname), source)
    kwargs = {}
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown key '{key}' in [{sname}]; allowed: {', '.join(known)}",
                              _locate(text, sname, key), source)
        try:
            kwargs[key] = _coerce(value, known[key].type, f"{sname}.{key}")
        except TypeError as exc:
            raise ConfigError(str(exc), _locate(text, sname, key), source) from None
        allowed = _ENUMS.get((sname, key))
        if allowed and kwargs[key] not in allowed:
            raise ConfigError(f"{sname}.{key} must be one of {allowed}", _locate(text, sname, key), source)
    return cls(**kwargs)


@dataclass(frozen=True)
class ScenarioConfig:
    version: int = SCHEMA_VERSION
    constants: ConstantsSection = field(default_factory=ConstantsSection)
    film: FilmSection = field(default_factory=FilmSection)
    material: MaterialSection = field(default_factory=MaterialSection)
    idt: IdtSection = field(default_factory=IdtSection)
    reflection: ReflectionSection = field(default_factory=ReflectionSection)
    saw: SawSection = field(default_factory=SawSection)
    electrodes: ElectrodesSection = field(default_factory=ElectrodesSection)
    biases: BiasesSection = field(default_factory=BiasesSection)
    sheet: SheetSection = field(default_factory=SheetSection)
    txline: TxlineSection = field(default_factory=TxlineSection)
    fet: FetSection = field(default_factory=FetSection)
    pump: PumpSection = field(default_factory=PumpSection)
    fit: FitSection = field(default_factory=FitSection)
    plot: PlotSection = field(default_factory=PlotSection)
    source: Optional[str] = field(default=None, compare=False)

    # ---- serialization -------------------------------------------------
    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"version": self.version}
        for name in SECTIONS:
            sec = getattr(self, name)
            out[name] = {f.name: getattr(sec, f.name) for f in dataclasses.fields(sec)}
        return out

    def scenario_hash(self) -> str:
        """sha256 over the canonical JSON of the fully resolved configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False)
        return hashlib.sha256(blob.encode()).hexdigest()

    # ---- model builders ------------------------------------------------
    def physical_constants(self) -> PhysicalConstants:
        c = self.constants
        return DEFAULT_CONSTANTS.with_overrides(rho_He=c.rho_He, eps_He=c.eps_He, g=c.g)

    def film_params(self) -> FilmParams:
        f = self.film
        return FilmParams.calibrated(f.H_ref_m, f.d0_ref_m, self.physical_constants())

    def level_table(self) -> LevelTable:
        if self.film.level_table is None:
            return LevelTable.default()
        path = Path(self.film.level_table)
        if not path.is_absolute() and self.source is not None:
            path = Path(self.source).parent / path
        return LevelTable.from_csv(path)

    def stack(self) -> ElectrodeStack:
        e = self.electrodes
        return ElectrodeStack(d_g=e.d_g_m, d_s=e.d_s_m, eps_He=self.constants.eps_He,
                              eps11=e.eps11, eps33=e.eps33, eps13=e.eps13)

    def c_l(self) -> float:
        return layer_capacitance(self.stack(), self.physical_constants())

    def material_params(self) -> SawMaterial:
        m = self.material
        sigma_m = m.sigma_m_S
        if sigma_m is None:
            sigma_m = characteristic_conductivity(m.v0_m_s, self.stack().eps_s,
                                                  self.physical_constants().eps0)
        return SawMaterial(v0=m.v0_m_s, K2=m.K2, sigma_m=sigma_m, Gamma_He=m.Gamma_He_per_m)

    def idt_spec(self) -> IdtSpec:
        i = self.idt
        return IdtSpec(i.finger_pairs, i.pitch_m, i.aperture_m, i.alpha_L)

    def reflection_spec(self) -> ReflectionSpec:
        return ReflectionSpec(self.reflection.round_trip_m, self.reflection.coefficient)

    def layout(self) -> ElectrodeLayout:
        e = self.electrodes
        return ElectrodeLayout(e.widths_m, e.length_m, e.names)

    def bias_config(self) -> BiasConfig:
        b = self.biases
        return BiasConfig(b.V_s, b.V_g, b.V_d, b.V_guard)

    def density(self) -> float:
        return areal_density_si(self.sheet.n_cm2)

    def mobility(self) -> float:
        s = self.sheet
        if s.mobility_cm2 is not None:
            return mobility_si(s.mobility_cm2)
        from .txline import mobility_from_sigma
        return mobility_from_sigma(s.sigma_S, self.density(), self.physical_constants().e)

    def n_total(self) -> float:
        return self.density() * float(self.layout().areas.sum())

    def roles(self) -> Dict[str, str]:
        return dict(self.txline.roles)

    def pump_scenario(self, power_w: Optional[float] = None):
        from .pump import PumpScenario
        p = self.pump
        drive = SawDrive(p.frequency_hz, p.power_w if power_w is None else power_w,
                         p.t_p_s, p.t_start_s)
        return PumpScenario(drive=drive, material=self.material_params(), idt=self.idt_spec(),
                            layout=self.layout(), biases=self.bias_config(), N_total=self.n_total(),
                            mu=self.mobility(), c_l=self.c_l(),
                            sheet_offset=self.electrodes.sheet_offset_m, detector=p.detector,
                            drive_efficiency=p.drive_efficiency,
                            gamma_tot=None if p.sheet_attenuation else p.gamma_tot_per_m,
                            constants=self.physical_constants())


def parse_config(text: str, source: Optional[str] = None) -> ScenarioConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", int(m.group(1)) if m else None, source) from None
    if "version" not in raw:
        raise ConfigError("missing required top-level key 'version'", 1, source)
    version = raw.pop("version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})",
                          _locate(text, None, None) or _find_top_key(text, "version"), source)
    kwargs: Dict[str, Any] = {}
    for sname, value in raw.items():
        if sname not in SECTIONS:
            line = _locate(text, sname, None) or _find_top_key(text, sname)
            raise ConfigError(f"unknown section or key '{sname}'; sections: {', '.join(SECTIONS)}",
                              line, source)
        kwargs[sname] = _build_section(SECTIONS[sname], value, sname, text, source)
    cfg = ScenarioConfig(version=version, source=source, **kwargs)
    try:
        validate(cfg)
    except ValueError as exc:
        raise ConfigError(f"invalid scenario: {exc}", None, source) from None
    return cfg


def _find_top_key(text, key):
    for lineno, raw in enumerate(text.splitlines(), 1):
        if raw.strip().startswith("["):
            return None
        if re.match(rf"^\s*{re.escape(key)}\s*=", raw):
            return lineno
    return None


def load_config(path: Union[str, Path, None]) -> ScenarioConfig:
    """Read a scenario file; ``None`` gives the built-in defaults."""
    if path is None:
        return ScenarioConfig()
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def validate(cfg: ScenarioConfig) -> None:
    """Build every model object once so physics-level constraints surface early."""
    cfg.physical_constants()
    cfg.film_params()
    cfg.material_params()
    cfg.idt_spec()
    cfg.reflection_spec()
    layout = cfg.layout()
    cfg.bias_config()
    cfg.c_l()
    if cfg.film.points < 2 or cfg.saw.points < 8 or cfg.fet.points < 2 or cfg.txline.points < 5:
        raise ValueError("sweep point counts are too small")
    if cfg.pump.detector not in layout.names:
        raise ValueError(f"pump.detector {cfg.pump.detector!r} is not an electrode name")
    unknown = set(dict(cfg.txline.roles)) - set(layout.names)
    if unknown:
        raise ValueError(f"txline.roles names unknown electrodes {sorted(unknown)}")
    if cfg.txline.noise_rel < 0:
        raise ValueError("txline.noise_rel must be non-negative")


def default_config_text() -> str:
    """A complete example file with every key set to its default."""
    lines: List[str] = [f"version = {SCHEMA_VERSION}", ""]
    cfg = ScenarioConfig()
    for sname, cls in SECTIONS.items():
        lines.append(f"[{sname}]")
        sec = getattr(cfg, sname)
        for f in dataclasses.fields(cls):
            v = getattr(sec, f.name)
            unit = f.metadata.get("unit", "")
            comment = f"  # {unit}" if unit else ""
            if v is None:
                lines.append(f"# {f.name} ={comment}")
                continue
            lines.append(f"{f.name} = {_toml_value(v)}{comment}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return "{ " + ", ".join(f"{k} = {json.dumps(val)}" for k, val in v) + " }"
    if isinstance(v, tuple):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(type(v))
