"""Run configuration: an INI grammar parsed with :mod:`configparser`.

Grammar (every key optional unless noted; unknown sections or keys are errors)::

    [run]
    n = 32            ; grid cells per side
    k = 32            ; basis size
    nu = 0.05
    nu0 = 1.0         ; 1 = Navier-Stokes, 0 = linear
    model = navier-stokes   ; navier-stokes | oseen | stokes
    p = 1.5
    q = 7.0
    T = 0.5
    dt = 0.002
    seed = 0

    [initial]         ; and [advect] for the oseen field, same keys
    preset = zero     ; zero | mode | random | coefficients
    mode = 1          ; preset = mode (1-based)
    amplitude = 1.0
    smoothness = 1.0  ; preset = random: c_j ~ lambda_j^-s N(0, 1)
    coefficients = 0.1, 0.0, ...

    [force.NAME]      ; any number of terms, summed; [direction.NAME] likewise
    type = point      ; point | field
    location = 0.4, 0.6
    vector = 1.0, 0.0
    preset = random   ; type = field: random | mode | coefficients
    mode, amplitude, smoothness, coefficients  ; as in [initial]
    profile = constant ; constant | sine | cosine | power | exp
    scale = 1.0
    omega = 1.0
    phase = 0.0
    exponent = 0.0
    rate = 0.0

    [output]
    dir = .
    prefix = run

Random presets draw from ``numpy.random.default_rng([seed, crc32(block)])``,
so blocks are independent and a config names a unique experiment.
"""

from __future__ import annotations

import configparser
import io
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from nsgalerkin.errors import ConfigurationError
from nsgalerkin.forcing import PointForce, Profile, RegularField, Sum, validate_params
from nsgalerkin.grid import VelocityField
from nsgalerkin.stokes_basis import StokesEigenbasis

__all__ = ["DataBlock", "ForceTerm", "RunConfig", "parse_config", "load_config", "serialize_config", "build_force", "build_coefficients"]

MODELS = ("navier-stokes", "oseen", "stokes")
PRESETS = ("zero", "mode", "random", "coefficients")
PROFILES = ("constant", "sine", "cosine", "power", "exp")


@dataclass(frozen=True)
class DataBlock:
    """Coefficient data given by a named preset."""

    preset: str = "zero"
    mode: int = 1
    amplitude: float = 1.0
    smoothness: float = 1.0
    coefficients: tuple = ()


@dataclass(frozen=True)
class ForceTerm:
    name: str
    type: str = "point"
    location: tuple = (0.5, 0.5)
    vector: tuple = (1.0, 0.0)
    preset: str = "random"
    mode: int = 1
    amplitude: float = 1.0
    smoothness: float = 1.0
    coefficients: tuple = ()
    profile: str = "constant"
    scale: float = 1.0
    omega: float = 1.0
    phase: float = 0.0
    exponent: float = 0.0
    rate: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    n: int = 32
    k: int = 32
    nu: float = 0.05
    nu0: float = 1.0
    model: str = "navier-stokes"
    p: float = 1.5
    q: float = 7.0
    T: float = 0.5
    dt: float = 0.002
    seed: int = 0
    initial: DataBlock = field(default_factory=DataBlock)
    advect: DataBlock = field(default_factory=DataBlock)
    force: tuple = ()
    direction: tuple = ()
    out_dir: str = "."
    prefix: str = "run"

    @property
    def has_point_force(self) -> bool:
        return any(t.type == "point" for t in self.force + self.direction)


_RUN_KEYS = {"n": int, "k": int, "nu": float, "nu0": float, "model": str, "p": float, "q": float, "T": float, "dt": float, "seed": int}
_BLOCK_KEYS = {"preset": str, "mode": int, "amplitude": float, "smoothness": float, "coefficients": "vector"}
_FORCE_KEYS = {
    "type": str,
    "location": "pair",
    "vector": "pair",
    "preset": str,
    "mode": int,
    "amplitude": float,
    "smoothness": float,
    "coefficients": "vector",
    "profile": str,
    "scale": float,
    "omega": float,
    "phase": float,
    "exponent": float,
    "rate": float,
}
_OUTPUT_KEYS = {"dir": "out_dir", "prefix": "prefix"}


def _convert(section: str, key: str, raw: str, kind):
    where = f"[{section}] {key}"
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw.strip()
        vals = tuple(float(x) for x in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigurationError(f"{where}: cannot parse {raw!r}") from None
    if kind == "pair" and len(vals) != 2:
        raise ConfigurationError(f"{where}: expected two numbers, got {raw!r}")
    return vals


def _read_section(parser, section: str, spec: dict) -> dict:
    out = {}
    for key, raw in parser.items(section):
        if key not in spec:
            raise ConfigurationError(f"unknown config key {key!r} in section [{section}]")
        out[key] = _convert(section, key, raw, spec[key])
    return out


def _check_block(block: DataBlock, section: str) -> None:
    if block.preset not in PRESETS:
        raise ConfigurationError(f"[{section}] preset must be one of {PRESETS}, got {block.preset!r}")


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.n < 8:
        raise ConfigurationError(f"[run] n must be at least 8, got {cfg.n}")
    if not 1 <= cfg.k <= (cfg.n - 1) ** 2:
        raise ConfigurationError(f"[run] k must lie in [1, {(cfg.n - 1) ** 2}], got {cfg.k}")
    if not cfg.nu > 0:
        raise ConfigurationError(f"[run] nu must be positive, got {cfg.nu}")
    if not (cfg.T > 0 and cfg.dt > 0):
        raise ConfigurationError(f"[run] T and dt must be positive, got T={cfg.T}, dt={cfg.dt}")
    if cfg.model not in MODELS:
        raise ConfigurationError(f"[run] model must be one of {MODELS}, got {cfg.model!r}")
    _check_block(cfg.initial, "initial")
    _check_block(cfg.advect, "advect")
    for term in cfg.force + cfg.direction:
        sec = f"force.{term.name}"
        if term.type not in ("point", "field"):
            raise ConfigurationError(f"[{sec}] type must be point or field, got {term.type!r}")
        if term.profile not in PROFILES:
            raise ConfigurationError(f"[{sec}] profile must be one of {PROFILES}, got {term.profile!r}")
        if term.type == "field" and term.preset not in PRESETS:
            raise ConfigurationError(f"[{sec}] preset must be one of {PRESETS}, got {term.preset!r}")
        if term.profile == "power" and term.exponent < 0 and not term.exponent * cfg.q > -1:
            raise ConfigurationError(
                f"[{sec}] amplitude t^{term.exponent:g} is not q-integrable for q={cfg.q:g}"
            )
    if cfg.has_point_force:
        validate_params(cfg.p, cfg.q)
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse the INI grammar above; raises :class:`ConfigurationError`."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    kw = {}
    forces, directions = [], []
    for section in parser.sections():
        if section == "run":
            kw.update(_read_section(parser, section, _RUN_KEYS))
        elif section in ("initial", "advect"):
            kw[section] = DataBlock(**_read_section(parser, section, _BLOCK_KEYS))
        elif section == "output":
            for key, raw in parser.items(section):
                if key not in _OUTPUT_KEYS:
                    raise ConfigurationError(f"unknown config key {key!r} in section [output]")
                kw[_OUTPUT_KEYS[key]] = raw.strip()
        elif section.startswith(("force.", "direction.")):
            head, name = section.split(".", 1)
            term = ForceTerm(name=name, **_read_section(parser, section, _FORCE_KEYS))
            (forces if head == "force" else directions).append(term)
        else:
            raise ConfigurationError(f"unknown config section [{section}]")
    kw["force"] = tuple(forces)
    kw["direction"] = tuple(directions)
    return _validate(RunConfig(**kw))


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    """Full INI text; ``parse_config(serialize_config(c)) == c``."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["run"] = {key: _fmt(getattr(cfg, key)) for key in _RUN_KEYS}
    for name in ("initial", "advect"):
        block = getattr(cfg, name)
        parser[name] = {f.name: _fmt(getattr(block, f.name)) for f in fields(block) if getattr(block, f.name) != ()}
    for head in ("force", "direction"):
        for term in getattr(cfg, head):
            parser[f"{head}.{term.name}"] = {
                f.name: _fmt(getattr(term, f.name)) for f in fields(term) if f.name != "name" and getattr(term, f.name) != ()
            }
    parser["output"] = {"dir": cfg.out_dir, "prefix": cfg.prefix}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


# -- materialization ------------------------------------------------------------


def _rng(cfg: RunConfig, tag: str) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, zlib.crc32(tag.encode())])


def _coefficients(block, B: StokesEigenbasis, rng: np.random.Generator, where: str) -> np.ndarray:
    k = B.k
    if block.preset == "zero":
        return np.zeros(k)
    if block.preset == "mode":
        if not 1 <= block.mode <= k:
            raise ConfigurationError(f"[{where}] mode must lie in [1, {k}], got {block.mode}")
        c = np.zeros(k)
        c[block.mode - 1] = block.amplitude
        return c
    if block.preset == "coefficients":
        c = np.asarray(block.coefficients, float)
        if c.size > k:
            raise ConfigurationError(f"[{where}] {c.size} coefficients given for k={k}")
        return np.concatenate([c, np.zeros(k - c.size)])
    c = B.lambdas ** (-block.smoothness) * rng.standard_normal(k)
    return block.amplitude * c / np.linalg.norm(c)


def build_coefficients(cfg: RunConfig, B: StokesEigenbasis, which: str = "initial") -> np.ndarray:
    return _coefficients(getattr(cfg, which), B, _rng(cfg, which), which)


def _profile(term: ForceTerm) -> Profile:
    return Profile(kind=term.profile, scale=term.scale, omega=term.omega, phase=term.phase, exponent=term.exponent, rate=term.rate)


def build_force(cfg: RunConfig, B: StokesEigenbasis, which: str = "force"):
    """The :mod:`forcing` tree for the ``force`` or ``direction`` terms (``None`` if empty)."""
    leaves = []
    for term in getattr(cfg, which):
        where = f"{which}.{term.name}"
        if term.type == "point":
            leaves.append(PointForce(location=term.location, amplitude=term.vector, profile=_profile(term)))
        else:
            c = _coefficients(term, B, _rng(cfg, where), where)
            leaves.append(RegularField(VelocityField.from_flat(B.grid, B.synthesize(c)), _profile(term)))
    if not leaves:
        return None
    return leaves[0] if len(leaves) == 1 else Sum(leaves)


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return _validate(replace(cfg, **{k: v for k, v in kw.items() if v is not None}))
