"""
Run configuration.

An INI file with the sections [mesh], [scheme], [source], [study] and
[output] is read with configparser and validated by pydantic models. Errors
name the offending ``section.key`` and its line.
"""

import configparser
import logging
import os
import re
from typing import List, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.models.assembly import SchemeConfig
from src.models.errors import ConfigError
from src.models.manufactured import center_point_load, general_case, manufactured_square, zero_case
from src.models.mesh import lshape, read_mesh_file, refine_uniform, unit_square
from src.models.sources import LineLoad, PointLoad, SourceSpec

logger = logging.getLogger(__name__)

SECTIONS = ("mesh", "scheme", "source", "study", "output")
VOLUME_KEYS = {"f00": (0, 0), "f10": (1, 0), "f01": (0, 1), "f20": (2, 0), "f11": (1, 1), "f02": (0, 2)}


class Block(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class MeshBlock(Block):
    domain: str = "square"
    initial: int = 2
    refinements: int = Field(0, ge=0, le=8)

    @field_validator("initial")
    @classmethod
    def known_square(cls, value):
        if value not in (2, 4):
            raise ValueError("initial must be 2 or 4")
        return value

    @field_validator("domain")
    @classmethod
    def known_domain(cls, value):
        if value in ("square", "lshape"):
            return value
        if value.startswith("file:"):
            path = value[len("file:"):].strip()
            if not os.path.exists(path):
                raise ValueError(f"mesh file not found: {path}")
            return f"file:{path}"
        raise ValueError("domain must be square, lshape or file:<path>")

    def build(self):
        if self.domain == "square":
            mesh = unit_square(self.initial)
        elif self.domain == "lshape":
            mesh = lshape()
        else:
            mesh = read_mesh_file(self.domain[len("file:"):])
        for _ in range(self.refinements):
            mesh = refine_uniform(mesh)
        return mesh


class SourceBlock(Block):
    kind: Literal["manufactured", "zero", "center_point", "general"] = "manufactured"
    f00: float = 0.0
    f10: float = 0.0
    f01: float = 0.0
    f20: float = 0.0
    f11: float = 0.0
    f02: float = 0.0
    point_loads: List[Tuple[float, float, float]] = Field(default_factory=list)
    line_loads0: List[Tuple[float, float, float, float, float]] = Field(default_factory=list)
    line_loads1: List[Tuple[float, float, float, float, float]] = Field(default_factory=list)
    intensity: float = 1.0
    degree: int = Field(2, ge=0, le=4)

    def spec(self):
        """SourceSpec of a ``general`` block with constant densities."""
        volume = {}
        for key, alpha in VOLUME_KEYS.items():
            value = getattr(self, key)
            if value != 0.0:
                volume[alpha] = _constant(value)
        line_loads = []
        for order, loads in ((0, self.line_loads0), (1, self.line_loads1)):
            for x0, y0, x1, y1, g in loads:
                line_loads.append(LineLoad(order, [((x0, y0), (x1, y1))], _constant(g)))
        point_loads = [PointLoad((x, y), beta) for x, y, beta in self.point_loads]
        return SourceSpec(volume=volume, line_loads=line_loads, point_loads=point_loads, name="general")


def _constant(value):
    return lambda x, y: np.full(np.shape(x), value)


class StudyBlock(Block):
    kind: Literal["uniform", "adaptive", "verify"] = "uniform"
    levels: int = Field(4, ge=1, le=10)
    max_dofs: int = Field(20000, ge=1)
    theta: float = Field(0.5, gt=0.0, le=1.0)
    tolerance: float = Field(1e-8, ge=0.0)
    seed: int = 20240101
    checks: List[str] = Field(default_factory=list)


class OutputBlock(Block):
    directory: str = "output"
    svg: bool = False
    entities: bool = False


class RunConfig(Block):
    mesh: MeshBlock = Field(default_factory=MeshBlock)
    scheme: SchemeConfig = Field(default_factory=lambda: SchemeConfig(name="morley"))
    source: SourceBlock = Field(default_factory=SourceBlock)
    study: StudyBlock = Field(default_factory=StudyBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    @model_validator(mode="after")
    def manufactured_needs_square(self):
        if self.source.kind in ("manufactured", "center_point") and self.mesh.domain != "square":
            raise ValueError(f"source kind {self.source.kind} requires the square domain")
        return self

    def build_mesh(self):
        return self.mesh.build()

    def build_case(self):
        kind = self.source.kind
        if kind == "manufactured":
            return manufactured_square()
        if kind == "zero":
            return zero_case(self.mesh.domain)
        if kind == "center_point":
            return center_point_load(self.source.intensity)
        return general_case(self.source.spec(), self.mesh.domain)


# ---------------------------------------------------------------------- #
# parsing
# ---------------------------------------------------------------------- #
LIST_KEYS = {"point_loads": 3, "line_loads0": 5, "line_loads1": 5}


def _line_index(text):
    """Map ``section.key`` and ``section`` to 1-based line numbers."""
    index, section = {}, None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        header = re.match(r"^\[([^\]]+)\]", line)
        if header:
            section = header.group(1).strip().lower()
            index.setdefault(section, number)
        elif section and "=" in line and not line.startswith(("#", ";")):
            index[f"{section}.{line.split('=', 1)[0].strip().lower()}"] = number
    return index


def _split_list(value, width, field, line):
    items = []
    for chunk in value.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split()
        if len(parts) != width:
            raise ConfigError(f"expected {width} numbers per entry, got '{chunk}'", field=field, line=line)
        try:
            items.append([float(p) for p in parts])
        except ValueError as exc:
            raise ConfigError(f"not a number in '{chunk}'", field=field, line=line) from exc
    return items


def parse_config(text, source="<config>"):
    """Validate INI ``text`` into a RunConfig."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], line=getattr(exc, "lineno", None)) from exc
    lines = _line_index(text)

    raw = {}
    for section in parser.sections():
        name = section.lower()
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", field=name, line=lines.get(name))
        block = {}
        for key, value in parser.items(section):
            field = f"{name}.{key}"
            if key in LIST_KEYS:
                block[key] = _split_list(value, LIST_KEYS[key], field, lines.get(field))
            elif key == "checks":
                block[key] = [c.strip() for c in value.split(",") if c.strip()]
            else:
                block[key] = value
        raw[name] = block

    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as exc:
        error = exc.errors()[0]
        location = [str(part) for part in error["loc"] if not isinstance(part, int)]
        field = ".".join(location[:2]) if location else None
        line = lines.get(field) or (lines.get(location[0]) if location else None)
        raise ConfigError(error["msg"], field=field, line=line) from exc
    logger.debug("configuration from %s: %s", source, config)
    return config


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"configuration file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        return parse_config(handle.read(), source=path)
