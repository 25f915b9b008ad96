"""Transform-op catalog, brute-force pipeline enumeration, and code rendering.

The catalog declares every variable op the brute-force generator may select,
together with bounded parameter domains and a code template. Pipelines are
one to three variable ops followed by the constant fixed tail (resize to
64x64, tensor conversion, normalization); the enumerator walks ordered op
combinations in lexicographic catalog order, cycling from the start when the
combination space is exhausted and resampling parameters on every revisit.

Everything here is a pure function over immutable catalog data: given the
catalog version, arity, count, and seed, the emitted pipeline list is
reproducible byte-for-byte after rendering.
"""

from __future__ import annotations

import itertools
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import CATALOG_VERSION

# Fixed-tail constants. The resize target is part of the method (every
# candidate ends with resize(64,64), to-tensor, normalize); the normalization
# mean/std are catalog data and default to the standard CIFAR-10 statistics.
FIXED_TAIL_SIZE = (64, 64)
NORMALIZE_MEAN = (0.4914, 0.4822, 0.4465)
NORMALIZE_STD = (0.2470, 0.2435, 0.2616)

_SLOT_RE = re.compile(r"\{([a-zA-Z_][a-zA-Z0-9_]*)\}")


def _format_value(value) -> str:
    """Render a bound parameter value as Python source text."""
    if isinstance(value, bool):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return "(" + ", ".join(_format_value(v) for v in value) + ")"
    return str(value)


# ---------------------------------------------------------------------------
# Parameter domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RealInterval:
    """Uniform real domain [lo, hi]; samples are rounded to 4 decimals."""

    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"real interval requires lo <= hi, got [{self.lo}, {self.hi}]")

    def sample(self, rng: random.Random) -> float:
        return round(rng.uniform(self.lo, self.hi), 4)

    def contains(self, value) -> bool:
        return isinstance(value, (int, float)) and self.lo <= value <= self.hi

    def to_json(self) -> dict:
        return {"kind": "real", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class IntInterval:
    """Uniform integer domain [lo, hi], both ends inclusive."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"int interval requires lo <= hi, got [{self.lo}, {self.hi}]")

    def sample(self, rng: random.Random) -> int:
        return rng.randint(self.lo, self.hi)

    def contains(self, value) -> bool:
        return isinstance(value, int) and self.lo <= value <= self.hi

    def to_json(self) -> dict:
        return {"kind": "int", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Choice:
    """Enumeration of literal values, sampled uniformly."""

    values: tuple

    def __post_init__(self):
        if not self.values:
            raise ValueError("enumeration domain must be non-empty")

    def sample(self, rng: random.Random):
        return rng.choice(self.values)

    def contains(self, value) -> bool:
        return value in self.values

    def to_json(self) -> dict:
        return {"kind": "choice", "values": list(self.values)}


@dataclass(frozen=True)
class TupleDomain:
    """Fixed-length tuple whose elements are sampled from sub-domains."""

    elements: tuple

    def __post_init__(self):
        if not self.elements:
            raise ValueError("tuple domain must have at least one element")

    def sample(self, rng: random.Random) -> tuple:
        return tuple(e.sample(rng) for e in self.elements)

    def contains(self, value) -> bool:
        return (
            isinstance(value, tuple)
            and len(value) == len(self.elements)
            and all(e.contains(v) for e, v in zip(self.elements, value))
        )

    def to_json(self) -> dict:
        return {"kind": "tuple", "elements": [e.to_json() for e in self.elements]}


def _domain_from_json(data: dict):
    kind = data.get("kind")
    if kind == "real":
        return RealInterval(data["lo"], data["hi"])
    if kind == "int":
        return IntInterval(data["lo"], data["hi"])
    if kind == "choice":
        values = tuple(tuple(v) if isinstance(v, list) else v for v in data["values"])
        return Choice(values)
    if kind == "tuple":
        return TupleDomain(tuple(_domain_from_json(e) for e in data["elements"]))
    raise ValueError(f"unknown domain kind: {kind!r}")


# ---------------------------------------------------------------------------
# Op and pipeline specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamSpec:
    """One op parameter: its value domain and how it appears in emitted code."""

    name: str
    domain: object
    render_style: str = "keyword"  # "keyword" | "positional"


@dataclass(frozen=True)
class TransformOpSpec:
    """A variable transform op: parameter specs plus its code template.

    The template carries exactly one ``{param}`` slot per parameter, e.g.
    ``transforms.RandomPosterize(bits={bits}, p={p})``.
    """

    name: str
    params: tuple
    template: str

    def __post_init__(self):
        slots = _SLOT_RE.findall(self.template)
        names = [p.name for p in self.params]
        if len(names) != len(set(names)):
            raise ValueError(f"{self.name}: duplicate parameter names")
        if sorted(slots) != sorted(names):
            raise ValueError(
                f"{self.name}: template slots {sorted(slots)} do not match "
                f"params {sorted(names)}"
            )

    def bind(self, rng: random.Random) -> dict:
        """Sample one value per parameter from its domain."""
        return {p.name: p.domain.sample(rng) for p in self.params}

    def render(self, values: dict) -> str:
        """Substitute bound values into the template."""
        out = self.template
        for p in self.params:
            if p.name not in values:
                raise ValueError(f"{self.name}: missing value for parameter {p.name!r}")
            out = out.replace("{" + p.name + "}", _format_value(values[p.name]))
        return out


def fixed_tail_stages(resize_size: tuple[int, int] = FIXED_TAIL_SIZE) -> tuple[str, ...]:
    """The constant terminal stages appended to every pipeline."""
    return (
        f"transforms.Resize({_format_value(resize_size)})",
        "transforms.ToTensor()",
        f"transforms.Normalize(mean={_format_value(NORMALIZE_MEAN)}, "
        f"std={_format_value(NORMALIZE_STD)})",
    )


FIXED_TAIL = fixed_tail_stages()


@dataclass(frozen=True)
class PipelineSpec:
    """A structured pipeline before rendering: variable ops plus fixed tail.

    ``variable_ops`` is an ordered tuple of (op name, bound values) with
    length 1..3; ``rng_seed`` is the derived per-pipeline seed the values
    were bound from.
    """

    variable_ops: tuple
    fixed_tail: tuple = FIXED_TAIL
    rng_seed: int = 0

    def __post_init__(self):
        if not 1 <= len(self.variable_ops) <= 3:
            raise ValueError(
                f"pipeline arity must be 1..3, got {len(self.variable_ops)}"
            )
        if not self.fixed_tail:
            raise ValueError("fixed tail must be present")

    @property
    def arity(self) -> int:
        return len(self.variable_ops)

    @property
    def op_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.variable_ops)


# ---------------------------------------------------------------------------
# Default catalog
# ---------------------------------------------------------------------------

def _op(name: str, template: str, *params: ParamSpec) -> TransformOpSpec:
    return TransformOpSpec(name=name, params=tuple(params), template=template)


def default_catalog() -> list[TransformOpSpec]:
    """The built-in, versioned op catalog (see CATALOG_VERSION).

    Membership covers the conventional torchvision image ops: flips, crops,
    color jitter, blur, posterize, solarize, rotation, affine, erasing,
    grayscale, perspective, sharpness, autocontrast, and invert. Ranges are
    conservative for 32x32 natural images. RandomErasing operates on tensors
    and therefore fails at runtime when executed ahead of ToTensor; it stays
    in the catalog because error-producing candidates are part of the search
    space (the unfiltered dataset mode keeps them, scored 0.0).
    """
    p_range = RealInterval(0.1, 0.9)
    return [
        _op(
            "ColorJitter",
            "transforms.ColorJitter(brightness={brightness}, contrast={contrast}, "
            "saturation={saturation}, hue={hue})",
            ParamSpec("brightness", RealInterval(0.0, 0.8)),
            ParamSpec("contrast", RealInterval(0.0, 0.8)),
            ParamSpec("saturation", RealInterval(0.0, 0.8)),
            ParamSpec("hue", RealInterval(0.0, 0.4)),
        ),
        _op(
            "GaussianBlur",
            "transforms.GaussianBlur(kernel_size={kernel_size}, sigma={sigma})",
            ParamSpec("kernel_size", Choice((3, 5))),
            ParamSpec(
                "sigma",
                TupleDomain((RealInterval(0.1, 0.5), RealInterval(1.0, 2.0))),
            ),
        ),
        _op(
            "RandomAdjustSharpness",
            "transforms.RandomAdjustSharpness({sharpness_factor}, p={p})",
            ParamSpec("sharpness_factor", RealInterval(0.0, 4.0), "positional"),
            ParamSpec("p", p_range),
        ),
        _op(
            "RandomAffine",
            "transforms.RandomAffine({degrees}, translate={translate})",
            ParamSpec("degrees", RealInterval(0.0, 30.0), "positional"),
            ParamSpec(
                "translate",
                TupleDomain((RealInterval(0.0, 0.3), RealInterval(0.0, 0.3))),
            ),
        ),
        _op(
            "RandomAutocontrast",
            "transforms.RandomAutocontrast(p={p})",
            ParamSpec("p", p_range),
        ),
        _op(
            "RandomCrop",
            "transforms.RandomCrop({size}, padding={padding})",
            ParamSpec("size", Choice((24, 28, 32)), "positional"),
            ParamSpec("padding", IntInterval(0, 4)),
        ),
        _op(
            "RandomErasing",
            "transforms.RandomErasing(p={p}, scale={scale})",
            ParamSpec("p", p_range),
            ParamSpec(
                "scale",
                TupleDomain((RealInterval(0.02, 0.1), RealInterval(0.1, 0.4))),
            ),
        ),
        _op(
            "RandomGrayscale",
            "transforms.RandomGrayscale(p={p})",
            ParamSpec("p", p_range),
        ),
        _op(
            "RandomHorizontalFlip",
            "transforms.RandomHorizontalFlip(p={p})",
            ParamSpec("p", p_range),
        ),
        _op(
            "RandomInvert",
            "transforms.RandomInvert(p={p})",
            ParamSpec("p", p_range),
        ),
        _op(
            "RandomPerspective",
            "transforms.RandomPerspective(distortion_scale={distortion_scale}, p={p})",
            ParamSpec("distortion_scale", RealInterval(0.1, 0.7)),
            ParamSpec("p", p_range),
        ),
        _op(
            "RandomPosterize",
            "transforms.RandomPosterize(bits={bits}, p={p})",
            ParamSpec("bits", IntInterval(1, 7)),
            ParamSpec("p", p_range),
        ),
        _op(
            "RandomResizedCrop",
            "transforms.RandomResizedCrop({size}, scale=({scale_lo}, 1.0))",
            ParamSpec("size", Choice((24, 28, 32)), "positional"),
            ParamSpec("scale_lo", RealInterval(0.3, 0.9)),
        ),
        _op(
            "RandomRotation",
            "transforms.RandomRotation({degrees})",
            ParamSpec("degrees", RealInterval(0.0, 45.0), "positional"),
        ),
        _op(
            "RandomSolarize",
            "transforms.RandomSolarize(threshold={threshold}, p={p})",
            ParamSpec("threshold", IntInterval(0, 255)),
            ParamSpec("p", p_range),
        ),
        _op(
            "RandomVerticalFlip",
            "transforms.RandomVerticalFlip(p={p})",
            ParamSpec("p", p_range),
        ),
    ]


def catalog_by_name(catalog: list[TransformOpSpec] | None = None) -> dict[str, TransformOpSpec]:
    ops = default_catalog() if catalog is None else catalog
    index = {op.name: op for op in ops}
    if len(index) != len(ops):
        raise ValueError("op names must be unique within the catalog")
    return index


# ---------------------------------------------------------------------------
# Catalog (de)serialization - human-editable JSON
# ---------------------------------------------------------------------------

def save_catalog(catalog: list[TransformOpSpec], path: str | Path) -> None:
    """Write the catalog as an editable JSON document."""
    doc = {
        "version": CATALOG_VERSION,
        "fixed_tail": {
            "resize": list(FIXED_TAIL_SIZE),
            "normalize_mean": list(NORMALIZE_MEAN),
            "normalize_std": list(NORMALIZE_STD),
        },
        "ops": [
            {
                "name": op.name,
                "template": op.template,
                "params": [
                    {
                        "name": p.name,
                        "render_style": p.render_style,
                        "domain": p.domain.to_json(),
                    }
                    for p in op.params
                ],
            }
            for op in catalog
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_catalog(path: str | Path) -> list[TransformOpSpec]:
    """Load a catalog document written by save_catalog (or hand-edited)."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    ops = []
    for entry in doc["ops"]:
        params = tuple(
            ParamSpec(
                name=p["name"],
                domain=_domain_from_json(p["domain"]),
                render_style=p.get("render_style", "keyword"),
            )
            for p in entry["params"]
        )
        ops.append(TransformOpSpec(name=entry["name"], params=params, template=entry["template"]))
    catalog_by_name(ops)  # uniqueness check
    return ops


# ---------------------------------------------------------------------------
# Enumeration and rendering
# ---------------------------------------------------------------------------

def _pipeline_seed(seed: int, arity: int, index: int) -> int:
    # Unique per (seed, arity, index) for index < 2**32.
    return (seed << 34) ^ (arity << 32) ^ index


def enumerate_pipelines(
    arity: int,
    count: int,
    seed: int,
    catalog: list[TransformOpSpec] | None = None,
) -> list[PipelineSpec]:
    """Emit ``count`` pipelines of the given arity.

    Ordered op combinations (no op repeated within one pipeline) are visited
    in lexicographic catalog order; once the combination space is exhausted
    the walk cycles from the start, binding fresh parameters on each visit.
    Each pipeline binds its parameters from an independent stream derived
    from (seed, arity, pipeline index), so the emission is reproducible and
    order-independent.

    Raises:
        ValueError: arity outside 1..3 or count < 1.
    """
    if arity not in (1, 2, 3):
        raise ValueError(f"arity must be 1, 2, or 3, got {arity}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")

    ops = default_catalog() if catalog is None else catalog
    if len(ops) < arity:
        raise ValueError(f"catalog of {len(ops)} ops cannot fill arity {arity}")
    combos = list(itertools.permutations(range(len(ops)), arity))

    pipelines = []
    for index in range(count):
        combo = combos[index % len(combos)]
        pipe_seed = _pipeline_seed(seed, arity, index)
        rng = random.Random(pipe_seed)
        variable_ops = tuple((ops[i].name, ops[i].bind(rng)) for i in combo)
        pipelines.append(
            PipelineSpec(variable_ops=variable_ops, fixed_tail=FIXED_TAIL, rng_seed=pipe_seed)
        )
    return pipelines


def render_pipeline(
    pipeline: PipelineSpec,
    catalog: list[TransformOpSpec] | None = None,
) -> str:
    """Render a pipeline to candidate source text.

    The output defines exactly one function named ``transform`` returning the
    composed variable ops followed by the fixed tail, and passes the codec's
    structural validation. Byte-identical for identical inputs.

    Raises:
        KeyError: an op name in the pipeline is absent from the catalog.
    """
    index = catalog_by_name(catalog)
    stages = [index[name].render(values) for name, values in pipeline.variable_ops]
    stages.extend(pipeline.fixed_tail)
    body = ",\n        ".join(stages)
    return (
        "import torchvision.transforms as transforms\n"
        "\n"
        "\n"
        "def transform():\n"
        "    return transforms.Compose([\n"
        f"        {body},\n"
        "    ])\n"
    )


def validate_pipeline(
    pipeline: PipelineSpec,
    catalog: list[TransformOpSpec] | None = None,
) -> bool:
    """True iff every bound value lies inside its declared parameter domain."""
    index = catalog_by_name(catalog)
    for name, values in pipeline.variable_ops:
        op = index.get(name)
        if op is None:
            return False
        declared = {p.name for p in op.params}
        if set(values) != declared:
            return False
        for p in op.params:
            if not p.domain.contains(values[p.name]):
                return False
    return True
