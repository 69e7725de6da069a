"""Metric registry: ranges, optimization direction, output activation."""
import hashlib
import json
import math
from dataclasses import dataclass, asdict, replace

ACTIVATIONS = ("identity", "relu", "scaled_sigmoid", "tanh_unit")
DIRECTIONS = ("higher_better", "lower_better")
ORACLES = ("deterministic", "external_out_of_scope")
REFERENCE_TYPES = ("signal", "text", "no_reference", "text_and_signal")


@dataclass(frozen=True)
class MetricSpec:
    name: str
    lo: float
    hi: float
    direction: str
    activation: str
    oracle: str
    reference_type: str
    weight: float = 1.0
    lo_open: bool = False
    hi_open: bool = False
    # typical spread; divides scores when losses and composites are standardized
    scale: float = 1.0

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"{self.name}: bad direction {self.direction!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"{self.name}: bad activation {self.activation!r}")
        if self.oracle not in ORACLES:
            raise ValueError(f"{self.name}: bad oracle flag {self.oracle!r}")
        if self.reference_type not in REFERENCE_TYPES:
            raise ValueError(f"{self.name}: bad reference type {self.reference_type!r}")
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: empty range")
        if self.weight < 0 or self.scale <= 0:
            raise ValueError(f"{self.name}: weight must be >= 0 and scale > 0")
        # activation codomain must sit inside the range
        bounded = math.isfinite(self.lo) and math.isfinite(self.hi)
        ok = {
            "identity": not math.isfinite(self.lo) and not math.isfinite(self.hi),
            "relu": self.lo == 0 and not math.isfinite(self.hi),
            "scaled_sigmoid": bounded,
            "tanh_unit": self.lo <= -1 and self.hi >= 1,
        }[self.activation]
        if not ok:
            raise ValueError(f"{self.name}: activation {self.activation} does not fit range")

    @property
    def alpha(self):
        """-1 for higher-is-better metrics, +1 for lower-is-better ones."""
        return -1 if self.direction == "higher_better" else 1

    @property
    def has_oracle(self):
        return self.oracle == "deterministic"

    def contains(self, v):
        if not math.isfinite(v):
            return False
        above = v > self.lo if self.lo_open else v >= self.lo
        below = v < self.hi if self.hi_open else v <= self.hi
        return above and below

    def clamp(self, v):
        return min(max(v, self.lo), self.hi)

    def to_json(self):
        d = asdict(self)
        d["range"] = [None if math.isinf(self.lo) else self.lo, None if math.isinf(self.hi) else self.hi]
        del d["lo"], d["hi"]
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        lo, hi = d.pop("range")
        return cls(lo=-math.inf if lo is None else float(lo), hi=math.inf if hi is None else float(hi), **d)


INF = math.inf


def _mos(name, ref="no_reference"):
    return MetricSpec(name, 1.0, 5.0, "higher_better", "scaled_sigmoid",
                      "external_out_of_scope", ref, scale=0.75)


DEFAULT_SPECS = (
    MetricSpec("PESQ", 1.0, 4.5, "higher_better", "scaled_sigmoid", "external_out_of_scope", "signal", scale=0.75),
    _mos("DNSMOS"),
    _mos("SIGMOS_OVRL"),
    _mos("SIGMOS_NOISE"),
    _mos("SIGMOS_REVERB"),
    _mos("SIGMOS_COL"),
    _mos("SIGMOS_LOUD"),
    _mos("SIGMOS_SIG"),
    MetricSpec("LSD", 0.0, INF, "lower_better", "relu", "deterministic", "signal", scale=8.0),
    MetricSpec("SDR", -INF, INF, "higher_better", "identity", "deterministic", "signal", scale=8.0),
    _mos("MOS"),
    _mos("UTMOS"),
    _mos("Distill_MOS"),
    _mos("NISQA_MOS"),
    _mos("SCOREQ"),
    MetricSpec("CER", 0.0, INF, "lower_better", "relu", "deterministic", "text", scale=0.25),
    MetricSpec("ESTOI", 0.0, 1.0, "higher_better", "scaled_sigmoid", "deterministic", "signal", scale=0.2),
    MetricSpec("SpeechBERTScore", 0.0, 1.0, "higher_better", "scaled_sigmoid", "external_out_of_scope",
               "signal", scale=0.05),
    MetricSpec("PhonemeSimilarity", 0.0, 1.0, "higher_better", "scaled_sigmoid", "deterministic", "signal",
               scale=0.2),
    MetricSpec("SpeakerSimilarity", -1.0, 1.0, "higher_better", "tanh_unit", "deterministic", "signal",
               scale=0.35),
    MetricSpec("MCD", 0.0, INF, "lower_better", "relu", "deterministic", "signal", scale=25.0),
    MetricSpec("RankingScore", 0.0, 1.0, "lower_better", "scaled_sigmoid", "deterministic", "text_and_signal",
               lo_open=True, scale=0.2),
)

# oracle-only; not a registry row of the extended model
SI_SNR_SPEC = MetricSpec("SI_SNR", -INF, INF, "higher_better", "identity", "deterministic", "signal", scale=8.0)

RANKING_SCORE = "RankingScore"


class MetricRegistry:
    """Ordered, immutable collection of :class:`MetricSpec`."""

    def __init__(self, specs):
        specs = tuple(specs)
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ValueError("metric names must be unique")
        self._specs = specs
        self._index = {s.name: i for i, s in enumerate(specs)}

    def __len__(self):
        return len(self._specs)

    def __iter__(self):
        return iter(self._specs)

    def __contains__(self, name):
        return name in self._index

    def __getitem__(self, name):
        return self._specs[self._index[name]]

    def __eq__(self, other):
        return isinstance(other, MetricRegistry) and self._specs == other._specs

    @property
    def names(self):
        return [s.name for s in self._specs]

    def index(self, name):
        return self._index[name]

    def deterministic(self):
        return [s.name for s in self._specs if s.has_oracle]

    def with_weights(self, weights):
        unknown = set(weights) - set(self._index)
        if unknown:
            raise KeyError(f"unknown metrics: {sorted(unknown)}")
        return MetricRegistry(replace(s, weight=float(weights.get(s.name, s.weight))) for s in self._specs)

    def to_json(self):
        return [s.to_json() for s in self._specs]

    @classmethod
    def from_json(cls, data):
        return cls(MetricSpec.from_json(d) for d in data)

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps() + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def digest(self):
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]


def default_registry():
    return MetricRegistry(DEFAULT_SPECS)


class MetricVector:
    """Metric values keyed by name; absent entries are missing labels."""

    def __init__(self, registry, values=None, validate=True):
        self.registry = registry
        self.values = {}
        for k, v in (values or {}).items():
            if v is None or (isinstance(v, float) and math.isnan(v)):
                continue
            if k not in registry:
                raise KeyError(f"metric {k!r} not in registry")
            self.values[k] = float(v)
        if validate:
            self.validate()

    def validate(self):
        for k, v in self.values.items():
            if not self.registry[k].contains(v):
                raise ValueError(f"{k}={v} outside its range")

    def __getitem__(self, name):
        return self.values[name]

    def get(self, name, default=None):
        return self.values.get(name, default)

    def __contains__(self, name):
        return name in self.values

    def present(self):
        return [n for n in self.registry.names if n in self.values]

    def __repr__(self):
        return f"MetricVector({self.values})"
