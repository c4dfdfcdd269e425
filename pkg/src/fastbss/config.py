"""Run configuration shared by the command line and the benchmark grid.

The on-disk form is YAML with the nested layout of :class:`RunConfig`;
``RunConfig.from_dict(cfg.to_dict()) == cfg`` for every valid config. Unknown
keys are rejected so typos do not silently fall back to defaults.
"""

import dataclasses
from dataclasses import dataclass, field

import yaml

from .exceptions import ConfigMismatch
from .mixsim import SceneConfig
from .regufast import PRIOR_SCALE, RegularizerSchedule
from .signal import StftConfig

__all__ = [
    "METHODS",
    "INITS",
    "SceneSettings",
    "BenchSettings",
    "RunConfig",
    "load_config",
    "dump_config",
]

METHODS = ("ilrma", "fastmnmf", "regufast1", "regufast2")
INITS = ("identity", "pca", "ilrma")


@dataclass
class SceneSettings:
    n_mic: int = 2
    t60_ms: float = 300.0
    drr_db: float = 0.0
    snr_db: float = 0.0
    duration_s: float = 4.0
    mic_spacing_m: float = 0.04

    def scene_config(self, seed, sample_rate=16000):
        return SceneConfig(
            n_mic=self.n_mic,
            n_src=self.n_mic,
            t60_ms=self.t60_ms,
            drr_db=self.drr_db,
            snr_db=self.snr_db,
            sample_rate=sample_rate,
            seed=seed,
            mic_spacing_m=self.mic_spacing_m,
        )


@dataclass
class BenchSettings:
    scenes: list = field(default_factory=lambda: list(range(8)))
    methods: list = field(
        default_factory=lambda: [
            "ilrma",
            "fastmnmf-identity",
            "fastmnmf-pca",
            "regufast1",
            "regufast2",
        ]
    )
    workers: int = 1


@dataclass
class RunConfig:
    method: str = "regufast2"
    init: str = "identity"
    iterations: int = 300
    ilrma_iterations: int = 50
    n_basis: int = 20
    seed: int = 0
    reference: int = 0
    prior_scale: float = PRIOR_SCALE
    stft: StftConfig = field(default_factory=StftConfig)
    schedule: RegularizerSchedule = field(default_factory=RegularizerSchedule)
    scene: SceneSettings = field(default_factory=SceneSettings)
    bench: BenchSettings = field(default_factory=BenchSettings)
    out_dir: str = "out"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigMismatch(f"method must be one of {METHODS}, got {self.method!r}")
        if self.init not in INITS:
            raise ConfigMismatch(f"init must be one of {INITS}, got {self.init!r}")
        if self.iterations < 0 or self.ilrma_iterations < 0:
            raise ConfigMismatch("iteration counts must be nonnegative")
        if self.n_basis < 1:
            raise ConfigMismatch("n_basis must be positive")

    @property
    def n_src(self):
        return self.scene.n_mic

    def schedule_for(self, method):
        """Schedule used by ``method``: constant for regufast1, geometric otherwise."""
        mode = "constant" if method == "regufast1" else "geometric"
        return dataclasses.replace(self.schedule, mode=mode, total=self.iterations)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        nested = {
            "stft": StftConfig,
            "schedule": RegularizerSchedule,
            "scene": SceneSettings,
            "bench": BenchSettings,
        }
        kwargs = {}
        for key, value in data.items():
            if key in nested:
                kwargs[key] = _build(nested[key], value, key)
            else:
                kwargs[key] = value
        _check_keys(cls, kwargs, "config")
        return cls(**kwargs)

    def with_overrides(self, **overrides):
        """Copy with dotted-path overrides, e.g. ``{"schedule.lambda0": 1e-5}``; ``None`` skips."""
        data = self.to_dict()
        for path, value in overrides.items():
            if value is None:
                continue
            node = data
            *parents, leaf = path.split(".")
            for part in parents:
                node = node[part]
            if leaf not in node:
                raise ConfigMismatch(f"unknown config field {path!r}")
            node[leaf] = value
        return RunConfig.from_dict(data)


def _check_keys(cls, data, where):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigMismatch(f"unknown keys in {where}: {sorted(unknown)}")


def _build(cls, value, where):
    if isinstance(value, cls):
        return value
    value = dict(value or {})
    _check_keys(cls, value, where)
    try:
        return cls(**value)
    except (TypeError, ValueError) as exc:
        raise ConfigMismatch(f"invalid {where} section: {exc}") from exc


def load_config(path=None):
    """Read a YAML config; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    with open(path) as fh:
        return RunConfig.from_dict(yaml.safe_load(fh))


def dump_config(cfg, path=None):
    """YAML text for ``cfg``; also written to ``path`` when given."""
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=False)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
