"""Run configuration: one nested YAML file, echoed verbatim into every output dir."""

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError, DataError
from .model import ModelConfig
from .objectives import LossWeights
from .training import TrainerConfig

ABLATIONS = {
    "no-filter-gate": {"model": {"filter_gate": False}},
    "no-relation-graphs": {"model": {"item_graph": False, "user_graph": False}},
    "no-text": {"model": {"text": False}},
    "no-image": {"model": {"vision": False}},
    "no-modal-encoders": {"model": {"modal_encoders": False}},
    "no-s3": {"loss": {"gamma": 0.0}},
    "no-inter": {"loss": {"beta": 0.0}},
    "no-intra": {"loss": {"alpha": 0.0}},
    "no-alignment": {"loss": {"alpha": 0.0, "beta": 0.0}},
}


@dataclass
class DataConfig:
    source: str = "tiny"           # files | tiny | synthetic
    interactions: str | None = None
    header: bool = False
    features: dict = field(default_factory=dict)   # modality -> path
    kcore: int = 5
    split: list = field(default_factory=lambda: [0.8, 0.1, 0.1])
    split_seed: int | None = None  # defaults to the run seed
    synthetic: dict = field(default_factory=dict)  # kwargs for synthetic.block_dataset

    def __post_init__(self):
        if self.source not in ("files", "tiny", "synthetic"):
            raise ConfigError(f"data.source must be files, tiny or synthetic, got {self.source!r}")
        if self.source == "files" and not self.interactions:
            raise ConfigError("data.interactions is required when data.source is 'files'")
        self.split = [float(x) for x in self.split]


@dataclass
class DiagnosticsConfig:
    enabled: bool = False
    sample_size: int = 512
    line_eval: bool = True


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    train: TrainerConfig = field(default_factory=TrainerConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    seed: int = 2024
    cache_dir: str = ".dream_cache"
    output_dir: str = "runs/default"
    ablations: list = field(default_factory=list)

    def __post_init__(self):
        unknown = set(self.ablations) - set(ABLATIONS)
        if unknown:
            raise ConfigError(f"unknown ablation(s): {sorted(unknown)}")

    def to_dict(self):
        d = asdict(self)
        d["train"]["eval_k"] = list(d["train"]["eval_k"])
        return d

    def dump(self, path):
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))

    def with_ablations(self, names):
        d = self.to_dict()
        for name in names:
            if name not in ABLATIONS:
                raise ConfigError(f"unknown ablation {name!r}")
            for section, values in ABLATIONS[name].items():
                d[section].update(values)
        d["ablations"] = sorted(set(self.ablations) | set(names))
        return from_dict(d)

    def effective(self):
        """Copy with the listed ablations applied to the model/loss sections."""
        return self.with_ablations(self.ablations) if self.ablations else self


_SECTIONS = {"data": DataConfig, "model": ModelConfig, "loss": LossWeights,
             "train": TrainerConfig, "diagnostics": DiagnosticsConfig}


def from_dict(d):
    d = dict(d or {})
    known = {f.name for f in fields(RunConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in d.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            value = value or {}
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be a mapping")
            names = {f.name for f in fields(cls)}
            bad = set(value) - names
            if bad:
                raise ConfigError(f"unknown {key} options: {sorted(bad)}")
            try:
                kwargs[key] = cls(**value)
            except TypeError as exc:
                raise ConfigError(f"bad {key} section: {exc}") from exc
        else:
            kwargs[key] = value
    return RunConfig(**kwargs)


def load_config(path=None, overrides=None):
    """Read a YAML config (or defaults when ``path`` is None).

    Relative data paths resolve against the config file's directory.
    """
    d = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise DataError(f"missing config file {path}")
        try:
            d = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
        base = path.parent.resolve()
        data = d.get("data") or {}
        if data.get("interactions"):
            data["interactions"] = str(base / data["interactions"])
        if data.get("features"):
            data["features"] = {m: str(base / p) for m, p in data["features"].items()}
    for dotted, value in (overrides or {}).items():
        node = d
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return from_dict(d)
