"""Run configuration: flat TOML keys, defaults, validation and echo."""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .data import NoiseSpec
from .errors import ConfigError
from .losses import SslConfig
from .selection import SCHEME_ALIASES, canonical_scheme


@dataclass(frozen=True)
class RunConfig:
    # data
    class_count: int = 10
    dim: int = 8
    per_class: int = 500
    separation: float = 3.5
    test_per_class: int = 100
    pretrain_fraction: float = 0.2
    # label noise
    noise_kind: str = "symmetric"
    noise_rate: float = 0.9
    flip_map: list = field(default_factory=list)
    # auxiliary scorer
    embed_dim: int = 32
    tau: float = 0.07
    context_count: int = 16
    aux_quality: float = 0.8
    prompt_lr: float = 0.05
    prompt_tuning: bool = True
    # classifier and optimizer
    hidden: int = 64
    lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_decay_epoch: int = 20
    lr_decay_factor: float = 10.0
    # schedule
    epochs_pretrain: int = 20
    epochs_warmup: int = 5
    epochs_main: int = 40
    batch_size: int = 64
    # semi-supervised losses
    lambda_u: float = 0.5
    lambda_c: float = 0.025
    lambda_r: float = 1.0
    delta: float = 0.95
    tau_con: float = 0.5
    sigma_w: float = 0.1
    sigma_s: float = 0.6
    drop_prob: float = 0.2
    soft_pseudo: bool = False
    use_contrastive: bool = True
    # selection
    scheme: str = "gmm2d"
    epsilon: float = 0.5
    beta: float = 0.2
    gmm_max_iters: int = 200
    gmm_tol: float = 1e-6
    shared_covariance: bool = True
    # reporting
    seed: int = 0
    roc_epochs: list = field(default_factory=list)
    final_window: int = 10
    dump_partitions: bool = False
    record_seconds: bool = True

    def __post_init__(self):
        validate(self)

    @property
    def ssl(self) -> SslConfig:
        return SslConfig(self.lambda_u, self.lambda_c, self.lambda_r, self.delta, self.tau_con,
                         self.sigma_w, self.sigma_s, self.drop_prob, self.soft_pseudo)

    @property
    def noise(self) -> NoiseSpec:
        if self.noise_kind == "asymmetric":
            fm = self.flip_map or [(c + 1) % self.class_count for c in range(self.class_count)]
            mapping = {c: int(t) for c, t in enumerate(fm) if int(t) >= 0}
        else:
            mapping = {}
        return NoiseSpec(self.noise_kind, self.noise_rate, mapping)

    @property
    def uses_aux(self) -> bool:
        return self.scheme != "gmm1d_loss_only"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _check(cond, key, constraint):
    if not cond:
        raise ConfigError(f"{key}: must satisfy {constraint}")


def validate(c: RunConfig) -> None:
    for key in ("class_count",):
        _check(getattr(c, key) >= 2, key, ">= 2")
    _check(c.dim >= 2, "dim", ">= 2")
    for key in ("per_class", "test_per_class", "embed_dim", "context_count", "hidden", "gmm_max_iters",
                "final_window"):
        _check(getattr(c, key) >= 1, key, ">= 1")
    _check(c.separation > 0, "separation", "> 0")
    _check(0 < c.pretrain_fraction <= 10, "pretrain_fraction", "in (0, 10]")
    _check(c.noise_kind in ("symmetric", "asymmetric"), "noise_kind", "one of symmetric, asymmetric")
    _check(0 <= c.noise_rate <= 1, "noise_rate", "in [0, 1]")
    if c.flip_map:
        _check(len(c.flip_map) == c.class_count, "flip_map", "one entry per class (-1 for none)")
        for k, t in enumerate(c.flip_map):
            _check(-1 <= int(t) < c.class_count and int(t) != k, "flip_map",
                   "entries in [0, class_count) and different from their own class, or -1")
    _check(c.tau > 0, "tau", "> 0")
    _check(0 <= c.aux_quality <= 1, "aux_quality", "in [0, 1]")
    for key in ("prompt_lr", "lr", "weight_decay"):
        _check(getattr(c, key) >= 0, key, ">= 0")
    _check(0 <= c.momentum < 1, "momentum", "in [0, 1)")
    _check(c.lr_decay_epoch >= 0, "lr_decay_epoch", ">= 0")
    _check(c.lr_decay_factor > 0, "lr_decay_factor", "> 0")
    for key in ("epochs_pretrain", "epochs_warmup", "epochs_main"):
        _check(getattr(c, key) >= 0, key, ">= 0")
    _check(c.batch_size >= 2, "batch_size", ">= 2")
    for key in ("lambda_u", "lambda_c", "lambda_r"):
        _check(getattr(c, key) >= 0, key, ">= 0")
    _check(0 < c.delta <= 1, "delta", "in (0, 1]")
    _check(c.tau_con > 0, "tau_con", "> 0")
    _check(0 <= c.sigma_w < c.sigma_s, "sigma_w", "0 <= sigma_w < sigma_s")
    _check(0 <= c.drop_prob < 1, "drop_prob", "in [0, 1)")
    _check(c.scheme in SCHEME_ALIASES.values(), "scheme", f"one of {sorted(set(SCHEME_ALIASES.values()))}")
    _check(0 <= c.epsilon <= 1, "epsilon", "in [0, 1]")
    _check(0 <= c.beta <= 1, "beta", "in [0, 1]")
    _check(c.gmm_tol >= 0, "gmm_tol", ">= 0")
    for e in c.roc_epochs:
        _check(1 <= int(e) <= max(c.epochs_main, 1), "roc_epochs", "epochs in [1, epochs_main]")


def _coerce(key, value):
    typ = FIELD_TYPES[key]
    try:
        if typ is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if typ is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if typ is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if typ is str:
            if not isinstance(value, str):
                raise TypeError
            return value
        if typ is list:
            if not isinstance(value, list):
                raise TypeError
            return [int(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {typ.__name__}, got {value!r}") from None
    return value


def config_from_dict(values: dict, base: RunConfig | None = None) -> RunConfig:
    unknown = sorted(set(values) - set(FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    coerced = {k: _coerce(k, v) for k, v in values.items()}
    if "scheme" in coerced:
        try:
            coerced["scheme"] = canonical_scheme(coerced["scheme"])
        except ValueError as exc:
            raise ConfigError(f"scheme: {exc}") from None
    return dataclasses.replace(base or RunConfig(), **coerced)


def parse_config(path) -> RunConfig:
    """Read a flat ``key = value`` TOML file; missing keys take their defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        values = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    nested = [k for k, v in values.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{path}: tables are not allowed, keys must be flat (found {nested})")
    return config_from_dict(values)


def dump_config(config: RunConfig) -> str:
    lines = []
    for k, v in config.to_dict().items():
        if isinstance(v, bool):
            lines.append(f"{k} = {'true' if v else 'false'}")
        elif isinstance(v, str):
            lines.append(f'{k} = "{v}"')
        elif isinstance(v, float):
            lines.append(f"{k} = {v!r}")
        else:
            lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
