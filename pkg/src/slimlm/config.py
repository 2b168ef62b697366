"""Flat `key = value` run configuration.

One format serves the config file, the echoed effective.cfg, and the
metadata block inside checkpoints: UTF-8 lines `key = value`, full-line
`#` comments, no sections.  Unknown keys and malformed lines are errors
that name the offending line.
"""

from dataclasses import dataclass, fields


@dataclass
class RunConfig:
    # corpus paths and vocabulary limits (0 = uncapped)
    train: str = ""
    valid: str = ""
    test: str = ""
    out: str = ""
    vocab_min_count: int = 1
    vocab_max_size: int = 0
    # model
    seed: int = 1
    hidden: int = 128
    layers: int = 2
    scheme_in: str = "balanced"
    k_in: int = 8
    m_in: int = 0  # 0 = default to the vocabulary size (ratio 1/k_in)
    scheme_out: str = "partitioned"
    k_out: int = 0  # 0 with m_out 0 = dense output
    m_out: int = 0
    dropout: float = 0.0
    dropout_embed: float = 0.0
    loss: str = "full"
    nce_k: int = 20
    # optimization
    lr: float = 1.0
    lr_decay: float = 0.5
    optimizer: str = "sgd"
    clip: float = 5.0
    batch: int = 20
    bptt: int = 35
    max_epochs: int = 15
    eval_interval: int = 1
    eval_batch: int = 10
    wall_clock: bool = False


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str, where: str):
    typ = _FIELD_TYPES[key]
    try:
        if typ is bool:
            lowered = raw.lower()
            if lowered in ("true", "yes", "1"):
                return True
            if lowered in ("false", "no", "0"):
                return False
            raise ValueError
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ValueError(f"{where}: bad {typ.__name__} value {raw!r} for {key}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse `key = value` lines into a typed dict of RunConfig fields."""
    values = {}
    for ln, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{source}:{ln}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"{source}:{ln}: unknown key {key!r}")
        values[key] = _coerce(key, raw, f"{source}:{ln}")
    return values


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def merge_config(file_values: dict, overrides: dict) -> RunConfig:
    """Build a RunConfig from file values, then apply flag overrides on top."""
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**merged)


def format_config(cfg: RunConfig) -> str:
    """Echo a config deterministically; floats use shortest round-trip repr."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_config(cfg))
