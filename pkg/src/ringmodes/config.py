"""Pipeline configuration: a small sectioned key = value format.

Sections are bracketed headers; values are typed against a fixed schema
and unknown sections or keys are hard errors with line numbers, so typos
fail fast instead of silently running defaults.  One section family is
open-ended: every [mode.<label>] section declares one operating mode to
simulate (its `missing` key lists removed ring nodes).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["ConfigError", "PipelineConfig", "parse_pipeline_config", "DEFAULT_CONFIG_TEXT"]


class ConfigError(ValueError):
    """Malformed configuration; the message carries file and line."""


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int(s: str) -> int:
    return int(s.strip(), 10)


def _parse_float(s: str) -> float:
    v = float(s)
    if v != v or v in (float("inf"), float("-inf")):
        raise ValueError("must be finite")
    return v


def _parse_int_list(s: str) -> tuple[int, ...]:
    s = s.strip()
    if not s:
        return ()
    return tuple(int(tok.strip(), 10) for tok in s.split(","))


def _parse_float_or_list(s: str):
    parts = [tok.strip() for tok in s.split(",") if tok.strip()]
    if len(parts) == 1:
        return _parse_float(parts[0])
    return tuple(_parse_float(tok) for tok in parts)


def _parse_str(s: str) -> str:
    return s.strip()


# section -> key -> (parser, default); None default means required
_SCHEMA = {
    "run": {
        "seed": (_parse_int, 0),
    },
    "ring": {
        "n_nodes": (_parse_int, 8),
        "coupling_strength": (_parse_float, 0.8),
        "natural_freq": (_parse_float_or_list, 2.0),
        "n_sensors_per_node": (_parse_int, 3),
        "n_vars_per_sensor": (_parse_int, 2),
        "sample_rate": (_parse_float, 200.0),
        "duration": (_parse_float, 20.0),
    },
    "windows": {
        "length": (_parse_int, 16),
        "stride": (_parse_int, 4),
        "eval_fraction": (_parse_float, 0.3),
    },
    "arch": {
        "hidden1": (_parse_int, 20),
        "hidden2": (_parse_int, 12),
        "dense": (_parse_int, 32),
        "beta": (_parse_float, 1.0),
        "variance_scaled_noise": (_parse_bool, False),
        "output_gate_uses_prev_cell": (_parse_bool, False),
        "ortho_in_loss": (_parse_bool, False),
    },
    "mlp": {
        "hidden": (_parse_int, 256),
        "beta": (_parse_float, 1.0),
    },
    "train": {
        "model": (_parse_str, "bilstm_vae"),
        "batch_size": (_parse_int, 64),
        "max_epochs": (_parse_int, 2000),
        "patience": (_parse_int, 100),
        "validation_fraction": (_parse_float, 0.2),
        "learning_rate": (_parse_float, 1e-3),
        "clip_norm": (_parse_float, 5.0),
    },
    "kde": {
        "grid_size": (_parse_int, 100),
        "scalar_bandwidth_kernel": (_parse_bool, False),
    },
    "classify": {
        "backend": (_parse_str, "sinkhorn"),
        "epsilon": (_parse_float, 1e-3),
        "max_iter": (_parse_int, 300000),
        "tol": (_parse_float, 1e-6),
        "pool": (_parse_int, 1),
    },
}

_MODE_SCHEMA = {"missing": (_parse_int_list, ())}


@dataclass
class PipelineConfig:
    """Typed view of one configuration file.

    modes maps declaration order to (label, missing node indices); the
    remaining groups are plain per-section dictionaries already typed per
    the schema.
    """

    seed: int = 0
    ring: dict = field(default_factory=dict)
    modes: list[tuple[str, tuple[int, ...]]] = field(default_factory=list)
    windows: dict = field(default_factory=dict)
    arch: dict = field(default_factory=dict)
    mlp: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    kde: dict = field(default_factory=dict)
    classify: dict = field(default_factory=dict)


def _tokenize(text: str, source: str):
    """Yield (line_no, section, key, value) after syntax checks."""
    section = None
    seen_sections: set[str] = set()
    seen_keys: set[tuple[str, str]] = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"{source}:{line_no}: malformed section header {raw!r}")
            section = line[1:-1].strip()
            if section in seen_sections:
                raise ConfigError(f"{source}:{line_no}: duplicate section [{section}]")
            seen_sections.add(section)
            yield line_no, section, None, None
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected key = value, got {raw!r}")
        if section is None:
            raise ConfigError(f"{source}:{line_no}: key outside any section")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{line_no}: empty key")
        if (section, key) in seen_keys:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r} in [{section}]")
        seen_keys.add((section, key))
        yield line_no, section, key, value.strip()


def parse_pipeline_config(path_or_text, source: str | None = None) -> PipelineConfig:
    """Parse and validate a config file (or literal text).

    Unknown sections and keys are errors; missing ones fall back to the
    schema defaults.
    """
    if source is None and isinstance(path_or_text, (str, Path)) and "\n" not in str(path_or_text):
        source = str(path_or_text)
        text = Path(path_or_text).read_text(encoding="utf-8")
    else:
        text = str(path_or_text)
        source = source or "<config>"

    raw: dict[str, dict[str, str]] = {}
    mode_order: list[str] = []
    key_lines: dict[tuple[str, str], int] = {}
    for line_no, section, key, value in _tokenize(text, source):
        if key is None:
            if section.startswith("mode."):
                label = section[len("mode."):].strip()
                if not label:
                    raise ConfigError(f"{source}:{line_no}: empty mode label")
                mode_order.append(label)
            elif section not in _SCHEMA:
                raise ConfigError(f"{source}:{line_no}: unknown section [{section}]")
            raw.setdefault(section, {})
            continue
        raw[section][key] = value
        key_lines[(section, key)] = line_no

    cfg = PipelineConfig()
    for section, schema in _SCHEMA.items():
        values = {}
        present = raw.get(section, {})
        for key, text_value in present.items():
            if key not in schema:
                line = key_lines[(section, key)]
                raise ConfigError(f"{source}:{line}: unknown key {key!r} in [{section}]")
        for key, (parser, default) in schema.items():
            if key in present:
                try:
                    values[key] = parser(present[key])
                except ValueError as exc:
                    line = key_lines[(section, key)]
                    raise ConfigError(
                        f"{source}:{line}: bad value for {key!r} in [{section}]: {exc}"
                    ) from exc
            else:
                values[key] = default
        if section == "run":
            cfg.seed = values["seed"]
        else:
            setattr(cfg, section, values)

    for label in mode_order:
        section = f"mode.{label}"
        present = raw.get(section, {})
        for key in present:
            if key not in _MODE_SCHEMA:
                line = key_lines[(section, key)]
                raise ConfigError(f"{source}:{line}: unknown key {key!r} in [{section}]")
        parser, default = _MODE_SCHEMA["missing"]
        if "missing" in present:
            try:
                missing = parser(present["missing"])
            except ValueError as exc:
                line = key_lines[(section, "missing")]
                raise ConfigError(
                    f"{source}:{line}: bad value for 'missing' in [{section}]: {exc}"
                ) from exc
        else:
            missing = default
        cfg.modes.append((label, missing))

    if not 0.0 <= cfg.windows["eval_fraction"] < 1.0:
        raise ConfigError(f"{source}: eval_fraction must lie in [0, 1)")
    if cfg.train["model"] not in ("bilstm_vae", "mlp_vae"):
        raise ConfigError(f"{source}: train.model must be bilstm_vae or mlp_vae")
    if cfg.classify["backend"] not in ("exact", "sinkhorn"):
        raise ConfigError(f"{source}: classify.backend must be exact or sinkhorn")
    if cfg.classify["pool"] < 1 or cfg.kde["grid_size"] % cfg.classify["pool"]:
        raise ConfigError(f"{source}: classify.pool must divide kde.grid_size")
    return cfg


DEFAULT_CONFIG_TEXT = """\
# Six operating modes of an eight-node oscillator ring.
[run]
seed = 0

[ring]
n_nodes = 8
coupling_strength = 0.8
natural_freq = 2.0
n_sensors_per_node = 3
n_vars_per_sensor = 2
sample_rate = 200
duration = 20

[mode.full]
missing =

[mode.m1]
missing = 1

[mode.m12]
missing = 1,2

[mode.m13]
missing = 1,3

[mode.m14]
missing = 1,4

[mode.m15]
missing = 1,5

[windows]
length = 16
stride = 4
eval_fraction = 0.3

[arch]
hidden1 = 20
hidden2 = 12
dense = 32
beta = 1.0

[train]
model = bilstm_vae
batch_size = 64
max_epochs = 2000
patience = 100
validation_fraction = 0.2
learning_rate = 0.001
clip_norm = 5.0

[kde]
grid_size = 100

[classify]
backend = sinkhorn
epsilon = 0.001
max_iter = 300000
tol = 0.000001
# pool > 1 sums k-by-k cell blocks before solving; cuts solver cost ~k^4
pool = 1
"""
