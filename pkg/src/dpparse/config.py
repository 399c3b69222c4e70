"""Run configuration: defaults, config files, and flag overrides.

Config files are line-based ``section.key = value`` text (comments start
with ``#``); flags override the file, the file overrides defaults, and
unknown keys are rejected so experiment records stay trustworthy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from dpparse.density import DensityParams
from dpparse.scoring import DPParams
from dpparse.synthgen import GenConfig
from dpparse.trainer import TrainerConfig


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_int(text: str):
    lowered = text.strip().lower()
    if lowered in ("none", "auto"):
        return None
    return int(text)


def _auto_float(text: str):
    lowered = text.strip().lower()
    if lowered == "auto":
        return "auto"
    return float(text)


# key -> (parser, default)
_SCHEMA: dict[str, tuple] = {
    "trainer.n_iterations": (int, 10),
    "trainer.beam": (int, 10),
    "trainer.l0_subsample": (int, 1_000_000),
    "trainer.seed": (int, 0),
    "trainer.workers": (_optional_int, None),
    "trainer.min_len": (int, 1),
    "trainer.max_len": (int, 20),
    "trainer.temperature": (float, 1.0),
    "trainer.frequency_backend": (str, "knn"),
    "trainer.kmeans_clusters": (int, 0),
    "trainer.calibration_sample": (int, 10_000),
    "trainer.normalize": (_bool, False),
    "dp.alpha0": (float, 100.0),
    "dp.gamma": (float, 1.8),
    "dp.delta": (_auto_float, "auto"),
    "dp.epsilon_log": (float, 1e-10),
    "dp.penalty_sign": (float, -1.0),
    "density.k": (int, 100),
    "density.beta": (float, 1.0),
    "density.epsilon_f": (float, 1e-3),
    "gen.vocab_size": (int, 50),
    "gen.n_utterances": (int, 2000),
    "gen.dim": (int, 16),
    "gen.zipf_exponent": (float, 1.0),
    "gen.word_len_min": (int, 2),
    "gen.word_len_max": (int, 6),
    "gen.words_per_utterance_min": (int, 2),
    "gen.words_per_utterance_max": (int, 4),
    "gen.noise_sigma": (float, 0.1),
    "gen.alphabet_size": (int, 20),
}

DELTA_BY_MODE = {"continuous": 4.0, "discrete": 2.0}


@dataclass
class RunConfig:
    """Typed view over the flat key/value settings."""

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = {k: default for k, (_p, default) in _SCHEMA.items()}
        merged.update(self.values)
        self.values = merged

    def __getitem__(self, key: str):
        return self.values[key]

    def trainer_config(self, mode: str) -> TrainerConfig:
        v = self.values
        delta = v["dp.delta"]
        if delta == "auto":
            delta = DELTA_BY_MODE[mode]
        dp = DPParams(
            alpha0=v["dp.alpha0"],
            gamma=v["dp.gamma"],
            delta=delta,
            epsilon_log=v["dp.epsilon_log"],
            penalty_sign=v["dp.penalty_sign"],
        )
        density = DensityParams(
            k=v["density.k"], beta=v["density.beta"], epsilon_f=v["density.epsilon_f"]
        )
        return TrainerConfig(
            n_iterations=v["trainer.n_iterations"],
            beam=v["trainer.beam"],
            l0_subsample=v["trainer.l0_subsample"],
            seed=v["trainer.seed"],
            workers=v["trainer.workers"],
            min_len=v["trainer.min_len"],
            max_len=v["trainer.max_len"],
            temperature=v["trainer.temperature"],
            frequency_backend=v["trainer.frequency_backend"],
            kmeans_clusters=v["trainer.kmeans_clusters"],
            calibration_sample=v["trainer.calibration_sample"],
            normalize=v["trainer.normalize"],
            dp=dp,
            density=density,
        )

    def gen_config(self, mode: str) -> GenConfig:
        v = self.values
        return GenConfig(
            vocab_size=v["gen.vocab_size"],
            n_utterances=v["gen.n_utterances"],
            dim=v["gen.dim"],
            zipf_exponent=v["gen.zipf_exponent"],
            word_len_range=(v["gen.word_len_min"], v["gen.word_len_max"]),
            words_per_utterance_range=(
                v["gen.words_per_utterance_min"],
                v["gen.words_per_utterance_max"],
            ),
            noise_sigma=v["gen.noise_sigma"],
            seed=v["trainer.seed"],
            mode=mode,
            alphabet_size=v["gen.alphabet_size"],
        )


def _parse_pair(key: str, raw: str):
    key = key.strip()
    if key not in _SCHEMA:
        raise ValueError(f"unknown config key {key!r}")
    parser, _default = _SCHEMA[key]
    try:
        return key, parser(raw.strip())
    except (ValueError, TypeError) as exc:
        raise ValueError(f"bad value for {key}: {raw.strip()!r} ({exc})") from None


def read_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected 'section.key = value'")
            key, raw = stripped.split("=", 1)
            try:
                key, value = _parse_pair(key, raw)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            values[key] = value
    return values


def load_run_config(
    config_path=None, overrides: list[str] | None = None, **direct
) -> RunConfig:
    """Merge defaults, an optional config file, and flag overrides.

    ``overrides`` are ``section.key=value`` strings from ``--set`` flags;
    ``direct`` values (already typed) win over everything and come from
    dedicated flags such as ``--seed``.
    """
    values: dict = {}
    if config_path is not None:
        values.update(read_config_file(config_path))
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"--set expects section.key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key, value = _parse_pair(key, raw)
        values[key] = value
    for key, value in direct.items():
        if value is not None:
            if key not in _SCHEMA:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = value
    return RunConfig(values)
