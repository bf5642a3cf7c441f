"""Flat run configuration: `key = value` files, '#' comments, flag overrides.

Every key is registered with a type and default; unknown keys are rejected
with a nearest-key suggestion.  Values are re-validated by the owning module's
constructors when the typed config objects are built.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass
from pathlib import Path

from .backbone import BackboneConfig
from .forecaster import ModelConfig, TrainConfig
from .rendering import RenderSpec
from .sma import SmaConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (default, parser, help)
REGISTRY: dict[str, tuple] = {
    # data
    "csv": ("", str, "dataset CSV path (ETT layout)"),
    "train_frac": (0.6, float, "chronological train fraction"),
    "val_frac": (0.2, float, "chronological val fraction"),
    "test_frac": (0.2, float, "chronological test fraction"),
    "few_shot_ratio": (1.0, float, "fraction of the training segment to keep (earliest-first)"),
    "seq_len": (1440, int, "context length T"),
    "pred_len": (96, int, "horizon length H"),
    "stride": (24, int, "training window stride"),
    "eval_stride": (48, int, "val/test window stride"),
    "norm_const": (0.4, float, "normalization coefficient"),
    # synthetic data
    "synth_kind": ("", str, "synthetic kind: sinusoid_mix | trend_plus_season | noise"),
    "synth_length": (5000, int, "synthetic series length"),
    "synth_period": (24, int, "synthetic base period"),
    "synth_amplitude": ("1.0", str, "amplitude or comma-separated component amplitudes"),
    "synth_noise_std": (0.1, float, "synthetic noise standard deviation"),
    "synth_seed": (7, int, "synthetic generator seed"),
    # rendering
    "periodicity": (24, int, "fold periodicity P"),
    "image_size": (224, int, "square image side"),
    "align_const": (0.4, float, "visible-width proportional scale"),
    "patch_size": (16, int, "backbone patch size"),
    # backbone
    "d_model": (512, int, "hidden width"),
    "n_heads": (8, int, "attention heads"),
    "e_layers": (2, int, "encoder layers"),
    "d_layers": (1, int, "decoder layers"),
    "d_ff": (2048, int, "feed-forward width"),
    "dropout": (0.1, float, "block dropout rate"),
    "frozen": (True, _bool, "freeze backbone base weights"),
    # adapters / fusion
    "residual_weight": (0.05, float, "spectral-aligner residual blend weight"),
    "lora_rank": (4, int, "low-rank adapter rank"),
    "lora_alpha": (16.0, float, "low-rank adapter scaling factor"),
    "lora_dropout": (0.1, float, "dropout on the low-rank path"),
    "use_tga": (True, _bool, "enable the temporal grounding adapter"),
    "use_sma": (True, _bool, "enable the spectral magnitude aligner"),
    "fixed_beta": ("", str, "pin fusion beta to a constant (empty = learnable)"),
    "beta_init": (0.5, float, "initial fusion beta"),
    # training
    "lr": (1e-3, float, "learning rate (desk default; paper-scale uses 2e-6)"),
    "batch_size": (32, int, "windows per optimizer step"),
    "epochs": (10, int, "training epochs"),
    "patience": (3, int, "early-stopping patience"),
    "seed": (0, int, "global seed"),
    "adam_beta1": (0.9, float, "Adam first-moment decay"),
    "adam_beta2": (0.999, float, "Adam second-moment decay"),
    "adam_eps": (1e-8, float, "Adam epsilon"),
    # spectral analysis
    "pss_samples": (100, int, "number of sampled windows for PSS"),
    "f_lo": (0.05, float, "power-law fit mask lower bound"),
    "f_hi": (0.5, float, "power-law fit mask upper bound"),
    # execution
    "workers": (1, int, "worker count (results are worker-count independent)"),
}


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def snapshot(self) -> dict:
        """JSON-ready copy of every resolved value."""
        return dict(sorted(self.values.items()))


def _set(values: dict, key: str, raw: str, where: str):
    if key not in REGISTRY:
        near = difflib.get_close_matches(key, REGISTRY, n=1)
        hint = f"; nearest known key: {near[0]!r}" if near else ""
        raise ConfigError(f"{where}: unknown key {key!r}{hint}")
    _, parser, _ = REGISTRY[key]
    try:
        values[key] = parser(raw.strip())
    except ValueError as e:
        raise ConfigError(f"{where}: bad value for {key!r}: {e}") from None


def parse_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    """Defaults, then file entries, then `key=value` overrides (flags win)."""
    values = {k: v[0] for k, v in REGISTRY.items()}
    if path:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = [s.strip() for s in line.split("=", 1)]
            _set(values, key, raw, f"{path}:{lineno}")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = [s.strip() for s in item.split("=", 1)]
        _set(values, key, raw, f"override {item!r}")
    return RunConfig(values)


def amplitudes(cfg: RunConfig):
    parts = [p for p in str(cfg["synth_amplitude"]).split(",") if p.strip()]
    vals = tuple(float(p) for p in parts)
    return vals[0] if len(vals) == 1 else vals


def render_spec(cfg: RunConfig) -> RenderSpec:
    return RenderSpec(
        periodicity=cfg["periodicity"],
        image_height=cfg["image_size"],
        image_width=cfg["image_size"],
        align_const=cfg["align_const"],
        patch_size=cfg["patch_size"],
    )


def backbone_config(cfg: RunConfig) -> BackboneConfig:
    return BackboneConfig(
        image_height=cfg["image_size"],
        image_width=cfg["image_size"],
        patch_size=cfg["patch_size"],
        d_model=cfg["d_model"],
        n_heads=cfg["n_heads"],
        e_layers=cfg["e_layers"],
        d_layers=cfg["d_layers"],
        d_ff=cfg["d_ff"],
        dropout=cfg["dropout"],
        frozen=cfg["frozen"],
    )


def model_config(cfg: RunConfig) -> ModelConfig:
    fixed = cfg["fixed_beta"]
    return ModelConfig(
        render=render_spec(cfg),
        backbone=backbone_config(cfg),
        sma=SmaConfig(lam=cfg["residual_weight"]),
        lora_rank=cfg["lora_rank"],
        lora_alpha=cfg["lora_alpha"],
        lora_dropout=cfg["lora_dropout"],
        use_tga=cfg["use_tga"],
        use_sma=cfg["use_sma"],
        fixed_beta=float(fixed) if str(fixed).strip() else None,
        beta_init=cfg["beta_init"],
    )


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        lr=cfg["lr"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        patience=cfg["patience"],
        seed=cfg["seed"],
        beta1=cfg["adam_beta1"],
        beta2=cfg["adam_beta2"],
        eps=cfg["adam_eps"],
    )
