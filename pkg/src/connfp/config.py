"""Experiment configuration: a single JSON file with nested sections.

Validation errors always name the offending field with its dotted path, so a
bad config fails fast with an actionable message (and exit code 2 from the
command line).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .convae import ArchitectureConfig, TrainConfig
from .errors import ConfigurationError
from .fingerprint import METHODS, REFINE_TARGETS, PipelineOptions
from .synth import DEFAULT_SESSIONS, CohortConfig

_HYPER_MIN, _HYPER_MAX = 2, 64


@dataclass
class ExperimentConfig:
    cohort: CohortConfig = field(default_factory=CohortConfig)
    cohort_dir: str | None = None
    train_session: str = "rest"
    test_sessions: list[str] = field(default_factory=lambda: ["motor"])
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    K: int = 8
    L: int = 3
    K_range: tuple[int, int] = (2, 15)
    L_range: tuple[int, int] = (2, 15)
    sdl_iters: int = 30
    arch: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    detrend: bool = True
    bandpass: tuple[float, float] | None = None
    sample_rate_hz: float = 1.0
    n_perm: int = 1000
    refine_target: str = "residual"
    fisher_z: bool = False
    both_directions: bool = False
    n_networks: int = 12
    seed: int = 0
    output_dir: str = "out"

    def validate(self) -> None:
        self.cohort.validate()
        sessions = [str(s) for s in self.cohort.sessions]
        if self.train_session not in sessions:
            raise ConfigurationError(
                f"train_session: {self.train_session!r} is not in cohort.sessions {sessions}"
            )
        if not self.test_sessions:
            raise ConfigurationError("test_sessions: must list at least one session")
        for ses in self.test_sessions:
            if ses not in sessions:
                raise ConfigurationError(
                    f"test_sessions: {ses!r} is not in cohort.sessions {sessions}"
                )
            if ses == self.train_session:
                raise ConfigurationError(
                    f"test_sessions: {ses!r} equals train_session; sessions must differ"
                )
        if not self.methods:
            raise ConfigurationError("methods: must list at least one method")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigurationError(f"methods: unknown method {m!r}; choose from {METHODS}")
        for name, value in (("K", self.K), ("L", self.L)):
            if not (_HYPER_MIN <= int(value) <= _HYPER_MAX):
                raise ConfigurationError(
                    f"{name}: must lie in [{_HYPER_MIN}, {_HYPER_MAX}], got {value}"
                )
        if self.L > self.K:
            raise ConfigurationError(f"L: must be <= K, got L={self.L} K={self.K}")
        for name, rng in (("K_range", self.K_range), ("L_range", self.L_range)):
            lo, hi = int(rng[0]), int(rng[1])
            if lo > hi:
                raise ConfigurationError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
            if lo < _HYPER_MIN or hi > _HYPER_MAX:
                raise ConfigurationError(
                    f"{name}: bounds must lie in [{_HYPER_MIN}, {_HYPER_MAX}], got [{lo}, {hi}]"
                )
        if int(self.sdl_iters) < 1:
            raise ConfigurationError(f"sdl_iters: must be >= 1, got {self.sdl_iters}")
        try:
            self.arch.validate()
        except ConfigurationError as exc:
            raise ConfigurationError(f"ae: {exc}") from None
        try:
            self.train.validate()
        except ConfigurationError as exc:
            raise ConfigurationError(f"ae: {exc}") from None
        if self.bandpass is not None:
            low, high = float(self.bandpass[0]), float(self.bandpass[1])
            if not (0.0 <= low < high <= float(self.sample_rate_hz) / 2.0):
                raise ConfigurationError(
                    f"bandpass: band [{low}, {high}] invalid for sample_rate_hz="
                    f"{self.sample_rate_hz}"
                )
        if int(self.n_perm) < 0:
            raise ConfigurationError(f"n_perm: must be >= 0, got {self.n_perm}")
        if self.refine_target not in REFINE_TARGETS:
            raise ConfigurationError(
                f"refine_target: must be one of {REFINE_TARGETS}, got {self.refine_target!r}"
            )
        if int(self.n_networks) < 1:
            raise ConfigurationError(f"n_networks: must be >= 1, got {self.n_networks}")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigurationError(f"seed: must be a 64-bit unsigned integer, got {self.seed}")

    def pipeline_options(self) -> PipelineOptions:
        return PipelineOptions(
            K=self.K,
            L=self.L,
            sdl_iters=self.sdl_iters,
            arch=self.arch,
            train_cfg=self.train,
            detrend=self.detrend,
            bandpass=self.bandpass,
            sample_rate_hz=self.sample_rate_hz,
            refine_target=self.refine_target,
            fisher_z=self.fisher_z,
            seed=self.seed,
        )


def _expect(mapping: dict, path: str, key: str, kinds, default):
    value = mapping.get(key, default)
    if value is default and key not in mapping:
        return default
    label = f"{path}.{key}" if path else key
    if kinds is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{label}: expected true/false, got {value!r}")
        return value
    if kinds is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{label}: expected an integer, got {value!r}")
        return value
    if kinds is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{label}: expected a number, got {value!r}")
        return float(value)
    if kinds is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"{label}: expected a string, got {value!r}")
        return value
    if kinds is list:
        if not isinstance(value, list):
            raise ConfigurationError(f"{label}: expected a list, got {value!r}")
        return value
    raise AssertionError(f"unhandled kind {kinds}")


def _parse_cohort(raw: dict) -> CohortConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError(f"cohort: expected an object, got {raw!r}")
    defaults = CohortConfig()
    sessions = _expect(raw, "cohort", "sessions", list, list(DEFAULT_SESSIONS))
    subject_rois = raw.get("subject_rois")
    if subject_rois is not None and not isinstance(subject_rois, list):
        raise ConfigurationError(f"cohort.subject_rois: expected a list or null, got {subject_rois!r}")
    cfg = CohortConfig(
        n_subjects=_expect(raw, "cohort", "n_subjects", int, defaults.n_subjects),
        p_rois=_expect(raw, "cohort", "p_rois", int, defaults.p_rois),
        n_timepoints=_expect(raw, "cohort", "n_timepoints", int, defaults.n_timepoints),
        sessions=tuple(str(s) for s in sessions),
        subject_strength=_expect(raw, "cohort", "subject_strength", float, defaults.subject_strength),
        group_strength=_expect(raw, "cohort", "group_strength", float, defaults.group_strength),
        task_strength=_expect(raw, "cohort", "task_strength", float, defaults.task_strength),
        noise_std=_expect(raw, "cohort", "noise_std", float, defaults.noise_std),
        rank_subject=_expect(raw, "cohort", "rank_subject", int, defaults.rank_subject),
        rank_group=_expect(raw, "cohort", "rank_group", int, defaults.rank_group),
        rank_task=_expect(raw, "cohort", "rank_task", int, defaults.rank_task),
        subject_rois=tuple(subject_rois) if subject_rois is not None else None,
        seed=_expect(raw, "cohort", "seed", int, defaults.seed),
    )
    cfg.validate()
    return cfg


def _parse_ae(raw: dict):
    if not isinstance(raw, dict):
        raise ConfigurationError(f"ae: expected an object, got {raw!r}")
    arch_defaults = ArchitectureConfig()
    train_defaults = TrainConfig()
    channels = _expect(raw, "ae", "channels", list, list(arch_defaults.channels))
    arch = ArchitectureConfig(
        channels=tuple(int(c) for c in channels),
        kernel_size=_expect(raw, "ae", "kernel_size", int, arch_defaults.kernel_size),
        stride=_expect(raw, "ae", "stride", int, arch_defaults.stride),
        latent_dim=_expect(raw, "ae", "latent_dim", int, arch_defaults.latent_dim),
        activation=_expect(raw, "ae", "activation", str, arch_defaults.activation),
    )
    train = TrainConfig(
        epochs=_expect(raw, "ae", "epochs", int, train_defaults.epochs),
        batch_size=_expect(raw, "ae", "batch_size", int, train_defaults.batch_size),
        learning_rate=_expect(raw, "ae", "learning_rate", float, train_defaults.learning_rate),
        beta1=_expect(raw, "ae", "beta1", float, train_defaults.beta1),
        beta2=_expect(raw, "ae", "beta2", float, train_defaults.beta2),
        epsilon=_expect(raw, "ae", "epsilon", float, train_defaults.epsilon),
        init_scale=_expect(raw, "ae", "init_scale", float, train_defaults.init_scale),
        seed=_expect(raw, "ae", "seed", int, train_defaults.seed),
    )
    return arch, train


def _parse_pair(raw, label, kind):
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise ConfigurationError(f"{label}: expected a two-element list, got {raw!r}")
    try:
        return (kind(raw[0]), kind(raw[1]))
    except (TypeError, ValueError):
        raise ConfigurationError(f"{label}: entries must be {kind.__name__}s, got {raw!r}") from None


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config root must be an object, got {raw!r}")
    defaults = ExperimentConfig()
    cohort = _parse_cohort(raw.get("cohort", {}))
    arch, train = _parse_ae(raw.get("ae", {}))
    bandpass = raw.get("bandpass", None)
    if bandpass is not None:
        bandpass = _parse_pair(bandpass, "bandpass", float)
    cohort_dir = raw.get("cohort_dir")
    if cohort_dir is not None and not isinstance(cohort_dir, str):
        raise ConfigurationError(f"cohort_dir: expected a path string or null, got {cohort_dir!r}")
    cfg = ExperimentConfig(
        cohort=cohort,
        cohort_dir=cohort_dir,
        train_session=_expect(raw, "", "train_session", str, defaults.train_session),
        test_sessions=[str(s) for s in _expect(raw, "", "test_sessions", list,
                                               list(defaults.test_sessions))],
        methods=[str(m) for m in _expect(raw, "", "methods", list, list(defaults.methods))],
        K=_expect(raw, "", "K", int, defaults.K),
        L=_expect(raw, "", "L", int, defaults.L),
        K_range=_parse_pair(raw.get("K_range", list(defaults.K_range)), "K_range", int),
        L_range=_parse_pair(raw.get("L_range", list(defaults.L_range)), "L_range", int),
        sdl_iters=_expect(raw, "", "sdl_iters", int, defaults.sdl_iters),
        arch=arch,
        train=train,
        detrend=_expect(raw, "", "detrend", bool, defaults.detrend),
        bandpass=bandpass,
        sample_rate_hz=_expect(raw, "", "sample_rate_hz", float, defaults.sample_rate_hz),
        n_perm=_expect(raw, "", "n_perm", int, defaults.n_perm),
        refine_target=_expect(raw, "", "refine_target", str, defaults.refine_target),
        fisher_z=_expect(raw, "", "fisher_z", bool, defaults.fisher_z),
        both_directions=_expect(raw, "", "both_directions", bool, defaults.both_directions),
        n_networks=_expect(raw, "", "n_networks", int, defaults.n_networks),
        seed=_expect(raw, "", "seed", int, defaults.seed),
        output_dir=_expect(raw, "", "output_dir", str, defaults.output_dir),
    )
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config: {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


def example_config() -> dict:
    """A small, fast, fully explicit config dict (a starting point for edits)."""
    return {
        "cohort": {
            "n_subjects": 10,
            "p_rois": 16,
            "n_timepoints": 200,
            "sessions": ["rest", "motor"],
            "subject_strength": 1.0,
            "task_strength": 3.0,
            "group_strength": 2.0,
            "noise_std": 1.0,
            "rank_subject": 3,
            "rank_group": 3,
            "rank_task": 3,
            "seed": 7,
        },
        "train_session": "rest",
        "test_sessions": ["motor"],
        "methods": ["finn_raw", "baseline_groupavg", "convae_sdl"],
        "K": 8,
        "L": 3,
        "K_range": [2, 6],
        "L_range": [2, 6],
        "sdl_iters": 30,
        "ae": {
            "channels": [8, 16],
            "kernel_size": 3,
            "stride": 2,
            "latent_dim": 64,
            "activation": "tanh",
            "epochs": 200,
            "batch_size": 16,
            "learning_rate": 1e-3,
            "beta1": 0.9,
            "beta2": 0.999,
            "epsilon": 1e-8,
            "init_scale": 1.0,
            "seed": 0,
        },
        "detrend": True,
        "bandpass": None,
        "sample_rate_hz": 1.0,
        "n_perm": 1000,
        "refine_target": "residual",
        "fisher_z": False,
        "both_directions": False,
        "n_networks": 4,
        "seed": 0,
        "output_dir": "out",
    }
