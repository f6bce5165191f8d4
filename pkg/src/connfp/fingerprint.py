"""Cross-session subject identification: similarity, permutation testing,
method pipelines, hyperparameter grids, and network ablation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .connectome import (
    EdgeVector,
    bandpass,
    detrend,
    fisher_z,
    mat,
    pearson_fc,
    vectorize_upper,
)
from .convae import ArchitectureConfig, TrainConfig, residual, train
from .errors import ConfigurationError, DegenerateInputError, DimensionError
from .rng import derive_seed, substream
from .sparse import ksvd
from .synth import NetworkPartition, TimeSeriesSet

METHODS = ("finn_raw", "baseline_groupavg", "convae_sdl")
REFINE_TARGETS = ("residual", "original")

# tags for seeds derived from PipelineOptions.seed
_AE_SEED = 10
_KSVD_SEED = 20
_PERM_STREAM = 30


@dataclass
class SimilarityMatrix:
    """Pearson similarity between two sets' edge vectors; rows index set one."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DimensionError(f"similarity matrix must be square, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("similarity matrix contains non-finite entries")
        if np.any(v < -1.0) or np.any(v > 1.0):
            raise ValueError("similarity entries must lie in [-1, 1]")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class IdentificationResult:
    predictions: np.ndarray
    accuracy: float
    simmat: SimilarityMatrix


@dataclass
class PermutationReport:
    observed_accuracy: float
    null_accuracies: np.ndarray
    p_value: float


@dataclass
class PipelineOptions:
    """Everything a method run needs besides the cohort and session labels.

    ``seed`` drives every stochastic stage: the autoencoder is trained with
    seed derive_seed(seed, 10), the per-session dictionary learning uses
    derive_seed(seed, 20, session_index), so reruns are exactly reproducible.
    """

    K: int = 8
    L: int = 3
    sdl_iters: int = 30
    arch: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    detrend: bool = True
    bandpass: tuple[float, float] | None = None
    sample_rate_hz: float = 1.0
    refine_target: str = "residual"
    fisher_z: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.refine_target not in REFINE_TARGETS:
            raise ConfigurationError(
                f"refine_target must be one of {REFINE_TARGETS}, got {self.refine_target!r}"
            )
        if int(self.K) < 1 or int(self.L) < 1:
            raise ConfigurationError(f"K and L must be >= 1, got K={self.K}, L={self.L}")
        if int(self.sdl_iters) < 1:
            raise ConfigurationError(f"sdl_iters must be >= 1, got {self.sdl_iters}")


def similarity_matrix(set_one, set_two) -> SimilarityMatrix:
    """Pearson correlation between upper-triangle edge vectors of two sets.

    Entry (i, j) correlates matrix i of the first set with matrix j of the
    second. Both sets must have equal length (same subjects, same order).
    """
    one = list(set_one)
    two = list(set_two)
    if len(one) != len(two):
        raise ValueError(f"sets must have equal length, got {len(one)} and {len(two)}")
    if len(one) < 2:
        raise ValueError("similarity needs at least 2 subjects per set")
    edges_one = np.stack([vectorize_upper(m).values for m in one])
    edges_two = np.stack([vectorize_upper(m).values for m in two])
    if edges_one.shape[1] != edges_two.shape[1]:
        raise DimensionError(
            f"sets have different matrix sizes ({edges_one.shape[1]} vs "
            f"{edges_two.shape[1]} edges)"
        )

    def normalize(edges, label):
        centered = edges - edges.mean(axis=1, keepdims=True)
        norms = np.linalg.norm(centered, axis=1)
        dead = np.flatnonzero(norms == 0.0)
        if dead.size:
            raise DegenerateInputError(
                f"edge vector {dead[0]} of {label} has zero variance"
            )
        return centered / norms[:, None]

    a = normalize(edges_one, "the first set")
    b = normalize(edges_two, "the second set")
    values = a @ b.T
    np.clip(values, -1.0, 1.0, out=values)
    return SimilarityMatrix(values)


def identify(simmat: SimilarityMatrix) -> IdentificationResult:
    """Row-wise argmax identification; ties break toward the lowest index."""
    v = simmat.values
    n = v.shape[0]
    predictions = np.argmax(v, axis=1)
    hits = int(np.sum(predictions == np.arange(n)))
    return IdentificationResult(predictions, hits / n, simmat)


def permutation_test(simmat: SimilarityMatrix, n_perm: int, seed: int = 0) -> PermutationReport:
    """Null distribution of accuracy under random relabeling of the second set.

    Each draw t applies a uniform random permutation pi from its own
    substream (seed, 30, t), counting row i as a hit when argmax_j sim(i, j)
    equals pi(i). The p-value uses the add-one rule:
    (1 + #{null >= observed}) / (1 + n_perm).
    """
    if not isinstance(n_perm, (int, np.integer)) or n_perm < 1:
        raise ValueError(f"n_perm must be a positive integer, got {n_perm!r}")
    v = simmat.values
    n = v.shape[0]
    predictions = np.argmax(v, axis=1)
    observed_hits = int(np.sum(predictions == np.arange(n)))
    null_hits = np.empty(n_perm, dtype=int)
    for t in range(n_perm):
        pi = substream(seed, _PERM_STREAM, t).permutation(n)
        null_hits[t] = int(np.sum(predictions == pi))
    p_value = (1 + int(np.sum(null_hits >= observed_hits))) / (1 + n_perm)
    return PermutationReport(observed_hits / n, null_hits / n, p_value)


# ---------------------------------------------------------------------------
# method pipelines


def _conditioned_series(cohort: TimeSeriesSet, subject: str, session: str, opts: PipelineOptions):
    x = cohort.series(subject, session)
    if opts.detrend:
        x = detrend(x)
    if opts.bandpass is not None:
        low, high = opts.bandpass
        x = bandpass(x, low, high, opts.sample_rate_hz)
    return x


def _session_matrices(cohort, session, opts, exclude_rois=None) -> list[np.ndarray]:
    """Per-subject connectome matrices for one session, in subject order."""
    mats = []
    for sid in cohort.subject_ids:
        conn = pearson_fc(_conditioned_series(cohort, sid, session, opts), sid, session)
        m = conn.matrix
        if exclude_rois is not None and len(exclude_rois):
            keep = np.setdiff1d(np.arange(m.shape[0]), np.asarray(exclude_rois, dtype=int))
            if keep.size < 2:
                raise DegenerateInputError(
                    f"ROI exclusion leaves {keep.size} ROIs; at least 2 are required"
                )
            m = m[np.ix_(keep, keep)]
        if opts.fisher_z:
            m = fisher_z(m)
        mats.append(m)
    return mats


def _sdl_refine(resid_mats, target_mats, K, L, iters, seed):
    """Learn one dictionary on the residual edge vectors and subtract the coded
    part from the target matrices. Returns (refined, dictionary, codes, report)."""
    p = resid_mats[0].shape[0]
    Y = np.column_stack([vectorize_upper(m).values for m in resid_mats])
    dictionary, codes, report = ksvd(Y, K, L, iters=iters, seed=seed)
    refined = [
        target_mats[i] - mat(EdgeVector(dictionary.atoms @ codes.codes[:, i], p))
        for i in range(len(target_mats))
    ]
    return refined, dictionary, codes, report


@dataclass
class PipelineArtifacts:
    """Intermediate products kept around for persistence and inspection."""

    ae_params: object | None = None
    ae_history: np.ndarray | None = None
    dictionaries: dict = field(default_factory=dict)
    codes: dict = field(default_factory=dict)


def _prepare_stage(cohort, train_session, test_session, method, opts, exclude_rois):
    """Everything that does not depend on (K, L): connectomes, residualization."""
    for label, ses in (("train_session", train_session), ("test_session", test_session)):
        if ses not in cohort.session_labels:
            raise ConfigurationError(
                f"{label} {ses!r} is not one of the cohort sessions {cohort.session_labels}"
            )
    if train_session == test_session:
        raise ConfigurationError("train_session and test_session must differ")
    if method not in METHODS:
        raise ConfigurationError(f"method must be one of {METHODS}, got {method!r}")
    opts.validate()

    raw = {
        ses: _session_matrices(cohort, ses, opts, exclude_rois)
        for ses in (train_session, test_session)
    }
    artifacts = PipelineArtifacts()
    resid = None
    if method == "baseline_groupavg":
        group_mean = np.mean(np.stack(raw[train_session]), axis=0)
        resid = {ses: [m - group_mean for m in raw[ses]] for ses in raw}
    elif method == "convae_sdl":
        ae_cfg = replace(opts.train_cfg, seed=derive_seed(opts.seed, _AE_SEED))
        params, history = train(raw[train_session], opts.arch, ae_cfg)
        artifacts.ae_params = params
        artifacts.ae_history = history
        resid = {
            ses: [residual(m, params).matrix for m in raw[ses]] for ses in raw
        }
    return raw, resid, artifacts


def _finish_stage(cohort, train_session, test_session, method, opts, raw, resid, artifacts, K, L):
    """The (K, L)-dependent tail: dictionary refinement and identification."""
    if method == "finn_raw":
        simmat = similarity_matrix(raw[train_session], raw[test_session])
        return identify(simmat)
    refined = {}
    for ses in (train_session, test_session):
        target = resid[ses] if opts.refine_target == "residual" else raw[ses]
        seed = derive_seed(opts.seed, _KSVD_SEED, cohort.session_labels.index(ses))
        refined[ses], dictionary, codes, report = _sdl_refine(
            resid[ses], target, K, L, opts.sdl_iters, seed
        )
        artifacts.dictionaries[ses] = dictionary
        artifacts.codes[ses] = codes
    simmat = similarity_matrix(refined[train_session], refined[test_session])
    return identify(simmat)


def run_pipeline_with_artifacts(
    cohort: TimeSeriesSet,
    train_session: str,
    test_session: str,
    method: str,
    opts: PipelineOptions | None = None,
    exclude_rois=None,
):
    """Like run_pipeline but also returns trained params, dictionaries, codes."""
    opts = opts if opts is not None else PipelineOptions()
    raw, resid, artifacts = _prepare_stage(
        cohort, train_session, test_session, method, opts, exclude_rois
    )
    result = _finish_stage(
        cohort, train_session, test_session, method, opts, raw, resid, artifacts,
        int(opts.K), int(opts.L),
    )
    return result, artifacts


def run_pipeline(
    cohort: TimeSeriesSet,
    train_session: str,
    test_session: str,
    method: str,
    opts: PipelineOptions | None = None,
    exclude_rois=None,
) -> IdentificationResult:
    """End-to-end identification between two sessions with one method.

    finn_raw: similarity between raw connectome edge vectors.
    baseline_groupavg: subtract the train-session group mean from both
        sessions' connectomes, then per-session dictionary refinement.
    convae_sdl: train the autoencoder on the train session, residualize both
        sessions, then per-session dictionary refinement.

    ``exclude_rois`` drops the listed ROI indices from every connectome
    before any method runs (used by the ablation sweep).
    """
    result, _ = run_pipeline_with_artifacts(
        cohort, train_session, test_session, method, opts, exclude_rois
    )
    return result


@dataclass
class GridCell:
    K: int
    L: int
    accuracy: float


def grid_search(
    cohort: TimeSeriesSet,
    train_session: str,
    test_session: str,
    method: str,
    K_values,
    L_values,
    opts: PipelineOptions | None = None,
) -> list[GridCell]:
    """Accuracy over the (K, L) grid; cells with L > K are infeasible and skipped.

    The cohort connectomes and (for convae_sdl) the trained autoencoder are
    shared across cells, since neither depends on K or L.
    """
    opts = opts if opts is not None else PipelineOptions()
    K_list = [int(k) for k in K_values]
    L_list = [int(l) for l in L_values]
    if not K_list or not L_list:
        raise ConfigurationError("K and L ranges must be non-empty")
    raw, resid, artifacts = _prepare_stage(
        cohort, train_session, test_session, method, opts, None
    )
    cells = []
    raw_result = None
    for K in K_list:
        for L in L_list:
            if L > K:
                continue
            if method == "finn_raw":
                if raw_result is None:
                    raw_result = _finish_stage(
                        cohort, train_session, test_session, method, opts,
                        raw, resid, artifacts, K, L,
                    )
                accuracy = raw_result.accuracy
            else:
                accuracy = _finish_stage(
                    cohort, train_session, test_session, method, opts,
                    raw, resid, artifacts, K, L,
                ).accuracy
            cells.append(GridCell(K, L, accuracy))
    return cells


@dataclass
class AblationRow:
    network: int
    name: str
    accuracy: float | None
    delta: float | None
    skipped: bool = False


@dataclass
class AblationResult:
    baseline_accuracy: float
    rows: list[AblationRow]


def ablation(
    cohort: TimeSeriesSet,
    partition: NetworkPartition,
    train_session: str,
    test_session: str,
    method: str,
    opts: PipelineOptions | None = None,
) -> AblationResult:
    """Rerun the full pipeline once per network with that network's ROIs removed.

    Rows report the accuracy and the change against the no-exclusion run. A
    network whose removal would leave fewer than 2 ROIs is skipped with a
    warning and an empty row.
    """
    opts = opts if opts is not None else PipelineOptions()
    p = cohort.shape[0]
    if partition.p_rois != p:
        raise DimensionError(
            f"partition covers {partition.p_rois} ROIs but cohort has {p}"
        )
    base = run_pipeline(cohort, train_session, test_session, method, opts)
    rows = []
    for g in range(partition.n_networks):
        rois = partition.rois(g)
        if p - rois.size < 2:
            warnings.warn(
                f"excluding network {g} ({partition.names[g]}) leaves fewer than "
                "2 ROIs; skipped",
                stacklevel=2,
            )
            rows.append(AblationRow(g, partition.names[g], None, None, skipped=True))
            continue
        result = run_pipeline(
            cohort, train_session, test_session, method, opts, exclude_rois=rois
        )
        rows.append(
            AblationRow(g, partition.names[g], result.accuracy,
                        result.accuracy - base.accuracy)
        )
    return AblationResult(base.accuracy, rows)
