"""Visual concreteness scoring and cross-modal retrieval diagnostics.

Quantifies how tightly the images carrying a textual concept cluster in
feature space (concreteness), learns image/text alignments, and measures how
well concreteness predicts per-concept retrieval difficulty.
"""

from .alignment import (
    LinearMap,
    LsModel,
    NpModel,
    NsConfig,
    NsModel,
    RetrievalResult,
    Standardizer,
    read_eval_csv,
    evaluate_retrieval,
    fit_least_squares,
    hinge,
    kfold_splits,
    load_model,
    np_baseline,
    pair_loss,
    save_model,
    train_linear,
    train_ls,
    train_np,
    train_ns,
)
from .analysis import (
    AffinityMatrix,
    RetrievabilityEntry,
    RetrievabilityReport,
    affinity_continuous,
    affinity_discrete,
    binned_curve,
    correlate_external,
    correlation_summary,
    curve_to_csv_bytes,
    load_external,
    retrievability,
    spearman,
    variance_explained,
    write_summary,
)
from .data import (
    ConceptIndex,
    DatasetBundle,
    FeatureMatrix,
    FormatError,
    Split,
    TopicMatrix,
    load_concepts,
    load_features,
    load_split,
    load_topics,
    one_hot_topics,
    write_features,
    write_split,
    write_topics,
)
from .knn import Index, KnnConfig, NeighborLists, build_index
from .scoring import (
    ConcretenessReport,
    ConcretenessScore,
    concreteness_continuous,
    concreteness_discrete,
    confidence_interval,
    frequency,
    mni_expectation,
    mni_terms,
    random_mni,
    read_scores_csv,
)
from .synth import SynthConfig, SynthDataset, load_groups, make_dataset, write_dataset
from .util import derived_rng, resolve_threads

__version__ = "0.1.0"
