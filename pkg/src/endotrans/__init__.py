"""Domain translation and classifier evaluation for endoscopic imagery.

The package covers the full pipeline: loading patch datasets from manifest
CSVs, training an unpaired two-generator translation model between the
white-light (WLI) and narrow-band (NBI) imaging domains, materializing
translated (fake) datasets, training patch classifiers on real/fake/mixed
pools, and scoring everything under patient-grouped cross-validation with
paired significance testing.
"""

__version__ = "1.0.0"

from .augment import center_crop, dihedral_apply, dihedral_augment, random_crop
from .classifiers import (
    ARCHITECTURES,
    ClassifierSpec,
    ClfTrainConfig,
    EvalResult,
    PredictionRecord,
    build_classifier,
    evaluate,
    fit_classifier,
    load_classifier,
    save_classifier,
    train_classifier,
)
from .config import EXPERIMENT_IDS, RunConfig, load_config
from .data import (
    DOMAINS,
    FAKE_DOMAINS,
    LABELS,
    REAL_DOMAINS,
    DomainDataset,
    ImagePatch,
    concat_datasets,
    load_manifest,
    merge_datasets,
    normalize_u8,
    pad_to_canvas,
    save_dataset,
)
from .errors import (
    DependencyError,
    EndotransError,
    LeakageError,
    ManifestError,
    NumericalError,
    ValidationError,
)
from .experiments import (
    EXPERIMENT_TABLE,
    ExperimentPlan,
    ExperimentRow,
    ExperimentRunner,
    RunResults,
    build_experiment_plan,
    load_results,
    run_cross_validation,
)
from .folds import PatientFoldPlan, assign_folds
from .losses import adversarial_loss, cycle_loss
from .mcnemar import SignificanceResult, mcnemar_counts, mcnemar_records
from .report import save_comparison_grid, write_report
from .synthetic import make_corpus, make_synthetic_dataset, remap_to_y
from .translation import (
    DIRECTIONS,
    GanTrainConfig,
    GanTrainer,
    LossWeights,
    TranslationModelBundle,
    build_bundle,
    train_translation,
    translate_dataset,
)

__all__ = [name for name in dir() if not name.startswith("_")]
