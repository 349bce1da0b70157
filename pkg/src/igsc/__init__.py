"""Image-guided semantic classification: a per-image label classifier is
generated from the image embedding by a trained network, then applied to
class prototypes for zero-shot and generalized zero-shot recognition."""

from .data import (
    Dataset,
    SplitSet,
    SyntheticSpec,
    l2_normalize_prototypes,
    load_dataset,
    make_synthetic,
    save_dataset,
)
from .errors import (
    FormatError,
    IgscError,
    NumericError,
    ShapeError,
    UsageError,
    ValidationError,
)
from .evaluation import (
    EvalReport,
    SweepCurve,
    calibration_sweep,
    evaluate_gzsl,
    evaluate_zsl,
    harmonic_mean,
    per_class_top1,
)
from .model import (
    ClassifierForm,
    GeneratedClassifier,
    HypernetParams,
    LinearClassifier,
    NonlinearClassifier,
    compatibility,
    generate_classifier,
    pack,
    packed_size,
    predict_gzsl,
    predict_zsl,
    score_label,
    score_matrix,
    unpack,
)
from .training import (
    AdamState,
    TrainConfig,
    TrainHistory,
    adam_step,
    backward,
    gradcheck_suite,
    load_checkpoint,
    loss,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
