"""Sketched isotropic Gaussian regularization for dense networks.

Losses that push a batch of embeddings toward N(0, I) — a covariance-only
"weak" variant and a characteristic-function "strong" variant — with exact
analytic gradients, a from-scratch MLP training stack to host them, collapse
diagnostics, and a reproducible experiment harness.
"""

from .data import (
    Dataset,
    Normalization,
    batch_iterator,
    load_cifar_binary,
    normalize_dataset,
    split_per_class,
    synth_gaussian_classes,
)
from .errors import (
    ConfigError,
    DataFormatError,
    DegenerateBatchError,
    LabelError,
    ShapeMismatchError,
    SketchDimensionError,
    SpectrumError,
    SymmetryError,
)
from .gradcheck import GradcheckReport, central_difference, run_gradcheck
from .harness import (
    RunConfig,
    RunRecord,
    build_report,
    run_ablation,
    run_training,
)
from .linalg import (
    SketchMatrix,
    center_columns,
    covariance,
    draw_sketch,
    frobenius_norm,
    matmul,
    symmetric_eigenvalues,
)
from .metrics import CollapseReport, collapse_report, effective_rank, top1_accuracy
from .network import (
    ForwardTrace,
    Gradients,
    MlpModel,
    SgdConfig,
    backward,
    clip_global_norm,
    cross_entropy,
    forward,
    init_mlp,
    load_checkpoint,
    mlp_widths,
    save_checkpoint,
    sgd_step,
)
from .regularizers import (
    LossWithGrad,
    QuadratureGrid,
    SigregConfig,
    combined_loss,
    gaussian_trapezoid_grid,
    strong_sigreg,
    weak_sigreg,
)
from .rng import RngStream

__version__ = "0.1.0"
