"""Task-based regularized penalized least-squares image denoising."""
from .denoiser import (
    DenoiseConfig,
    DenoiseResult,
    denoise,
    denoise_batch,
    objective,
    objective_gradient,
    objective_terms,
    task_penalty,
    tv_gradient,
    tv_seminorm,
)
from .evaluation import (
    RocResult,
    ScoreSet,
    difference_map,
    evaluate_pipeline,
    rmse,
    roc_curve,
)
from .objects import (
    H0,
    H1,
    BinaryTextureParams,
    LabeledEnsemble,
    MvnLumpyParams,
    NoiseSpec,
    SignalSpec,
    add_noise,
    gen_binary_texture,
    gen_mvn_lumpy,
    make_ensemble,
    render_signal,
)
from .observer import (
    ObserverTemplate,
    estimate_hotelling,
    nll_test_statistic,
    npw_template,
    test_statistic,
)

__version__ = "0.1.0"
