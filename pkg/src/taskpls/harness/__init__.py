from .config import ExperimentConfig, SolverSettings, default_config, full_scale
from .pipeline import (
    RunManifest,
    cmd_evaluate,
    cmd_generate,
    cmd_render,
    cmd_sweep,
    cmd_template,
    denoise_all,
    load_results,
    run_all,
)
