from .design import NoiseSpec, SobolSampler, add_noise, mse, sample_mixed_design, sobol_points, unit_to_levels
from .functions import (
    FUNCTIONS,
    VARLEN_FUNCTIONS,
    VARLEN_PATTERN,
    BenchmarkFunction,
    apply_varlen_pattern,
    eval_function,
    function_range,
    get_function,
    l_over_kw,
    level_value,
    noise_presets,
)
from .sensitivity import total_effect_indices

__all__ = [
    "FUNCTIONS", "VARLEN_FUNCTIONS", "VARLEN_PATTERN", "BenchmarkFunction", "NoiseSpec", "SobolSampler",
    "add_noise", "apply_varlen_pattern",
    "eval_function", "function_range", "get_function", "l_over_kw", "level_value", "mse", "noise_presets",
    "sample_mixed_design", "sobol_points", "total_effect_indices", "unit_to_levels",
]
