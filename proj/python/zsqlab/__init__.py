# Copyright 2026 The zsqlab Authors
# Licensed under the Apache License, Version 2.0
"""zsqlab: desk-scale zero-shot quantization laboratory.

Thin python surface over the C++ core: the uniform quantizer, distillation
losses, gradient-inundation scheduling, Hessian tooling, and the experiment
driver.
"""

from zsqlab._core import (  # noqa: F401
    __version__,
    config_hash,
    count_threshold_crossings,
    cross_entropy,
    default_config,
    dequantize,
    fake_quant,
    grad_cosine,
    hutchinson_trace,
    kl_divergence,
    lanczos_eigenvalues,
    quant_params,
    quantize,
    rho_schedule,
    run_experiment,
    selftest,
    smooth_labels,
    target_count,
)
