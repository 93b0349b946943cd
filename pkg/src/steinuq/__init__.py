"""Particle-based Bayesian UQ for sparsified neural constitutive models."""

import os

# Thread-count override must land before the accelerator backend initializes.
_threads = os.environ.get("STEINUQ_THREADS")
if _threads and _threads.isdigit():
    os.environ.setdefault(
        "XLA_FLAGS",
        f"--xla_cpu_multi_thread_eigen=false intra_op_parallelism_threads={_threads}",
    )

import jax

# Double precision everywhere: the gradient checks and transport metrics in
# this package are specified at tolerances float32 cannot meet.
jax.config.update("jax_enable_x64", True)

__version__ = "0.1.0"
