from .image import hist_equalize, histogram, night_vision, noise_filter
from .kernels import KERNELS, Kernel, make_kernel
from .mlp import (MlpModel, autoencoder_infer, dense_cycles, dense_multipliers, mlp_cycles,
                  mlp_infer)

__all__ = [
    "KERNELS", "Kernel", "MlpModel", "autoencoder_infer", "dense_cycles", "dense_multipliers",
    "hist_equalize", "histogram", "make_kernel", "mlp_cycles", "mlp_infer", "night_vision",
    "noise_filter",
]
