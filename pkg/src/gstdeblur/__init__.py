"""Blind image deblurring by unrolled alternating estimation.

The engine recovers a sharp image and a blur kernel from a single blurred
observation by running a fixed number of stages; each stage takes a
gradient step on the data fidelity and a shrinkage step in a feature
space, for the kernel first and then for the image. Shrinkage thresholds,
step sizes, and the shrinkage exponent are per-stage parameters that the
trainer fits on synthetic pairs.
"""

__version__ = "0.1.0"

from .errors import (
    CodecUnavailableError,
    DegenerateKernelError,
    DimensionError,
    FdProbeError,
    FormatError,
    GstdeblurError,
    ValidationError,
)
from .grids import (
    as_image,
    as_kernel,
    convolve,
    correlate_into_kernel,
    embed_kernel,
    extract_kernel,
    flip,
    gaussian_kernel,
    normalize_kernel,
    operator_norm,
    resample,
)
from .shrinkage import DEFAULT_GST, GstConfig, gst, prox_oracle, sigmoid, soft, tau_p
from .transforms import FeaturePyramid, TransformSpec, analyze, synthesize
from .unfold import RunTrace, StageParams, StageRecord, UnfoldConfig, run
from .metrics import aggregate_report, boxplot_stats, kernel_similarity, psnr, ssim
from .training import TrainConfig, calibrate_mu, train
from .degrade import (
    make_pair_firstorder,
    replay_firstorder,
    replay_second_order,
    second_order_pipeline,
    substream,
)
from .fileio import read_image, read_kernel, write_image, write_kernel
from .config import dump_config, parse_config, read_config, unfold_config_from_mapping
from .weights import load_weights, save_weights
