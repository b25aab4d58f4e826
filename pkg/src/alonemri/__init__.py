"""Unsupervised adaptive patch regularization for undersampled dynamic
Fourier imaging: a shallow-network reconstruction with TV and
dictionary-learning baselines, synthetic data, and quality metrics."""

from .errors import (
    AloneError,
    ConfigError,
    DimensionError,
    DivergenceError,
    FormatError,
    GeometryError,
    PreconditionError,
)
from .volume import (
    ComplexVolume,
    KSpaceData,
    inner_product,
    load_kspace,
    load_volume,
    save_kspace,
    save_volume,
)
from .patches import (
    PatchGeometry,
    PatchSet,
    count_patches,
    coverage_weights,
    denormalize_patch,
    extract_patches,
    normalize_patch,
    normalize_patchset,
    reassemble_patches,
    reassemble_raw_sum,
)
from .operators import (
    CartesianMaskedOp,
    CoilMaps,
    RadialNDFTOp,
    RadialTrajectory,
    apply_normal_system,
    build_golden_angle_trajectory,
    build_golden_angle_trajectory_total,
    make_gaussian_coil_maps,
    nyquist_spokes,
    spokes_for_acceleration,
)
from .shallownet import (
    NetworkParams,
    TrainConfig,
    forward,
    forward_batch,
    init_network_params,
    kernel_penalty,
    load_network,
    loss_and_gradient,
    save_network,
    train,
)
from .solvers import (
    AloneConfig,
    AloneResult,
    IterationRecord,
    IterationTrace,
    alone_reconstruct,
    closed_form_isometry,
    pcg_solve,
    save_trace_csv,
)
from .baselines import (
    DicConfig,
    Dictionary,
    TvConfig,
    dic_reconstruct,
    div3d,
    grad3d,
    isotropic_shrinkage,
    itkrm_train,
    omp_sparse_code,
    tv_admm_reconstruct,
)
from .phantom import (
    PhantomSpec,
    make_phantom,
    noise_std_for_snr,
    retrospective_sample,
)
from .metrics import MetricsRecord, crop_center, evaluate, nrmse, psnr, ssim
from .analysis import (
    FixedPointReport,
    StabilityReport,
    build_adapted_pair,
    build_identity_network,
    objective_value,
    partial_minimizer_check,
    stability_experiment,
    theta_adapted_residuals,
)

__version__ = "0.1.0"
