"""Device-aware inference simulator for analog charge-trap-memory crossbars.

Neural-network weights are mapped onto differential pairs of normalized
device currents; matrix products are evaluated through those arrays with
cycle-to-cycle read noise, programming error, retention drift, and ADC/DAC
quantization, alongside a from-scratch trainer with noise-injection
regularization and a sweep harness that emits benchmark tables as CSV.
"""

from .device import (
    ADDITIVE,
    IDEAL_DEVICE,
    K_BOLTZMANN_EV,
    NONUNIFORM,
    PROPORTIONAL,
    UNIFORM,
    DecayParams,
    NoiseSpec,
    apply_read_noise,
    cycled_nonuniform_device,
    decay_mean,
    decay_spread,
    drift_spread_increment,
    load_device_params,
    measured_uniform_device,
    sample_drifted_current,
    sample_programmed_current,
    save_device_params,
    thermal_tau,
)
from .errors import (
    ConfigError,
    FormatError,
    ParameterError,
    ShapeError,
    TrainingError,
    XbarsimError,
)
from .experiments import (
    ExperimentConfig,
    log_time_grid,
    resolve_device,
    resolve_task,
    snapshot_weight_distribution,
    sweep_adc,
    sweep_drift,
    sweep_noise,
)
from .data_io import (
    Dataset,
    load_bundle,
    load_cifar10,
    load_dataset,
    load_idx,
    load_idx_pair,
    read_csv,
    save_bundle,
    save_idx,
    write_csv,
)
from .network import (
    BOUNDED,
    UNBOUNDED,
    BoundedRelu,
    Conv2D,
    Dense,
    Flatten,
    MaxPool,
    NetworkSpec,
    ProgrammedNetwork,
    Relu,
    Softmax,
    assign_quantizers,
    bounded_relu,
    build_arrays,
    calibrate_ranges,
    cifar_topology,
    forward_digital,
    infer,
    init_weights,
    mlp_topology,
    mnist_topology,
)
from .rng import RngStream
from .tensor_ops import col2im_batch, conv2d, im2col, im2col_batch, matmul
from .training import (
    TrainConfig,
    cross_entropy,
    evaluate,
    gradcheck,
    sigma_neu_from_syn,
    train,
)
from .xbar import (
    ClipSpec,
    DifferentialArray,
    Quantizer,
    age,
    analog_matmul,
    analog_vmm,
    clip_range,
    current_histogram,
    decode,
    program,
    quantize,
    shift_common_mode,
)

__version__ = "0.1.0"
