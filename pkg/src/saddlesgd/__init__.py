"""Primal-dual stochastic training of regularized linear models.

The package trains hinge/logistic/squared-loss linear models by running
paired coordinate updates on the primal weights and the per-example dual
variables, either serially or with block-rotating parallel workers whose
update stream is serializable and can be replayed bit-exactly.
"""

from .data import (
    DatasetStats,
    SparseDataset,
    dataset_stats,
    fold_labels,
    from_rows,
    parse_libsvm,
    write_libsvm,
)
from .evaluate import (
    EvalReport,
    ScalingModel,
    eval_auprc,
    eval_test_error,
    fit_scaling_model,
    scaling_r_squared,
)
from .models import (
    LossModel,
    RegularizerModel,
    SaddleParams,
    batch_gradient,
    dual_objective,
    duality_gap,
    make_params,
    primal_objective,
    saddle_gradient,
    saddle_value,
    stochastic_gradient,
)
from .parallel import (
    EpochTimings,
    ParallelResult,
    load_update_log,
    measure_epoch_times,
    replay_log,
    run_parallel,
    run_psgd,
    save_update_log,
)
from .partition import PartitionPlan, exchange_route, inverse_sigma, make_partition, sigma
from .serial import (
    ModelState,
    StepSchedule,
    TrainConfig,
    init_state,
    load_checkpoint,
    saddle_update,
    save_checkpoint,
    serial_saddle_epoch,
    sgd_epoch,
    step_size,
    train_serial,
    train_sgd,
)

__version__ = "0.1.0"
