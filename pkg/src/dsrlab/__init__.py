"""dsrlab: a workbench for dynamical systems reconstruction.

Simulate benchmark systems, lift scalar observations by delay embedding, train
surrogate models (almost-linear RNN, shallow PLRNN, reservoir computer) with
reconstruction-aware algorithms, and score the results with long-term
geometric, temporal, and fractal measures.
"""

__version__ = "0.1.0"

from .trajectory import Trajectory, read_csv, write_csv
from .systems import (
    LorenzParams,
    NeuronParams,
    Neuron2DParams,
    RampSpec,
    DivergenceError,
    lorenz_vector_field,
    neuron_vector_field,
    jacobian_analytic,
    integrate,
    classify_limit_behavior,
)
from .embedding import EmbeddingSpec, delay_embed, select_lag, false_nearest_neighbors
from .models import (
    ALRNNParams,
    ShPLRNNParams,
    RCParams,
    ObservationModel,
    default_observation,
    observe,
    infer_state,
    alrnn_step,
    shplrnn_step,
    rc_step,
    model_jacobian,
    generate,
    init_model,
    save_checkpoint,
    load_checkpoint,
)
from .training import (
    STFConfig,
    GTFConfig,
    MSConfig,
    bptt_gradients,
    train_stf,
    train_gtf,
    predictability_time,
    forcing_interval_steps,
    multiple_shooting_loss,
    train_rc_ridge,
    TrainingDivergedError,
)
from .measures import (
    LyapunovSpectrum,
    MeasureConfig,
    EvalReport,
    lyapunov_spectrum,
    lyapunov_spectrum_ode,
    lyapunov_max,
    kaplan_yorke,
    dstsp_binned,
    dstsp_gmm,
    sliced_w1,
    w1_1d,
    hellinger_spectral,
    box_counting_dim,
    correlation_dim,
    vpt,
    mase,
)
from .harness import (
    ExperimentConfig,
    SplitSpec,
    load_config,
    ingest_csv,
    standardize,
    run_experiment,
    scenario,
)
