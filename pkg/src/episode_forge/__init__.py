"""Episodic task samplers, Gram-determinant task diversity, and desk-scale
meta-learning experiments."""

from .diversity import (
    DiversityProtocol,
    DiversityReport,
    batch_diversity,
    batch_embedding,
    diversity_report,
    overall_diversity,
    task_diversity,
    task_embedding,
)
from .dpp import LEnsemble, build_l_ensemble, elementary_symmetric, kdpp_prob, kdpp_sample
from .episodes import (
    ClassPool,
    EmbeddingTable,
    Episode,
    RegressionPool,
    RegressionTask,
    Task,
    draw_episode,
    draw_regression_episode,
    ingest_embeddings,
    make_embedding_table,
    make_task,
    sample_regression_task,
    synth_gaussian_splits,
    synth_gaussian_world,
    write_embeddings,
)
from .geometry import gram_volume_sq, mean_vector
from .learners import (
    Adam,
    ClassificationWorld,
    MlpParams,
    ProtoModel,
    RunResult,
    TrainConfig,
    class_embeddings_from_model,
    init_mlp,
    init_proto,
    maml_adapt,
    maml_meta_step,
    protonet_predict,
    protonet_train_step,
    reptile_meta_step,
    run_experiment,
)
from .samplers import (
    SAMPLER_KINDS,
    SamplerConfig,
    SamplerState,
    next_meta_batch,
    refresh_embeddings,
    report_difficulty,
)
from .stats import chi_square_gof, mean_ci95, paired_t_test

__version__ = "0.1.0"
