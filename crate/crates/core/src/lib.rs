//! Graph wavelet mixing: an attention replacement that filters token
//! embeddings through K learnable bandpass filters over a graph Laplacian.
//!
//! The pipeline is
//!
//! 1. build a [`TokenGraph`] (from a CoNLL-U parse or a synthetic chain),
//! 2. form its [`NormalizedLaplacian`] and, for the spectral paths, its
//!    [`EigenSystem`],
//! 3. mix with a [`FilterBank`] in one of the [`MixMode`]s,
//! 4. wrap the mixer in residual + feed-forward [`GwtLayer`]s and train the
//!    stack with hand-written gradients and Adam.

pub mod attention;
pub mod block;
pub mod cache;
pub mod chebyshev;
pub mod checkpoint;
pub mod conllu;
pub mod error;
pub mod filter_bank;
pub mod gradcheck;
pub mod graph;
pub mod loss;
pub mod matrix;
pub mod optim;
pub mod scaling;
pub mod spectral;
pub mod task;
pub mod train;

pub use attention::attention_baseline_forward;
pub use block::{
    layer_backward, layer_forward, model_backward, model_forward, FeedForward, GwtLayer, GwtModel, LayerTape,
    ModelConfig, ModelTape, TensorRef,
};
pub use cache::{SpectralCache, SpectralEntry};
pub use chebyshev::{chebyshev_apply, chebyshev_fit, ChebyshevFilter, ChebyshevFit};
pub use checkpoint::{from_checkpoint_json, load_checkpoint, save_checkpoint, to_checkpoint_json, CHECKPOINT_VERSION};
pub use conllu::{parse_conllu, to_conllu};
pub use error::{GwtError, Result};
pub use filter_bank::{
    filter_eval, filter_eval_grad, wavelet_mix, wavelet_mix_backward, FilterBank, FilterMlp, MixGradients, MixMode,
};
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport, GradTarget, TensorCheck};
pub use graph::{
    build_chain_graph, normalized_laplacian, random_graph, symmetrize, GraphJson, NormalizedLaplacian, TokenGraph,
};
pub use loss::{cross_entropy_loss, token_accuracy};
pub use matrix::DenseMatrix;
pub use optim::{lr_at, Adam, AdamConfig, ScheduleConfig};
pub use scaling::{bench_scaling, AllocProbe, BenchConfig, BenchMode, BenchRecord, BenchReport, NoAllocProbe};
pub use spectral::{
    apply_filter_exact, eigendecompose, eigendecompose_with, gft, igft, symmetric_eigen, truncate, EigenMethod,
    EigenSystem, JacobiOptions,
};
pub use task::{gen_task_batch, GraphSource, TaskBatch, TaskKind, TaskSpec, TaskStream};
pub use train::{evaluate, run_training, train_loop, EvalReport, StepMetrics, TrainConfig, TrainOutcome, TrainState};
