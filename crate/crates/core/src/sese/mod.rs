//! Trainable schema-item extractor: a gating layer fusing each item's
//! embedding with its annotation embedding, followed by per-kind
//! classification heads trained with focal loss.

mod features;
mod model;
mod optim;
mod params;
mod train;

pub use features::{
    column_annotation, column_text, column_tokens, perturb_schema_items, predict_probs, question_context,
    segment_schema, star_text, table_annotation, table_header_tokens, table_text, EmbedCache, Marks,
    SchemaProbabilities, SN_MARKER,
};
pub(crate) use features::predict_with_marks;
pub use model::{
    backward, batch_loss, classify, enhance, focal_loss, gate_forward, head_forward, item_probability,
    sigmoid, turn_loss, GateTrace, HeadTrace, LossConfig, TrainItem, TurnExample, PROB_EPS,
};
pub use optim::{adamw_step, AdamWConfig, AdamWState};
pub use params::{ExtractorParams, GateKind, GateParams, HeadKind, HeadParams, Matrix};
pub use train::{
    evaluate, train, Checkpoint, EpochLog, F1Scores, TrainConfig, TrainingLog, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION, LOG_F1_THRESHOLD,
};
