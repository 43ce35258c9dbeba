mod checkpoint;
mod network;
mod ontology;
mod tracker;
mod train;

pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION,
};
pub use network::{
    all_heads, encode_dialog, group_name, head_groups, DstModel, EncodedDialog, EncodedTurn, Head,
    ModelConfig, TurnPrediction, UserView, REQUEST_THRESHOLD,
};
pub use ontology::{fnv1a64, DialogState, Ontology, DONTCARE_LABEL, NONE_LABEL};
pub use tracker::{
    average_predictions, ensemble_predict, ensemble_tracker_predict, evaluate, joint_accuracy,
    JointAccuracy, Tracker,
};
pub use train::{train, train_tracker, EpochSchedule, LossRecord, TrainConfig, TrainOutcome};
