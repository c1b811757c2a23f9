#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use augtta::base::{train_base_model, BaseTrainingConfig};
use augtta::model::{load_checkpoint, save_checkpoint};
use augtta::Model;

pub const BASE_SEED: u64 = 0;

/// The default-configuration base model, trained once per target directory
/// and cached as a checkpoint.
pub fn base_model() -> &'static Model {
    static MODEL: OnceLock<Model> = OnceLock::new();
    MODEL.get_or_init(|| {
        let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!("base-{BASE_SEED}-v2.ckpt"));
        if let Ok(m) = load_checkpoint(&path) {
            return m;
        }
        let (model, _) = train_base_model(&BaseTrainingConfig::default(), BASE_SEED).expect("training");
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        save_checkpoint(&model, &tmp).expect("save");
        std::fs::rename(&tmp, &path).expect("rename");
        model
    })
}
