//! Stores an acoustic model, restores it bit for bit, and shows the error
//! for a mismatched architecture.

use seqfuse::cli::{Checkpoint, CheckpointMeta};
use seqfuse::models::{AcousticModel, AmDims, Parameterized};

fn main() -> seqfuse::Result<()> {
    let dims = AmDims {
        vocab: 8,
        feat_dim: 4,
        embed_dim: 6,
        hidden_dim: 8,
        attention_dim: 8,
        encoder_layers: 1,
    };
    let am = AcousticModel::new(dims, 7)?;
    let meta = CheckpointMeta {
        format_version: 1,
        kind: "am".into(),
        criterion: "ce".into(),
        step: 0,
        epoch: 0,
        seed: 7,
    };
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.ckpt");
    Checkpoint::from_model(&am, meta).save(&path)?;
    println!(
        "{} parameters in {} bytes",
        am.num_params(),
        std::fs::metadata(&path)?.len()
    );

    let mut restored = AcousticModel::new(dims, 99)?;
    let ckpt = Checkpoint::load(&path)?;
    ckpt.restore(&mut restored)?;
    let same = am
        .flat_params()
        .iter()
        .zip(restored.flat_params())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!("restored bit for bit: {same}");

    let mut deeper = AcousticModel::new(
        AmDims {
            encoder_layers: 2,
            ..dims
        },
        1,
    )?;
    match ckpt.restore(&mut deeper) {
        Err(e) => println!("two-layer model: {e}"),
        Ok(()) => println!("unexpectedly restored"),
    }
    Ok(())
}
