//! Times training steps of the three criteria on identical batches.
//!
//! ```text
//! cargo run --release --example bench -- bench_steps=50 bench_warmup=5
//! ```

use seqfuse::cli::commands::{cmd_bench, cmd_gen, cmd_train, format_bench};
use seqfuse::cli::{Criterion, RunConfig};

fn main() -> seqfuse::Result<()> {
    let dir = tempfile::tempdir()?;
    let mut cfg = RunConfig::default();
    cfg.apply_overrides(&["bench_steps=40", "bench_warmup=5"].map(String::from))?;
    cfg.apply_overrides(&std::env::args().skip(1).collect::<Vec<_>>())?;
    cfg.data_dir = dir.path().join("data");
    cfg.lm_path = dir.path().join("lm.counts");
    cfg.out_dir = dir.path().join("bench");
    cmd_gen(&cfg)?;
    let mut lm = cfg.clone();
    lm.criterion = Criterion::Lm;
    cmd_train(&lm)?;
    print!("{}", format_bench(&cmd_bench(&cfg)?));
    Ok(())
}
