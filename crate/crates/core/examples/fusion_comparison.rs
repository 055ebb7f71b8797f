//! Trains CE, local-fusion and MMI models on the toy task and prints the
//! dev WER of each model/decoder pairing, with decoding tuned on dev.
//!
//! ```text
//! cargo run --release --example fusion_comparison -- --seeds 41,42 --ce epochs=30 --mmi lr=0.01
//! ```

use clap::Parser;
use seqfuse::cli::experiments::{fusion_comparison, ComparisonPlan};
use seqfuse::cli::RunConfig;

#[derive(Parser)]
struct Args {
    #[arg(long, value_delimiter = ',', default_value = "42")]
    seeds: Vec<u64>,
    /// Task override, `key=value`.
    #[arg(long = "set")]
    set: Vec<String>,
    /// Override for the CE run.
    #[arg(long = "ce")]
    ce: Vec<String>,
    /// Override for the local-fusion run.
    #[arg(long = "local")]
    local: Vec<String>,
    /// Override for the MMI fine-tuning run.
    #[arg(long = "mmi")]
    mmi: Vec<String>,
    /// Untuned plan: base epochs, configured scales only.
    #[arg(long)]
    plain: bool,
}

fn apply(cfg: &mut RunConfig, overrides: &[String]) -> seqfuse::Result<()> {
    for kv in overrides {
        let (k, v) = kv.split_once('=').expect("key=value");
        cfg.set(k, v)?;
    }
    Ok(())
}

fn main() -> seqfuse::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut base = RunConfig::default();
    base.apply_overrides(&args.set)?;
    println!("seed,ce_am_only,ce_shallow,local_local,local_am_only,mmi_shallow");
    for &seed in &args.seeds {
        base.seed = seed;
        let mut plan = if args.plain {
            ComparisonPlan::new(&base)
        } else {
            ComparisonPlan::tuned(&base)
        };
        apply(&mut plan.ce, &args.ce)?;
        apply(&mut plan.local, &args.local)?;
        apply(&mut plan.mmi, &args.mmi)?;
        let r = fusion_comparison(&base, &plan)?;
        println!(
            "{},{:.2},{:.2},{:.2},{:.2},{:.2}",
            r.seed, r.ce_am_only, r.ce_shallow, r.local_local, r.local_am_only, r.mmi_shallow
        );
        for s in &r.settings {
            println!("#   {s}");
        }
    }
    Ok(())
}
