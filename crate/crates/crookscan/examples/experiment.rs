//! Run the full protocol at smoke scale: CV, ensembles per strategy,
//! abstention at several coverages, best/worst/sure AUC and t-tests.
//!
//!     cargo run --release --example experiment -- [smoke|desk|full]

use crookscan::experiment::{run_experiment, ExperimentConfig};
use crookscan::io::report_csv;

fn main() -> crookscan::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let preset = std::env::args().nth(1).unwrap_or_else(|| "smoke".into());
    let mut cfg = ExperimentConfig::preset(&preset)?;
    cfg.cache_dir = Some(std::env::temp_dir().join("crookscan-example").join("cache"));
    let outcome = run_experiment(&cfg)?;
    println!("dataset {}", outcome.dataset_hash);
    print!("{}", report_csv(&outcome.report));
    for s in &outcome.report.significance {
        let line = format!(
            "{} vs {} {} @ {:.2}: p = {:.4} {}",
            s.config.label(),
            s.compared_to.label(),
            s.metric.label(),
            s.coverage,
            s.p_value,
            s.stars
        );
        println!("{}", line.trim_end());
    }
    Ok(())
}
