//! Runs a small SpMV sweep from an inline TOML description and prints the
//! CSV report.

use migrasim::harness::{run_experiment, to_csv, ExperimentSpec};

const SPEC: &str = r#"
kernel = "spmv"
seed = 11

[machine]
preset = "single_node"

[spmv]
matrix = ["synth"]
size = [16, 32]
layout = ["replicated", "striped"]
spawn = ["recursive"]
grain = ["16", "dynamic-64"]
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = match std::env::args().nth(1) {
        Some(path) => ExperimentSpec::load(path.as_ref())?,
        None => ExperimentSpec::from_toml_str(SPEC)?,
    };
    let records = run_experiment(&spec)?;
    eprintln!("{} points", records.len());
    print!("{}", to_csv(&records)?);
    Ok(())
}
