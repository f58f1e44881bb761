//! Multiplies 2D Laplacians with the input vector replicated and striped and
//! compares migrations, makespan and bandwidth.

use migrasim::machine::{Machine, MachineConfig, SpawnStrategy};
use migrasim::spmv::{gen_laplacian, spmv_bandwidth, spmv_run, DistCsr, GrainSpec, LaplacianSpec, XLayout};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!(
        "{:>5} {:>7} {:<11} {:>10} {:>12} {:>10}",
        "n", "nnz", "layout", "cycles", "compute_mig", "MB/s"
    );
    for n in [8, 16, 32, 64] {
        let a = gen_laplacian(LaplacianSpec::new(n))?;
        let x: Vec<f64> = (0..a.ncols).map(|i| 1.0 + (i % 7) as f64).collect();
        for layout in [XLayout::Replicated, XLayout::Striped] {
            let mut m = Machine::new(MachineConfig::single_node())?;
            let dist = DistCsr::distribute(&mut m, &a)?;
            let r = spmv_run(&mut m, &dist, &x, layout, GrainSpec::Fixed(16), SpawnStrategy::Recursive)?;
            let bw = spmv_bandwidth(a.nrows, a.ncols, a.nnz(), r.report.time.seconds)?;
            println!(
                "{:>5} {:>7} {:<11} {:>10} {:>12} {:>10.1}",
                n,
                a.nnz(),
                layout.to_string(),
                r.report.time.makespan_cycles,
                r.compute_migrations,
                bw / 1e6
            );
        }
    }
    Ok(())
}
