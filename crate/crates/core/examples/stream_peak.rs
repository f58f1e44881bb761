//! STREAM triad on the single- and multi-node presets, with a thread sweep
//! showing the imbalance when fewer threads than nodelets are used.

use migrasim::harness::{stream_peak, stream_triad};
use migrasim::machine::{Machine, MachineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, cfg) in [
        ("single node", MachineConfig::single_node()),
        ("multi node", MachineConfig::multi_node()),
    ] {
        println!("{name}: measured peak {:.2} GB/s", stream_peak(&cfg)? / 1e9);
    }
    println!("{:>8} {:>8} {:>8} {:>10} verified", "nelems", "threads", "cycles", "GB/s");
    for nthreads in [1, 2, 4, 8] {
        let mut m = Machine::new(MachineConfig::single_node())?;
        let r = stream_triad(&mut m, 4096, nthreads)?;
        println!(
            "{:>8} {:>8} {:>8} {:>10.2} {}",
            4096,
            nthreads,
            r.time.makespan_cycles,
            r.bandwidth / 1e9,
            r.verified
        );
    }
    Ok(())
}
