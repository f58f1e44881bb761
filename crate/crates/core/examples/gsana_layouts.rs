//! Compares BLK and HCB layouts under the ALL and PAIR schemes on a
//! synthetic aligned pair.

use std::time::Instant;

use migrasim::gsana::{bandwidth_bytes, gen_aligned_pair, run_gsana, GsanaConfig, LayoutMode, Scheme};
use migrasim::machine::{Machine, MachineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sizes: Vec<u64> = std::env::args().skip(1).map(|s| s.parse()).collect::<Result<_, _>>()?;
    let sizes = if sizes.is_empty() { vec![512, 1024] } else { sizes };
    println!(
        "{:>6} {:<4} {:<5} {:>12} {:>11} {:>12} {:>10} {:>8}",
        "pair", "lay", "sch", "cycles", "migrations", "bytes", "MB/s", "wall_ms"
    );
    for n in sizes {
        let pair = gen_aligned_pair(n, 1)?;
        for layout in [LayoutMode::Blk, LayoutMode::Hcb] {
            for scheme in [Scheme::All, Scheme::Pair] {
                let mut m = Machine::new(MachineConfig::single_node())?;
                let cfg = GsanaConfig {
                    layout,
                    scheme,
                    ..GsanaConfig::default()
                };
                let t0 = Instant::now();
                let r = run_gsana(&mut m, &pair.g1, &pair.g2, &cfg)?;
                println!(
                    "{:>6} {:<4} {:<5} {:>12} {:>11} {:>12} {:>10.2} {:>8}",
                    n,
                    layout.to_string(),
                    scheme.to_string(),
                    r.time.makespan_cycles,
                    r.counters.migrations(),
                    bandwidth_bytes(&r.tasks),
                    r.bandwidth()? / 1e6,
                    t0.elapsed().as_millis()
                );
            }
        }
    }
    Ok(())
}
