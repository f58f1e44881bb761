//! Runs both BFS formulations on ER and RMAT graphs and prints makespan,
//! claim migrations and TEPS for each.

use migrasim::bfs::{bfs_metrics, pick_root, run_bfs, validate_bfs, BfsAlgorithm};
use migrasim::graph::{gen_graph, kernel1_build, FlatGraph, GraphType, Kernel1Options, DEFAULT_EDGE_FACTOR};
use migrasim::machine::{Machine, MachineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scales: Vec<u32> = std::env::args().skip(1).map(|s| s.parse()).collect::<Result<_, _>>()?;
    let scales = if scales.is_empty() { vec![8, 10] } else { scales };
    println!(
        "{:<5} {:>5} {:<14} {:>12} {:>10} {:>12} valid",
        "graph", "scale", "algorithm", "cycles", "claim_mig", "MTEPS"
    );
    for scale in scales {
        for kind in [GraphType::Er, GraphType::Rmat] {
            let el = gen_graph(kind, scale, DEFAULT_EDGE_FACTOR, 1)?;
            let flat = FlatGraph::from_edge_list(&el);
            let root = pick_root(&flat, 1);
            for alg in [BfsAlgorithm::Migrating, BfsAlgorithm::RemoteWrites] {
                let mut m = Machine::new(MachineConfig::single_node())?;
                let (g, _) = kernel1_build(&mut m, &el, &Kernel1Options::default())?;
                let r = run_bfs(&mut m, &g, root, alg)?;
                let (teps, _) = bfs_metrics(scale, DEFAULT_EDGE_FACTOR, r.time.seconds)?;
                let valid = validate_bfs(&flat, &r.parents, root);
                println!(
                    "{:<5} {:>5} {:<14} {:>12} {:>10} {:>12.3} {}/5",
                    kind.to_string(),
                    scale,
                    alg.to_string(),
                    r.time.makespan_cycles,
                    r.claim_migrations(),
                    teps / 1e6,
                    valid.passed()
                );
            }
        }
    }
    Ok(())
}
