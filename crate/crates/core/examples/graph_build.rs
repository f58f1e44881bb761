//! Generates an RMAT graph, builds the edge-block structure on the machine
//! and reports where the work landed.

use migrasim::graph::{gen_rmat, kernel1_build, FlatGraph, Kernel1Options, DEFAULT_EDGE_FACTOR};
use migrasim::machine::{Machine, MachineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scale: u32 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let el = gen_rmat(scale, DEFAULT_EDGE_FACTOR, 7)?;
    let mut m = Machine::new(MachineConfig::single_node())?;
    let (g, stats) = kernel1_build(&mut m, &el, &Kernel1Options::default())?;

    println!(
        "vertices {}  edges {}  self loops {}",
        el.nvertices(),
        el.edges.len(),
        el.self_loops()
    );
    println!("build makespan {} cycles", stats.report.time.makespan_cycles);
    println!("edges delivered per nodelet: {:?}", stats.scattered);
    println!("misplaced deliveries: {}", stats.misplaced);
    println!("blocks used per nodelet: {:?}", g.pool.allocated());

    let flat = FlatGraph::from_edge_list(&el);
    let hub = (0..flat.nvertices()).max_by_key(|&v| flat.adj[v].len()).unwrap_or(0) as u64;
    let chain = g.host_chain(&m, hub)?;
    println!(
        "vertex {hub}: degree {} over {} blocks, all on nodelet {}",
        g.host_degree(&m, hub)?,
        chain.len(),
        g.home(hub).index()
    );
    Ok(())
}
