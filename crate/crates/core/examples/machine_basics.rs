//! A threadlet on nodelet 0 reads a word homed on nodelet 3, migrates there,
//! and posts a remote write back. Prints the counters that result.

use migrasim::machine::{GlobalAddress, Machine, MachineConfig, NodeletId, Registers};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut m = Machine::new(MachineConfig::single_node())?;
    let mut words = vec![0; m.nodelets()];
    words[0] = 1;
    words[3] = 1;
    let bases = m.alloc("cells", &words)?;
    let (here, there) = (bases[0], bases[3]);
    m.host_write(there, 41)?;

    m.spawn(
        NodeletId(0),
        Registers::new(&[here.to_word(), there.to_word()])?,
        |ctx| async move {
            let back = GlobalAddress::from_word(ctx.reg(0)).expect("valid address");
            let far = GlobalAddress::from_word(ctx.reg(1)).expect("valid address");
            let v = ctx.read(far).await?;
            println!("read {v} and now running on nodelet {}", ctx.here().index());
            ctx.remote_write(back, v + 1).await?;
            Ok(())
        },
    )?;
    let r = m.run_to_completion()?;

    println!("value written home: {}", m.host_read(here)?);
    println!("makespan: {} cycles ({:.3e} s)", r.time.makespan_cycles, r.time.seconds);
    let t = r.counters.totals();
    println!(
        "migrations out/in: {}/{}  remote writes: {}  local reads: {}",
        t.migrations_out, t.migrations_in, t.remote_writes_issued, t.local_reads
    );
    for (i, c) in r.counters.nodelets.iter().enumerate().filter(|(_, c)| c.busy_cycles > 0) {
        println!("nodelet {i}: {} busy cycles", c.busy_cycles);
    }
    Ok(())
}
