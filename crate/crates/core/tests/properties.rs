use proptest::prelude::*;

use migrasim::bfs::{run_bfs, BfsAlgorithm};
use migrasim::graph::{gen_graph, kernel1_build, EdgeList, GraphType, Kernel1Options};
use migrasim::machine::{Machine, MachineConfig, NodeletId, Registers, SpawnStrategy};
use migrasim::spmv::{spmv_run, CsrMatrix, DistCsr, GrainSpec, XLayout};

fn machine(p: u32) -> Machine {
    Machine::new(MachineConfig::with_nodelets(p)).unwrap()
}

fn sparse() -> impl Strategy<Value = (usize, usize, Vec<(usize, usize, f64)>)> {
    (1usize..40, 1usize..40).prop_flat_map(|(r, c)| {
        let cell = (0..r, 0..c, -8i32..8).prop_map(|(i, j, v)| (i, j, f64::from(v)));
        (Just(r), Just(c), proptest::collection::vec(cell, 0..200))
    })
}

fn dedup(mut t: Vec<(usize, usize, f64)>) -> Vec<(usize, usize, f64)> {
    t.sort_by_key(|&(i, j, _)| (i, j));
    t.dedup_by_key(|&mut (i, j, _)| (i, j));
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spmv_layouts_agree_bitwise((r, c, t) in sparse(), p in prop::sample::select(vec![1u32, 2, 3, 8]), g in 1u64..9) {
        let t = dedup(t);
        let a = CsrMatrix::from_triplets(r, c, &t).unwrap();
        let x: Vec<f64> = (0..c).map(|j| (j % 5) as f64 - 2.0).collect();
        let mut want = vec![0.0; r];
        for &(i, j, v) in &t {
            want[i] += v * x[j];
        }
        let mut ys = Vec::new();
        for layout in [XLayout::Replicated, XLayout::Striped] {
            let mut m = machine(p);
            let d = DistCsr::distribute(&mut m, &a).unwrap();
            let res = spmv_run(&mut m, &d, &x, layout, GrainSpec::Fixed(g), SpawnStrategy::Recursive).unwrap();
            prop_assert_eq!(res.threads as u64, (r as u64).div_ceil(g));
            if layout == XLayout::Replicated {
                prop_assert_eq!(res.compute_migrations, 0);
            }
            ys.push(res.y);
        }
        // Integer-valued entries make every sum exact.
        prop_assert_eq!(&ys[0], &want);
        prop_assert_eq!(&ys[0], &ys[1]);
    }

    #[test]
    fn graph_build_preserves_adjacency(kind in prop::sample::select(vec![GraphType::Er, GraphType::Rmat]), scale in 3u32..9, seed in 0u64..1000, p in 1u32..9) {
        let el = gen_graph(kind, scale, 8, seed).unwrap();
        let mut m = machine(p);
        let (g, stats) = kernel1_build(&mut m, &el, &Kernel1Options::default()).unwrap();
        prop_assert_eq!(stats.misplaced, 0);
        let n = el.nvertices() as usize;
        let mut want = vec![Vec::new(); n];
        for &(u, v) in &el.edges {
            if u != v {
                want[u as usize].push(v);
                want[v as usize].push(u);
            }
        }
        let mut total = 0;
        for (v, w) in want.iter_mut().enumerate() {
            let v = v as u64;
            prop_assert_eq!(g.home(v), NodeletId((v % u64::from(p)) as u32));
            let mut got = g.host_neighbors(&m, v).unwrap();
            got.sort_unstable();
            w.sort_unstable();
            prop_assert_eq!(&got, w);
            total += g.host_degree(&m, v).unwrap();
        }
        prop_assert_eq!(total, 2 * (el.edges.len() - el.self_loops()) as u64);
    }

    #[test]
    fn bfs_is_deterministic_and_conserves_migrations(scale in 3u32..8, seed in 0u64..500, p in 1u32..9, alg in prop::sample::select(vec![BfsAlgorithm::Migrating, BfsAlgorithm::RemoteWrites])) {
        let el = gen_graph(GraphType::Rmat, scale, 4, seed).unwrap();
        let once = || {
            let mut m = machine(p);
            let (g, _) = kernel1_build(&mut m, &el, &Kernel1Options::default()).unwrap();
            let r = run_bfs(&mut m, &g, 0, alg).unwrap();
            (r.parents, serde_json::to_string(&r.counters).unwrap(), r.time.makespan_cycles, r.counters)
        };
        let a = once();
        let b = once();
        prop_assert_eq!(&a.0, &b.0);
        prop_assert_eq!(&a.1, &b.1);
        prop_assert_eq!(a.2, b.2);
        let t = a.3.totals();
        prop_assert_eq!(t.migrations_out, t.migrations_in);
        if p == 1 {
            prop_assert_eq!(t.migrations_out, 0);
            prop_assert_eq!(t.inter_node_migrations, 0);
        }
    }

    #[test]
    fn puts_and_local_reads_never_migrate(p in 1u32..9, ops in proptest::collection::vec((0u32..8, 0u32..8, any::<u64>()), 1..60)) {
        let mut m = machine(p);
        let bases = m.alloc("cells", &vec![4; p as usize]).unwrap();
        for (from, to, v) in ops {
            let (from, to) = (from % p, to % p);
            let (mine, theirs) = (bases[from as usize], bases[to as usize]);
            m.spawn(NodeletId(from), Registers::empty(), move |ctx| async move {
                ctx.read(mine).await?;
                ctx.remote_write(theirs.add_words(v % 4), v).await?;
                ctx.remote_add(theirs, 1).await?;
                Ok(())
            })
            .unwrap();
        }
        let r = m.run_to_completion().unwrap();
        prop_assert_eq!(r.counters.migrations(), 0);
    }
}

#[test]
fn edge_list_helpers() {
    let el = EdgeList {
        scale: 2,
        edge_factor: 1,
        edges: vec![(0, 1), (2, 2), (3, 0), (1, 1)],
    };
    assert_eq!(el.nvertices(), 4);
    assert_eq!(el.self_loops(), 2);
}
