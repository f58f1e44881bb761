use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sim::{TAG_SIGMA_U, TAG_SIGMA_V};
use super::*;
use crate::machine::{Machine, MachineConfig, NodeletId};

fn machine(p: u32) -> Machine {
    Machine::new(MachineConfig::with_nodelets(p)).unwrap()
}

fn random_graph(n: u64, m: usize, seed: u64) -> AttributedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<(u64, u64, u32)> = (0..m)
        .map(|_| (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..3)))
        .collect();
    let vtypes = (0..n).map(|_| rng.random_range(0..4)).collect();
    let attrs = (0..n)
        .map(|_| (0..rng.random_range(0..4)).map(|_| rng.random_range(0..6)).collect())
        .collect();
    AttributedGraph::new(n, vtypes, attrs, &edges).unwrap()
}

/// All-pairs scoring restricted to vertices of touching buckets.
fn brute_force(inp: &SimInput, k: usize, w: &SimilarityWeights) -> TopKList {
    let b1 = inp.qt1.bucket_of(inp.g1.nvertices());
    let b2 = inp.qt2.bucket_of(inp.g2.nvertices());
    let lists = (0..inp.g2.nvertices() as u64)
        .map(|v| {
            let rect = inp.qt2.buckets[b2[v as usize]].rect;
            let mut all: Vec<Candidate> = (0..inp.g1.nvertices() as u64)
                .filter(|&u| inp.qt1.buckets[b1[u as usize]].rect.touches(&rect))
                .map(|u| Candidate {
                    id: u,
                    score: sigma(&inp.g1, u, &inp.g2, v, w).0,
                })
                .collect();
            all.sort_by(Candidate::cmp_rank);
            all.truncate(k);
            all
        })
        .collect();
    TopKList { lists }
}

#[test]
fn hilbert_first_order() {
    let ranks: Vec<u64> = [(0, 0), (0, 1), (1, 1), (1, 0)]
        .iter()
        .map(|&(x, y)| hilbert_rank(x, y, 1).unwrap())
        .collect();
    assert_eq!(ranks, vec![0, 1, 2, 3]);
    assert!(hilbert_rank(2, 0, 1).is_err());
}

#[test]
fn hilbert_order_three_is_a_unit_step_bijection() {
    let mut cell_at = vec![None; 64];
    for x in 0..8 {
        for y in 0..8 {
            let r = hilbert_rank(x, y, 3).unwrap() as usize;
            assert!(cell_at[r].is_none(), "rank {r} repeated");
            cell_at[r] = Some((x, y));
        }
    }
    let cells: Vec<(u64, u64)> = cell_at.into_iter().map(Option::unwrap).collect();
    for w in cells.windows(2) {
        assert_eq!(w[0].0.abs_diff(w[1].0) + w[0].1.abs_diff(w[1].1), 1, "{w:?}");
    }
}

#[test]
fn placement_examples() {
    let single = AttributedGraph::new(1, vec![0], vec![vec![]], &[]).unwrap();
    let p = place_vertices(&single);
    assert_eq!((p[0].x, p[0].y), (0.0, 0.0));

    let path = AttributedGraph::new(3, vec![0; 3], vec![vec![]; 3], &[(0, 1, 0), (1, 2, 0)]).unwrap();
    let p = place_vertices(&path);
    // anchor 1; max hop 1, so neighbours sit at 1/(1+1)
    assert_eq!(p[1].x, 0.0);
    assert_eq!(p[0].x, 0.5);
    assert_eq!(p[2].x, 0.5);
    assert_eq!(p[0].y, 1.0 / 3f64.log2());
    assert!(p[1].y < 1.0);
    assert_eq!(p, place_vertices(&path));

    let split = AttributedGraph::new(3, vec![0; 3], vec![vec![]; 3], &[(0, 1, 0)]).unwrap();
    assert_eq!(place_vertices(&split)[2].x, space::UNREACHABLE_X);
}

fn pts(xy: &[(f64, f64)]) -> Vec<PlacedVertex> {
    xy.iter()
        .enumerate()
        .map(|(i, &(x, y))| PlacedVertex { id: i as u64, x, y })
        .collect()
}

#[test]
fn quadtree_examples() {
    let qt = build_quadtree(&pts(&[(0.1, 0.1), (0.9, 0.1), (0.1, 0.9), (0.9, 0.9)]), 1).unwrap();
    assert_eq!(qt.buckets.len(), 4);
    assert!(qt.buckets.iter().all(|b| b.members.len() == 1));

    let qt = build_quadtree(&pts(&[(0.3, 0.3); 5]), 1).unwrap();
    assert_eq!(qt.buckets.len(), 1);
    assert_eq!(qt.buckets[0].depth, space::MAX_DEPTH);
    assert_eq!(qt.buckets[0].members.len(), 5);

    // boundary point goes to the high child
    let qt = build_quadtree(&pts(&[(0.5, 0.5), (0.1, 0.1)]), 1).unwrap();
    let b = &qt.buckets[qt.bucket_of(2)[0]];
    assert_eq!((b.rect.x0, b.rect.y0), (0.5, 0.5));

    assert!(build_quadtree(&[], 0).is_err());
}

#[test]
fn quadtree_random_points_respect_cap_and_partition() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xy: Vec<(f64, f64)> = (0..100).map(|_| (rng.random(), rng.random())).collect();
    let placed = pts(&xy);
    let qt = build_quadtree(&placed, 32).unwrap();
    assert!(qt.buckets.iter().all(|b| b.members.len() <= 32));
    let area: f64 = qt
        .buckets
        .iter()
        .map(|b| b.rect.area())
        .chain(qt.empty_leaves.iter().map(Rect::area))
        .sum();
    assert!((area - 1.0).abs() < 1e-12);
    let owner = qt.bucket_of(100);
    for p in &placed {
        assert!(qt.buckets[owner[p.id as usize]].rect.contains(p.x, p.y));
    }
}

#[test]
fn neighbor_bucket_examples() {
    let one = build_quadtree(&pts(&[(0.2, 0.2)]), 4).unwrap();
    assert_eq!(one.neighbor_buckets(&one.buckets[0].rect), vec![0]);

    let four = build_quadtree(&pts(&[(0.1, 0.1), (0.9, 0.1), (0.1, 0.9), (0.9, 0.9)]), 1).unwrap();
    let ll = Rect {
        x0: 0.0,
        y0: 0.0,
        x1: 0.5,
        y1: 0.5,
    };
    assert_eq!(four.neighbor_buckets(&ll).len(), 4);

    let fine = build_quadtree(&pts(&[(0.01, 0.01), (0.99, 0.99), (0.02, 0.02), (0.98, 0.98), (0.6, 0.1)]), 1).unwrap();
    let corner = fine.buckets[fine.bucket_of(5)[0]].rect;
    let far = fine.buckets[fine.bucket_of(5)[1]].rect;
    assert!(!corner.touches(&far));
    let nb = fine.neighbor_buckets(&corner);
    assert!(!nb.contains(&fine.bucket_of(5)[1]));
    let ranks: Vec<u64> = nb.iter().map(|&b| fine.buckets[b].hilbert).collect();
    assert!(ranks.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn layouts() {
    let g = random_graph(64, 100, 3);
    let qt = build_quadtree(&place_vertices(&g), 8).unwrap();
    let blk = assign_layout(&qt, &g.degrees(), LayoutMode::Blk, 8).unwrap();
    for v in 0..64u64 {
        assert_eq!(blk.nodelet_of(v), NodeletId((v / 8) as u32));
    }
    let hcb = assign_layout(&qt, &g.degrees(), LayoutMode::Hcb, 8).unwrap();
    for (b, bucket) in qt.buckets.iter().enumerate() {
        for &v in &bucket.members {
            assert_eq!(hcb.nodelet_of(v), hcb.bucket_nodelet[b]);
        }
    }
    let mut labels = hcb.rename.clone();
    labels.sort_unstable();
    assert_eq!(labels, (0..64).collect::<Vec<_>>());
    // contiguous: nodelets never decrease along Hilbert order
    let mut order: Vec<usize> = (0..qt.buckets.len()).collect();
    order.sort_by_key(|&b| qt.buckets[b].hilbert);
    assert!(order.windows(2).all(|w| hcb.bucket_nodelet[w[0]] <= hcb.bucket_nodelet[w[1]]));
    for mode in [LayoutMode::Blk, LayoutMode::Hcb] {
        let one = assign_layout(&qt, &g.degrees(), mode, 1).unwrap();
        assert!(one.vertex_nodelet.iter().chain(&one.bucket_nodelet).all(|n| n.0 == 0));
    }
}

#[test]
fn sigma_examples() {
    assert_eq!(rw_count(3, 2, 2, 1), 27);
    assert_eq!(rw_count(0, 0, 0, 0), 14);

    let g = AttributedGraph::new(
        4,
        vec![1, 2, 1, 2],
        vec![vec![3, 1], vec![], vec![1, 3], vec![]],
        &[(0, 1, 2), (2, 3, 2)],
    )
    .unwrap();
    let w = SimilarityWeights::default();
    let (s, rw) = sigma(&g, 0, &g, 2, &w);
    assert_eq!(s, 1.0);
    assert_eq!(rw, 14 + 2 + 2 + 4);

    let iso = AttributedGraph::new(2, vec![0, 0], vec![vec![], vec![]], &[]).unwrap();
    assert_eq!(sigma(&iso, 0, &iso, 1, &w), (1.0, 14));

    assert_eq!(graph::multiset_jaccard(&[1, 1, 2], &[1, 2, 2]), 0.5);
    assert!((graph::degree_similarity(3, 1) - 1.0 / 3.0).abs() < 1e-15);
    assert!(SimilarityWeights::new([0.5, 0.5, 0.1, 0.0, 0.0]).is_err());
}

#[test]
fn bandwidth_examples() {
    let t = |rw| TaskStat {
        bucket: 0,
        neighbor: 0,
        b_len: 1,
        neighbor_len: 1,
        rw,
    };
    assert_eq!(gsana_bandwidth(&[t(14)], 1.0).unwrap(), 128.0);
    assert_eq!(bandwidth_bytes(&[t(27)]), 232);
    assert!(gsana_bandwidth(&[t(14)], 0.0).is_err());
}

#[test]
fn single_vertex_pair() {
    let g = AttributedGraph::new(1, vec![2], vec![vec![1]], &[]).unwrap();
    for scheme in [Scheme::All, Scheme::Pair] {
        let mut m = machine(4);
        let cfg = GsanaConfig {
            k: 1,
            scheme,
            ..GsanaConfig::default()
        };
        let r = run_gsana(&mut m, &g, &g, &cfg).unwrap();
        assert_eq!(r.topk.lists, vec![vec![Candidate { id: 0, score: 1.0 }]]);
    }
}

fn run(inp: &SimInput, p: u32, k: usize, scheme: Scheme, seed: u64) -> GsanaResult {
    let mut m = machine(p);
    parallel_sim(&mut m, inp, k, SimilarityWeights::default(), scheme, seed).unwrap()
}

#[test]
fn schemes_layouts_and_oracle_agree() {
    let w = SimilarityWeights::default();
    for seed in 0..4 {
        let (g1, g2) = (random_graph(32, 60, seed), random_graph(32, 50, seed + 100));
        let mut results = Vec::new();
        for mode in [LayoutMode::Blk, LayoutMode::Hcb] {
            let inp = prepare(&g1, &g2, 8, mode, 8).unwrap();
            let oracle = brute_force(&inp, 5, &w);
            for scheme in [Scheme::All, Scheme::Pair] {
                let r = run(&inp, 8, 5, scheme, seed);
                assert_eq!(r.topk, oracle, "seed {seed} {mode} {scheme}");
                assert_eq!(r.kernel_accesses(), r.rw_total());
                let t = r.counters.totals();
                assert_eq!(t.migrations_in, t.migrations_out);
                results.push(r.topk);
            }
        }
        assert!(results.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn large_k_keeps_every_candidate() {
    let (g1, g2) = (random_graph(20, 30, 1), random_graph(20, 30, 2));
    let inp = prepare(&g1, &g2, 4, LayoutMode::Hcb, 4).unwrap();
    let r = run(&inp, 4, 100, Scheme::All, 0);
    let b1 = inp.qt1.bucket_of(20);
    let b2 = inp.qt2.bucket_of(20);
    for v in 0..20u64 {
        let rect = inp.qt2.buckets[b2[v as usize]].rect;
        let n = (0..20).filter(|&u| inp.qt1.buckets[b1[u]].rect.touches(&rect)).count();
        let l = r.topk.get(v);
        assert_eq!(l.len(), n);
        assert!(l.windows(2).all(|w| w[0].ranks_before(&w[1])));
    }
}

#[test]
fn pair_shuffle_changes_only_the_trace() {
    let (g1, g2) = (random_graph(48, 80, 5), random_graph(48, 80, 6));
    let inp = prepare(&g1, &g2, 6, LayoutMode::Blk, 4).unwrap();
    let a = run(&inp, 4, 5, Scheme::Pair, 1);
    let b = run(&inp, 4, 5, Scheme::Pair, 2);
    assert_eq!(a.topk, b.topk);
    assert_ne!(a.spawn_trace, b.spawn_trace);
    let mut ta = a.spawn_trace.clone();
    ta.sort();
    let mut tb = b.spawn_trace.clone();
    tb.sort();
    assert_eq!(ta, tb);
}

#[test]
fn hcb_target_reads_stay_local() {
    let pair = gen_aligned_pair(256, 4).unwrap();
    let hcb = prepare(&pair.g1, &pair.g2, 32, LayoutMode::Hcb, 8).unwrap();
    let blk = prepare(&pair.g1, &pair.g2, 32, LayoutMode::Blk, 8).unwrap();
    for scheme in [Scheme::All, Scheme::Pair] {
        let h = run(&hcb, 8, 5, scheme, 0);
        let b = run(&blk, 8, 5, scheme, 0);
        assert_eq!(h.counters.tag(TAG_SIGMA_V).migrations, 0);
        assert!(b.counters.tag(TAG_SIGMA_V).migrations > 0);
        assert!(h.counters.tag(TAG_SIGMA_U).migrations <= b.counters.tag(TAG_SIGMA_U).migrations);
        assert_eq!(h.topk, b.topk);
    }
}

#[test]
fn single_nodelet_has_no_migrations() {
    let pair = gen_aligned_pair(128, 9).unwrap();
    let inp1 = prepare(&pair.g1, &pair.g2, 16, LayoutMode::Blk, 1).unwrap();
    let inp8 = prepare(&pair.g1, &pair.g2, 16, LayoutMode::Blk, 8).unwrap();
    let r1 = run(&inp1, 1, 5, Scheme::Pair, 0);
    assert_eq!(r1.counters.migrations(), 0);
    assert_eq!(r1.topk, run(&inp8, 8, 5, Scheme::Pair, 0).topk);
}

#[test]
fn bandwidth_numerator_ignores_k() {
    let (g1, g2) = (random_graph(24, 40, 8), random_graph(24, 40, 9));
    let inp = prepare(&g1, &g2, 6, LayoutMode::Hcb, 4).unwrap();
    let a = run(&inp, 4, 2, Scheme::All, 0);
    let b = run(&inp, 4, 4, Scheme::All, 0);
    assert_eq!(bandwidth_bytes(&a.tasks), bandwidth_bytes(&b.tasks));
}

#[test]
fn generated_pair_shape() {
    let p = gen_aligned_pair(512, 1).unwrap();
    assert_eq!(p.g1.nvertices(), 512);
    let e = p.g1.nedges() as f64;
    assert!((e - 1300.0).abs() <= 0.2 * 1300.0, "{e}");
    assert_eq!(p.g2.nvertices(), 512 - 26);
    assert_eq!(p.truth.len(), p.g2.nvertices());
    assert!((0..512).all(|v| p.g1.attrs(v).len() <= gen::MAX_ATTRS && p.g1.vtype(v) < gen::VERTEX_TYPES));
    assert_eq!(p, gen_aligned_pair(512, 1).unwrap());
    assert_ne!(p, gen_aligned_pair(512, 2).unwrap());
    assert_eq!(gen::target_edges(1024), 4400);
    assert_eq!(gen::target_edges(32768), 385_000);
}

#[test]
fn unperturbed_pair_is_recovered_by_top1() {
    let p = gen_aligned_pair_with(64, 3, &Perturbation::NONE).unwrap();
    assert_eq!(p.g2.nvertices(), 64);
    assert_eq!(p.g1.nedges(), p.g2.nedges());
    let mut signatures: HashMap<VertexMeta, usize> = HashMap::new();
    for u in 0..64 {
        *signatures.entry(p.g1.metadata(u)).or_default() += 1;
    }
    let w = SimilarityWeights::default();
    let mut checked = 0;
    for &(u, v) in &p.truth {
        assert_eq!(p.g1.metadata(u), p.g2.metadata(v));
        if signatures[&p.g1.metadata(u)] > 1 {
            continue;
        }
        let best = (0..64)
            .map(|c| Candidate {
                id: c,
                score: sigma(&p.g1, c, &p.g2, v, &w).0,
            })
            .min_by(Candidate::cmp_rank)
            .unwrap();
        assert_eq!(best.id, u);
        checked += 1;
    }
    assert!(checked > 32, "{checked}");
}

#[test]
fn graph_json_round_trip() {
    let g = random_graph(10, 20, 4);
    let back = AttributedGraph::from_json(&g.to_json()).unwrap();
    assert_eq!(g, back);
    assert!(AttributedGraph::from_json(r#"{"n":2,"edges":[[0,5,0]],"vtypes":[0,0],"attrs":[[],[]]}"#).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn topk_lists_are_sorted_and_bounded(seed in 0u64..1000, k in 1usize..6) {
        let (g1, g2) = (random_graph(16, 24, seed), random_graph(16, 24, seed + 1));
        let inp = prepare(&g1, &g2, 4, LayoutMode::Hcb, 2).unwrap();
        let r = run(&inp, 2, k, Scheme::Pair, seed);
        prop_assert_eq!(&r.topk, &brute_force(&inp, k, &SimilarityWeights::default()));
        for l in &r.topk.lists {
            prop_assert!(l.len() <= k);
            prop_assert!(l.windows(2).all(|w| w[0].ranks_before(&w[1])));
            prop_assert!(l.iter().all(|c| (0.0..=1.0).contains(&c.score)));
        }
    }

    #[test]
    fn hilbert_is_injective(a in (0u64..1 << 16, 0u64..1 << 16), b in (0u64..1 << 16, 0u64..1 << 16)) {
        prop_assume!(a != b);
        prop_assert_ne!(hilbert_rank(a.0, a.1, 16).unwrap(), hilbert_rank(b.0, b.1, 16).unwrap());
    }
}
