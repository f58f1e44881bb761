use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::graph::{components, rw_count, AttributedGraph, SimilarityWeights, VertexMeta};
use super::layout::LayoutAssignment;
use super::space::QuadTree;
use super::{Candidate, Scheme, TopKList};
use crate::dds::JaggedLocalArray;
use crate::error::SimResult;
use crate::machine::{Ctx, EventCounters, GlobalAddress, Machine, NodeletId, Registers, SimTime, SpawnStrategy, TaskSpec};

/// Reads of the target vertex's metadata.
pub const TAG_SIGMA_V: &str = "sigma_v";
/// Reads of the candidate vertex's metadata.
pub const TAG_SIGMA_U: &str = "sigma_u";
/// Read and update of the running similarity value.
pub const TAG_SIGMA_SCORE: &str = "sigma_score";
/// Reads of bucket member lists.
pub const TAG_BUCKET: &str = "bucket";
pub const SIGMA_TAGS: [&str; 3] = [TAG_SIGMA_V, TAG_SIGMA_U, TAG_SIGMA_SCORE];

/// Everything the kernels compare: both graphs, their trees and layouts.
#[derive(Debug, Clone)]
pub struct SimInput {
    pub g1: AttributedGraph,
    pub g2: AttributedGraph,
    pub qt1: QuadTree,
    pub qt2: QuadTree,
    pub layout1: LayoutAssignment,
    pub layout2: LayoutAssignment,
}

/// Accounted traffic of one (B, B') bucket pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TaskStat {
    pub bucket: usize,
    pub neighbor: usize,
    pub b_len: u64,
    pub neighbor_len: u64,
    /// Σ rw_count over every (v, u) in B × B'.
    pub rw: u64,
}

impl TaskStat {
    /// Words moved: bucket ids, candidate ids and the similarity traffic.
    pub fn words(&self) -> u64 {
        self.b_len + self.b_len * self.neighbor_len + self.rw
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GsanaResult {
    pub scheme: Scheme,
    pub topk: TopKList,
    pub time: SimTime,
    pub counters: EventCounters,
    pub tasks: Vec<TaskStat>,
    /// Buckets in spawn order, with the neighbour bucket for PAIR sub-tasks.
    pub spawn_trace: Vec<(usize, Option<usize>)>,
}

impl GsanaResult {
    pub fn rw_total(&self) -> u64 {
        self.tasks.iter().map(|t| t.rw).sum()
    }

    /// Reads and writes the simulator counted inside similarity evaluations.
    pub fn kernel_accesses(&self) -> u64 {
        SIGMA_TAGS.iter().map(|t| self.counters.tag(t).accesses()).sum()
    }

    pub fn bandwidth(&self) -> SimResult<f64> {
        super::gsana_bandwidth(&self.tasks, self.time.seconds)
    }
}

/// Per-neighbour-bucket partial lists of one PAIR parent.
type Partials = Arc<Mutex<HashMap<usize, Vec<(u64, Vec<Candidate>)>>>>;

/// Memory images of the inputs.
struct Env {
    meta1: JaggedLocalArray,
    meta2: JaggedLocalArray,
    members1: JaggedLocalArray,
    members2: JaggedLocalArray,
    weights: SimilarityWeights,
    k: usize,
}

fn load(m: &mut Machine, inp: &SimInput, weights: SimilarityWeights, k: usize) -> SimResult<Env> {
    let meta = |m: &mut Machine, name: &str, g: &AttributedGraph, l: &LayoutAssignment| -> SimResult<JaggedLocalArray> {
        let metas: Vec<VertexMeta> = (0..g.nvertices() as u64).map(|v| g.metadata(v)).collect();
        let lens: Vec<u64> = metas.iter().map(VertexMeta::words).collect();
        let arr = JaggedLocalArray::with_homes(m, name, &lens, &l.vertex_nodelet)?;
        for (v, md) in metas.iter().enumerate() {
            arr.host_fill_row(m, v, &md.encode())?;
        }
        Ok(arr)
    };
    let members = |m: &mut Machine, name: &str, qt: &QuadTree, l: &LayoutAssignment| -> SimResult<JaggedLocalArray> {
        let lens: Vec<u64> = qt.buckets.iter().map(|b| b.members.len() as u64).collect();
        let arr = JaggedLocalArray::with_homes(m, name, &lens, &l.bucket_nodelet)?;
        for (b, bucket) in qt.buckets.iter().enumerate() {
            arr.host_fill_row(m, b, &bucket.members)?;
        }
        Ok(arr)
    };
    Ok(Env {
        meta1: meta(m, "gsana.meta1", &inp.g1, &inp.layout1)?,
        meta2: meta(m, "gsana.meta2", &inp.g2, &inp.layout2)?,
        members1: members(m, "gsana.members1", &inp.qt1, &inp.layout1)?,
        members2: members(m, "gsana.members2", &inp.qt2, &inp.layout2)?,
        weights,
        k,
    })
}

async fn read_meta(ctx: &Ctx, arr: &JaggedLocalArray, v: u64) -> SimResult<VertexMeta> {
    let h = ctx.read_words(arr.addr(v as usize, 0)?, 2).await?;
    let (_, na, d) = VertexMeta::header(h[0], h[1]);
    let rest_len = 2 * d + na;
    let rest = if rest_len > 0 {
        ctx.read_words(arr.addr(v as usize, 2)?, rest_len).await?
    } else {
        Vec::new()
    };
    Ok(VertexMeta::decode(h[0], h[1], &rest))
}

/// σ(u, v) for target `v` and the `j`-th member of candidate bucket `nb`.
async fn compare(ctx: &Ctx, env: &Env, v: u64, nb: usize, j: u64, score: GlobalAddress) -> SimResult<Candidate> {
    ctx.tag(TAG_SIGMA_V);
    let mv = read_meta(ctx, &env.meta2, v).await?;
    ctx.tag(TAG_BUCKET);
    let u = ctx.read(env.members1.addr(nb, j)?).await?;
    ctx.tag(TAG_SIGMA_U);
    let mu = read_meta(ctx, &env.meta1, u).await?;
    ctx.tag(TAG_SIGMA_SCORE);
    let mut s = 0.0;
    for (i, (c, w)) in components(&mu, &mv).iter().zip(env.weights.as_array()).enumerate() {
        let old = ctx.read(score).await?;
        let base = if i == 0 { 0.0 } else { f64::from_bits(old) };
        s = base + w * c;
        ctx.write(score, s.to_bits()).await?;
    }
    Ok(Candidate { id: u, score: s })
}

/// Every v in bucket `b` against every member of each bucket in `nbs`;
/// one list per member of `b`, in member order.
async fn compare_buckets(ctx: &Ctx, env: &Env, b: usize, nbs: &[usize], score: GlobalAddress) -> SimResult<Vec<(u64, Vec<Candidate>)>> {
    let blen = env.members2.row(b)?.len;
    let mut out = Vec::with_capacity(blen as usize);
    for i in 0..blen {
        ctx.tag(TAG_BUCKET);
        let v = ctx.read(env.members2.addr(b, i)?).await?;
        let mut list = Vec::new();
        for &nb in nbs {
            for j in 0..env.members1.row(nb)?.len {
                let c = compare(ctx, env, v, nb, j, score).await?;
                insert_topk(&mut list, c, env.k);
            }
        }
        out.push((v, list));
    }
    Ok(out)
}

/// Keeps `list` sorted by score descending then id ascending, at most `k`
/// long.
pub fn insert_topk(list: &mut Vec<Candidate>, c: Candidate, k: usize) {
    let pos = list.partition_point(|x| x.ranks_before(&c));
    if pos < k {
        list.insert(pos, c);
        list.truncate(k);
    }
}

/// One scratch word per task on the nodelet the task runs on.
struct Scratch {
    bases: Vec<GlobalAddress>,
    next: Vec<u64>,
}

impl Scratch {
    fn new(m: &mut Machine, homes: &[NodeletId]) -> SimResult<Self> {
        let mut counts = vec![0u64; m.nodelets()];
        for h in homes {
            counts[h.index()] += 1;
        }
        let bases = m.alloc("gsana.score", &counts)?;
        Ok(Self {
            bases,
            next: vec![0; counts.len()],
        })
    }

    fn take(&mut self, at: NodeletId) -> GlobalAddress {
        let a = self.bases[at.index()].add_words(self.next[at.index()]);
        self.next[at.index()] += 1;
        a
    }
}

fn task_stats(inp: &SimInput, neighbors: &[Vec<usize>]) -> Vec<TaskStat> {
    let cost = |g: &AttributedGraph, v: u64| 2 * g.degree(v) + g.attrs(v).len() as u64;
    let side2: Vec<u64> = inp
        .qt2
        .buckets
        .iter()
        .map(|b| b.members.iter().map(|&v| cost(&inp.g2, v)).sum())
        .collect();
    let side1: Vec<u64> = inp
        .qt1
        .buckets
        .iter()
        .map(|b| b.members.iter().map(|&u| cost(&inp.g1, u)).sum())
        .collect();
    let mut out = Vec::new();
    for (b, nbs) in neighbors.iter().enumerate() {
        let bl = inp.qt2.buckets[b].members.len() as u64;
        for &nb in nbs {
            let nl = inp.qt1.buckets[nb].members.len() as u64;
            out.push(TaskStat {
                bucket: b,
                neighbor: nb,
                b_len: bl,
                neighbor_len: nl,
                rw: rw_count(0, 0, 0, 0) * bl * nl + side2[b] * nl + side1[nb] * bl,
            });
        }
    }
    out
}

/// Runs the similarity stage on `m` under the given scheme; `seed` orders
/// the PAIR sub-task spawns.
pub fn parallel_sim(
    m: &mut Machine,
    inp: &SimInput,
    k: usize,
    weights: SimilarityWeights,
    scheme: Scheme,
    seed: u64,
) -> SimResult<GsanaResult> {
    weights.validate()?;
    let env = Arc::new(load(m, inp, weights, k)?);
    let nb2 = inp.qt2.buckets.len();
    let neighbors: Vec<Vec<usize>> = inp.qt2.buckets.iter().map(|b| inp.qt1.neighbor_buckets(&b.rect)).collect();
    let lists: Arc<Mutex<Vec<Vec<Candidate>>>> = Arc::new(Mutex::new(vec![Vec::new(); inp.g2.nvertices()]));
    let mut trace = Vec::new();
    let mut tasks = Vec::with_capacity(nb2);

    match scheme {
        Scheme::All => {
            let load = |b: usize| {
                inp.qt2.buckets[b].members.len() * neighbors[b].iter().map(|&nb| inp.qt1.buckets[nb].members.len()).sum::<usize>()
            };
            let mut order: Vec<usize> = (0..nb2).collect();
            order.sort_by_key(|&b| (std::cmp::Reverse(load(b)), b));
            let homes: Vec<NodeletId> = order.iter().map(|&b| inp.layout2.bucket_nodelet[b]).collect();
            let mut scratch = Scratch::new(m, &homes)?;
            for b in order {
                let at = inp.layout2.bucket_nodelet[b];
                let (env, lists, nbs) = (env.clone(), lists.clone(), neighbors[b].clone());
                let score = scratch.take(at);
                trace.push((b, None));
                tasks.push(TaskSpec::new(at, Registers::empty(), move |ctx: Ctx| async move {
                    let res = compare_buckets(&ctx, &env, b, &nbs, score).await?;
                    let mut out = lists.lock();
                    for (v, l) in res {
                        out[v as usize] = l;
                    }
                    Ok(())
                }));
            }
        }
        Scheme::Pair => {
            let homes: Vec<NodeletId> = neighbors
                .iter()
                .enumerate()
                .flat_map(|(b, nbs)| std::iter::repeat_n(inp.layout2.bucket_nodelet[b], nbs.len()))
                .collect();
            let mut scratch = Scratch::new(m, &homes)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (b, nbs) in neighbors.iter().enumerate() {
                let at = inp.layout2.bucket_nodelet[b];
                let mut shuffled = nbs.clone();
                shuffled.shuffle(&mut rng);
                trace.extend(shuffled.iter().map(|&nb| (b, Some(nb))));
                let partials: Partials = Arc::default();
                let aux: Vec<TaskSpec> = shuffled
                    .into_iter()
                    .map(|nb| {
                        let (env, partials) = (env.clone(), partials.clone());
                        let score = scratch.take(at);
                        TaskSpec::new(at, Registers::empty(), move |ctx: Ctx| async move {
                            let res = compare_buckets(&ctx, &env, b, &[nb], score).await?;
                            partials.lock().insert(nb, res);
                            Ok(())
                        })
                    })
                    .collect();
                let (env, lists, nbs) = (env.clone(), lists.clone(), nbs.clone());
                tasks.push(TaskSpec::new(at, Registers::empty(), move |ctx: Ctx| async move {
                    for t in aux {
                        ctx.spawn_spec(t).await?;
                    }
                    ctx.sync().await;
                    let partials = std::mem::take(&mut *partials.lock());
                    let mut merged: HashMap<u64, Vec<Candidate>> = HashMap::new();
                    for nb in &nbs {
                        for (v, part) in &partials[nb] {
                            let l = merged.entry(*v).or_default();
                            for c in part {
                                insert_topk(l, *c, env.k);
                            }
                        }
                    }
                    let mut out = lists.lock();
                    for (v, l) in merged {
                        out[v as usize] = l;
                    }
                    Ok(())
                }));
            }
        }
    }

    m.launch(tasks, SpawnStrategy::Serial)?;
    let rep = m.run_region_measured()?;
    let lists = std::mem::take(&mut *lists.lock());
    Ok(GsanaResult {
        scheme,
        topk: TopKList { lists },
        time: rep.time,
        counters: rep.counters,
        tasks: task_stats(inp, &neighbors),
        spawn_trace: trace,
    })
}
