//! Forward birth-death simulation and exact samplers of reconstructed trees.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Open01};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dists::LawError;
use crate::kernel::{check_positive, p0_inverse, ParamError, Params, RawParams};
use crate::tree::{FullNode, FullTree, ReconTree, TipState, TreeBuilder};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Law(#[from] LawError),
    #[error("all lineages went extinct at forward time {time} before the stop rule fired")]
    ExtinctRun { time: f64 },
    #[error("lineage count exceeded {cap}; choose a shorter duration or smaller rates")]
    TooManyLineages { cap: usize },
    #[error("this sampler needs mu = 0, got mu = {mu}")]
    RequiresYule { mu: f64 },
    #[error("invalid stop rule: {0}")]
    BadStop(String),
    #[error("no tree accepted after {attempts} attempts (acceptance rate below {rate_bound:e})")]
    AttemptsExceeded { attempts: u64, rate_bound: f64 },
}

/// Seeded ChaCha stream. Equal `(seed, stream_id)` pairs give equal output,
/// and distinct `stream_id`s give non-overlapping sequences.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum StopRule {
    /// Stop just before the speciation event that would bring the number of
    /// living lineages to `m`, leaving `m - 1` lineages. With `mu_hat = 0`
    /// this is the moment just before the `m`-th speciation event when the
    /// origin of the process counts as the first one.
    BeforeSpeciationCount(usize),
    /// Stop after `t` units of time.
    Duration(f64),
}

impl StopRule {
    fn validate(&self) -> Result<(), SimError> {
        match *self {
            StopRule::BeforeSpeciationCount(m) if m < 2 => {
                Err(SimError::BadStop(format!("speciation count must be at least 2, got {m}")))
            }
            StopRule::Duration(t) if !(t > 0.0 && t.is_finite()) => {
                Err(SimError::BadStop(format!("duration must be positive, got {t}")))
            }
            _ => Ok(()),
        }
    }
}

/// Upper bound on simultaneously living lineages in forward runs.
pub const LINEAGE_CAP: usize = 1 << 24;

/// Default cap on rejection-sampler attempts per accepted tree.
pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000_000;

fn positive_exp<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let d = Exp::new(rate).expect("rate is positive");
    loop {
        let w: f64 = d.sample(rng);
        if w > 0.0 {
            return w;
        }
    }
}

/// Runs the process forward from one stem lineage (`initial = 1`) or from a
/// speciation event at time zero (`initial = 2`).
fn grow<R: Rng + ?Sized>(raw: &RawParams, stop: StopRule, initial: usize, rng: &mut R) -> Result<FullTree, SimError> {
    let total = raw.lambda_hat + raw.mu_hat;
    let p_birth = raw.lambda_hat / total;
    let mut nodes = vec![FullNode {
        parent: None,
        children: Vec::new(),
        time: 0.0,
        tip: None,
    }];
    let mut active: Vec<usize> = Vec::new();
    let spawn = |nodes: &mut Vec<FullNode>, parent: usize| {
        nodes.push(FullNode {
            parent: Some(parent),
            children: Vec::new(),
            time: 0.0,
            // placeholder until the lineage ends
            tip: Some(TipState::Extant { sampled: false }),
        });
        let id = nodes.len() - 1;
        nodes[parent].children.push(id);
        id
    };
    for _ in 0..initial {
        active.push(spawn(&mut nodes, 0));
    }
    let mut t = 0.0;
    let present = loop {
        let k = active.len();
        let wait = positive_exp(total * k as f64, rng);
        if let StopRule::Duration(end) = stop {
            if t + wait >= end {
                break end;
            }
        }
        t += wait;
        let i = rng.random_range(0..k);
        let v = active[i];
        if rng.random_bool(p_birth) {
            if let StopRule::BeforeSpeciationCount(m) = stop {
                if k + 1 == m {
                    break t;
                }
            }
            if k + 1 > LINEAGE_CAP {
                return Err(SimError::TooManyLineages { cap: LINEAGE_CAP });
            }
            nodes[v].time = t;
            nodes[v].tip = None;
            active[i] = spawn(&mut nodes, v);
            active.push(spawn(&mut nodes, v));
        } else {
            nodes[v].time = t;
            nodes[v].tip = Some(TipState::Extinct);
            active.swap_remove(i);
            if active.is_empty() {
                return Err(SimError::ExtinctRun { time: t });
            }
        }
    };
    for &v in &active {
        nodes[v].tip = Some(TipState::Extant {
            sampled: raw.f >= 1.0 || rng.random_bool(raw.f),
        });
        nodes[v].time = present;
    }
    for node in &mut nodes {
        node.time = present - node.time;
    }
    Ok(FullTree { nodes, root: 0 })
}

/// Simulates the complete process from a single stem lineage. Every extant
/// tip is flagged as sampled independently with probability `f`.
pub fn simulate_forward<R: Rng + ?Sized>(raw: &RawParams, stop: StopRule, rng: &mut R) -> Result<FullTree, SimError> {
    let raw = RawParams::new(raw.lambda_hat, raw.mu_hat, raw.f)?;
    stop.validate()?;
    grow(&raw, stop, 1, rng)
}

/// Pure-birth tree stopped just before the `(n + 1)`-th speciation: after the
/// root, the waiting time while `i` lineages are alive is `Exp(i lambda)` for
/// `i = 2..n`, and each split hits a uniformly chosen lineage.
pub fn sample_yule_given_n<R: Rng + ?Sized>(n: usize, p: &Params, rng: &mut R) -> Result<ReconTree, SimError> {
    if !p.is_yule() {
        return Err(SimError::RequiresYule { mu: p.mu });
    }
    if n < 2 {
        return Err(ParamError::TooFewLeaves { n: n as u64, min: 2 }.into());
    }
    let mut b = TreeBuilder::with_capacity(n);
    // forward times of internal nodes, fixed up once the present is known
    let root = b.add_internal(0.0);
    let mut forward = vec![(root, 0.0)];
    // each living lineage is identified by the node it descends from
    let mut active = vec![root, root];
    let mut t = 0.0;
    for k in 2..n {
        t += positive_exp(k as f64 * p.lambda, rng);
        let i = rng.random_range(0..k);
        let v = b.add_internal(0.0);
        b.attach(active[i], v).expect("new node");
        forward.push((v, t));
        active[i] = v;
        active.push(v);
    }
    let present = t + positive_exp(n as f64 * p.lambda, rng);
    for (v, ft) in forward {
        b.set_time(v, present - ft).expect("node exists");
    }
    for (j, &parent) in active.iter().enumerate() {
        let leaf = b.add_leaf(Some(format!("t{}", j + 1)));
        b.attach(parent, leaf).expect("new leaf");
    }
    b.build().map_err(|e| unreachable!("sampler produced an invalid tree: {e}"))
}

fn check_x1(x1: f64) -> Result<(), SimError> {
    Ok(check_positive("x1", x1)?)
}

/// Draws `n - 2` i.i.d. speciation times from `G(s|x1)` by inversion, puts
/// the root at `x1` and joins uniformly random pairs of lineages going back
/// in time.
pub fn sample_given_n_age<R: Rng + ?Sized>(n: usize, x1: f64, p: &Params, rng: &mut R) -> Result<ReconTree, SimError> {
    if n < 2 {
        return Err(ParamError::TooFewLeaves { n: n as u64, min: 2 }.into());
    }
    check_x1(x1)?;
    let p0_x1 = p.kernel(x1).p0;
    let mut times: Vec<f64> = Vec::with_capacity(n - 1);
    loop {
        times.clear();
        while times.len() < n - 2 {
            let y: f64 = rng.sample(Open01);
            let s = p0_inverse(y * p0_x1, p);
            if s > 0.0 && s < x1 {
                times.push(s);
            }
        }
        times.sort_by(f64::total_cmp);
        // ties have probability zero but would produce zero-length edges
        if times.windows(2).all(|w| w[0] < w[1]) {
            break;
        }
    }
    times.push(x1);
    Ok(coalesce(n, &times, rng))
}

/// Joins random pairs among `n` leaves at the given increasing times.
fn coalesce<R: Rng + ?Sized>(n: usize, times: &[f64], rng: &mut R) -> ReconTree {
    let mut b = TreeBuilder::with_capacity(n);
    let mut live: Vec<usize> = (1..=n).map(|i| b.add_leaf(Some(format!("t{i}")))).collect();
    for &s in times {
        let x = live.swap_remove(rng.random_range(0..live.len()));
        let y = live.swap_remove(rng.random_range(0..live.len()));
        live.push(b.join(x, y, s).expect("fresh nodes"));
    }
    b.build().expect("coalescent tree is valid")
}

/// Leaf count of a tree of age `x1`, drawn as the sum of two independent
/// geometric counts on `{1, 2, ...}` with ratio `lambda p0(x1)`.
pub fn sample_leaf_count_given_age<R: Rng + ?Sized>(x1: f64, p: &Params, rng: &mut R) -> Result<usize, SimError> {
    check_x1(x1)?;
    let k = p.kernel(x1);
    let log_q = (-k.one_minus_lambda_p0).ln_1p();
    let mut geometric = || {
        let u: f64 = rng.sample(Open01);
        let extra = (u.ln() / log_q).floor();
        1 + extra.min(usize::MAX as f64 / 4.0) as usize
    };
    Ok(geometric() + geometric())
}

pub fn sample_given_age<R: Rng + ?Sized>(x1: f64, p: &Params, rng: &mut R) -> Result<ReconTree, SimError> {
    let n = sample_leaf_count_given_age(x1, p, rng)?;
    sample_given_n_age(n, x1, p, rng)
}

#[derive(Debug, Clone)]
pub struct RejectionSample {
    pub tree: ReconTree,
    pub full: FullTree,
    pub attempts: u64,
}

/// Starts two lineages at a speciation event at `x1`, runs the raw process
/// for `x1` units of time and accepts when both root children have at least
/// one sampled extant descendant, which makes `x1` the age of their most
/// recent common ancestor.
pub fn sample_rejection_given_age<R: Rng + ?Sized>(
    x1: f64,
    raw: &RawParams,
    max_attempts: u64,
    rng: &mut R,
) -> Result<RejectionSample, SimError> {
    check_x1(x1)?;
    let raw = RawParams::new(raw.lambda_hat, raw.mu_hat, raw.f)?;
    for attempt in 1..=max_attempts {
        let full = match grow(&raw, StopRule::Duration(x1), 2, rng) {
            Ok(full) => full,
            Err(SimError::ExtinctRun { .. }) => continue,
            Err(e) => return Err(e),
        };
        if let Some(tree) = full.reconstruct() {
            // both sides sampled exactly when the reconstructed root is the
            // simulated root
            if tree.age() == x1 {
                return Ok(RejectionSample {
                    tree,
                    full,
                    attempts: attempt,
                });
            }
        }
    }
    Err(SimError::AttemptsExceeded {
        attempts: max_attempts,
        rate_bound: 1.0 / max_attempts as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{classify_edges, tree_stats, EdgeKind};
    use approx::assert_relative_eq;

    fn yule(lambda: f64) -> Params {
        Params::yule(lambda).unwrap()
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..8).map({
            let mut r = RngStream::new(9, 3);
            move |_| r.next_u64()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = RngStream::new(9, 3);
            move |_| r.next_u64()
        }).collect();
        let c: Vec<u64> = (0..8).map({
            let mut r = RngStream::new(9, 4);
            move |_| r.next_u64()
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn stop_before_third_speciation_leaves_two_tips() {
        let raw = RawParams::yule(1.0).unwrap();
        let mut rng = RngStream::new(1, 0);
        for _ in 0..50 {
            let full = simulate_forward(&raw, StopRule::BeforeSpeciationCount(3), &mut rng).unwrap();
            full.validate().unwrap();
            assert_eq!(full.n_extant(), 2);
        }
        assert!(simulate_forward(&raw, StopRule::BeforeSpeciationCount(1), &mut rng).is_err());
        assert!(simulate_forward(&raw, StopRule::Duration(-1.0), &mut rng).is_err());
    }

    #[test]
    fn pure_birth_complete_sampling_needs_no_pruning() {
        let raw = RawParams::yule(1.0).unwrap();
        let mut rng = RngStream::new(2, 0);
        for _ in 0..20 {
            let full = simulate_forward(&raw, StopRule::BeforeSpeciationCount(12), &mut rng).unwrap();
            let tree = full.reconstruct().unwrap();
            assert_eq!(tree.n_leaves(), 11);
            // the only thing removed is the stem
            let internal: Vec<f64> = full.nodes.iter().filter(|v| v.children.len() == 2).map(|v| v.time).collect();
            let mut internal = internal;
            internal.sort_by(|a, b| b.total_cmp(a));
            assert_eq!(internal, tree_stats(&tree).speciation_times);
        }
    }

    #[test]
    fn pruned_pendant_lengths_equal_attachment_times() {
        let raw = RawParams::new(1.0, 0.5, 0.6).unwrap();
        let mut rng = RngStream::new(3, 0);
        let mut checked = 0;
        while checked < 50 {
            let full = match simulate_forward(&raw, StopRule::Duration(3.0), &mut rng) {
                Ok(f) => f,
                Err(SimError::ExtinctRun { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            full.validate().unwrap();
            let Some(tree) = full.reconstruct() else { continue };
            assert_eq!(tree.n_leaves(), full.n_sampled());
            for leaf in tree.leaves() {
                let parent = tree.node(leaf).parent.unwrap();
                assert_eq!(tree.edge_length(leaf).unwrap(), tree.node(parent).time);
            }
            checked += 1;
        }
    }

    #[test]
    fn lineage_count_is_geometric() {
        let raw = RawParams::yule(1.0).unwrap();
        let t = 1.2;
        let reps = 20_000;
        let mut rng = RngStream::new(4, 0);
        let counts: Vec<f64> = (0..reps)
            .map(|_| simulate_forward(&raw, StopRule::Duration(t), &mut rng).unwrap().n_extant() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        let var = (1.0 - (-t).exp()) * (2.0 * t).exp();
        let se = (var / reps as f64).sqrt();
        assert!((mean - t.exp()).abs() < 3.0 * se, "mean {mean} vs {}", t.exp());
    }

    #[test]
    fn yule_given_n_shape() {
        let p = yule(1.0);
        let mut rng = RngStream::new(5, 0);
        for n in [2, 3, 20] {
            let tree = sample_yule_given_n(n, &p, &mut rng).unwrap();
            assert_eq!(tree.n_leaves(), n);
            let edges = classify_edges(&tree, &mut rng);
            assert_eq!(edges.iter().filter(|e| e.kind == EdgeKind::Pendant).count(), n);
            assert_eq!(edges.iter().filter(|e| e.kind == EdgeKind::Interior).count(), n - 2);
        }
        let two = sample_yule_given_n(2, &p, &mut rng).unwrap();
        let s = tree_stats(&two);
        assert_eq!(s.pendant_lengths[0], s.pendant_lengths[1]);
        assert!(sample_yule_given_n(5, &Params::new(1.0, 0.2).unwrap(), &mut rng).is_err());
        assert!(sample_yule_given_n(1, &p, &mut rng).is_err());
    }

    #[test]
    fn given_n_age_structure() {
        let p = Params::new(1.0, 0.5).unwrap();
        let mut rng = RngStream::new(6, 0);
        let two = sample_given_n_age(2, 1.5, &p, &mut rng).unwrap();
        assert_eq!(tree_stats(&two).pendant_lengths, vec![1.5, 1.5]);
        for _ in 0..100 {
            let tree = sample_given_n_age(9, 2.0, &p, &mut rng).unwrap();
            let s = tree_stats(&tree);
            assert_eq!(s.n, 9);
            assert_eq!(s.mrca_age, 2.0);
            assert_eq!(s.speciation_times.len(), 8);
            // the sum of all edge lengths is 2 x1 plus the non-root speciation times
            let identity = 2.0 * s.mrca_age + s.speciation_times[1..].iter().sum::<f64>();
            assert_relative_eq!(s.diversity, identity, max_relative = 1e-12);
        }
        assert!(sample_given_n_age(1, 1.0, &p, &mut rng).is_err());
        assert!(sample_given_n_age(4, 0.0, &p, &mut rng).is_err());
    }

    #[test]
    fn samplers_are_deterministic() {
        let p = Params::new(1.0, 0.3).unwrap();
        let run = |stream| {
            let mut rng = RngStream::new(77, stream);
            (0..20)
                .map(|_| crate::tree::to_newick(&sample_given_age(1.5, &p, &mut rng).unwrap()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(0), run(0));
        assert_ne!(run(0), run(1));
    }

    #[test]
    fn rejection_without_loss_always_accepts() {
        let raw = RawParams::yule(1.0).unwrap();
        let mut rng = RngStream::new(8, 0);
        for _ in 0..50 {
            let out = sample_rejection_given_age(1.0, &raw, 10, &mut rng).unwrap();
            assert_eq!(out.attempts, 1);
            assert_eq!(out.tree.age(), 1.0);
            assert_eq!(out.tree.n_leaves(), out.full.n_extant());
        }
    }

    #[test]
    fn rejection_reports_exhaustion() {
        // heavy extinction and sparse sampling make acceptance rare
        let raw = RawParams::new(1.0, 1.0, 0.01).unwrap();
        let mut rng = RngStream::new(9, 0);
        let err = sample_rejection_given_age(5.0, &raw, 5, &mut rng).unwrap_err();
        assert!(matches!(err, SimError::AttemptsExceeded { attempts: 5, .. }), "{err}");
    }
}
