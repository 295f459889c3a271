//! Exact simulation of the finite-`n` block counting process.
//!
//! Events are generated by thinning a dominating intensity
//! `U(k, b) = R(k) min(1, b² C₂ / (2k))` over the number of boxes `k`, where
//! `b` is the current number of blocks and `C₂ ≥ sup_k E_k[(k p₁)²]`.
//!
//! * For `k ≤ K₀ = ⌊b² C₂ / 2⌋` the blocks are thrown into `k` boxes and the
//!   candidate is kept when at least two blocks share a box.
//! * For larger `k` a pair of blocks is chosen uniformly and forced into one
//!   box drawn with probability proportional to `p_j²`, the remaining blocks
//!   are thrown, and the candidate is kept with probability `1/N` where `N`
//!   is the number of colliding pairs. Together with the acceptance factor
//!   `(b-1)/b · E_k[(k p₁)²]/C₂` this reproduces the rate `R(k) P(ω)` of
//!   every merging allocation `ω`.
//!
//! Box weights are never materialised: gamma weights are thrown through the
//! equivalent Pólya urn, constant weights through its uniform limit and
//! finite discrete weights by drawing the multinomial type counts first.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::coag::{FreqVector, TestFunction};
use crate::error::{invalid, Error, Result};
use crate::model::{multinomial, pick, ModelConfig, RateSequence, WeightLaw};
use crate::numerics::special::power_sum;
use crate::numerics::stats::Moments;

/// Number of boxes up to which `R(k)` is tabulated for sampling.
pub const K_CUT: u64 = 1 << 16;
/// Above this many boxes the multinomial type counts of a finite discrete law
/// are replaced by their means.
const DISCRETE_EXACT_LIMIT: f64 = 1.0e18;

/// Block-size census of a sample of size `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockState {
    n: u64,
    census: BTreeMap<u64, u64>,
}

impl BlockState {
    /// `n` singletons.
    pub fn singletons(n: u64) -> Self {
        let mut census = BTreeMap::new();
        if n > 0 {
            census.insert(1, n);
        }
        Self { n, census }
    }

    pub fn from_sizes(sizes: &[u64]) -> Self {
        let mut census = BTreeMap::new();
        for &s in sizes {
            *census.entry(s).or_insert(0) += 1;
        }
        Self {
            n: sizes.iter().sum(),
            census,
        }
    }

    pub fn from_census(census: BTreeMap<u64, u64>) -> Result<Self> {
        if census.iter().any(|(&s, &c)| s == 0 || c == 0) {
            return Err(invalid("census", "sizes and counts must be positive"));
        }
        let n = census.iter().map(|(s, c)| s * c).sum();
        Ok(Self { n, census })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn census(&self) -> &BTreeMap<u64, u64> {
        &self.census
    }

    pub fn block_count(&self) -> u64 {
        self.census.values().sum()
    }

    pub fn is_absorbed(&self) -> bool {
        self.block_count() <= 1
    }

    /// Block sizes in increasing order.
    pub fn sizes(&self) -> Vec<u64> {
        self.census
            .iter()
            .flat_map(|(&s, &c)| std::iter::repeat_n(s, c as usize))
            .collect()
    }

    /// `z = census / n`.
    pub fn to_freq(&self) -> FreqVector {
        FreqVector::from_census(&self.census, self.n)
    }

    /// Compact `size:count` list separated by semicolons.
    pub fn compact(&self) -> String {
        self.census
            .iter()
            .map(|(s, c)| format!("{s}:{c}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Throws the blocks of `state` into boxes with the explicit probabilities
/// `p` and merges blocks sharing a box.
pub fn throw_balls<R: Rng + ?Sized>(state: &BlockState, p: &[f64], rng: &mut R) -> BlockState {
    let cum: Vec<f64> = p
        .iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    let total = *cum.last().expect("non-empty mass partition");
    let mut boxes: BTreeMap<usize, u64> = BTreeMap::new();
    for s in state.sizes() {
        let u = rng.random::<f64>() * total;
        let j = cum.partition_point(|&c| c <= u).min(p.len() - 1);
        *boxes.entry(j).or_insert(0) += s;
    }
    let sizes: Vec<u64> = boxes.into_values().collect();
    BlockState::from_sizes(&sizes)
}

/// `U(k, b) = R(k) min(1, b² C₂ / (2k))`.
pub fn dominating_rate(rates: &RateSequence, b: u64, k: u64, c2: f64) -> f64 {
    let bb = b as f64;
    rates.rate(k) * (bb * bb * c2 / (2.0 * k as f64)).min(1.0)
}

/// Sufficient statistics of the weight law for lazy ball throwing.
#[derive(Debug, Clone, PartialEq)]
enum Allocator {
    /// Equal weights.
    Uniform,
    /// Dirichlet weights with parameter `a`, thrown as a Pólya urn.
    Polya { a: f64 },
    /// Finitely many weight values.
    Discrete { values: Vec<f64>, probs: Vec<f64>, bound: f64 },
}

impl Allocator {
    fn for_law(law: &WeightLaw) -> Result<(Self, f64)> {
        law.validate()?;
        Ok(match law {
            WeightLaw::Constant { .. } => (Allocator::Uniform, 1.0),
            WeightLaw::LogNormal { sigma, .. } if *sigma == 0.0 => (Allocator::Uniform, 1.0),
            WeightLaw::Gamma { shape, .. } => (Allocator::Polya { a: *shape }, (shape + 1.0) / shape),
            WeightLaw::FiniteDiscrete { values, probs } => {
                let (vals, ps): (Vec<f64>, Vec<f64>) =
                    values.iter().zip(probs).filter(|(_, &p)| p > 0.0).map(|(v, p)| (*v, *p)).unzip();
                let vmax = vals.iter().copied().fold(0.0, f64::max);
                let vmin = vals.iter().copied().fold(f64::INFINITY, f64::min);
                if vals.len() == 1 {
                    (Allocator::Uniform, 1.0)
                } else {
                    let bound = (vmax / vmin).powi(2);
                    (
                        Allocator::Discrete {
                            values: vals,
                            probs: ps,
                            bound,
                        },
                        bound,
                    )
                }
            }
            WeightLaw::LogNormal { .. } => {
                return Err(Error::Unsupported(
                    "exact finite-n simulation needs a weight law with a bounded pair tilt \
                     (constant, gamma or finite discrete)"
                        .into(),
                ))
            }
        })
    }

    /// Acceptance factor `E_k[(k p₁)²] / C₂` of the pair region. Finite
    /// discrete weights handle the tilt by rejection inside the throw.
    fn pair_factor(&self, k: f64, c2: f64) -> f64 {
        match self {
            Allocator::Uniform | Allocator::Discrete { .. } => 1.0,
            Allocator::Polya { a } => (k * (a + 1.0) / (k * a + 1.0) / c2).min(1.0),
        }
    }
}

/// Reusable buffers for one throw.
#[derive(Debug, Default, Clone)]
struct Scratch {
    /// Box of each placed ball, in placement order.
    placed: Vec<u32>,
    box_balls: Vec<u32>,
    box_mass: Vec<u64>,
    /// Boxes of each type for discrete weights.
    type_boxes: Vec<Vec<u32>>,
    type_counts: Vec<f64>,
}

impl Scratch {
    fn reset(&mut self) {
        self.placed.clear();
        self.box_balls.clear();
        self.box_mass.clear();
    }

    fn new_box(&mut self, mass: u64) -> u32 {
        self.box_balls.push(1);
        self.box_mass.push(mass);
        (self.box_balls.len() - 1) as u32
    }

    fn join(&mut self, b: u32, mass: u64) {
        self.box_balls[b as usize] += 1;
        self.box_mass[b as usize] += mass;
    }

    fn colliding_pairs(&self) -> u64 {
        self.box_balls.iter().map(|&c| (c as u64) * (c as u64 - 1) / 2).sum()
    }
}

/// How a candidate `k` was generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Direct,
    Pair,
}

/// A candidate event.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    /// Number of boxes; exact below `2^53`.
    pub k: f64,
    pub region: Region,
    /// New block sizes when the candidate is accepted.
    pub outcome: Option<Vec<u64>>,
}

/// Samples candidates from the dominating intensity for a fixed model.
#[derive(Debug, Clone)]
pub struct EventSampler {
    config: ModelConfig,
    allocator: Allocator,
    c2: f64,
    k_cut: u64,
    /// `cum[j][k] = Σ_{i ≤ k} R(i) i^{-j}` for `j ∈ {0, 1}`.
    cum: [Vec<f64>; 2],
}

/// Mass of the dominating intensity split into its two regions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominatingMass {
    pub k0: u64,
    pub direct: f64,
    pub pair: f64,
}

impl DominatingMass {
    pub fn total(&self) -> f64 {
        self.direct + self.pair
    }
}

impl EventSampler {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let (allocator, c2) = Allocator::for_law(&config.weight_law)?;
        let k_cut = K_CUT.max(config.rates.table_len() as u64);
        let mut cum = [vec![0.0; k_cut as usize + 1], vec![0.0; k_cut as usize + 1]];
        for k in 1..=k_cut {
            let r = config.rates.rate(k);
            cum[0][k as usize] = cum[0][k as usize - 1] + r;
            cum[1][k as usize] = cum[1][k as usize - 1] + r / k as f64;
        }
        Ok(Self {
            config: config.clone(),
            allocator,
            c2,
            k_cut,
            cum,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// The constant `C₂` of the dominating intensity.
    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// Threshold `K₀ = ⌊b² C₂ / 2⌋` between the two regions.
    pub fn k0(&self, b: u64) -> u64 {
        ((b as f64).powi(2) * self.c2 / 2.0).floor() as u64
    }

    /// `Σ_{k=lo}^{hi} R(k) k^{-j}` with `hi = None` for `∞`.
    pub fn range_sum(&self, j: usize, lo: u64, hi: Option<u64>) -> f64 {
        let lo = lo.max(1);
        if hi.is_some_and(|h| h < lo) {
            return 0.0;
        }
        let mut total = 0.0;
        if lo <= self.k_cut {
            let top = hi.map_or(self.k_cut, |h| h.min(self.k_cut));
            total += self.cum[j][top as usize] - self.cum[j][lo as usize - 1];
        }
        let start = lo.max(self.k_cut + 1);
        if hi.is_none_or(|h| h >= start) {
            total += self.config.rho * power_sum(self.config.alpha + j as f64, start, hi);
        }
        total
    }

    /// Mass of the dominating intensity for `b` blocks.
    pub fn dominating_mass(&self, b: u64) -> DominatingMass {
        let k0 = self.k0(b);
        let scale = (b as f64).powi(2) * self.c2 / 2.0;
        DominatingMass {
            k0,
            direct: self.range_sum(0, 1, Some(k0)),
            pair: scale * self.range_sum(1, k0 + 1, None),
        }
    }

    /// Draws `k ∈ [lo, hi]` with weight `R(k) k^{-j}`.
    pub fn sample_k<R: Rng + ?Sized>(&self, j: usize, lo: u64, hi: Option<u64>, rng: &mut R) -> f64 {
        let lo = lo.max(1);
        let table = if lo <= self.k_cut {
            let top = hi.map_or(self.k_cut, |h| h.min(self.k_cut));
            self.cum[j][top as usize] - self.cum[j][lo as usize - 1]
        } else {
            0.0
        };
        let start = lo.max(self.k_cut + 1);
        let tail = if hi.is_none_or(|h| h >= start) {
            self.config.rho * power_sum(self.config.alpha + j as f64, start, hi)
        } else {
            0.0
        };
        let u = rng.random::<f64>() * (table + tail);
        if u < table {
            let target = self.cum[j][lo as usize - 1] + u;
            let top = hi.map_or(self.k_cut, |h| h.min(self.k_cut)) as usize;
            let idx = self.cum[j][lo as usize..=top].partition_point(|&c| c <= target);
            return (lo as usize + idx).min(top) as f64;
        }
        sample_power(self.config.alpha + j as f64, start, hi, rng)
    }

    /// One candidate with a given `k` and region, thrown against `sizes`.
    pub fn propose_with_k<R: Rng + ?Sized>(&self, sizes: &[u64], k: f64, region: Region, rng: &mut R) -> Proposal {
        let mut scratch = Scratch::default();
        self.propose_inner(sizes, k, region, rng, &mut scratch)
    }

    fn propose_inner<R: Rng + ?Sized>(
        &self,
        sizes: &[u64],
        k: f64,
        region: Region,
        rng: &mut R,
        scratch: &mut Scratch,
    ) -> Proposal {
        let b = sizes.len();
        let outcome = match region {
            Region::Direct => {
                self.throw(sizes, k, None, rng, scratch);
                (scratch.box_balls.len() < b).then(|| scratch.box_mass.clone())
            }
            Region::Pair => {
                let keep = (b as f64 - 1.0) / b as f64 * self.allocator.pair_factor(k, self.c2);
                if rng.random::<f64>() >= keep {
                    None
                } else {
                    let i = rng.random_range(0..b);
                    let mut j = rng.random_range(0..b - 1);
                    if j >= i {
                        j += 1;
                    }
                    if self.throw(sizes, k, Some((i, j)), rng, scratch) {
                        let pairs = scratch.colliding_pairs();
                        (rng.random::<f64>() * (pairs as f64) < 1.0).then(|| scratch.box_mass.clone())
                    } else {
                        None
                    }
                }
            }
        };
        Proposal { k, region, outcome }
    }

    /// Draws a candidate from the full dominating intensity.
    pub fn propose<R: Rng + ?Sized>(&self, sizes: &[u64], mass: &DominatingMass, rng: &mut R) -> Proposal {
        let mut scratch = Scratch::default();
        self.propose_full(sizes, mass, rng, &mut scratch)
    }

    fn propose_full<R: Rng + ?Sized>(
        &self,
        sizes: &[u64],
        mass: &DominatingMass,
        rng: &mut R,
        scratch: &mut Scratch,
    ) -> Proposal {
        if rng.random::<f64>() * mass.total() < mass.direct {
            let k = self.sample_k(0, 1, Some(mass.k0), rng);
            self.propose_inner(sizes, k, Region::Direct, rng, scratch)
        } else {
            let k = self.sample_k(1, mass.k0 + 1, None, rng);
            self.propose_inner(sizes, k, Region::Pair, rng, scratch)
        }
    }

    /// Throws the balls into `k` boxes; a seeded pair is placed first in one
    /// box drawn with probability proportional to `p_j²`. Returns false when
    /// the seeding step is rejected (finite discrete weights only).
    fn throw<R: Rng + ?Sized>(
        &self,
        sizes: &[u64],
        k: f64,
        pair: Option<(usize, usize)>,
        rng: &mut R,
        s: &mut Scratch,
    ) -> bool {
        s.reset();
        match &self.allocator {
            Allocator::Uniform | Allocator::Polya { .. } => {
                let a = match self.allocator {
                    Allocator::Polya { a } => Some(a),
                    _ => None,
                };
                if let Some((i, j)) = pair {
                    let bx = s.new_box(sizes[i]);
                    s.join(bx, sizes[j]);
                    s.placed.extend([bx, bx]);
                }
                for (idx, &mass) in sizes.iter().enumerate() {
                    if pair.is_some_and(|(i, j)| idx == i || idx == j) {
                        continue;
                    }
                    let occ = s.box_balls.len() as f64;
                    let m = s.placed.len() as f64;
                    let u = rng.random::<f64>();
                    let target = match a {
                        None => (u * k < occ).then(|| rng.random_range(0..s.box_balls.len()) as u32),
                        Some(a) => {
                            let join = a * occ + m;
                            if u * (k * a + m) < join {
                                if rng.random::<f64>() * join < a * occ {
                                    Some(rng.random_range(0..s.box_balls.len()) as u32)
                                } else {
                                    Some(s.placed[rng.random_range(0..s.placed.len())])
                                }
                            } else {
                                None
                            }
                        }
                    };
                    let bx = match target {
                        Some(bx) => {
                            s.join(bx, mass);
                            bx
                        }
                        None => s.new_box(mass),
                    };
                    s.placed.push(bx);
                }
                true
            }
            Allocator::Discrete { values, probs, bound } => {
                let t_count = values.len();
                if s.type_boxes.len() != t_count {
                    s.type_boxes = vec![Vec::new(); t_count];
                }
                s.type_boxes.iter_mut().for_each(Vec::clear);
                s.type_counts.clear();
                if k < DISCRETE_EXACT_LIMIT {
                    let counts = multinomial(k as u64, probs, rng);
                    s.type_counts.extend(counts.iter().map(|&c| c as f64));
                } else {
                    s.type_counts.extend(probs.iter().map(|p| p * k));
                }
                let weights: Vec<f64> = s.type_counts.iter().zip(values).map(|(c, v)| c * v).collect();
                let total: f64 = weights.iter().sum();
                if let Some((i, j)) = pair {
                    let t = pick(&s.type_counts, rng.random());
                    let scaled = k * values[t] / total;
                    if rng.random::<f64>() * bound >= scaled * scaled {
                        return false;
                    }
                    let bx = s.new_box(sizes[i]);
                    s.join(bx, sizes[j]);
                    s.type_boxes[t].push(bx);
                }
                for (idx, &mass) in sizes.iter().enumerate() {
                    if pair.is_some_and(|(i, j)| idx == i || idx == j) {
                        continue;
                    }
                    let t = pick(&weights, rng.random());
                    let occ = s.type_boxes[t].len();
                    if rng.random::<f64>() * s.type_counts[t] < occ as f64 {
                        let bx = s.type_boxes[t][rng.random_range(0..occ)];
                        s.join(bx, mass);
                    } else {
                        let bx = s.new_box(mass);
                        s.type_boxes[t].push(bx);
                    }
                }
                true
            }
        }
    }
}

/// Draws an integer `k ∈ [lo, hi]` with weight `k^{-s}` by rejection from the
/// continuous density `∝ y^{-s}` on `[lo, hi + 1)`. Values above `2^53` are
/// returned as approximate floats.
pub fn sample_power<R: Rng + ?Sized>(s: f64, lo: u64, hi: Option<u64>, rng: &mut R) -> f64 {
    let lo_f = lo as f64;
    let top = hi.map(|h| h as f64 + 1.0);
    let envelope = (1.0 + 1.0 / lo_f).powf(s);
    loop {
        let u: f64 = rng.random();
        let y = match top {
            Some(t) if (s - 1.0).abs() < 1e-12 => lo_f * (u * (t / lo_f).ln()).exp(),
            Some(t) => {
                let (a, b) = (lo_f.powf(1.0 - s), t.powf(1.0 - s));
                (a + u * (b - a)).powf(1.0 / (1.0 - s))
            }
            None => lo_f * (1.0 - u).powf(-1.0 / (s - 1.0)),
        };
        let k = y.floor().max(lo_f);
        if let Some(h) = hi {
            if k > h as f64 {
                continue;
            }
        }
        // Mass of [k, k+1) under y^{-s}, without cancellation.
        let cell = if (s - 1.0).abs() < 1e-12 {
            (1.0 / k).ln_1p()
        } else {
            -k.powf(1.0 - s) * ((1.0 - s) * (1.0 / k).ln_1p()).exp_m1() / (s - 1.0)
        };
        if rng.random::<f64>() * envelope * cell < k.powf(-s) {
            return k;
        }
    }
}

/// An accepted event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    /// Unrescaled time of the event.
    pub time: f64,
    pub k: f64,
    pub blocks_before: u64,
    pub blocks_after: u64,
    /// Number of rejected candidates before this event.
    pub rejected: u64,
}

/// A running coalescent started from a block configuration.
#[derive(Debug, Clone)]
pub struct Coalescent<'a> {
    sampler: &'a EventSampler,
    n: u64,
    sizes: Vec<u64>,
    time: f64,
    mass: DominatingMass,
    scratch: Scratch,
}

impl<'a> Coalescent<'a> {
    pub fn new(sampler: &'a EventSampler, state: &BlockState) -> Self {
        let sizes = state.sizes();
        let mass = sampler.dominating_mass(sizes.len() as u64);
        Self {
            sampler,
            n: state.n(),
            sizes,
            time: 0.0,
            mass,
            scratch: Scratch::default(),
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn blocks(&self) -> u64 {
        self.sizes.len() as u64
    }

    /// Unrescaled time.
    pub fn time(&self) -> f64 {
        self.time
    }

    /// Factor `n^{1-α}` turning unrescaled into rescaled time.
    pub fn time_scale(&self) -> f64 {
        (self.n as f64).powf(1.0 - self.sampler.config.alpha)
    }

    pub fn state(&self) -> BlockState {
        BlockState::from_sizes(&self.sizes)
    }

    /// Advances to the next state-changing event; `None` once absorbed.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<StepEvent> {
        if self.sizes.len() < 2 {
            return None;
        }
        let total = self.mass.total();
        let mut rejected = 0;
        loop {
            let e: f64 = Exp1.sample(rng);
            self.time += e / total;
            let prop = self.sampler.propose_full(&self.sizes, &self.mass, rng, &mut self.scratch);
            if let Some(new_sizes) = prop.outcome {
                let before = self.sizes.len() as u64;
                self.sizes = new_sizes;
                self.mass = self.sampler.dominating_mass(self.sizes.len() as u64);
                return Some(StepEvent {
                    time: self.time,
                    k: prop.k,
                    blocks_before: before,
                    blocks_after: self.sizes.len() as u64,
                    rejected,
                });
            }
            rejected += 1;
        }
    }
}

/// `(waiting time, k, new state)` of the next state-changing event.
pub fn sample_next_event<R: Rng + ?Sized>(
    sampler: &EventSampler,
    state: &BlockState,
    rng: &mut R,
) -> Result<(f64, f64, BlockState)> {
    if state.is_absorbed() {
        return Err(Error::Absorbed);
    }
    let mut c = Coalescent::new(sampler, state);
    let ev = c.step(rng).expect("not absorbed");
    Ok((ev.time, ev.k, c.state()))
}

/// When to stop a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Stop {
    UntilMrca,
    /// Rescaled time horizon.
    Horizon(f64),
}

/// One recorded event of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    /// Unrescaled time.
    pub time: f64,
    pub k: f64,
    pub state: BlockState,
}

/// A simulated trajectory with occupation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n: u64,
    pub alpha: f64,
    pub events: Vec<TrajectoryEvent>,
    /// `∫ μ^n_t(i) dt` in rescaled time, by block size `i`.
    pub occupation: BTreeMap<u64, f64>,
    /// `∫ |μ^n_t| dt` in rescaled time, accumulated independently.
    pub block_integral: f64,
    /// Unrescaled time to the most recent common ancestor.
    pub t_mrca: Option<f64>,
    /// Unrescaled time at which the simulation stopped.
    pub end_time: f64,
}

impl Trajectory {
    /// `n^{1-α}`.
    pub fn time_scale(&self) -> f64 {
        (self.n as f64).powf(1.0 - self.alpha)
    }

    /// `L̂_i = ∫ μ̂^n_s(i) ds` in unrescaled time.
    pub fn occupation_unrescaled(&self) -> BTreeMap<u64, f64> {
        let f = (self.n as f64).powf(self.alpha);
        self.occupation.iter().map(|(&i, &v)| (i, v * f)).collect()
    }

    pub fn final_state(&self) -> BlockState {
        self.events
            .last()
            .map(|e| e.state.clone())
            .unwrap_or_else(|| BlockState::singletons(self.n))
    }

    /// Writes `(event_index, time_rescaled, k, blocks, census)` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["event_index", "time_rescaled", "k", "blocks", "census"])?;
        let scale = self.time_scale();
        out.write_record(["0", "0", "", &self.n.to_string(), &BlockState::singletons(self.n).compact()])?;
        for (i, e) in self.events.iter().enumerate() {
            out.write_record(&[
                (i + 1).to_string(),
                format!("{:e}", e.time * scale),
                format!("{}", e.k),
                e.state.block_count().to_string(),
                e.state.compact(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// JSON summary with the time to the MRCA and the occupation vector.
    pub fn summary(&self) -> TrajectorySummary {
        TrajectorySummary {
            n: self.n,
            events: self.events.len(),
            t_mrca: self.t_mrca,
            t_mrca_rescaled: self.t_mrca.map(|t| t * self.time_scale()),
            occupation: self.occupation.iter().map(|(&i, &v)| (i, v)).collect(),
        }
    }
}

/// Serializable summary of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub n: u64,
    pub events: usize,
    pub t_mrca: Option<f64>,
    pub t_mrca_rescaled: Option<f64>,
    pub occupation: Vec<(u64, f64)>,
}

/// Simulates from `n` singletons until absorption or a rescaled horizon.
pub fn simulate<R: Rng + ?Sized>(sampler: &EventSampler, n: u64, stop: Stop, rng: &mut R) -> Result<Trajectory> {
    if n < 2 {
        return Err(invalid("n", "need at least two individuals"));
    }
    let mut c = Coalescent::new(sampler, &BlockState::singletons(n));
    let scale = c.time_scale();
    let horizon = match stop {
        Stop::UntilMrca => f64::INFINITY,
        Stop::Horizon(t) => t / scale,
    };
    let inv_n = 1.0 / n as f64;
    let mut occupation: BTreeMap<u64, f64> = BTreeMap::new();
    let mut block_integral = 0.0;
    let mut events = Vec::new();
    let mut last = 0.0;
    let mut census = BlockState::singletons(n);
    let mut t_mrca = None;
    loop {
        let before = census.clone();
        let ev = c.step(rng);
        let until = ev.map_or(horizon, |e| e.time.min(horizon));
        let dt = (until - last) * scale;
        if dt.is_finite() && dt > 0.0 {
            for (&size, &count) in before.census() {
                *occupation.entry(size).or_insert(0.0) += count as f64 * inv_n * dt;
            }
            block_integral += before.block_count() as f64 * inv_n * dt;
        }
        match ev {
            Some(e) if e.time <= horizon => {
                last = e.time;
                census = c.state();
                events.push(TrajectoryEvent {
                    time: e.time,
                    k: e.k,
                    state: census.clone(),
                });
                if e.blocks_after == 1 {
                    t_mrca = Some(e.time);
                    break;
                }
            }
            _ => {
                last = until;
                break;
            }
        }
    }
    Ok(Trajectory {
        n,
        alpha: sampler.config.alpha,
        events,
        occupation,
        block_integral,
        t_mrca,
        end_time: last,
    })
}

/// Step function `t ↦ μ^n_t` in rescaled time.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledPath {
    pub n: u64,
    /// Rescaled jump times, starting with 0.
    pub times: Vec<f64>,
    pub states: Vec<BlockState>,
}

impl RescaledPath {
    /// `μ^n_t`.
    pub fn at(&self, t: f64) -> FreqVector {
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        self.states[i].to_freq()
    }

    pub fn blocks_at(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        self.states[i].block_count() as f64 / self.n as f64
    }
}

pub fn rescaled_path(traj: &Trajectory) -> RescaledPath {
    let scale = traj.time_scale();
    let mut times = vec![0.0];
    let mut states = vec![BlockState::singletons(traj.n)];
    for e in &traj.events {
        times.push(e.time * scale);
        states.push(e.state.clone());
    }
    RescaledPath { n: traj.n, times, states }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: u64,
}

/// Options of [`empirical_generator`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorOptions {
    /// Candidates per stratum in the pilot run.
    pub pilot: usize,
    /// Total candidate budget after the pilot.
    pub budget: usize,
    /// Stop spending the budget once the Neyman allocation predicts this
    /// standard error.
    pub target_std_err: Option<f64>,
    /// Optional cut-off: events with `k > A n` are dropped.
    pub truncation: Option<f64>,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            pilot: 200,
            budget: 200_000,
            target_std_err: None,
            truncation: None,
        }
    }
}

/// A stratum of the dominating intensity: `k ∈ [lo, hi]` within one region.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Stratum {
    region: Region,
    lo: u64,
    hi: Option<u64>,
    mass: f64,
}

fn strata(sampler: &EventSampler, b: u64) -> Vec<Stratum> {
    let dm = sampler.dominating_mass(b);
    let scale = (b as f64).powi(2) * sampler.c2() / 2.0;
    let mut out = Vec::new();
    // Geometric cells, split finer where the contribution varies fastest.
    let mut lo = 1u64;
    while lo <= dm.k0 {
        let hi = (lo + lo / 4).max(lo).min(dm.k0);
        out.push(Stratum {
            region: Region::Direct,
            lo,
            hi: Some(hi),
            mass: sampler.range_sum(0, lo, Some(hi)),
        });
        lo = hi + 1;
    }
    let mut lo = dm.k0 + 1;
    for _ in 0..24 {
        let hi = lo.saturating_mul(2);
        out.push(Stratum {
            region: Region::Pair,
            lo,
            hi: Some(hi),
            mass: scale * sampler.range_sum(1, lo, Some(hi)),
        });
        lo = hi + 1;
    }
    out.push(Stratum {
        region: Region::Pair,
        lo,
        hi: None,
        mass: scale * sampler.range_sum(1, lo, None),
    });
    out
}

/// Estimates `A_n f(z_n) = n^{α-1} Σ_k R(k) E[f(Λ^{k,n} z_n) - f(z_n)]`.
///
/// Candidates from the dominating intensity are stratified by `k`; each
/// accepted candidate contributes the change of `f`. A pilot run fixes a
/// Neyman allocation of the remaining budget across strata.
pub fn empirical_generator<R: Rng + ?Sized>(
    sampler: &EventSampler,
    z: &BlockState,
    f: &TestFunction,
    opts: GeneratorOptions,
    rng: &mut R,
) -> Result<Estimate> {
    f.validate()?;
    let n = z.n();
    let sizes = z.sizes();
    let b = sizes.len() as u64;
    let f0 = f.eval(&z.to_freq());
    let scale = (n as f64).powf(sampler.config.alpha - 1.0);
    if b < 2 {
        return Ok(Estimate {
            mean: 0.0,
            std_err: 0.0,
            samples: 0,
        });
    }
    let cut = opts.truncation.map(|a| a * n as f64);
    let cells = strata(sampler, b);
    let mut scratch = Scratch::default();
    let mut draw = |cell: &Stratum, rng: &mut R| -> f64 {
        let j = if cell.region == Region::Direct { 0 } else { 1 };
        let k = sampler.sample_k(j, cell.lo, cell.hi, rng);
        let p = sampler.propose_inner(&sizes, k, cell.region, rng, &mut scratch);
        match p.outcome {
            Some(new) if cut.is_none_or(|c| k <= c) => f.eval(&BlockState::from_sizes(&new).to_freq()) - f0,
            _ => 0.0,
        }
    };
    let mut stats: Vec<Moments> = Vec::with_capacity(cells.len());
    for cell in &cells {
        let m: Moments = (0..opts.pilot).map(|_| draw(cell, rng)).collect();
        stats.push(m);
    }
    let weights: Vec<f64> = cells
        .iter()
        .zip(&stats)
        .map(|(c, m)| c.mass * m.variance().max(0.0).sqrt())
        .collect();
    let wsum: f64 = weights.iter().sum();
    // Under Neyman allocation of B candidates the standard error is scale·Σw/√B.
    let budget = match opts.target_std_err {
        Some(t) if t > 0.0 => ((scale * wsum / t).powi(2).ceil() as usize).min(opts.budget),
        _ => opts.budget,
    };
    if wsum > 0.0 {
        for ((cell, m), w) in cells.iter().zip(stats.iter_mut()).zip(&weights) {
            let extra = (budget as f64 * w / wsum).round() as usize;
            for _ in 0..extra {
                m.push(draw(cell, rng));
            }
        }
    }
    let mut mean = 0.0;
    let mut var = 0.0;
    let mut samples = 0;
    for (cell, m) in cells.iter().zip(&stats) {
        mean += cell.mass * m.mean;
        var += cell.mass * cell.mass * m.variance().max(0.0) / m.count as f64;
        samples += m.count;
    }
    Ok(Estimate {
        mean: scale * mean,
        std_err: scale * var.sqrt(),
        samples,
    })
}

/// `A_n ψ_λ` at `n` singletons for constant weights, summed exactly over `k`
/// up to `100 n²` with a series expansion of the remaining tail.
pub fn exact_generator_symmetric_singletons(rates: &RateSequence, n: u64, lambda: f64) -> f64 {
    let nf = n as f64;
    let x = 1.0 - lambda;
    let term = |k: f64| {
        // (k/n)[(1 - x/k)^n - (1 - 1/k)^n] - λ, with both powers via ln_1p.
        let a = (nf * (-x / k).ln_1p()).exp();
        let b = if k == 1.0 { 0.0 } else { (nf * (-1.0 / k).ln_1p()).exp() };
        k / nf * (a - b) - lambda
    };
    let big_k = (100.0 * nf * nf) as u64;
    let head: f64 = (1..=big_k).map(|k| rates.rate(k) * term(k as f64)).sum();
    // Tail: term(k) = (1/n) Σ_{j≥2} C(n,j) (-1)^j (x^j - 1) k^{1-j}.
    let mut tail = 0.0;
    let mut binom = 1.0;
    for j in 1..=8u32 {
        binom *= (nf - j as f64 + 1.0) / j as f64;
        if j < 2 {
            continue;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let coef = binom * sign * (x.powi(j as i32) - 1.0) / nf;
        tail += coef * rates.weighted_sum(j - 1, big_k + 1, None);
    }
    nf.powf(rates.alpha() - 1.0) * (head + tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamTag};

    fn symmetric() -> ModelConfig {
        ModelConfig::power(0.5, 1.0, WeightLaw::Constant { c: 1.0 }, 1)
    }

    #[test]
    fn throw_into_one_box_merges_everything() {
        let mut rng = stream(1, StreamTag::Paintbox, 0);
        let s = throw_balls(&BlockState::singletons(2), &[1.0], &mut rng);
        assert_eq!(s.census().get(&2), Some(&1));
    }

    #[test]
    fn dominating_rate_examples() {
        let r = RateSequence::PurePower { rho: 1.0, alpha: 0.5 };
        assert_eq!(dominating_rate(&r, 2, 1, 1.0), 1.0);
        assert!((dominating_rate(&r, 2, 8, 1.0) - 0.25 / 8f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn absorbed_state_is_reported() {
        let sampler = EventSampler::new(&symmetric()).unwrap();
        let mut rng = stream(1, StreamTag::Paintbox, 0);
        let r = sample_next_event(&sampler, &BlockState::from_sizes(&[2]), &mut rng);
        assert!(matches!(r, Err(Error::Absorbed)));
    }

    #[test]
    fn lognormal_simulation_is_unsupported() {
        let cfg = ModelConfig::power(0.5, 1.0, WeightLaw::LogNormal { mu: 0.0, sigma: 0.5 }, 1);
        assert!(matches!(EventSampler::new(&cfg), Err(Error::Unsupported(_))));
    }

    #[test]
    fn power_sampler_matches_weights() {
        let mut rng = stream(2, StreamTag::Paintbox, 0);
        let (lo, s) = (10u64, 1.5);
        let draws = 200_000;
        let mut c10 = 0;
        let mut c11 = 0;
        for _ in 0..draws {
            match sample_power(s, lo, None, &mut rng) as u64 {
                10 => c10 += 1,
                11 => c11 += 1,
                _ => {}
            }
        }
        let z = power_sum(s, lo, None);
        let p10 = 10f64.powf(-s) / z;
        let p11 = 11f64.powf(-s) / z;
        let sd = |p: f64| (p * (1.0 - p) / draws as f64).sqrt();
        assert!((c10 as f64 / draws as f64 - p10).abs() < 4.0 * sd(p10));
        assert!((c11 as f64 / draws as f64 - p11).abs() < 4.0 * sd(p11));
    }

    #[test]
    fn simulate_conserves_mass_and_reaches_mrca() {
        let sampler = EventSampler::new(&symmetric()).unwrap();
        let mut rng = stream(3, StreamTag::Paintbox, 0);
        let t = simulate(&sampler, 100, Stop::UntilMrca, &mut rng).unwrap();
        assert!(t.t_mrca.is_some());
        assert_eq!(t.final_state().census().get(&100), Some(&1));
        let mut prev = 100;
        for e in &t.events {
            assert_eq!(e.state.n(), 100);
            assert!(e.state.block_count() < prev);
            prev = e.state.block_count();
        }
        let occ: f64 = t.occupation.values().sum();
        assert!((occ - t.block_integral).abs() < 1e-9 * t.block_integral.max(1.0));
        let mass: f64 = t.occupation.iter().map(|(&i, &v)| i as f64 * v).sum();
        assert!(mass <= t.t_mrca.unwrap() * t.time_scale() * (1.0 + 1e-12));
    }

    #[test]
    fn rescaled_path_endpoints() {
        let sampler = EventSampler::new(&symmetric()).unwrap();
        let mut rng = stream(4, StreamTag::Paintbox, 0);
        let t = simulate(&sampler, 30, Stop::UntilMrca, &mut rng).unwrap();
        let p = rescaled_path(&t);
        assert_eq!(p.at(0.0).get(1), 1.0);
        let end = p.at(1e12);
        assert!((end.get(30) - 1.0 / 30.0).abs() < 1e-15);
        for &s in &[0.01, 0.1, 0.3, 1.0] {
            assert!((p.at(s).mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn horizon_stops_early() {
        let sampler = EventSampler::new(&symmetric()).unwrap();
        let mut rng = stream(5, StreamTag::Paintbox, 0);
        let t = simulate(&sampler, 200, Stop::Horizon(0.05), &mut rng).unwrap();
        assert!(t.events.iter().all(|e| e.time * t.time_scale() <= 0.05));
        assert!((t.end_time * t.time_scale() - 0.05).abs() < 1e-12 || t.t_mrca.is_some());
    }

    #[test]
    fn generator_of_zero_function_vanishes() {
        let sampler = EventSampler::new(&symmetric()).unwrap();
        let mut rng = stream(6, StreamTag::Generator, 0);
        let opts = GeneratorOptions {
            pilot: 20,
            budget: 1000,
            target_std_err: None,
            truncation: None,
        };
        let e = empirical_generator(&sampler, &BlockState::singletons(20), &TestFunction::psi(0.0), opts, &mut rng).unwrap();
        assert_eq!(e.mean, 0.0);
        let e = empirical_generator(&sampler, &BlockState::singletons(20), &TestFunction::psi(1.0), opts, &mut rng).unwrap();
        assert!(e.mean < 0.0);
    }
}
