//! Vectorization planning: decide how a set of sum-factorized kernels is
//! mapped onto SIMD lanes.
//!
//! The planner partitions a kernel set into lane groups, each described by a
//! fuse factor `f` (distinct kernels per input tensor), a split factor `s`
//! (circular slices of the direction-0 loop) and the number of distinct
//! input tensors, with `f * s * num_inputs` equal to the lane width. All
//! admissible partitions of a group of compatible kernels are enumerated
//! explicitly and ranked by a cost model — either an analytic heuristic or
//! measured execution time — and the cheapest partition wins. A quadrature
//! search can additionally raise the direction-0 point count to the next
//! multiples of SIMD-friendly divisors when splitting at the natural count
//! is impossible.

use crate::error::{Error, Result};
use crate::sumfact::{Stage, SumfactKernelSpec, TensorId};
use crate::vecplan::{build_vectorized_kernel, VectorizedKernel};
use serde::Serialize;

/// How candidate lane groupings are ranked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostModel {
    /// Analytic model: the flop count of one member's scalar kernel, scaled
    /// by penalty terms for reduced instruction-level parallelism (splits
    /// shorten the inner contraction loop) and extra input streams.
    Heuristic { c0: f64, c1: f64 },
    /// Measure each candidate group on synthetic data and rank by median
    /// execution time.
    Autotune { repeats: usize, seed: u64 },
}

impl CostModel {
    /// The default analytic model.
    pub fn heuristic_default() -> Self {
        CostModel::Heuristic { c0: 0.5, c1: 0.25 }
    }
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::heuristic_default()
    }
}

/// A lane grouping candidate: which kernels (as indices into the planned
/// set) share a vectorized kernel, and with which layout parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLayout {
    pub members: Vec<usize>,
    pub f: usize,
    pub s: usize,
    pub num_inputs: usize,
}

impl GroupLayout {
    fn scalar(member: usize) -> Self {
        GroupLayout {
            members: vec![member],
            f: 1,
            s: 1,
            num_inputs: 1,
        }
    }

    pub fn width(&self) -> usize {
        self.f * self.s * self.num_inputs
    }
}

/// A materialized group inside a chosen plan.
#[derive(Debug, Clone)]
pub struct PlannedGroup {
    pub kernel: VectorizedKernel,
    /// Indices into the kernel list the plan was built from.
    pub members: Vec<usize>,
    /// This group's share of the plan cost.
    pub cost: f64,
}

/// The chosen lane mapping for one integration kernel's sum-factorization
/// set, together with the quadrature tuple it assumes.
#[derive(Debug, Clone)]
pub struct StrategyPlan {
    /// Lane width of the point loop. Groups either match it or are scalar
    /// fallbacks.
    pub width: usize,
    pub quadrature: Vec<usize>,
    pub groups: Vec<PlannedGroup>,
    pub total_cost: f64,
}

impl StrategyPlan {
    pub fn stage1_groups(&self) -> impl Iterator<Item = &PlannedGroup> {
        self.groups
            .iter()
            .filter(|g| g.kernel.stage == Stage::Evaluation)
    }

    pub fn stage3_groups(&self) -> impl Iterator<Item = &PlannedGroup> {
        self.groups
            .iter()
            .filter(|g| g.kernel.stage == Stage::TestMultiply)
    }

    pub fn summary(&self) -> PlanSummary {
        PlanSummary {
            width: self.width,
            quadrature: self.quadrature.clone(),
            total_cost: self.total_cost,
            groups: self
                .groups
                .iter()
                .map(|g| GroupSummary {
                    stage: match g.kernel.stage {
                        Stage::Evaluation => "evaluation".to_string(),
                        Stage::TestMultiply => "test-multiply".to_string(),
                    },
                    f: g.kernel.f,
                    s: g.kernel.s,
                    num_inputs: g.kernel.num_inputs,
                    members: g.members.clone(),
                    quantities: g.kernel.members.iter().map(|m| m.quantity).collect(),
                    cost: g.cost,
                })
                .collect(),
        }
    }
}

/// Serializable description of a plan, for reports and the explain command.
#[derive(Debug, Clone, Serialize)]
pub struct PlanSummary {
    pub width: usize,
    pub quadrature: Vec<usize>,
    pub total_cost: f64,
    pub groups: Vec<GroupSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub stage: String,
    pub f: usize,
    pub s: usize,
    pub num_inputs: usize,
    pub members: Vec<usize>,
    pub quantities: Vec<usize>,
    pub cost: f64,
}

/// Analytic group cost: base flops scaled by an instruction-level-
/// parallelism penalty for splits and a load-stream penalty for multiple
/// inputs.
pub fn cost_heuristic(flops: f64, s: usize, num_inputs: usize, c0: f64, c1: f64) -> f64 {
    flops * (1.0 + c0 * (s as f64).log2()) * (1.0 + c1 * (num_inputs as f64).log2())
}

fn validate_width(width: usize) -> Result<()> {
    if matches!(width, 1 | 2 | 4 | 8) {
        Ok(())
    } else {
        Err(Error::InvalidWidth(width))
    }
}

/// Groups the input tensor ids of `remaining` in order of first appearance,
/// collecting the member indices that read each id.
fn input_lists(kernels: &[SumfactKernelSpec], remaining: &[usize]) -> Vec<(TensorId, Vec<usize>)> {
    let mut lists: Vec<(TensorId, Vec<usize>)> = Vec::new();
    for &idx in remaining {
        let id = kernels[idx].tensor_id;
        match lists.iter_mut().find(|(lid, _)| *lid == id) {
            Some((_, members)) => members.push(idx),
            None => lists.push((id, vec![idx])),
        }
    }
    lists
}

/// Enumerates every admissible partition of a compatible kernel set into
/// lane groups for the given width.
///
/// Each recursion step forms the group containing the first remaining
/// kernel: its scalar fallback, and every `(f, s, num_inputs)` combination
/// with `f * s * num_inputs == width` whose split factor divides the
/// direction-0 point count. Single-input groups may take fewer than `f`
/// kernels (the idle lanes replicate a live member); two-input groups take
/// up to `f` kernels from each of the first two input tensors. Because the
/// formed group always contains the first remaining kernel, every partition
/// is produced exactly once.
pub fn vectorization_strategies(
    kernels: &[SumfactKernelSpec],
    width: usize,
) -> Result<Vec<Vec<GroupLayout>>> {
    validate_width(width)?;
    for pair in kernels.windows(2) {
        if !pair[0].parallelizable_with(&pair[1]) {
            return Err(Error::MixedBounds);
        }
    }
    if kernels.is_empty() {
        return Ok(vec![Vec::new()]);
    }
    let m0 = kernels[0].point_extents()[0];
    let remaining: Vec<usize> = (0..kernels.len()).collect();
    let mut out = Vec::new();
    let mut current = Vec::new();
    enumerate_rec(kernels, width, m0, &remaining, &mut current, &mut out);
    Ok(out)
}

fn enumerate_rec(
    kernels: &[SumfactKernelSpec],
    width: usize,
    m0: usize,
    remaining: &[usize],
    current: &mut Vec<GroupLayout>,
    out: &mut Vec<Vec<GroupLayout>>,
) {
    let Some(&head) = remaining.first() else {
        out.push(current.clone());
        return;
    };

    // Option 1: leave the first kernel scalar.
    current.push(GroupLayout::scalar(head));
    enumerate_rec(kernels, width, m0, &remaining[1..], current, out);
    current.pop();

    if width == 1 {
        return;
    }

    // Option 2: open a vectorized group containing the first kernel.
    let lists = input_lists(kernels, remaining);
    for num_inputs in 1..=2usize.min(lists.len()) {
        let mut f = 1usize;
        while f * num_inputs <= width {
            let s = width / (f * num_inputs);
            if m0 % s != 0 {
                f *= 2;
                continue;
            }
            if num_inputs == 1 {
                let avail = lists[0].1.len();
                for take in 1..=f.min(avail) {
                    let members: Vec<usize> = lists[0].1[..take].to_vec();
                    descend(kernels, width, m0, remaining, &members, f, s, 1, current, out);
                }
            } else {
                let take0 = f.min(lists[0].1.len());
                let take1 = f.min(lists[1].1.len());
                let mut members: Vec<usize> = lists[0].1[..take0].to_vec();
                members.extend_from_slice(&lists[1].1[..take1]);
                descend(kernels, width, m0, remaining, &members, f, s, 2, current, out);
            }
            f *= 2;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn descend(
    kernels: &[SumfactKernelSpec],
    width: usize,
    m0: usize,
    remaining: &[usize],
    members: &[usize],
    f: usize,
    s: usize,
    num_inputs: usize,
    current: &mut Vec<GroupLayout>,
    out: &mut Vec<Vec<GroupLayout>>,
) {
    let rest: Vec<usize> = remaining
        .iter()
        .copied()
        .filter(|i| !members.contains(i))
        .collect();
    current.push(GroupLayout {
        members: members.to_vec(),
        f,
        s,
        num_inputs,
    });
    enumerate_rec(kernels, width, m0, &rest, current, out);
    current.pop();
}

/// Candidate direction-0 point counts for the quadrature search: the
/// original count rounded up to each power-of-two divisor of the lane
/// width, deduplicated. A collapsed direction (a single point, as on the
/// normal axis of a facet) is never raised.
pub fn quadrature_candidates(m0: usize, width: usize) -> Vec<usize> {
    if m0 == 1 {
        return vec![1];
    }
    let mut out = Vec::new();
    let mut i = 1usize;
    while i <= width {
        out.push(m0.div_ceil(i) * i);
        i *= 2;
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Partitions kernel indices into maximal sets of pairwise-compatible
/// kernels, preserving first-appearance order.
fn partition_parallelizable(kernels: &[SumfactKernelSpec]) -> Vec<Vec<usize>> {
    let mut sets: Vec<Vec<usize>> = Vec::new();
    'outer: for (i, k) in kernels.iter().enumerate() {
        for set in sets.iter_mut() {
            if kernels[set[0]].parallelizable_with(k) {
                set.push(i);
                continue 'outer;
            }
        }
        sets.push(vec![i]);
    }
    sets
}

/// Scoring context shared across the candidate plans of one planning call;
/// autotune measurements are memoized per distinct group.
struct Scorer<'a> {
    kernels: &'a [SumfactKernelSpec],
    model: CostModel,
    cache: std::collections::HashMap<(usize, usize, usize, Vec<usize>), f64>,
}

impl<'a> Scorer<'a> {
    fn new(kernels: &'a [SumfactKernelSpec], model: CostModel) -> Self {
        Scorer {
            kernels,
            model,
            cache: std::collections::HashMap::new(),
        }
    }

    fn group_cost(&mut self, layout: &GroupLayout) -> Result<f64> {
        match self.model {
            CostModel::Heuristic { c0, c1 } => {
                let flops = self.kernels[layout.members[0]].flops() as f64;
                Ok(cost_heuristic(flops, layout.s, layout.num_inputs, c0, c1))
            }
            CostModel::Autotune { repeats, seed } => {
                let key = (
                    layout.f,
                    layout.s,
                    layout.num_inputs,
                    layout.members.clone(),
                );
                if let Some(&cost) = self.cache.get(&key) {
                    return Ok(cost);
                }
                let members: Vec<SumfactKernelSpec> = layout
                    .members
                    .iter()
                    .map(|&i| self.kernels[i].clone())
                    .collect();
                let vk = build_vectorized_kernel(members, layout.f, layout.s, layout.num_inputs)?;
                let cost = autotune::measure_group(&vk, repeats, seed)?;
                self.cache.insert(key, cost);
                Ok(cost)
            }
        }
    }

}

/// Total split count of a plan, used as a tie-breaker: prefer fewer slices
/// when costs agree.
fn total_slices(plan: &[GroupLayout]) -> usize {
    plan.iter().map(|g| g.s).sum()
}

/// Picks the cheapest lane mapping for a kernel set at its given quadrature
/// tuple. Kernels are first partitioned into compatible sets (same stage,
/// bounds and facet normal direction); each set's partitions are enumerated
/// and scored independently, and the winners are concatenated.
pub fn fixed_qp_minimal_strategy(
    kernels: &[SumfactKernelSpec],
    width: usize,
    model: &CostModel,
) -> Result<StrategyPlan> {
    validate_width(width)?;
    let mut groups = Vec::new();
    let mut total_cost = 0.0;
    let mut scorer = Scorer::new(kernels, *model);
    for set in partition_parallelizable(kernels) {
        let set_kernels: Vec<SumfactKernelSpec> =
            set.iter().map(|&i| kernels[i].clone()).collect();
        let candidates = vectorization_strategies(&set_kernels, width)?;
        let mut best: Option<(f64, usize, Vec<GroupLayout>)> = None;
        for plan in candidates {
            let cost = scorer_cost_in_set(&mut scorer, &set, &plan)?;
            let slices = total_slices(&plan);
            let better = match &best {
                None => true,
                Some((bc, bs, _)) => cost < *bc || (cost == *bc && slices < *bs),
            };
            if better {
                best = Some((cost, slices, plan));
            }
        }
        let (cost, _, plan) = best.expect("enumeration yields at least the scalar plan");
        total_cost += cost;
        for layout in plan {
            let global_members: Vec<usize> = layout.members.iter().map(|&i| set[i]).collect();
            let member_specs: Vec<SumfactKernelSpec> = global_members
                .iter()
                .map(|&i| kernels[i].clone())
                .collect();
            let kernel =
                build_vectorized_kernel(member_specs, layout.f, layout.s, layout.num_inputs)?;
            let group_cost = scorer.group_cost(&GroupLayout {
                members: global_members.clone(),
                f: layout.f,
                s: layout.s,
                num_inputs: layout.num_inputs,
            })?;
            groups.push(PlannedGroup {
                kernel,
                members: global_members,
                cost: group_cost,
            });
        }
    }
    Ok(StrategyPlan {
        width,
        quadrature: kernels
            .first()
            .map(|k| k.point_extents())
            .unwrap_or_default(),
        groups,
        total_cost,
    })
}

/// Scores a set-relative plan against the global kernel list.
fn scorer_cost_in_set(
    scorer: &mut Scorer<'_>,
    set: &[usize],
    plan: &[GroupLayout],
) -> Result<f64> {
    let mut total = 0.0;
    for layout in plan {
        let global = GroupLayout {
            members: layout.members.iter().map(|&i| set[i]).collect(),
            f: layout.f,
            s: layout.s,
            num_inputs: layout.num_inputs,
        };
        total += scorer.group_cost(&global)?;
    }
    Ok(total)
}

/// Searches over direction-0 quadrature point counts: for each candidate
/// the kernel set is rebuilt at the adjusted tuple and planned at fixed
/// quadrature; the cheapest (plan, tuple) pair wins. Ties prefer fewer
/// points, then fewer slices. For measured costs, each candidate's cost is
/// scaled by the whole-set flop ratio against the original tuple so that
/// extra pointwise work from raised counts is accounted for.
pub fn optimize_quadrature(
    width: usize,
    m_base: &[usize],
    model: &CostModel,
    rebuild: &dyn Fn(&[usize]) -> Result<Vec<SumfactKernelSpec>>,
) -> Result<StrategyPlan> {
    validate_width(width)?;
    if m_base.is_empty() {
        return Err(Error::InvalidArgument(
            "quadrature tuple must not be empty".into(),
        ));
    }
    let base_kernels = rebuild(m_base)?;
    let base_flops: f64 = base_kernels.iter().map(|k| k.flops() as f64).sum();
    let mut best: Option<(f64, usize, StrategyPlan)> = None;
    for q0 in quadrature_candidates(m_base[0], width) {
        let mut tuple = m_base.to_vec();
        tuple[0] = q0;
        let kernels = if q0 == m_base[0] {
            base_kernels.clone()
        } else {
            rebuild(&tuple)?
        };
        let mut plan = fixed_qp_minimal_strategy(&kernels, width, model)?;
        if matches!(model, CostModel::Autotune { .. }) && base_flops > 0.0 {
            let flops: f64 = kernels.iter().map(|k| k.flops() as f64).sum();
            let penalty = flops / base_flops;
            plan.total_cost *= penalty;
            for group in &mut plan.groups {
                group.cost *= penalty;
            }
        }
        let slices: usize = plan.groups.iter().map(|g| g.kernel.s).sum();
        let better = match &best {
            None => true,
            Some((bc, bs, bp)) => {
                plan.total_cost < *bc
                    || (plan.total_cost == *bc && q0 < bp.quadrature[0])
                    || (plan.total_cost == *bc && q0 == bp.quadrature[0] && slices < *bs)
            }
        };
        if better {
            best = Some((plan.total_cost, slices, plan));
        }
    }
    Ok(best.expect("candidate set is never empty").2)
}

/// A user-forced lane mapping, overriding the cost-model search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcedStrategy {
    /// Every kernel runs scalar; the point loop width is 1.
    Scalar,
    /// Fill lanes with distinct kernels (split factor 1), padding the last
    /// group of each compatible set.
    Fuse,
    /// Split every kernel's direction-0 loop into `s` circular slices;
    /// requires `s` to equal the lane width.
    Split(usize),
    /// Fixed `f` kernels x `s` slices per group; requires `f * s` to equal
    /// the lane width.
    Hybrid { f: usize, s: usize },
}

/// Builds the plan for a forced strategy. Sets whose direction-0 point
/// count is 1 (facets normal to direction 0) cannot split and structurally
/// fall back to pure fusion at the same width; any other indivisible split
/// is an error. Groups never mix input tensors: fusion fills lanes per
/// input tensor, so facet kernels fuse within their side.
pub fn forced_plan(
    kernels: &[SumfactKernelSpec],
    width: usize,
    forced: ForcedStrategy,
) -> Result<StrategyPlan> {
    validate_width(width)?;
    let (f, s) = match forced {
        ForcedStrategy::Scalar => {
            let mut groups = Vec::new();
            let mut total_cost = 0.0;
            let mut scorer = Scorer::new(kernels, CostModel::heuristic_default());
            for i in 0..kernels.len() {
                let layout = GroupLayout::scalar(i);
                let cost = scorer.group_cost(&layout)?;
                let kernel = build_vectorized_kernel(vec![kernels[i].clone()], 1, 1, 1)?;
                groups.push(PlannedGroup {
                    kernel,
                    members: vec![i],
                    cost,
                });
                total_cost += cost;
            }
            return Ok(StrategyPlan {
                width: 1,
                quadrature: kernels
                    .first()
                    .map(|k| k.point_extents())
                    .unwrap_or_default(),
                groups,
                total_cost,
            });
        }
        ForcedStrategy::Fuse => (width, 1),
        ForcedStrategy::Split(s) => (1, s),
        ForcedStrategy::Hybrid { f, s } => (f, s),
    };
    if !f.is_power_of_two() || !s.is_power_of_two() || f * s != width {
        return Err(Error::InvalidArgument(format!(
            "forced strategy needs power-of-two factors with f*s = width, got f={f}, s={s}, width={width}"
        )));
    }
    let mut groups = Vec::new();
    let mut total_cost = 0.0;
    let mut scorer = Scorer::new(kernels, CostModel::heuristic_default());
    for set in partition_parallelizable(kernels) {
        let m0 = kernels[set[0]].point_extents()[0];
        // A collapsed direction-0 loop (single point) cannot be split; fall
        // back to pure fusion at the same width so the plan stays uniform.
        let (sf, ss) = if m0 == 1 && s > 1 {
            (width, 1)
        } else if m0 % s != 0 {
            return Err(Error::NotDivisible {
                what: "direction-0 point count",
                value: m0,
                divisor: s,
            });
        } else {
            (f, s)
        };
        let set_kernels: Vec<SumfactKernelSpec> =
            set.iter().map(|&i| kernels[i].clone()).collect();
        for (_, list) in input_lists(&set_kernels, &(0..set.len()).collect::<Vec<_>>()) {
            for chunk in list.chunks(sf) {
                let global_members: Vec<usize> = chunk.iter().map(|&i| set[i]).collect();
                let member_specs: Vec<SumfactKernelSpec> = global_members
                    .iter()
                    .map(|&i| kernels[i].clone())
                    .collect();
                let kernel = build_vectorized_kernel(member_specs, sf, ss, 1)?;
                let cost = scorer.group_cost(&GroupLayout {
                    members: global_members.clone(),
                    f: sf,
                    s: ss,
                    num_inputs: 1,
                })?;
                groups.push(PlannedGroup {
                    kernel,
                    members: global_members,
                    cost,
                });
                total_cost += cost;
            }
        }
    }
    Ok(StrategyPlan {
        width,
        quadrature: kernels
            .first()
            .map(|k| k.point_extents())
            .unwrap_or_default(),
        groups,
        total_cost,
    })
}

/// Measured group costs for the autotuned model.
mod autotune {
    use super::*;
    use crate::simd_exec::{exec_stage1, exec_stage3, ContractionScratch};
    use crate::tensor::InterleavedTensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Median execution time of one group application, in nanoseconds.
    pub(super) fn measure_group(vk: &VectorizedKernel, repeats: usize, seed: u64) -> Result<f64> {
        if repeats < 3 {
            return Err(Error::TooFewRepeats(repeats));
        }
        match vk.width {
            1 => measure::<1>(vk, repeats, seed),
            2 => measure::<2>(vk, repeats, seed),
            4 => measure::<4>(vk, repeats, seed),
            8 => measure::<8>(vk, repeats, seed),
            w => Err(Error::InvalidWidth(w)),
        }
    }

    fn measure<const W: usize>(vk: &VectorizedKernel, repeats: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let member_flops = vk.members[0].flops().max(1);
        // Batch enough applications that one sample comfortably exceeds the
        // clock granularity.
        let inner = (200_000 / member_flops).clamp(1, 4_000) as usize;
        let mut scratch = ContractionScratch::<f64, W>::default();
        let mut samples = Vec::with_capacity(repeats);
        match vk.stage {
            Stage::Evaluation => {
                let in_len: usize = vk.members[0].in_extents().iter().product();
                let inputs: Vec<Vec<f64>> = (0..vk.num_inputs)
                    .map(|_| (0..in_len).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect();
                let input_refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
                let mut out = InterleavedTensor::<f64>::zeros(&vk.lane_out_extents(), W);
                // Warm caches and instruction paths before timing.
                exec_stage1(vk, &input_refs, &mut out, &mut scratch)?;
                for _ in 0..repeats {
                    let t0 = std::time::Instant::now();
                    for _ in 0..inner {
                        exec_stage1(vk, &input_refs, &mut out, &mut scratch)?;
                    }
                    samples.push(t0.elapsed().as_nanos() as u64);
                }
            }
            Stage::TestMultiply => {
                let mut input = InterleavedTensor::<f64>::zeros(&vk.lane_in_extents(), W);
                let len = input.padded_data().len();
                for i in 0..len {
                    input.padded_data_mut()[i] = rng.gen_range(-1.0..1.0);
                }
                let out_len: usize = vk.members[0].out_extents().iter().product();
                let mut targets_storage: Vec<Vec<f64>> =
                    (0..vk.num_inputs).map(|_| vec![0.0; out_len]).collect();
                {
                    let mut targets: Vec<&mut [f64]> = targets_storage
                        .iter_mut()
                        .map(|v| v.as_mut_slice())
                        .collect();
                    exec_stage3(vk, &input, &mut targets, &mut scratch)?;
                }
                for _ in 0..repeats {
                    let t0 = std::time::Instant::now();
                    for _ in 0..inner {
                        let mut targets: Vec<&mut [f64]> = targets_storage
                            .iter_mut()
                            .map(|v| v.as_mut_slice())
                            .collect();
                        exec_stage3(vk, &input, &mut targets, &mut scratch)?;
                    }
                    samples.push(t0.elapsed().as_nanos() as u64);
                }
            }
        }
        samples.sort_unstable();
        let median = samples[samples.len() / 2];
        Ok(median as f64 / inner as f64)
    }
}
