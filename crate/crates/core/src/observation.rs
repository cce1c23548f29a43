//! The joint observation function Pr(O | S) over detection and object sets.
//!
//! The full function sums over every false/missing partition (an F-M pair)
//! and, inside each pair, over every bijection between surviving objects and
//! detections. Two prunings make it tractable: ranked assignments are cut
//! off at a probability ratio `T'` of the best one, and F-M pairs are
//! enumerated in nonincreasing `f_F·f_M` order through a priority queue and
//! cut off below an absolute threshold `T''`. An exact brute-force
//! evaluator is kept alongside as the reference.
//!
//! All accumulation happens in log space; detection and object inputs are
//! canonicalized to a storage-order-independent ordering internally, and
//! indices in results refer to the caller's original ordering.

use std::collections::BinaryHeap;
use std::collections::HashSet;

use thiserror::Error;

use crate::assignment::{AssignError, CostMatrix, DEFAULT_MURTY_CAP, murty_k_best_inclusive};
use crate::models::{Detection, ModelParams, ObjectState, ParticleSet, detect_log_likelihood};
use crate::numeric::{LogSumExp, ln_binomial, ln_factorial};

/// Guard for the exact evaluator: beyond this combined size the full sum is
/// a factorial blow-up.
pub const EXACT_SIZE_LIMIT: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum ObsError {
    #[error("matched likelihood requires equally many objects and detections")]
    LengthMismatch,
    #[error("missed count {0} exceeds object count {1}")]
    MissExceedsObjects(usize, usize),
    #[error("exact evaluation is limited to |O| + |S| <= {limit}, got {got}")]
    SizeGuard { limit: usize, got: usize },
    #[error(transparent)]
    Assignment(#[from] AssignError),
}

/// One data association ⟨F, M, ψ⟩ with its joint contribution
/// Pr(O, φ | S). Indices refer to the caller's detection/object order.
#[derive(Debug, Clone, PartialEq)]
pub struct DataAssociation {
    /// Detection indices hypothesized false.
    pub false_detections: Vec<usize>,
    /// Object indices hypothesized missed.
    pub missed_objects: Vec<usize>,
    /// Matched (object index, detection index) pairs.
    pub matches: Vec<(usize, usize)>,
    /// ln Pr(O, φ | S).
    pub log_joint_term: f64,
}

impl DataAssociation {
    pub fn joint_term(&self) -> f64 {
        self.log_joint_term.exp()
    }
}

/// Result of one observation-function evaluation.
#[derive(Debug, Clone)]
pub struct ObsResult {
    /// ln Pr(O | S) (possibly pruned, hence a lower bound on the exact sum).
    pub log_likelihood: f64,
    /// The most likely association among all terms visited.
    pub best: DataAssociation,
    /// Number of matched-sum terms evaluated (assignments, with the empty
    /// product counting as one term).
    pub terms: u64,
}

impl ObsResult {
    pub fn likelihood(&self) -> f64 {
        self.log_likelihood.exp()
    }
}

/// ln f_F(F) = |F| ln(ντ) - ντ + Σ ln Pr(o | ∅).
fn log_f_false(dets: &[Detection], params: &ModelParams) -> f64 {
    let nu_tau = params.false_rate * params.dt;
    let mut acc = -nu_tau;
    for o in dets {
        acc += per_detection_false_logweight(o, params, nu_tau);
    }
    acc
}

fn per_detection_false_logweight(o: &Detection, params: &ModelParams, nu_tau: f64) -> f64 {
    if nu_tau == 0.0 {
        f64::NEG_INFINITY
    } else {
        nu_tau.ln() + crate::models::clutter_log_likelihood(o, params)
    }
}

/// Per-detection false weight with the position density nondimensionalized
/// over the arena (ντ·Beta(c|1,2) for detections inside it). Queue
/// priorities and the pruning threshold use these dimensionless weights;
/// each false detection would otherwise contribute a density unit to the
/// priority, making a fixed threshold depend on the coordinate scale.
fn per_detection_false_priority(o: &Detection, params: &ModelParams, nu_tau: f64) -> f64 {
    per_detection_false_logweight(o, params, nu_tau) + params.arena.area().ln()
}

/// f_F(F): Poisson mass of |F| false detections times their clutter
/// densities. The empty set gives exp(-ντ).
pub fn f_false(dets: &[Detection], params: &ModelParams) -> f64 {
    log_f_false(dets, params).exp()
}

/// ln f_M for a miss-set of size `m_size` out of `s_size` objects.
fn log_f_miss(m_size: usize, s_size: usize, params: &ModelParams) -> f64 {
    debug_assert!(m_size <= s_size);
    let a = s_size as f64 * params.miss_rate * params.dt;
    let count_term = if m_size == 0 {
        0.0
    } else if a == 0.0 {
        return f64::NEG_INFINITY;
    } else {
        m_size as f64 * a.ln()
    };
    count_term - a - ln_factorial(m_size) - ln_binomial(s_size, m_size)
}

/// f_M(M) for |M| = `m_size` objects missed out of `s_size`: the Poisson
/// mass of the miss count divided by the number of equally likely miss sets.
pub fn f_miss(m_size: usize, s_size: usize, params: &ModelParams) -> Result<f64, ObsError> {
    if m_size > s_size {
        return Err(ObsError::MissExceedsObjects(m_size, s_size));
    }
    Ok(log_f_miss(m_size, s_size, params).exp())
}

// ---------------------------------------------------------------------------
// Canonical ordering
// ---------------------------------------------------------------------------

/// Inputs reordered to a storage-independent canonical order: detections by
/// nonincreasing clutter weight, objects by coordinates. Keeps the inverse
/// maps so results can be reported in the caller's indices.
struct Canon {
    dets: Vec<Detection>,
    objs: Vec<ObjectState>,
    det_orig: Vec<usize>,
    obj_orig: Vec<usize>,
    /// Per canonical detection: ln(ντ · Pr(o|∅)), a world-frame density.
    false_logw: Vec<f64>,
    /// Dimensionless per-detection false weights for queue priorities.
    false_prio: Vec<f64>,
    /// detect_log[i * n_dets + j] for canonical object i, detection j.
    detect_log: Vec<f64>,
}

impl Canon {
    fn new(dets: &[Detection], objs: &[ObjectState], params: &ModelParams) -> Self {
        let nu_tau = params.false_rate * params.dt;
        let mut det_idx: Vec<usize> = (0..dets.len()).collect();
        let weight: Vec<f64> = dets
            .iter()
            .map(|o| per_detection_false_logweight(o, params, nu_tau))
            .collect();
        det_idx.sort_by(|&a, &b| {
            weight[b]
                .total_cmp(&weight[a])
                .then(dets[a].x.total_cmp(&dets[b].x))
                .then(dets[a].y.total_cmp(&dets[b].y))
                .then(dets[a].confidence.total_cmp(&dets[b].confidence))
        });
        let mut obj_idx: Vec<usize> = (0..objs.len()).collect();
        obj_idx.sort_by(|&a, &b| {
            objs[a]
                .x
                .total_cmp(&objs[b].x)
                .then(objs[a].y.total_cmp(&objs[b].y))
                .then(objs[a].vx.total_cmp(&objs[b].vx))
                .then(objs[a].vy.total_cmp(&objs[b].vy))
        });
        let cdets: Vec<Detection> = det_idx.iter().map(|&i| dets[i]).collect();
        let cobjs: Vec<ObjectState> = obj_idx.iter().map(|&i| objs[i]).collect();
        let false_logw: Vec<f64> = det_idx.iter().map(|&i| weight[i]).collect();
        let false_prio: Vec<f64> = cdets
            .iter()
            .map(|o| per_detection_false_priority(o, params, nu_tau))
            .collect();
        let mut detect_log = vec![0.0; cobjs.len() * cdets.len()];
        for (i, s) in cobjs.iter().enumerate() {
            for (j, o) in cdets.iter().enumerate() {
                detect_log[i * cdets.len() + j] = detect_log_likelihood(o, s, params);
            }
        }
        Canon {
            dets: cdets,
            objs: cobjs,
            det_orig: det_idx,
            obj_orig: obj_idx,
            false_logw,
            false_prio,
            detect_log,
        }
    }
}

// ---------------------------------------------------------------------------
// Lazy enumeration of false-detection subsets by nonincreasing f_F
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct ToggleNode {
    penalty: f64,
    toggles: Vec<u32>,
}

impl PartialEq for ToggleNode {
    fn eq(&self, other: &Self) -> bool {
        self.penalty == other.penalty && self.toggles == other.toggles
    }
}
impl Eq for ToggleNode {}
impl PartialOrd for ToggleNode {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ToggleNode {
    // Reversed: smallest penalty pops first, ties by lexicographic toggle set.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .penalty
            .total_cmp(&self.penalty)
            .then_with(|| other.toggles.cmp(&self.toggles))
    }
}

/// Generates every subset of the detections in nonincreasing ln f_F order,
/// lazily, memoizing emitted entries for indexed access.
///
/// f_F factorizes into per-element weights, so the maximizing subset takes
/// every element with weight above one and any other subset is that one with
/// some elements toggled; subsets ordered by total toggle penalty ascending
/// are exactly subsets ordered by f_F descending.
struct FalseSubsets {
    base_log: f64,
    include: Vec<bool>,
    element_of: Vec<usize>,
    penalties: Vec<f64>,
    heap: BinaryHeap<ToggleNode>,
    emitted: Vec<(f64, Vec<usize>)>,
}

impl FalseSubsets {
    fn new(canon: &Canon, params: &ModelParams) -> Self {
        let n = canon.dets.len();
        let nu_tau = params.false_rate * params.dt;
        let include: Vec<bool> = canon.false_prio.iter().map(|&w| w > 0.0).collect();
        let base_log = -nu_tau
            + canon
                .false_prio
                .iter()
                .filter(|&&w| w > 0.0)
                .sum::<f64>();
        let mut order: Vec<usize> = (0..n).collect();
        let penalty_of = |e: usize| canon.false_prio[e].abs();
        order.sort_by(|&a, &b| penalty_of(a).total_cmp(&penalty_of(b)).then(a.cmp(&b)));
        let penalties: Vec<f64> = order.iter().map(|&e| penalty_of(e)).collect();

        let mut heap = BinaryHeap::new();
        if n > 0 {
            heap.push(ToggleNode {
                penalty: penalties[0],
                toggles: vec![0],
            });
        }
        let mut generator = FalseSubsets {
            base_log,
            include,
            element_of: order,
            penalties,
            heap,
            emitted: Vec::new(),
        };
        // The maximizing subset itself: empty toggle set, penalty zero.
        let first = generator.subset_for(&[]);
        generator.emitted.push((generator.base_log, first));
        generator
    }

    fn subset_for(&self, toggles: &[u32]) -> Vec<usize> {
        let mut members: Vec<usize> = Vec::new();
        for (e, &inc) in self.include.iter().enumerate() {
            if inc {
                members.push(e);
            }
        }
        for &t in toggles {
            let e = self.element_of[t as usize];
            if self.include[e] {
                members.retain(|&x| x != e);
            } else {
                members.push(e);
            }
        }
        members.sort_unstable();
        members
    }

    /// The i-th subset in f_F-descending order, or `None` past the end.
    fn get(&mut self, i: usize) -> Option<&(f64, Vec<usize>)> {
        while self.emitted.len() <= i {
            let node = self.heap.pop()?;
            let subset = self.subset_for(&node.toggles);
            self.emitted.push((self.base_log - node.penalty, subset));
            let &last = node.toggles.last().expect("heap nodes are nonempty");
            let next = last as usize + 1;
            if next < self.penalties.len() {
                let mut extended = node.toggles.clone();
                extended.push(next as u32);
                self.heap.push(ToggleNode {
                    penalty: node.penalty + self.penalties[next],
                    toggles: extended,
                });
                let mut replaced = node.toggles;
                *replaced.last_mut().unwrap() = next as u32;
                self.heap.push(ToggleNode {
                    penalty: node.penalty - self.penalties[last as usize]
                        + self.penalties[next],
                    toggles: replaced,
                });
            }
        }
        self.emitted.get(i)
    }
}

// ---------------------------------------------------------------------------
// Algorithm core: prioritized F-M enumeration with ranked matched sums
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct QueueEntry {
    log_q: f64,
    i: u32,
    j: u32,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.log_q == other.log_q && self.i == other.i && self.j == other.j
    }
}
impl Eq for QueueEntry {}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    // Max-heap on priority, deterministic tie-break on indices.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.log_q
            .total_cmp(&other.log_q)
            .then_with(|| (other.i, other.j).cmp(&(self.i, self.j)))
    }
}

struct BestTerm {
    log_term: f64,
    false_dets: Vec<usize>,
    missed: Vec<usize>,
    matches: Vec<(usize, usize)>,
}

/// Pr(O | S) with explicit pruning thresholds and ranked-assignment cap.
///
/// `assign_threshold` is the ratio cutoff inside matched sums and
/// `fm_threshold` the absolute cutoff on `f_F·f_M`; zero disables the
/// latter and a near-zero ratio disables the former, which recovers the
/// exact sum.
pub fn joint_likelihood_with(
    dets: &[Detection],
    objs: &ParticleSet,
    params: &ModelParams,
    assign_threshold: f64,
    fm_threshold: f64,
    murty_cap: usize,
) -> Result<ObsResult, ObsError> {
    let canon = Canon::new(dets, objs.states(), params);
    let n_dets = canon.dets.len();
    let n_objs = canon.objs.len();

    // Miss hypotheses grouped by size: f_M depends only on |M|, so one queue
    // entry stands for all subsets of that size.
    let mut miss_sizes: Vec<usize> = (0..=n_objs).collect();
    let miss_log: Vec<f64> = miss_sizes
        .iter()
        .map(|&m| log_f_miss(m, n_objs, params))
        .collect();
    miss_sizes.sort_by(|&a, &b| miss_log[b].total_cmp(&miss_log[a]).then(a.cmp(&b)));
    let miss_log_sorted: Vec<f64> = miss_sizes.iter().map(|&m| miss_log[m]).collect();

    let mut subsets = FalseSubsets::new(&canon, params);

    let mut queue: BinaryHeap<QueueEntry> = BinaryHeap::new();
    let mut seen: HashSet<(u32, u32)> = HashSet::new();
    let first_ff = subsets.get(0).expect("the empty subset always exists").0;
    let first_log_q = first_ff + miss_log_sorted[0];
    queue.push(QueueEntry {
        log_q: first_log_q,
        i: 0,
        j: 0,
    });
    seen.insert((0, 0));

    // The cutoff is relative to the maximal pair: f_F·f_M carries a density
    // unit per false detection, so only the ratio to the best pair is
    // scale-invariant.
    let log_t_fm = if fm_threshold > 0.0 {
        first_log_q + fm_threshold.ln()
    } else {
        f64::NEG_INFINITY
    };

    let ln_area = params.arena.area().ln();
    let mut acc = LogSumExp::new();
    let mut terms: u64 = 0;
    let mut best: Option<BestTerm> = None;
    let mut last_popped = f64::INFINITY;
    let mut feasible_seen = false;

    // Repeat-until loop: each popped pair is processed, then the threshold
    // is tested, so the pair that triggers termination still contributes.
    // The test additionally waits for the first feasible pair, which keeps
    // the likelihood positive whenever one exists.
    while let Some(entry) = queue.pop() {
        // The queue delivers F-M pairs in nonincreasing priority order.
        debug_assert!(entry.log_q <= last_popped, "priority queue order violated");
        last_popped = entry.log_q;
        let (i, j) = (entry.i as usize, entry.j as usize);
        let miss_size = miss_sizes[j];
        let (_, false_set) = subsets.get(i).expect("popped entries were generated");
        let false_set = false_set.clone();

        if n_dets - false_set.len() == n_objs - miss_size {
            feasible_seen = true;
            // Accumulated terms are world-frame densities: undo the
            // per-false-detection nondimensionalization of the priority.
            let world_log_q = entry.log_q - false_set.len() as f64 * ln_area;
            let matched_len = n_dets - false_set.len();
            let cols: Vec<usize> = (0..n_dets).filter(|d| !false_set.contains(d)).collect();
            for_each_combination(n_objs, miss_size, |miss| {
                let rows: Vec<usize> = (0..n_objs).filter(|o| !miss.contains(o)).collect();
                accumulate_matched(
                    &canon,
                    world_log_q,
                    &false_set,
                    miss,
                    &rows,
                    &cols,
                    matched_len,
                    assign_threshold,
                    murty_cap,
                    &mut acc,
                    &mut terms,
                    &mut best,
                )
            })?;
        }

        let j_next = (entry.j + 1) as usize;
        if j_next < miss_sizes.len() && seen.insert((entry.i, entry.j + 1)) {
            queue.push(QueueEntry {
                log_q: subsets.get(i).unwrap().0 + miss_log_sorted[j_next],
                i: entry.i,
                j: entry.j + 1,
            });
        }
        let i_next = (entry.i + 1) as usize;
        if let Some(&(ff_next, _)) = subsets.get(i_next).as_deref()
            && seen.insert((entry.i + 1, entry.j))
        {
            queue.push(QueueEntry {
                log_q: ff_next + miss_log_sorted[j],
                i: entry.i + 1,
                j: entry.j,
            });
        }
        if entry.log_q < log_t_fm && feasible_seen {
            break;
        }
    }

    // Fall back to the always-feasible all-false/all-missed association if
    // pruning stopped before any feasible pair was accumulated.
    let best = best.unwrap_or_else(|| BestTerm {
        log_term: log_f_false(&canon.dets, params) + log_f_miss(n_objs, n_objs, params),
        false_dets: (0..n_dets).collect(),
        missed: (0..n_objs).collect(),
        matches: Vec::new(),
    });

    Ok(ObsResult {
        log_likelihood: acc.value(),
        best: remap_association(&canon, best),
        terms,
    })
}

#[allow(clippy::too_many_arguments)]
fn accumulate_matched(
    canon: &Canon,
    log_q: f64,
    false_set: &[usize],
    miss: &[usize],
    rows: &[usize],
    cols: &[usize],
    matched_len: usize,
    assign_threshold: f64,
    murty_cap: usize,
    acc: &mut LogSumExp,
    terms: &mut u64,
    best: &mut Option<BestTerm>,
) -> Result<(), ObsError> {
    let mut consider = |log_term: f64, matches: Vec<(usize, usize)>| {
        if best.as_ref().is_none_or(|b| log_term > b.log_term) {
            *best = Some(BestTerm {
                log_term,
                false_dets: false_set.to_vec(),
                missed: miss.to_vec(),
                matches,
            });
        }
    };
    if matched_len == 0 {
        acc.add(log_q);
        *terms += 1;
        consider(log_q, Vec::new());
        return Ok(());
    }
    let n_dets = canon.dets.len();
    let costs = CostMatrix::from_fn(matched_len, |r, c| {
        -canon.detect_log[rows[r] * n_dets + cols[c]]
    })?;
    match murty_k_best_inclusive(&costs, assign_threshold, murty_cap) {
        Ok((ranked, _)) => {
            for a in &ranked {
                acc.add(log_q - a.total_cost);
            }
            *terms += ranked.len() as u64;
            if let Some(first) = ranked.first() {
                let matches: Vec<(usize, usize)> = first
                    .mapping
                    .iter()
                    .enumerate()
                    .map(|(r, &c)| (rows[r], cols[c]))
                    .collect();
                consider(log_q - first.total_cost, matches);
            }
            Ok(())
        }
        Err(AssignError::Infeasible) => Ok(()),
        Err(e) => Err(e.into()),
    }
}

fn remap_association(canon: &Canon, best: BestTerm) -> DataAssociation {
    let mut false_detections: Vec<usize> =
        best.false_dets.iter().map(|&d| canon.det_orig[d]).collect();
    false_detections.sort_unstable();
    let mut missed_objects: Vec<usize> = best.missed.iter().map(|&o| canon.obj_orig[o]).collect();
    missed_objects.sort_unstable();
    let mut matches: Vec<(usize, usize)> = best
        .matches
        .iter()
        .map(|&(o, d)| (canon.obj_orig[o], canon.det_orig[d]))
        .collect();
    matches.sort_unstable();
    DataAssociation {
        false_detections,
        missed_objects,
        matches,
        log_joint_term: best.log_term,
    }
}

/// Visit every k-combination of 0..n in lexicographic order.
fn for_each_combination<E>(
    n: usize,
    k: usize,
    mut f: impl FnMut(&[usize]) -> Result<(), E>,
) -> Result<(), E> {
    if k > n {
        return Ok(());
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx)?;
        // Advance to the next combination.
        let mut pos = k;
        while pos > 0 {
            pos -= 1;
            if idx[pos] != pos + n - k {
                idx[pos] += 1;
                for t in pos + 1..k {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return Ok(());
            }
        }
        if k == 0 {
            return Ok(());
        }
    }
}

/// Pr(O | S) with the thresholds from `params` (Algorithm-style pruned
/// evaluation). The result carries the best association and term count for
/// reuse by the filter and the identifier.
pub fn joint_likelihood(
    dets: &[Detection],
    objs: &ParticleSet,
    params: &ModelParams,
) -> Result<ObsResult, ObsError> {
    joint_likelihood_with(
        dets,
        objs,
        params,
        params.assign_threshold,
        params.fm_threshold,
        DEFAULT_MURTY_CAP,
    )
}

/// The most likely data association ⟨F*, M*, ψ*⟩ under the pruned
/// enumeration of `params`.
pub fn best_association(
    dets: &[Detection],
    objs: &ParticleSet,
    params: &ModelParams,
) -> Result<DataAssociation, ObsError> {
    joint_likelihood(dets, objs, params).map(|r| r.best)
}

/// A matched-sum evaluation: the (log) sum over ranked assignments, the
/// best assignment, and how many assignments went into the sum.
#[derive(Debug, Clone)]
pub struct MatchedSum {
    pub log_value: f64,
    pub best_psi: Vec<(usize, usize)>,
    pub terms: u64,
}

/// Σ_ψ Π Pr(ψ(s) | s) over ranked assignments down to ratio `t_assign`,
/// together with the best assignment. Empty inputs give (1, []).
pub fn matched_likelihood(
    objs: &[ObjectState],
    dets: &[Detection],
    t_assign: f64,
    params: &ModelParams,
) -> Result<(f64, Vec<(usize, usize)>), ObsError> {
    let m = matched_log_likelihood(objs, dets, t_assign, DEFAULT_MURTY_CAP, params)?;
    Ok((m.log_value.exp(), m.best_psi))
}

/// Log-space version of [`matched_likelihood`].
pub fn matched_log_likelihood(
    objs: &[ObjectState],
    dets: &[Detection],
    t_assign: f64,
    murty_cap: usize,
    params: &ModelParams,
) -> Result<MatchedSum, ObsError> {
    if objs.len() != dets.len() {
        return Err(ObsError::LengthMismatch);
    }
    if objs.is_empty() {
        return Ok(MatchedSum {
            log_value: 0.0,
            best_psi: Vec::new(),
            terms: 1,
        });
    }
    let costs = CostMatrix::from_fn(objs.len(), |i, j| {
        -detect_log_likelihood(&dets[j], &objs[i], params)
    })?;
    let (ranked, _) = murty_k_best_inclusive(&costs, t_assign, murty_cap)?;
    let mut acc = LogSumExp::new();
    for a in &ranked {
        acc.add(-a.total_cost);
    }
    let best_psi: Vec<(usize, usize)> = ranked[0]
        .mapping
        .iter()
        .enumerate()
        .map(|(i, &j)| (i, j))
        .collect();
    Ok(MatchedSum {
        log_value: acc.value(),
        best_psi,
        terms: ranked.len() as u64,
    })
}

/// Exact matched sum over all |objs|! assignments, by direct enumeration.
/// The reference for assignment-pruning error measurements.
pub fn matched_log_likelihood_exact(
    objs: &[ObjectState],
    dets: &[Detection],
    params: &ModelParams,
) -> Result<(f64, u64), ObsError> {
    if objs.len() != dets.len() {
        return Err(ObsError::LengthMismatch);
    }
    let m = objs.len();
    let detect_log: Vec<f64> = objs
        .iter()
        .flat_map(|s| dets.iter().map(|o| detect_log_likelihood(o, s, params)))
        .collect();
    let mut acc = LogSumExp::new();
    let mut terms = 0u64;
    fn rec(
        detect_log: &[f64],
        m: usize,
        depth: usize,
        used: &mut [bool],
        partial: f64,
        acc: &mut LogSumExp,
        terms: &mut u64,
    ) {
        if depth == m {
            acc.add(partial);
            *terms += 1;
            return;
        }
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                rec(
                    detect_log,
                    m,
                    depth + 1,
                    used,
                    partial + detect_log[depth * m + j],
                    acc,
                    terms,
                );
                used[j] = false;
            }
        }
    }
    let mut used = vec![false; m];
    rec(&detect_log, m, 0, &mut used, 0.0, &mut acc, &mut terms);
    Ok((acc.value(), terms))
}

// ---------------------------------------------------------------------------
// Exact evaluation
// ---------------------------------------------------------------------------

/// Unpruned ln Pr(O | S) by full enumeration of every F-M pair and every
/// assignment, with the total term count Σ C(|O|,i) C(|S|,i) i!.
///
/// No size guard: callers are responsible for keeping this tractable.
pub fn joint_log_likelihood_brute(
    dets: &[Detection],
    objs: &ParticleSet,
    params: &ModelParams,
) -> (f64, u64) {
    let states = objs.states();
    let n_dets = dets.len();
    let n_objs = states.len();
    assert!(n_dets < 32 && n_objs < 32, "brute-force sizes are limited");

    let detect_log: Vec<f64> = states
        .iter()
        .flat_map(|s| dets.iter().map(|o| detect_log_likelihood(o, s, params)))
        .collect();

    let mut acc = LogSumExp::new();
    let mut terms: u64 = 0;
    for f_mask in 0u32..(1 << n_dets) {
        let f_size = f_mask.count_ones() as usize;
        let matched = n_dets - f_size;
        if matched > n_objs {
            continue;
        }
        let miss_size = n_objs - matched;
        let f_dets: Vec<Detection> = (0..n_dets)
            .filter(|d| f_mask & (1 << d) != 0)
            .map(|d| dets[d])
            .collect();
        let log_q = log_f_false(&f_dets, params) + log_f_miss(miss_size, n_objs, params);
        let cols: Vec<usize> = (0..n_dets).filter(|d| f_mask & (1 << d) == 0).collect();
        let all_objs: Vec<usize> = (0..n_objs).collect();
        for_each_combination::<()>(n_objs, miss_size, |miss| {
            let rows: Vec<usize> = all_objs
                .iter()
                .copied()
                .filter(|o| !miss.contains(o))
                .collect();
            // Sum over all bijections rows -> cols by recursion.
            fn perms(
                detect_log: &[f64],
                n_dets: usize,
                rows: &[usize],
                cols: &[usize],
                depth: usize,
                used: &mut [bool],
                partial: f64,
                log_q: f64,
                acc: &mut LogSumExp,
                terms: &mut u64,
            ) {
                if depth == rows.len() {
                    acc.add(log_q + partial);
                    *terms += 1;
                    return;
                }
                for (ci, &c) in cols.iter().enumerate() {
                    if !used[ci] {
                        used[ci] = true;
                        perms(
                            detect_log,
                            n_dets,
                            rows,
                            cols,
                            depth + 1,
                            used,
                            partial + detect_log[rows[depth] * n_dets + c],
                            log_q,
                            acc,
                            terms,
                        );
                        used[ci] = false;
                    }
                }
            }
            let mut used = vec![false; cols.len()];
            perms(
                &detect_log,
                n_dets,
                &rows,
                &cols,
                0,
                &mut used,
                0.0,
                log_q,
                &mut acc,
                &mut terms,
            );
            Ok(())
        })
        .unwrap();
    }
    (acc.value(), terms)
}

/// Exact Pr(O | S): the full sum over all C(|O|+|S|, |O|) F-M pairs and all
/// assignments. Guarded by [`EXACT_SIZE_LIMIT`].
pub fn joint_likelihood_exact(
    dets: &[Detection],
    objs: &ParticleSet,
    params: &ModelParams,
) -> Result<f64, ObsError> {
    joint_likelihood_exact_detailed(dets, objs, params).map(|(log, _)| log.exp())
}

/// As [`joint_likelihood_exact`], returning (log likelihood, term count).
pub fn joint_likelihood_exact_detailed(
    dets: &[Detection],
    objs: &ParticleSet,
    params: &ModelParams,
) -> Result<(f64, u64), ObsError> {
    let got = dets.len() + objs.len();
    if got > EXACT_SIZE_LIMIT {
        return Err(ObsError::SizeGuard {
            limit: EXACT_SIZE_LIMIT,
            got,
        });
    }
    Ok(joint_log_likelihood_brute(dets, objs, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Mat2, Rect};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> ModelParams {
        ModelParams::pets2009()
    }

    fn det(x: f64, y: f64, c: f64) -> Detection {
        Detection::new(x, y, c)
    }

    fn obj(x: f64, y: f64) -> ObjectState {
        ObjectState::at_rest(x, y)
    }

    /// Test-side oracle: Σ over all permutations of Π detection densities.
    fn permanent_sum(objs: &[ObjectState], dets: &[Detection], p: &ModelParams) -> f64 {
        fn rec(
            objs: &[ObjectState],
            dets: &[Detection],
            p: &ModelParams,
            row: usize,
            used: &mut [bool],
            prod: f64,
        ) -> f64 {
            if row == objs.len() {
                return prod;
            }
            let mut total = 0.0;
            for j in 0..dets.len() {
                if !used[j] {
                    used[j] = true;
                    total += rec(
                        objs,
                        dets,
                        p,
                        row + 1,
                        used,
                        prod * crate::models::detect_likelihood(&dets[j], &objs[row], p),
                    );
                    used[j] = false;
                }
            }
            total
        }
        let mut used = vec![false; dets.len()];
        rec(objs, dets, p, 0, &mut used, 1.0)
    }

    #[test]
    fn f_false_examples() {
        let p = params();
        // Empty set: e^{-ντ} with ντ = 0.84.
        let expect = (-0.84_f64).exp();
        assert!((f_false(&[], &p) - expect).abs() < 1e-12);

        // One detection: 0.84 e^{-0.84} q with q its clutter density.
        let o = det(3.0, 4.0, 0.25);
        let q = crate::models::clutter_likelihood(&o, &p);
        let expect = 0.84 * (-0.84_f64).exp() * q;
        assert!((f_false(&[o], &p) - expect).abs() < 1e-12);

        let mut p0 = p.clone();
        p0.false_rate = 0.0;
        assert_eq!(f_false(&[], &p0), 1.0);
    }

    #[test]
    fn f_miss_examples() {
        let p = params();
        // No miss out of one object: e^{-ξτ} with ξτ = 0.28.
        let expect = (-0.28_f64).exp();
        assert!((f_miss(0, 1, &p).unwrap() - expect).abs() < 1e-12);

        assert_eq!(f_miss(0, 0, &p).unwrap(), 1.0);

        // One miss out of two: (0.56 e^{-0.56} / 1!) · 1/C(2,1).
        let expect = 0.56 * (-0.56_f64).exp() / 2.0;
        assert!((f_miss(1, 2, &p).unwrap() - expect).abs() < 1e-12);

        assert_eq!(
            f_miss(3, 2, &p).unwrap_err(),
            ObsError::MissExceedsObjects(3, 2)
        );
    }

    #[test]
    fn matched_likelihood_examples() {
        let p = params();
        let (v, psi) = matched_likelihood(&[], &[], 0.1, &p).unwrap();
        assert_eq!(v, 1.0);
        assert!(psi.is_empty());

        let s = obj(5.0, 5.0);
        let o = det(5.5, 5.0, 0.8);
        let (v, psi) = matched_likelihood(&[s], &[o], 0.1, &p).unwrap();
        assert!((v - crate::models::detect_likelihood(&o, &s, &p)).abs() < 1e-12);
        assert_eq!(psi, vec![(0, 0)]);
    }

    #[test]
    fn matched_likelihood_matches_permanent_oracle() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let objs: Vec<ObjectState> = (0..3)
                .map(|_| {
                    obj(
                        rng.random::<f64>() * 19.0,
                        rng.random::<f64>() * 15.0,
                    )
                })
                .collect();
            let dets: Vec<Detection> = (0..3)
                .map(|_| {
                    det(
                        rng.random::<f64>() * 19.0,
                        rng.random::<f64>() * 15.0,
                        0.1 + 0.8 * rng.random::<f64>(),
                    )
                })
                .collect();
            let (v, _) = matched_likelihood(&objs, &dets, 1e-300, &p).unwrap();
            let oracle = permanent_sum(&objs, &dets, &p);
            assert!(
                (v - oracle).abs() <= 1e-9 * oracle.abs().max(1e-300),
                "{v} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn joint_likelihood_empty_cases() {
        let p = params();
        let empty = ParticleSet::empty();
        let r = joint_likelihood(&[], &empty, &p).unwrap();
        assert!((r.likelihood() - (-0.84_f64).exp()).abs() < 1e-12);
        assert_eq!(r.terms, 1);
        assert!(r.best.false_detections.is_empty());
        assert!(r.best.missed_objects.is_empty());
        assert!(r.best.matches.is_empty());

        // One detection, no objects: only F = {o} is feasible.
        let o = det(4.0, 4.0, 0.3);
        let r = joint_likelihood(&[o], &empty, &p).unwrap();
        let expect = 0.84 * (-0.84_f64).exp() * crate::models::clutter_likelihood(&o, &p);
        assert!((r.likelihood() - expect).abs() < 1e-12);
        assert_eq!(r.best.false_detections, vec![0]);
    }

    #[test]
    fn exact_term_count_small_case() {
        let p = params();
        let objs = ParticleSet::from_states(vec![obj(2.0, 2.0), obj(9.0, 9.0)]);
        let dets = [det(2.1, 2.0, 0.7), det(9.0, 8.9, 0.6)];
        let (_, terms) = joint_likelihood_exact_detailed(&dets, &objs, &p).unwrap();
        // Σ_i C(2,i) C(2,i) i! = 1 + 4 + 2.
        assert_eq!(terms, 7);
    }

    #[test]
    fn exact_guard_rejects_large_inputs() {
        let p = params();
        let objs =
            ParticleSet::from_states((0..7).map(|i| obj(i as f64, 1.0)).collect::<Vec<_>>());
        let dets: Vec<Detection> = (0..6).map(|i| det(i as f64, 1.2, 0.5)).collect();
        assert_eq!(
            joint_likelihood_exact(&dets, &objs, &p).unwrap_err(),
            ObsError::SizeGuard { limit: 12, got: 13 }
        );
    }

    #[test]
    fn pruning_disabled_matches_exact_on_random_instances() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for case in 0..200 {
            let n_objs = rng.random_range(0..=2usize);
            let n_dets = rng.random_range(0..=2usize);
            let objs = ParticleSet::from_states(
                (0..n_objs)
                    .map(|_| obj(rng.random::<f64>() * 19.0, rng.random::<f64>() * 15.8))
                    .collect(),
            );
            let dets: Vec<Detection> = (0..n_dets)
                .map(|_| {
                    det(
                        rng.random::<f64>() * 19.0,
                        rng.random::<f64>() * 15.8,
                        0.05 + 0.9 * rng.random::<f64>(),
                    )
                })
                .collect();
            let pruned =
                joint_likelihood_with(&dets, &objs, &p, 1e-300, 0.0, 1_000_000).unwrap();
            let (exact_log, exact_terms) =
                joint_likelihood_exact_detailed(&dets, &objs, &p).unwrap();
            assert!(
                (pruned.log_likelihood - exact_log).abs() < 1e-9,
                "case {case}: {} vs {}",
                pruned.log_likelihood,
                exact_log
            );
            assert_eq!(pruned.terms, exact_terms, "case {case}");
        }
    }

    #[test]
    fn pruned_is_a_lower_bound_and_positive_in_arena() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let objs = ParticleSet::from_states(
                (0..rng.random_range(0..=3usize))
                    .map(|_| obj(rng.random::<f64>() * 19.0, rng.random::<f64>() * 15.8))
                    .collect(),
            );
            let dets: Vec<Detection> = (0..rng.random_range(0..=3usize))
                .map(|_| {
                    det(
                        rng.random::<f64>() * 19.0,
                        rng.random::<f64>() * 15.8,
                        0.05 + 0.9 * rng.random::<f64>(),
                    )
                })
                .collect();
            let pruned = joint_likelihood(&dets, &objs, &p).unwrap();
            let exact = joint_likelihood_exact(&dets, &objs, &p).unwrap();
            assert!(pruned.likelihood() <= exact * (1.0 + 1e-12));
            assert!(pruned.likelihood() > 0.0);
            assert!(pruned.likelihood() >= pruned.best.joint_term() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn outputs_invariant_to_storage_order() {
        let p = params();
        let objs_a = vec![obj(3.0, 3.0), obj(12.0, 10.0), obj(7.0, 2.0)];
        let objs_b = vec![objs_a[2], objs_a[0], objs_a[1]];
        let dets_a = vec![
            det(3.2, 3.0, 0.9),
            det(12.1, 9.8, 0.7),
            det(5.0, 14.0, 0.2),
        ];
        let dets_b = vec![dets_a[1], dets_a[2], dets_a[0]];

        let ra = joint_likelihood(&dets_a, &ParticleSet::from_states(objs_a.clone()), &p).unwrap();
        let rb = joint_likelihood(&dets_b, &ParticleSet::from_states(objs_b.clone()), &p).unwrap();
        assert_eq!(ra.log_likelihood, rb.log_likelihood);
        assert_eq!(ra.terms, rb.terms);
        assert_eq!(ra.best.log_joint_term, rb.best.log_joint_term);

        // The best associations agree once indices are mapped back to the
        // same underlying objects/detections.
        let map_obj = |i: usize| objs_b[i];
        let matched_a: Vec<(ObjectState, Detection)> = ra
            .best
            .matches
            .iter()
            .map(|&(o, d)| (objs_a[o], dets_a[d]))
            .collect();
        let mut matched_b: Vec<(ObjectState, Detection)> = rb
            .best
            .matches
            .iter()
            .map(|&(o, d)| (map_obj(o), dets_b[d]))
            .collect();
        matched_b.sort_by(|a, b| a.0.x.total_cmp(&b.0.x));
        let mut matched_a = matched_a;
        matched_a.sort_by(|a, b| a.0.x.total_cmp(&b.0.x));
        assert_eq!(matched_a, matched_b);
    }

    #[test]
    fn best_association_prefers_the_dominant_match() {
        // One detection exactly atop one object with high confidence in a
        // large arena: the matched term dominates the clutter+miss term.
        let mut p = params();
        p.arena = Rect::new(0.0, 0.0, 100.0, 100.0);
        p.obs_cov = Mat2::isotropic(0.5);
        let s = obj(50.0, 50.0);
        let o = det(50.0, 50.0, 0.9);
        let objs = ParticleSet::from_states(vec![s]);

        // Both candidate terms, computed directly.
        let matched_term = (-0.84_f64).exp()
            * (-0.28_f64).exp()
            * crate::models::detect_likelihood(&o, &s, &p);
        let clutter_term = 0.84
            * (-0.84_f64).exp()
            * crate::models::clutter_likelihood(&o, &p)
            * f_miss(1, 1, &p).unwrap();
        assert!(matched_term > clutter_term);

        let best = best_association(&[o], &objs, &p).unwrap();
        assert_eq!(best.matches, vec![(0, 0)]);
        assert!(best.false_detections.is_empty());
        assert!(best.missed_objects.is_empty());
    }

    #[test]
    fn best_association_matches_exhaustive_argmax() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..40 {
            let n_objs = rng.random_range(0..=3usize);
            let n_dets = rng.random_range(0..=3usize);
            let objs: Vec<ObjectState> = (0..n_objs)
                .map(|_| obj(rng.random::<f64>() * 19.0, rng.random::<f64>() * 15.8))
                .collect();
            let dets: Vec<Detection> = (0..n_dets)
                .map(|_| {
                    det(
                        rng.random::<f64>() * 19.0,
                        rng.random::<f64>() * 15.8,
                        0.05 + 0.9 * rng.random::<f64>(),
                    )
                })
                .collect();
            let set = ParticleSet::from_states(objs.clone());
            let got =
                joint_likelihood_with(&dets, &set, &p, 1e-300, 0.0, 1_000_000).unwrap();

            // Exhaustive argmax over every (F, M, ψ).
            let mut best_log = f64::NEG_INFINITY;
            for f_mask in 0u32..(1 << n_dets) {
                let f_size = f_mask.count_ones() as usize;
                if n_dets - f_size > n_objs {
                    continue;
                }
                let miss_size = n_objs - (n_dets - f_size);
                let f_dets: Vec<Detection> = (0..n_dets)
                    .filter(|d| f_mask & (1 << d) != 0)
                    .map(|d| dets[d])
                    .collect();
                let log_q = log_f_false(&f_dets, &p) + log_f_miss(miss_size, n_objs, &p);
                let cols: Vec<usize> =
                    (0..n_dets).filter(|d| f_mask & (1 << d) == 0).collect();
                for_each_combination::<()>(n_objs, miss_size, |miss| {
                    let rows: Vec<usize> =
                        (0..n_objs).filter(|o| !miss.contains(o)).collect();
                    fn rec(
                        rows: &[usize],
                        cols: &[usize],
                        objs: &[ObjectState],
                        dets: &[Detection],
                        p: &ModelParams,
                        depth: usize,
                        used: &mut [bool],
                        partial: f64,
                        best: &mut f64,
                    ) {
                        if depth == rows.len() {
                            if partial > *best {
                                *best = partial;
                            }
                            return;
                        }
                        for (ci, &c) in cols.iter().enumerate() {
                            if !used[ci] {
                                used[ci] = true;
                                rec(
                                    rows,
                                    cols,
                                    objs,
                                    dets,
                                    p,
                                    depth + 1,
                                    used,
                                    partial
                                        + detect_log_likelihood(&dets[c], &objs[rows[depth]], p),
                                    best,
                                );
                                used[ci] = false;
                            }
                        }
                    }
                    let mut used = vec![false; cols.len()];
                    let mut local = f64::NEG_INFINITY;
                    if rows.is_empty() {
                        local = 0.0;
                    } else {
                        rec(
                            &rows, &cols, &objs, &dets, &p, 0, &mut used, 0.0, &mut local,
                        );
                    }
                    if log_q + local > best_log {
                        best_log = log_q + local;
                    }
                    Ok(())
                })
                .unwrap();
            }
            if best_log.is_finite() {
                assert!(
                    (got.best.log_joint_term - best_log).abs() < 1e-9,
                    "{} vs {}",
                    got.best.log_joint_term,
                    best_log
                );
            }
        }
    }

    #[test]
    fn false_subset_generator_is_sorted_and_complete() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for n in 0..=6usize {
            let dets: Vec<Detection> = (0..n)
                .map(|_| {
                    det(
                        rng.random::<f64>() * 19.0,
                        rng.random::<f64>() * 15.8,
                        rng.random::<f64>(),
                    )
                })
                .collect();
            let canon = Canon::new(&dets, &[], &p);
            let mut generator = FalseSubsets::new(&canon, &p);
            let mut seen: Vec<(f64, Vec<usize>)> = Vec::new();
            let mut i = 0;
            while let Some(entry) = generator.get(i) {
                seen.push(entry.clone());
                i += 1;
            }
            assert_eq!(seen.len(), 1 << n, "all subsets enumerated for n={n}");
            for w in seen.windows(2) {
                assert!(w[0].0 >= w[1].0, "f_F order violated: {w:?}");
            }
            // Values agree with direct evaluation.
            for (logf, subset) in &seen {
                let members: Vec<Detection> = subset.iter().map(|&d| canon.dets[d]).collect();
                let direct = log_f_false(&members, &p);
                assert!((logf - direct).abs() < 1e-9 || (logf.is_infinite() && direct.is_infinite()));
            }
            let mut sets: Vec<Vec<usize>> = seen.into_iter().map(|(_, s)| s).collect();
            sets.sort();
            sets.dedup();
            assert_eq!(sets.len(), 1 << n, "subsets are unique");
        }
    }
}
