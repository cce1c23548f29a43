//! EM-based extraction of individually identified objects from the updated
//! particle population.
//!
//! Candidates are the previous cycle's identities plus one fresh candidate
//! per current detection. The M step scores candidates against detection
//! pools (states matched to each detection under per-particle best
//! associations); the E step relabels each particle's states by solving a
//! best-assignment problem, keeping labels injective within a particle.
//! Identities whose final pool is empty are dropped; surviving fresh
//! candidates receive new IDs only at extraction, so candidate churn never
//! burns ID numbers.

use thiserror::Error;

use crate::assignment::{AssignError, CostMatrix, solve_best};
use crate::filter::{StateOrigin, WeightedParticle};
use crate::models::{Detection, ModelParams, ObjectState};
use crate::observation::{ObsError, best_association};

/// An identified object: expected state, existence confidence (the fraction
/// of particles supporting it) and a persistent ID never reused in a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Identity {
    pub state: ObjectState,
    pub confidence: f64,
    pub id: u64,
}

/// Final labeling of one cycle: for each particle, each state's index into
/// the identity list. Injective within a particle.
#[derive(Debug, Clone, Default)]
pub struct Labeling {
    pub per_particle: Vec<Vec<usize>>,
}

/// Identification state carried across cycles.
#[derive(Debug, Clone, Default)]
pub struct IdentifyState {
    pub identities: Vec<Identity>,
    pub labeling: Labeling,
    next_id: u64,
}

impl IdentifyState {
    pub fn new() -> Self {
        IdentifyState::default()
    }
}

#[derive(Debug, Error)]
pub enum IdentifyError {
    #[error(transparent)]
    Observation(#[from] ObsError),
    #[error("E-step assignment failed: {0}")]
    Assignment(#[from] AssignError),
}

/// Per-detection pools ℋ(o): the (particle, state) pairs matched to each
/// detection under that particle's best data association. Cached
/// observation results are reused; missing caches are recomputed.
pub fn build_detection_pools(
    particles: &[WeightedParticle],
    dets: &[Detection],
    params: &ModelParams,
) -> Result<Vec<Vec<(usize, usize)>>, ObsError> {
    let mut pools: Vec<Vec<(usize, usize)>> = vec![Vec::new(); dets.len()];
    for (pi, p) in particles.iter().enumerate() {
        let assoc = match &p.cached_obs {
            Some(obs) => obs.best.clone(),
            None => best_association(dets, &p.state, params)?,
        };
        for &(state_idx, det_idx) in &assoc.matches {
            pools[det_idx].push((pi, state_idx));
        }
    }
    Ok(pools)
}

/// Fresh-candidate affinity for its own detection when its pool is still
/// empty; below any genuine pool fraction (>= 1/N) but above the uniform
/// rescue mass.
fn seed_score(n_particles: usize) -> f64 {
    0.75 / n_particles as f64
}

struct EmProblem {
    /// matched[particle][state] = detection the state is matched to, if any.
    matched: Vec<Vec<Option<usize>>>,
    n_candidates: usize,
    n_existing: usize,
    /// Candidate index anchored to each detection (fresh candidates).
    fresh_of_det: Vec<usize>,
    n_particles: usize,
}

struct MStep {
    /// overlap[candidate][detection] = |H(o) ∩ H(h)| / N.
    overlap: Vec<Vec<f64>>,
    /// unmatched[candidate] = |H(h) − ∪ H(o)| / N.
    unmatched: Vec<f64>,
}

impl EmProblem {
    fn m_step(&self, labels: &[Vec<Option<usize>>]) -> MStep {
        let n = self.n_particles as f64;
        let n_dets = self.fresh_of_det.len();
        let mut overlap = vec![vec![0.0; n_dets]; self.n_candidates];
        let mut unmatched = vec![0.0; self.n_candidates];
        for (pi, particle_labels) in labels.iter().enumerate() {
            for (si, label) in particle_labels.iter().enumerate() {
                let Some(c) = *label else { continue };
                match self.matched[pi][si] {
                    Some(d) => overlap[c][d] += 1.0 / n,
                    None => unmatched[c] += 1.0 / n,
                }
            }
        }
        MStep { overlap, unmatched }
    }

    /// Score of labeling state (pi, si) with candidate c.
    fn score(&self, m: &MStep, pi: usize, si: usize, c: usize) -> f64 {
        match self.matched[pi][si] {
            Some(d) => {
                let base = m.overlap[c][d];
                if self.fresh_of_det.get(d) == Some(&c) {
                    base.max(seed_score(self.n_particles))
                } else {
                    base
                }
            }
            None => m.unmatched[c],
        }
    }
}

/// Run the identification EM over the updated particles and return the new
/// identity list plus the state to carry into the next cycle.
pub fn em_identify(
    particles: &[WeightedParticle],
    dets: &[Detection],
    prev: &IdentifyState,
    params: &ModelParams,
) -> Result<IdentifyState, IdentifyError> {
    let n_particles = particles.len();
    let n_existing = prev.identities.len();

    // Carry labels through resampling and motion: a resampled copy inherits
    // its source particle's labels; states born this cycle start unlabeled.
    let mut labels: Vec<Vec<Option<usize>>> = particles
        .iter()
        .map(|p| {
            p.origins
                .iter()
                .map(|o| match o {
                    StateOrigin::Carried(old) => prev
                        .labeling
                        .per_particle
                        .get(p.source)
                        .and_then(|l| l.get(*old))
                        .copied(),
                    StateOrigin::Born => None,
                })
                .collect()
        })
        .collect();

    let pools = build_detection_pools(particles, dets, params)?;
    let mut matched: Vec<Vec<Option<usize>>> = particles
        .iter()
        .map(|p| vec![None; p.state.len()])
        .collect();
    for (d, pool) in pools.iter().enumerate() {
        for &(pi, si) in pool {
            matched[pi][si] = Some(d);
        }
    }

    // Candidate list: surviving identities, then one fresh candidate per
    // detection, then floating spares in case a particle has more states
    // than candidates.
    let largest = particles.iter().map(|p| p.state.len()).max().unwrap_or(0);
    let n_candidates = (n_existing + dets.len()).max(largest);
    let fresh_of_det: Vec<usize> = (0..dets.len()).map(|d| n_existing + d).collect();
    let problem = EmProblem {
        matched,
        n_candidates,
        n_existing,
        fresh_of_det,
        n_particles,
    };

    let mut m = problem.m_step(&labels);
    for _ in 0..params.max_em_steps {
        let new_labels = e_step(&problem, &m, particles, &labels)?;
        let converged = new_labels == labels;
        labels = new_labels;
        if converged {
            break;
        }
        m = problem.m_step(&labels);
    }

    Ok(extract(&problem, &labels, particles, dets, prev))
}

fn e_step(
    problem: &EmProblem,
    m: &MStep,
    particles: &[WeightedParticle],
    labels: &[Vec<Option<usize>>],
) -> Result<Vec<Vec<Option<usize>>>, IdentifyError> {
    let nc = problem.n_candidates;
    let epsilon = 1.0 / (problem.n_particles as f64 * (nc as f64 + 1.0));
    let mut out = Vec::with_capacity(particles.len());
    for (pi, p) in particles.iter().enumerate() {
        let k = p.state.len();
        if k == 0 {
            out.push(Vec::new());
            continue;
        }
        let scores: Vec<Vec<f64>> = (0..k)
            .map(|si| {
                let row: Vec<f64> = (0..nc).map(|c| problem.score(m, pi, si, c)).collect();
                if row.iter().all(|&s| s == 0.0) {
                    // A state in no detection pool and no identity pool:
                    // uniform small mass lets the solver place it anywhere.
                    vec![epsilon; nc]
                } else {
                    row
                }
            })
            .collect();
        // Square problem: real states in the first k rows, dummy rows below.
        let build = |floor: f64| {
            CostMatrix::from_fn(nc, |r, c| {
                if r < k {
                    let s = scores[r][c].max(floor);
                    if s > 0.0 { -s.ln() } else { f64::INFINITY }
                } else {
                    0.0
                }
            })
        };
        let solution = match solve_best(&build(0.0)?) {
            Ok(a) => a,
            Err(AssignError::Infeasible) => solve_best(&build(epsilon * 1e-6)?)?,
            Err(e) => return Err(e.into()),
        };
        let new_labels: Vec<Option<usize>> =
            (0..k).map(|si| Some(solution.mapping[si])).collect();

        // The E step maximizes the labeling objective for fixed candidate
        // distributions; assert it never regresses.
        debug_assert!({
            let objective = |ls: &[Option<usize>]| -> f64 {
                ls.iter()
                    .enumerate()
                    .map(|(si, l)| match l {
                        Some(c) => scores[si][*c].max(f64::MIN_POSITIVE).ln(),
                        None => f64::MIN_POSITIVE.ln(),
                    })
                    .sum()
            };
            objective(&new_labels) >= objective(&labels[pi]) - 1e-9
        });
        out.push(new_labels);
    }
    Ok(out)
}

fn extract(
    problem: &EmProblem,
    labels: &[Vec<Option<usize>>],
    particles: &[WeightedParticle],
    dets: &[Detection],
    prev: &IdentifyState,
) -> IdentifyState {
    let n_particles = particles.len();
    let mut pool_count = vec![0usize; problem.n_candidates];
    let mut pool_sum = vec![[0.0f64; 4]; problem.n_candidates];
    for (pi, particle_labels) in labels.iter().enumerate() {
        for (si, label) in particle_labels.iter().enumerate() {
            let Some(c) = *label else { continue };
            let s = particles[pi].state.states()[si];
            pool_count[c] += 1;
            pool_sum[c][0] += s.x;
            pool_sum[c][1] += s.y;
            pool_sum[c][2] += s.vx;
            pool_sum[c][3] += s.vy;
        }
    }

    let mut next_id = prev.next_id.max(
        prev.identities
            .iter()
            .map(|h| h.id + 1)
            .max()
            .unwrap_or(0),
    );
    let mut identity_of_candidate = vec![None; problem.n_candidates];
    let mut identities = Vec::new();
    let _ = dets;
    for c in 0..problem.n_candidates {
        if pool_count[c] == 0 {
            continue;
        }
        let id = if c < problem.n_existing {
            prev.identities[c].id
        } else {
            let id = next_id;
            next_id += 1;
            id
        };
        let k = pool_count[c] as f64;
        identity_of_candidate[c] = Some(identities.len());
        identities.push(Identity {
            state: ObjectState::new(
                pool_sum[c][0] / k,
                pool_sum[c][1] / k,
                pool_sum[c][2] / k,
                pool_sum[c][3] / k,
            ),
            confidence: pool_count[c] as f64 / n_particles as f64,
            id,
        });
    }

    let per_particle: Vec<Vec<usize>> = labels
        .iter()
        .map(|ls| {
            ls.iter()
                .map(|l| {
                    identity_of_candidate[l.expect("every state is labeled after the final E step")]
                        .expect("labeled candidates have nonempty pools")
                })
                .collect()
        })
        .collect();

    IdentifyState {
        identities,
        labeling: Labeling { per_particle },
        next_id,
    }
}

/// Identities meeting the reporting confidence, sorted by ID.
pub fn report(identities: &[Identity], min_confidence: f64) -> Vec<Identity> {
    let mut out: Vec<Identity> = identities
        .iter()
        .filter(|h| h.confidence >= min_confidence)
        .cloned()
        .collect();
    out.sort_by_key(|h| h.id);
    out
}
