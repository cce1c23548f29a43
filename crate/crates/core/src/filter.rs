//! Set-valued particle filter: motion proposal, data-association-driven
//! refinement proposal, population-level density estimation for motion and
//! proposal weights, weight update and systematic resampling.
//!
//! Each particle is a whole joint-state hypothesis (a set of object
//! states). Weight updates follow w ← w·m·o/p where o is the pruned joint
//! observation likelihood and m, p are densities of the accepted proposal
//! under estimators fitted to the motion-only and refined populations. All
//! per-particle weight arithmetic happens in log space.

use rand::Rng;
use rand::RngExt;
use rand_distr::{Distribution, Normal};

use crate::models::{Detection, ModelParams, ObjectState, ParticleSet, step_object};
use crate::numeric::{LogSumExp, ln_gamma};
use crate::observation::{ObsError, ObsResult, joint_likelihood};

/// Where a state in a proposed particle came from, relative to the source
/// particle of the previous cycle. Identity labels ride along these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateOrigin {
    /// Survived from the previous cycle; holds the state's old index.
    Carried(usize),
    /// Created this cycle (motion birth or refinement birth).
    Born,
}

/// One weighted hypothesis over the joint state, with bookkeeping that lets
/// later stages reuse the observation evaluation and follow state lineage
/// through resampling.
#[derive(Debug, Clone)]
pub struct WeightedParticle {
    pub state: ParticleSet,
    pub weight: f64,
    /// The accepted proposal's observation evaluation for the current cycle.
    pub cached_obs: Option<ObsResult>,
    /// Index of the previous-cycle particle this one descends from.
    pub source: usize,
    /// Per-state provenance, aligned with `state.states()`.
    pub origins: Vec<StateOrigin>,
}

impl WeightedParticle {
    pub fn initial(state: ParticleSet, weight: f64) -> Self {
        let origins = (0..state.len()).map(StateOrigin::Carried).collect();
        WeightedParticle {
            state,
            weight,
            cached_obs: None,
            source: 0,
            origins,
        }
    }
}

/// Fresh population of `n` empty particles with uniform weights.
pub fn initial_population(n: usize) -> Vec<WeightedParticle> {
    (0..n)
        .map(|i| {
            let mut p = WeightedParticle::initial(ParticleSet::empty(), 1.0 / n as f64);
            p.source = i;
            p
        })
        .collect()
}

/// Advance a particle by the motion model alone: per-object survival with
/// probability e^{-μτ}, surviving objects stepped by the random-acceleration
/// model, Poisson(λτ) births uniform over the arena with zero velocity.
pub fn propose_motion<R: Rng>(x: &ParticleSet, params: &ModelParams, rng: &mut R) -> ParticleSet {
    propose_motion_traced(x, params, rng).0
}

pub(crate) fn propose_motion_traced<R: Rng>(
    x: &ParticleSet,
    params: &ModelParams,
    rng: &mut R,
) -> (ParticleSet, Vec<StateOrigin>) {
    let survive_p = (-params.death_rate * params.dt).exp();
    let mut states = Vec::with_capacity(x.len());
    let mut origins = Vec::with_capacity(x.len());
    for (idx, s) in x.states().iter().enumerate() {
        if rng.random::<f64>() < survive_p {
            states.push(step_object(s, params, rng));
            origins.push(StateOrigin::Carried(idx));
        }
    }
    let lambda_tau = params.birth_rate * params.dt;
    if lambda_tau > 0.0 {
        let births = sample_poisson(lambda_tau, rng);
        for _ in 0..births {
            let (bx, by) = params.arena.sample_uniform(rng);
            states.push(born_state(bx, by, params, rng));
            origins.push(StateOrigin::Born);
        }
    }
    (ParticleSet::from_states(states), origins)
}

/// A newborn object hypothesis: observed position, sampled velocity. The
/// velocity draw gives the population immediate hypotheses over motion, so
/// resampling can lock onto moving objects within a few cycles.
fn born_state<R: Rng>(x: f64, y: f64, params: &ModelParams, rng: &mut R) -> ObjectState {
    let vel = Normal::new(0.0, params.birth_speed_sigma).unwrap();
    ObjectState::new(x, y, vel.sample(rng), vel.sample(rng))
}

/// Knuth product-of-uniforms Poisson sampler; exact and dependency-free for
/// the small rates used here.
fn sample_poisson<R: Rng>(lambda: f64, rng: &mut R) -> usize {
    let threshold = (-lambda).exp();
    let mut k = 0usize;
    let mut prod = rng.random::<f64>();
    while prod > threshold {
        k += 1;
        prod *= rng.random::<f64>();
    }
    k
}

/// A refined proposal together with the evaluations needed downstream.
#[derive(Debug, Clone)]
pub struct RefinedProposal {
    pub state: ParticleSet,
    pub origins: Vec<StateOrigin>,
    /// Observation evaluation of the accepted particle.
    pub obs: ObsResult,
    /// The motion-only proposal (the refinement baseline).
    pub motion_state: ParticleSet,
    /// ln Pr(O | motion-only proposal), for acceptance-test checks.
    pub motion_log_likelihood: f64,
}

/// Refinement proposal: motion-propose, find the best data-association,
/// birth an object from each hypothesized-false detection with probability
/// equal to its confidence, then keep whichever of the plain and augmented
/// particles explains the observation better.
pub fn propose_refined<R: Rng>(
    x_prev: &ParticleSet,
    dets: &[Detection],
    params: &ModelParams,
    rng: &mut R,
) -> Result<(ParticleSet, ObsResult), ObsError> {
    propose_refined_traced(x_prev, dets, params, rng).map(|r| (r.state, r.obs))
}

pub fn propose_refined_traced<R: Rng>(
    x_prev: &ParticleSet,
    dets: &[Detection],
    params: &ModelParams,
    rng: &mut R,
) -> Result<RefinedProposal, ObsError> {
    let (motion, motion_origins) = propose_motion_traced(x_prev, params, rng);
    let motion_obs = joint_likelihood(dets, &motion, params)?;

    // At most one birth per cycle, tried in confidence order: populations
    // that birth several objects at once concentrate onto a few lucky
    // ancestors before selection can vet the hypotheses, and the surviving
    // duplicates are near-free to carry once a set is large (the miss model
    // normalizes per object). Staged acquisition keeps sets lean.
    let mut candidates: Vec<usize> = motion_obs.best.false_detections.clone();
    candidates.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .total_cmp(&dets[a].confidence)
            .then(a.cmp(&b))
    });
    let mut births: Vec<ObjectState> = Vec::new();
    for &d in &candidates {
        let o = &dets[d];
        if rng.random::<f64>() < o.confidence {
            let (bx, by) = params.obs_cov.sample(o.position(), rng);
            births.push(born_state(bx, by, params, rng));
            break;
        }
    }
    if births.is_empty() {
        let motion_log_likelihood = motion_obs.log_likelihood;
        return Ok(RefinedProposal {
            state: motion.clone(),
            origins: motion_origins,
            obs: motion_obs,
            motion_state: motion,
            motion_log_likelihood,
        });
    }

    let mut refined_states = motion.states().to_vec();
    let mut refined_origins = motion_origins.clone();
    for b in births {
        refined_states.push(b);
        refined_origins.push(StateOrigin::Born);
    }
    let refined = ParticleSet::from_states(refined_states);
    let refined_obs = joint_likelihood(dets, &refined, params)?;

    if refined_obs.log_likelihood > motion_obs.log_likelihood {
        Ok(RefinedProposal {
            state: refined,
            origins: refined_origins,
            obs: refined_obs,
            motion_log_likelihood: motion_obs.log_likelihood,
            motion_state: motion,
        })
    } else {
        let motion_log_likelihood = motion_obs.log_likelihood;
        Ok(RefinedProposal {
            state: motion.clone(),
            origins: motion_origins,
            obs: motion_obs,
            motion_state: motion,
            motion_log_likelihood,
        })
    }
}

/// Population-level density estimator over joint states: negative-binomial
/// posterior predictive for the object count and a unit-bandwidth Gaussian
/// KDE over object positions.
#[derive(Debug, Clone)]
pub struct PosteriorDensityEstimator {
    /// Negative-binomial number of failures r = α₀ + Σ|X|.
    pub nb_failures: f64,
    /// Negative-binomial success rate p = 1/(1+β), β = β₀ + N.
    pub nb_success: f64,
    /// All object positions in the population.
    pub kde_points: Vec<(f64, f64)>,
}

/// Per-object log density used when the population holds no objects at
/// all: the density of a state under a kernel centered on itself, φ(0)².
/// Keeps newborn hypotheses alive when the whole population is empty.
const EMPTY_POOL_LOG_DENSITY: f64 = -1.837_877_066_409_345_5; // ln(1/2π)

impl PosteriorDensityEstimator {
    /// ln NB(n; r, p).
    pub fn count_log_pmf(&self, n: usize) -> f64 {
        let r = self.nb_failures;
        let p = self.nb_success;
        let nf = n as f64;
        ln_gamma(nf + r) - ln_gamma(nf + 1.0) - ln_gamma(r)
            + nf * p.ln()
            + r * (1.0 - p).ln()
    }

    /// ln of the KDE evaluated at a position.
    pub fn position_log_density(&self, x: f64, y: f64) -> f64 {
        if self.kde_points.is_empty() {
            return EMPTY_POOL_LOG_DENSITY;
        }
        let mut acc = LogSumExp::new();
        for &(px, py) in &self.kde_points {
            let dx = x - px;
            let dy = y - py;
            acc.add(-(2.0 * std::f64::consts::PI).ln() - 0.5 * (dx * dx + dy * dy));
        }
        acc.value() - (self.kde_points.len() as f64).ln()
    }
}

/// Fit the count + position estimator to a population of joint states.
pub fn fit_density(population: &[ParticleSet], params: &ModelParams) -> PosteriorDensityEstimator {
    let total: usize = population.iter().map(|x| x.len()).sum();
    let r = params.alpha0 + total as f64;
    let beta = params.beta0 + population.len() as f64;
    let kde_points: Vec<(f64, f64)> = population
        .iter()
        .flat_map(|x| x.states().iter().map(|s| s.position()))
        .collect();
    PosteriorDensityEstimator {
        nb_failures: r,
        nb_success: 1.0 / (1.0 + beta),
        kde_points,
    }
}

/// ln Pr(X | population) = ln n! + ln NB(n) + Σ ln KDE(s); velocities are
/// ignored.
pub fn set_log_density(x: &ParticleSet, est: &PosteriorDensityEstimator) -> f64 {
    let n = x.len();
    let mut log = ln_gamma(n as f64 + 1.0) + est.count_log_pmf(n);
    for s in x.states() {
        log += est.position_log_density(s.x, s.y);
    }
    log
}

/// Pr(X | population); see [`set_log_density`].
pub fn set_density(x: &ParticleSet, est: &PosteriorDensityEstimator) -> f64 {
    set_log_density(x, est).exp()
}

/// Result of one filter update.
#[derive(Debug)]
pub struct UpdateResult {
    pub particles: Vec<WeightedParticle>,
    /// True when every weight underflowed to zero and the population was
    /// reset to uniform.
    pub degenerate: bool,
    /// Effective sample size 1/Σw² of the pre-resampling weights.
    pub ess: f64,
}

/// One full filter cycle: refined proposals per particle, density-estimated
/// motion/proposal weights, observation weighting, normalization and
/// systematic resampling back to the input population size.
pub fn update<R: Rng>(
    prev: &[WeightedParticle],
    dets: &[Detection],
    params: &ModelParams,
    rng: &mut R,
) -> Result<UpdateResult, ObsError> {
    assert!(!prev.is_empty(), "particle population must be nonempty");
    let mut proposals = Vec::with_capacity(prev.len());
    for p in prev {
        proposals.push(propose_refined_traced(&p.state, dets, params, rng)?);
    }

    let motion_population: Vec<ParticleSet> =
        proposals.iter().map(|r| r.motion_state.clone()).collect();
    let accepted_population: Vec<ParticleSet> =
        proposals.iter().map(|r| r.state.clone()).collect();
    let est_motion = fit_density(&motion_population, params);
    let est_refined = fit_density(&accepted_population, params);

    // Motion and proposal weights are densities of the same accepted state
    // under the two population estimators. Both position kernels are
    // evaluated over the same support, so the per-state kernel factors
    // cancel in the m/p ratio and the surviving factor is the cardinality
    // posterior ratio. Keeping the cancellation explicit avoids the
    // motion-side kernel assigning vanishing mass to states the refinement
    // just created.
    let mut log_weights = Vec::with_capacity(prev.len());
    for (p, r) in prev.iter().zip(&proposals) {
        let n = r.state.len();
        let m = est_motion.count_log_pmf(n);
        let o = r.obs.log_likelihood;
        let q = est_refined.count_log_pmf(n);
        log_weights.push(p.weight.ln() + m + o - q);
    }

    let mut norm = LogSumExp::new();
    for &w in &log_weights {
        norm.add(w);
    }
    let total = norm.value();
    let degenerate = total == f64::NEG_INFINITY;
    let n = prev.len();
    let weights: Vec<f64> = if degenerate {
        vec![1.0 / n as f64; n]
    } else {
        log_weights.iter().map(|&w| (w - total).exp()).collect()
    };

    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let weighted: Vec<WeightedParticle> = proposals
        .into_iter()
        .enumerate()
        .map(|(i, r)| WeightedParticle {
            state: r.state,
            weight: weights[i],
            cached_obs: Some(r.obs),
            source: i,
            origins: r.origins,
        })
        .collect();
    let mut particles = resample(&weighted, rng);
    roughen_duplicates(&mut particles, params, rng);
    Ok(UpdateResult {
        particles,
        degenerate,
        ess,
    })
}

/// Roughening of resampled duplicates: the second and later copies of a
/// particle receive small position and velocity perturbations on every
/// object. Duplicated copies otherwise stay bitwise identical forever, and
/// per-object state diversity is what selection needs to keep centered on
/// moving objects. The perturbations stay well below the observation noise,
/// so the cached best associations remain valid.
fn roughen_duplicates<R: Rng>(
    particles: &mut [WeightedParticle],
    params: &ModelParams,
    rng: &mut R,
) {
    let sigma_v = VELOCITY_ROUGHENING * params.dash_sigma * params.dt / 2.0_f64.sqrt();
    let sigma_x = POSITION_ROUGHENING * params.obs_cov.xx.max(params.obs_cov.yy).sqrt();
    if sigma_v == 0.0 && sigma_x == 0.0 {
        return;
    }
    let kick_v = Normal::new(0.0, sigma_v).unwrap();
    let kick_x = Normal::new(0.0, sigma_x).unwrap();
    let mut seen_sources = std::collections::HashSet::new();
    for p in particles.iter_mut() {
        if seen_sources.insert(p.source) {
            continue;
        }
        let states: Vec<ObjectState> = p
            .state
            .states()
            .iter()
            .map(|s| {
                ObjectState::new(
                    s.x + kick_x.sample(rng),
                    s.y + kick_x.sample(rng),
                    s.vx + kick_v.sample(rng),
                    s.vy + kick_v.sample(rng),
                )
            })
            .collect();
        p.state = ParticleSet::from_states(states);
    }
}

/// Duplicate-roughening bandwidths: velocity kicks in units of the motion
/// model's one-step diffusion, position kicks as a fraction of the
/// observation noise.
const VELOCITY_ROUGHENING: f64 = 3.0;
const POSITION_ROUGHENING: f64 = 0.3;

/// Systematic resampling to the input population size; all output weights
/// become 1/N and the expected copy count of particle i is N·wᵢ.
pub fn resample<R: Rng>(particles: &[WeightedParticle], rng: &mut R) -> Vec<WeightedParticle> {
    resample_to(particles, particles.len(), rng)
}

/// Systematic resampling to `n` output particles.
pub fn resample_to<R: Rng>(
    particles: &[WeightedParticle],
    n: usize,
    rng: &mut R,
) -> Vec<WeightedParticle> {
    debug_assert!(
        (particles.iter().map(|p| p.weight).sum::<f64>() - 1.0).abs() < 1e-9,
        "weights must be normalized before resampling"
    );
    let offset = rng.random::<f64>();
    let mut out = Vec::with_capacity(n);
    let mut idx = 0usize;
    let mut cum = particles[0].weight;
    for k in 0..n {
        let u = (offset + k as f64) / n as f64;
        while u >= cum && idx + 1 < particles.len() {
            idx += 1;
            cum += particles[idx].weight;
        }
        let mut copy = particles[idx].clone();
        copy.weight = 1.0 / n as f64;
        out.push(copy);
    }
    out
}
