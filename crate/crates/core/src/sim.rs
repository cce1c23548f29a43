//! Synthetic world generation: birth-death ground-truth trajectories and
//! Poisson clutter / per-object miss detection synthesis.
//!
//! True detections carry Beta(2,1)-distributed confidences and Gaussian
//! position noise; clutter is uniform over the arena with Beta(1,2)
//! confidences, matching the observation model.

use rand::Rng;
use rand::RngExt;
use rand_distr::{Distribution, Normal};

use crate::models::{Detection, ModelParams, ObjectState, step_object};

/// One live ground-truth object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthObject {
    pub id: u64,
    pub state: ObjectState,
}

/// Ground truth for one frame, with full kinematic states.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthFrame {
    pub t: usize,
    pub objects: Vec<TruthObject>,
}

/// A generated scenario: parameters, per-frame truth and the seed that
/// reproduces it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: ModelParams,
    pub frames: Vec<TruthFrame>,
    pub seed: u64,
}

/// How to populate frame zero.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialPopulation {
    /// Start from an empty world (objects only appear through births).
    Empty,
    /// Seed exactly this many objects, uniform over the arena.
    Count(usize),
    /// Draw Poisson(λ/μ) initial objects: the stationary count of the
    /// birth-death process.
    Stationary,
    /// Start from the given objects.
    Seeded(Vec<ObjectState>),
}

/// Knobs that belong to the simulator rather than the tracker model.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub initial: InitialPopulation,
    /// Standard deviation of newborn object velocities (m/s).
    pub birth_speed_sigma: f64,
    /// Reflect objects at the arena walls so the scenario stays inside the
    /// monitored area.
    pub confine_to_arena: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            initial: InitialPopulation::Empty,
            birth_speed_sigma: 0.5,
            confine_to_arena: false,
        }
    }
}

fn reflect(state: &mut ObjectState, arena: &crate::models::Rect) {
    let bounce = |p: &mut f64, v: &mut f64, lo: f64, hi: f64| {
        for _ in 0..64 {
            if *p < lo {
                *p = 2.0 * lo - *p;
                *v = -*v;
            } else if *p > hi {
                *p = 2.0 * hi - *p;
                *v = -*v;
            } else {
                break;
            }
        }
        *p = p.clamp(lo, hi);
    };
    bounce(&mut state.x, &mut state.vx, arena.x0, arena.x1);
    bounce(&mut state.y, &mut state.vy, arena.y0, arena.y1);
}

/// Generate ground truth: per frame each live object dies with probability
/// 1 - e^{-μτ}, survivors move by the random-acceleration model, and
/// Poisson(λτ) newborns appear uniformly over the arena.
pub fn generate_truth<R: Rng>(
    params: &ModelParams,
    n_frames: usize,
    options: &SimOptions,
    seed: u64,
    rng: &mut R,
) -> Scenario {
    let vel = Normal::new(0.0, options.birth_speed_sigma).unwrap();
    let mut next_id: u64 = 0;
    fn spawn<R: Rng>(
        params: &ModelParams,
        vel: &Normal<f64>,
        next_id: &mut u64,
        rng: &mut R,
        live: &mut Vec<TruthObject>,
    ) {
        let (x, y) = params.arena.sample_uniform(rng);
        let state = ObjectState::new(x, y, vel.sample(rng), vel.sample(rng));
        live.push(TruthObject {
            id: *next_id,
            state,
        });
        *next_id += 1;
    }

    let mut live: Vec<TruthObject> = Vec::new();
    match &options.initial {
        InitialPopulation::Empty => {}
        InitialPopulation::Count(k) => {
            for _ in 0..*k {
                spawn(params, &vel, &mut next_id, rng, &mut live);
            }
        }
        InitialPopulation::Stationary => {
            let mean = if params.death_rate > 0.0 {
                params.birth_rate / params.death_rate
            } else {
                0.0
            };
            let k = if mean > 0.0 {
                poisson_sample(mean, rng)
            } else {
                0
            };
            for _ in 0..k {
                spawn(params, &vel, &mut next_id, rng, &mut live);
            }
        }
        InitialPopulation::Seeded(states) => {
            for &state in states {
                live.push(TruthObject {
                    id: next_id,
                    state,
                });
                next_id += 1;
            }
        }
    }

    let survive_p = (-params.death_rate * params.dt).exp();
    let lambda_tau = params.birth_rate * params.dt;
    let mut frames = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        if t > 0 {
            let mut survivors = Vec::with_capacity(live.len());
            for obj in &live {
                if rng.random::<f64>() < survive_p {
                    let mut state = step_object(&obj.state, params, rng);
                    if options.confine_to_arena {
                        reflect(&mut state, &params.arena);
                    }
                    survivors.push(TruthObject { id: obj.id, state });
                }
            }
            live = survivors;
            if lambda_tau > 0.0 {
                for _ in 0..poisson_sample(lambda_tau, rng) {
                    spawn(params, &vel, &mut next_id, rng, &mut live);
                }
            }
        }
        frames.push(TruthFrame {
            t,
            objects: live.clone(),
        });
    }
    Scenario {
        params: params.clone(),
        frames,
        seed,
    }
}

/// Synthesize one frame of detections: each object is missed independently
/// with probability min(1, ξτ) so the expected miss count is |S|ξτ;
/// detected objects emit a Gaussian-noised position with Beta(2,1)
/// confidence; Poisson(ντ) clutter detections land uniformly in the arena
/// with Beta(1,2) confidence.
pub fn generate_detections<R: Rng>(
    frame: &TruthFrame,
    params: &ModelParams,
    rng: &mut R,
) -> Vec<Detection> {
    let miss_p = (params.miss_rate * params.dt).min(1.0);
    let mut out = Vec::new();
    for obj in &frame.objects {
        if rng.random::<f64>() < miss_p {
            continue;
        }
        let (x, y) = params.obs_cov.sample(obj.state.position(), rng);
        out.push(Detection::new(x, y, beta21_sample(rng)));
    }
    let nu_tau = params.false_rate * params.dt;
    if nu_tau > 0.0 {
        for _ in 0..poisson_sample(nu_tau, rng) {
            let (x, y) = params.arena.sample_uniform(rng);
            out.push(Detection::new(x, y, beta12_sample(rng)));
        }
    }
    out
}

/// Beta(2,1) by inverse CDF: F(c) = c², so c = √u.
fn beta21_sample<R: Rng>(rng: &mut R) -> f64 {
    rng.random::<f64>().sqrt()
}

/// Beta(1,2) by inverse CDF: F(c) = 1-(1-c)², so c = 1-√(1-u).
fn beta12_sample<R: Rng>(rng: &mut R) -> f64 {
    1.0 - (1.0 - rng.random::<f64>()).sqrt()
}

fn poisson_sample<R: Rng>(lambda: f64, rng: &mut R) -> usize {
    // Knuth's product method; exact for the modest rates used here.
    let threshold = (-lambda).exp();
    let mut k = 0usize;
    let mut prod = rng.random::<f64>();
    while prod > threshold {
        k += 1;
        prod *= rng.random::<f64>();
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ModelParams {
        ModelParams::pets2009()
    }

    #[test]
    fn no_birth_from_empty_start_stays_empty() {
        let mut p = params();
        p.birth_rate = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = generate_truth(&p, 50, &SimOptions::default(), 1, &mut rng);
        assert!(s.frames.iter().all(|f| f.objects.is_empty()));
    }

    #[test]
    fn seeded_objects_without_dynamics_stay_constant() {
        let mut p = params();
        p.birth_rate = 0.0;
        p.death_rate = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let options = SimOptions {
            initial: InitialPopulation::Count(3),
            ..SimOptions::default()
        };
        let s = generate_truth(&p, 100, &options, 2, &mut rng);
        assert!(s.frames.iter().all(|f| f.objects.len() == 3));
        // Ids are contiguous from birth to death.
        for f in &s.frames {
            let ids: Vec<u64> = f.objects.iter().map(|o| o.id).collect();
            assert_eq!(ids, vec![0, 1, 2]);
        }
    }

    #[test]
    fn long_run_population_approaches_birth_death_ratio() {
        let mut p = params();
        p.birth_rate = 0.06;
        p.death_rate = 0.02;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let options = SimOptions {
            initial: InitialPopulation::Stationary,
            ..SimOptions::default()
        };
        let s = generate_truth(&p, 100_000, &options, 3, &mut rng);
        let mean = s.frames.iter().map(|f| f.objects.len()).sum::<usize>() as f64
            / s.frames.len() as f64;
        let expect = 0.06 / 0.02;
        assert!(
            (mean - expect).abs() < 0.1 * expect,
            "stationary mean {mean} vs {expect}"
        );
    }

    #[test]
    fn detections_are_exact_without_noise_processes() {
        let mut p = params();
        p.false_rate = 0.0;
        p.miss_rate = 0.0;
        let frame = TruthFrame {
            t: 0,
            objects: vec![
                TruthObject {
                    id: 0,
                    state: ObjectState::at_rest(2.0, 2.0),
                },
                TruthObject {
                    id: 1,
                    state: ObjectState::at_rest(9.0, 9.0),
                },
            ],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            assert_eq!(generate_detections(&frame, &p, &mut rng).len(), 2);
        }
    }

    #[test]
    fn extreme_miss_rate_suppresses_all_true_detections() {
        let mut p = params();
        p.miss_rate = 1e9;
        p.false_rate = 0.0;
        let frame = TruthFrame {
            t: 0,
            objects: vec![TruthObject {
                id: 0,
                state: ObjectState::at_rest(2.0, 2.0),
            }],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            assert!(generate_detections(&frame, &p, &mut rng).is_empty());
        }
    }

    #[test]
    fn clutter_count_matches_poisson_mean() {
        let p = params();
        let empty = TruthFrame {
            t: 0,
            objects: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 100_000;
        let total: usize = (0..n)
            .map(|_| generate_detections(&empty, &p, &mut rng).len())
            .sum();
        let mean = total as f64 / n as f64;
        let expect = 0.84;
        let tol = 3.0 * (expect / n as f64).sqrt();
        assert!((mean - expect).abs() < tol, "{mean} vs {expect} ± {tol}");
    }

    #[test]
    fn confidence_marginals_match_beta_means() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut true_sum = 0.0;
        let mut false_sum = 0.0;
        for _ in 0..n {
            true_sum += beta21_sample(&mut rng);
            false_sum += beta12_sample(&mut rng);
        }
        // Beta(2,1) has mean 2/3 and variance 1/18; Beta(1,2) mirrors it.
        let se = (1.0 / 18.0_f64).sqrt() / (n as f64).sqrt();
        assert!((true_sum / n as f64 - 2.0 / 3.0).abs() < 3.0 * se);
        assert!((false_sum / n as f64 - 1.0 / 3.0).abs() < 3.0 * se);
        let _ = p;
    }

    #[test]
    fn identical_seeds_reproduce_bit_exact_streams() {
        let mut p = params();
        p.birth_rate = 0.06;
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let options = SimOptions {
                initial: InitialPopulation::Stationary,
                ..SimOptions::default()
            };
            let s = generate_truth(&p, 200, &options, seed, &mut rng);
            let dets: Vec<Vec<Detection>> = s
                .frames
                .iter()
                .map(|f| generate_detections(f, &p, &mut rng))
                .collect();
            (s, dets)
        };
        let (s1, d1) = run(42);
        let (s2, d2) = run(42);
        assert_eq!(s1.frames, s2.frames);
        assert_eq!(d1, d2);
        let (s3, _) = run(43);
        assert_ne!(s1.frames, s3.frames);
    }
}
