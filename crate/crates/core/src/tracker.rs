//! Frame-by-frame tracking pipeline: filter update followed by identity
//! extraction, with a single seeded RNG stream for reproducible runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::filter::{WeightedParticle, initial_population, update};
use crate::identify::{Identity, IdentifyError, IdentifyState, em_identify, report};
use crate::models::{Detection, ModelParams, ParamError};

#[derive(Debug, thiserror::Error)]
pub enum TrackerError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error(transparent)]
    Observation(#[from] crate::observation::ObsError),
}

/// The full online tracker: a particle population over joint states plus
/// the identity bookkeeping carried between cycles.
pub struct Tracker {
    params: ModelParams,
    particles: Vec<WeightedParticle>,
    identify: IdentifyState,
    rng: ChaCha8Rng,
    frame: usize,
    degeneracy_events: u64,
}

impl Tracker {
    pub fn new(params: ModelParams, seed: u64) -> Result<Self, TrackerError> {
        params.validate()?;
        let particles = initial_population(params.n_particles);
        Ok(Tracker {
            params,
            particles,
            identify: IdentifyState::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            frame: 0,
            degeneracy_events: 0,
        })
    }

    /// Process one frame of detections and return the reported identities
    /// (confidence at least the configured reporting threshold).
    pub fn step(&mut self, dets: &[Detection]) -> Result<Vec<Identity>, TrackerError> {
        let outcome = update(&self.particles, dets, &self.params, &mut self.rng)?;
        if outcome.degenerate {
            self.degeneracy_events += 1;
        }
        self.particles = outcome.particles;
        self.identify = em_identify(&self.particles, dets, &self.identify, &self.params)?;
        self.frame += 1;
        Ok(report(&self.identify.identities, self.params.report_conf))
    }

    /// All current identities, including those below the reporting
    /// threshold.
    pub fn identities(&self) -> &[Identity] {
        &self.identify.identities
    }

    pub fn particles(&self) -> &[WeightedParticle] {
        &self.particles
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    /// Number of cycles in which every particle weight underflowed and the
    /// population was reset to uniform.
    pub fn degeneracy_events(&self) -> u64 {
        self.degeneracy_events
    }
}
