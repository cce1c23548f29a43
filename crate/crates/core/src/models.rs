//! Core domain types, model parameters, single-object motion sampling and
//! single-object/clutter detection likelihoods.
//!
//! Conventions: positions are meters in world frame, velocities m/s, rates
//! are per second. Detection confidences for true objects follow Beta(2,1)
//! (density `2c`) and for clutter Beta(1,2) (density `2(1-c)`); detection
//! positions are Gaussian around the object, clutter positions are uniform
//! over the monitored arena.

use rand::Rng;
use rand::RngExt;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Confidence assigned to detections whose source provides none.
pub const DEFAULT_CONFIDENCE: f64 = 0.5;

/// One object's kinematic state `(x, y, vx, vy)` in world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl ObjectState {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        ObjectState { x, y, vx, vy }
    }

    pub fn at_rest(x: f64, y: f64) -> Self {
        ObjectState::new(x, y, 0.0, 0.0)
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }
}

/// One detector output `(x, y, c)`: world position plus confidence in [0,1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Detection {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Detection { x, y, confidence }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// A finite set of object states: one hypothesis over the joint state.
/// Element count encodes the hypothesized object count; duplicates are
/// excluded by set semantics (continuous states tie with probability zero).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParticleSet {
    states: Vec<ObjectState>,
}

impl ParticleSet {
    pub fn empty() -> Self {
        ParticleSet { states: Vec::new() }
    }

    pub fn from_states(states: Vec<ObjectState>) -> Self {
        let set = ParticleSet { states };
        debug_assert!(set.no_duplicates());
        set
    }

    pub fn states(&self) -> &[ObjectState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, s: ObjectState) {
        self.states.push(s);
    }

    fn no_duplicates(&self) -> bool {
        for (i, a) in self.states.iter().enumerate() {
            for b in &self.states[i + 1..] {
                if a == b {
                    return false;
                }
            }
        }
        true
    }
}

/// Axis-aligned rectangle in world frame; the monitored area and the support
/// of the clutter distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let x = self.x0 + rng.random::<f64>() * self.width();
        let y = self.y0 + rng.random::<f64>() * self.height();
        (x, y)
    }
}

/// Symmetric 2x2 covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Mat2 {
    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Mat2 { xx, xy, yy }
    }

    pub fn isotropic(v: f64) -> Self {
        Mat2::new(v, 0.0, v)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn is_spd(&self) -> bool {
        self.xx > 0.0 && self.det() > 0.0
    }

    /// Lower Cholesky factor (l11, l21, l22).
    pub fn cholesky(&self) -> (f64, f64, f64) {
        let l11 = self.xx.sqrt();
        let l21 = self.xy / l11;
        let l22 = (self.yy - l21 * l21).sqrt();
        (l11, l21, l22)
    }

    /// dᵀ Σ⁻¹ d for d = (dx, dy).
    pub fn quad_form(&self, dx: f64, dy: f64) -> f64 {
        (self.yy * dx * dx - 2.0 * self.xy * dx * dy + self.xx * dy * dy) / self.det()
    }

    /// Draw from N(mean, Σ).
    pub fn sample<R: Rng>(&self, mean: (f64, f64), rng: &mut R) -> (f64, f64) {
        let (l11, l21, l22) = self.cholesky();
        let std_normal = Normal::new(0.0, 1.0).unwrap();
        let z1 = std_normal.sample(rng);
        let z2 = std_normal.sample(rng);
        (mean.0 + l11 * z1, mean.1 + l21 * z1 + l22 * z2)
    }

    /// ln N(d | 0, Σ) for the bivariate Gaussian density.
    pub fn log_density(&self, dx: f64, dy: f64) -> f64 {
        -(2.0 * std::f64::consts::PI).ln() - 0.5 * self.det().ln() - 0.5 * self.quad_form(dx, dy)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("parameter `{0}` must be strictly positive")]
    NotPositive(&'static str),
    #[error("parameter `{0}` must be nonnegative")]
    Negative(&'static str),
    #[error("observation covariance must be symmetric positive-definite")]
    CovarianceNotSpd,
    #[error("assignment threshold must lie in (0, 1]")]
    BadAssignThreshold,
    #[error("report confidence must lie in [0, 1]")]
    BadReportConfidence,
    #[error("bounding-box area bounds must satisfy min < max")]
    BadBboxBounds,
    #[error("arena must have positive area")]
    BadArena,
}

/// Full model/tracker parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Object birth rate λ (1/s). Zero in the tracker configuration.
    pub birth_rate: f64,
    /// Per-object death rate μ (1/s).
    pub death_rate: f64,
    /// Dash power standard deviation σ_p (m/s²).
    pub dash_sigma: f64,
    /// False detection rate ν (1/s).
    pub false_rate: f64,
    /// Per-object missing detection rate ξ (1/s).
    pub miss_rate: f64,
    /// Update interval τ (s).
    pub dt: f64,
    /// Observation covariance Σ (m²).
    pub obs_cov: Mat2,
    /// Assignment pruning ratio threshold T' in (0, 1].
    pub assign_threshold: f64,
    /// False-missing pruning threshold T'' (a probability, >= 0).
    pub fm_threshold: f64,
    /// Gamma prior parameters for the object-count rate.
    pub alpha0: f64,
    pub beta0: f64,
    /// Number of particles N.
    pub n_particles: usize,
    /// Maximum number of EM iterations H.
    pub max_em_steps: usize,
    /// Minimum confidence of reported identities R.
    pub report_conf: f64,
    /// Bounding-box area gate [A', A''] (m²) for ingestion.
    pub bbox_area_min: f64,
    pub bbox_area_max: f64,
    /// Monitored area.
    pub arena: Rect,
    /// Per-axis standard deviation of sampled velocities for objects born
    /// in proposals (m/s). Diverse initial velocities let resampling lock
    /// onto a moving object within a few cycles.
    pub birth_speed_sigma: f64,
}

impl ModelParams {
    /// The parameter set used for the PETS2009-style evaluation; also the
    /// defaults of the command-line tools.
    pub fn pets2009() -> Self {
        ModelParams {
            birth_rate: 0.0,
            death_rate: 0.02,
            dash_sigma: 1.0,
            false_rate: 6.0,
            miss_rate: 2.0,
            dt: 0.14,
            obs_cov: Mat2::isotropic(0.5),
            assign_threshold: 0.1,
            fm_threshold: 0.001,
            alpha0: 2.0,
            beta0: 1.0,
            n_particles: 128,
            max_em_steps: 10,
            report_conf: 0.4,
            bbox_area_min: 0.5,
            bbox_area_max: 2.5,
            arena: Rect::new(0.0, 0.0, 19.0, 15.8),
            birth_speed_sigma: 0.3,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, v) in [
            ("birth_rate", self.birth_rate),
            ("death_rate", self.death_rate),
            ("dash_sigma", self.dash_sigma),
            ("false_rate", self.false_rate),
            ("miss_rate", self.miss_rate),
            ("fm_threshold", self.fm_threshold),
            ("birth_speed_sigma", self.birth_speed_sigma),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ParamError::Negative(name));
            }
        }
        for (name, v) in [
            ("dt", self.dt),
            ("alpha0", self.alpha0),
            ("beta0", self.beta0),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ParamError::NotPositive(name));
            }
        }
        if self.n_particles == 0 {
            return Err(ParamError::NotPositive("n_particles"));
        }
        if self.max_em_steps == 0 {
            return Err(ParamError::NotPositive("max_em_steps"));
        }
        if !self.obs_cov.is_spd() {
            return Err(ParamError::CovarianceNotSpd);
        }
        if !(self.assign_threshold > 0.0 && self.assign_threshold <= 1.0) {
            return Err(ParamError::BadAssignThreshold);
        }
        if !(0.0..=1.0).contains(&self.report_conf) {
            return Err(ParamError::BadReportConfidence);
        }
        if !(self.bbox_area_min < self.bbox_area_max) {
            return Err(ParamError::BadBboxBounds);
        }
        if !(self.arena.area() > 0.0) {
            return Err(ParamError::BadArena);
        }
        Ok(())
    }
}

/// Advance one object by the random-acceleration motion model over one
/// interval: acceleration `(p cos θ, p sin θ)` with `p ~ N(0, σ_p²)` and
/// `θ ~ U(0, 2π)`.
pub fn step_object<R: Rng>(s: &ObjectState, params: &ModelParams, rng: &mut R) -> ObjectState {
    let tau = params.dt;
    let p = Normal::new(0.0, params.dash_sigma).unwrap().sample(rng);
    let theta = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    let ax = p * theta.cos();
    let ay = p * theta.sin();
    ObjectState {
        x: s.x + s.vx * tau + 0.5 * ax * tau * tau,
        y: s.y + s.vy * tau + 0.5 * ay * tau * tau,
        vx: s.vx + ax * tau,
        vy: s.vy + ay * tau,
    }
}

/// ln Pr(o | s): Beta(c | 2,1) confidence times Gaussian position density.
/// Velocity components of `s` are ignored.
pub fn detect_log_likelihood(o: &Detection, s: &ObjectState, params: &ModelParams) -> f64 {
    let conf = if o.confidence > 0.0 {
        (2.0 * o.confidence).ln()
    } else {
        return f64::NEG_INFINITY;
    };
    conf + params.obs_cov.log_density(o.x - s.x, o.y - s.y)
}

/// Pr(o | s), the single-object detection density.
pub fn detect_likelihood(o: &Detection, s: &ObjectState, params: &ModelParams) -> f64 {
    detect_log_likelihood(o, s, params).exp()
}

/// ln Pr(o | ∅): Beta(c | 1,2) confidence times the uniform background
/// density over the arena; `-inf` outside the arena.
pub fn clutter_log_likelihood(o: &Detection, params: &ModelParams) -> f64 {
    if !params.arena.contains(o.x, o.y) || o.confidence >= 1.0 {
        return f64::NEG_INFINITY;
    }
    (2.0 * (1.0 - o.confidence)).ln() - params.arena.area().ln()
}

/// Pr(o | ∅), the clutter density.
pub fn clutter_likelihood(o: &Detection, params: &ModelParams) -> f64 {
    clutter_log_likelihood(o, params).exp()
}

/// Pr(object | c) = c: the posterior probability that a detection with
/// confidence c is not a false detection, under Beta(2,1)/Beta(1,2)
/// confidence models and equal priors.
pub fn not_false_probability(confidence: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&confidence));
    confidence
}
