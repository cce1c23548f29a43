// Scratch diagnostic: why do births keep firing? (not part of the crate)
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use settrack::filter::{initial_population, update};
use settrack::models::ModelParams;
use settrack::sim::{InitialPopulation, SimOptions, generate_detections, generate_truth};

fn main() {
    let p = ModelParams::pets2009();
    let mut sim_p = p.clone();
    sim_p.birth_rate = 0.0;
    sim_p.death_rate = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let options = SimOptions {
        initial: InitialPopulation::Count(4),
        confine_to_arena: true,
        birth_speed_sigma: 0.5,
    };
    let scenario = generate_truth(&sim_p, 40, &options, 100, &mut rng);
    let dets: Vec<Vec<settrack::models::Detection>> = scenario
        .frames
        .iter()
        .map(|f| generate_detections(f, &sim_p, &mut rng))
        .collect();

    let mut frng = ChaCha8Rng::seed_from_u64(1);
    let mut pop = initial_population(128);
    for (t, _) in scenario.frames.iter().enumerate() {
        let r = update(&pop, &dets[t], &p, &mut frng).unwrap();
        pop = r.particles;
        if t >= 25 && t <= 32 {
            let q = &pop[0];
            let obs = q.cached_obs.as_ref().unwrap();
            // Distance of each hypothesized-false detection from the
            // nearest state in the particle.
            let fdists: Vec<f64> = obs
                .best
                .false_detections
                .iter()
                .map(|&d| {
                    let det = &dets[t][d];
                    q.state
                        .states()
                        .iter()
                        .map(|s| ((s.x - det.x).powi(2) + (s.y - det.y).powi(2)).sqrt())
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            println!(
                "t={t} |O|={} |X|={} F*={:?} dist(F*, nearest state)={:?} missed={} terms={}",
                dets[t].len(),
                q.state.len(),
                obs.best.false_detections,
                fdists.iter().map(|d| (d * 10.0).round() / 10.0).collect::<Vec<_>>(),
                obs.best.missed_objects.len(),
                obs.terms
            );
        }
    }
}
