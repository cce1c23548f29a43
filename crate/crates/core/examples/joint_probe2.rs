// Scratch diagnostic: per-object support around the collapse (not part of the crate).
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
        ..SimOptions::default()
    };
    let scenario = generate_truth(&sim_p, 30, &options, 100, &mut rng);
    let dets: Vec<Vec<settrack::models::Detection>> = scenario
        .frames
        .iter()
        .map(|f| generate_detections(f, &sim_p, &mut rng))
        .collect();

    let mut frng = ChaCha8Rng::seed_from_u64(1);
    let mut pop = initial_population(128);
    for (t, frame) in scenario.frames.iter().enumerate() {
        let r = update(&pop, &dets[t], &p, &mut frng).unwrap();
        pop = r.particles;
        let supports: Vec<f64> = frame
            .objects
            .iter()
            .map(|obj| {
                pop.iter()
                    .filter(|q| {
                        q.state.states().iter().any(|s| {
                            ((s.x - obj.state.x).powi(2) + (s.y - obj.state.y).powi(2)).sqrt()
                                < 1.0
                        })
                    })
                    .count() as f64
                    / pop.len() as f64
            })
            .collect();
        println!(
            "t={t} dets={} truth={:?}",
            dets[t].len(),
            frame
                .objects
                .iter()
                .map(|o| (o.id, (o.state.x * 10.0).round() / 10.0, (o.state.y * 10.0).round() / 10.0))
                .collect::<Vec<_>>()
        );
        println!(
            "   support={supports:?} particle0={:?}",
            pop[0]
                .state
                .states()
                .iter()
                .map(|s| ((s.x * 10.0).round() / 10.0, (s.y * 10.0).round() / 10.0))
                .collect::<Vec<_>>()
        );
    }
}
