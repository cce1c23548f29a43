// Scratch diagnostic for multi-object filter behavior (not part of the crate).
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
    sim_p.dash_sigma = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let birth_speed: f64 = std::env::args().nth(2).and_then(|a| a.parse().ok()).unwrap_or(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let options = SimOptions {
        initial: InitialPopulation::Count(4),
        confine_to_arena: true,
        birth_speed_sigma: birth_speed,
    };
    let scenario = generate_truth(&sim_p, 200, &options, 100, &mut rng);
    let dets: Vec<Vec<settrack::models::Detection>> = scenario
        .frames
        .iter()
        .map(|f| generate_detections(f, &sim_p, &mut rng))
        .collect();

    let mut frng = ChaCha8Rng::seed_from_u64(1);
    let mut pop = initial_population(128);
    println!("t |X|mean worst_obj_err min_support ess births");
    for (t, frame) in scenario.frames.iter().enumerate() {
        let r = update(&pop, &dets[t], &p, &mut frng).unwrap();
        pop = r.particles;
        let mean_n: f64 =
            pop.iter().map(|q| q.state.len() as f64).sum::<f64>() / pop.len() as f64;
        // Per truth object: fraction of particles with a state within 1 m.
        let mut worst_err: f64 = 0.0;
        let mut min_support: f64 = 1.0;
        for obj in &frame.objects {
            let mut sum_best = 0.0;
            let mut support = 0usize;
            for q in &pop {
                let best = q
                    .state
                    .states()
                    .iter()
                    .map(|s| {
                        ((s.x - obj.state.x).powi(2) + (s.y - obj.state.y).powi(2)).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min);
                if best < 1.0 {
                    support += 1;
                }
                if best.is_finite() {
                    sum_best += best;
                }
            }
            let mean_best = sum_best / pop.len() as f64;
            worst_err = worst_err.max(mean_best);
            min_support = min_support.min(support as f64 / pop.len() as f64);
        }
        let births: usize = pop
            .iter()
            .map(|q| {
                q.origins
                    .iter()
                    .filter(|o| matches!(o, settrack::filter::StateOrigin::Born))
                    .count()
            })
            .sum();
        if t % 5 == 0 {
            println!(
                "{t} {mean_n:.2} {worst_err:.2} {min_support:.2} {:.1} {births}",
                r.ess
            );
        }
    }
}
