// Scratch diagnostic: full dump of one stuck frame (not part of the crate).
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use settrack::filter::{initial_population, update};
use settrack::models::ModelParams;
use settrack::observation::joint_likelihood;
use settrack::sim::{InitialPopulation, SimOptions, generate_detections, generate_truth};

fn main() {
    let p = ModelParams::pets2009();
    let mut sim_p = p.clone();
    sim_p.birth_rate = 0.0;
    sim_p.death_rate = 0.0;
    sim_p.dash_sigma = 0.3;
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let options = SimOptions {
        initial: InitialPopulation::Count(4),
        confine_to_arena: true,
        birth_speed_sigma: 0.25,
    };
    let scenario = generate_truth(&sim_p, 60, &options, 100, &mut rng);
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
        if t == 40 {
            println!("truth:");
            for o in &frame.objects {
                println!("  id={} ({:.2},{:.2}) v=({:.2},{:.2})", o.id, o.state.x, o.state.y, o.state.vx, o.state.vy);
            }
            println!("dets:");
            for (i, d) in dets[t].iter().enumerate() {
                println!("  [{i}] ({:.2},{:.2}) c={:.2}", d.x, d.y, d.confidence);
            }
            let q = &pop[0];
            println!("particle0 states:");
            for (i, s) in q.state.states().iter().enumerate() {
                println!("  [{i}] ({:.2},{:.2}) v=({:.2},{:.2})", s.x, s.y, s.vx, s.vy);
            }
            let obs = q.cached_obs.clone().unwrap_or_else(|| {
                joint_likelihood(&dets[t], &q.state, &p).unwrap()
            });
            println!(
                "best assoc: false={:?} missed={:?} matches={:?} log_l={:.2} terms={}",
                obs.best.false_detections, obs.best.missed_objects, obs.best.matches,
                obs.log_likelihood, obs.terms
            );
            // weight spread
            let mut n_diff = 0;
            for q2 in &pop {
                if q2.state.states() != q.state.states() { n_diff += 1; }
            }
            println!("particles differing from particle0: {n_diff}/128, ess={:.1}", r.ess);
        }
    }
}
