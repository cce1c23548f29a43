// Scratch diagnostic (not part of the crate).
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use settrack::filter::{initial_population, update};
use settrack::models::{Detection, ModelParams, ObjectState};

fn main() {
    let p = ModelParams::pets2009();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut truth = ObjectState::new(5.0, 8.0, 1.0, 0.3);
    let mut pop = initial_population(128);
    println!("t truth_x mean_x mean_vx err n_mean");
    for t in 0..80 {
        truth.x += truth.vx * p.dt;
        truth.y += truth.vy * p.dt;
        // 28% miss, Sigma noise, Beta(2,1)-ish confidence
        let mut dets = Vec::new();
        if rng.random::<f64>() > 0.28 {
            let (dx, dy) = p.obs_cov.sample((truth.x, truth.y), &mut rng);
            dets.push(Detection::new(dx, dy, rng.random::<f64>().sqrt()));
        }
        pop = update(&pop, &dets, &p, &mut rng).unwrap().particles;
        let mut n = 0f64;
        let (mut mx, mut my, mut mvx) = (0.0, 0.0, 0.0);
        for q in &pop {
            for s in q.state.states() {
                mx += s.x; my += s.y; mvx += s.vx; n += 1.0;
            }
        }
        if n > 0.0 { mx /= n; my /= n; mvx /= n; }
        let err = ((mx - truth.x).powi(2) + (my - truth.y).powi(2)).sqrt();
        if t % 5 == 0 {
            println!("{t} {:.2} {:.2} {:.2} {:.2} {:.2}", truth.x, mx, mvx, err, n / 128.0);
        }
    }
}
