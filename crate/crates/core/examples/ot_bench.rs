//! Times the exact transport solver on random 3-D measures.
//!
//! `cargo run --release --example ot_bench -- <m1> <m2>`
use mmsb::evaluate::wasserstein;
use mmsb::linalg::Matrix;
use mmsb::predict::WeightedParticles;
use rand::{Rng, SeedableRng};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let (m1, m2) = (args[0], args[1]);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let x = Matrix::from_fn(m1, 3, |_, _| rng.random());
    let y = Matrix::from_fn(m2, 3, |_, _| 1.5 * rng.random::<f64>());
    let mut a: Vec<f64> = (0..m1).map(|_| rng.random::<f64>().powi(8)).collect();
    let s: f64 = a.iter().sum();
    a.iter_mut().for_each(|w| *w /= s);
    let p = WeightedParticles::new(x, a).unwrap();
    let q = WeightedParticles::uniform(y).unwrap();
    let t = std::time::Instant::now();
    let r = wasserstein(&p, &q).unwrap();
    println!("cost {} time {:.3}", r.cost, t.elapsed().as_secs_f64());
}
