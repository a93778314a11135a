#![allow(dead_code)]

use duet_core::fixtures::random_chain_spec;
use duet_core::robot_model::RobotModel;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use duet_core::fixtures::random_configuration;

pub fn small_robot(rng: &mut ChaCha8Rng, joints: usize) -> RobotModel {
    RobotModel::new(random_chain_spec(rng, joints)).unwrap()
}

pub fn unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0f64)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.2 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

pub fn random_step(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}
