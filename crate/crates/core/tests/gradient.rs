mod common;

use common::{heads, max_gradient_error, random_teams};
use turntaking::net::{train, NetworkWeights, OutputHead, TrainConfig};

#[test]
fn backprop_matches_central_differences() {
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    for seed in 0..12u64 {
        let head = heads()[seed as usize % 3];
        let n_traits = 1 + seed as usize % 3;
        let teams = random_teams(seed, 3, n_traits, 25);
        let weights = NetworkWeights::init(n_traits, head, 100 + seed);
        let err = max_gradient_error(&weights, &teams, 1e-5);
        assert!(err < 1e-4, "seed {seed} {head:?}: relative error {err:e}");
        worst = worst.max(err);
        instances += 1;
    }
    assert!(instances >= 10);
    println!("max relative error over {instances} instances: {worst:e}");
}

#[test]
fn gradient_holds_away_from_initialisation() {
    let teams = random_teams(40, 4, 2, 40);
    let cfg = TrainConfig { max_epochs: 30, patience: 30, ..TrainConfig::default() }.with_seed(5);
    let fitted = train(&teams, &teams, OutputHead::Full, &cfg).unwrap();
    assert!(max_gradient_error(&fitted.weights, &teams, 1e-5) < 1e-4);
}
