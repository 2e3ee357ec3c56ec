//! The one-sided permutation test on its own: exact enumeration for small
//! samples, counter-based Monte Carlo otherwise.

use febias::statmod::{permutation_test, Estimator, PermutationConfig, StreamId};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() -> febias::Result<()> {
    let id = StreamId::new(["example"]);

    let a = [1.0, 1.0, 1.0];
    let b = [0.0, 0.0, 0.0];
    let r = permutation_test(&a, &b, 1.0, &PermutationConfig::with_seed(0), &id)?;
    println!("3 vs 3 binary: p = {} ({:?}), validated {}", r.p, r.method, r.validated);

    let a: Vec<f64> = (0..400).map(|i| ((i as f64) * 0.7).sin() + 0.15).collect();
    let b: Vec<f64> = (0..400).map(|i| ((i as f64) * 1.3).cos()).collect();
    let observed = mean(&a) - mean(&b);
    for estimator in [Estimator::Paper, Estimator::PlusOne] {
        let cfg = PermutationConfig {
            estimator,
            ..PermutationConfig::with_seed(42)
        };
        let r = permutation_test(&a, &b, observed, &cfg, &id)?;
        println!(
            "400 vs 400, {estimator:?}: observed {observed:.4}, p = {} from {} relabelings",
            r.p, r.b_used
        );
    }
    Ok(())
}
