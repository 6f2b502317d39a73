mod common;

use negrec_core::rng::rng_for;

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = rng_for(2024, &[]);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let (params, ex) = common::tiny_case(&mut rng);
        let check = common::gradient_check(&params, &ex, 1e-3, 1e-6);
        assert!(check.compared > 0, "trial {trial}: every component sat on a kink");
        assert!(
            check.max_relative_error < 1e-4,
            "trial {trial}: relative error {:.3e} in {}",
            check.max_relative_error,
            check.worst_tensor
        );
        worst = worst.max(check.max_relative_error);
    }
    eprintln!("worst relative error over 50 trials: {worst:.3e}");
}
