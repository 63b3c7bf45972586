//! Small-scale end-to-end recovery checks for both trainers. The full-scale
//! versions with the published tolerances live in the acceptance suite.

use wioc::adversarial::{fit_w, WTrainOptions};
use wioc::cost::CostModel;
use wioc::envs::{
    make_demonstrations, sample_gaussian_walk, DemoMode, DemoOptions, WalkSpec,
};
use wioc::kl::{fit_kl, KlFitOptions};
use wioc::numeric::{mean, norm};
use wioc::w1::exact_w1;

#[test]
fn kl_fit_recovers_the_generating_parameters() {
    let baseline = sample_gaussian_walk(&WalkSpec {
        k: 2,
        n: 300,
        seed: 42,
    })
    .unwrap();
    let theta_true = vec![1.0, -0.5];
    let truth = CostModel::quadratic(theta_true.clone()).unwrap();
    let (demos, _) = make_demonstrations(
        &truth,
        &baseline,
        1.0,
        DemoMode::Kl,
        &DemoOptions {
            n_resample: Some(300),
            seed: 7,
            ..DemoOptions::default()
        },
    )
    .unwrap();
    let init = CostModel::quadratic(vec![0.0, 0.0]).unwrap();
    let opts = KlFitOptions {
        epochs: 400,
        seed: 1,
        ..KlFitOptions::default()
    };
    let (fitted, log) = fit_kl(&init, &demos, &baseline, 1.0, &opts).unwrap();
    let err: Vec<f64> = fitted
        .theta()
        .iter()
        .zip(&theta_true)
        .map(|(a, b)| a - b)
        .collect();
    assert!(norm(&err) <= 0.25, "theta error {}", norm(&err));

    // Smoothed likelihood trend: early mean NLL >= late mean NLL.
    let early = mean(&log[..20].iter().map(|r| r.nll).collect::<Vec<_>>());
    let late = mean(&log[log.len() - 20..].iter().map(|r| r.nll).collect::<Vec<_>>());
    assert!(late <= early + 1e-9, "nll {early} -> {late}");
}

#[test]
fn w_fit_is_bitwise_invariant_to_worker_count() {
    let baseline = sample_gaussian_walk(&WalkSpec { k: 2, n: 16, seed: 2 }).unwrap();
    let truth = CostModel::quadratic(vec![1.0, 0.5]).unwrap();
    let (demos, _) = make_demonstrations(
        &truth,
        &baseline,
        1.0,
        DemoMode::W,
        &DemoOptions::default(),
    )
    .unwrap();
    let init = CostModel::quadratic(vec![0.0, 0.0]).unwrap();
    let run = |workers: usize| {
        let mut opts = WTrainOptions {
            iterations: 40,
            minibatch: 16,
            seed: 3,
            ..WTrainOptions::default()
        };
        opts.transport.workers = workers;
        let (fitted, _, _) = fit_w(&init, &demos, &baseline, 1.0, &opts).unwrap();
        fitted.theta()
    };
    let theta1 = run(1);
    let theta4 = run(4);
    for (a, b) in theta1.iter().zip(&theta4) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn w_fit_shrinks_the_transport_gap() {
    let baseline = sample_gaussian_walk(&WalkSpec {
        k: 2,
        n: 48,
        seed: 3,
    })
    .unwrap();
    let theta_true = vec![2.0, -1.0];
    let truth = CostModel::quadratic(theta_true.clone()).unwrap();
    let gamma = 1.0;
    let (demos, _) = make_demonstrations(
        &truth,
        &baseline,
        gamma,
        DemoMode::W,
        &DemoOptions::default(),
    )
    .unwrap();
    let start_gap = exact_w1(&demos, &baseline).unwrap();

    let init = CostModel::quadratic(vec![0.0, 0.0]).unwrap();
    let opts = WTrainOptions {
        iterations: 600,
        minibatch: 48,
        theta_lr: 2e-2,
        critic_lr: 5e-3,
        seed: 5,
        ..WTrainOptions::default()
    };
    let (fitted, state, _) = fit_w(&init, &demos, &baseline, gamma, &opts).unwrap();
    let trans = wioc::traj::EmpiricalMeasure::new(
        state.transported.iter().map(|r| r.target.clone()).collect(),
    )
    .unwrap();
    let final_gap = exact_w1(&demos, &trans).unwrap();
    assert!(
        final_gap <= 0.5 * start_gap,
        "w1 gap {start_gap} -> {final_gap} (theta {:?})",
        fitted.theta()
    );
}
