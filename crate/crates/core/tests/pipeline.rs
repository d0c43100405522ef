use linexplore::baselines::UniformRandom;
use linexplore::environments::{make_hard_goptimal, make_synthetic};
use linexplore::estimator::{evaluate, ridge_fit, RidgeEstimate};
use linexplore::planner::{plan, MixturePolicy};
use linexplore::sampler::{read_dataset_csv, sample_stream, write_dataset_csv};
use linexplore::{stream_rng, streams, ExperimentConfig};

#[test]
fn planned_data_beats_uniform_on_hard_design() {
    let inst = make_hard_goptimal(3).unwrap();
    let cfg = ExperimentConfig::new(600, 300, 1.0);
    let (mut planned, mut uniform) = (0.0, 0.0);
    for seed in 0..10 {
        let offline = inst.draw_contexts(cfg.m, &mut stream_rng(seed, streams::OFFLINE));
        let online = inst.draw_contexts(cfg.n, &mut stream_rng(seed, streams::ONLINE));
        let eval = inst.draw_contexts(200, &mut stream_rng(seed, streams::EVAL));
        let (policy, _) = plan(&offline, &cfg).unwrap();
        let run = |p: &dyn linexplore::ExplorationPolicy| {
            let ds = sample_stream(
                p,
                &inst,
                &online,
                &mut stream_rng(seed, streams::POLICY),
                &mut stream_rng(seed, streams::NOISE),
            )
            .unwrap();
            let est = ridge_fit(&ds, cfg.lambda_reg).unwrap();
            evaluate(&est, &inst, &eval).unwrap().expected_max_uncertainty
        };
        planned += run(&policy);
        uniform += run(&UniformRandom);
    }
    assert!(planned < uniform, "planned {planned} vs uniform {uniform}");
}

#[test]
fn artifacts_survive_the_disk_formats() {
    let inst = make_synthetic(4);
    let cfg = ExperimentConfig::new(300, 150, 1.0);
    let offline = inst.draw_contexts(cfg.m, &mut stream_rng(4, streams::OFFLINE));
    let (policy, _) = plan(&offline, &cfg).unwrap();
    let restored = MixturePolicy::from_json(&policy.to_json().unwrap()).unwrap();
    let online = inst.draw_contexts(cfg.n, &mut stream_rng(4, streams::ONLINE));
    let collect = |p: &MixturePolicy| {
        sample_stream(
            p,
            &inst,
            &online,
            &mut stream_rng(4, streams::POLICY),
            &mut stream_rng(4, streams::NOISE),
        )
        .unwrap()
    };
    let ds = collect(&policy);
    assert_eq!(ds, collect(&restored));

    let mut buf = Vec::new();
    write_dataset_csv(&ds, &mut buf).unwrap();
    let back = read_dataset_csv(buf.as_slice()).unwrap();
    assert_eq!(back, ds);

    let est = ridge_fit(&back, cfg.lambda_reg).unwrap();
    let again = RidgeEstimate::from_artifact(est.to_artifact()).unwrap();
    assert_eq!(again.theta_hat, est.theta_hat);
}
