use super::*;
use crate::choice::UtilityConfig;
use crate::data::{Dataset, Observation, SplitTag};
use crate::model::dataset_nll;
use crate::nn::{Activation, OutputTransform};
use crate::presets::{synthetic_template, SyntheticModel};
use crate::synth::{self, GenConfig, TrueTasteParams};
use rand::Rng;

fn small_data(n: usize, seed: u64) -> (Dataset, Dataset) {
    let cfg = GenConfig {
        n_train: n,
        n_dev: n / 2,
        n_test: 1,
        seed,
        ..GenConfig::default()
    };
    let (tr, dv, _) = synth::generate_dataset(&cfg, &TrueTasteParams::default()).unwrap();
    (tr, dv)
}

fn fd_check(model: &FittedModel, data: &Dataset, cfg: &TrainConfig) -> f64 {
    let idx: Vec<usize> = (0..data.len()).collect();
    let (_, grad) = regularized_loss(model, data, &idx, cfg).unwrap();
    let theta = flat_params(model);
    let mut worst: f64 = 0.0;
    for k in 0..theta.len() {
        let h = 1e-6 * theta[k].abs().max(1.0);
        let mut m = model.clone();
        let mut t = theta.clone();
        t[k] += h;
        set_flat_params(&mut m, &t);
        let up = regularized_loss(&m, data, &idx, cfg).unwrap().0;
        t[k] -= 2.0 * h;
        set_flat_params(&mut m, &t);
        let down = regularized_loss(&m, data, &idx, cfg).unwrap().0;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-3));
    }
    worst
}

fn smooth_tastenet(hidden: Vec<usize>, activation: Activation, transform: OutputTransform) -> ModelTemplate {
    let mut t = synthetic_template(SyntheticModel::TasteNet).unwrap();
    t.network = Some(MlpSpec::new(hidden, activation, vec![transform]));
    t
}

#[test]
fn tastenet_gradient_matches_finite_differences() {
    let (data, _) = small_data(40, 1);
    for reg_norm in [1, 2] {
        let cfg = TrainConfig {
            reg_norm,
            reg_strength: 0.01,
            ..TrainConfig::default()
        };
        let t = smooth_tastenet(vec![5], Activation::Tanh, OutputTransform::NegativeExp);
        let mut m = t.instantiate(7).unwrap();
        m.beta = vec![0.3];
        let err = fd_check(&m, &data, &cfg);
        assert!(err < 1e-5, "norm {reg_norm}: relative gradient error {err}");
    }
}

#[test]
fn rcl_gradient_matches_finite_differences() {
    let (data, _) = small_data(30, 2);
    let mut t = synthetic_template(SyntheticModel::RclI).unwrap();
    t.rcl.as_mut().unwrap().draws = 25;
    t.rcl.as_mut().unwrap().init_sigma = 0.3;
    let mut m = t.instantiate(3).unwrap();
    m.beta = vec![-0.1, -0.3, -0.05, 0.02, 0.1];
    let err = fd_check(&m, &data, &TrainConfig::default());
    assert!(err < 1e-5, "relative gradient error {err}");
}

#[test]
fn random_architectures_gradient_check() {
    let (data, _) = small_data(12, 3);
    let mut rng = crate::rng::stream(11, 0);
    let transforms = [OutputTransform::Identity, OutputTransform::NegativeExp, OutputTransform::Exp];
    for case in 0..50 {
        let depth = rng.random_range(0..3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..6)).collect();
        let activation = if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Relu };
        let transform = transforms[rng.random_range(0..transforms.len())];
        let cfg = TrainConfig {
            reg_norm: if rng.random_bool(0.5) { 1 } else { 2 },
            reg_strength: rng.random_range(0.0..0.1),
            ..TrainConfig::default()
        };
        let t = smooth_tastenet(hidden.clone(), activation, transform);
        let mut m = t.instantiate(case).unwrap();
        m.beta = vec![rng.random_range(-1.0..1.0)];
        // Nudge net parameters off exact zero so L1 and ReLU kinks are avoided.
        let mut theta = flat_params(&m);
        for v in &mut theta {
            *v += rng.random_range(-0.2..0.2) * 0.1 + 0.01;
        }
        set_flat_params(&mut m, &theta);
        let err = fd_check(&m, &data, &cfg);
        assert!(err < 1e-4, "case {case} {hidden:?} {activation:?} {transform:?}: error {err}");
    }
}

#[test]
fn zero_strength_loss_is_mean_nll() {
    let (data, _) = small_data(50, 4);
    let t = synthetic_template(SyntheticModel::TasteNet).unwrap();
    let m = t.instantiate(5).unwrap();
    let idx: Vec<usize> = (0..data.len()).collect();
    let cfg = TrainConfig {
        reg_strength: 0.0,
        ..TrainConfig::default()
    };
    let (loss, _) = regularized_loss(&m, &data, &idx, &cfg).unwrap();
    let nll = dataset_nll(&m, &data).unwrap().nll;
    assert!((loss - nll).abs() < 1e-12);
    assert_eq!(penalty(&m, &cfg), 0.0);

    let l2 = TrainConfig {
        reg_strength: 0.5,
        ..TrainConfig::default()
    };
    let mut m = m;
    for l in &mut m.network.as_mut().unwrap().params.layers {
        l.bias.iter_mut().for_each(|b| *b = 3.0);
    }
    let nll = dataset_nll(&m, &data).unwrap().nll;
    let sq: f64 = m.network.as_ref().unwrap().params.layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum();
    assert!((penalty(&m, &l2) - 0.5 * sq).abs() < 1e-12);
    let (loss2, _) = regularized_loss(&m, &data, &idx, &l2).unwrap();
    assert!((loss2 - nll - 0.5 * sq).abs() < 1e-12);
}

#[test]
fn parametric_coefficients_are_not_penalized() {
    let (data, _) = small_data(20, 5);
    let t = synthetic_template(SyntheticModel::MnlI).unwrap();
    let mut m = t.instantiate(0).unwrap();
    m.beta = vec![0.05; m.beta.len()];
    let cfg = TrainConfig {
        reg_strength: 10.0,
        ..TrainConfig::default()
    };
    assert_eq!(penalty(&m, &cfg), 0.0);
    let idx: Vec<usize> = (0..data.len()).collect();
    let (loss, _) = regularized_loss(&m, &data, &idx, &cfg).unwrap();
    assert!((loss - dataset_nll(&m, &data).unwrap().nll).abs() < 1e-12);
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        max_epochs: 30,
        patience: 5,
        restarts: 2,
        seed: 9,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic() {
    let (tr, dv) = small_data(200, 6);
    let t = synthetic_template(SyntheticModel::TasteNet).unwrap();
    let a = train(&t, &tr, &dv, &quick_cfg()).unwrap();
    let b = train(&t, &tr, &dv, &quick_cfg()).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn checkpoint_is_best_dev_epoch() {
    let (tr, dv) = small_data(200, 7);
    let t = synthetic_template(SyntheticModel::TasteNet).unwrap();
    let m = train(&t, &tr, &dv, &quick_cfg()).unwrap();
    let rec = m.training.as_ref().unwrap();
    let min = rec.history.iter().map(|e| e.dev_nll).fold(f64::INFINITY, f64::min);
    assert_eq!(rec.best_dev_nll, min);
    assert_eq!(rec.history[rec.best_epoch].dev_nll, min);
    assert!(rec.best_dev_nll <= rec.history[0].dev_nll);
    let dev = dataset_nll(&m, &dv).unwrap().nll;
    assert!((dev - rec.best_dev_nll).abs() < 1e-12);

    let kept = rec.restart_dev_nll[rec.restart].unwrap();
    assert_eq!(kept, rec.best_dev_nll);
    for v in rec.restart_dev_nll.iter().flatten() {
        assert!(kept <= *v);
    }
}

#[test]
fn separated_data_diverges() {
    let schema = synth::schema();
    let obs = |chosen| Observation {
        z: vec![1.0, 1.0, 0.0],
        x: vec![vec![1.0, 10.0], vec![1.0, 10.0]],
        available: vec![true, true],
        chosen,
    };
    let tr = Dataset::new(schema.clone(), vec![obs(1); 4], SplitTag::Train).unwrap();
    let dv = Dataset::new(schema.clone(), vec![obs(1); 2], SplitTag::Dev).unwrap();
    let cfg = UtilityConfig::new(vec![
        crate::choice::AlternativeUtilityConfig::new("alt0", "0", &[]),
        crate::choice::AlternativeUtilityConfig::new("alt1", "param:asc1", &[]),
    ]);
    let utility = UtilitySpec::parse(&cfg, &schema).unwrap();
    let tcfg = TrainConfig {
        learning_rate: 0.1,
        max_epochs: 100_000,
        patience: 100_000,
        restarts: 1,
        ..TrainConfig::default()
    };
    let err = estimate_mnl(&schema, &utility, &tr, &dv, &tcfg).unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
}

#[test]
fn exploding_step_diverges() {
    let (tr, dv) = small_data(100, 8);
    let t = synthetic_template(SyntheticModel::MnlTrue).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e4,
        max_param_abs: 1e3,
        restarts: 1,
        ..TrainConfig::default()
    };
    let err = train(&t, &tr, &dv, &cfg).unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
}

#[test]
fn invalid_config_is_rejected() {
    let (tr, dv) = small_data(20, 9);
    let t = synthetic_template(SyntheticModel::MnlI).unwrap();
    for cfg in [
        TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { reg_norm: 3, ..TrainConfig::default() },
        TrainConfig { restarts: 0, ..TrainConfig::default() },
        TrainConfig { reg_strength: -1.0, ..TrainConfig::default() },
    ] {
        assert!(matches!(train(&t, &tr, &dv, &cfg), Err(Error::Argument(_))));
    }
    let net = synthetic_template(SyntheticModel::TasteNet).unwrap();
    assert!(estimate_mnl(&net.schema, &net.utility, &tr, &dv, &TrainConfig::default()).is_err());
}

#[test]
fn singleton_grid_matches_single_run() {
    let (tr, dv) = small_data(150, 10);
    let t = synthetic_template(SyntheticModel::TasteNet).unwrap();
    let cfg = TrainConfig {
        restarts: 1,
        ..quick_cfg()
    };
    let space = GridSpace {
        hidden_sizes: vec![vec![7]],
        activations: vec![Activation::Relu],
        constrained_transforms: vec![OutputTransform::NonPositiveRelu],
        reg_norms: vec![2],
        reg_strengths: vec![0.0],
    };
    let g = grid_search(&t, &space, &tr, &dv, &cfg, 1).unwrap();
    assert_eq!(g.rows.len(), 1);
    let single = train_single(&t, &tr, &dv, &cfg, cfg.restart_seed(0)).unwrap();
    let best = g.best.unwrap();
    assert_eq!(best.beta, single.beta);
    assert_eq!(best.network, single.network);
    assert_eq!(g.rows[0].dev_nll, Some(dataset_nll(&single, &dv).unwrap().nll));
}

#[test]
fn grid_is_independent_of_worker_count() {
    let (tr, dv) = small_data(100, 11);
    let t = synthetic_template(SyntheticModel::TasteNet).unwrap();
    let cfg = TrainConfig {
        max_epochs: 5,
        ..quick_cfg()
    };
    let space = GridSpace {
        hidden_sizes: vec![vec![2], vec![4]],
        activations: vec![Activation::Relu, Activation::Tanh],
        constrained_transforms: vec![OutputTransform::NonPositiveRelu],
        reg_norms: vec![1, 2],
        reg_strengths: vec![0.001],
    };
    let a = grid_search(&t, &space, &tr, &dv, &cfg, 1).unwrap();
    let b = grid_search(&t, &space, &tr, &dv, &cfg, 3).unwrap();
    assert_eq!(a.rows.len(), 16);
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.ranking, b.ranking);
}
