use pdecast_core::math::SeededRng;
use pdecast_core::network::{load_checkpoint, save_checkpoint, ForecastNet, ModelKind, NetConfig};
use pdecast_core::pde::{build_dataset, load_dataset, save_dataset, DatasetSpec, Equation, InitialConditionConfig};
use pdecast_core::stability::{curve_csv, error_curve, ForecastMode};
use pdecast_core::train::{self, TrainConfig};

fn small_spec(equation: Equation) -> DatasetSpec {
    let mut spec = DatasetSpec::for_equation(equation);
    spec.grid_size = 32;
    spec.n_train = 24;
    spec.n_val = 8;
    spec.n_forecast = 4;
    spec.initial = InitialConditionConfig { max_mode: 3, ..Default::default() };
    spec
}

fn small_net(kind: ModelKind, seed: u64) -> ForecastNet {
    ForecastNet::init(&NetConfig { kind, grid_size: 32, latent_dim: 12, blocks: 2, xavier_gain: 1.0, delta: 0.01, seed })
        .unwrap()
}

fn quick_config(kind: ModelKind, equation: Equation) -> TrainConfig {
    let mut cfg = TrainConfig::preset(kind, equation);
    cfg.epochs = 20;
    cfg.batch_size = 8;
    cfg
}

#[test]
fn files_round_trip_through_training_and_forecasting() {
    let spec = small_spec(Equation::Advection);
    let [tr, va, fc] = build_dataset(&spec, &SeededRng::new(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for d in [&tr, &va, &fc] {
        let p = dir.path().join(format!("{}.txt", d.split));
        save_dataset(d, &p).unwrap();
        assert_eq!(&load_dataset(&p).unwrap(), d);
    }

    let mut net = small_net(ModelKind::ImplicitRelu, 3);
    let history = train::train(&mut net, &tr, &va, &quick_config(ModelKind::ImplicitRelu, Equation::Advection)).unwrap();
    assert_eq!(history.len(), 20);
    let best = history.best_epoch.unwrap();
    assert!((train::evaluate(&net, &va).unwrap().0 - history.records[best].val_mse).abs() <= 1e-12);

    let ckpt = dir.path().join("model.ckpt");
    save_checkpoint(&net, &ckpt).unwrap();
    let back = load_checkpoint(&ckpt).unwrap();
    let a = error_curve(&net, &fc, 25, &spec, ForecastMode::Latent).unwrap();
    let b = error_curve(&back, &fc, 25, &spec, ForecastMode::Latent).unwrap();
    assert_eq!(curve_csv(&a, "x"), curve_csv(&b, "x"));
}

#[test]
fn first_curve_step_is_the_one_step_error() {
    for equation in [Equation::Advection, Equation::Burgers] {
        let spec = small_spec(equation);
        let [_, _, fc] = build_dataset(&spec, &SeededRng::new(5)).unwrap();
        for kind in [ModelKind::ImplicitRelu, ModelKind::ExplicitRelu, ModelKind::ExplicitTanh] {
            let net = small_net(kind, 1);
            let (mse, rel) = train::evaluate(&net, &fc).unwrap();
            for mode in [ForecastMode::Latent, ForecastMode::Autoregressive] {
                let p = error_curve(&net, &fc, 1, &spec, mode).unwrap()[0];
                assert!((p.mse - mse).abs() <= 1e-12 * mse.max(1.0), "{equation} {kind} {mode}");
                assert!((p.relative_error_pct - rel).abs() <= 1e-9 * rel.max(1.0));
            }
        }
    }
}

#[test]
fn implicit_latent_rollout_stays_finite() {
    let spec = small_spec(Equation::Burgers);
    let [_, _, fc] = build_dataset(&spec, &SeededRng::new(9)).unwrap();
    let mut net = small_net(ModelKind::ImplicitRelu, 9);
    for w in net.encoder_mut().0.entries_mut() {
        *w *= 50.0;
    }
    let curve = error_curve(&net, &fc, 300, &spec, ForecastMode::Latent).unwrap();
    assert!(curve.iter().all(|p| p.mse.is_finite()));
}

#[test]
fn amplifying_explicit_rollout_reports_infinity() {
    let spec = small_spec(Equation::Advection);
    let [_, _, fc] = build_dataset(&spec, &SeededRng::new(2)).unwrap();
    let mut net = small_net(ModelKind::ExplicitRelu, 2);
    for w in net.encoder_mut().0.entries_mut() {
        *w *= 10.0;
    }
    for w in net.decoder_mut().0.entries_mut() {
        *w *= 10.0;
    }
    let curve = error_curve(&net, &fc, 400, &spec, ForecastMode::Autoregressive).unwrap();
    let first = curve.iter().position(|p| p.mse.is_infinite()).expect("rollout should overflow");
    assert!(first > 0);
    assert!(curve[first..].iter().all(|p| p.mse.is_infinite() && p.relative_error_pct.is_infinite()));
    let csv = curve_csv(&curve, "explicit_relu");
    assert!(csv.lines().last().unwrap().contains(",inf,inf,explicit_relu"));
}

#[test]
fn curve_rejects_mismatched_inputs() {
    let spec = small_spec(Equation::Advection);
    let [tr, _, fc] = build_dataset(&spec, &SeededRng::new(4)).unwrap();
    let net = small_net(ModelKind::ImplicitRelu, 4);
    assert!(error_curve(&net, &tr, 3, &spec, ForecastMode::Latent).is_err());
    assert!(error_curve(&net, &fc, 3, &DatasetSpec::burgers(), ForecastMode::Latent).is_err());
    let wide = ForecastNet::init(&NetConfig {
        kind: ModelKind::ImplicitRelu,
        grid_size: 64,
        latent_dim: 4,
        blocks: 1,
        xavier_gain: 1.0,
        delta: 0.01,
        seed: 0,
    })
    .unwrap();
    assert!(error_curve(&wide, &fc, 3, &spec, ForecastMode::Latent).is_err());
}
