use super::*;
use crate::grad::finite_diff_check;
use crate::math::SeededRng;

fn cfg(kind: ModelKind, g: usize, m: usize, k: usize, seed: u64) -> NetConfig {
    NetConfig {
        kind,
        grid_size: g,
        latent_dim: m,
        blocks: k,
        xavier_gain: 1.0,
        delta: 0.01,
        seed,
    }
}

fn random_field(g: usize, rng: &mut SeededRng) -> Field1D {
    Field1D::new((0..g).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

/// Implicit net with non-zero biases and couplings so that gates mix.
fn busy_net(kind: ModelKind, g: usize, m: usize, k: usize, seed: u64) -> ForecastNet {
    let mut net = ForecastNet::init(&cfg(kind, g, m, k, seed)).unwrap();
    let mut rng = SeededRng::new(seed ^ 0xabc);
    let mut p = net.params();
    for v in p.iter_mut() {
        *v += rng.uniform(-0.3, 0.3);
    }
    net.set_params(&p);
    net.project_weights(0.01).unwrap();
    net
}

const KINDS: [ModelKind; 3] = [ModelKind::ImplicitRelu, ModelKind::ExplicitRelu, ModelKind::ExplicitTanh];

#[test]
fn kind_names_round_trip() {
    for k in KINDS {
        assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
    }
    assert!("resnet".parse::<ModelKind>().is_err());
    assert_eq!(ModelKind::default_latent_dim(Equation::Advection), 50);
    assert_eq!(ModelKind::default_latent_dim(Equation::Burgers), 64);
}

#[test]
fn init_respects_constraints_and_shapes() {
    let net = ForecastNet::init(&cfg(ModelKind::ImplicitRelu, 100, 50, 4, 3)).unwrap();
    assert_eq!(net.encoder().0.rows(), 50);
    assert_eq!(net.encoder().0.cols(), 100);
    assert_eq!(net.decoder().0.rows(), 100);
    assert_eq!(net.decoder().0.cols(), 50);
    assert!(net.encoder().1.iter().chain(net.decoder().1).all(|&b| b == 0.0));
    let blocks = net.implicit_blocks().unwrap();
    assert_eq!(blocks.len(), 4);
    for b in blocks {
        assert!(b.lambda().iter().all(|&l| (0.01..=1.0).contains(&l)));
        assert!(b.bias().iter().all(|&v| v == 0.0));
    }
    assert_eq!(net.param_count(), net.params().len());
    let again = ForecastNet::init(&cfg(ModelKind::ImplicitRelu, 100, 50, 4, 3)).unwrap();
    assert_eq!(net, again);
    assert!(ForecastNet::init(&NetConfig { delta: 0.0, ..cfg(ModelKind::ImplicitRelu, 8, 4, 1, 0) }).is_err());
    assert!(ForecastNet::init(&cfg(ModelKind::ExplicitRelu, 0, 4, 1, 0)).is_err());
}

#[test]
fn zero_residual_layers_with_identity_maps_return_the_input() {
    let g = 12;
    let layers = (0..3).map(|_| DenseLayer::new(DenseMatrix::zeros(g, g), vec![0.0; g]).unwrap()).collect();
    let net = ForecastNet::from_parts(
        ModelKind::ExplicitRelu,
        0.01,
        0,
        DenseMatrix::identity(g),
        vec![0.0; g],
        Blocks::Explicit(layers),
        DenseMatrix::identity(g),
        vec![0.0; g],
    )
    .unwrap();
    let u = random_field(g, &mut SeededRng::new(1));
    assert_eq!(net.forward_train(&u).unwrap(), u);
}

#[test]
fn no_blocks_is_the_linear_composition() {
    let net = ForecastNet::init(&cfg(ModelKind::ImplicitRelu, 16, 6, 0, 9)).unwrap();
    let mut rng = SeededRng::new(2);
    let u = random_field(16, &mut rng);
    let want = net.decode(&net.encode(u.values()));
    assert_eq!(net.forward_train(&u).unwrap().values(), &want[..]);
}

#[test]
fn one_step_forecasts_equal_forward_train() {
    for kind in KINDS {
        let net = busy_net(kind, 20, 8, 3, 5);
        let u = random_field(20, &mut SeededRng::new(6));
        let one = net.forward_train(&u).unwrap();
        let lat = net.forecast_latent(&u, 1, 0.5).unwrap();
        let ar = net.forecast_autoregressive(&u, 1, 0.5).unwrap();
        assert_eq!(lat.fields[0], one, "{kind}");
        assert_eq!(ar.fields[0], one, "{kind}");
        assert_eq!(lat.times, vec![0.5]);
        assert!(net.forecast_latent(&u, 0, 0.5).is_err());
        assert!(net.forecast_autoregressive(&u, 0, 0.5).is_err());
    }
}

#[test]
fn latent_rollout_is_stateless() {
    let net = busy_net(ModelKind::ImplicitRelu, 20, 8, 2, 11);
    let u = random_field(20, &mut SeededRng::new(12));
    let full = net.forecast_latent(&u, 30, 1.0).unwrap();
    let (head, z) = net.forecast_latent_from(net.encode(u.values()), 12, 1.0);
    let (tail, _) = net.forecast_latent_from(z, 18, 1.0);
    assert_eq!(&full.fields[..12], &head.fields[..]);
    assert_eq!(&full.fields[12..], &tail.fields[..]);
    assert_eq!(&full.latent_norms[12..], &tail.latent_norms[..]);
    assert_eq!(full.len(), 30);
    assert_eq!(full.times.len(), full.latent_norms.len());
}

#[test]
fn identity_linear_net_modes_agree() {
    let g = 10;
    let mut rng = SeededRng::new(4);
    let scale = DenseMatrix::new(g, g, (0..g * g).map(|i| if i % (g + 1) == 0 { 0.97 } else { 0.0 }).collect()).unwrap();
    let net = ForecastNet::from_parts(
        ModelKind::ImplicitRelu,
        0.01,
        0,
        scale,
        vec![0.0; g],
        Blocks::Implicit(Vec::new()),
        DenseMatrix::identity(g),
        vec![0.0; g],
    )
    .unwrap();
    let u = random_field(g, &mut rng);
    // with K = 0, latent rollout decodes encode(u) each step while the
    // autoregressive one re-encodes; both apply 0.97 exactly once
    let lat = net.forecast_latent(&u, 5, 1.0).unwrap();
    let ar = net.forecast_autoregressive(&u, 1, 1.0).unwrap();
    assert_eq!(lat.fields[0], ar.fields[0]);

    let id = ForecastNet::from_parts(
        ModelKind::ImplicitRelu,
        0.01,
        0,
        DenseMatrix::identity(g),
        vec![0.0; g],
        Blocks::Implicit(vec![TriangularBlock::random(g, 0.01, &mut rng).unwrap()]),
        DenseMatrix::identity(g),
        vec![0.0; g],
    )
    .unwrap();
    let lat = id.forecast_latent(&u, 40, 1.0).unwrap();
    let ar = id.forecast_autoregressive(&u, 40, 1.0).unwrap();
    assert_eq!(lat, ar);
}

#[test]
fn projection_examples() {
    let mut net = ForecastNet::init(&cfg(ModelKind::ImplicitRelu, 6, 3, 1, 0)).unwrap();
    if let Blocks::Implicit(b) = net.blocks_mut() {
        b[0].lambda_mut().copy_from_slice(&[1.7, 0.001, 0.5]);
    }
    assert_eq!(net.project_weights(0.01).unwrap(), 2);
    assert_eq!(net.implicit_blocks().unwrap()[0].lambda(), &[1.0, 0.01, 0.5]);
    let before = net.clone();
    assert_eq!(net.project_weights(0.01).unwrap(), 0);
    assert_eq!(net, before);
    assert!(net.project_weights(1.0).is_err());

    let mut exp = ForecastNet::init(&cfg(ModelKind::ExplicitTanh, 6, 3, 1, 0)).unwrap();
    let before = exp.clone();
    assert_eq!(exp.project_weights(0.01).unwrap(), 0);
    assert_eq!(exp, before);
}

#[test]
fn from_parts_rejects_inconsistent_models() {
    let g = 6;
    let m = 3;
    let ok = |kind, blocks| {
        ForecastNet::from_parts(
            kind,
            0.01,
            0,
            DenseMatrix::zeros(m, g),
            vec![0.0; m],
            blocks,
            DenseMatrix::zeros(g, m),
            vec![0.0; g],
        )
    };
    let mut rng = SeededRng::new(0);
    let block = TriangularBlock::random(m, 0.01, &mut rng).unwrap();
    assert!(ok(ModelKind::ImplicitRelu, Blocks::Implicit(vec![block.clone()])).is_ok());
    assert!(ok(ModelKind::ExplicitRelu, Blocks::Implicit(vec![block])).is_err());
    let wide = TriangularBlock::random(m + 1, 0.01, &mut rng).unwrap();
    assert!(ok(ModelKind::ImplicitRelu, Blocks::Implicit(vec![wide])).is_err());
    let loose = TriangularBlock::new(vec![0.001; m], vec![0.0; 3], vec![0.0; m]).unwrap();
    assert!(matches!(
        ok(ModelKind::ImplicitRelu, Blocks::Implicit(vec![loose])),
        Err(Error::HypothesisViolated(_))
    ));
    let net = ok(ModelKind::ImplicitRelu, Blocks::Implicit(Vec::new())).unwrap();
    assert!(net.forward_train(&Field1D::new(vec![0.0; g + 1]).unwrap()).is_err());
}

#[test]
fn explicit_overflow_poisons_the_tail() {
    let g = 4;
    let layer = DenseLayer::new(DenseMatrix::identity(g), vec![1.0; g]).unwrap();
    let net = ForecastNet::from_parts(
        ModelKind::ExplicitRelu,
        0.01,
        0,
        DenseMatrix::identity(g),
        vec![0.0; g],
        Blocks::Explicit(vec![layer]),
        DenseMatrix::identity(g),
        vec![0.0; g],
    )
    .unwrap();
    let u = Field1D::new(vec![1.0; g]).unwrap();
    for r in [net.forecast_latent(&u, 1200, 0.1).unwrap(), net.forecast_autoregressive(&u, 1200, 0.1).unwrap()] {
        // latent doubles each step: 2^1024 overflows
        let first = r.first_diverged().unwrap();
        assert!((1000..1100).contains(&first), "{first}");
        assert!(r.latent_norms[first..].iter().all(|v| *v == f64::INFINITY));
        assert!(r.fields[first..].iter().all(|f| f.values().iter().all(|v| *v == f64::INFINITY)));
        assert!(r.latent_norms[..first].iter().all(|v| v.is_finite()));
        assert_eq!(r.len(), 1200);
    }
}

#[test]
fn implicit_rollouts_stay_finite() {
    let net = busy_net(ModelKind::ImplicitRelu, 24, 12, 4, 21);
    let u = random_field(24, &mut SeededRng::new(22));
    let r = net.forecast_latent(&u, 2000, 1.0).unwrap();
    assert!(r.first_diverged().is_none());
}

#[test]
fn gradients_match_finite_differences() {
    for (i, kind) in KINDS.into_iter().enumerate() {
        let mut rng = SeededRng::new(100 + i as u64);
        let net = busy_net(kind, 10, 8, 2, 30 + i as u64);
        let u = random_field(10, &mut rng);
        let target = random_field(10, &mut rng);
        let report = finite_diff_check(&net, u.values(), target.values(), 1e-6).unwrap();
        assert!(report.max_relative_error <= 1e-5, "{kind}: {report:?}");
        assert!(report.checked > net.param_count() / 2, "{kind}: {report:?}");
    }
}

#[test]
fn accumulate_gradient_scales_and_sums() {
    let net = busy_net(ModelKind::ImplicitRelu, 10, 6, 2, 8);
    let mut rng = SeededRng::new(9);
    let (a, b) = (random_field(10, &mut rng), random_field(10, &mut rng));
    let (_, ga, _) = net.loss_and_grad(a.values(), b.values()).unwrap();
    let mut acc = vec![0.0; net.param_count()];
    net.accumulate_gradient(a.values(), b.values(), 0.5, &mut acc);
    net.accumulate_gradient(a.values(), b.values(), 0.5, &mut acc);
    for (x, y) in acc.iter().zip(&ga) {
        assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
    }
}

#[test]
fn params_round_trip_and_update() {
    let mut net = busy_net(ModelKind::ExplicitTanh, 8, 4, 2, 1);
    let p = net.params();
    let mut other = ForecastNet::init(&cfg(ModelKind::ExplicitTanh, 8, 4, 2, 99)).unwrap();
    other.set_params(&p);
    assert_eq!(other.params(), p);
    net.apply_update(&vec![1.0; p.len()]);
    assert!(net.params().iter().zip(&p).all(|(a, b)| *a == b + 1.0));
}

mod checkpoints {
    use super::*;
    use crate::network::checkpoint::{checkpoint_text, parse_checkpoint};
    use std::path::Path;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for kind in KINDS {
            let net = busy_net(kind, 12, 5, 3, 17);
            let path = dir.path().join(format!("{kind}.ckpt"));
            save_checkpoint(&net, &path).unwrap();
            let back = load_checkpoint(&path).unwrap();
            assert_eq!(back, net);
            let bits = |n: &ForecastNet| n.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&back), bits(&net));
            let u = random_field(12, &mut SeededRng::new(3));
            assert_eq!(back.forward_train(&u).unwrap(), net.forward_train(&u).unwrap());
            assert_eq!(checkpoint_text(&back), std::fs::read_to_string(&path).unwrap());
        }
    }

    #[test]
    fn layout() {
        let net = busy_net(ModelKind::ImplicitRelu, 6, 3, 1, 2);
        let text = checkpoint_text(&net);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("#pdecast-model v1"));
        for key in ["#kind=implicit_relu", "#grid_size=6", "#latent_dim=3", "#blocks=1", "#seed=2", "#rng=chacha8"] {
            assert!(text.lines().any(|l| l == key), "{key}");
        }
        let sections: Vec<&str> = text.lines().filter(|l| l.starts_with('[')).collect();
        assert_eq!(
            sections,
            [
                "[encoder.weight]",
                "[encoder.bias]",
                "[block.0.diag]",
                "[block.0.couplings]",
                "[block.0.bias]",
                "[decoder.weight]",
                "[decoder.bias]"
            ]
        );
        let first_value = text.lines().skip_while(|l| *l != "[encoder.weight]").nth(1).unwrap();
        let tok = first_value.split(',').next().unwrap();
        let mantissa = tok.split('e').next().unwrap().replace(['-', '.'], "");
        assert_eq!(mantissa.len(), 17);
        let diag = text.lines().skip_while(|l| *l != "[block.0.diag]").nth(1).unwrap();
        assert!(diag.split(',').all(|v| v.parse::<f64>().unwrap() <= -0.01));
    }

    #[test]
    fn malformed_checkpoints_are_rejected() {
        let net = busy_net(ModelKind::ImplicitRelu, 6, 3, 2, 4);
        let text = checkpoint_text(&net);
        let p = Path::new("model.ckpt");
        let cases = [
            text.replacen("#pdecast-model v1", "#pdecast-model v2", 1),
            text.replacen("#kind=implicit_relu", "#kind=fno", 1),
            text.replacen("#rng=chacha8", "#rng=mt19937", 1),
            text.replacen("#blocks=2", "#blocks=3", 1),
            text.replacen("[block.1.diag]", "[block.1.weight]", 1),
            text.lines().filter(|l| !l.starts_with("#seed")).collect::<Vec<_>>().join("\n"),
            {
                let mut lines: Vec<&str> = text.lines().collect();
                let i = lines.iter().position(|l| *l == "[decoder.bias]").unwrap();
                lines[i + 1] = "1.0,2.0";
                lines.join("\n")
            },
        ];
        for (i, c) in cases.iter().enumerate() {
            assert!(parse_checkpoint(c, p).is_err(), "case {i} accepted");
        }
        let positive = text.replacen(
            text.lines().skip_while(|l| *l != "[block.0.diag]").nth(1).unwrap(),
            "5.0e-1,-5.0e-1,-5.0e-1",
            1,
        );
        assert!(matches!(parse_checkpoint(&positive, p), Err(Error::Validation { .. })));
        assert!(load_checkpoint(Path::new("/nonexistent/model.ckpt")).is_err());
    }
}
