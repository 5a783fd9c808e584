use sdesr::nn::Act;
use sdesr::score::{assemble_input, ArchDescriptor, DenoiserNet};
use sdesr::{ImageTensor, NoiseSchedule, RandomSource, SdeKind, SdeModel, Shape};

fn tiny() -> DenoiserNet<f64> {
    let arch = ArchDescriptor {
        image_channels: 1,
        widths: vec![2, 4],
        time_dim: 4,
        time_hidden: 6,
    };
    let mut net = DenoiserNet::<f32>::new(arch, 3).unwrap().cast::<f64>();
    // The output layer starts at zero, which would hide every upstream gradient.
    let mut rng = RandomSource::new(11);
    for p in net.params_mut() {
        for v in p.iter_mut() {
            *v += 0.3 * rng.normal();
        }
    }
    net
}

fn loss(net: &DenoiserNet<f64>, input: &Act<f64>, ts: &[f64], r: &Act<f64>) -> f64 {
    let out = net.forward(input, ts).unwrap();
    out.data.iter().zip(&r.data).map(|(a, b)| a * b).sum()
}

#[test]
fn every_parameter_gradient_matches_central_differences() {
    let net = tiny();
    let model = SdeModel::new(SdeKind::Ve, NoiseSchedule::default());
    let shape = Shape::new(4, 4, 1);
    let mut rng = RandomSource::new(5);
    let xs: Vec<ImageTensor> = (0..2).map(|_| ImageTensor::standard_normal(shape, &mut rng)).collect();
    let ys: Vec<ImageTensor> = (0..2)
        .map(|_| ImageTensor::from_fn(shape, |_, _, _| rng.uniform(0.0, 1.0) as f32))
        .collect();
    let ts = [0.3, 0.8];
    let input: Act<f64> = assemble_input(&model, &[&xs[0], &xs[1]], &[&ys[0], &ys[1]], &ts).unwrap();
    let (out, cache) = net.forward_cached(&input, &ts).unwrap();
    let mut r = out.same_dims();
    for v in r.data.iter_mut() {
        *v = rng.normal();
    }
    let grads = net.backward(&cache, &r);
    let analytic: Vec<(String, Vec<f64>)> = grads
        .params()
        .into_iter()
        .map(|(name, _, g)| (name, g.to_vec()))
        .collect();

    let h = 1e-5;
    let mut checked = 0;
    for (k, (name, g)) in analytic.iter().enumerate() {
        for i in 0..g.len() {
            let mut plus = net.clone();
            plus.params_mut()[k][i] += h;
            let mut minus = net.clone();
            minus.params_mut()[k][i] -= h;
            let fd = (loss(&plus, &input, &ts, &r) - loss(&minus, &input, &ts, &r)) / (2.0 * h);
            let scale = fd.abs().max(g[i].abs()).max(1e-4);
            assert!(
                (fd - g[i]).abs() <= 1e-3 * scale,
                "{name}[{i}]: analytic {} vs finite difference {fd}",
                g[i]
            );
            checked += 1;
        }
    }
    assert_eq!(checked, net.num_params());
}
