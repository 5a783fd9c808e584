use proptest::prelude::*;
use sdesr::dataio::synth_faces;
use sdesr::score::{ArchDescriptor, DenoiserNet};
use sdesr::training::{dsm_summand, train, LambdaMode, TrainConfig, TrainState, TrainingPairs};
use sdesr::{ImageTensor, RandomSource, Shape};

proptest! {
    #[test]
    fn std_squared_weighting_reduces_to_noise_residual(seed in any::<u64>(), std in 1e-3f64..300.0) {
        let mut rng = RandomSource::new(seed);
        let shape = Shape::new(3, 2, 1);
        let s = ImageTensor::standard_normal(shape, &mut rng);
        let z = ImageTensor::standard_normal(shape, &mut rng);
        let direct: f64 = s
            .as_slice()
            .iter()
            .zip(z.as_slice())
            .map(|(&a, &b)| (std * f64::from(a) + f64::from(b)).powi(2))
            .sum();
        prop_assert_eq!(dsm_summand(&s, &z, std, LambdaMode::StdSquared), direct);
        // λ = std² times the unweighted residual to the conditional score −z/std.
        let unweighted = dsm_summand(&s, &z, std, LambdaMode::Constant);
        prop_assert!((std * std * unweighted - direct).abs() <= 1e-9 * direct.max(1.0));
    }
}

fn face_setup(steps: usize) -> (TrainConfig, TrainingPairs, TrainState) {
    let shape = Shape::new(16, 16, 1);
    let faces = synth_faces(64, shape, 9, false).unwrap();
    let cfg = TrainConfig {
        steps,
        batch_size: 8,
        warmup_steps: 100,
        learning_rate: 1e-3,
        log_every: 50,
        checkpoint_every: None,
        seed: 4,
        ..TrainConfig::default()
    };
    let pairs = TrainingPairs::new(&faces.images, &cfg.degradation).unwrap();
    let arch = ArchDescriptor {
        widths: vec![8, 16],
        ..ArchDescriptor::default()
    };
    let state = TrainState::new(DenoiserNet::new(arch, 1).unwrap());
    (cfg, pairs, state)
}

#[test]
fn same_seed_gives_identical_loss_trace() {
    let run = || {
        let (cfg, pairs, mut state) = face_setup(100);
        let trace = train(&cfg, &pairs, &mut state, &mut ()).unwrap();
        (trace, state.net)
    };
    let (a, na) = run();
    let (b, nb) = run();
    assert_eq!(a, b);
    assert_eq!(na, nb);
}

#[test]
fn toy_face_loss_halves() {
    let (cfg, pairs, mut state) = face_setup(2000);
    let trace = train(&cfg, &pairs, &mut state, &mut ()).unwrap();
    assert!(trace.iter().all(|r| r.loss.is_finite() && r.loss >= 0.0));
    assert!(state.net.all_finite());
    let window = 500 / cfg.log_every;
    let mean = |rs: &[sdesr::training::LossRecord]| rs.iter().map(|r| r.loss).sum::<f64>() / rs.len() as f64;
    let first = mean(&trace[..window]);
    let last = mean(&trace[trace.len() - window..]);
    assert!(last < 0.5 * first, "first 500 steps {first}, last 500 steps {last}");
}
