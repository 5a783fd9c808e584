use proptest::prelude::*;
use sdesr::metrics::{average_cs, consistency, cosine_similarity, psnr, ssim, FeatureVector};
use sdesr::training::{DegradationSpec, DownMethod};
use sdesr::{ImageTensor, RandomSource, Shape};

fn image(seed: u64, shape: Shape) -> ImageTensor {
    let mut rng = RandomSource::new(seed);
    ImageTensor::from_fn(shape, |_, _, _| rng.uniform(0.0, 1.0) as f32)
}

fn features() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 8).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #[test]
    fn psnr_and_ssim_are_symmetric(a in any::<u64>(), b in any::<u64>()) {
        let shape = Shape::new(16, 16, 1);
        let (x, y) = (image(a, shape), image(b, shape));
        prop_assert_eq!(psnr(&x, &y).unwrap(), psnr(&y, &x).unwrap());
        prop_assert!((ssim(&x, &y).unwrap() - ssim(&y, &x).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn cosine_is_scale_invariant(v in features(), c in 0.01f64..100.0) {
        let z = FeatureVector::new(v.clone());
        let pos = FeatureVector::new(v.iter().map(|x| c * x).collect());
        let neg = FeatureVector::new(v.iter().map(|x| -c * x).collect());
        prop_assert!((cosine_similarity(&z, &pos).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert!((cosine_similarity(&z, &neg).unwrap() + 1.0).abs() <= 1e-12);
    }

    #[test]
    fn average_of_copies_is_the_single_similarity(a in features(), b in features(), l in 1usize..20) {
        let pair = (FeatureVector::new(a), FeatureVector::new(b));
        let single = cosine_similarity(&pair.0, &pair.1).unwrap();
        let (mean, std) = average_cs(&vec![pair; l]).unwrap();
        prop_assert!((mean - single).abs() <= 1e-12);
        prop_assert!(std <= 1e-12);
    }

    #[test]
    fn downsampled_reference_is_perfectly_consistent(seed in any::<u64>(), bicubic in any::<bool>()) {
        let spec = DegradationSpec {
            down_method: if bicubic { DownMethod::Bicubic } else { DownMethod::Area },
            ..DegradationSpec::default()
        };
        let sr = image(seed, Shape::new(16, 16, 1));
        let lr = spec.downsample(&sr).unwrap();
        prop_assert_eq!(consistency(&sr, &lr, &spec).unwrap(), 0.0);
    }
}
