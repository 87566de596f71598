use mixsr::degradation::add_gaussian_noise;
use mixsr::image::{random_anchor, random_patch, ImagePair};
use mixsr::metrics::psnr;
use mixsr::mixup::mixup_pair;
use mixsr::rng::Stream;
use mixsr::{ImageBuffer, Rng};

fn std_dev(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[test]
fn mixed_noise_shrinks_by_sqrt_two() {
    // 100 x 100 x 3 x 4 = 1.2e5 samples at mid-gray, far from the clamp
    let sigma = 0.05;
    let clean = ImageBuffer::filled(100, 100, 0.5);
    let root = Rng::new(17);
    let mut residuals = Vec::new();
    for k in 0..4 {
        let ni = add_gaussian_noise(&clean, sigma, &mut root.derive(Stream::Noise, 2 * k)).unwrap();
        let nj = add_gaussian_noise(&clean, sigma, &mut root.derive(Stream::Noise, 2 * k + 1)).unwrap();
        let a = ImagePair::new(ni.clone(), ni).unwrap();
        let b = ImagePair::new(nj.clone(), nj).unwrap();
        let mixed = mixup_pair(&a, &b, 0.5).unwrap();
        residuals.extend(mixed.lr().samples().iter().map(|&v| v as f64 - 0.5));
    }
    let measured = std_dev(&residuals);
    let expected = sigma / 2f64.sqrt();
    assert!((measured / expected - 1.0).abs() < 0.03, "measured {measured}, expected {expected}");
}

#[test]
fn psnr_decreases_with_noise_level() {
    let clean = ImageBuffer::from_fn(48, 48, |y, x, c| 0.2 + 0.6 * ((y + 2 * x + c) % 17) as f32 / 16.0);
    let mean_psnr = |sigma: f64| {
        (0..20)
            .map(|seed| {
                let noisy = add_gaussian_noise(&clean, sigma, &mut Rng::new(seed)).unwrap();
                psnr(&clean, &noisy).unwrap().to_f64()
            })
            .sum::<f64>()
            / 20.0
    };
    let scores: Vec<f64> = [0.01, 0.05, 0.1].iter().map(|&s| mean_psnr(s)).collect();
    assert!(scores[0] > scores[1] && scores[1] > scores[2], "{scores:?}");
}

/// Upper critical value of chi-square via the Wilson-Hilferty cube approximation.
fn chi_square_critical(df: f64, z: f64) -> f64 {
    let k = 2.0 / (9.0 * df);
    df * (1.0 - k + z * k.sqrt()).powi(3)
}

#[test]
fn random_patch_anchor_is_uniform() {
    let positions = 200 - 128 + 1;
    let mut counts = vec![0u32; positions * positions];
    let mut rng = Rng::new(99);
    let draws = 100_000;
    for _ in 0..draws {
        let (top, left) = random_anchor((200, 200), 128, &mut rng).unwrap();
        counts[top * positions + left] += 1;
    }
    let expected = draws as f64 / counts.len() as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // z for the upper 1% tail
    let critical = chi_square_critical((counts.len() - 1) as f64, 2.326_348);
    assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
}

#[test]
fn random_patch_is_reproducible_and_colocated() {
    let lr = ImageBuffer::from_fn(40, 30, |y, x, c| ((y * 30 + x) * 3 + c) as f32 / 3600.0);
    let pair = ImagePair::new(lr.clone(), lr).unwrap();
    let a = random_patch(&pair, 16, &mut Rng::new(5)).unwrap();
    let b = random_patch(&pair, 16, &mut Rng::new(5)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lr(), a.hr());
}

#[test]
fn wilson_hilferty_matches_tabulated_values() {
    // df = 100, p = 0.01 critical value is 135.807
    assert!((chi_square_critical(100.0, 2.326_348) - 135.807).abs() < 0.1);
}
