mod common;

use common::*;
use mcsr::image::Image;
use mcsr::kspace::{degrade, DegradeSpec};
use mcsr::metrics::*;
use mcsr::phantom::make_phantom_pair;
use mcsr::rng;
use rand::Rng;

#[test]
fn ssim_and_psnr_match_brute_force_on_random_pairs() {
    for seed in 0..50 {
        let x = random_image(16, 16, 2 * seed);
        let y = random_image(16, 16, 2 * seed + 1);
        let s = ssim(&x, &y).unwrap();
        assert!((s - ssim_oracle(&x, &y)).abs() < 1e-12, "seed {seed}");
        assert!((s - ssim(&y, &x).unwrap()).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&s));
        assert!((psnr(&x, &y).unwrap() - psnr_oracle(&x, &y)).abs() < 1e-10);
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
    }
}

#[test]
fn ssim_of_an_inverted_checkerboard_is_negative() {
    let x = Image::from_fn(7, 7, |i, j| ((i + j) % 2) as f64);
    let y = x.map(|v| 1.0 - v);
    // One window: μx = 25/49, μy = 24/49, σx² = σy² = 600/2401 = −σxy.
    let (mx, my, v) = (25.0 / 49.0, 24.0 / 49.0, 600.0 / 2401.0);
    let (c1, c2) = (1e-4, 9e-4);
    let want = (2.0 * mx * my + c1) * (-2.0 * v + c2) / ((mx * mx + my * my + c1) * (2.0 * v + c2));
    let got = ssim(&x, &y).unwrap();
    assert!(got < 0.0);
    assert!((got - want).abs() < 1e-14);
}

#[test]
fn ssim_rejects_small_or_mismatched_images() {
    assert!(ssim(&Image::zeros(6, 9), &Image::zeros(6, 9)).is_err());
    assert!(ssim(&Image::zeros(8, 8), &Image::zeros(8, 9)).is_err());
    assert!(psnr(&Image::zeros(8, 8), &Image::zeros(9, 8)).is_err());
}

#[test]
fn psnr_examples() {
    let x = Image::from_fn(8, 8, |i, j| (i * 8 + j) as f64 / 128.0);
    let y = x.map(|v| v + 0.1);
    assert!((psnr(&x, &y).unwrap() - 20.0).abs() < 1e-10);
    assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
    assert_eq!(format_psnr(f64::INFINITY), "inf");
}

#[test]
fn psnr_decreases_with_uniform_noise_amplitude() {
    let x = random_image(32, 32, 4);
    let mut r = rng::stream(9, "test/uniform", 0);
    let u = Image::from_fn(32, 32, |_, _| r.random_range(-1.0..1.0));
    let mut last = f64::INFINITY;
    for k in 1..=10 {
        let p = psnr(&x, &plus_scaled(&x, &u, 0.01 * k as f64)).unwrap();
        assert!(p < last);
        last = p;
    }
}

#[test]
fn ifc_identity_exceeds_noisy_and_noise_is_monotone() {
    let sigmas = [0.0125, 0.025, 0.05, 0.1];
    let mut compliant = 0;
    for seed in 0..50 {
        let hr = make_phantom_pair(1000 + seed).primary_hr;
        let z = gaussian_field(hr.height(), hr.width(), seed);
        let clean = ifc(&hr, &hr).unwrap();
        let scores: Vec<f64> = sigmas
            .iter()
            .map(|&s| ifc(&hr, &plus_scaled(&hr, &z, s)).unwrap())
            .collect();
        assert!(clean > scores[2], "seed {seed}: {clean} vs {}", scores[2]);
        if clean > scores[0] && scores.windows(2).all(|w| w[1] <= w[0]) {
            compliant += 1;
        }
    }
    assert!(compliant >= 48, "{compliant}/50");
}

#[test]
fn ifc_of_a_constant_distortion_is_near_zero() {
    let hr = make_phantom_pair(3).primary_hr;
    let flat = Image::from_fn(hr.height(), hr.width(), |_, _| 0.4);
    assert!(ifc(&hr, &flat).unwrap().abs() < 1e-3);
    assert_eq!(ifc(&flat, &hr).unwrap(), 0.0);
    assert!(ifc(&Image::zeros(31, 40), &Image::zeros(31, 40)).is_err());
}

#[test]
fn stronger_degradation_scores_lower_ssim() {
    let mut ok = 0;
    let n = 40;
    for seed in 0..n {
        let hr = make_phantom_pair(2000 + seed).primary_hr;
        let lr2 = degrade(&hr, &DegradeSpec::new(2).unwrap()).unwrap();
        let lr4 = degrade(&hr, &DegradeSpec::new(4).unwrap()).unwrap();
        if ssim(&hr, &lr2).unwrap() > ssim(&hr, &lr4).unwrap() {
            ok += 1;
        }
    }
    assert!(ok as f64 >= 0.95 * n as f64, "{ok}/{n}");
}

#[test]
fn summary_matches_independent_statistics() {
    let v: Vec<f64> = (0..13).map(|k| ((k * 37 % 11) as f64).sqrt() - 1.3).collect();
    let s = Summary::of(&v);
    let mean = v.iter().sum::<f64>() / 13.0;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 12.0;
    assert!((s.mean - mean).abs() < 1e-12);
    assert!((s.std - var.sqrt()).abs() < 1e-12);
    assert_eq!(s.n, 13);
    let inf = Summary::of(&[f64::INFINITY, f64::INFINITY]);
    assert_eq!((inf.mean, inf.std), (f64::INFINITY, 0.0));
    assert!(Summary::of(&[1.0]).std.is_nan());
}

fn row(id: &str, variant: &str, factor: u32, seed: u64) -> MetricRow {
    let x = random_image(32, 32, seed);
    let y = random_image(32, 32, seed + 100);
    MetricRow::compute(id, variant, factor, &x, &y).unwrap()
}

#[test]
fn report_csv_round_trips_and_groups() {
    let mut report = MetricReport::default();
    for (k, id) in ["a", "b", "c"].iter().enumerate() {
        for variant in ["sisr", "high_level"] {
            report.rows.push(row(id, variant, 2, k as u64));
        }
    }
    let hr = random_image(32, 32, 7);
    report.rows.push(MetricRow::compute("d", "hr", 4, &hr, &hr).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    report.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("image_id,variant,factor,ssim,psnr_db,ifc\n"));
    assert!(text.contains(",inf,"));
    let back = MetricReport::read_csv(&path).unwrap();
    assert_eq!(back, report);

    let groups = report.summaries();
    assert_eq!(groups.len(), 3);
    let g = &groups[1];
    assert_eq!((g.variant.as_str(), g.factor, g.ssim.n), ("high_level", 2, 3));
    let vals: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.variant == "high_level")
        .map(|r| r.psnr_db)
        .collect();
    let s = Summary::of(&vals);
    assert_eq!(g.psnr, s);
    assert_eq!(groups[2].ssim.mean, 1.0);
    assert!(report.table().contains("high_level"));
}

#[test]
fn evaluate_images_counts_rows_and_handles_identity() {
    let hrs: Vec<(String, Image)> = (0..3).map(|k| (format!("p{k}"), random_image(32, 32, k))).collect();
    let variants = ["hr".to_string(), "noisy".to_string()];
    let report = evaluate_images(&hrs, &variants, &[2, 4], |variant, _factor, hr| {
        Ok(if variant == "hr" {
            hr.clone()
        } else {
            hr.map(|v| v * 0.9)
        })
    })
    .unwrap();
    assert_eq!(report.rows.len(), 3 * 2 * 2);
    for r in report.rows.iter().filter(|r| r.variant == "hr") {
        assert_eq!(r.ssim, 1.0);
        assert_eq!(r.psnr_db, f64::INFINITY);
    }
    assert!(evaluate_images(&[], &variants, &[2], |_, _, hr| Ok(hr.clone())).is_err());
}

#[test]
fn evaluate_corpus_scores_reassembled_images() {
    use mcsr::dataset::{build_dataset, DatasetManifest, Split};
    let dir = tempfile::tempdir().unwrap();
    let mut m = DatasetManifest::synthetic(1, 2, 50, &[2]);
    m.phantom_side = 128;
    let store = build_dataset(&m, dir.path(), &dir.path().join("store")).unwrap();
    let variants = ["hr".to_string(), "lr".to_string()];
    let report = evaluate_corpus(&store, Split::Test, &variants, &[2], |v, t| {
        Ok(if v == "hr" { t.hr.clone() } else { t.lr.clone() })
    })
    .unwrap();
    assert_eq!(report.rows.len(), 2 * 2);
    for r in &report.rows {
        if r.variant == "hr" {
            assert_eq!((r.ssim, r.psnr_db), (1.0, f64::INFINITY));
        } else {
            assert!(r.ssim < 1.0 && r.psnr_db.is_finite());
        }
    }
    assert!(evaluate_corpus(&store, Split::Test, &variants, &[3], |_, t| Ok(t.hr.clone())).is_err());
}
