// Temporary view-level instrumentation; deleted once defaults are frozen.

use difftpt::augment::{standard_augment, AugmentConfig};
use difftpt::encoder::{class_probabilities, encode_image, encode_text};
use difftpt::numerics::shannon_entropy;
use difftpt::ImageSample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

include!("probe_common/task_builder.rs");

#[test]
#[ignore]
fn probe_occluded_sample_views() {
    let knobs = Knobs {
        noise: 0.12,
        occl_coef: 5.0,
        occl_prob: 0.0, // samples built manually below
        vocab_rot: 0.12,
        vocab_noise: 0.06,
        shift_angle: 0.5,
        bias_scale: 0.3,
        tau: 0.07,
        k: 10,
        d_in: 32,
        blocks: 4,
    };
    let task = build_task(&knobs, 0, 1);
    let text = encode_text(&task.prompt_init, &task.vocab, &task.weights).unwrap();
    let aug = AugmentConfig {
        crop_fraction_range: (0.5, 1.0),
        noise_sigma: 0.05,
        seed: 0,
        ..AugmentConfig::default()
    };

    let d = 32;
    let block = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let bias: Vec<f64> = {
        let raw: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        normalize_probe(&raw)
            .into_iter()
            .map(|x| x * knobs.bias_scale)
            .collect()
    };

    for sample_idx in 0..6u64 {
        let label = rng.gen_range(0..knobs.k);
        let mut raw = task.prototypes[label].clone();
        for r in raw.iter_mut() {
            *r += knobs.noise * rng.sample::<f64, _>(StandardNormal);
        }
        let occ_block = rng.gen_range(0..4usize);
        for i in 0..block {
            let sign: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            raw[occ_block * block + i] += sign * knobs.occl_coef * knobs.noise;
        }
        let mut shifted = rotate_pairs_probe(&raw, knobs.shift_angle);
        for (s, &b) in shifted.iter_mut().zip(&bias) {
            *s += b;
        }
        let sample = ImageSample::labeled(shifted, label);

        let orig = encode_image(&sample, &task.weights).unwrap();
        let p0 = class_probabilities(&orig, &text, knobs.tau).unwrap();
        println!(
            "--- occluded sample {sample_idx}: label {label} occ_block {occ_block} | orig pred {} p {:.2} H {:.2}",
            p0.argmax(),
            p0.as_slice()[p0.argmax()],
            shannon_entropy(&p0)
        );

        // Regenerate the crop geometry exactly as standard_augment does to
        // know each view's window, then score the views.
        let views = standard_augment(&sample, 64, &aug, &task.weights, sample_idx).unwrap();
        let mut rows = Vec::new();
        for (vi, v) in views.iter().enumerate() {
            // Recover the window from the per-view stream.
            let mut vrng = difftpt::streams::stream_rng(
                aug.seed,
                &[difftpt::streams::TAG_STANDARD_VIEW, sample_idx, vi as u64],
            );
            let c = vrng.gen_range(0.5..1.0);
            let window = (((1.0 - c) * d as f64).round() as usize).min(d - 1);
            let start = if window == 0 { 0 } else { vrng.gen_range(0..=d - window) };
            let occ_lo = occ_block * block;
            let occ_hi = occ_lo + block;
            let overlap = (occ_hi.min(start + window)).saturating_sub(occ_lo.max(start));
            let p = class_probabilities(v, &text, knobs.tau).unwrap();
            rows.push((
                overlap,
                shannon_entropy(&p),
                p.argmax(),
                p.argmax() == label,
            ));
        }
        let full: Vec<_> = rows.iter().filter(|r| r.0 == 8).collect();
        let partial: Vec<_> = rows.iter().filter(|r| r.0 > 0 && r.0 < 8).collect();
        let none: Vec<_> = rows.iter().filter(|r| r.0 == 0).collect();
        let stats = |set: &[&(usize, f64, usize, bool)]| {
            if set.is_empty() {
                return "n=0".to_string();
            }
            let correct = set.iter().filter(|r| r.3).count();
            let mean_h = set.iter().map(|r| r.1).sum::<f64>() / set.len() as f64;
            format!("n={} correct={} meanH={:.2}", set.len(), correct, mean_h)
        };
        println!("  full-cover: {}", stats(&full));
        println!("  partial   : {}", stats(&partial));
        println!("  no-overlap: {}", stats(&none));
    }
}
