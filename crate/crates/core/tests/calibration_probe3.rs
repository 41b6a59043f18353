// Temporary mechanism probe; deleted once defaults are frozen.
//
// Rebuilds task samples with a contiguous occlusion window (structured
// corruption that crops can remove) and measures whether the filtered
// marginal and the tuned predictions beat zero-shot.

use difftpt::augment::{assemble_view_batch, AugmentConfig};
use difftpt::benchmark::{make_synthetic_task, run_method, Method, RunParameters, TaskParams};
use difftpt::tuner::{marginal_entropy_loss, zero_shot_probabilities};
use difftpt::ImageSample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rotate_pairs(x: &[f64], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    let mut out = x.to_vec();
    let mut i = 0;
    while i + 1 < out.len() {
        let (a, b) = (out[i], out[i + 1]);
        out[i] = c * a - s * b;
        out[i + 1] = s * a + c * b;
        i += 2;
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn rebuild_samples(
    task: &mut difftpt::SyntheticTask,
    seed: u64,
    n_test: usize,
    noise: f64,
    occl_window: usize,
    occl_mag: f64,
    shift_angle: f64,
    bias_scale: f64,
) {
    let dim = task.prototypes[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBEEF);
    let bias: Vec<f64> = {
        let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        raw.into_iter().map(|x| x * bias_scale / norm).collect()
    };
    task.samples = (0..n_test)
        .map(|_| {
            let label = rng.gen_range(0..task.prototypes.len());
            let mut raw = task.prototypes[label].clone();
            for r in raw.iter_mut() {
                *r += noise * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            // Contiguous occlusion window.
            let start = rng.gen_range(0..dim);
            for o in 0..occl_window {
                let sign: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                raw[(start + o) % dim] += sign * occl_mag;
            }
            let mut shifted = rotate_pairs(&raw, shift_angle);
            for (s, &b) in shifted.iter_mut().zip(&bias) {
                *s += b;
            }
            ImageSample::labeled(shifted, label)
        })
        .collect();
}

#[test]
#[ignore]
fn probe_occlusion_recovery() {
    let seeds = 5u64;
    let n_test = 150;
    println!("occl_mag win crop_lo |    zs marg@0   tpt  diff | d-z t-z d-t | стd_cos diff_cos");
    for occl_mag in [0.4f64, 0.7, 1.0] {
        for occl_window in [6usize, 8] {
            for crop_lo in [0.4f64, 0.6] {
                let mut acc = [0.0f64; 4];
                let mut cos_means = [0.0f64; 2];
                for seed in 0..seeds {
                    let tp = TaskParams {
                        seed,
                        n_test: 1,
                        ..TaskParams::default()
                    };
                    let mut task = make_synthetic_task(&tp).unwrap();
                    rebuild_samples(
                        &mut task, seed, n_test, 0.15, occl_window, occl_mag, 0.5, 0.3,
                    );
                    let rp = RunParameters {
                        aug: AugmentConfig {
                            crop_fraction_range: (crop_lo, 1.0),
                            seed,
                            ..AugmentConfig::default()
                        },
                        ..RunParameters::default()
                    };
                    let mut zs_hits = 0.0;
                    let mut marg_hits = 0.0;
                    for (i, s) in task.samples.iter().enumerate() {
                        let label = s.label.unwrap();
                        let zs = zero_shot_probabilities(
                            s,
                            &task.prompt_init,
                            &task.vocab,
                            &task.weights,
                        )
                        .unwrap();
                        if zs.argmax() == label {
                            zs_hits += 1.0;
                        }
                        let views =
                            assemble_view_batch(s, &rp.aug, &task.weights, None, i as u64)
                                .unwrap();
                        let eval = marginal_entropy_loss(
                            &task.prompt_init,
                            &task.vocab,
                            &task.weights,
                            &views,
                            &rp.tuning,
                        )
                        .unwrap();
                        if eval.marginal.argmax() == label {
                            marg_hits += 1.0;
                        }
                        if i == 0 {
                            // Mean cosine of each family to the original.
                            let orig = views.original().as_slice().to_vec();
                            let mut sums = [0.0f64; 2];
                            let mut counts = [0.0f64; 2];
                            for (v, src) in
                                views.embeddings().iter().zip(views.sources())
                            {
                                let c: f64 = v
                                    .as_slice()
                                    .iter()
                                    .zip(&orig)
                                    .map(|(a, b)| a * b)
                                    .sum();
                                match src {
                                    difftpt::ViewSource::Standard => {
                                        sums[0] += c;
                                        counts[0] += 1.0;
                                    }
                                    difftpt::ViewSource::Diffusion => {
                                        sums[1] += c;
                                        counts[1] += 1.0;
                                    }
                                    _ => {}
                                }
                            }
                            cos_means[0] += sums[0] / counts[0] / (seeds as f64);
                            cos_means[1] += sums[1] / counts[1] / (seeds as f64);
                        }
                    }
                    acc[0] += zs_hits / n_test as f64;
                    acc[1] += marg_hits / n_test as f64;
                    acc[2] += run_method(Method::TptStandard, &task, &rp)
                        .unwrap()
                        .result
                        .accuracy;
                    acc[3] += run_method(Method::DiffTpt, &task, &rp)
                        .unwrap()
                        .result
                        .accuracy;
                }
                for a in acc.iter_mut() {
                    *a /= seeds as f64;
                }
                println!(
                    "{occl_mag:8} {occl_window:3} {crop_lo:7} | {:.3} {:.3}  {:.3} {:.3} | {:+.3} {:+.3} {:+.3} | {:.3} {:.3}",
                    acc[0], acc[1], acc[2], acc[3],
                    acc[3] - acc[0], acc[2] - acc[0], acc[3] - acc[2],
                    cos_means[0], cos_means[1]
                );
            }
        }
    }
}
