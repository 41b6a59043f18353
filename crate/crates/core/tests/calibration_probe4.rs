// Temporary task-geometry probe; deleted once defaults are frozen.
//
// Builds tasks manually: clustered prototypes (fine-grained classes), vocab
// anchors derived through the text projection with corruption, shifted
// samples. Measures zero-shot vs filtered-marginal vs tuned accuracies.

use difftpt::augment::{assemble_view_batch, AugmentConfig};
use difftpt::benchmark::{run_method, Method, RunParameters};
use difftpt::encoder::{ClassVocabulary, EncoderWeights, Matrix, PromptContext};
use difftpt::tuner::{marginal_entropy_loss, zero_shot_probabilities};
use difftpt::{ImageSample, SyntheticTask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn solve(a: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = a.rows();
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, piv);
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = aug[row][col] / aug[col][col];
            for k in col..=n {
                aug[row][k] -= f * aug[col][k];
            }
        }
    }
    (0..n).map(|i| aug[i][n] / aug[i][i]).collect()
}

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

fn normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

struct Knobs {
    proto_spread: f64,
    noise: f64,
    vocab_rot: f64,
    vocab_noise: f64,
    shift_angle: f64,
    bias_scale: f64,
    tau: f64,
    k: usize,
    d_in: usize,
}

fn build_task(knobs: &Knobs, seed: u64, n_test: usize) -> SyntheticTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E3779B97F4A7C15));
    let d = knobs.d_in;
    let mut weights = EncoderWeights::seeded(d, 16, 16, knobs.tau, &mut rng).unwrap();
    weights.temperature = knobs.tau;
    let prompt_init = PromptContext::seeded_init(4, 16, &mut rng);

    // Clustered prototypes around a shared center.
    let center: Vec<f64> = normalize(
        &(0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect::<Vec<_>>(),
    );
    let mut prototypes = Vec::new();
    while prototypes.len() < knobs.k {
        let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let dir = normalize(&dir);
        let cand = normalize(
            &center
                .iter()
                .zip(&dir)
                .map(|(&c, &u)| c + knobs.proto_spread * u)
                .collect::<Vec<_>>(),
        );
        let ok = prototypes
            .iter()
            .all(|p: &Vec<f64>| p.iter().zip(&cand).map(|(a, b)| a * b).sum::<f64>() < 0.8);
        if ok {
            prototypes.push(cand);
        }
    }

    // Vocabulary via the projection solve, with corruption.
    let m = prompt_init.num_tokens() as f64;
    let mut prompt_sum = vec![0.0; 16];
    for t in prompt_init.tokens() {
        for (s, &x) in prompt_sum.iter_mut().zip(t) {
            *s += x;
        }
    }
    let mut tokens = Vec::new();
    for proto in &prototypes {
        let mut corrupted = rotate_pairs(proto, knobs.vocab_rot);
        for c in corrupted.iter_mut() {
            *c += knobs.vocab_noise * rng.sample::<f64, _>(StandardNormal);
        }
        let target = weights.image_proj.matvec(&corrupted).unwrap();
        let pooled = solve(&weights.text_proj, &target);
        tokens.push(
            pooled
                .iter()
                .zip(&prompt_sum)
                .map(|(&p, &s)| (m + 1.0) * p - s)
                .collect::<Vec<f64>>(),
        );
    }
    let names = (0..tokens.len()).map(|i| format!("c{i}")).collect();
    let vocab = ClassVocabulary::new(tokens, names).unwrap();

    // Shifted samples.
    let bias: Vec<f64> = {
        let raw: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        normalize(&raw)
            .into_iter()
            .map(|x| x * knobs.bias_scale)
            .collect()
    };
    let samples = (0..n_test)
        .map(|_| {
            let label = rng.gen_range(0..knobs.k);
            let mut raw = prototypes[label].clone();
            for r in raw.iter_mut() {
                *r += knobs.noise * rng.sample::<f64, _>(StandardNormal);
            }
            let mut shifted = rotate_pairs(&raw, knobs.shift_angle);
            for (s, &b) in shifted.iter_mut().zip(&bias) {
                *s += b;
            }
            ImageSample::labeled(shifted, label)
        })
        .collect();

    SyntheticTask {
        prototypes,
        samples,
        weights,
        vocab,
        prompt_init,
        seed,
    }
}

fn evaluate(knobs: &Knobs, seeds: u64, n_test: usize) -> [f64; 4] {
    let mut acc = [0.0f64; 4];
    for seed in 0..seeds {
        let task = build_task(knobs, seed, n_test);
        let rp = RunParameters {
            aug: AugmentConfig {
                seed,
                ..AugmentConfig::default()
            },
            ..RunParameters::default()
        };
        let mut zs_hits = 0.0;
        let mut marg_hits = 0.0;
        for (i, s) in task.samples.iter().enumerate() {
            let label = s.label.unwrap();
            if zero_shot_probabilities(s, &task.prompt_init, &task.vocab, &task.weights)
                .unwrap()
                .argmax()
                == label
            {
                zs_hits += 1.0;
            }
            let views = assemble_view_batch(s, &rp.aug, &task.weights, None, i as u64).unwrap();
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
    acc
}

#[test]
#[ignore]
fn probe_clustered_prototypes() {
    let seeds = 5;
    let n_test = 150;
    println!("spread noise  tau |    zs marg@0   tpt  diff | d-z t-z d-t");
    for proto_spread in [0.5f64, 0.7, 1.0] {
        for noise in [0.15f64, 0.25] {
            for tau in [0.07f64, 0.15] {
                let knobs = Knobs {
                    proto_spread,
                    noise,
                    vocab_rot: 0.12,
                    vocab_noise: 0.06,
                    shift_angle: 0.5,
                    bias_scale: 0.6,
                    tau,
                    k: 10,
                    d_in: 32,
                };
                let [zs, marg, tpt, diff] = evaluate(&knobs, seeds, n_test);
                println!(
                    "{proto_spread:6} {noise:5} {tau:4} | {zs:.3} {marg:.3}  {tpt:.3} {diff:.3} | {:+.3} {:+.3} {:+.3}",
                    diff - zs,
                    tpt - zs,
                    diff - tpt
                );
            }
        }
    }
}
