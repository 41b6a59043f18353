// Shared task builder for temporary calibration probes.

pub struct Knobs {
    pub noise: f64,
    pub occl_coef: f64,
    pub occl_prob: f64,
    pub vocab_rot: f64,
    pub vocab_noise: f64,
    pub shift_angle: f64,
    pub bias_scale: f64,
    pub tau: f64,
    pub k: usize,
    pub d_in: usize,
    pub blocks: usize,
}

pub fn solve_probe(a: &difftpt::encoder::Matrix, b: &[f64]) -> Vec<f64> {
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

pub fn rotate_pairs_probe(x: &[f64], angle: f64) -> Vec<f64> {
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

pub fn normalize_probe(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn build_task(knobs: &Knobs, seed: u64, n_test: usize) -> difftpt::SyntheticTask {
    use difftpt::encoder::{ClassVocabulary, EncoderWeights, PromptContext};
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E3779B97F4A7C15) ^ 0xABCDEF);
    let d = knobs.d_in;
    let block = d / knobs.blocks;
    let mut weights = EncoderWeights::seeded(d, 16, 16, knobs.tau, &mut rng).unwrap();
    weights.temperature = knobs.tau;
    let prompt_init = PromptContext::seeded_init(4, 16, &mut rng);

    let mut prototypes: Vec<Vec<f64>> = Vec::new();
    while prototypes.len() < knobs.k {
        let b: Vec<f64> = (0..block).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b = normalize_probe(&b);
        let scale = 1.0 / (knobs.blocks as f64).sqrt();
        let cand: Vec<f64> = (0..d).map(|i| b[i % block] * scale).collect();
        let ok = prototypes
            .iter()
            .all(|p| p.iter().zip(&cand).map(|(a, b)| a * b).sum::<f64>() < 0.8);
        if ok {
            prototypes.push(cand);
        }
    }

    let m = prompt_init.num_tokens() as f64;
    let mut prompt_sum = vec![0.0; 16];
    for t in prompt_init.tokens() {
        for (s, &x) in prompt_sum.iter_mut().zip(t) {
            *s += x;
        }
    }
    let mut tokens = Vec::new();
    for proto in &prototypes {
        let mut corrupted = rotate_pairs_probe(proto, knobs.vocab_rot);
        for c in corrupted.iter_mut() {
            *c += knobs.vocab_noise * rng.sample::<f64, _>(StandardNormal);
        }
        let target = weights.image_proj.matvec(&corrupted).unwrap();
        let pooled = solve_probe(&weights.text_proj, &target);
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

    let bias: Vec<f64> = {
        let raw: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        normalize_probe(&raw)
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
            if rng.gen_bool(knobs.occl_prob) {
                let occ_block = rng.gen_range(0..knobs.blocks);
                let per_coord = knobs.occl_coef * knobs.noise;
                for i in 0..block {
                    let sign: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    raw[occ_block * block + i] += sign * per_coord;
                }
            }
            let mut shifted = rotate_pairs_probe(&raw, knobs.shift_angle);
            for (s, &b) in shifted.iter_mut().zip(&bias) {
                *s += b;
            }
            difftpt::ImageSample::labeled(shifted, label)
        })
        .collect();

    difftpt::SyntheticTask {
        prototypes,
        samples,
        weights,
        vocab,
        prompt_init,
        seed,
    }
}
