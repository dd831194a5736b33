//! Synthetic paraphrase benchmark.
//!
//! Every concept is a latent `z ~ N(0, I)`. Its image is `A u + σx ε` with
//! `u = z + γ tanh(C z)` and its caption under template `j` is `B_j z + σt ε`;
//! `A`, `C` and every `B_j` are drawn once per seed. Two templates of the same
//! latent play the role of a caption and its paraphrase. With `γ = 0` images
//! are linear in the latent.

use serde::{Deserialize, Serialize};

use crate::error::{DuoError, Result};
use crate::rng::{SeededRng, Stream};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub latent_dim: usize,
    pub image_dim: usize,
    pub text_dim: usize,
    /// Number of caption templates, at least 2.
    pub templates: usize,
    pub sigma_image: f64,
    pub sigma_text: f64,
    /// Strength `γ` of the warp images apply to the latent before mixing.
    pub image_warp: f64,
    /// Latent-recovery examples for text-base pretraining, spread evenly over
    /// all templates.
    pub n_pretrain: usize,
    /// Image–caption pairs for contrastive training.
    pub n_train: usize,
    pub n_gallery: usize,
    pub n_queries: usize,
    /// Template weights for contrastive captions; `None` puts all mass on the
    /// first template.
    pub template_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            image_dim: 32,
            text_dim: 64,
            templates: 2,
            sigma_image: 0.3,
            sigma_text: 0.3,
            image_warp: 3.0,
            n_pretrain: 4000,
            n_train: 2048,
            n_gallery: 500,
            n_queries: 200,
            template_weights: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DuoError::InvalidConfig(m.into()));
        if self.templates < 2 {
            return bad("need at least 2 templates");
        }
        if self.latent_dim == 0 || self.image_dim == 0 || self.text_dim == 0 {
            return bad("dimensions must be at least 1");
        }
        if !(self.sigma_image >= 0.0 && self.sigma_text >= 0.0) {
            return bad("noise sigmas must be non-negative");
        }
        if !self.image_warp.is_finite() {
            return bad("image_warp must be finite");
        }
        if self.n_queries > self.n_gallery {
            return bad("n_queries cannot exceed n_gallery");
        }
        if let Some(w) = &self.template_weights {
            if w.len() != self.templates || w.iter().any(|&x| !(x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return bad("template_weights must give one non-negative weight per template");
            }
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        self.template_weights.clone().unwrap_or_else(|| {
            let mut w = vec![0.0; self.templates];
            w[0] = 1.0;
            w
        })
    }
}

/// Inputs with latent regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionCorpus {
    pub inputs: Matrix<f64>,
    pub targets: Matrix<f64>,
    pub templates: Vec<usize>,
}

/// Image–caption training pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCorpus {
    pub images: Matrix<f64>,
    pub texts: Matrix<f64>,
    pub latents: Matrix<f64>,
    pub templates: Vec<usize>,
}

impl PairCorpus {
    pub fn len(&self) -> usize {
        self.images.rows
    }

    pub fn is_empty(&self) -> bool {
        self.images.rows == 0
    }
}

/// Evaluation split: query `i` and paraphrase `i` describe gallery image `i`
/// with the first and second template respectively.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthBenchmark {
    pub gallery: Matrix<f64>,
    pub queries: Matrix<f64>,
    pub paraphrases: Matrix<f64>,
    pub latents: Matrix<f64>,
    pub relevance: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub config: SynthConfig,
    /// `A`, image_dim x latent_dim.
    pub image_map: Matrix<f64>,
    /// `C`, latent_dim x latent_dim, inside the image warp.
    pub warp_map: Matrix<f64>,
    /// `B_j`, text_dim x latent_dim each.
    pub text_maps: Vec<Matrix<f64>>,
    pub pretrain: RegressionCorpus,
    pub pairs: PairCorpus,
    pub bench: SynthBenchmark,
}

struct Renderer<'a> {
    cfg: &'a SynthConfig,
    image_map: &'a Matrix<f64>,
    warp_map: &'a Matrix<f64>,
    text_maps: &'a [Matrix<f64>],
}

impl Renderer<'_> {
    fn latent(&self, rng: &mut SeededRng) -> Vec<f64> {
        (0..self.cfg.latent_dim).map(|_| rng.gaussian()).collect()
    }

    fn render(map: &Matrix<f64>, z: &[f64], sigma: f64, rng: &mut SeededRng, out: &mut Vec<f64>) {
        for r in 0..map.rows {
            let clean: f64 = map.row(r).iter().zip(z).map(|(a, b)| a * b).sum();
            out.push(clean + sigma * rng.gaussian());
        }
    }

    fn image(&self, z: &[f64], rng: &mut SeededRng, out: &mut Vec<f64>) {
        let u = warp(self.warp_map, self.cfg.image_warp, z);
        Self::render(self.image_map, &u, self.cfg.sigma_image, rng, out)
    }

    fn text(&self, z: &[f64], template: usize, rng: &mut SeededRng, out: &mut Vec<f64>) {
        Self::render(&self.text_maps[template], z, self.cfg.sigma_text, rng, out)
    }
}

/// `u = z + γ tanh(C z)`; the identity when `γ = 0`.
pub fn warp(c: &Matrix<f64>, gamma: f64, z: &[f64]) -> Vec<f64> {
    if gamma == 0.0 {
        return z.to_vec();
    }
    z.iter()
        .enumerate()
        .map(|(k, &zk)| zk + gamma * c.row(k).iter().zip(z).map(|(a, b)| a * b).sum::<f64>().tanh())
        .collect()
}

fn random_map(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix<f64> {
    let scale = 1.0 / (cols as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| scale * rng.gaussian())
}

fn sample_template(weights: &[f64], rng: &mut SeededRng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.uniform() * total;
    for (j, &w) in weights.iter().enumerate() {
        if u < w {
            return j;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Generates all splits. Each split draws from its own random stream, so
/// resizing one split leaves the others unchanged.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let (dz, dx, dt) = (cfg.latent_dim, cfg.image_dim, cfg.text_dim);

    let mut rng = SeededRng::new(cfg.seed, Stream::Mixing);
    let image_map = random_map(dx, dz, &mut rng);
    let text_maps: Vec<_> = (0..cfg.templates).map(|_| random_map(dt, dz, &mut rng)).collect();
    let warp_map = random_map(dz, dz, &mut rng).map(|v| 2.0 * v);
    let r = Renderer { cfg, image_map: &image_map, warp_map: &warp_map, text_maps: &text_maps };

    let mut rng = SeededRng::new(cfg.seed, Stream::Pretrain);
    let (mut inputs, mut targets, mut templates) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..cfg.n_pretrain {
        let z = r.latent(&mut rng);
        let j = i % cfg.templates;
        r.text(&z, j, &mut rng, &mut inputs);
        targets.extend_from_slice(&z);
        templates.push(j);
    }
    let pretrain = RegressionCorpus {
        inputs: Matrix::from_vec(cfg.n_pretrain, dt, inputs),
        targets: Matrix::from_vec(cfg.n_pretrain, dz, targets),
        templates,
    };

    let mut rng = SeededRng::new(cfg.seed, Stream::Pairs);
    let weights = cfg.weights();
    let (mut images, mut texts, mut latents, mut templates) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..cfg.n_train {
        let z = r.latent(&mut rng);
        let j = sample_template(&weights, &mut rng);
        r.image(&z, &mut rng, &mut images);
        r.text(&z, j, &mut rng, &mut texts);
        latents.extend_from_slice(&z);
        templates.push(j);
    }
    let pairs = PairCorpus {
        images: Matrix::from_vec(cfg.n_train, dx, images),
        texts: Matrix::from_vec(cfg.n_train, dt, texts),
        latents: Matrix::from_vec(cfg.n_train, dz, latents),
        templates,
    };

    let mut rng = SeededRng::new(cfg.seed, Stream::Eval);
    let (mut gallery, mut latents) = (Vec::new(), Vec::new());
    let (mut queries, mut paraphrases) = (Vec::new(), Vec::new());
    for i in 0..cfg.n_gallery {
        let z = r.latent(&mut rng);
        r.image(&z, &mut rng, &mut gallery);
        if i < cfg.n_queries {
            r.text(&z, 0, &mut rng, &mut queries);
            r.text(&z, 1, &mut rng, &mut paraphrases);
        }
        latents.extend_from_slice(&z);
    }
    let bench = SynthBenchmark {
        gallery: Matrix::from_vec(cfg.n_gallery, dx, gallery),
        queries: Matrix::from_vec(cfg.n_queries, dt, queries),
        paraphrases: Matrix::from_vec(cfg.n_queries, dt, paraphrases),
        latents: Matrix::from_vec(cfg.n_gallery, dz, latents),
        relevance: (0..cfg.n_queries).map(|i| vec![i]).collect(),
    };

    Ok(SynthData { config: cfg.clone(), image_map, warp_map, text_maps, pretrain, pairs, bench })
}

/// Least-squares latent estimate of each feature row: `(MᵀM)⁻¹ Mᵀ x` for a
/// `features x latent` map `M`.
pub fn decode_latents(map: &Matrix<f64>, x: &Matrix<f64>) -> Result<Matrix<f64>> {
    if x.cols != map.rows {
        return Err(DuoError::ShapeMismatch { expected: map.rows, found: x.cols });
    }
    let dz = map.cols;
    // normal equations augmented with Mᵀ, reduced to [I | (MᵀM)⁻¹Mᵀ]
    let width = dz + map.rows;
    let mut a = vec![0.0; dz * width];
    for i in 0..dz {
        for j in 0..dz {
            a[i * width + j] = (0..map.rows).map(|r| map.get(r, i) * map.get(r, j)).sum();
        }
        for r in 0..map.rows {
            a[i * width + dz + r] = map.get(r, i);
        }
    }
    for c in 0..dz {
        let pivot = (c..dz).max_by(|&p, &q| a[p * width + c].abs().total_cmp(&a[q * width + c].abs())).unwrap_or(c);
        if a[pivot * width + c].abs() < 1e-12 {
            return Err(DuoError::InvalidConfig("mixing map is rank deficient".into()));
        }
        for j in 0..width {
            a.swap(c * width + j, pivot * width + j);
        }
        let inv = 1.0 / a[c * width + c];
        for j in 0..width {
            a[c * width + j] *= inv;
        }
        for r in (0..dz).filter(|&r| r != c) {
            let f = a[r * width + c];
            if f != 0.0 {
                for j in 0..width {
                    a[r * width + j] -= f * a[c * width + j];
                }
            }
        }
    }
    Ok(Matrix::from_fn(x.rows, dz, |i, k| {
        x.row(i).iter().enumerate().map(|(r, &v)| a[k * width + dz + r] * v).sum()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig { n_pretrain: 40, n_train: 30, n_gallery: 20, n_queries: 10, ..SynthConfig::default() }
    }

    #[test]
    fn noiseless_texts_are_linear_images_of_the_latent() {
        let cfg = SynthConfig { sigma_image: 0.0, sigma_text: 0.0, ..small() };
        let d = synth_generate(&cfg).unwrap();
        for i in 0..cfg.n_queries {
            let z = d.bench.latents.row(i);
            for (template, texts) in [(0, &d.bench.queries), (1, &d.bench.paraphrases)] {
                let b = &d.text_maps[template];
                for r in 0..cfg.text_dim {
                    let expect: f64 = b.row(r).iter().zip(z).map(|(a, b)| a * b).sum();
                    assert_eq!(texts.get(i, r), expect);
                }
            }
        }
    }

    #[test]
    fn decoding_noiseless_features_recovers_the_latent() {
        let cfg = SynthConfig { sigma_image: 0.0, sigma_text: 0.0, image_warp: 0.0, ..small() };
        let d = synth_generate(&cfg).unwrap();
        let z = decode_latents(&d.text_maps[1], &d.bench.paraphrases).unwrap();
        let zi = decode_latents(&d.image_map, &d.bench.gallery).unwrap();
        for i in 0..cfg.n_queries {
            for k in 0..cfg.latent_dim {
                assert!((z.get(i, k) - d.bench.latents.get(i, k)).abs() < 1e-9);
                assert!((zi.get(i, k) - d.bench.latents.get(i, k)).abs() < 1e-9);
            }
        }
        assert!(decode_latents(&d.image_map, &d.bench.queries).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(synth_generate(&small()).unwrap(), synth_generate(&small()).unwrap());
        let other = SynthConfig { seed: 1, ..small() };
        assert_ne!(synth_generate(&small()).unwrap().bench, synth_generate(&other).unwrap().bench);
    }

    #[test]
    fn splits_use_independent_streams() {
        let a = synth_generate(&small()).unwrap();
        let b = synth_generate(&SynthConfig { n_train: 99, ..small() }).unwrap();
        assert_eq!(a.bench, b.bench);
        assert_eq!(a.pretrain, b.pretrain);
    }

    #[test]
    fn template_distribution() {
        let d = synth_generate(&small()).unwrap();
        assert!(d.pairs.templates.iter().all(|&t| t == 0));
        assert_eq!(d.pretrain.templates.iter().filter(|&&t| t == 1).count(), 20);
        let cfg = SynthConfig { template_weights: Some(vec![0.0, 1.0]), ..small() };
        assert!(synth_generate(&cfg).unwrap().pairs.templates.iter().all(|&t| t == 1));
    }

    #[test]
    fn invalid_configs() {
        assert!(synth_generate(&SynthConfig { templates: 1, ..small() }).is_err());
        assert!(synth_generate(&SynthConfig { sigma_text: -1.0, ..small() }).is_err());
        assert!(synth_generate(&SynthConfig { n_queries: 21, ..small() }).is_err());
        assert!(synth_generate(&SynthConfig { template_weights: Some(vec![1.0]), ..small() }).is_err());
    }
}
