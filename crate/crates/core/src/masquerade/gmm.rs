use rand::Rng;
use rand_core::RngCore;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const VAR_FLOOR: f64 = 1e-6;

/// One-dimensional Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm1d {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl Gmm1d {
    /// EM fit seeded by k-means++ centres. Stops after `max_iter` rounds or
    /// when the mean log-likelihood moves less than `tol`.
    pub fn fit<R: RngCore + ?Sized>(data: &[f64], k: usize, max_iter: usize, tol: f64, rng: &mut R) -> Gmm1d {
        assert!(!data.is_empty(), "no data");
        let mut distinct = data.to_vec();
        distinct.sort_by(|a, b| a.total_cmp(b));
        distinct.dedup();
        let k = k.clamp(1, distinct.len());
        let n = data.len() as f64;

        let global_mean = data.iter().sum::<f64>() / n;
        let global_var = (data.iter().map(|x| (x - global_mean).powi(2)).sum::<f64>() / n).max(VAR_FLOOR);

        let mut means = kmeans_pp(data, k, rng);
        let mut variances = vec![global_var; k];
        let mut weights = vec![1.0 / k as f64; k];
        let mut resp = vec![0.0; data.len() * k];
        let mut prev = f64::NEG_INFINITY;
        let mut ll = prev;
        let mut iterations = 0;

        for it in 0..max_iter {
            iterations = it + 1;
            // E step, with log-sum-exp per point.
            let mut total = 0.0;
            for (p, &x) in data.iter().enumerate() {
                let row = &mut resp[p * k..(p + 1) * k];
                let mut max = f64::NEG_INFINITY;
                for c in 0..k {
                    row[c] = weights[c].ln() + log_normal_pdf(x, means[c], variances[c]);
                    max = max.max(row[c]);
                }
                let mut s = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    s += *v;
                }
                for v in row.iter_mut() {
                    *v /= s;
                }
                total += max + s.ln();
            }
            ll = total / n;

            // M step.
            for c in 0..k {
                let nk: f64 = (0..data.len()).map(|p| resp[p * k + c]).sum();
                if nk < 1e-12 {
                    // Starved component: park it on the global fit with no weight.
                    weights[c] = 0.0;
                    means[c] = global_mean;
                    variances[c] = global_var;
                    continue;
                }
                let mu = data.iter().enumerate().map(|(p, x)| resp[p * k + c] * x).sum::<f64>() / nk;
                let var = data
                    .iter()
                    .enumerate()
                    .map(|(p, x)| resp[p * k + c] * (x - mu).powi(2))
                    .sum::<f64>()
                    / nk;
                weights[c] = nk / n;
                means[c] = mu;
                variances[c] = var.max(VAR_FLOOR);
            }
            // A zero weight would give ln(0) in the next E step.
            for w in weights.iter_mut() {
                *w = w.max(1e-300);
            }
            let s: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= s;
            }
            if (ll - prev).abs() < tol {
                break;
            }
            prev = ll;
        }

        Gmm1d {
            weights,
            means,
            variances,
            iterations,
            log_likelihood: ll,
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut c = self.weights.len() - 1;
        for (idx, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                c = idx;
                break;
            }
        }
        self.means[c] + self.variances[c].sqrt() * rng.sample::<f64, _>(StandardNormal)
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + var.ln() + (2.0 * std::f64::consts::PI).ln())
}

/// k-means++ seeding: first centre uniform, later ones proportional to
/// squared distance from the nearest chosen centre.
fn kmeans_pp<R: RngCore + ?Sized>(data: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let mut centres = vec![data[rng.gen_range(0..data.len())]];
    let mut d2: Vec<f64> = data.iter().map(|x| (x - centres[0]).powi(2)).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            data[rng.gen_range(0..data.len())]
        } else {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = data.len() - 1;
            for (p, d) in d2.iter().enumerate() {
                acc += d;
                if acc >= target {
                    pick = p;
                    break;
                }
            }
            data[pick]
        };
        centres.push(next);
        for (p, x) in data.iter().enumerate() {
            d2[p] = d2[p].min((x - next).powi(2));
        }
    }
    centres
}
