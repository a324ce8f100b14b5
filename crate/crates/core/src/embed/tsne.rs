//! Exact t-SNE on a precomputed dissimilarity matrix.

use ndarray::Array2;

use super::DissimilarityMatrix;
use crate::error::NumError;
use crate::numstats::RngStream;

const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_STEPS: usize = 250;
const MOMENTUM_SWITCH: usize = 250;
const INITIAL_MOMENTUM: f64 = 0.5;
const FINAL_MOMENTUM: f64 = 0.8;
const INIT_SD: f64 = 1e-4;
const MIN_GAIN: f64 = 0.01;
const P_FLOOR: f64 = 1e-12;
const KL_EVERY: usize = 50;
const BISECTION_STEPS: usize = 200;

/// Row-calibrated conditional affinities and their symmetrization.
#[derive(Debug, Clone)]
pub struct Affinities {
    /// Symmetric joint probabilities summing to one.
    pub p: Array2<f64>,
    /// Gaussian precision `1 / (2σ_i²)` chosen for each row.
    pub beta: Vec<f64>,
    /// Perplexity achieved by each conditional row.
    pub row_perplexity: Vec<f64>,
    pub target: f64,
}

impl Affinities {
    /// Largest relative deviation of a row perplexity from the target.
    pub fn max_relative_error(&self) -> f64 {
        self.row_perplexity
            .iter()
            .map(|p| (p - self.target).abs() / self.target)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// n×2 coordinates, centered.
    pub coords: Array2<f64>,
    pub kl_divergence: f64,
    /// `(iteration, KL)` checkpoints; exaggerated iterations use the
    /// unexaggerated P.
    pub kl_history: Vec<(usize, f64)>,
    pub seed: u64,
    pub max_perplexity_error: f64,
}

/// Conditional row `p_{j|i}` at precision `beta`, returning the entropy.
fn row_entropy(sq: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let dmin = sq
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    let mut wsum = 0.0;
    for (j, &d) in sq.iter().enumerate() {
        if j == i {
            out[j] = 0.0;
            continue;
        }
        let shifted = d - dmin;
        let e = (-beta * shifted).exp();
        out[j] = e;
        z += e;
        wsum += e * shifted;
    }
    for v in out.iter_mut() {
        *v /= z;
    }
    z.ln() + beta * wsum / z
}

/// Find each row's Gaussian precision by bisection so that its perplexity
/// matches `perplexity`, then symmetrize.
pub fn calibrate_affinities(d: &DissimilarityMatrix, perplexity: f64) -> Result<Affinities, NumError> {
    let n = d.n();
    if n < 2 || !(perplexity > 0.0) || 3.0 * perplexity >= n as f64 {
        return Err(NumError::Domain(format!(
            "t-SNE needs 3·perplexity < n (perplexity {perplexity}, n {n})"
        )));
    }
    let target_h = perplexity.ln();
    let mut cond = Array2::<f64>::zeros((n, n));
    let mut row_perplexity = vec![0.0; n];
    let mut betas = vec![0.0; n];
    let mut sq = vec![0.0; n];
    let mut buf = vec![0.0; n];
    for i in 0..n {
        for (s, v) in sq.iter_mut().zip(d.d.row(i)) {
            *s = v * v;
        }
        let mut beta = 1.0;
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let mut h = row_entropy(&sq, i, beta, &mut buf);
        for _ in 0..BISECTION_STEPS {
            if ((h.exp() - perplexity) / perplexity).abs() < 1e-5 {
                break;
            }
            if h > target_h {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
            h = row_entropy(&sq, i, beta, &mut buf);
        }
        row_perplexity[i] = h.exp();
        betas[i] = beta;
        cond.row_mut(i).assign(&ndarray::ArrayView1::from(&buf[..]));
    }
    let mut p = Array2::<f64>::zeros((n, n));
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[[i, j]] = ((cond[[i, j]] + cond[[j, i]]) / denom).max(P_FLOOR);
            }
        }
    }
    Ok(Affinities {
        p,
        beta: betas,
        row_perplexity,
        target: perplexity,
    })
}

fn kl_divergence(p: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let n = p.nrows();
    let mut z = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[[i, 0]] - y[[j, 0]];
            let dy = y[[i, 1]] - y[[j, 1]];
            z += 2.0 / (1.0 + dx * dx + dy * dy);
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[[i, 0]] - y[[j, 0]];
            let dy = y[[i, 1]] - y[[j, 1]];
            let q = (1.0 / (1.0 + dx * dx + dy * dy) / z).max(P_FLOOR);
            let pij = p[[i, j]];
            kl += 2.0 * pij * (pij / q).ln();
        }
    }
    kl
}

fn center(y: &mut Array2<f64>) {
    let n = y.nrows() as f64;
    for c in 0..2 {
        let m = y.column(c).sum() / n;
        y.column_mut(c).mapv_inplace(|v| v - m);
    }
}

/// Two-dimensional t-SNE embedding with early exaggeration, momentum and
/// per-coordinate gains.
pub fn tsne_embed(
    d: &DissimilarityMatrix,
    perplexity: f64,
    iterations: usize,
    learning_rate: f64,
    rng: &RngStream,
) -> Result<Embedding, NumError> {
    let aff = calibrate_affinities(d, perplexity)?;
    let n = d.n();
    let p = &aff.p;
    let pflat = p.as_slice().expect("standard layout");
    let mut init = rng.substream("tsne-init");
    let mut y = Array2::from_shape_fn((n, 2), |_| INIT_SD * init.normal());
    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0; 2 * n];
    let mut attr = vec![0.0; 2 * n];
    let mut rep = vec![0.0; 2 * n];
    let mut kl_history = Vec::new();

    for iter in 0..iterations {
        let exag = if iter < EXAGGERATION_STEPS { EXAGGERATION } else { 1.0 };
        let momentum = if iter < MOMENTUM_SWITCH {
            INITIAL_MOMENTUM
        } else {
            FINAL_MOMENTUM
        };

        // grad_i = 4 Σ_j (exag·p_ij − q_ij/Z)·q_ij·(y_i − y_j), accumulated as
        // an attractive and a repulsive sum so one pass over pairs suffices.
        attr.fill(0.0);
        rep.fill(0.0);
        let mut z = 0.0;
        {
            let ys = y.as_slice().expect("standard layout");
            for i in 0..n {
                let (yi0, yi1) = (ys[2 * i], ys[2 * i + 1]);
                let prow = &pflat[i * n..(i + 1) * n];
                let (mut a0, mut a1, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0);
                for j in (i + 1)..n {
                    let dx = yi0 - ys[2 * j];
                    let dy = yi1 - ys[2 * j + 1];
                    let q = 1.0 / (1.0 + dx * dx + dy * dy);
                    z += 2.0 * q;
                    let pa = prow[j] * q;
                    let qq = q * q;
                    a0 += pa * dx;
                    a1 += pa * dy;
                    r0 += qq * dx;
                    r1 += qq * dy;
                    attr[2 * j] -= pa * dx;
                    attr[2 * j + 1] -= pa * dy;
                    rep[2 * j] -= qq * dx;
                    rep[2 * j + 1] -= qq * dy;
                }
                attr[2 * i] += a0;
                attr[2 * i + 1] += a1;
                rep[2 * i] += r0;
                rep[2 * i + 1] += r1;
            }
        }
        let ys = y.as_slice_mut().expect("standard layout");
        for c in 0..2 * n {
            let g = 4.0 * (exag * attr[c] - rep[c] / z);
            if !g.is_finite() {
                return Err(NumError::NonFinite(format!("t-SNE gradient at iteration {iter}")));
            }
            let u = &mut update[c];
            let gain = &mut gains[c];
            *gain = if (g > 0.0) != (*u > 0.0) {
                *gain + 0.2
            } else {
                *gain * 0.8
            };
            if *gain < MIN_GAIN {
                *gain = MIN_GAIN;
            }
            *u = momentum * *u - learning_rate * *gain * g;
            ys[c] += *u;
        }
        center(&mut y);

        let step = iter + 1;
        if step % KL_EVERY == 0 || step == iterations {
            kl_history.push((step, kl_divergence(p, &y)));
        }
    }
    center(&mut y);
    let kl = kl_history
        .last()
        .map(|(_, v)| *v)
        .unwrap_or_else(|| kl_divergence(p, &y));
    Ok(Embedding {
        coords: y,
        kl_divergence: kl,
        kl_history,
        seed: rng.seed(),
        max_perplexity_error: aff.max_relative_error(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::niecc_dissimilarity;

    fn blobs(seed: u64, n: usize) -> (Vec<f64>, Vec<bool>) {
        let mut rng = RngStream::new(seed, "blobs");
        let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let v = labels
            .iter()
            .map(|b| if *b { 10.0 } else { 0.0 } + 0.1 * rng.normal())
            .collect();
        (v, labels)
    }

    fn dist(y: &Array2<f64>, i: usize, j: usize) -> f64 {
        ((y[[i, 0]] - y[[j, 0]]).powi(2) + (y[[i, 1]] - y[[j, 1]]).powi(2)).sqrt()
    }

    #[test]
    fn bisection_meets_perplexity_on_every_row() {
        let mut rng = RngStream::new(3, "perp");
        let v: Vec<f64> = (0..150).map(|_| rng.normal()).collect();
        let x = Array2::<f64>::zeros((150, 0));
        let d = niecc_dissimilarity(&v, x.view(), 0.0);
        let aff = calibrate_affinities(&d, 30.0).unwrap();
        // Recompute each row's perplexity directly from its precision.
        for i in 0..150 {
            let w: Vec<f64> = (0..150)
                .filter(|&j| j != i)
                .map(|j| (-aff.beta[i] * d.d[[i, j]].powi(2)).exp())
                .collect();
            let z: f64 = w.iter().sum();
            let h: f64 = -w
                .iter()
                .map(|v| v / z)
                .filter(|q| *q > 0.0)
                .map(|q| q * q.ln())
                .sum::<f64>();
            assert!((h.exp() - 30.0).abs() / 30.0 < 1e-3, "row {i}: {}", h.exp());
        }
        assert!(aff.max_relative_error() < 1e-3, "{}", aff.max_relative_error());
        let total: f64 = aff.p.sum();
        assert!((total - 1.0).abs() < 1e-6);
        for i in 0..150 {
            for j in 0..150 {
                assert_eq!(aff.p[[i, j]], aff.p[[j, i]]);
            }
        }
    }

    #[test]
    fn perplexity_bound_enforced() {
        let x = Array2::<f64>::zeros((30, 0));
        let d = niecc_dissimilarity(&[0.0; 30], x.view(), 0.0);
        assert!(calibrate_affinities(&d, 10.0).is_err());
    }

    #[test]
    fn separated_blobs_stay_separated() {
        let mut separated = 0;
        for seed in 0..20u64 {
            let (v, labels) = blobs(seed, 200);
            let x = Array2::<f64>::zeros((200, 0));
            let d = niecc_dissimilarity(&v, x.view(), 0.0);
            let emb = tsne_embed(&d, 30.0, 1000, 200.0, &RngStream::new(seed, "t")).unwrap();
            let (mut min_inter, mut max_intra) = (f64::INFINITY, 0.0f64);
            for i in 0..200 {
                for j in (i + 1)..200 {
                    let dd = dist(&emb.coords, i, j);
                    if labels[i] == labels[j] {
                        max_intra = max_intra.max(dd);
                    } else {
                        min_inter = min_inter.min(dd);
                    }
                }
            }
            if min_inter > max_intra {
                separated += 1;
            }
        }
        assert!(separated >= 19, "{separated}/20");
    }

    #[test]
    fn deterministic_centered_and_kl_settles() {
        let mut rng = RngStream::new(4, "kl");
        let v: Vec<f64> = (0..120).map(|i| (i % 3) as f64 + 0.3 * rng.normal()).collect();
        let x = Array2::<f64>::zeros((120, 0));
        let d = niecc_dissimilarity(&v, x.view(), 0.0);
        let s = RngStream::new(9, "emb");
        let a = tsne_embed(&d, 20.0, 1000, 200.0, &s).unwrap();
        let b = tsne_embed(&d, 20.0, 1000, 200.0, &s).unwrap();
        assert_eq!(a, b);
        for c in 0..2 {
            assert!(a.coords.column(c).mean().unwrap().abs() < 1e-6);
        }
        let at = |it: usize| a.kl_history.iter().find(|(k, _)| *k == it).unwrap().1;
        assert!(at(1000) <= at(300) + 1e-3, "{} vs {}", at(1000), at(300));
        assert!(a.coords.iter().all(|v| v.is_finite()));
    }
}
