//! k-means++ seeding with Lloyd iterations.

use ndarray::{Array2, ArrayView2};

use crate::error::NumError;
use crate::numstats::RngStream;

const MAX_LLOYD: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    pub inertia: f64,
    /// Inertia after every Lloyd step of the returned run.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_centers(x: ArrayView2<'_, f64>, k: usize, rng: &mut RngStream) -> Array2<f64> {
    let n = x.nrows();
    let mut centers = Array2::<f64>::zeros((k, x.ncols()));
    let first = rng.index(n);
    centers.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, v) in d2.iter().enumerate() {
                acc += v;
                if acc > target && *v > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.index(n)
        };
        centers.row_mut(c).assign(&x.row(pick));
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(x.row(i), centers.row(c)));
        }
    }
    centers
}

fn assign(x: ArrayView2<'_, f64>, centers: &Array2<f64>, labels: &mut [usize]) -> bool {
    let mut changed = false;
    for (i, row) in x.rows().into_iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.rows().into_iter().enumerate() {
            let d = sq_dist(row, center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if labels[i] != best {
            labels[i] = best;
            changed = true;
        }
    }
    changed
}

/// Give every empty cluster the point farthest from its own center among
/// clusters that can spare one.
fn repair_empty(x: ArrayView2<'_, f64>, centers: &Array2<f64>, labels: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, row) in x.rows().into_iter().enumerate() {
            if sizes[labels[i]] > 1 {
                let d = sq_dist(row, centers.row(labels[i]));
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        match far {
            Some(i) => labels[i] = empty,
            None => return,
        }
    }
}

fn update_centers(x: ArrayView2<'_, f64>, labels: &[usize], k: usize) -> Array2<f64> {
    let mut centers = Array2::<f64>::zeros((k, x.ncols()));
    let mut sizes = vec![0usize; k];
    for (i, row) in x.rows().into_iter().enumerate() {
        let mut c = centers.row_mut(labels[i]);
        c += &row;
        sizes[labels[i]] += 1;
    }
    for (c, &s) in sizes.iter().enumerate() {
        if s > 0 {
            centers.row_mut(c).mapv_inplace(|v| v / s as f64);
        }
    }
    centers
}

fn inertia(x: ArrayView2<'_, f64>, centers: &Array2<f64>, labels: &[usize]) -> f64 {
    x.rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| sq_dist(row, centers.row(labels[i])))
        .sum()
}

/// One k-means++ seeding followed by Lloyd iterations to a fixed point.
pub fn kmeans_run(x: ArrayView2<'_, f64>, k: usize, rng: &RngStream) -> Result<Clustering, NumError> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(NumError::Domain(format!("k-means needs 1 <= k <= n (k {k}, n {n})")));
    }
    let mut draws = rng.clone();
    let mut centers = seed_centers(x, k, &mut draws);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let changed = assign(x, &centers, &mut labels);
        repair_empty(x, &centers, &mut labels, k);
        centers = update_centers(x, &labels, k);
        history.push(inertia(x, &centers, &labels));
        iterations += 1;
        if !changed || iterations >= MAX_LLOYD {
            break;
        }
    }
    let total = inertia(x, &centers, &labels);
    Ok(Clustering {
        k,
        labels,
        centers,
        inertia: total,
        inertia_history: history,
        iterations,
    })
}

/// Best-inertia clustering over `restarts` independent seedings.
pub fn kmeans(x: ArrayView2<'_, f64>, k: usize, restarts: usize, rng: &RngStream) -> Result<Clustering, NumError> {
    if restarts == 0 {
        return Err(NumError::Domain("k-means needs at least one restart".into()));
    }
    let mut best: Option<Clustering> = None;
    for r in 0..restarts {
        let c = kmeans_run(x, k, &rng.substream(&format!("restart{r}")))?;
        if best.as_ref().is_none_or(|b| c.inertia < b.inertia) {
            best = Some(c);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Adjusted Rand index from the contingency table.
    fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
        let ka = a.iter().max().unwrap() + 1;
        let kb = b.iter().max().unwrap() + 1;
        let mut table = vec![vec![0f64; kb]; ka];
        for (x, y) in a.iter().zip(b) {
            table[*x][*y] += 1.0;
        }
        let c2 = |v: f64| v * (v - 1.0) / 2.0;
        let index: f64 = table.iter().flatten().map(|v| c2(*v)).sum();
        let ra: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
        let rb: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
        let expected = ra * rb / c2(a.len() as f64);
        let max = 0.5 * (ra + rb);
        (index - expected) / (max - expected)
    }

    #[test]
    fn single_cluster_inertia_is_total_scatter() {
        let mut rng = RngStream::new(1, "k1");
        let x = Array2::from_shape_fn((50, 2), |_| rng.normal());
        let c = kmeans(x.view(), 1, 3, &RngStream::new(2, "s")).unwrap();
        let m0 = x.column(0).mean().unwrap();
        let m1 = x.column(1).mean().unwrap();
        let oracle: f64 = x
            .rows()
            .into_iter()
            .map(|r| (r[0] - m0).powi(2) + (r[1] - m1).powi(2))
            .sum();
        assert!((c.inertia - oracle).abs() < 1e-10);
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let mut rng = RngStream::new(3, "kn");
        let x = Array2::from_shape_fn((12, 2), |_| rng.normal());
        let c = kmeans(x.view(), 12, 2, &RngStream::new(4, "s")).unwrap();
        assert_eq!(c.inertia, 0.0);
        assert!(kmeans(x.view(), 13, 1, &RngStream::new(4, "s")).is_err());
    }

    #[test]
    fn three_blobs_recovered() {
        let mut perfect = 0;
        for seed in 0..20u64 {
            let mut rng = RngStream::new(seed, "blobs");
            let centers = [(0.0, 0.0), (6.0, 0.0), (0.0, 6.0)];
            let truth: Vec<usize> = (0..150).map(|i| i % 3).collect();
            let x = Array2::from_shape_fn((150, 2), |(i, c)| {
                let ctr = centers[truth[i]];
                (if c == 0 { ctr.0 } else { ctr.1 }) + 0.5 * rng.normal()
            });
            let c = kmeans(x.view(), 3, 10, &RngStream::new(seed, "km")).unwrap();
            if (adjusted_rand(&c.labels, &truth) - 1.0).abs() < 1e-12 {
                perfect += 1;
            }
        }
        assert!(perfect >= 19, "{perfect}/20");
    }

    #[test]
    fn duplicate_points_do_not_leave_empty_clusters() {
        let mut x = Array2::<f64>::zeros((10, 2));
        x[[9, 0]] = 1.0;
        let c = kmeans_run(x.view(), 4, &RngStream::new(5, "dup")).unwrap();
        let mut sizes = [0; 4];
        for l in &c.labels {
            sizes[*l] += 1;
        }
        assert!(sizes.iter().all(|s| *s > 0), "{sizes:?}");
    }

    proptest! {
        #[test]
        fn lloyd_inertia_never_increases(seed in 0u64..500, k in 1usize..6) {
            let mut rng = RngStream::new(seed, "prop");
            let x = Array2::from_shape_fn((40, 2), |_| rng.normal());
            let c = kmeans_run(x.view(), k, &RngStream::new(seed, "run")).unwrap();
            for w in c.inertia_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0]));
            }
            let direct: f64 = (0..40)
                .map(|i| (0..2).map(|j| (x[[i, j]] - c.centers[[c.labels[i], j]]).powi(2)).sum::<f64>())
                .sum();
            prop_assert_eq!(direct, c.inertia);
            let mut seen = vec![false; k];
            for l in &c.labels { seen[*l] = true; }
            prop_assert!(seen.iter().all(|s| *s));
        }
    }
}
