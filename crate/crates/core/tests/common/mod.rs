// Reference implementations used as test oracles. They are written from the
// definitions, deliberately without sharing code with the library.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};

/// DBSCAN from the definition: core points are those with at least
/// `min_pts` points (itself included) within `eps`; clusters are the
/// connected components of the core graph, numbered by their smallest
/// member; a border point joins the lowest-numbered cluster among the core
/// points that cover it.
pub fn dbscan_reference(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let close = |i: usize, j: usize| {
        let s: f64 = points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        s <= eps * eps
    };
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| close(i, j)).count() >= min_pts)
        .collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if core[i] && core[j] && close(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut root_id = std::collections::HashMap::new();
    let mut labels = vec![None; n];
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            let next = root_id.len();
            let id = *root_id.entry(r).or_insert(next);
            labels[i] = Some(id);
        }
    }
    for i in 0..n {
        if !core[i] {
            labels[i] = (0..n)
                .filter(|&j| core[j] && close(i, j))
                .filter_map(|j| labels[j])
                .min();
        }
    }
    labels
}

/// Relabels clusters in order of first appearance so that two labelings
/// compare equal iff they describe the same partition and noise set.
pub fn canonical(labels: &[Option<usize>]) -> Vec<Option<usize>> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            l.map(|c| {
                let next = map.len();
                *map.entry(c).or_insert(next)
            })
        })
        .collect()
}

/// Minimum total over all permutations, summed in row order, and the
/// lexicographically smallest permutation attaining it.
pub fn brute_force_assignment(cost: ArrayView2<'_, f64>) -> (f64, Vec<usize>) {
    let m = cost.nrows();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = (f64::INFINITY, perm.clone());
    loop {
        let total: f64 = perm.iter().enumerate().map(|(r, &c)| cost[[r, c]]).sum();
        if total < best.0 {
            best = (total, perm.clone());
        }
        // next permutation in lexicographic order
        let Some(i) = (1..m).rev().find(|&i| perm[i - 1] < perm[i]) else {
            break;
        };
        let j = (i..m).rev().find(|&j| perm[j] > perm[i - 1]).unwrap();
        perm.swap(i - 1, j);
        perm[i..].reverse();
    }
    best
}

/// MCC loss written out from its definition for a batch of `[K × d]`
/// samples.
pub fn mcc_loss_reference(batch: &[Array2<f64>], centers: &Array2<f64>, m1: f64, m2: f64) -> f64 {
    let k = centers.nrows();
    let dist = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
        (&a - &b).mapv(|v| v * v).sum().sqrt()
    };
    let mut total = 0.0;
    for f in batch {
        let mut s = 0.0;
        for p in 0..k {
            s += (dist(f.row(p), centers.row(p)) - m1).max(0.0);
            let mut push = 0.0;
            for q in 0..k {
                if q != p {
                    push += (m2 - dist(centers.row(p), centers.row(q))).max(0.0);
                }
            }
            s += push / k as f64;
        }
        total += s;
    }
    total / batch.len() as f64
}

/// Mean softmax cross-entropy of the affine model `[z g 1] · theta`.
pub fn cross_entropy_reference(x: &Array2<f64>, labels: &[usize], theta: &Array2<f64>) -> f64 {
    let logits = x.dot(theta);
    let mut total = 0.0;
    for (row, &y) in logits.outer_iter().zip(labels) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

/// Unpenalized multinomial logistic regression by Nesterov-accelerated
/// gradient descent with a fixed step from a Lipschitz bound. Returns the
/// final mean cross-entropy.
pub fn logistic_oracle(
    z: ArrayView2<'_, f64>,
    g: ArrayView2<'_, f64>,
    labels: &[usize],
    n_classes: usize,
    iters: usize,
) -> f64 {
    let n = z.nrows();
    let cols = z.ncols() + g.ncols() + 1;
    let mut x = Array2::<f64>::ones((n, cols));
    x.slice_mut(ndarray::s![.., ..z.ncols()]).assign(&z);
    x.slice_mut(ndarray::s![.., z.ncols()..z.ncols() + g.ncols()])
        .assign(&g);
    let lip = 0.5 * x.mapv(|v| v * v).sum() / n as f64;
    let step = 1.0 / lip;

    let grad = |theta: &Array2<f64>| {
        let mut p = x.dot(theta);
        for (mut row, &y) in p.outer_iter_mut().zip(labels) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
            row[y] -= 1.0;
        }
        x.t().dot(&p) / n as f64
    };

    let mut theta = Array2::<f64>::zeros((cols, n_classes));
    let mut prev = theta.clone();
    for t in 1..=iters {
        let momentum = (t as f64 - 1.0) / (t as f64 + 2.0);
        let look = &theta + &((&theta - &prev) * momentum);
        let next = &look - &(grad(&look) * step);
        prev = std::mem::replace(&mut theta, next);
    }
    cross_entropy_reference(&x, labels, &theta)
}

/// Central finite difference of `f` at `x` along every coordinate.
pub fn finite_difference(x: &Array2<f64>, h: f64, f: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut out = Array2::zeros(x.dim());
    for idx in ndarray::indices(x.dim()) {
        let mut up = x.clone();
        up[idx] += h;
        let mut down = x.clone();
        down[idx] -= h;
        out[idx] = (f(&up) - f(&down)) / (2.0 * h);
    }
    out
}

pub fn relative_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    let scale = a
        .mapv(|v| v * v)
        .sum()
        .sqrt()
        .max(b.mapv(|v| v * v).sum().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
