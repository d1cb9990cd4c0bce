//! Reference implementations shared by the integration tests. They avoid the
//! library's numeric kernels so agreement is meaningful.

#![allow(dead_code)]

use haslr::solver::{build_dictionary, ClassId, Dictionary};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Singular values by one-sided Jacobi rotations, descending.
pub fn jacobi_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut a = if m.nrows() >= m.ncols() {
        m.clone()
    } else {
        m.transpose()
    };
    let n = a.ncols();
    for _ in 0..100 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..a.nrows() {
                    let (ap, aq) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = c * ap - s * aq;
                    a[(i, q)] = s * ap + c * aq;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut s: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn nuclear_norm_ref(v: &[f64], shape: (usize, usize)) -> f64 {
    jacobi_singular_values(&DMatrix::from_column_slice(shape.0, shape.1, v))
        .iter()
        .sum()
}

/// Exact weighted lasso by enumerating supports (smallest first) and sign
/// patterns until one satisfies the full optimality conditions.
pub fn lasso_brute_force(a: &DMatrix<f64>, b: &[f64], w: &[f64], beta: f64) -> Vec<f64> {
    let (d, n) = a.shape();
    let b = DVector::from_column_slice(b);
    let max_support = n.min(d);
    for size in 0..=max_support {
        for support in combinations(n, size) {
            let a_s = a.select_columns(&support);
            let g = a_s.tr_mul(&a_s);
            let Some(chol) = g.clone().cholesky() else {
                continue;
            };
            let atb = a_s.tr_mul(&b);
            for signs in 0..(1u32 << size) {
                let s: Vec<f64> = (0..size)
                    .map(|i| if signs >> i & 1 == 1 { -1.0 } else { 1.0 })
                    .collect();
                let rhs = DVector::from_fn(size, |i, _| atb[i] - w[support[i]] * s[i] / beta);
                let xs = chol.solve(&rhs);
                if (0..size).any(|i| xs[i] * s[i] <= 0.0) {
                    continue;
                }
                let mut x = vec![0.0; n];
                for (i, &j) in support.iter().enumerate() {
                    x[j] = xs[i];
                }
                let r = &b - a * DVector::from_column_slice(&x);
                let ok = (0..n)
                    .filter(|j| !support.contains(j))
                    .all(|j| (beta * a.column(j).dot(&r)).abs() <= w[j] + 1e-12);
                if ok {
                    return x;
                }
            }
        }
    }
    panic!("no support satisfied the optimality conditions");
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// A sparse + low-rank regression instance.
pub struct SparseLowRank {
    pub dict: Dictionary,
    pub y: Vec<f64>,
    pub x_true: Vec<f64>,
    pub shape: (usize, usize),
}

/// Random unit-column dictionary, 3-sparse positive coefficients and a
/// rank-one block error.
pub fn sparse_low_rank_problem(shape: (usize, usize), n: usize, seed: u64) -> SparseLowRank {
    let (h, w) = shape;
    let d = h * w;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dict = build_dictionary((0..n).map(|j| {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (v, ClassId::from(j + 1))
    }))
    .unwrap();
    let mut x_true = vec![0.0; n];
    let mut placed = 0;
    while placed < 3 {
        let j = rng.gen_range(0..n);
        if x_true[j] == 0.0 {
            x_true[j] = rng.gen_range(1.0..5.0);
            placed += 1;
        }
    }
    let bh = rng.gen_range(8..=20.min(h));
    let bw = rng.gen_range(6..=15.min(w));
    let (r0, c0) = (rng.gen_range(0..=h - bh), rng.gen_range(0..=w - bw));
    let u: Vec<f64> = (0..bh).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..bw).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut y: Vec<f64> = dict.apply(&x_true).iter().copied().collect();
    for c in 0..bw {
        for r in 0..bh {
            y[(c0 + c) * h + r0 + r] += u[r] * v[c];
        }
    }
    SparseLowRank {
        dict,
        y,
        x_true,
        shape,
    }
}
