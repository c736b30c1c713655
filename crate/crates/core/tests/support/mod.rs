//! Test-only oracles, independent of the library's solver paths.
#![allow(dead_code)]

use graphon_sde::measures::DiscreteMeasure;

/// Pooled support (exact duplicates merged) with signed masses `mu - nu`.
pub fn pooled(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut pts: Vec<Vec<f64>> = Vec::new();
    let mut c: Vec<f64> = Vec::new();
    for (m, s) in [(mu, 1.0), (nu, -1.0)] {
        for (z, w) in m.iter() {
            match pts.iter().position(|p| p.as_slice() == z) {
                Some(k) => c[k] += s * w,
                None => {
                    pts.push(z.to_vec());
                    c.push(s * w);
                }
            }
        }
    }
    (pts, c)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Dense tableau simplex for `max c.x, A x <= b, x >= 0` with `b >= 0`
/// (slack basis feasible), Bland's rule.
pub fn simplex_max(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> f64 {
    let m = a.len();
    let n = c.len();
    let cols = n + m + 1;
    let mut t = vec![vec![0.0; cols]; m + 1];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][cols - 1] = b[i];
    }
    for j in 0..n {
        t[m][j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    while let Some(enter) = (0..n + m).find(|&j| t[m][j] < -1e-12) {
        let mut leave = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[i][enter] > 1e-12 {
                let ratio = t[i][cols - 1] / t[i][enter];
                if ratio < best - 1e-15 || (ratio <= best + 1e-15 && leave.is_none_or(|l: usize| basis[i] < basis[l])) {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let r = leave.expect("bounded LP");
        let piv = t[r][enter];
        for v in t[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            let f = row[enter];
            if i != r && f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
        basis[r] = enter;
    }
    t[m][cols - 1]
}

/// Bounded-Lipschitz distance from the primal LP over function values
/// `f_k in [-1, 1]`, `|f_k - f_l| <= |z_k - z_l|`, shifted to `g = f + 1 >= 0`.
pub fn dbl_primal_simplex(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let (pts, c) = pooled(mu, nu);
    let n = pts.len();
    if n == 0 {
        return 0.0;
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for k in 0..n {
        let mut row = vec![0.0; n];
        row[k] = 1.0;
        a.push(row);
        b.push(2.0);
        for l in 0..n {
            if k != l {
                let mut row = vec![0.0; n];
                row[k] = 1.0;
                row[l] = -1.0;
                a.push(row);
                b.push(dist(&pts[k], &pts[l]));
            }
        }
    }
    let shift: f64 = c.iter().sum();
    simplex_max(&c, &a, &b) - shift
}

fn lipschitz_envelope(v: &[f64], pts: &[Vec<f64>]) -> Vec<f64> {
    (0..v.len())
        .map(|k| {
            (0..v.len())
                .map(|l| v[l] + dist(&pts[k], &pts[l]))
                .fold(f64::INFINITY, f64::min)
                .clamp(-1.0, 1.0)
        })
        .collect()
}

/// Best objective over random feasible functions, each polished by
/// coordinate moves that stay feasible. Always a lower bound.
pub fn dbl_feasible_search(mu: &DiscreteMeasure, nu: &DiscreteMeasure, trials: usize, seed: u64) -> f64 {
    let (pts, c) = pooled(mu, nu);
    let n = pts.len();
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut unif = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let obj = |f: &[f64]| f.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
    let mut best: f64 = 0.0;
    for trial in 0..trials {
        let raw: Vec<f64> = (0..n)
            .map(|k| match trial % 3 {
                0 => 2.0 * unif() - 1.0,
                1 => c[k].signum(),
                _ => if unif() < 0.5 { -1.0 } else { 1.0 },
            })
            .collect();
        let mut f = lipschitz_envelope(&raw, &pts);
        for _ in 0..50 {
            let mut moved = false;
            for k in 0..n {
                let target = if c[k] > 0.0 {
                    (0..n)
                        .filter(|&l| l != k)
                        .map(|l| f[l] + dist(&pts[k], &pts[l]))
                        .fold(1.0, f64::min)
                } else if c[k] < 0.0 {
                    (0..n)
                        .filter(|&l| l != k)
                        .map(|l| f[l] - dist(&pts[k], &pts[l]))
                        .fold(-1.0, f64::max)
                } else {
                    f[k]
                };
                if (target - f[k]).abs() > 1e-15 {
                    f[k] = target;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
        best = best.max(obj(&f));
    }
    best
}

/// Independent reference value: max of the primal simplex and the
/// feasible search.
pub fn dbl_oracle(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    dbl_primal_simplex(mu, nu).max(dbl_feasible_search(mu, nu, 60, 7))
}

/// Minimal xorshift generator for building random test inputs.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }

    pub fn uniform(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Random positive measure with `1..=max_atoms` atoms in `[-3, 3]^dim`.
    pub fn measure(&mut self, dim: usize, max_atoms: usize) -> DiscreteMeasure {
        let k = 1 + self.below(max_atoms);
        let atoms: Vec<f64> = (0..k * dim).map(|_| self.range(-3.0, 3.0)).collect();
        let weights: Vec<f64> = (0..k).map(|_| self.range(0.05, 1.5)).collect();
        DiscreteMeasure::from_flat(dim, atoms, weights).unwrap()
    }
}
