//! Small numerical kernel for the score test: 4x4 symmetric eigensystems,
//! symmetric inverse square roots and the chi-squared upper tail.

use crate::error::{Error, Result};
use crate::model::ScoreVector;

/// Packed upper triangle of a symmetric 4x4 matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SymMatrix4 {
    upper: [f64; 10],
}

#[inline]
fn packed(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // row offsets of the packed upper triangle: 0, 4, 7, 9
    [0, 4, 7, 9][i] + (j - i)
}

impl SymMatrix4 {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn identity() -> Self {
        Self::diag([1.0; 4])
    }

    pub fn diag(d: [f64; 4]) -> Self {
        let mut m = Self::zeros();
        for (i, v) in d.into_iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Symmetrises `a` by averaging it with its transpose.
    pub fn from_full(a: &[[f64; 4]; 4]) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            for j in i..4 {
                m.set(i, j, 0.5 * (a[i][j] + a[j][i]));
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[packed(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.upper[packed(i, j)] = v;
    }

    pub fn to_full(&self) -> [[f64; 4]; 4] {
        let mut a = [[0.0; 4]; 4];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.get(i, j);
            }
        }
        a
    }

    pub fn add_outer(&mut self, v: &[f64; 4], weight: f64) {
        for i in 0..4 {
            for j in i..4 {
                self.upper[packed(i, j)] += weight * v[i] * v[j];
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.upper.iter_mut().for_each(|v| *v *= s);
    }

    pub fn mul_vec(&self, v: &[f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|j| self.get(i, j) * v[j]).sum();
        }
        out
    }

    pub fn column(&self, j: usize) -> [f64; 4] {
        [self.get(0, j), self.get(1, j), self.get(2, j), self.get(3, j)]
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..4)
            .map(|i| (0..4).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Full 4x4 product, used for checks.
pub fn matmul(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

/// Eigenvalues (ascending) and eigenvectors stored as columns.
#[derive(Debug, Clone, Copy)]
pub struct Eigen4 {
    pub values: [f64; 4],
    pub vectors: [[f64; 4]; 4],
}

impl Eigen4 {
    pub fn vector(&self, k: usize) -> [f64; 4] {
        [self.vectors[0][k], self.vectors[1][k], self.vectors[2][k], self.vectors[3][k]]
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn eigen_sym(m: &SymMatrix4) -> Eigen4 {
    const MAX_SWEEPS: usize = 64;
    let mut a = m.to_full();
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale = m.norm_inf();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..4)
            .flat_map(|i| ((i + 1)..4).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off == 0.0 || off.sqrt() <= f64::EPSILON * 1e-2 * scale {
            break;
        }
        for p in 0..3 {
            for q in (p + 1)..4 {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&x, &y| a[x][x].total_cmp(&a[y][y]));
    let mut values = [0.0; 4];
    let mut vectors = [[0.0; 4]; 4];
    for (k, &src) in order.iter().enumerate() {
        values[k] = a[src][src];
        for i in 0..4 {
            vectors[i][k] = v[i][src];
        }
    }
    Eigen4 { values, vectors }
}

/// `(1/n) sum s s^T`.
pub fn empirical_information(scores: &[ScoreVector]) -> SymMatrix4 {
    let mut m = SymMatrix4::zeros();
    for s in scores {
        m.add_outer(&s.0, 1.0);
    }
    if !scores.is_empty() {
        m.scale(1.0 / scores.len() as f64);
    }
    m
}

/// Default ridge: eigenvalues below this fraction of the largest are floored.
pub const DEFAULT_RIDGE: f64 = 1e-10;

/// A spectral function of a matrix after eigenvalue flooring.
#[derive(Debug, Clone, Copy)]
pub struct Ridged {
    pub matrix: SymMatrix4,
    /// Number of eigenvalues that were floored at the ridge.
    pub floored: usize,
}

fn spectral(m: &SymMatrix4, ridge: f64, f: impl Fn(f64) -> f64) -> Result<Ridged> {
    let eig = eigen_sym(m);
    let lmax = eig.values[3];
    if !(lmax > 0.0) || !lmax.is_finite() {
        return Err(Error::SingularInformation);
    }
    let floor = ridge * lmax;
    let mut floored = 0;
    let mut out = SymMatrix4::zeros();
    for k in 0..4 {
        let mut l = eig.values[k];
        if l < floor {
            l = floor;
            floored += 1;
        }
        if !(l > 0.0) {
            return Err(Error::SingularInformation);
        }
        out.add_outer(&eig.vector(k), f(l));
    }
    Ok(Ridged { matrix: out, floored })
}

/// Symmetric inverse square root with eigenvalue flooring at
/// `ridge * lambda_max`.
pub fn inv_sqrt(m: &SymMatrix4, ridge: f64) -> Result<Ridged> {
    spectral(m, ridge, |l| 1.0 / l.sqrt())
}

/// Inverse with the same eigenvalue flooring as [`inv_sqrt`].
pub fn inverse(m: &SymMatrix4, ridge: f64) -> Result<Ridged> {
    spectral(m, ridge, |l| 1.0 / l)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0` (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularised upper incomplete gamma `Q(a, x)`.
///
/// Series for `P` when `x < a + 1`, Lentz continued fraction for `Q`
/// otherwise.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 1000;
    const EPS: f64 = 1e-16;
    if x <= 0.0 {
        return 1.0;
    }
    let log_pref = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        (1.0 - sum * log_pref.exp()).clamp(0.0, 1.0)
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        (log_pref.exp() * h).clamp(0.0, 1.0)
    }
}

/// Upper-tail probability of the chi-squared distribution.
pub fn chisq_sf(t: f64, df: u32) -> f64 {
    assert!(df >= 1, "chi-squared needs at least one degree of freedom");
    if t.is_nan() {
        return f64::NAN;
    }
    if t < 0.0 {
        log::warn!("chisq_sf called with negative statistic {t}; returning 1");
        return 1.0;
    }
    gamma_q(df as f64 / 2.0, t / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn packed_indexing_is_symmetric() {
        let mut m = SymMatrix4::zeros();
        m.set(2, 1, 3.0);
        assert_eq!(m.get(1, 2), 3.0);
        let idx: std::collections::BTreeSet<_> =
            (0..4).flat_map(|i| (i..4).map(move |j| packed(i, j))).collect();
        assert_eq!(idx.len(), 10);
    }

    #[test]
    fn single_outer_product() {
        let v = ScoreVector([1.0, -2.0, 0.5, 3.0]);
        let m = empirical_information(&[v]);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.get(i, j), v.0[i] * v.0[j]);
            }
        }
    }

    #[test]
    fn rank_deficient_information() {
        let scores = [
            ScoreVector([1.0, 2.0, 0.0, 1.0]),
            ScoreVector([0.0, 1.0, 1.0, 0.0]),
            ScoreVector([1.0, 3.0, 1.0, 1.0]),
        ];
        let m = empirical_information(&scores);
        let e = eigen_sym(&m);
        assert!(e.values[0].abs() < 1e-10, "{:?}", e.values);
        assert!(e.values[1].abs() < 1e-10, "{:?}", e.values);
    }

    #[test]
    fn inv_sqrt_identity_and_diag() {
        let r = inv_sqrt(&SymMatrix4::identity(), DEFAULT_RIDGE).unwrap();
        assert_eq!(r.floored, 0);
        for i in 0..4 {
            for j in 0..4 {
                assert!(close(r.matrix.get(i, j), (i == j) as u8 as f64, 1e-14));
            }
        }
        let r = inv_sqrt(&SymMatrix4::diag([4.0, 1.0, 9.0, 16.0]), DEFAULT_RIDGE).unwrap();
        let expect = [0.5, 1.0, 1.0 / 3.0, 0.25];
        for i in 0..4 {
            assert!(close(r.matrix.get(i, i), expect[i], 1e-14));
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let m = SymMatrix4::from_full(&[
            [4.0, 1.0, 0.5, 0.0],
            [1.0, 3.0, 0.2, 0.1],
            [0.5, 0.2, 2.0, 0.3],
            [0.0, 0.1, 0.3, 1.0],
        ]);
        let inv = inverse(&m, DEFAULT_RIDGE).unwrap().matrix.to_full();
        let prod = matmul(&m.to_full(), &inv);
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i][j] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inv_sqrt_of_zero_is_singular() {
        assert!(matches!(
            inv_sqrt(&SymMatrix4::zeros(), DEFAULT_RIDGE),
            Err(Error::SingularInformation)
        ));
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(close(ln_gamma(1.0), 0.0, 1e-14));
        assert!(close(ln_gamma(5.0), 24f64.ln(), 1e-13));
        assert!(close(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), 1e-14));
    }

    #[test]
    fn chisq_closed_forms() {
        for k in 1..20 {
            assert_eq!(chisq_sf(0.0, k), 1.0);
        }
        // df = 2: exp(-t/2)
        for t in [0.1, 1.0, 5.0, 30.0, 150.0] {
            assert!(close(chisq_sf(t, 2), (-t / 2.0).exp(), 1e-14));
        }
        assert_eq!(chisq_sf(-1.0, 3), 1.0);
    }
}
