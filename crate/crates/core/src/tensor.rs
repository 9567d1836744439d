//! Dense row-major kernels shared by the model, generic over `f32`/`f64`.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

pub trait Float:
    num_traits::Float
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    /// `C = alpha * A * B + beta * C` with arbitrary strides (in elements).
    #[allow(clippy::too_many_arguments)]
    fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn of(x: f64) -> Self;

    fn f64(self) -> f64;

    /// Elementwise `exp`, in place.
    fn exp_in_place(xs: &mut [Self]);
}

/// `exp` over a slice, written branch-free so it vectorizes. Relative error
/// stays within a few ulp; inputs are clamped to `[-87, 88]` and NaN stays NaN.
pub fn exp_f32_slice(xs: &mut [f32]) {
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_359_4;
    const LN2_LO: f32 = -2.121_944_4e-4;
    const ROUND: f32 = 12_582_912.0; // 1.5 * 2^23
    for x in xs.iter_mut() {
        let v = x.clamp(-87.0, 88.0);
        let shifted = v * LOG2E + ROUND;
        let n = shifted - ROUND;
        let r = v - n * LN2_HI - n * LN2_LO;
        let mut p = 1.987_569_1e-4_f32;
        p = p * r + 1.398_199_9e-3;
        p = p * r + 8.333_452e-3;
        p = p * r + 4.166_579_6e-2;
        p = p * r + 1.666_666_5e-1;
        p = p * r + 5.000_000_1e-1;
        let e = p * r * r + r + 1.0;
        // The low mantissa bits of `shifted` hold n as a two's complement integer.
        let k = shifted.to_bits().wrapping_sub(ROUND.to_bits());
        let scale = f32::from_bits(k.wrapping_add(127) << 23);
        *x = e * scale;
    }
}

fn exp_f64_slice(xs: &mut [f64]) {
    for x in xs.iter_mut() {
        *x = x.exp();
    }
}

macro_rules! impl_float {
    ($t:ty, $gemm:path, $exp:path) => {
        impl Float for $t {
            fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    if rows == 0 || cols == 0 {
                        0
                    } else {
                        (rows - 1) * rs.unsigned_abs() + (cols - 1) * cs.unsigned_abs() + 1
                    }
                };
                assert!(a.len() >= span(m, k, rsa, csa), "gemm: A too short");
                assert!(b.len() >= span(k, n, rsb, csb), "gemm: B too short");
                assert!(c.len() >= span(m, n, rsc, csc), "gemm: C too short");
                // SAFETY: the asserts above bound every index the kernel
                // touches for nonnegative strides, which is all we pass.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }

            fn of(x: f64) -> Self {
                x as $t
            }

            fn f64(self) -> f64 {
                self as f64
            }

            fn exp_in_place(xs: &mut [Self]) {
                $exp(xs)
            }
        }
    };
}

impl_float!(f32, matrixmultiply::sgemm, exp_f32_slice);
impl_float!(f64, matrixmultiply::dgemm, exp_f64_slice);

/// `C (m×n) = A (m×k) · B (k×n) + beta·C`.
pub fn mm<T: Float>(m: usize, k: usize, n: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    T::gemm_raw(m, k, n, T::one(), a, k as isize, 1, b, n as isize, 1, beta, c, n as isize, 1);
}

/// `C (m×n) = A (m×k) · Bᵀ + beta·C`, with `B` stored as n×k.
pub fn mm_nt<T: Float>(m: usize, k: usize, n: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    T::gemm_raw(m, k, n, T::one(), a, k as isize, 1, b, 1, k as isize, beta, c, n as isize, 1);
}

/// `C (m×n) = Aᵀ · B + beta·C`, with `A` stored as k×m and `B` as k×n.
pub fn mm_tn<T: Float>(m: usize, k: usize, n: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    T::gemm_raw(m, k, n, T::one(), a, 1, m as isize, b, n as isize, 1, beta, c, n as isize, 1);
}

pub fn axpy<T: Float>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn add_bias<T: Float>(rows: usize, cols: usize, bias: &[T], x: &mut [T]) {
    for r in 0..rows {
        for (v, &b) in x[r * cols..(r + 1) * cols].iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Column sums of a rows×cols matrix, accumulated into `out`.
pub fn col_sums_into<T: Float>(rows: usize, cols: usize, x: &[T], out: &mut [T]) {
    for r in 0..rows {
        for (o, &v) in out.iter_mut().zip(&x[r * cols..(r + 1) * cols]) {
            *o += v;
        }
    }
}

/// In-place numerically stable softmax of one row.
pub fn softmax_row<T: Float>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    for v in row.iter_mut() {
        *v -= max;
    }
    T::exp_in_place(row);
    let sum: T = row.iter().copied().sum();
    let inv = T::one() / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu_tanh_arg<T: Float>(x: T) -> T {
    T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x)
}

/// `tanh` through a single `exp`; saturates cleanly at both ends.
fn fast_tanh<T: Float>(z: T) -> T {
    let mut e = [z + z];
    T::exp_in_place(&mut e);
    T::one() - T::of(2.0) / (e[0] + T::one())
}

pub fn gelu<T: Float>(x: T) -> T {
    gelu_with_tanh(x).0
}

/// GELU value plus the inner `tanh`, which [`gelu_grad_with_tanh`] reuses.
pub fn gelu_with_tanh<T: Float>(x: T) -> (T, T) {
    let t = fast_tanh(gelu_tanh_arg(x));
    (T::of(0.5) * x * (T::one() + t), t)
}

/// [`gelu_with_tanh`] over a slice: returns the activations and the inner
/// `tanh` values.
pub fn gelu_slice_with_tanh<T: Float>(x: &[T]) -> (Vec<T>, Vec<T>) {
    let mut t: Vec<T> = x.iter().map(|&v| {
        let z = gelu_tanh_arg(v);
        z + z
    }).collect();
    T::exp_in_place(&mut t);
    let two = T::of(2.0);
    let half = T::of(0.5);
    let mut g = Vec::with_capacity(x.len());
    for (tv, &xv) in t.iter_mut().zip(x) {
        *tv = T::one() - two / (*tv + T::one());
        g.push(half * xv * (T::one() + *tv));
    }
    (g, t)
}

pub fn gelu_grad<T: Float>(x: T) -> T {
    gelu_grad_with_tanh(x, fast_tanh(gelu_tanh_arg(x)))
}

pub fn gelu_grad_with_tanh<T: Float>(x: T, t: T) -> T {
    let half = T::of(0.5);
    let dinner = T::of(GELU_C) * (T::one() + T::of(3.0 * GELU_A) * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * dinner
}

pub const LN_EPS: f64 = 1e-5;

/// Row-wise layer norm. Returns per-row `(mean, 1/std)` for the backward pass.
pub fn layer_norm<T: Float>(
    rows: usize,
    cols: usize,
    x: &[T],
    gain: &[T],
    bias: &[T],
    out: &mut [T],
) -> Vec<(T, T)> {
    let n = T::of(cols as f64);
    let mut stats = Vec::with_capacity(rows);
    for r in 0..rows {
        let xr = &x[r * cols..(r + 1) * cols];
        let mean = xr.iter().copied().sum::<T>() / n;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let rstd = T::one() / (var + T::of(LN_EPS)).sqrt();
        let o = &mut out[r * cols..(r + 1) * cols];
        for c in 0..cols {
            o[c] = (xr[c] - mean) * rstd * gain[c] + bias[c];
        }
        stats.push((mean, rstd));
    }
    stats
}

/// Backward of [`layer_norm`]: writes `dx`, accumulates `dgain`, `dbias`.
#[allow(clippy::too_many_arguments)]
pub fn layer_norm_backward<T: Float>(
    rows: usize,
    cols: usize,
    x: &[T],
    stats: &[(T, T)],
    gain: &[T],
    dout: &[T],
    dx: &mut [T],
    dgain: &mut [T],
    dbias: &mut [T],
) {
    let n = T::of(cols as f64);
    let mut xhat = vec![T::zero(); cols];
    let mut dxhat = vec![T::zero(); cols];
    for r in 0..rows {
        let (mean, rstd) = stats[r];
        let xr = &x[r * cols..(r + 1) * cols];
        let dr = &dout[r * cols..(r + 1) * cols];
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        for c in 0..cols {
            xhat[c] = (xr[c] - mean) * rstd;
            dxhat[c] = dr[c] * gain[c];
            dgain[c] += dr[c] * xhat[c];
            dbias[c] += dr[c];
            sum_d += dxhat[c];
            sum_dx += dxhat[c] * xhat[c];
        }
        let o = &mut dx[r * cols..(r + 1) * cols];
        for c in 0..cols {
            o[c] = rstd * (dxhat[c] - sum_d / n - xhat[c] * sum_dx / n);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_exp_matches_std() {
        let mut xs: Vec<f32> = (0..200_001).map(|i| -87.0 + 175.0 * i as f32 / 200_000.0).collect();
        let want: Vec<f64> = xs.iter().map(|&x| (x as f64).exp()).collect();
        exp_f32_slice(&mut xs);
        for (got, want) in xs.iter().zip(&want) {
            assert!(((*got as f64 - want) / want).abs() < 5e-7, "{got} vs {want}");
        }
        let mut odd = [f32::NAN, f32::NEG_INFINITY, 0.0];
        exp_f32_slice(&mut odd);
        assert!(odd[0].is_nan() && odd[1] < 1e-37 && odd[2] == 1.0);
    }

    #[test]
    fn gelu_slice_matches_scalar() {
        let xs: Vec<f32> = (-400..400).map(|i| i as f32 / 37.0).collect();
        let (g, t) = gelu_slice_with_tanh(&xs);
        for (i, &x) in xs.iter().enumerate() {
            assert_eq!((g[i], t[i]), gelu_with_tanh(x));
        }
    }

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = x[r * cols + c];
            }
        }
        t
    }

    #[test]
    fn gemm_variants_match_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        let want = naive(m, k, n, &a, &b);
        let mut c = vec![0.0; m * n];
        mm(m, k, n, &a, &b, 0.0, &mut c);
        assert!(c.iter().zip(&want).all(|(x, y)| (x - y).abs() < 1e-12));
        let bt = transpose(k, n, &b);
        let mut c = vec![0.0; m * n];
        mm_nt(m, k, n, &a, &bt, 0.0, &mut c);
        assert!(c.iter().zip(&want).all(|(x, y)| (x - y).abs() < 1e-12));
        let at = transpose(m, k, &a);
        let mut c = vec![1.0; m * n];
        mm_tn(m, k, n, &at, &b, 1.0, &mut c);
        assert!(c.iter().zip(&want).all(|(x, y)| (x - 1.0 - y).abs() < 1e-12));
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut row = vec![1000.0f32, 999.0, -5.0];
        softmax_row(&mut row);
        assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(row[0] > row[1] && row[1] > row[2]);
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for &x in &[-3.0f64, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
        assert_eq!(gelu(0.0f64), 0.0);
    }

    #[test]
    fn layer_norm_backward_matches_difference() {
        let (rows, cols) = (2, 5);
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * 1.3).sin() * 2.0).collect();
        let g: Vec<f64> = (0..5).map(|i| 1.0 + i as f64 * 0.1).collect();
        let b = vec![0.1; 5];
        let w: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).cos()).collect();
        let loss = |x: &[f64]| {
            let mut o = vec![0.0; 10];
            layer_norm(rows, cols, x, &g, &b, &mut o);
            o.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut o = vec![0.0; 10];
        let stats = layer_norm(rows, cols, &x, &g, &b, &mut o);
        let mut dx = vec![0.0; 10];
        let (mut dg, mut db) = (vec![0.0; 5], vec![0.0; 5]);
        layer_norm_backward(rows, cols, &x, &stats, &g, &w, &mut dx, &mut dg, &mut db);
        for i in 0..10 {
            let mut xp = x.clone();
            xp[i] += 1e-6;
            let mut xm = x.clone();
            xm[i] -= 1e-6;
            let fd = (loss(&xp) - loss(&xm)) / 2e-6;
            assert!((fd - dx[i]).abs() < 1e-6, "{i}: {fd} vs {}", dx[i]);
        }
    }
}
