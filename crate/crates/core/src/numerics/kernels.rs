//! Raw row-major kernels. Accumulation order is fixed (inner index ascending).

use super::Scalar;

/// `out[p×r] += a[p×q] · b[q×r]`
pub(crate) fn matmul_acc<F: Scalar>(a: &[F], b: &[F], out: &mut [F], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let out_row = &mut out[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            let b_row = &b[k * r..(k + 1) * r];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
}

/// `out[p×r] += a[p×q] · b[r×q]ᵀ`
pub(crate) fn matmul_nt_acc<F: Scalar>(a: &[F], b: &[F], out: &mut [F], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let a_row = &a[i * q..(i + 1) * q];
        for j in 0..r {
            let b_row = &b[j * q..(j + 1) * q];
            let mut s = F::ZERO;
            for (&x, &y) in a_row.iter().zip(b_row) {
                s += x * y;
            }
            out[i * r + j] += s;
        }
    }
}

/// `out[p×r] += a[q×p]ᵀ · b[q×r]`
pub(crate) fn matmul_tn_acc<F: Scalar>(a: &[F], b: &[F], out: &mut [F], p: usize, q: usize, r: usize) {
    for k in 0..q {
        let b_row = &b[k * r..(k + 1) * r];
        for i in 0..p {
            let aki = a[k * p + i];
            let out_row = &mut out[i * r..(i + 1) * r];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aki * bkj;
            }
        }
    }
}

pub(crate) fn softmax_row<F: Scalar>(x: &[F], out: &mut [F]) {
    let mut max = x[0];
    for &v in &x[1..] {
        max = max.max(v);
    }
    let mut sum = F::ZERO;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF, exact-erf form.
pub(crate) fn normal_cdf<F: Scalar>(x: F) -> F {
    F::from_f64(0.5) * (F::ONE + (x * F::from_f64(FRAC_1_SQRT_2)).erf())
}

pub(crate) fn gelu<F: Scalar>(x: F) -> F {
    x * normal_cdf(x)
}

pub(crate) fn gelu_grad<F: Scalar>(x: F) -> F {
    let pdf = F::from_f64(FRAC_1_SQRT_2PI) * (F::from_f64(-0.5) * x * x).exp();
    normal_cdf(x) + x * pdf
}
