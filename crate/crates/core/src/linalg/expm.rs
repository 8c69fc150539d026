//! Matrix exponential by Pade approximation with scaling and squaring, and
//! its Frechet derivative.
//!
//! `expm` follows the classic order-13 scheme with lower-order shortcuts for
//! small norms. Two Frechet evaluators share its contract:
//!
//! * [`expm_frechet`] exponentiates the doubled block matrix
//!   `[[a, e], [0, a]]` and reads the derivative off the upper-right block.
//!   Simple and trusted, but 8x the flops and 4x the memory of `expm(a)`.
//! * [`expm_frechet_dir`] differentiates the Pade-13 recurrences and the
//!   squaring chain directly at the original dimension. This is the
//!   production path for large generators; the two are cross-checked in
//!   tests.

use num_complex::Complex64;

use super::{check_square, identity, lu_factor, matmul, matmul_into, one_norm, CMat, ONE, ZERO};
use crate::error::Result;

const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_230e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068;
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17_297_280.0, 8_648_640.0, 1_995_840.0, 277_200.0, 25_200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// out = c_hi * hi + c_mid * mid + c_lo * lo (+ c_id on the diagonal).
fn lincomb3(c_hi: f64, hi: &CMat, c_mid: f64, mid: &CMat, c_lo: f64, lo: &CMat, c_id: Option<f64>) -> CMat {
    let mut out = CMat::zeros(hi.dim());
    ndarray::Zip::from(&mut out)
        .and(hi)
        .and(mid)
        .and(lo)
        .for_each(|o, &a, &b, &c| *o = re(c_hi) * a + re(c_mid) * b + re(c_lo) * c);
    if let Some(c0) = c_id {
        for k in 0..out.nrows() {
            out[(k, k)] += re(c0);
        }
    }
    out
}

/// Evaluates the order-m Pade numerator split U = A * odd(A), V = even(A)
/// for m in {3, 5, 7, 9} and returns (U, V).
fn pade_uv_small(a: &CMat, coeffs: &[f64]) -> (CMat, CMat) {
    let n = a.nrows();
    let a2 = matmul(a, a);
    // Even powers a^0, a^2, a^4, ... as needed by the order.
    let mut powers: Vec<CMat> = vec![identity(n), a2];
    while powers.len() < coeffs.len() / 2 {
        let next = matmul(powers.last().unwrap(), &powers[1]);
        powers.push(next);
    }
    let mut odd = CMat::zeros((n, n));
    let mut even = CMat::zeros((n, n));
    for (k, &c) in coeffs.iter().enumerate() {
        let p = &powers[k / 2];
        if k % 2 == 1 {
            odd.zip_mut_with(p, |o, &z| *o += re(c) * z);
        } else {
            even.zip_mut_with(p, |o, &z| *o += re(c) * z);
        }
    }
    (matmul(a, &odd), even)
}

/// U and V of the order-13 approximant from precomputed even powers.
fn pade13_uv(a: &CMat, a2: &CMat, a4: &CMat, a6: &CMat) -> (CMat, CMat) {
    let b = &B13;
    let w1 = lincomb3(b[13], a6, b[11], a4, b[9], a2, None);
    let w2 = lincomb3(b[7], a6, b[5], a4, b[3], a2, Some(b[1]));
    let mut w = matmul(a6, &w1);
    w.zip_mut_with(&w2, |o, &z| *o += z);
    let u = matmul(a, &w);
    let z1 = lincomb3(b[12], a6, b[10], a4, b[8], a2, None);
    let z2 = lincomb3(b[6], a6, b[4], a4, b[2], a2, Some(b[0]));
    let mut v = matmul(a6, &z1);
    v.zip_mut_with(&z2, |o, &z| *o += z);
    (u, v)
}

/// Solves (V - U) F = (V + U).
fn pade_solve(u: &CMat, v: &CMat) -> Result<CMat> {
    let q = v - u;
    let p = v + u;
    lu_factor(&q)?.solve_mat(&p)
}

/// Number of halvings needed to bring the norm under the order-13 threshold.
fn squarings_for(norm: f64) -> u32 {
    if norm <= THETA_13 {
        0
    } else {
        (norm / THETA_13).log2().ceil().max(0.0) as u32
    }
}

/// Matrix exponential.
pub fn expm(a: &CMat) -> Result<CMat> {
    let n = check_square(a, "expm")?;
    let norm = one_norm(a);
    if norm == 0.0 {
        return Ok(identity(n));
    }
    let (u, v) = if norm <= THETA_3 {
        pade_uv_small(a, &B3)
    } else if norm <= THETA_5 {
        pade_uv_small(a, &B5)
    } else if norm <= THETA_7 {
        pade_uv_small(a, &B7)
    } else if norm <= THETA_9 {
        pade_uv_small(a, &B9)
    } else {
        let s = squarings_for(norm);
        let b = a.mapv(|z| z * re(0.5f64.powi(s as i32)));
        let b2 = matmul(&b, &b);
        let b4 = matmul(&b2, &b2);
        let b6 = matmul(&b2, &b4);
        let (u, v) = pade13_uv(&b, &b2, &b4, &b6);
        drop(b2);
        drop(b4);
        drop(b6);
        let mut f = pade_solve(&u, &v)?;
        drop(u);
        drop(v);
        for _ in 0..s {
            f = matmul(&f, &f);
        }
        return Ok(f);
    };
    pade_solve(&u, &v)
}

/// Power-of-two factor that brings `ne` at or below `na`.
fn direction_rescale(na: f64, ne: f64) -> f64 {
    if na > 0.0 && ne > na {
        2f64.powi((ne / na).log2().ceil() as i32)
    } else {
        1.0
    }
}

/// Frechet derivative of the matrix exponential at `a` in direction `e`,
/// via the doubled block matrix. Returns `(expm(a), D_e expm(a))`.
pub fn expm_frechet(a: &CMat, e: &CMat) -> Result<(CMat, CMat)> {
    let n = check_square(a, "expm_frechet")?;
    if e.dim() != a.dim() {
        return Err(crate::error::Error::ShapeMismatch(format!(
            "expm_frechet: direction is {:?}, base point is {:?}",
            e.dim(),
            a.dim()
        )));
    }
    // The derivative is linear in e; shrinking a large direction keeps the
    // block norm (and squaring count) governed by a alone.
    let c = direction_rescale(one_norm(a), one_norm(e));
    let mut blk = CMat::zeros((2 * n, 2 * n));
    blk.slice_mut(ndarray::s![..n, ..n]).assign(a);
    blk.slice_mut(ndarray::s![n.., n..]).assign(a);
    {
        let mut tr = blk.slice_mut(ndarray::s![..n, n..]);
        tr.assign(e);
        tr.map_inplace(|z| *z /= re(c));
    }
    let x = expm(&blk)?;
    let expm_a = x.slice(ndarray::s![..n, ..n]).to_owned();
    let mut frechet = x.slice(ndarray::s![..n, n..]).to_owned();
    frechet.map_inplace(|z| *z *= re(c));
    Ok((expm_a, frechet))
}

/// Frechet derivative at the original dimension: the Pade-13 recurrences and
/// the squaring chain are differentiated term by term. Returns
/// `(expm(a), D_e expm(a))`; agrees with [`expm_frechet`] to roundoff.
pub fn expm_frechet_dir(a: &CMat, e: &CMat) -> Result<(CMat, CMat)> {
    let n = check_square(a, "expm_frechet_dir")?;
    if e.dim() != a.dim() {
        return Err(crate::error::Error::ShapeMismatch(format!(
            "expm_frechet_dir: direction is {:?}, base point is {:?}",
            e.dim(),
            a.dim()
        )));
    }
    let na = one_norm(a);
    let ne = one_norm(e);
    if na == 0.0 {
        // exp(0 + t e) = I + t e + O(t^2).
        return Ok((identity(n), e.clone()));
    }
    if ne == 0.0 {
        return Ok((expm(a)?, CMat::zeros((n, n))));
    }
    let c = direction_rescale(na, ne);
    let s = squarings_for(na);
    let h = 0.5f64.powi(s as i32);
    let b = a.mapv(|z| z * re(h));
    let eb = e.mapv(|z| z * re(h / c));

    let b2 = matmul(&b, &b);
    let b4 = matmul(&b2, &b2);
    let b6 = matmul(&b2, &b4);

    // M_k = D_e(B^k) under the same power schedule as the exponential.
    let mut m2 = matmul(&b, &eb);
    matmul_into(ONE, &eb, &b, ONE, &mut m2);
    let mut m4 = matmul(&b2, &m2);
    matmul_into(ONE, &m2, &b2, ONE, &mut m4);
    let mut m6 = matmul(&b2, &m4);
    matmul_into(ONE, &m2, &b4, ONE, &mut m6);

    let bc = &B13;
    let w1 = lincomb3(bc[13], &b6, bc[11], &b4, bc[9], &b2, None);
    let w2 = lincomb3(bc[7], &b6, bc[5], &b4, bc[3], &b2, Some(bc[1]));
    let z1 = lincomb3(bc[12], &b6, bc[10], &b4, bc[8], &b2, None);
    let z2 = lincomb3(bc[6], &b6, bc[4], &b4, bc[2], &b2, Some(bc[0]));
    let lw1 = lincomb3(bc[13], &m6, bc[11], &m4, bc[9], &m2, None);
    let lw2 = lincomb3(bc[7], &m6, bc[5], &m4, bc[3], &m2, None);
    let lz1 = lincomb3(bc[12], &m6, bc[10], &m4, bc[8], &m2, None);
    let lz2 = lincomb3(bc[6], &m6, bc[4], &m4, bc[2], &m2, None);
    drop(m4);

    let mut w = matmul(&b6, &w1);
    w.zip_mut_with(&w2, |o, &z| *o += z);
    drop(w2);
    let u = matmul(&b, &w);
    let mut v = matmul(&b6, &z1);
    v.zip_mut_with(&z2, |o, &z| *o += z);
    drop(z2);

    // Lu = B*Lw + E*W with Lw = B6*Lw1 + M6*W1 + Lw2.
    let mut lw = matmul(&b6, &lw1);
    drop(lw1);
    matmul_into(ONE, &m6, &w1, ONE, &mut lw);
    drop(w1);
    lw.zip_mut_with(&lw2, |o, &z| *o += z);
    drop(lw2);
    let mut lu = matmul(&b, &lw);
    drop(lw);
    matmul_into(ONE, &eb, &w, ONE, &mut lu);
    drop(w);
    drop(eb);
    let mut lv = matmul(&b6, &lz1);
    drop(lz1);
    matmul_into(ONE, &m6, &z1, ONE, &mut lv);
    drop(z1);
    lv.zip_mut_with(&lz2, |o, &z| *o += z);
    drop(lz2);
    drop(m6);
    drop(m2);
    drop(b2);
    drop(b4);
    drop(b6);
    drop(b);

    // R = (V-U)^{-1}(V+U); L = (V-U)^{-1}(Lu + Lv + (Lu - Lv) R).
    let q = &v - &u;
    let p = &v + &u;
    drop(u);
    drop(v);
    let fact = lu_factor(&q)?;
    drop(q);
    let mut x = fact.solve_mat(&p)?;
    drop(p);
    let ldiff = &lu - &lv;
    let mut rhs = lu;
    rhs.zip_mut_with(&lv, |o, &z| *o += z);
    drop(lv);
    matmul_into(ONE, &ldiff, &x, ONE, &mut rhs);
    drop(ldiff);
    let mut l = fact.solve_mat(&rhs)?;
    drop(rhs);
    drop(fact);

    let mut t1 = CMat::zeros((n, n));
    let mut t2 = CMat::zeros((n, n));
    for _ in 0..s {
        // L <- X L + L X, then X <- X^2.
        matmul_into(ONE, &x, &l, ZERO, &mut t1);
        matmul_into(ONE, &l, &x, ONE, &mut t1);
        std::mem::swap(&mut l, &mut t1);
        matmul_into(ONE, &x, &x, ZERO, &mut t2);
        std::mem::swap(&mut x, &mut t2);
    }
    l.map_inplace(|z| *z *= re(c));
    Ok((x, l))
}
