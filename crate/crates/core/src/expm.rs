//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants (Higham 2005 degree selection).

#![allow(clippy::excessive_precision)]

use faer::c64;

use crate::linalg::{identity, lincomb, one_norm, re, scaled, solve, CMat};

const THETA: [(usize, f64); 4] =
    [(3, 1.495585217958292e-2), (5, 2.539398330063230e-1), (7, 9.504178996162932e-1), (9, 2.097847961257068e0)];
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] =
    [17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0, 2162160.0, 110880.0, 3960.0, 90.0, 1.0];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Odd and even parts `(U, V)` of the degree-`m` Padé numerator, so that
/// `r_m(A) = (V - U)^{-1} (V + U)`.
fn pade_uv(a: &CMat, m: usize) -> (CMat, CMat) {
    let n = a.nrows();
    let a2 = a * a;
    if m == 13 {
        let b = &B13;
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let inner_u = lincomb(&[(re(b[13]), &a6), (re(b[11]), &a4), (re(b[9]), &a2)], re(0.0));
        let u_poly = &a6 * &inner_u;
        let u_poly = lincomb(&[(re(1.0), &u_poly), (re(b[7]), &a6), (re(b[5]), &a4), (re(b[3]), &a2)], re(b[1]));
        let u = a * &u_poly;
        let inner_v = lincomb(&[(re(b[12]), &a6), (re(b[10]), &a4), (re(b[8]), &a2)], re(0.0));
        let v_poly = &a6 * &inner_v;
        let v = lincomb(&[(re(1.0), &v_poly), (re(b[6]), &a6), (re(b[4]), &a4), (re(b[2]), &a2)], re(b[0]));
        return (u, v);
    }
    let b: &[f64] = match m {
        3 => &B3,
        5 => &B5,
        7 => &B7,
        _ => &B9,
    };
    // even powers A^0, A^2, ..., A^{m-1}
    let mut pows: Vec<CMat> = vec![identity(n), a2.clone()];
    while pows.len() < m.div_ceil(2) {
        let next = pows.last().unwrap() * &a2;
        pows.push(next);
    }
    let odd: Vec<(c64, &CMat)> = pows.iter().enumerate().map(|(k, p)| (re(b[2 * k + 1]), p)).collect();
    let even: Vec<(c64, &CMat)> = pows.iter().enumerate().map(|(k, p)| (re(b[2 * k]), p)).collect();
    let u = a * lincomb(&odd, re(0.0));
    let v = lincomb(&even, re(0.0));
    (u, v)
}

fn select(a: &CMat) -> (usize, u32) {
    let nrm = one_norm(a);
    for &(m, theta) in THETA.iter() {
        if nrm <= theta {
            return (m, 0);
        }
    }
    let s = (nrm / THETA_13).log2().ceil().max(0.0) as u32;
    (13, s)
}

/// `exp(a)`.
pub fn expm(a: &CMat) -> CMat {
    let (m, s) = select(a);
    let a_s = scaled(a, re(0.5f64.powi(s as i32)));
    let (u, v) = pade_uv(&a_s, m);
    let mut r = solve(&(&v - &u), &(&v + &u));
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `(exp(a), exp(-a))` sharing one Padé evaluation. The two results are
/// inverse to each other up to rounding.
pub fn expm_pair(a: &CMat) -> (CMat, CMat) {
    let (m, s) = select(a);
    let a_s = scaled(a, re(0.5f64.powi(s as i32)));
    let (u, v) = pade_uv(&a_s, m);
    let vpu = &v + &u;
    let vmu = &v - &u;
    let mut fwd = solve(&vmu, &vpu);
    let mut bwd = solve(&vpu, &vmu);
    for _ in 0..s {
        fwd = &fwd * &fwd;
        bwd = &bwd * &bwd;
    }
    (fwd, bwd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{herm_eig, max_abs, I};
    use faer::Mat;

    #[test]
    fn scalar_and_nilpotent() {
        let a = Mat::from_fn(1, 1, |_, _| c64::new(0.3, -1.7));
        let e = expm(&a);
        assert!((e[(0, 0)] - c64::new(0.3, -1.7).exp()).norm() < 1e-15);
        // [[0,1],[0,0]] -> [[1,1],[0,1]]
        let n = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 1 { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) });
        let e = expm(&n);
        assert!((e[(0, 1)] - c64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((e[(1, 0)]).norm() < 1e-15);
    }

    #[test]
    fn matches_spectral_exponential_of_hermitian_generator() {
        for &scale in &[1e-3, 0.1, 1.0, 7.0, 40.0] {
            let n = 12;
            let h = Mat::from_fn(n, n, |i, j| {
                let x = ((i * 13 + j * 7) % 17) as f64 / 17.0 - 0.5;
                let y = ((i * 5 + j * 11) % 19) as f64 / 19.0 - 0.5;
                c64::new(x + y, 0.0)
                    + c64::new(
                        0.0,
                        (x - y)
                            * if i < j {
                                1.0
                            } else if i > j {
                                -1.0
                            } else {
                                0.0
                            },
                    )
            });
            let h = crate::linalg::hermitian_part(&h);
            let eig = herm_eig(&h).unwrap();
            let v = &eig.vectors;
            let d = Mat::from_fn(n, n, |i, j| v[(i, j)] * (-I * scale * eig.values[j]).exp());
            let oracle = &d * v.adjoint();
            let got = expm(&scaled(&h, -I * scale));
            assert!(max_abs((&got - &oracle).as_ref()) < 1e-12 * (1.0 + scale), "scale {scale}");
            let (f, b) = expm_pair(&scaled(&h, -I * scale));
            let prod = &f * &b;
            assert!(max_abs((&prod - identity(n)).as_ref()) < 1e-12 * (1.0 + scale));
        }
    }
}
