//! Special functions used across the solvers.

/// Fermi-Dirac occupation `1 / (exp(x) + 1)` of the dimensionless argument `x = E/T`.
pub fn fermi(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (x.exp() + 1.0)
    }
}

/// Bessel functions of the first kind `J_0(z) ..= J_nmax(z)` for real `z`.
///
/// Miller's backward recurrence, normalized with `J_0 + 2 sum J_2k = 1`.
pub fn bessel_j_all(nmax: usize, z: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if z == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let az = z.abs();
    let start = {
        let base = nmax.max(az.ceil() as usize);
        base + 30 + (az.sqrt() * 10.0) as usize
    };
    let start = start + (start % 2);
    let mut jp1 = 0.0f64;
    let mut j = 1e-300f64;
    let mut norm = 0.0;
    let mut tmp = vec![0.0; start + 1];
    tmp[start] = j;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * k as f64 / az * j - jp1;
        jp1 = j;
        j = jm1;
        tmp[k - 1] = j;
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * j;
        }
        // rescale to avoid overflow
        if j.abs() > 1e250 {
            for v in tmp[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
            j *= 1e-250;
            jp1 *= 1e-250;
            norm *= 1e-250;
        }
    }
    norm += tmp[0];
    for (n, o) in out.iter_mut().enumerate() {
        let mut v = tmp[n] / norm;
        if z < 0.0 && n % 2 == 1 {
            v = -v;
        }
        *o = v;
    }
    out
}

/// `J_n(z)` for any integer order.
pub fn bessel_j(n: i64, z: f64) -> f64 {
    let m = n.unsigned_abs() as usize;
    let v = bessel_j_all(m, z)[m];
    if n < 0 && m % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Generalized Laguerre polynomial `L_n^k(x)` via the three-term recurrence.
pub fn laguerre(n: usize, k: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut l0 = 1.0;
    let mut l1 = 1.0 + k - x;
    for j in 1..n {
        let jf = j as f64;
        let l2 = ((2.0 * jf + 1.0 + k - x) * l1 - (jf + k) * l0) / (jf + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// `ln(n!)` by direct summation (exact enough for the oscillator sizes used here).
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Functions `phi_1..=phi_3` of exponential integrators for complex `z`.
///
/// `phi_0 = e^z`, `phi_{k+1}(z) = (phi_k(z) - 1/k!) / z`.
pub fn phi_functions(z: num_complex::Complex64) -> [num_complex::Complex64; 4] {
    use num_complex::Complex64 as C;
    let e = z.exp();
    if z.norm() < 0.4 {
        // Taylor: phi_k(z) = sum_j z^j / (j+k)!
        let mut out = [e, C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)];
        for (k, o) in out.iter_mut().enumerate().skip(1) {
            let mut term = C::new(1.0, 0.0);
            let mut denom = (1..=k).map(|v| v as f64).product::<f64>();
            let mut sum = C::new(0.0, 0.0);
            for j in 0..20 {
                sum += term / denom;
                term *= z;
                denom *= (j + k + 1) as f64;
            }
            *o = sum;
        }
        out
    } else {
        let p1 = (e - 1.0) / z;
        let p2 = (p1 - 1.0) / z;
        let p3 = (p2 - 0.5) / z;
        [e, p1, p2, p3]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn bessel_reference_values() {
        // Abramowitz & Stegun table values
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j(1, 1.0) - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert!((bessel_j(2, 2.5) - 0.446_059_058_439_617_2).abs() < 1e-13);
        assert!((bessel_j(-3, 2.0) + 0.128_943_249_474_402).abs() < 1e-13);
        assert!((bessel_j(5, 10.0) + 0.234_061_528_186_793_7).abs() < 1e-13);
    }

    #[test]
    fn bessel_sum_rule() {
        let j = bessel_j_all(40, 2.5);
        let s: f64 = j[0] * j[0] + 2.0 * j[1..].iter().map(|v| v * v).sum::<f64>();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laguerre_low_orders() {
        let x = 0.7;
        assert!((laguerre(2, 1.0, x) - (0.5 * x * x - 3.0 * x + 3.0)).abs() < 1e-14);
        assert!((laguerre(1, 2.0, x) - (3.0 - x)).abs() < 1e-14);
    }

    #[test]
    fn phi_functions_continuous_across_branch() {
        for &r in &[0.399, 0.401] {
            let z = Complex64::new(-r, 0.1);
            let p = phi_functions(z);
            let direct2 = (z.exp() - 1.0 - z) / (z * z);
            assert!((p[2] - direct2).norm() < 1e-10);
        }
    }

    #[test]
    fn fermi_is_stable_for_large_arguments() {
        assert_eq!(fermi(1000.0), 0.0);
        assert_eq!(fermi(-1000.0), 1.0);
        assert!((fermi(0.0) - 0.5).abs() < 1e-16);
    }
}
