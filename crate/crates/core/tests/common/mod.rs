//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use vibheom::model::{Lead, ModelParams};
use vibheom::special::fermi;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let (v, e) = gk15(f, a, b);
    if e <= tol || depth == 0 {
        return v;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss–Kronrod quadrature of `f` over `[a, b]` split at `breaks`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.windows(2)
        .map(|w| adapt(&f, w[0], w[1], tol / (pts.len() as f64), 50))
        .sum()
}

/// Integral over the whole real line through `ε = c + w·tan θ`.
pub fn integrate_line<F: Fn(f64) -> f64>(f: F, center: f64, width: f64, breaks: &[f64], tol: f64) -> f64 {
    let half = std::f64::consts::FRAC_PI_2;
    let g = |th: f64| {
        let t = th.tan();
        let jac = width * (1.0 + t * t);
        let v = f(center + width * t) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let tb: Vec<f64> = breaks.iter().map(|&e| ((e - center) / width).atan()).collect();
    integrate(g, -half, half, &tb, tol)
}

/// Retarded Green's function of the noninteracting level with Lorentzian leads.
pub fn green(p: &ModelParams, eps0: f64, e: f64) -> Complex64 {
    let mut sigma = Complex64::new(0.0, 0.0);
    for lead in Lead::ALL {
        let d = p.lead_bandwidth(lead);
        sigma += 0.5 * p.lead_gamma(lead) * d / Complex64::new(e - p.lead_mu(lead), d);
    }
    1.0 / (e - eps0 - sigma)
}

pub fn lead_width(p: &ModelParams, lead: Lead, e: f64) -> f64 {
    let d = p.lead_bandwidth(lead);
    let x = e - p.lead_mu(lead);
    p.lead_gamma(lead) * d * d / (x * x + d * d)
}

fn breakpoints(p: &ModelParams, eps0: f64) -> Vec<f64> {
    let mut b = vec![eps0];
    for lead in Lead::ALL {
        let mu = p.lead_mu(lead);
        let t = p.lead_temperature(lead);
        b.extend([mu - 10.0 * t, mu, mu + 10.0 * t]);
    }
    let g = p.gamma_total().max(1e-6);
    b.extend([eps0 - 5.0 * g, eps0 + 5.0 * g]);
    b
}

/// Steady-state population `∫ dε/2π |G|² Σ_α Γ_α(ε) f_α(ε)`.
pub fn landauer_population(p: &ModelParams, eps0: f64) -> f64 {
    let f = |e: f64| {
        let g2 = green(p, eps0, e).norm_sqr();
        let fill: f64 = Lead::ALL
            .iter()
            .map(|&l| lead_width(p, l, e) * fermi((e - p.lead_mu(l)) / p.lead_temperature(l)))
            .sum();
        g2 * fill / (2.0 * std::f64::consts::PI)
    };
    integrate_line(f, eps0, p.gamma_total().max(1e-3), &breakpoints(p, eps0), 1e-12)
}

/// Steady-state current `∫ dε/2π Γ_L Γ_R |G|² (f_L - f_R)`, positive from left to right.
pub fn landauer_current(p: &ModelParams, eps0: f64) -> f64 {
    let f = |e: f64| {
        let g2 = green(p, eps0, e).norm_sqr();
        let fl = fermi((e - p.mu_l) / p.temperature_l);
        let fr = fermi((e - p.mu_r) / p.temperature_r);
        lead_width(p, Lead::Left, e) * lead_width(p, Lead::Right, e) * g2 * (fl - fr) / (2.0 * std::f64::consts::PI)
    };
    integrate_line(f, eps0, p.gamma_total().max(1e-3), &breakpoints(p, eps0), 1e-13)
}

/// Normalized harmonic-oscillator eigenfunction `ψ_n(x)` (dimensionless coordinate).
pub fn hermite_function(n: usize, x: f64) -> f64 {
    let mut h0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if n == 0 {
        return h0;
    }
    let mut h1 = std::f64::consts::SQRT_2 * x * h0;
    for k in 1..n {
        let kf = k as f64;
        let h2 = (2.0 / (kf + 1.0)).sqrt() * x * h1 - (kf / (kf + 1.0)).sqrt() * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// `∫ ψ_m(x) ψ_n(x - shift) dx` by quadrature.
pub fn shifted_overlap(m: usize, n: usize, shift: f64) -> f64 {
    let f = |x: f64| hermite_function(m, x) * hermite_function(n, x - shift);
    let half = 12.0 + shift.abs() + ((m.max(n) as f64) * 2.0).sqrt() * 2.0;
    integrate(f, -half, half, &[0.0, shift], 1e-13)
}
