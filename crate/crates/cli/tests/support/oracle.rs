//! Independent hand evaluation of the model formulas. Nothing here calls
//! into the library; each function is the textbook expression written out
//! once more so the library can be checked against it.

pub const LN_2: f64 = std::f64::consts::LN_2;

pub fn distance(ux: f64, uy: f64, sx: f64, sy: f64, h: f64) -> f64 {
    ((ux - sx).powi(2) + (uy - sy).powi(2) + h * h).sqrt()
}

pub fn path_gain(g0: f64, d: f64) -> f64 {
    g0 / (d * d)
}

/// `|√(κ/(κ+1)) + √(1/(κ+1))·h̄|²` with the complex magnitude expanded.
pub fn rician(k: f64, re: f64, im: f64) -> f64 {
    let los = (k / (k + 1.0)).sqrt();
    let nlos = (1.0 / (k + 1.0)).sqrt();
    let x = los + nlos * re;
    let y = nlos * im;
    x * x + y * y
}

/// `B·log2(1 + p_k·h_k / (Σ_{l≠k} p_l·h_l + σ²))`.
pub fn rate(b: f64, noise: f64, p: &[f64], h: &[f64], k: usize) -> f64 {
    let mut interference = 0.0;
    for l in 0..p.len() {
        if l != k {
            interference += p[l] * h[l];
        }
    }
    b * (1.0 + p[k] * h[k] / (interference + noise)).ln() / LN_2
}

pub fn local_latency(alpha: f64, d: f64, phi: f64, f: f64) -> f64 {
    (1.0 - alpha) * phi * d / f
}

pub fn local_energy(kappa: f64, f: f64, alpha: f64, phi: f64, d: f64) -> f64 {
    kappa * f * f * (1.0 - alpha) * phi * d
}

pub fn offload_latency(alpha: f64, d: f64, r: f64) -> f64 {
    alpha * d / r
}

pub fn mec_latency(alpha: f64, d: f64, phi_s: f64, beta: f64, f_s: f64) -> f64 {
    alpha * phi_s * d / (beta * f_s)
}

pub fn total_latency(local: f64, off: f64, mec: f64) -> f64 {
    if local > off + mec {
        local
    } else {
        off + mec
    }
}

pub fn equalizing_alpha(a: f64, r: f64, s: f64, beta: f64) -> f64 {
    a / (a + 1.0 / r + s / beta)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn reciprocal_rank_mean(ranks: &[Option<usize>]) -> f64 {
    ranks.iter().map(|r| r.map_or(0.0, |r| 1.0 / r as f64)).sum::<f64>() / ranks.len() as f64
}
