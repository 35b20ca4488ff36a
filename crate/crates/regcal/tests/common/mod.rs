//! Test-side oracles, written independently of the library code they
//! check: Gauss-Hermite quadrature built from scratch, brute-force
//! grid-search maximum-likelihood fits, and a duplicate of the ARD
//! kernel formula so kernel construction is cross-checked rather than
//! shared.
#![allow(dead_code)]

use regcal::numerics::{sigmoid, SymmetricMatrix};

/// Physicists' Hermite polynomial H_n evaluated by the three-term
/// recurrence. Values stay inside f64 range for n <= 64 over the node
/// span.
fn hermite(n: usize, x: f64) -> f64 {
    let mut h_prev = 1.0;
    if n == 0 {
        return h_prev;
    }
    let mut h = 2.0 * x;
    for k in 1..n {
        let next = 2.0 * x * h - 2.0 * k as f64 * h_prev;
        h_prev = h;
        h = next;
    }
    h
}

/// 64-node Gauss-Hermite rule for ∫ f(x) e^{-x²} dx. Nodes are found by
/// a bisection cascade over the interlacing property (roots of H_{k+1}
/// separate the roots of H_k, all inside ±sqrt(2k+3)); weights use the
/// classical closed form. The rule verifies itself against exact
/// Gaussian moments before being returned.
pub fn gauss_hermite_64() -> (Vec<f64>, Vec<f64>) {
    let n = 64;
    let mut roots: Vec<f64> = vec![0.0]; // H_1 = 2x
    for k in 2..=n {
        let bound = (2.0 * k as f64 + 1.0).sqrt();
        let mut brackets = Vec::with_capacity(k + 1);
        brackets.push(-bound);
        brackets.extend_from_slice(&roots);
        brackets.push(bound);
        let mut next = Vec::with_capacity(k);
        for w in brackets.windows(2) {
            let (mut a, mut b) = (w[0], w[1]);
            let fa = hermite(k, a);
            assert!(
                fa * hermite(k, b) < 0.0,
                "interlacing bracket failed at k={k}"
            );
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid == a || mid == b {
                    break;
                }
                if fa * hermite(k, mid) <= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            next.push(0.5 * (a + b));
        }
        roots = next;
    }

    // w_i = 2^{n-1} n! sqrt(pi) / (n H_{n-1}(x_i))^2
    let factorial: f64 = (1..=n).map(|i| i as f64).product();
    let numerator = 2f64.powi(n as i32 - 1) * factorial * std::f64::consts::PI.sqrt();
    let weights: Vec<f64> = roots
        .iter()
        .map(|&x| {
            let d = n as f64 * hermite(n - 1, x);
            numerator / (d * d)
        })
        .collect();

    let sqrt_pi = std::f64::consts::PI.sqrt();
    let m0: f64 = weights.iter().sum();
    let m2: f64 = roots.iter().zip(&weights).map(|(x, w)| w * x * x).sum();
    let m4: f64 = roots
        .iter()
        .zip(&weights)
        .map(|(x, w)| w * x * x * x * x)
        .sum();
    assert!((m0 / sqrt_pi - 1.0).abs() < 1e-12, "zeroth moment {m0}");
    assert!((m2 / (0.5 * sqrt_pi) - 1.0).abs() < 1e-12, "second moment");
    assert!((m4 / (0.75 * sqrt_pi) - 1.0).abs() < 1e-11, "fourth moment");
    for i in 0..n / 2 {
        assert!((roots[i] + roots[n - 1 - i]).abs() < 1e-13, "asymmetric nodes");
    }
    (roots, weights)
}

/// ∫ sigmoid(f) N(f; mu, var) df by Gauss-Hermite substitution.
pub fn gh_sigmoid_integral(mu: f64, var: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let scale = (2.0 * var).sqrt();
    let sum: f64 = nodes
        .iter()
        .zip(weights)
        .map(|(&x, &w)| w * sigmoid(mu + scale * x))
        .sum();
    sum / std::f64::consts::PI.sqrt()
}

/// The ARD RBF kernel over (q, t) pairs, written out again here so the
/// library's construction has an external reference.
pub fn ard_kernel(q: &[f64], t: &[f64], v: f64, lq: f64, lt: f64) -> SymmetricMatrix {
    assert_eq!(q.len(), t.len());
    SymmetricMatrix::from_lower_fn(q.len(), |i, row| {
        for (j, slot) in row.iter_mut().enumerate() {
            let dq = (q[i] - q[j]) / lq;
            let dt = (t[i] - t[j]) / lt;
            *slot = v * (-0.5 * (dq * dq + dt * dt)).exp();
        }
    })
}

fn bernoulli_nll(etas: impl Iterator<Item = (f64, bool)>) -> f64 {
    etas.map(|(eta, y)| {
        let signed = if y { eta } else { -eta };
        // -ln sigmoid(signed), stably
        if signed > 0.0 {
            (-signed).exp().ln_1p()
        } else {
            -signed + signed.exp().ln_1p()
        }
    })
    .sum()
}

pub fn logistic_nll(scores: &[f64], labels: &[bool], gamma: f64, delta: f64) -> f64 {
    bernoulli_nll(
        scores
            .iter()
            .zip(labels)
            .map(|(&s, &y)| (gamma * s + delta, y)),
    )
}

pub fn beta_nll(z: &[(f64, f64)], labels: &[bool], a: f64, b: f64, m: f64) -> f64 {
    bernoulli_nll(
        z.iter()
            .zip(labels)
            .map(|(&(z1, z2), &y)| (m + a * z1 + b * z2, y)),
    )
}

fn axis(center: f64, half_span: f64, step: f64) -> Vec<f64> {
    let steps = (half_span / step).round() as i64;
    (-steps..=steps).map(|i| center + i as f64 * step).collect()
}

/// Brute-force MLE for the logistic calibrator over a coarse-then-fine
/// parameter grid centered on the generating values.
pub fn logistic_grid_mle(scores: &[f64], labels: &[bool], center: (f64, f64)) -> (f64, f64) {
    let mut best = (center.0, center.1);
    let mut best_nll = f64::INFINITY;
    let mut search = |g_axis: &[f64], d_axis: &[f64], best: &mut (f64, f64)| {
        for &g in g_axis {
            for &d in d_axis {
                let nll = logistic_nll(scores, labels, g, d);
                if nll < best_nll {
                    best_nll = nll;
                    *best = (g, d);
                }
            }
        }
    };
    search(
        &axis(center.0, 1.0, 0.05),
        &axis(center.1, 1.0, 0.05),
        &mut best,
    );
    let coarse = best;
    search(
        &axis(coarse.0, 0.06, 0.01),
        &axis(coarse.1, 0.06, 0.01),
        &mut best,
    );
    best
}

/// Brute-force MLE for the beta calibrator on its log-feature
/// representation; same two-stage grid.
pub fn beta_grid_mle(
    scores: &[f64],
    labels: &[bool],
    center: (f64, f64, f64),
) -> (f64, f64, f64) {
    let z: Vec<(f64, f64)> = scores
        .iter()
        .map(|&s| {
            let s = s.clamp(1e-12, 1.0 - 1e-12);
            (s.ln(), -(1.0 - s).ln())
        })
        .collect();
    let mut best = center;
    let mut best_nll = f64::INFINITY;
    let mut search =
        |a_axis: &[f64], b_axis: &[f64], m_axis: &[f64], best: &mut (f64, f64, f64)| {
            for &a in a_axis {
                for &b in b_axis {
                    for &m in m_axis {
                        let nll = beta_nll(&z, labels, a, b, m);
                        if nll < best_nll {
                            best_nll = nll;
                            *best = (a, b, m);
                        }
                    }
                }
            }
        };
    search(
        &axis(center.0, 1.0, 0.1),
        &axis(center.1, 1.0, 0.1),
        &axis(center.2, 0.5, 0.1),
        &mut best,
    );
    let coarse = best;
    search(
        &axis(coarse.0, 0.12, 0.02),
        &axis(coarse.1, 0.12, 0.02),
        &axis(coarse.2, 0.12, 0.02),
        &mut best,
    );
    best
}

/// 5-point centered moving average; ends use the available window.
pub fn smooth_5(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 2).min(n - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Strict interior maxima after collapsing equal-value plateaus, so a
/// flat floor region never counts as a peak.
pub fn count_peaks(values: &[f64]) -> usize {
    let mut collapsed: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if collapsed.last() != Some(&v) {
            collapsed.push(v);
        }
    }
    collapsed
        .windows(3)
        .filter(|w| w[1] > w[0] && w[1] > w[2])
        .count()
}
