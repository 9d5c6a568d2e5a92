//! Small dense-vector helpers over `&[f64]` slices.

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Composite trapezoid rule on a uniform grid.
pub(crate) fn trapezoid(dt: f64, samples: &[f64]) -> f64 {
    match samples.len() {
        0 | 1 => 0.0,
        n => {
            let interior: f64 = samples[1..n - 1].iter().sum();
            dt * (0.5 * samples[0] + interior + 0.5 * samples[n - 1])
        }
    }
}

/// Running trapezoid integral; `out[0] = 0` and `out[m]` integrates up to node `m`.
pub(crate) fn cumulative_trapezoid(dt: f64, samples: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut acc = 0.0;
    for (m, s) in samples.iter().enumerate() {
        if m > 0 {
            acc += 0.5 * dt * (samples[m - 1] + s);
        }
        out.push(acc);
    }
    out
}

/// Halton radical inverse of `index` in the given prime `base`.
pub(crate) fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Deterministic low-discrepancy points in the closed ball `B(center, radius)`.
///
/// Halton points in `[-1, 1]^d` are squashed radially onto the unit ball
/// (`x -> x * |x|_inf / |x|_2`), so the cube boundary lands on the sphere.
pub(crate) fn halton_ball(center: &[f64], radius: f64, count: usize) -> Vec<Vec<f64>> {
    let d = center.len();
    assert!(d <= PRIMES.len(), "halton_ball supports up to {} dims", PRIMES.len());
    (1..=count as u64)
        .map(|i| {
            let cube: Vec<f64> = (0..d)
                .map(|j| 2.0 * radical_inverse(i, PRIMES[j]) - 1.0)
                .collect();
            let inf = cube.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let two = norm(&cube);
            let scale = if two > 0.0 { inf / two } else { 0.0 };
            cube.iter()
                .zip(center)
                .map(|(x, c)| c + radius * scale * x)
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_is_exact_for_linear_samples() {
        let dt = 0.25;
        let samples: Vec<f64> = (0..=4).map(|m| 3.0 * m as f64 * dt + 1.0).collect();
        // integral of 3t + 1 over [0, 1]
        assert!((trapezoid(dt, &samples) - 2.5).abs() < 1e-15);
        let cum = cumulative_trapezoid(dt, &samples);
        assert_eq!(cum[0], 0.0);
        assert!((cum[4] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn halton_points_stay_in_ball() {
        let pts = halton_ball(&[1.0, -2.0, 0.5], 2.0, 2000);
        let mut max_r: f64 = 0.0;
        for p in &pts {
            let r = dist(p, &[1.0, -2.0, 0.5]);
            assert!(r <= 2.0 + 1e-12);
            max_r = max_r.max(r);
        }
        assert!(max_r > 1.9);
    }
}
