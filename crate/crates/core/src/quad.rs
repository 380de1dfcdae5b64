//! Fixed quadrature rules.

use crate::error::Result;

const GL4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Composite 4-point Gauss–Legendre on `panels` equal panels of `[a, b]`.
pub fn gauss_legendre_composite<F>(a: f64, b: f64, panels: usize, mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        for (node, w) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
            sum += w * f(mid + 0.5 * h * node)?;
        }
    }
    Ok(sum * 0.5 * h)
}

/// Two-point Gauss abscissae on `[0, 1]` with weights 1/2 each.
pub const GAUSS2_UNIT: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

/// Composite trapezoid rule over samples on a uniform grid with spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_septic_exactly() {
        let v = gauss_legendre_composite(0.0, 2.0, 1, |x| Ok(x.powi(7))).unwrap();
        assert!((v - 32.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_sine_mean() {
        let v = gauss_legendre_composite(0.0, 1.0, 64, |y| {
            Ok((2.0 * std::f64::consts::PI * y).sin().powi(2))
        })
        .unwrap();
        assert!((v - 0.5).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_linear_exact() {
        let xs: Vec<f64> = (0..=10).map(|i| 2.0 + 3.0 * i as f64 / 10.0).collect();
        assert!((trapezoid(&xs, 0.1) - 3.5).abs() < 1e-14);
    }
}
