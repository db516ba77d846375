//! Gauss rules on the reference segment `[0, 1]` and the reference triangle
//! `{(x, y): x, y >= 0, x + y <= 1}`.
//!
//! Points are stored in barycentric coordinates: `[1 - t, t]` on the segment
//! and `[1 - x - y, x, y]` on the triangle. Weights sum to the reference
//! measure (1 and 1/2 respectively).

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QuadRule<const D: usize> {
    pub points: Vec<[f64; D]>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

pub type SegmentRule = QuadRule<2>;
pub type TriangleRule = QuadRule<3>;

impl<const D: usize> QuadRule<D> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; D], f64)> + '_ {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

impl SegmentRule {
    /// Reference coordinate `t` of every point.
    pub fn abscissae(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.iter().map(|(p, w)| (p[1], w))
    }
}

impl TriangleRule {
    /// Reference coordinates `(x, y)` of every point.
    pub fn reference_points(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.iter().map(|(p, w)| ([p[1], p[2]], w))
    }
}

/// Gauss-Legendre rule on `[0, 1]` exact for polynomials up to `degree`.
pub fn gauss_segment(degree: usize) -> Result<SegmentRule> {
    if degree > 9 {
        return Err(invalid(format!("segment rule of degree {degree} not available (max 9)")));
    }
    Ok(gauss_legendre((degree + 1).div_ceil(2).max(1)))
}

/// `m`-point Gauss-Legendre rule mapped to `[0, 1]` (exact to degree `2m - 1`).
pub(crate) fn gauss_legendre(m: usize) -> SegmentRule {
    assert!(m >= 1);
    let mut points = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        // Newton on P_m starting from the Chebyshev-like guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(m, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        let t = 0.5 * (1.0 - x);
        points.push([1.0 - t, t]);
        weights.push(0.5 * w);
    }
    // ascending in t
    points.reverse();
    weights.reverse();
    SegmentRule { points, weights, exactness_degree: 2 * m - 1 }
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if m == 0 { p0 } else { p1 };
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, dp)
}

/// Symmetric triangle rule with positive weights exact up to `degree`.
pub fn gauss_triangle(degree: usize) -> Result<TriangleRule> {
    let third = 1.0 / 3.0;
    let rule = match degree {
        0 | 1 => TriangleRule {
            points: vec![[third; 3]],
            weights: vec![0.5],
            exactness_degree: 1,
        },
        2 => symmetric_rule(&[], &[(1.0 / 6.0, 1.0 / 3.0)], &[], 2),
        3 | 4 => symmetric_rule(
            &[],
            &[
                (0.445_948_490_915_964_886_3, 0.223_381_589_678_011_465_7),
                (0.091_576_213_509_770_743_46, 0.109_951_743_655_321_867_6),
            ],
            &[],
            4,
        ),
        5 => symmetric_rule(
            &[0.225],
            &[
                (0.470_142_064_105_115_089_8, 0.132_394_152_788_506_180_7),
                (0.101_286_507_323_456_338_8, 0.125_939_180_544_827_152_6),
            ],
            &[],
            5,
        ),
        6 => symmetric_rule(
            &[],
            &[
                (0.249_286_745_170_910_421_3, 0.116_786_275_726_379_366_0),
                (0.063_089_014_491_502_228_34, 0.050_844_906_370_206_816_92),
            ],
            &[(0.053_145_049_844_816_947_35, 0.310_352_451_033_784_405_4, 0.082_851_075_618_373_575_19)],
            6,
        ),
        _ => return Err(invalid(format!("triangle rule of degree {degree} not available (max 6)"))),
    };
    Ok(rule)
}

/// Builds a rule from orbits of the barycentric symmetry group.
/// Weights are given relative to a total of 1 and rescaled to the reference area.
fn symmetric_rule(
    centroid: &[f64],
    two_equal: &[(f64, f64)],
    all_distinct: &[(f64, f64, f64)],
    degree: usize,
) -> TriangleRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for &w in centroid {
        points.push([1.0 / 3.0; 3]);
        weights.push(0.5 * w);
    }
    for &(a, w) in two_equal {
        let c = 1.0 - 2.0 * a;
        for p in [[a, a, c], [a, c, a], [c, a, a]] {
            points.push(p);
            weights.push(0.5 * w);
        }
    }
    for &(a, b, w) in all_distinct {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            points.push(p);
            weights.push(0.5 * w);
        }
    }
    TriangleRule { points, weights, exactness_degree: degree }
}

/// Collapsed (conical product) Gauss rule of arbitrary exactness, used where
/// the symmetric rules run out (error norms of smooth fields).
pub fn conical_triangle(degree: usize) -> TriangleRule {
    // x = u, y = v (1 - u): the Jacobian adds one degree in u
    let gu = gauss_legendre((degree + 2).div_ceil(2).max(1));
    let gv = gauss_legendre((degree + 1).div_ceil(2).max(1));
    let mut points = Vec::with_capacity(gu.len() * gv.len());
    let mut weights = Vec::with_capacity(gu.len() * gv.len());
    for (u, wu) in gu.abscissae() {
        for (v, wv) in gv.abscissae() {
            let (x, y) = (u, v * (1.0 - u));
            points.push([1.0 - x - y, x, y]);
            weights.push(wu * wv * (1.0 - u));
        }
    }
    TriangleRule { points, weights, exactness_degree: degree }
}

/// Triangle rule for degree `degree`, falling back to the conical rule above 6.
pub fn triangle_rule_at_least(degree: usize) -> TriangleRule {
    gauss_triangle(degree).unwrap_or_else(|_| conical_triangle(degree))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// ∫ x^i y^j over the reference triangle.
    fn simplex_monomial(i: usize, j: usize) -> f64 {
        factorial(i) * factorial(j) / factorial(i + j + 2)
    }

    #[test]
    fn segment_examples() {
        let r = gauss_segment(1).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.points[0][1], 0.5);
        let r = gauss_segment(3).unwrap();
        assert_eq!(r.len(), 2);
        let s: f64 = r.abscissae().map(|(t, w)| w * t * t).sum();
        assert!((s - 1.0 / 3.0).abs() < 1e-15);
        let r = gauss_segment(5).unwrap();
        assert_eq!(r.len(), 3);
        let s: f64 = r.abscissae().map(|(t, w)| w * t.powi(5)).sum();
        assert!((s - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn segment_point_counts() {
        for d in 0..=9 {
            let r = gauss_segment(d).unwrap();
            assert_eq!(r.len(), (d + 1).div_ceil(2).max(1), "degree {d}");
            assert!(r.exactness_degree >= d);
        }
        assert!(gauss_segment(10).is_err());
    }

    #[test]
    fn segment_exactness_sweep() {
        for d in 0..=9 {
            let r = gauss_segment(d).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for p in 0..=r.exactness_degree {
                let q: f64 = r.abscissae().map(|(t, w)| w * t.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-12, "degree {d} monomial {p}");
            }
        }
    }

    #[test]
    fn triangle_examples() {
        let r = gauss_triangle(1).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
        let r = gauss_triangle(2).unwrap();
        assert_eq!(r.len(), 3);
        let s: f64 = r.reference_points().map(|(p, w)| w * p[0] * p[1]).sum();
        assert!((s - 1.0 / 24.0).abs() < 1e-15);
        let r = gauss_triangle(4).unwrap();
        let s: f64 = r.reference_points().map(|(p, w)| w * p[0].powi(4)).sum();
        assert!((s - 1.0 / 30.0).abs() < 1e-15);
        assert!(gauss_triangle(7).is_err());
    }

    fn check_triangle_rule(r: &TriangleRule) {
        assert!(r.weights.iter().all(|&w| w > 0.0));
        assert!((r.weights.iter().sum::<f64>() - 0.5).abs() < 1e-14);
        for p in &r.points {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(p.iter().all(|&c| c >= 0.0));
        }
        for total in 0..=r.exactness_degree {
            for i in 0..=total {
                let j = total - i;
                let q: f64 = r.reference_points().map(|(p, w)| w * p[0].powi(i as i32) * p[1].powi(j as i32)).sum();
                assert!(
                    (q - simplex_monomial(i, j)).abs() < 1e-12,
                    "rule of degree {} fails on x^{i} y^{j}",
                    r.exactness_degree
                );
            }
        }
    }

    #[test]
    fn triangle_exactness_sweep() {
        for d in 0..=6 {
            let r = gauss_triangle(d).unwrap();
            assert!(r.exactness_degree >= d);
            check_triangle_rule(&r);
        }
    }

    #[test]
    fn conical_exactness_sweep() {
        for d in [3, 6, 8, 10] {
            check_triangle_rule(&conical_triangle(d));
        }
    }
}
