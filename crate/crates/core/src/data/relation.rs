use serde::{Deserialize, Serialize};

/// Saturation vapour pressure deficit in kPa.
///
/// `t_celsius` is air temperature, `h_fraction` is relative humidity as a
/// decimal. Values of H slightly outside [0, 1] occur in real weather data
/// and are still evaluated.
pub fn relation_vpd(t_celsius: f64, h_fraction: f64) -> f64 {
    0.6108 * (17.27 * t_celsius / (t_celsius + 237.3)).exp() * (1.0 - h_fraction)
}

/// Ground-truth relation f with residual f(x) = 0 on perfectly constructed
/// triples. The residual of a triple measures how strongly the relation is
/// broken at one time-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// x2 = x0 - x1
    Difference,
    /// x2 = x0 + x1
    Sum,
    /// x2 = x0 * x1
    Product,
    /// x2 = vpd(x0, x1) with x0 temperature, x1 humidity
    Vpd,
    /// 2D manifold: x1 = sin(2 pi x0); ignores the third argument
    SinManifold,
}

impl Relation {
    pub fn residual(&self, x0: f64, x1: f64, x2: f64) -> f64 {
        match self {
            Relation::Difference => x0 - x1 - x2,
            Relation::Sum => x0 + x1 - x2,
            Relation::Product => x0 * x1 - x2,
            Relation::Vpd => relation_vpd(x0, x1) - x2,
            Relation::SinManifold => x1 - (2.0 * std::f64::consts::PI * x0).sin(),
        }
    }

    /// Third variable implied by the first two (None for SinManifold, which
    /// has no constructed third variable).
    pub fn construct(&self, x0: f64, x1: f64) -> Option<f64> {
        match self {
            Relation::Difference => Some(x0 - x1),
            Relation::Sum => Some(x0 + x1),
            Relation::Product => Some(x0 * x1),
            Relation::Vpd => Some(relation_vpd(x0, x1)),
            Relation::SinManifold => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vpd_saturated_air_is_zero() {
        assert_eq!(relation_vpd(17.0, 1.0), 0.0);
        assert_eq!(relation_vpd(-3.5, 1.0), 0.0);
    }

    #[test]
    fn vpd_at_zero_celsius_dry_air() {
        assert!((relation_vpd(0.0, 0.0) - 0.6108).abs() < 1e-12);
    }

    #[test]
    fn vpd_reference_point() {
        // 0.6108 * exp(17.27*25/262.3) * 0.5
        let v = relation_vpd(25.0, 0.5);
        assert!((v - 1.5839).abs() < 5e-4, "vpd = {v}");
    }

    #[test]
    fn residual_zero_on_constructed_triples() {
        for rel in [Relation::Difference, Relation::Sum, Relation::Product, Relation::Vpd] {
            let x2 = rel.construct(3.7, 0.4).unwrap();
            assert_eq!(rel.residual(3.7, 0.4, x2), 0.0);
        }
    }

    #[test]
    fn addition_relation_example() {
        // x0=1, x1=2, x2=7 -> |1+2-7| = 4
        assert_eq!(Relation::Sum.residual(1.0, 2.0, 7.0).abs(), 4.0);
    }
}
