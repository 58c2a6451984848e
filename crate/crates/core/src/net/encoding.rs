use std::f64::consts::PI;

use crate::lightfield::NormalizedCoord;

/// Fourier features of a 2-D coordinate: `4·L` values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedCoord {
    pub values: Vec<f64>,
}

/// `(sin(2^j·π·d_c), cos(2^j·π·d_c))` for each component `c`, then each
/// level `j = 0..L`, in that nesting order.
///
/// `2^j·d` and its remainder modulo 2 are exact in binary floating point, so
/// the trig functions only ever see arguments in `[0, 2π)`.
pub fn positional_encode(coord: NormalizedCoord, levels: usize) -> EncodedCoord {
    let mut values = Vec::with_capacity(4 * levels);
    for &d in &coord.d {
        let mut scaled = d;
        for _ in 0..levels {
            let phase = scaled % 2.0;
            let (s, c) = (PI * phase).sin_cos();
            values.push(s);
            values.push(c);
            scaled *= 2.0;
        }
    }
    EncodedCoord { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn origin_is_sin_zero_cos_one() {
        let e = positional_encode(NormalizedCoord::new(0.0, 0.0).unwrap(), 3);
        assert_eq!(e.values.len(), 12);
        for pair in e.values.chunks(2) {
            assert_eq!(pair, &[0.0, 1.0]);
        }
    }

    #[test]
    fn half_and_one() {
        let e = positional_encode(NormalizedCoord::new(0.5, 1.0).unwrap(), 1);
        let expected = [1.0, 0.0, 0.0, -1.0];
        for (a, b) in e.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-7, "{:?}", e.values);
        }
    }

    #[test]
    fn forty_levels_give_160_features() {
        let e = positional_encode(NormalizedCoord::new(0.3, 0.7).unwrap(), 40);
        assert_eq!(e.values.len(), 160);
    }

    #[test]
    fn matches_direct_formula_at_low_levels() {
        let coord = NormalizedCoord::new(0.123, 0.987).unwrap();
        let e = positional_encode(coord, 8);
        for (c, &d) in coord.d.iter().enumerate() {
            for j in 0..8 {
                let arg = 2f64.powi(j as i32) * PI * d;
                let i = c * 16 + 2 * j;
                assert!((e.values[i] - arg.sin()).abs() < 1e-12);
                assert!((e.values[i + 1] - arg.cos()).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn bounded_and_sized(x in 0.0f64..=1.0, y in 0.0f64..=1.0, l in 1usize..48) {
            let e = positional_encode(NormalizedCoord::new(x, y).unwrap(), l);
            prop_assert_eq!(e.values.len(), 4 * l);
            prop_assert!(e.values.iter().all(|v| (-1.0..=1.0).contains(v)));
        }

        #[test]
        fn lipschitz_in_each_component(x in 0.0f64..=1.0, y in 0.0f64..=1.0, h in -1e-3f64..1e-3, l in 1usize..12) {
            let x2 = (x + h).clamp(0.0, 1.0);
            let a = positional_encode(NormalizedCoord::new(x, y).unwrap(), l);
            let b = positional_encode(NormalizedCoord::new(x2, y).unwrap(), l);
            let bound = 2f64.powi(l as i32 - 1) * PI * (x2 - x).abs() + 1e-12;
            for (p, q) in a.values.iter().zip(&b.values) {
                prop_assert!((p - q).abs() <= bound);
            }
        }
    }
}
