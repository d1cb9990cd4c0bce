//! Generalized gradient-direction features.
//!
//! For each order w in 1..=3 the image is filtered w times with the
//! horizontal and the vertical Sobel kernel; the per-pixel ratio of the
//! column response to the row response is then squashed through an S-shaped
//! mapping function.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagekit::{to_vector, ImageMatrix};

/// Number of gradient orders in a [`FeatureSet`].
pub const ORDERS: usize = 3;

pub const DEFAULT_EPS: f64 = 1e-8;
pub const DEFAULT_U: f64 = 7.3;
pub const DEFAULT_V: f64 = 0.51;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Axis {
    /// Differences down the rows, smoothing across columns.
    Row,
    /// Differences across columns, smoothing down the rows.
    Col,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingKind {
    Arctan,
    Tanh,
    Softsign,
    Sigmoid,
}

impl MappingKind {
    pub fn apply(self, k: f64) -> f64 {
        match self {
            MappingKind::Arctan => k.atan(),
            MappingKind::Tanh => k.tanh(),
            MappingKind::Softsign => k / (1.0 + k.abs()),
            MappingKind::Sigmoid => 1.0 / (1.0 + (-k).exp()),
        }
    }

    /// Open interval the function maps into.
    pub fn range(self) -> (f64, f64) {
        match self {
            MappingKind::Arctan => (-FRAC_PI_2, FRAC_PI_2),
            MappingKind::Tanh | MappingKind::Softsign => (-1.0, 1.0),
            MappingKind::Sigmoid => (0.0, 1.0),
        }
    }
}

impl std::str::FromStr for MappingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "arctan" | "atan" => Ok(MappingKind::Arctan),
            "tanh" => Ok(MappingKind::Tanh),
            "softsign" => Ok(MappingKind::Softsign),
            "sigmoid" => Ok(MappingKind::Sigmoid),
            other => Err(Error::arg(format!("unknown mapping function '{other}'"))),
        }
    }
}

/// S-shaped mapping `k -> kind(u * (k - v))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingFunction {
    pub kind: MappingKind,
    pub u: f64,
    pub v: f64,
}

impl Default for MappingFunction {
    fn default() -> Self {
        Self {
            kind: MappingKind::Tanh,
            u: DEFAULT_U,
            v: DEFAULT_V,
        }
    }
}

impl MappingFunction {
    pub fn new(kind: MappingKind, u: f64, v: f64) -> Self {
        Self { kind, u, v }
    }

    #[inline]
    pub fn eval(&self, k: f64) -> f64 {
        self.kind.apply(self.u * (k - self.v))
    }
}

/// The three per-order feature vectors of one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    orders: [Vec<f64>; ORDERS],
}

impl FeatureSet {
    pub fn new(orders: [Vec<f64>; ORDERS]) -> Result<Self> {
        let d = orders[0].len();
        if orders.iter().any(|f| f.len() != d) {
            return Err(Error::arg("feature orders differ in length"));
        }
        Ok(Self { orders })
    }

    /// Feature vector of gradient order `w` (1-based).
    pub fn order(&self, w: usize) -> &[f64] {
        &self.orders[w - 1]
    }

    pub fn orders(&self) -> &[Vec<f64>; ORDERS] {
        &self.orders
    }

    pub fn dim(&self) -> usize {
        self.orders[0].len()
    }

    pub fn into_orders(self) -> [Vec<f64>; ORDERS] {
        self.orders
    }
}

fn check_size(img: &ImageMatrix) -> Result<()> {
    if img.height() < 3 || img.width() < 3 {
        return Err(Error::arg(format!(
            "image {}x{} is smaller than the 3x3 kernel",
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

/// 3x3 Sobel response with replicate padding, evaluated in separable form
/// (central difference along `axis`, [1, 2, 1] smoothing across it).
///
/// The row kernel is `[-1 -2 -1; 0 0 0; 1 2 1]`, the column kernel its
/// transpose.
fn sobel(img: &ImageMatrix, axis: Axis) -> ImageMatrix {
    let (h, w) = img.shape();
    let p = |r: isize, c: isize| img.get_clamped(r, c);
    let diff = ImageMatrix::from_fn(h, w, |r, c| {
        let (r, c) = (r as isize, c as isize);
        match axis {
            Axis::Row => p(r + 1, c) - p(r - 1, c),
            Axis::Col => p(r, c + 1) - p(r, c - 1),
        }
    })
    .expect("shape preserved");
    let q = |r: isize, c: isize| diff.get_clamped(r, c);
    ImageMatrix::from_fn(h, w, |r, c| {
        let (r, c) = (r as isize, c as isize);
        match axis {
            Axis::Row => q(r, c - 1) + 2.0 * q(r, c) + q(r, c + 1),
            Axis::Col => q(r - 1, c) + 2.0 * q(r, c) + q(r + 1, c),
        }
    })
    .expect("shape preserved")
}

/// Row and column Sobel responses `(g_r, g_c)`, same shape as the input.
pub fn sobel_gradients(img: &ImageMatrix) -> Result<(ImageMatrix, ImageMatrix)> {
    check_size(img)?;
    Ok((sobel(img, Axis::Row), sobel(img, Axis::Col)))
}

/// Elementwise `g_c / g_r`, with denominators smaller than `eps` in
/// magnitude replaced by `sign(g_r) * eps` (sign(0) = +1).
pub fn direction_ratio(g_r: &ImageMatrix, g_c: &ImageMatrix, eps: f64) -> Result<ImageMatrix> {
    if g_r.shape() != g_c.shape() {
        return Err(Error::arg("gradient maps differ in shape"));
    }
    let pixels = g_r
        .pixels()
        .iter()
        .zip(g_c.pixels())
        .map(|(&den, &num)| {
            let den = if den.abs() < eps {
                if den < 0.0 {
                    -eps
                } else {
                    eps
                }
            } else {
                den
            };
            num / den
        })
        .collect();
    ImageMatrix::new(g_r.height(), g_r.width(), pixels)
}

/// Order-1..3 gradient-direction features of `img`.
pub fn extract_features(img: &ImageMatrix, map: &MappingFunction, eps: f64) -> Result<FeatureSet> {
    check_size(img)?;
    let mut g_r = img.clone();
    let mut g_c = img.clone();
    let mut orders: [Vec<f64>; ORDERS] = Default::default();
    for slot in orders.iter_mut() {
        g_r = sobel(&g_r, Axis::Row);
        g_c = sobel(&g_c, Axis::Col);
        let ratio = direction_ratio(&g_r, &g_c, eps)?;
        *slot = to_vector(&ratio.map(|k| map.eval(k)));
    }
    FeatureSet::new(orders)
}

/// Raw-intensity feature: the flattened image itself.
pub fn intensity_feature(img: &ImageMatrix) -> Vec<f64> {
    to_vector(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ImageMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageMatrix::from_fn(h, w, |_, _| rng.gen()).unwrap()
    }

    #[test]
    fn constant_has_zero_gradient() {
        let img = ImageMatrix::filled(6, 5, 0.4).unwrap();
        let (gr, gc) = sobel_gradients(&img).unwrap();
        assert!(gr.pixels().iter().chain(gc.pixels()).all(|&g| g == 0.0));
    }

    #[test]
    fn horizontal_ramp() {
        let img = ImageMatrix::from_fn(6, 7, |_, c| c as f64).unwrap();
        let (gr, gc) = sobel_gradients(&img).unwrap();
        for r in 1..5 {
            for c in 1..6 {
                assert_eq!(gr.get(r, c), 0.0);
                assert_eq!(gc.get(r, c), 8.0);
            }
        }
    }

    #[test]
    fn center_pixel_matches_expanded_sum() {
        let img = random_image(5, 5, 11);
        let (gr, gc) = sobel_gradients(&img).unwrap();
        let p = |r: usize, c: usize| img.get(r, c);
        // hand-expanded around (2, 2)
        let expect_r = -p(1, 1) - 2.0 * p(1, 2) - p(1, 3) + p(3, 1) + 2.0 * p(3, 2) + p(3, 3);
        let expect_c = -p(1, 1) - 2.0 * p(2, 1) - p(3, 1) + p(1, 3) + 2.0 * p(2, 3) + p(3, 3);
        assert!((gr.get(2, 2) - expect_r).abs() < 1e-14);
        assert!((gc.get(2, 2) - expect_c).abs() < 1e-14);
    }

    #[test]
    fn too_small_for_kernel() {
        let img = ImageMatrix::filled(2, 5, 0.0).unwrap();
        assert!(matches!(sobel_gradients(&img), Err(Error::Argument(_))));
        assert!(extract_features(&img, &MappingFunction::default(), DEFAULT_EPS).is_err());
    }

    #[test]
    fn ratio_guard() {
        let gr = ImageMatrix::new(1, 3, vec![2.0, 0.0, -1e-9]).unwrap();
        let gc = ImageMatrix::new(1, 3, vec![2.0, 3.0, 1.0]).unwrap();
        let k = direction_ratio(&gr, &gc, 1e-6).unwrap();
        assert_eq!(k.get(0, 0), 1.0);
        assert!((k.get(0, 1) - 3e6).abs() < 1e-6);
        assert!((k.get(0, 2) + 1e6).abs() < 1e-6);

        let zero = ImageMatrix::filled(1, 3, 0.0).unwrap();
        let k = direction_ratio(&gr, &zero, 1e-6).unwrap();
        assert!(k.pixels().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_image_features() {
        let img = ImageMatrix::filled(8, 8, 0.3).unwrap();
        let f = extract_features(&img, &MappingFunction::default(), DEFAULT_EPS).unwrap();
        // tanh(7.3 * (0 - 0.51)), evaluated independently
        let expect = -0.998_833_137_109_158_6;
        for w in 1..=3 {
            for &x in f.order(w) {
                assert!((x - expect).abs() < 1e-6, "{x}");
            }
        }
    }

    #[test]
    fn sigmoid_at_shift_is_half() {
        let m = MappingFunction::new(MappingKind::Sigmoid, 7.3, 0.51);
        assert_eq!(m.eval(0.51), 0.5);
    }

    #[test]
    fn first_order_is_composition() {
        let img = random_image(9, 7, 5);
        let map = MappingFunction::new(MappingKind::Softsign, 2.0, 0.1);
        let f = extract_features(&img, &map, 1e-8).unwrap();
        let (gr, gc) = sobel_gradients(&img).unwrap();
        let direct = to_vector(
            &direction_ratio(&gr, &gc, 1e-8)
                .unwrap()
                .map(|k| map.eval(k)),
        );
        assert_eq!(f.order(1), direct.as_slice());
    }

    #[test]
    fn intensity_is_flattening() {
        let img = random_image(4, 3, 2);
        assert_eq!(intensity_feature(&img), to_vector(&img));
    }

    #[test]
    fn scaled_image_keeps_ratios() {
        let img = random_image(10, 8, 9);
        let scaled = img.map(|p| p * 0.37);
        let eps = 1e-8;
        let (gr, gc) = sobel_gradients(&img).unwrap();
        let (sr, sc) = sobel_gradients(&scaled).unwrap();
        let a = direction_ratio(&gr, &gc, eps).unwrap();
        let b = direction_ratio(&sr, &sc, eps).unwrap();
        for i in 0..a.len() {
            if gr.pixels()[i].abs() >= eps / 0.37 {
                let (x, y) = (a.pixels()[i], b.pixels()[i]);
                assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }

    fn kinds() -> impl Strategy<Value = MappingKind> {
        prop_oneof![
            Just(MappingKind::Arctan),
            Just(MappingKind::Tanh),
            Just(MappingKind::Softsign),
            Just(MappingKind::Sigmoid),
        ]
    }

    proptest! {
        #[test]
        fn mapping_is_monotone(kind in kinds(), u in 0.01f64..20.0, v in -2.0f64..2.0,
                               a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let m = MappingFunction::new(kind, u, v);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(m.eval(lo) <= m.eval(hi));
        }

        #[test]
        fn features_stay_in_range(kind in kinds(), seed in 0u64..1000) {
            let img = random_image(6, 5, seed);
            let f = extract_features(&img, &MappingFunction::new(kind, 7.3, 0.51), DEFAULT_EPS).unwrap();
            let (lo, hi) = kind.range();
            for w in 1..=3 {
                for &x in f.order(w) {
                    prop_assert!(x >= lo && x <= hi);
                }
            }
        }
    }
}
