use crate::linalg::{mat3_det, mat3_inverse, mat3_mul, Mat3, IDENTITY3};
use crate::{Error, Result};
use num_traits::Float;

/// Smallest admissible |det| after normalization.
pub const MIN_ABS_DET: f64 = 1e-12;

/// A 3x3 projective map, always stored with `h[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Mat3,
}

impl Default for Homography {
    fn default() -> Self {
        Self::identity()
    }
}

impl Homography {
    pub const fn identity() -> Self {
        Self { m: IDENTITY3 }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    /// Rotation by `angle` and isotropic `scale` about the origin, then
    /// translation by `(tx, ty)`.
    pub fn similarity(scale: f64, angle: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            m: [
                [scale * c, -scale * s, tx],
                [scale * s, scale * c, ty],
                [0.0, 0.0, 1.0],
            ],
        }
    }

    /// Normalizes `m` by its (3,3) element and checks invertibility.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("homography"));
        }
        let s = m[2][2];
        if s.abs() < 1e-14 {
            return Err(Error::SingularHomography);
        }
        let mut n = m;
        for v in n.iter_mut().flatten() {
            *v /= s;
        }
        n[2][2] = 1.0;
        if !(mat3_det(&n).abs() > MIN_ABS_DET) {
            return Err(Error::SingularHomography);
        }
        Ok(Self { m: n })
    }

    /// Row-major coefficients.
    pub fn from_coefficients(c: [f64; 9]) -> Result<Self> {
        Self::from_matrix([[c[0], c[1], c[2]], [c[3], c[4], c[5]], [c[6], c[7], c[8]]])
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.m
    }

    pub fn coefficients(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn determinant(&self) -> f64 {
        mat3_det(&self.m)
    }

    /// Maps a point; returns non-finite coordinates for points sent to infinity.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        (
            (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
            (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
        )
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = mat3_inverse(&self.m).ok_or(Error::SingularHomography)?;
        Self::from_matrix(inv)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        Self::from_matrix(mat3_mul(&self.m, &other.m))
    }

    /// Sum of absolute differences between the normalized matrix and I₃.
    pub fn sad_to_identity(&self) -> f64 {
        sad_to_identity(self)
    }

    /// Largest displacement between `self` and `other` over the four corners
    /// of a `width`x`height` frame.
    pub fn max_corner_distance(&self, other: &Homography, width: usize, height: usize) -> f64 {
        let w = (width.max(1) - 1) as f64;
        let h = (height.max(1) - 1) as f64;
        [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
            .iter()
            .map(|&(x, y)| {
                let (ax, ay) = self.apply(x, y);
                let (bx, by) = other.apply(x, y);
                ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Σ |hᵢⱼ − I₃ᵢⱼ| over all nine entries of a normalized homography.
pub fn sad_to_identity(h: &Homography) -> f64 {
    let mut sad = 0.0;
    for (i, row) in h.m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            sad += (v - IDENTITY3[i][j]).abs();
        }
    }
    sad
}
