//! Fine registration: inverse-compositional Gauss-Newton on image
//! intensities over the eight homography parameters, coarse to fine.
//!
//! Both images are normalized to zero mean and unit variance first, so a
//! global gain/offset change between frames does not bias the fit.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use num_traits::Float;

use super::{View, ViewStatus};
use crate::image::pyramid;
use crate::linalg::{mat3_inverse, mat3_mul, solve, Mat3};
use crate::{Error, GrayImage, Homography, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RefineParams {
    pub levels: usize,
    pub max_iters: usize,
    /// Minimum normalized cross-correlation for success.
    pub ncc_floor: f64,
    /// Minimum fraction of template samples that must land inside the moving image.
    pub min_valid_fraction: f64,
    /// Convergence threshold on the largest corner displacement of an update, in pixels.
    pub step_tol_px: f64,
    /// Template samples per level; larger levels are visited on a regular stride.
    pub max_samples: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            levels: 3,
            max_iters: 50,
            ncc_floor: 0.8,
            min_valid_fraction: 0.25,
            step_tol_px: 1e-3,
            max_samples: 150_000,
        }
    }
}

/// Per-level optimization record.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTrace {
    /// 0 is full resolution.
    pub level: usize,
    pub iterations: usize,
    /// Mean squared residual of the normalized intensities at entry.
    pub initial_mse: f64,
    pub final_mse: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    /// Moving-to-reference homography.
    pub homography: Homography,
    pub ncc: f64,
    /// Coarsest level first.
    pub levels: Vec<LevelTrace>,
}

const TO_COARSER: Mat3 = [[0.5, 0.0, -0.25], [0.0, 0.5, -0.25], [0.0, 0.0, 1.0]];
const TO_FINER: Mat3 = [[2.0, 0.0, 0.5], [0.0, 2.0, 0.5], [0.0, 0.0, 1.0]];
const MIN_LEVEL_SIDE: usize = 24;

fn normalize_h(m: Mat3) -> Option<Mat3> {
    let s = m[2][2];
    if !(s.abs() > 1e-14) {
        return None;
    }
    let mut out = m;
    out.iter_mut().flatten().for_each(|v| *v /= s);
    out.iter().flatten().all(|v| v.is_finite()).then_some(out)
}

#[inline]
fn apply(m: &Mat3, x: f64, y: f64) -> (f64, f64) {
    let w = m[2][0] * x + m[2][1] * y + m[2][2];
    (
        (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
        (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
    )
}

fn zscore(img: &GrayImage) -> Option<GrayImage> {
    let (mean, std) = img.mean_std();
    if !(std > 1e-6) {
        return None;
    }
    Some(img.map(|v| ((f64::from(v) - mean) / std) as f32))
}

struct Sample {
    xn: f64,
    yn: f64,
    t: f64,
    sd: [f64; 8],
}

struct Frame {
    s: f64,
    cx: f64,
    cy: f64,
}

impl Frame {
    fn of(img: &GrayImage) -> Self {
        Self {
            s: img.width().max(img.height()) as f64 / 2.0,
            cx: (img.width() - 1) as f64 / 2.0,
            cy: (img.height() - 1) as f64 / 2.0,
        }
    }

    fn to_norm(&self) -> Mat3 {
        [
            [1.0 / self.s, 0.0, -self.cx / self.s],
            [0.0, 1.0 / self.s, -self.cy / self.s],
            [0.0, 0.0, 1.0],
        ]
    }

    fn from_norm(&self) -> Mat3 {
        [
            [self.s, 0.0, self.cx],
            [0.0, self.s, self.cy],
            [0.0, 0.0, 1.0],
        ]
    }
}

fn stride_for(img: &GrayImage, max_samples: usize) -> usize {
    let n = (img.width() * img.height()) as f64;
    (n / max_samples.max(1) as f64).sqrt().ceil().max(1.0) as usize
}

fn template_samples(t: &GrayImage, frame: &Frame, stride: usize) -> Vec<Sample> {
    let (w, h) = (t.width(), t.height());
    let mut out = Vec::new();
    for y in (1..h - 1).step_by(stride) {
        for x in (1..w - 1).step_by(stride) {
            let gx = 0.5 * f64::from(t.get(x + 1, y) - t.get(x - 1, y)) * frame.s;
            let gy = 0.5 * f64::from(t.get(x, y + 1) - t.get(x, y - 1)) * frame.s;
            let xn = (x as f64 - frame.cx) / frame.s;
            let yn = (y as f64 - frame.cy) / frame.s;
            out.push(Sample {
                xn,
                yn,
                t: f64::from(t.get(x, y)),
                sd: [
                    gx * xn,
                    gy * xn,
                    gx * yn,
                    gy * yn,
                    gx,
                    gy,
                    -gx * xn * xn - gy * xn * yn,
                    -gx * xn * yn - gy * yn * yn,
                ],
            });
        }
    }
    out
}

struct PassResult {
    mse: f64,
    valid: usize,
    hessian: [[f64; 8]; 8],
    rhs: [f64; 8],
}

fn gn_pass(
    samples: &[Sample],
    moving: &GrayImage,
    frame: &Frame,
    wn: &Mat3,
    with_normal_eq: bool,
) -> PassResult {
    let mut hessian = [[0.0; 8]; 8];
    let mut rhs = [0.0; 8];
    let mut sse = 0.0;
    let mut valid = 0;
    for s in samples {
        let (un, vn) = apply(wn, s.xn, s.yn);
        let Some(iv) = moving.sample_bilinear(un * frame.s + frame.cx, vn * frame.s + frame.cy)
        else {
            continue;
        };
        let e = iv - s.t;
        sse += e * e;
        valid += 1;
        if with_normal_eq {
            for i in 0..8 {
                rhs[i] += s.sd[i] * e;
                for j in i..8 {
                    hessian[i][j] += s.sd[i] * s.sd[j];
                }
            }
        }
    }
    for i in 0..8 {
        for j in 0..i {
            hessian[i][j] = hessian[j][i];
        }
    }
    PassResult {
        mse: if valid > 0 {
            sse / valid as f64
        } else {
            f64::INFINITY
        },
        valid,
        hessian,
        rhs,
    }
}

fn delta_matrix(p: &[f64; 8]) -> Mat3 {
    [
        [1.0 + p[0], p[2], p[4]],
        [p[1], 1.0 + p[3], p[5]],
        [p[6], p[7], 1.0],
    ]
}

fn max_corner_shift(a: &Mat3, b: &Mat3, frame: &Frame) -> f64 {
    let c = 1.0;
    [(-c, -c), (c, -c), (-c, c), (c, c)]
        .iter()
        .map(|&(x, y)| {
            let (ax, ay) = apply(a, x, y);
            let (bx, by) = apply(b, x, y);
            ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt() * frame.s
        })
        .fold(0.0, f64::max)
}

/// Optimizes `w` (template-to-moving, pixel coordinates of this level).
fn refine_level(
    template: &GrayImage,
    moving: &GrayImage,
    w: &Mat3,
    level: usize,
    params: &RefineParams,
) -> Result<(Mat3, LevelTrace)> {
    let frame = Frame::of(template);
    let mut wn = normalize_h(mat3_mul(&mat3_mul(&frame.to_norm(), w), &frame.from_norm()))
        .ok_or(Error::SingularHomography)?;
    let samples = template_samples(template, &frame, stride_for(template, params.max_samples));
    let min_valid = (params.min_valid_fraction * samples.len() as f64).ceil() as usize;
    let mut current = gn_pass(&samples, moving, &frame, &wn, true);
    if current.valid < min_valid.max(8) {
        return Err(Error::RegistrationFailed(format!(
            "insufficient overlap at level {level} ({} of {} samples)",
            current.valid,
            samples.len()
        )));
    }
    let initial_mse = current.mse;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iters {
        iterations += 1;
        let dp = solve(current.hessian, current.rhs).ok_or_else(|| {
            Error::RegistrationFailed(format!("singular normal equations at level {level}"))
        })?;
        let inv = mat3_inverse(&delta_matrix(&dp))
            .ok_or_else(|| Error::RegistrationFailed(format!("diverged at level {level}")))?;
        let candidate = normalize_h(mat3_mul(&wn, &inv))
            .ok_or_else(|| Error::RegistrationFailed(format!("diverged at level {level}")))?;
        let step = max_corner_shift(&wn, &candidate, &frame);
        if !step.is_finite() {
            return Err(Error::RegistrationFailed(format!(
                "diverged at level {level}"
            )));
        }
        let next = gn_pass(&samples, moving, &frame, &candidate, true);
        if next.valid < min_valid.max(8) || !(next.mse <= current.mse) {
            // no descent left: current state is a local minimum
            converged = true;
            break;
        }
        wn = candidate;
        current = next;
        if step < params.step_tol_px {
            converged = true;
            break;
        }
    }
    let w_out = normalize_h(mat3_mul(
        &mat3_mul(&frame.from_norm(), &wn),
        &frame.to_norm(),
    ))
    .ok_or(Error::SingularHomography)?;
    Ok((
        w_out,
        LevelTrace {
            level,
            iterations,
            initial_mse,
            final_mse: current.mse,
            converged,
        },
    ))
}

fn ncc(template: &GrayImage, moving: &GrayImage, w: &Mat3, stride: usize) -> Option<f64> {
    let (mut sa, mut sb, mut saa, mut sbb, mut sab, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0f64);
    for y in (0..template.height()).step_by(stride) {
        for x in (0..template.width()).step_by(stride) {
            let (u, v) = apply(w, x as f64, y as f64);
            let Some(b) = moving.sample_bilinear(u, v) else {
                continue;
            };
            let a = f64::from(template.get(x, y));
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
            n += 1.0;
        }
    }
    if n < 2.0 {
        return None;
    }
    let cov = sab - sa * sb / n;
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    if !(va > 0.0 && vb > 0.0) {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Refines `h_init` (moving-to-reference) by photometric alignment.
///
/// Succeeds when the finest level converges and the normalized
/// cross-correlation between the reference and the warped moving image
/// reaches `params.ncc_floor` on the overlap.
pub fn refine_registration(
    reference: &GrayImage,
    moving: &GrayImage,
    h_init: &Homography,
    params: &RefineParams,
) -> Result<Registration> {
    if reference.width() != moving.width() || reference.height() != moving.height() {
        return Err(Error::RegistrationFailed("images differ in size".into()));
    }
    let t0 = zscore(reference)
        .ok_or_else(|| Error::RegistrationFailed("reference has no texture".into()))?;
    let i0 = zscore(moving)
        .ok_or_else(|| Error::RegistrationFailed("moving image has no texture".into()))?;
    let mut levels = params.levels.max(1);
    while levels > 1 && (reference.width().min(reference.height()) >> (levels - 1)) < MIN_LEVEL_SIDE
    {
        levels -= 1;
    }
    let tp = pyramid(&t0, levels);
    let ip = pyramid(&i0, levels);

    let mut w = *h_init.inverse()?.matrix();
    for _ in 1..levels {
        w = mat3_mul(&mat3_mul(&TO_COARSER, &w), &TO_FINER);
    }
    let mut traces = Vec::with_capacity(levels);
    for level in (0..levels).rev() {
        let (refined, trace) = refine_level(&tp[level], &ip[level], &w, level, params)?;
        traces.push(trace);
        w = refined;
        if level > 0 {
            w = mat3_mul(&mat3_mul(&TO_FINER, &w), &TO_COARSER);
        }
    }
    let finest = traces.last().expect("at least one level");
    if !finest.converged {
        return Err(Error::RegistrationFailed(format!(
            "no convergence within {} iterations",
            params.max_iters
        )));
    }
    let score = ncc(&t0, &i0, &w, stride_for(&t0, params.max_samples))
        .ok_or_else(|| Error::RegistrationFailed("no overlap for correlation".into()))?;
    if !(score >= params.ncc_floor) {
        return Err(Error::RegistrationFailed(format!(
            "correlation {score:.3} below floor {:.3}",
            params.ncc_floor
        )));
    }
    let homography = Homography::from_matrix(w)?.inverse()?;
    Ok(Registration {
        homography,
        ncc: score,
        levels: traces,
    })
}

/// A view after fine registration; rejected as a whole if any member failed.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifiedView {
    pub view: View,
    /// (member id, correlation) for every successfully registered member.
    pub member_ncc: Vec<(String, f64)>,
}

impl VerifiedView {
    pub fn kept(&self) -> bool {
        self.view.status == ViewStatus::Registered
    }
}

/// Folds per-member registration results (one per non-reference member, in
/// member order) into the view: all must succeed, otherwise the view is
/// rejected and every failure reason recorded.
pub fn apply_registrations(view: &View, results: Vec<Result<Registration>>) -> VerifiedView {
    let mut out = view.clone();
    let mut member_ncc = Vec::new();
    let mut failures = Vec::new();
    for (member, result) in out.members.iter_mut().skip(1).zip(results) {
        match result {
            Ok(reg) => {
                member.homography = reg.homography;
                member_ncc.push((member.image_id.clone(), reg.ncc));
            }
            Err(e) => failures.push(format!("{}: {e}", member.image_id)),
        }
    }
    if failures.is_empty() && out.members.len() == member_ncc.len() + 1 {
        out.status = ViewStatus::Registered;
    } else {
        out.status = ViewStatus::Rejected;
        out.reasons.push("registration failed".to_string());
        out.reasons.extend(failures);
        out.members
            .iter_mut()
            .skip(1)
            .zip(&view.members[1..])
            .for_each(|(m, orig)| m.homography = orig.homography);
    }
    VerifiedView {
        view: out,
        member_ncc,
    }
}

/// Registers every non-reference member against the reference.
/// `images` must follow `view.members` order (reference first).
pub fn verify_view_registration(
    view: &View,
    images: &[&GrayImage],
    params: &RefineParams,
) -> Result<VerifiedView> {
    if images.len() != view.members.len() {
        return Err(Error::DimensionMismatch {
            expected: view.members.len(),
            got: images.len(),
        });
    }
    let reference = images[0];
    let results = view.members[1..]
        .iter()
        .zip(&images[1..])
        .map(|(m, img)| refine_registration(reference, img, &m.homography, params))
        .collect();
    Ok(apply_registrations(view, results))
}
