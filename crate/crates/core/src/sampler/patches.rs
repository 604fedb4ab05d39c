use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use super::ResponseMask;
use crate::geom::View;
use crate::seed::rng_from_seed;
use crate::{Error, GrayImage, Homography, Result};

/// Patch side used by the dataset.
pub const PATCH_OUT: usize = 96;

/// A square patch in the reference frame: centre, side length in source
/// pixels and rotation in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSpec {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub angle: f64,
}

impl PatchSpec {
    /// Reference-frame position of output pixel `(u, v)` of an
    /// `out`×`out` patch.
    #[inline]
    pub fn grid_point(&self, u: usize, v: usize, out: usize) -> (f64, f64) {
        let half = (out as f64 - 1.0) / 2.0;
        let step = self.scale / out as f64;
        let (du, dv) = ((u as f64 - half) * step, (v as f64 - half) * step);
        let (s, c) = self.angle.sin_cos();
        (self.x + c * du - s * dv, self.y + s * du + c * dv)
    }

    /// Corners of the rotated `scale`×`scale` square; every grid point lies
    /// strictly inside it.
    pub fn corners(&self) -> [(f64, f64); 4] {
        let h = self.scale / 2.0;
        let (s, c) = self.angle.sin_cos();
        [(-h, -h), (h, -h), (h, h), (-h, h)]
            .map(|(a, b)| (self.x + c * a - s * b, self.y + s * a + c * b))
    }

    /// Same spec with the centre moved by `shift` pixels along `direction` radians.
    pub fn displaced(&self, shift: f64, direction: f64) -> Self {
        let (s, c) = direction.sin_cos();
        Self {
            x: self.x + shift * c,
            y: self.y + shift * s,
            ..*self
        }
    }
}

/// The part of the reference frame covered by every member image of a view.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidRegion {
    width: usize,
    height: usize,
    /// Reference-to-member maps, one per member.
    to_member: Vec<Homography>,
}

impl ValidRegion {
    /// `member_to_reference` in member order; all members share `width`×`height`.
    pub fn new(width: usize, height: usize, member_to_reference: &[Homography]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("empty frame".into()));
        }
        let to_member = member_to_reference
            .iter()
            .map(Homography::inverse)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            width,
            height,
            to_member,
        })
    }

    pub fn of_view(view: &View, width: usize, height: usize) -> Result<Self> {
        let hs: Vec<Homography> = view.members.iter().map(|m| m.homography).collect();
        Self::new(width, height, &hs)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn members(&self) -> usize {
        self.to_member.len()
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        let eps = 1e-9;
        x.is_finite()
            && y.is_finite()
            && x >= -eps
            && y >= -eps
            && x <= (self.width - 1) as f64 + eps
            && y <= (self.height - 1) as f64 + eps
    }

    /// True when the spec's square maps inside every member image. Corner
    /// tests suffice: the images are convex and a near-identity homography
    /// maps the square to a convex quadrilateral.
    pub fn contains_spec(&self, spec: &PatchSpec) -> bool {
        let corners = spec.corners();
        self.to_member.iter().all(|h| {
            corners.iter().all(|&(x, y)| {
                let (u, v) = h.apply(x, y);
                self.inside(u, v)
            })
        })
    }
}

/// Ranges for spec sampling; scale in source pixels per patch side, angle in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecRanges {
    pub scale: (f64, f64),
    pub angle: (f64, f64),
}

impl Default for SpecRanges {
    fn default() -> Self {
        let a = 15f64.to_radians();
        Self {
            scale: (67.0, 138.0),
            angle: (-a, a),
        }
    }
}

impl SpecRanges {
    pub fn validate(&self) -> Result<()> {
        let (s0, s1) = self.scale;
        let (a0, a1) = self.angle;
        if !(s0 > 0.0 && s1 >= s0 && s1.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bad scale range ({s0}, {s1})"
            )));
        }
        if !(a0.is_finite() && a1.is_finite() && a1 >= a0) {
            return Err(Error::InvalidArgument(format!(
                "bad angle range ({a0}, {a1})"
            )));
        }
        Ok(())
    }
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + (hi - lo) * rng.random::<f64>()
    } else {
        lo
    }
}

/// Draws `n` specs: centres from the mask, log-uniform scale, uniform angle.
/// Specs whose square leaves any member are redrawn, up to `100 n` draws.
pub fn sample_patch_specs(
    mask: &ResponseMask,
    region: &ValidRegion,
    n: usize,
    ranges: &SpecRanges,
    seed: u64,
) -> Result<Vec<PatchSpec>> {
    ranges.validate()?;
    if mask.width() != region.width() || mask.height() != region.height() {
        return Err(Error::InvalidArgument(
            "mask and region differ in size".into(),
        ));
    }
    let sampler = mask.sampler();
    let mut rng = rng_from_seed(seed);
    let budget = n.saturating_mul(100);
    let (ls0, ls1) = (ranges.scale.0.ln(), ranges.scale.1.ln());
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        if attempts == budget {
            return Err(Error::SamplingExhausted {
                attempts,
                accepted: out.len(),
                requested: n,
            });
        }
        attempts += 1;
        let (x, y) = sampler.draw(&mut rng);
        let spec = PatchSpec {
            x: x as f64,
            y: y as f64,
            scale: uniform_in(&mut rng, ls0, ls1).exp(),
            angle: uniform_in(&mut rng, ranges.angle.0, ranges.angle.1),
        };
        if region.contains_spec(&spec) {
            out.push(spec);
        }
    }
    Ok(out)
}

/// Patches cut at the same reference-frame square from every member of a view.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub view_id: String,
    pub spec: PatchSpec,
    /// One patch per view member, in member order.
    pub patches: Vec<GrayImage>,
}

/// Resamples the spec's square from every member. `images` follow
/// `view.members`; each member's homography maps it to the reference frame.
pub fn extract_patch_set(
    view: &View,
    images: &[&GrayImage],
    spec: &PatchSpec,
    out_size: usize,
) -> Result<PatchSet> {
    if images.len() != view.members.len() {
        return Err(Error::DimensionMismatch {
            expected: view.members.len(),
            got: images.len(),
        });
    }
    if out_size == 0 {
        return Err(Error::InvalidArgument("zero patch size".into()));
    }
    let grid: Vec<(f64, f64)> = (0..out_size)
        .flat_map(|v| (0..out_size).map(move |u| (u, v)))
        .map(|(u, v)| spec.grid_point(u, v, out_size))
        .collect();
    let mut patches = Vec::with_capacity(images.len());
    for (member, img) in view.members.iter().zip(images) {
        let to_member = member.homography.inverse()?;
        let identity = member.homography == Homography::identity();
        let mut data = Vec::with_capacity(grid.len());
        for &(x, y) in &grid {
            let (u, v) = if identity {
                (x, y)
            } else {
                to_member.apply(x, y)
            };
            let value = img.sample_bilinear(u, v).ok_or_else(|| {
                Error::OutOfBounds(format!(
                    "patch sample ({u:.2}, {v:.2}) outside {}",
                    member.image_id
                ))
            })?;
            data.push(value as f32);
        }
        patches.push(GrayImage::new(out_size, out_size, data)?);
    }
    Ok(PatchSet {
        view_id: view.view_id.clone(),
        spec: *spec,
        patches,
    })
}

/// A patch set quantized to 8 bits, as stored in the dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PackedPatchSet {
    pub set_id: u64,
    pub view_ordinal: u32,
    /// `[x, y, scale, angle]` as raw bits so the type stays `Eq`.
    spec_bits: [u64; 4],
    side: usize,
    pixels: Vec<u8>,
}

impl PackedPatchSet {
    pub fn new(
        set_id: u64,
        view_ordinal: u32,
        spec: PatchSpec,
        side: usize,
        pixels: Vec<u8>,
    ) -> Result<Self> {
        if side == 0 || pixels.is_empty() || pixels.len() % (side * side) != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} bytes is not a whole number of {side}x{side} patches",
                pixels.len()
            )));
        }
        Ok(Self {
            set_id,
            view_ordinal,
            spec_bits: [spec.x, spec.y, spec.scale, spec.angle].map(f64::to_bits),
            side,
            pixels,
        })
    }

    pub fn from_patch_set(set_id: u64, view_ordinal: u32, set: &PatchSet) -> Result<Self> {
        let side = set.patches.first().map_or(0, GrayImage::width);
        let mut pixels = Vec::with_capacity(set.patches.len() * side * side);
        for p in &set.patches {
            if p.width() != side || p.height() != side {
                return Err(Error::InvalidArgument("patches differ in size".into()));
            }
            pixels.extend(p.to_u8());
        }
        Self::new(set_id, view_ordinal, set.spec, side, pixels)
    }

    pub fn spec(&self) -> PatchSpec {
        let [x, y, scale, angle] = self.spec_bits.map(f64::from_bits);
        PatchSpec { x, y, scale, angle }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.pixels.len() / (self.side * self.side)
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn patch_bytes(&self, member: usize) -> &[u8] {
        let n = self.side * self.side;
        &self.pixels[member * n..(member + 1) * n]
    }

    pub fn patch(&self, member: usize) -> GrayImage {
        GrayImage::from_u8(self.side, self.side, self.patch_bytes(member)).expect("validated size")
    }
}
