//! On-disk formats: detection sidecars, `AMEM` embedding files and `AMPS`
//! patch datasets. Binary formats are little-endian.

use std::io::{Read, Write};

use anyhow::{bail, ensure, Context, Result};
use patchfoundry_core::gate::{Detection, DetectionSidecar};
use patchfoundry_core::sampler::{PackedPatchSet, PatchSpec, PATCH_OUT};

pub const AMEM_MAGIC: &[u8; 4] = b"AMEM";
pub const AMPS_MAGIC: &[u8; 4] = b"AMPS";
pub const FORMAT_VERSION: u32 = 1;

/// Parses a sidecar: first line `sky <fraction>`, then `det <class>
/// <confidence> <x0> <y0> <x1> <y1>` lines. Blank lines are ignored.
pub fn parse_sidecar(image_id: &str, text: &str) -> Result<DetectionSidecar> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines.next().context("empty sidecar")?;
    let sky = match first.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["sky", f] => f.parse::<f64>().context("bad sky fraction")?,
        _ => bail!("sidecar must start with `sky <fraction>`, got {first:?}"),
    };
    ensure!(sky.is_finite(), "non-finite sky fraction");
    let mut detections = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let ["det", class, rest @ ..] = parts.as_slice() else {
            bail!("unexpected sidecar line {line:?}");
        };
        ensure!(rest.len() == 5, "detection line needs 6 fields: {line:?}");
        let nums = rest
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("bad number in {line:?}"))?;
        ensure!(nums.iter().all(|v| v.is_finite()), "non-finite value in {line:?}");
        detections.push(Detection {
            class: (*class).to_string(),
            confidence: nums[0],
            bbox: [nums[1], nums[2], nums[3], nums[4]],
        });
    }
    Ok(DetectionSidecar {
        image_id: image_id.to_string(),
        sky_fraction: sky,
        detections,
    })
}

pub fn format_sidecar(sc: &DetectionSidecar) -> String {
    let mut out = format!("sky {}\n", sc.sky_fraction);
    for d in &sc.detections {
        let [x0, y0, x1, y1] = d.bbox;
        out.push_str(&format!(
            "det {} {} {x0} {y0} {x1} {y1}\n",
            d.class, d.confidence
        ));
    }
    out
}

/// Row-major embedding matrix with one id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub ids: Vec<String>,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl EmbeddingFile {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m).context("truncated header")?;
    ensure!(&m == magic, "bad magic {:?}, expected {:?}", m, magic);
    let version = read_u32(r)?;
    ensure!(version == FORMAT_VERSION, "unsupported version {version}");
    Ok(())
}

pub fn write_amem(w: &mut impl Write, emb: &EmbeddingFile) -> Result<()> {
    ensure!(emb.data.len() == emb.ids.len() * emb.dim, "embedding shape mismatch");
    ensure!(
        emb.ids.iter().all(|id| !id.as_bytes().contains(&0)),
        "ids must not contain NUL"
    );
    w.write_all(AMEM_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&u32::try_from(emb.ids.len())?.to_le_bytes())?;
    w.write_all(&u32::try_from(emb.dim)?.to_le_bytes())?;
    for v in &emb.data {
        w.write_all(&v.to_le_bytes())?;
    }
    for id in &emb.ids {
        w.write_all(id.as_bytes())?;
        w.write_all(&[0])?;
    }
    Ok(())
}

pub fn read_amem(r: &mut impl Read) -> Result<EmbeddingFile> {
    read_magic(r, AMEM_MAGIC)?;
    let n = read_u32(r)? as usize;
    let dim = read_u32(r)? as usize;
    let mut raw = vec![0u8; n.checked_mul(dim).and_then(|x| x.checked_mul(4)).context("size overflow")?];
    r.read_exact(&mut raw).context("truncated embedding rows")?;
    let data: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    let mut ids = Vec::with_capacity(n);
    let mut parts = rest.split(|&b| b == 0);
    for _ in 0..n {
        let bytes = parts.next().context("truncated id table")?;
        ids.push(String::from_utf8(bytes.to_vec()).context("id is not UTF-8")?);
    }
    ensure!(
        rest.iter().filter(|&&b| b == 0).count() == n,
        "id table has trailing or missing terminators"
    );
    Ok(EmbeddingFile { ids, dim, data })
}

/// Header of a dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AmpsHeader {
    pub n_sets: u32,
    pub set_size: u32,
    pub patch_w: u32,
    pub patch_h: u32,
}

/// Streams patch sets into a dataset file whose header is written up front.
pub struct AmpsWriter<W: Write> {
    inner: W,
    remaining: u32,
    set_size: usize,
}

impl<W: Write> AmpsWriter<W> {
    pub fn new(mut inner: W, n_sets: usize, set_size: usize) -> Result<Self> {
        let side = u32::try_from(PATCH_OUT)?;
        inner.write_all(AMPS_MAGIC)?;
        inner.write_all(&FORMAT_VERSION.to_le_bytes())?;
        inner.write_all(&u32::try_from(n_sets)?.to_le_bytes())?;
        inner.write_all(&u32::try_from(set_size)?.to_le_bytes())?;
        inner.write_all(&side.to_le_bytes())?;
        inner.write_all(&side.to_le_bytes())?;
        Ok(Self {
            inner,
            remaining: u32::try_from(n_sets)?,
            set_size,
        })
    }

    pub fn write_set(&mut self, s: &PackedPatchSet) -> Result<()> {
        ensure!(self.remaining > 0, "more patch sets than declared");
        ensure!(s.side() == PATCH_OUT, "patch side {} is not {PATCH_OUT}", s.side());
        ensure!(s.len() == self.set_size, "set {} has {} patches, expected {}", s.set_id, s.len(), self.set_size);
        self.inner.write_all(&s.set_id.to_le_bytes())?;
        self.inner.write_all(&s.view_ordinal.to_le_bytes())?;
        let spec = s.spec();
        for v in [spec.x, spec.y, spec.scale, spec.angle] {
            self.inner.write_all(&v.to_le_bytes())?;
        }
        self.inner.write_all(s.pixels())?;
        self.remaining -= 1;
        Ok(())
    }

    /// Checks that every declared set was written and returns the writer.
    pub fn finish(mut self) -> Result<W> {
        ensure!(self.remaining == 0, "{} declared patch sets were not written", self.remaining);
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_amps(w: &mut impl Write, sets: &[PackedPatchSet]) -> Result<()> {
    let set_size = sets.first().map_or(0, PackedPatchSet::len);
    let mut writer = AmpsWriter::new(w, sets.len(), set_size)?;
    for s in sets {
        writer.write_set(s)?;
    }
    writer.finish()?;
    Ok(())
}

pub fn read_amps(r: &mut impl Read) -> Result<(AmpsHeader, Vec<PackedPatchSet>)> {
    read_magic(r, AMPS_MAGIC)?;
    let header = AmpsHeader {
        n_sets: read_u32(r)?,
        set_size: read_u32(r)?,
        patch_w: read_u32(r)?,
        patch_h: read_u32(r)?,
    };
    ensure!(
        header.patch_w == header.patch_h && header.patch_w > 0,
        "patches must be square, got {}x{}",
        header.patch_w,
        header.patch_h
    );
    let side = header.patch_w as usize;
    let bytes = (header.set_size as usize) * side * side;
    let mut sets = Vec::with_capacity(header.n_sets as usize);
    for _ in 0..header.n_sets {
        let set_id = read_u64(r)?;
        let view_ordinal = read_u32(r)?;
        let mut spec = [0f64; 4];
        for v in &mut spec {
            *v = f64::from_bits(read_u64(r)?);
        }
        let mut pixels = vec![0u8; bytes];
        r.read_exact(&mut pixels).context("truncated patch data")?;
        let spec = PatchSpec {
            x: spec[0],
            y: spec[1],
            scale: spec[2],
            angle: spec[3],
        };
        sets.push(PackedPatchSet::new(set_id, view_ordinal, spec, side, pixels)?);
    }
    let mut extra = [0u8; 1];
    ensure!(r.read(&mut extra)? == 0, "trailing bytes after last patch set");
    Ok((header, sets))
}
