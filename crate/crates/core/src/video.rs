//! Decoded video clips and the raw frame-dump file format.
//!
//! Frame dumps are little-endian:
//!
//! ```text
//! magic      4 bytes  "CFRM"
//! version    u32      1
//! T, H, W    u32 ×3
//! duration   f64
//! timestamps f64 × T
//! pixels     f32 × T·H·W·3, frame-major, then row, column, channel
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One `H×W×3` frame with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != height * width * 3 {
            return Err(Error::shape("Frame::new", &[height, width, 3], &[pixels.len()]));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let pixels = (0..height * width).flat_map(|_| rgb).collect();
        Self { height, width, pixels }
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub frames: Vec<Frame>,
    pub timestamps: Vec<f64>,
    pub duration: f64,
}

impl VideoClip {
    pub fn new(frames: Vec<Frame>, timestamps: Vec<f64>, duration: f64) -> Result<Self> {
        let clip = Self {
            frames,
            timestamps,
            duration,
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.frames.is_empty() {
            problems.push("frames: a clip needs at least one frame".to_string());
        }
        if self.frames.len() != self.timestamps.len() {
            problems.push(format!(
                "timestamps: {} timestamps for {} frames",
                self.timestamps.len(),
                self.frames.len()
            ));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            problems.push(format!("duration: {} is not a valid length", self.duration));
        }
        for (i, &t) in self.timestamps.iter().enumerate() {
            if !(0.0..=self.duration).contains(&t) {
                problems.push(format!("timestamps[{i}]: {t} outside [0, {}]", self.duration));
            }
            if i > 0 && t < self.timestamps[i - 1] {
                problems.push(format!("timestamps[{i}]: decreasing"));
            }
        }
        if let Some(f) = self.frames.first() {
            if self.frames.iter().any(|g| g.height != f.height || g.width != f.width) {
                problems.push("frames: mixed resolutions".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

const MAGIC: &[u8; 4] = b"CFRM";
const VERSION: u32 = 1;

pub fn write_frames<W: Write>(clip: &VideoClip, mut w: W) -> Result<()> {
    let (h, wd) = clip.frames.first().map_or((0, 0), |f| (f.height, f.width));
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [clip.frames.len(), h, wd] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&clip.duration.to_le_bytes())?;
    for t in &clip.timestamps {
        w.write_all(&t.to_le_bytes())?;
    }
    for f in &clip.frames {
        for p in &f.pixels {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_frames<R: Read>(mut r: R) -> Result<VideoClip> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Domain("not a frame dump (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    let mut read_u32 = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut b4)?;
        Ok(u32::from_le_bytes(b4))
    };
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Schema {
            expected: VERSION,
            found: version,
        });
    }
    let t = read_u32(&mut r)? as usize;
    let h = read_u32(&mut r)? as usize;
    let w = read_u32(&mut r)? as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let duration = f64::from_le_bytes(b8);
    let mut timestamps = Vec::with_capacity(t);
    for _ in 0..t {
        r.read_exact(&mut b8)?;
        timestamps.push(f64::from_le_bytes(b8));
    }
    let mut frames = Vec::with_capacity(t);
    let mut buf = vec![0u8; h * w * 3 * 4];
    for _ in 0..t {
        r.read_exact(&mut buf)?;
        let pixels = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        frames.push(Frame::new(h, w, pixels)?);
    }
    VideoClip::new(frames, timestamps, duration)
}

pub fn save_frames(clip: &VideoClip, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_frames(clip, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_frames(path: &Path) -> Result<VideoClip> {
    read_frames(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_dump_round_trip() {
        let mut f = Frame::filled(2, 3, [0.1, 0.2, 0.3]);
        f.set_pixel(1, 2, [1.0, 0.0, 0.5]);
        let clip = VideoClip::new(vec![f.clone(), Frame::filled(2, 3, [0.0; 3])], vec![0.5, 1.5], 2.0).unwrap();
        let mut buf = Vec::new();
        write_frames(&clip, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 12 + 8 + 16 + 2 * 2 * 3 * 3 * 4);
        assert_eq!(read_frames(buf.as_slice()).unwrap(), clip);
    }

    #[test]
    fn invalid_clips_are_rejected() {
        let f = Frame::filled(2, 2, [0.0; 3]);
        assert!(VideoClip::new(vec![], vec![], 1.0).is_err());
        assert!(VideoClip::new(vec![f.clone()], vec![3.0], 2.0).is_err());
        assert!(VideoClip::new(vec![f.clone(), f], vec![1.0, 0.5], 2.0).is_err());
    }
}
