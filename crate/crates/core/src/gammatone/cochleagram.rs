use std::io::{Read, Write};
use std::path::Path;

use super::filterbank::GammatoneFilterbank;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::AudioClip;

/// Floor added before the log so silent frames stay finite.
pub const LOG_FLOOR: f64 = 1e-10;

/// Channels x frames matrix of log mean-square band energies, frames
/// overlapping by half.
#[derive(Clone, Debug, PartialEq)]
pub struct Cochleagram {
    pub values: Matrix,
    pub frame_len: usize,
    pub hop: usize,
    pub source_sample_rate: u32,
}

impl Cochleagram {
    pub fn n_channels(&self) -> usize {
        self.values.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.cols()
    }
}

/// Frame length in samples for a frame duration, rounded to an even count.
pub fn frame_len_for(frame_ms: f64, sample_rate: u32) -> usize {
    let n = (frame_ms * f64::from(sample_rate) / 1000.0).round() as usize;
    (n / 2 * 2).max(2)
}

pub fn n_frames(n_samples: usize, frame_len: usize) -> usize {
    let hop = frame_len / 2;
    if n_samples < frame_len {
        0
    } else {
        (n_samples - frame_len) / hop + 1
    }
}

pub fn cochleagram(
    fb: &GammatoneFilterbank,
    clip: &AudioClip,
    frame_len: usize,
) -> Result<Cochleagram> {
    if frame_len < 2 {
        return Err(Error::InvalidParam("frame length must be at least 2 samples".into()));
    }
    if clip.len() < frame_len {
        return Err(Error::InvalidParam(format!(
            "clip of {} samples is shorter than one {frame_len}-sample frame",
            clip.len()
        )));
    }
    let hop = frame_len / 2;
    let frames = n_frames(clip.len(), frame_len);
    let filtered = fb.filter_signal(clip)?;
    let mut values = Matrix::zeros(filtered.rows(), frames);
    for m in 0..filtered.rows() {
        let row = filtered.row(m);
        for (j, out) in values.row_mut(m).iter_mut().enumerate() {
            let frame = &row[j * hop..j * hop + frame_len];
            let ms = frame.iter().map(|v| v * v).sum::<f64>() / frame_len as f64;
            *out = (LOG_FLOOR + ms).ln();
        }
    }
    Ok(Cochleagram {
        values,
        frame_len,
        hop,
        source_sample_rate: clip.sample_rate,
    })
}

/// Fixed-size network input with values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureImage {
    pub values: Matrix,
}

impl FeatureImage {
    pub fn height(&self) -> usize {
        self.values.rows()
    }

    pub fn width(&self) -> usize {
        self.values.cols()
    }
}

/// Bilinear resize with corner alignment: output corners land exactly on
/// input corners, so equal sizes give the identity.
pub fn resize_bilinear(src: &Matrix, height: usize, width: usize) -> Matrix {
    let coord = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        if n_out <= 1 || n_in <= 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let i0 = (pos.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, pos - i0 as f64)
    };
    let mut out = Matrix::zeros(height, width);
    for r in 0..height {
        let (r0, r1, fr) = coord(r, height, src.rows());
        for c in 0..width {
            let (c0, c1, fc) = coord(c, width, src.cols());
            let top = src.get(r0, c0) * (1.0 - fc) + src.get(r0, c1) * fc;
            let bottom = src.get(r1, c0) * (1.0 - fc) + src.get(r1, c1) * fc;
            out.set(r, c, top * (1.0 - fr) + bottom * fr);
        }
    }
    out
}

/// Resizes to `height x width`, then min-max normalizes. A constant
/// cochleagram maps to all 0.5.
pub fn to_feature_image(coch: &Cochleagram, height: usize, width: usize) -> Result<FeatureImage> {
    matrix_to_feature_image(&coch.values, height, width)
}

pub fn matrix_to_feature_image(values: &Matrix, height: usize, width: usize) -> Result<FeatureImage> {
    if values.rows() == 0 || values.cols() == 0 {
        return Err(Error::InvalidParam("empty cochleagram".into()));
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidParam("feature image dims must be positive".into()));
    }
    let resized = resize_bilinear(values, height, width);
    let (lo, hi) = resized.min_max();
    let span = hi - lo;
    let data = resized
        .into_vec()
        .into_iter()
        .map(|v| if span > 0.0 { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.5 })
        .collect();
    Ok(FeatureImage {
        values: Matrix::from_vec(height, width, data),
    })
}

pub const CGRM_MAGIC: &[u8; 4] = b"CGRM";
pub const CGRM_VERSION: u16 = 1;

/// `CGRM` | version u16 | rows u32 | cols u32 | row-major f32, all little-endian.
pub fn write_cgrm(values: &Matrix, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(CGRM_MAGIC)?;
    w.write_all(&CGRM_VERSION.to_le_bytes())?;
    w.write_all(&(values.rows() as u32).to_le_bytes())?;
    w.write_all(&(values.cols() as u32).to_le_bytes())?;
    for &v in values.as_slice() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_cgrm(mut r: impl Read) -> Result<Matrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("reading CGRM: {e}")))?;
    if bytes.len() < 14 || &bytes[..4] != CGRM_MAGIC {
        return Err(Error::Format("not a CGRM file".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CGRM_VERSION {
        return Err(Error::Format(format!("unsupported CGRM version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let body = &bytes[14..];
    if body.len() != rows * cols * 4 {
        return Err(Error::Format(format!(
            "CGRM body holds {} bytes, expected {}",
            body.len(),
            rows * cols * 4
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(Matrix::from_vec(rows, cols, data))
}

pub fn save_cgrm(values: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_cgrm(values, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_cgrm(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_cgrm(std::io::BufReader::new(file))
}

/// Binary 8-bit PGM, min-max scaled, highest row (channel) at the top.
pub fn save_pgm(values: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (lo, hi) = values.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{} {}\n255\n", values.cols(), values.rows()).into_bytes();
    for r in (0..values.rows()).rev() {
        out.extend(
            values
                .row(r)
                .iter()
                .map(|&v| ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8),
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gammatone::{make_filterbank, FilterbankConfig};

    fn small_bank() -> GammatoneFilterbank {
        make_filterbank(&FilterbankConfig {
            n_channels: 16,
            ..FilterbankConfig::new(8000)
        })
        .unwrap()
    }

    #[test]
    fn frame_counts() {
        assert_eq!(n_frames(8000, 320), 49);
        assert_eq!(n_frames(320, 320), 1);
        assert_eq!(n_frames(319, 320), 0);
        assert_eq!(frame_len_for(40.0, 8000), 320);
        assert_eq!(frame_len_for(25.0, 8000), 200);
    }

    #[test]
    fn silence_gives_log_floor() {
        let fb = small_bank();
        let c = cochleagram(&fb, &AudioClip::new(vec![0.0; 1000], 8000).unwrap(), 320).unwrap();
        assert_eq!(c.n_frames(), n_frames(1000, 320));
        assert_eq!(c.hop, 160);
        assert!(c.values.as_slice().iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn too_short_clip_is_rejected() {
        let fb = small_bank();
        let clip = AudioClip::new(vec![0.1; 100], 8000).unwrap();
        assert!(cochleagram(&fb, &clip, 320).is_err());
    }

    #[test]
    fn doubling_amplitude_adds_log_four() {
        let fb = small_bank();
        let x: Vec<f64> = (0..4000).map(|i| (i as f64 * 0.37).sin() * 0.3).collect();
        let a = cochleagram(&fb, &AudioClip::new(x.clone(), 8000).unwrap(), 320).unwrap();
        let b = cochleagram(
            &fb,
            &AudioClip::new(x.iter().map(|v| 2.0 * v).collect(), 8000).unwrap(),
            320,
        )
        .unwrap();
        for (va, vb) in a.values.as_slice().iter().zip(b.values.as_slice()) {
            if *va > -8.0 {
                assert!((vb - va - 4f64.ln()).abs() < 1e-5, "{va} {vb}");
            }
        }
    }

    #[test]
    fn bilinear_midpoint() {
        let m = Matrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let r = resize_bilinear(&m, 3, 3);
        assert!((r.get(1, 1) - 0.5).abs() < 1e-15);
        assert_eq!(r.get(0, 0), 0.0);
        assert_eq!(r.get(2, 0), 1.0);
    }

    #[test]
    fn same_size_resize_is_identity() {
        let m = Matrix::from_rows(vec![vec![3.0, 1.0, 2.0], vec![0.5, 7.0, -1.0]]);
        assert_eq!(resize_bilinear(&m, 2, 3), m);
        let img = matrix_to_feature_image(&m, 2, 3).unwrap();
        assert_eq!(img.values.min_max(), (0.0, 1.0));
        assert!((img.values.get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_maps_to_half() {
        let m = Matrix::from_vec(2, 2, vec![4.0; 4]);
        let img = matrix_to_feature_image(&m, 5, 3).unwrap();
        assert!(img.values.as_slice().iter().all(|&v| v == 0.5));
        assert!(matrix_to_feature_image(&Matrix::zeros(0, 0), 5, 3).is_err());
    }

    #[test]
    fn cgrm_rejects_truncation() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut buf = Vec::new();
        write_cgrm(&m, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"CGRM");
        assert_eq!(buf.len(), 14 + 24);
        assert_eq!(read_cgrm(&buf[..]).unwrap(), m);
        assert!(read_cgrm(&buf[..buf.len() - 1]).is_err());
        assert!(read_cgrm(&b"XXXX"[..]).is_err());
    }
}
