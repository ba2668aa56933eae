//! Float image buffers and netpbm (PPM/PGM) I/O.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Result, SimError};

/// `height × width × channels` buffer, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3, "images have 1 or 3 channels");
        Image { width, height, channels, data: vec![value; width * height * channels] }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if !(channels == 1 || channels == 3) || data.len() != width * height * channels {
            return Err(SimError::ShapeMismatch(format!(
                "{} values for a {width}×{height}×{channels} image",
                data.len()
            )));
        }
        Ok(Image { width, height, channels, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, o: &Image) -> bool {
        self.width == o.width && self.height == o.height && self.channels == o.channels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, c: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, c: usize, v: f64) {
        self.data[(row * self.width + col) * self.channels + c] = v;
    }

    /// One row as a slice of `width × channels` values.
    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.width * self.channels;
        &self.data[row * n..(row + 1) * n]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    /// Binary netpbm: P6 for RGB, P5 for single channel.
    pub fn encode_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_bytes());
        out
    }

    pub fn write_pnm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.encode_pnm())?;
        Ok(())
    }

    pub fn read_pnm(path: &Path) -> Result<Image> {
        let f = std::fs::File::open(path)?;
        Image::decode_pnm(&mut BufReader::new(f))
    }

    /// Decodes binary P5/P6 with a maxval of at most 255.
    pub fn decode_pnm<R: BufRead>(r: &mut R) -> Result<Image> {
        let bad = |m: &str| SimError::invalid(format!("netpbm: {m}"));
        let mut header = Vec::new();
        // magic, width, height, maxval
        while header.len() < 4 {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(bad("truncated header"));
            }
            let line = line.split('#').next().unwrap_or("");
            header.extend(line.split_whitespace().map(str::to_owned));
        }
        let channels = match header[0].as_str() {
            "P6" => 3,
            "P5" => 1,
            m => return Err(bad(&format!("unsupported magic {m}"))),
        };
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("malformed header"));
        let (w, h, maxval) = (parse(&header[1])?, parse(&header[2])?, parse(&header[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(bad("only 8-bit images are supported"));
        }
        let mut raw = vec![0u8; w * h * channels];
        r.read_exact(&mut raw).map_err(|_| bad("truncated pixel data"))?;
        let data = raw.iter().map(|&b| b as f64 / maxval as f64).collect();
        Image::from_data(w, h, channels, data)
    }

    /// Reads a PPM/PGM, or a PNG when built with the `png` feature.
    pub fn read(path: &Path) -> Result<Image> {
        let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            return read_png(path);
        }
        Image::read_pnm(path)
    }

    #[cfg(feature = "png")]
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        let (w, h) = (self.width as u32, self.height as u32);
        let res = if self.channels == 3 {
            image::RgbImage::from_raw(w, h, bytes).map(|img| img.save(path))
        } else {
            image::GrayImage::from_raw(w, h, bytes).map(|img| img.save(path))
        };
        match res {
            Some(Ok(())) => Ok(()),
            Some(Err(e)) => Err(SimError::invalid(format!("png: {e}"))),
            None => Err(SimError::invalid("png: buffer size mismatch")),
        }
    }

    /// Single-channel copy: channel mean.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self.data.chunks(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect();
        Image { width: self.width, height: self.height, channels: 1, data }
    }
}

#[cfg(feature = "png")]
fn read_png(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| SimError::invalid(format!("png: {e}")))?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
    Image::from_data(w as usize, h as usize, 3, data)
}

#[cfg(not(feature = "png"))]
fn read_png(path: &Path) -> Result<Image> {
    Err(SimError::invalid(format!("{}: PNG support is not compiled in", path.display())))
}

/// One rendered observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub rgb: Image,
    pub silhouette: Image,
}

pub type FrameSequence = Vec<Frame>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnm_round_trip() {
        let mut img = Image::new(3, 2, 3);
        img.set(1, 2, 0, 1.0);
        img.set(0, 1, 2, 0.2);
        let bytes = img.encode_pnm();
        let back = Image::decode_pnm(&mut &bytes[..]).unwrap();
        assert_eq!(back.width(), 3);
        assert_eq!(back.get(1, 2, 0), 1.0);
        assert!((back.get(0, 1, 2) - 51.0 / 255.0).abs() < 1e-12);
        let gray = Image::filled(2, 2, 1, 0.5);
        let back = Image::decode_pnm(&mut &gray.encode_pnm()[..]).unwrap();
        assert_eq!(back.channels(), 1);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let img = Image::decode_pnm(&mut &bytes[..]).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn truncated_data_is_an_error() {
        let bytes = b"P6\n2 2\n255\n\x00\x01".to_vec();
        assert!(Image::decode_pnm(&mut &bytes[..]).is_err());
    }
}
