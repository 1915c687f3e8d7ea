//! 8-bit RGB raster plus binary PPM (P6) encoding.

use std::io::{BufRead, Write};

use super::DatasetError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self, DatasetError> {
        if data.len() != width * height * 3 {
            return Err(DatasetError::Image(format!(
                "buffer of {} bytes does not hold {}x{} RGB pixels",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, px: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&px);
    }

    /// Channel-major `3 x H x W` floats scaled to `[-0.5, 0.5]`.
    pub fn to_tensor(&self) -> Vec<f64> {
        let plane = self.width * self.height;
        let mut out = vec![0.0; 3 * plane];
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + p] = f64::from(px[c]) / 255.0 - 0.5;
            }
        }
        out
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    pub fn read_ppm<R: BufRead>(mut r: R) -> Result<Self, DatasetError> {
        let bad = |m: &str| DatasetError::Image(format!("malformed PPM: {m}"));
        let mut fields = Vec::with_capacity(4);
        let mut token = Vec::new();
        let mut in_comment = false;
        // Header: magic, width, height, maxval, then exactly one whitespace byte.
        while fields.len() < 4 {
            let mut byte = [0u8; 1];
            if r.read(&mut byte).map_err(|e| DatasetError::Image(e.to_string()))? == 0 {
                return Err(bad("truncated header"));
            }
            let b = byte[0];
            if in_comment {
                in_comment = b != b'\n';
                continue;
            }
            if b == b'#' && token.is_empty() {
                in_comment = true;
            } else if b.is_ascii_whitespace() {
                if !token.is_empty() {
                    fields.push(String::from_utf8_lossy(&token).into_owned());
                    token.clear();
                }
            } else {
                token.push(b);
            }
        }
        if fields[0] != "P6" {
            return Err(bad("expected P6 magic"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        let mut data = vec![0u8; width * height * 3];
        r.read_exact(&mut data).map_err(|_| bad("truncated pixel data"))?;
        Self::from_raw(width, height, data)
    }
}
