//! 8-bit images and binary PGM/PPM I/O.

use std::path::Path;

use super::PipelineError;

/// Row-major, channel-interleaved 8-bit image with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<u8>,
    ) -> Result<Self, PipelineError> {
        if width == 0 || height == 0 {
            return Err(PipelineError::BadImage(
                "dimensions must be positive".into(),
            ));
        }
        if channels != 1 && channels != 3 {
            return Err(PipelineError::BadImage(format!(
                "{channels} channels (need 1 or 3)"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(PipelineError::BadImage(format!(
                "{} bytes for a {width}x{height}x{channels} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        value: u8,
    ) -> Result<Self, PipelineError> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
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

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    /// Binary PGM (`P5`) for one channel, PPM (`P6`) for three.
    pub fn to_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pnm(bytes: &[u8]) -> Result<Self, PipelineError> {
        let mut pos = 0;
        let magic = next_token(bytes, &mut pos)?;
        let channels = match magic.as_slice() {
            b"P5" => 1,
            b"P6" => 3,
            _ => return Err(PipelineError::Pnm("expected P5 or P6 magic".into())),
        };
        let mut header = [0usize; 3];
        for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
            let tok = next_token(bytes, &mut pos)?;
            *slot = std::str::from_utf8(&tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| PipelineError::Pnm(format!("bad {name}")))?;
        }
        let [width, height, maxval] = header;
        if maxval != 255 {
            return Err(PipelineError::Pnm(format!(
                "maxval {maxval} unsupported (need 255)"
            )));
        }
        // exactly one whitespace byte separates the header from the raster
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(PipelineError::Pnm("missing raster separator".into()));
        }
        pos += 1;
        let len = width * height * channels;
        let raster = bytes
            .get(pos..pos + len)
            .ok_or_else(|| PipelineError::Pnm(format!("raster truncated: need {len} bytes")))?;
        if bytes.len() > pos + len {
            return Err(PipelineError::Pnm("trailing bytes after raster".into()));
        }
        Self::new(width, height, channels, raster.to_vec())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
        Self::from_pnm(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_pnm())
            .map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
    }
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<Vec<u8>, PipelineError> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(PipelineError::Pnm("unexpected end of header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(bytes[start..*pos].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnm_round_trip() {
        let rgb = Image::new(2, 1, 3, vec![1, 2, 3, 250, 251, 10]).unwrap();
        let bytes = rgb.to_pnm();
        assert!(bytes.starts_with(b"P6\n2 1\n255\n"));
        assert_eq!(Image::from_pnm(&bytes).unwrap(), rgb);

        let gray = Image::new(3, 2, 1, vec![0, 9, 10, 32, 255, 13]).unwrap();
        assert_eq!(Image::from_pnm(&gray.to_pnm()).unwrap(), gray);
    }

    #[test]
    fn header_comments_and_errors() {
        let mut bytes = b"P5 # gray\n# comment line\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        let img = Image::from_pnm(&bytes).unwrap();
        assert_eq!(img.get(1, 1, 0), 4);

        assert!(Image::from_pnm(b"P3\n1 1\n255\n1 2 3").is_err());
        assert!(Image::from_pnm(b"P5\n2 2\n65535\n\0\0\0\0\0\0\0\0").is_err());
        assert!(Image::from_pnm(b"P5\n2 2\n255\n\x01\x02").is_err());
        assert!(Image::new(2, 2, 2, vec![0; 8]).is_err());
    }
}
