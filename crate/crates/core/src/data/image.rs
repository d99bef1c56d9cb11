//! 8-bit images, binary PGM/PPM I/O and the crop/flip transforms.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Interleaved (HWC) 8-bit pixels, 1 or 3 channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid("Image::new", format!("channels must be 1 or 3, got {channels}")));
        }
        if pixels.len() != channels * height * width {
            return Err(Error::dim("Image::new", "pixels", channels * height * width, pixels.len()));
        }
        Ok(Image { channels, height, width, pixels })
    }

    pub fn from_fn(channels: usize, height: usize, width: usize, f: impl Fn(usize, usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(channels * height * width);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(c, y, x));
                }
            }
        }
        Image::new(channels, height, width, pixels)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }
}

/// Per-channel `(x - mean) / std` applied after scaling pixels to [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            mean: vec![0.5],
            std: vec![0.5],
        }
    }
}

impl Normalization {
    /// Values for channel `c`; a single entry is broadcast.
    fn for_channel(&self, c: usize) -> (f64, f64) {
        let pick = |v: &[f64]| if v.len() == 1 { v[0] } else { v[c] };
        (pick(&self.mean), pick(&self.std))
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        for (v, what) in [(&self.mean, "mean"), (&self.std, "std")] {
            if v.len() != 1 && v.len() != channels {
                return Err(Error::dim("normalization", what, channels, v.len()));
            }
        }
        if self.std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("normalization", "std must be positive"));
        }
        Ok(())
    }
}

/// `(1, c, h, w)` tensor of normalized pixel values.
pub fn to_tensor(img: &Image, norm: &Normalization) -> Result<Tensor> {
    norm.validate(img.channels)?;
    let (c, h, w) = (img.channels, img.height, img.width);
    let mut data = vec![0.0; c * h * w];
    for ch in 0..c {
        let (mean, std) = norm.for_channel(ch);
        for y in 0..h {
            for x in 0..w {
                data[(ch * h + y) * w + x] = (img.get(ch, y, x) as f64 / 255.0 - mean) / std;
            }
        }
    }
    Tensor::from_vec(Shape::new(1, c, h, w), data)
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_owned(),
        msg: msg.into(),
    }
}

/// Reads a binary PGM (P5) or PPM (P6) with maxval 255.
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes).map_err(|msg| format_err(path, msg))
}

fn decode_pnm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("unexpected end of header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token()?.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(format!("unsupported format {other:?}; only binary P5/P6 are read")),
    };
    let mut num = |what: &str| -> std::result::Result<usize, String> {
        let t = token()?;
        t.parse().map_err(|_| format!("bad {what} {t:?}"))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}; only 8-bit (255) images are read"));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let len = channels * width * height;
    let raster = bytes
        .get(start..start + len)
        .ok_or_else(|| format!("raster truncated: expected {len} bytes"))?;
    Image::new(channels, height, width, raster.to_vec()).map_err(|e| e.to_string())
}

pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn crop(img: &Image, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
    if top + height > img.height {
        return Err(Error::dim("crop", "height", img.height, top + height));
    }
    if left + width > img.width {
        return Err(Error::dim("crop", "width", img.width, left + width));
    }
    let c = img.channels;
    let mut pixels = Vec::with_capacity(c * height * width);
    for y in top..top + height {
        let row = (y * img.width + left) * c;
        pixels.extend_from_slice(&img.pixels[row..row + width * c]);
    }
    Image::new(c, height, width, pixels)
}

pub fn center_crop(img: &Image, size: usize) -> Result<Image> {
    if size > img.height.min(img.width) {
        return Err(Error::invalid("center_crop", format!("crop {size} exceeds {}x{}", img.height, img.width)));
    }
    crop(img, (img.height - size) / 2, (img.width - size) / 2, size, size)
}

pub fn flip_horizontal(img: &Image) -> Image {
    let c = img.channels;
    let mut pixels = Vec::with_capacity(img.pixels.len());
    for y in 0..img.height {
        for x in (0..img.width).rev() {
            let i = (y * img.width + x) * c;
            pixels.extend_from_slice(&img.pixels[i..i + c]);
        }
    }
    Image { pixels, ..img.clone() }
}

/// Mirror padding without repeating the edge pixel (`dcb|abcd|cba`).
pub fn reflect_pad(img: &Image, pad: usize) -> Result<Image> {
    if pad == 0 {
        return Ok(img.clone());
    }
    if pad >= img.height || pad >= img.width {
        return Err(Error::invalid(
            "reflect_pad",
            format!("pad {pad} must be smaller than the image ({}x{})", img.height, img.width),
        ));
    }
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let r = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
        r as usize
    };
    let (h, w) = (img.height + 2 * pad, img.width + 2 * pad);
    Image::from_fn(img.channels, h, w, |c, y, x| {
        let sy = reflect(y as isize - pad as isize, img.height);
        let sx = reflect(x as isize - pad as isize, img.width);
        img.get(c, sy, sx)
    })
}

/// Crop window and flip decision of one augmentation draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropDraw {
    pub top: usize,
    pub left: usize,
    pub flipped: bool,
}

/// Reflect-pads by `pad`, takes a uniformly placed `out_size` square crop,
/// then flips horizontally with probability `flip_prob`.
pub fn random_crop_flip<R: Rng + ?Sized>(
    img: &Image,
    out_size: usize,
    pad: usize,
    flip_prob: f64,
    rng: &mut R,
) -> Result<(Image, CropDraw)> {
    let padded = reflect_pad(img, pad)?;
    if out_size > padded.height || out_size > padded.width {
        return Err(Error::invalid(
            "augment_train",
            format!("crop {out_size} exceeds padded image {}x{}", padded.height, padded.width),
        ));
    }
    let top = rng.gen_range(0..=padded.height - out_size);
    let left = rng.gen_range(0..=padded.width - out_size);
    let flipped = rng.gen_bool(flip_prob);
    let mut out = crop(&padded, top, left, out_size, out_size)?;
    if flipped {
        out = flip_horizontal(&out);
    }
    Ok((out, CropDraw { top, left, flipped }))
}

/// Train-time augmentation: random crop after reflect padding, then a
/// horizontal flip with probability 0.5.
pub fn augment_train<R: Rng + ?Sized>(img: &Image, out_size: usize, pad: usize, rng: &mut R) -> Result<Image> {
    random_crop_flip(img, out_size, pad, 0.5, rng).map(|(i, _)| i)
}

/// Four corner crops and the center crop, followed by the horizontal flip
/// of each, in the order TL, TR, BL, BR, C.
pub fn ten_crop(img: &Image, crop_size: usize) -> Result<Vec<Image>> {
    let (h, w) = (img.height, img.width);
    if crop_size == 0 || crop_size > h.min(w) {
        return Err(Error::invalid("ten_crop", format!("crop {crop_size} does not fit {h}x{w}")));
    }
    let anchors = [
        (0, 0),
        (0, w - crop_size),
        (h - crop_size, 0),
        (h - crop_size, w - crop_size),
        ((h - crop_size) / 2, (w - crop_size) / 2),
    ];
    let mut crops = anchors
        .iter()
        .map(|&(t, l)| crop(img, t, l, crop_size, crop_size))
        .collect::<Result<Vec<_>>>()?;
    let flipped: Vec<Image> = crops.iter().map(flip_horizontal).collect();
    crops.extend(flipped);
    Ok(crops)
}
