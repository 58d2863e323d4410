use std::io::Write;
use std::path::Path;


use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("png") => Ok(ImageFormat::Png),
        Some("pgm" | "ppm" | "pnm") => Ok(ImageFormat::Pnm),
        other => Err(Error::InvalidArgument(format!("unsupported image extension {other:?} (png, pgm, ppm)"))),
    }
}

fn quantize(v: f64, depth: BitDepth) -> f64 {
    (v.clamp(0.0, 1.0) * depth.max()).round()
}

/// Binary P5/P6 with big-endian samples when 16-bit.
fn write_pnm(path: &Path, c: usize, h: usize, w: usize, depth: BitDepth, px: impl Fn(usize, usize, usize) -> f64) -> Result<()> {
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut bytes = format!("{magic}\n{w} {h}\n{}\n", depth.max()).into_bytes();
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                let v = px(ch, i, j);
                match depth {
                    BitDepth::Eight => bytes.push(v as u8),
                    BitDepth::Sixteen => bytes.extend_from_slice(&(v as u16).to_be_bytes()),
                }
            }
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Writes a `[H, W]`, `[1, H, W]` or `[3, H, W]` image with values in `[0, 1]`
/// (clamped). The format follows the extension.
pub fn save_image(path: &Path, image: &Tensor<f64>, depth: BitDepth) -> Result<()> {
    let format = format_for(path)?;
    let (c, h, w) = match *image.shape() {
        [h, w] => (1, h, w),
        [c @ (1 | 3), h, w] => (c, h, w),
        _ => return Err(Error::shape("save_image", "[H, W], [1, H, W] or [3, H, W]", crate::tensor::shape_str(image.shape()))),
    };
    let d = image.data();
    let px = |ch: usize, i: usize, j: usize| quantize(d[ch * h * w + i * w + j], depth);
    let (wu, hu) = (w as u32, h as u32);
    let dynamic = match (c, depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(ImageBuffer::from_fn(wu, hu, |x, y| Luma([px(0, y as usize, x as usize) as u8]))),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(ImageBuffer::from_fn(wu, hu, |x, y| Luma([px(0, y as usize, x as usize) as u16]))),
        (_, BitDepth::Eight) => DynamicImage::ImageRgb8(ImageBuffer::from_fn(wu, hu, |x, y| {
            let (i, j) = (y as usize, x as usize);
            Rgb([px(0, i, j) as u8, px(1, i, j) as u8, px(2, i, j) as u8])
        })),
        (_, BitDepth::Sixteen) => DynamicImage::ImageRgb16(ImageBuffer::from_fn(wu, hu, |x, y| {
            let (i, j) = (y as usize, x as usize);
            Rgb([px(0, i, j) as u16, px(1, i, j) as u16, px(2, i, j) as u16])
        })),
    };
    if format == ImageFormat::Pnm {
        return write_pnm(path, c, h, w, depth, |ch, i, j| px(ch, i, j));
    }
    dynamic.save_with_format(path, format)?;
    Ok(())
}

/// Reads an 8- or 16-bit grayscale or RGB image as `[C, H, W]` in `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Tensor<f64>> {
    let format = format_for(path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, format)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageRgb16(b) => (3, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        other => return Err(Error::InvalidArgument(format!("unsupported pixel layout {:?}", other.color()))),
    };
    let mut planar = vec![0.0; data.len()];
    for p in 0..h * w {
        for c in 0..channels {
            planar[c * h * w + p] = data[p * channels + c];
        }
    }
    Tensor::from_vec(&[channels, h, w], planar)
}

/// Loads every png/pgm/ppm file in `dir`, sorted by file name, as a `[N, C, H, W]` batch.
/// All images must share one shape.
pub fn load_image_dir(dir: &Path) -> Result<(Vec<String>, Tensor<f64>)> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| format_for(Path::new(n)).is_ok())
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::InvalidArgument(format!("no images in {}", dir.display())));
    }
    let images = names.iter().map(|n| load_image(&dir.join(n)).map(|t| t.unsqueeze_leading())).collect::<Result<Vec<_>>>()?;
    let batch = Tensor::concat(&images.iter().collect::<Vec<_>>())?;
    Ok((names, batch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        Tensor::rand_uniform(shape, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn sixteen_bit_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        for (name, shape) in [("a.pgm", vec![1, 13, 21]), ("b.png", vec![1, 8, 8]), ("c.ppm", vec![3, 9, 5]), ("d.png", vec![3, 4, 6])] {
            let x = random(&shape, 1);
            let p = dir.path().join(name);
            save_image(&p, &x, BitDepth::Sixteen).unwrap();
            let back = load_image(&p).unwrap();
            assert_eq!(back.shape(), &shape[..]);
            assert!(back.max_abs_diff(&x).unwrap() <= 0.5 / 65535.0 + 1e-12, "{name}");
        }
    }

    #[test]
    fn eight_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = random(&[1, 7, 9], 2);
        let p = dir.path().join("x.pgm");
        save_image(&p, &x, BitDepth::Eight).unwrap();
        assert!(load_image(&p).unwrap().max_abs_diff(&x).unwrap() <= 0.5 / 255.0 + 1e-12);
    }

    #[test]
    fn pgm_header_declares_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.pgm");
        save_image(&p, &random(&[11, 6], 3), BitDepth::Sixteen).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = String::from_utf8_lossy(&bytes[..20]);
        let tokens: Vec<&str> = header.split_ascii_whitespace().take(4).collect();
        assert_eq!(tokens, vec!["P5", "6", "11", "65535"]);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.pgm");
        save_image(&p, &random(&[1, 16, 16], 4), BitDepth::Eight).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_image(&p).is_err());
        std::fs::write(&p, b"P5\n").unwrap();
        assert!(load_image(&p).is_err());
    }

    #[test]
    fn unknown_extension_is_rejected() {
        assert!(save_image(Path::new("x.bmp"), &random(&[1, 2, 2], 0), BitDepth::Eight).is_err());
    }

    #[test]
    fn directory_loader_sorts_and_stacks() {
        let dir = tempfile::tempdir().unwrap();
        let a = Tensor::from_vec(&[3, 4, 4], (0..48).map(|i| i as f64 / 47.0).collect()).unwrap();
        let b = Tensor::zeros(&[3, 4, 4]);
        save_image(&dir.path().join("b.png"), &b, BitDepth::Eight).unwrap();
        save_image(&dir.path().join("a.png"), &a, BitDepth::Sixteen).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let (names, batch) = load_image_dir(dir.path()).unwrap();
        assert_eq!(names, ["a.png", "b.png"]);
        assert_eq!(batch.shape(), &[2, 3, 4, 4]);
        assert_eq!(batch.item_slice(1).iter().sum::<f64>(), 0.0);
        assert!(load_image_dir(&dir.path().join("missing")).is_err());
    }
}
