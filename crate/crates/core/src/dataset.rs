//! Manifest parsing and raster ingestion.
//!
//! A manifest is a text file with one `path,label` entry per line. Labels are
//! `member` or `nonmember`; blank lines and `#` comments are skipped, and a
//! `# modality: <note>` comment records the modality. Relative paths resolve
//! against the manifest's directory. Images may be 8- or 16-bit PNG or PNM;
//! pixel values are mapped affinely onto `[-1, 1]`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, Shape};
use crate::similarity::Membership;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Membership,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub source: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub modality: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    pub label: Membership,
    pub image: ImageTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<LabeledImage>,
    pub resolution: Shape,
}

impl Dataset {
    /// Builds an in-memory dataset; all images must share one shape.
    pub fn from_images(images: Vec<LabeledImage>) -> Result<Self> {
        let resolution = images
            .first()
            .ok_or_else(|| Error::Dataset {
                message: "dataset is empty".into(),
            })?
            .image
            .shape();
        if let Some(bad) = images.iter().find(|i| i.image.shape() != resolution) {
            return Err(Error::Dataset {
                message: format!("{} has shape {}, expected {resolution}", bad.id, bad.image.shape()),
            });
        }
        let entries = images
            .iter()
            .enumerate()
            .map(|(i, img)| ManifestEntry {
                path: PathBuf::from(&img.id),
                label: img.label,
                line: i + 1,
            })
            .collect();
        Ok(Self {
            manifest: DatasetManifest {
                source: PathBuf::new(),
                entries,
                modality: None,
            },
            images,
            resolution,
        })
    }

    pub fn members(&self) -> impl Iterator<Item = &LabeledImage> {
        self.images.iter().filter(|i| i.label == Membership::Member)
    }

    pub fn has_both_labels(&self) -> bool {
        self.members().next().is_some() && self.images.iter().any(|i| i.label == Membership::NonMember)
    }
}

fn parse_label(raw: &str) -> Option<Membership> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "member" | "1" => Some(Membership::Member),
        "nonmember" | "non-member" | "non_member" | "0" => Some(Membership::NonMember),
        _ => None,
    }
}

pub fn parse_manifest(text: &str, source: &Path) -> Result<DatasetManifest> {
    let base = source.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    let mut modality = None;
    let mut seen = HashSet::new();
    let data_err = |line: usize, message: String| Error::Data {
        path: source.to_path_buf(),
        line,
        message,
    };
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(note) = comment.trim().strip_prefix("modality:") {
                modality = Some(note.trim().to_string());
            }
            continue;
        }
        let (path, label) = line
            .rsplit_once([',', '\t'])
            .ok_or_else(|| data_err(line_no, format!("expected `path,label`, got {line:?}")))?;
        let label = parse_label(label)
            .ok_or_else(|| data_err(line_no, format!("unknown label {:?}", label.trim())))?;
        let path = PathBuf::from(path.trim());
        let path = if path.is_absolute() { path } else { base.join(path) };
        if !seen.insert(path.clone()) {
            return Err(data_err(line_no, format!("duplicate path {}", path.display())));
        }
        entries.push(ManifestEntry {
            path,
            label,
            line: line_no,
        });
    }
    if entries.is_empty() {
        return Err(data_err(0, "manifest lists no images".into()));
    }
    Ok(DatasetManifest {
        source: source.to_path_buf(),
        entries,
        modality,
    })
}

/// Decodes one raster into `[-1, 1]`, dropping any alpha channel.
pub fn decode_image(path: &Path, luminance: bool) -> Result<ImageTensor> {
    let decoded = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::InvalidImage(format!("{}: {e}", path.display())))?;
    let tensor = tensor_from_dynamic(&decoded)?;
    Ok(if luminance { tensor.luminance() } else { tensor })
}

fn tensor_from_dynamic(img: &DynamicImage) -> Result<ImageTensor> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, values, max): (usize, Vec<f64>, f64) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.as_raw().iter().map(|&v| f64::from(v)).collect(), 255.0),
        DynamicImage::ImageLuma16(b) => (1, b.as_raw().iter().map(|&v| f64::from(v)).collect(), 65535.0),
        DynamicImage::ImageLumaA8(_) => {
            let b = img.to_luma8();
            (1, b.as_raw().iter().map(|&v| f64::from(v)).collect(), 255.0)
        }
        DynamicImage::ImageLumaA16(_) => {
            let b = img.to_luma16();
            (1, b.as_raw().iter().map(|&v| f64::from(v)).collect(), 65535.0)
        }
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            let b = img.to_rgb16();
            (3, b.as_raw().iter().map(|&v| f64::from(v)).collect(), 65535.0)
        }
        _ => {
            let b = img.to_rgb8();
            (3, b.as_raw().iter().map(|&v| f64::from(v)).collect(), 255.0)
        }
    };
    // interleaved -> channel planes
    let plane = w * h;
    let mut data = vec![0.0; values.len()];
    for (i, v) in values.iter().enumerate() {
        let (pix, ch) = (i / channels, i % channels);
        data[ch * plane + pix] = v / max * 2.0 - 1.0;
    }
    ImageTensor::new(Shape::new(h, w, channels), data)
}

/// Loads every manifest entry; each failure is reported with its line number.
pub fn ingest(manifest_path: &Path, luminance: bool) -> Result<Dataset> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest = parse_manifest(&text, manifest_path)?;
    let mut images = Vec::with_capacity(manifest.entries.len());
    let mut resolution: Option<Shape> = None;
    for entry in &manifest.entries {
        let image = decode_image(&entry.path, luminance).map_err(|e| Error::Data {
            path: manifest_path.to_path_buf(),
            line: entry.line,
            message: e.to_string(),
        })?;
        match resolution {
            None => resolution = Some(image.shape()),
            Some(r) if r != image.shape() => {
                return Err(Error::Data {
                    path: manifest_path.to_path_buf(),
                    line: entry.line,
                    message: format!("{} has shape {}, expected {r}", entry.path.display(), image.shape()),
                })
            }
            Some(_) => {}
        }
        images.push(LabeledImage {
            id: entry.path.display().to_string(),
            label: entry.label,
            image,
        });
    }
    Ok(Dataset {
        resolution: resolution.expect("manifest is non-empty"),
        manifest,
        images,
    })
}

/// Writes a single-channel image in `[-1, 1]` as an 8-bit grayscale PNG.
pub fn write_gray_png(image: &ImageTensor, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_fn(image.width() as u32, image.height() as u32, |x, y| {
        let v = image.get(0, y as usize, x as usize).clamp(-1.0, 1.0);
        Luma([((v + 1.0) * 0.5 * 255.0).round() as u8])
    });
    buf.save(path)
        .map_err(|e| Error::InvalidImage(format!("{}: {e}", path.display())))
}
