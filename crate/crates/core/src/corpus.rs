//! Source-corpus synthesis: distorted variants of pristine images plus a
//! JSON-lines manifest.
//!
//! Paths inside a manifest are stored relative to the manifest file's
//! directory so that two runs in different roots produce byte-identical
//! manifests.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distortion::{compose_recipe, sample_recipe, DistortionKind, DistortionRecipe, SeverityTable};
use crate::error::{Error, Result};
use crate::image::RasterImage;

/// One manifest row. Rows with `skipped` set record pristine inputs that
/// could not be processed; they carry no distorted image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// Pristine image path, relative to the manifest directory.
    pub pristine: String,
    /// Distorted image path, relative to the manifest directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distorted: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<DistortionRecipe>,
    pub seed: u64,
    /// Set when a recipe used the wavelet stand-in for JP2K.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codec_notes: Option<String>,
    /// Reason this pristine image was skipped, if it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

/// Parsed manifest plus the directory its relative paths resolve against.
#[derive(Clone, Debug)]
pub struct CorpusManifest {
    pub records: Vec<ManifestRecord>,
    pub base_dir: PathBuf,
}

impl CorpusManifest {
    /// Rows that actually produced a distorted image.
    pub fn distorted_records(&self) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(|r| r.distorted.is_some())
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for rec in &self.records {
            serde_json::to_writer(&mut out, rec)
                .map_err(|e| Error::Numeric(format!("manifest serialize: {e}")))?;
            out.push(b'\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| {
                Error::validation(format!(
                    "{}:{}: bad manifest row: {e}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            records.push(rec);
        }
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(CorpusManifest { records, base_dir })
    }
}

/// Derives the per-variant seed from the run seed and the (image, variant)
/// coordinates; a splitmix64 finalizer keeps neighboring coordinates
/// uncorrelated.
pub fn variant_seed(global_seed: u64, image_index: usize, variant_index: usize) -> u64 {
    let mut z = global_seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(1 + image_index as u64))
        .wrapping_add(0x85eb_ca6bu64.wrapping_mul(1 + variant_index as u64));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Synthesizes `per_image` distorted variants of every decodable image under
/// `pristine_dir`, writing PNGs and the manifest into `out_dir`.
///
/// Unreadable inputs are skipped with a warning row; an input directory with
/// no decodable image files at all is an error. Variants are computed in
/// parallel; manifest order is (pristine, variant), independent of thread
/// scheduling.
pub fn synthesize_corpus(
    pristine_dir: &Path,
    per_image: usize,
    seed: u64,
    out_dir: &Path,
    table: &SeverityTable,
) -> Result<CorpusManifest> {
    if per_image == 0 {
        return Err(Error::validation("per_image must be positive"));
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(pristine_dir)
        .map_err(|e| Error::io(pristine_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|s| s.to_str()),
                Some("png") | Some("jpg") | Some("jpeg") | Some("bmp")
            )
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::validation(format!(
            "no decodable images in {}",
            pristine_dir.display()
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let images_dir = out_dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    // Decode every source up front; pristine copies are re-encoded next to
    // the variants so all manifest paths resolve against out_dir.
    let mut skip_rows = Vec::new();
    let mut sources: Vec<(usize, String, String, RasterImage)> = Vec::new();
    for (img_idx, src) in entries.iter().enumerate() {
        let stem = src
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_string();
        match RasterImage::load(src) {
            Ok(img) => {
                let pristine_rel = format!("images/{stem}.png");
                img.save_png(&out_dir.join(&pristine_rel))?;
                sources.push((img_idx, stem, pristine_rel, img));
            }
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", src.display());
                skip_rows.push(ManifestRecord {
                    pristine: src.display().to_string(),
                    distorted: None,
                    recipe: None,
                    seed,
                    codec_notes: None,
                    skipped: Some(e.to_string()),
                });
            }
        }
    }
    if sources.is_empty() {
        return Err(Error::validation(format!(
            "no decodable images in {}",
            pristine_dir.display()
        )));
    }

    let jobs: Vec<(usize, usize, &str, &str, &RasterImage)> = sources
        .iter()
        .flat_map(|(idx, stem, rel, img)| {
            (0..per_image).map(move |v| (*idx, v, stem.as_str(), rel.as_str(), img))
        })
        .collect();
    let results: Vec<Result<ManifestRecord>> = jobs
        .par_iter()
        .map(|(img_idx, variant, stem, pristine_rel, img)| {
            let vseed = variant_seed(seed, *img_idx, *variant);
            let mut rng = ChaCha8Rng::seed_from_u64(vseed);
            let recipe = sample_recipe(&mut rng);
            let distorted = compose_recipe(img, &recipe, vseed, table)?;
            let rel = format!("images/{stem}_d{variant:03}.png");
            distorted.save_png(&out_dir.join(&rel))?;
            let codec_notes = recipe
                .steps
                .iter()
                .any(|s| s.kind == DistortionKind::Jp2k)
                .then(|| "jp2k: wavelet-quantization approximation".to_string());
            Ok(ManifestRecord {
                pristine: pristine_rel.to_string(),
                distorted: Some(rel),
                recipe: Some(recipe),
                seed: vseed,
                codec_notes,
                skipped: None,
            })
        })
        .collect();

    let mut records = skip_rows;
    for r in results {
        records.push(r?);
    }
    let manifest = CorpusManifest {
        records,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

/// Writes a one-line corpus summary (used by the CLI).
pub fn manifest_summary(manifest: &CorpusManifest, mut writer: impl Write) -> Result<()> {
    let total = manifest.records.len();
    let distorted = manifest.distorted_records().count();
    let skipped = total - distorted;
    writeln!(writer, "manifest: {distorted} distorted, {skipped} skipped")
        .map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::write_pristine_dir;

    #[test]
    fn corpus_counts_and_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pristine = dir.path().join("pristine");
        write_pristine_dir(&pristine, 4, 48, 1).unwrap();
        let out = dir.path().join("corpus");
        let table = SeverityTable::default();
        let manifest = synthesize_corpus(&pristine, 5, 77, &out, &table).unwrap();
        assert_eq!(manifest.distorted_records().count(), 20);
        for rec in manifest.distorted_records() {
            let p = manifest.resolve(rec.distorted.as_ref().unwrap());
            assert!(p.exists(), "missing distorted file {}", p.display());
        }
        let loaded = CorpusManifest::load(&out.join("manifest.jsonl")).unwrap();
        assert_eq!(loaded.records, manifest.records);
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let pristine = dir.path().join("empty");
        std::fs::create_dir_all(&pristine).unwrap();
        let out = dir.path().join("corpus");
        let table = SeverityTable::default();
        assert!(synthesize_corpus(&pristine, 5, 0, &out, &table).is_err());
    }

    #[test]
    fn variant_seed_is_stable() {
        assert_eq!(variant_seed(1, 2, 3), variant_seed(1, 2, 3));
        assert_ne!(variant_seed(1, 2, 3), variant_seed(1, 2, 4));
        assert_ne!(variant_seed(1, 2, 3), variant_seed(2, 2, 3));
    }
}
