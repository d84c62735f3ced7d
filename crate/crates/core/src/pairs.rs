//! Pair sampling, pseudo-binary labeling, and agreement statistics.
//!
//! Four structural pair types over the synthesized corpus:
//!   1. same reference, same distortion kind sequence, different levels;
//!   2. same reference, different kind sequences;
//!   3. different references;
//!   4. one member is the pristine reference itself.
//!
//! Pairs are sampled with replacement; every pair carries one verdict per
//! agent in declared agent order. The pair file is JSON lines with a header
//! row naming the ensemble.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{preference_from_scores, Agent, AgentId, ImageRef};
use crate::corpus::CorpusManifest;
use crate::error::{Error, Result};
use crate::image::RasterImage;

/// Default pair-type mix (types 1..4).
pub const DEFAULT_TYPE_MIX: [f64; 4] = [0.11, 0.49, 0.28, 0.12];

/// An unlabeled pair: paths are manifest-relative; each member carries its
/// own pristine reference for agent scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledPair {
    pub x_path: String,
    pub y_path: String,
    pub ref_x_path: String,
    pub ref_y_path: String,
    pub pair_type: u8,
}

/// A labeled pair: the unlabeled fields plus one verdict per agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    #[serde(flatten)]
    pub pair: UnlabeledPair,
    pub verdicts: Vec<u8>,
}

/// Header row of a pair file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairFileHeader {
    pub agent_ids: Vec<AgentId>,
    pub m: usize,
}

/// A labeled pair set with its provenance directory for path resolution.
#[derive(Clone, Debug)]
pub struct PairSet {
    pub header: PairFileHeader,
    pub records: Vec<PairRecord>,
    pub base_dir: PathBuf,
}

impl PairSet {
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
        serde_json::to_writer(&mut out, &self.header)
            .map_err(|e| Error::Numeric(format!("pair header serialize: {e}")))?;
        out.push(b'\n');
        for rec in &self.records {
            serde_json::to_writer(&mut out, rec)
                .map_err(|e| Error::Numeric(format!("pair serialize: {e}")))?;
            out.push(b'\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::validation(format!("{}: empty pair file", path.display())))?
            .map_err(|e| Error::io(path, e))?;
        let header: PairFileHeader = serde_json::from_str(&header_line).map_err(|e| {
            Error::validation(format!("{}: bad pair file header: {e}", path.display()))
        })?;
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PairRecord = serde_json::from_str(&line).map_err(|e| {
                Error::validation(format!(
                    "{}:{}: bad pair record: {e}",
                    path.display(),
                    lineno + 2
                ))
            })?;
            if rec.verdicts.len() != header.m {
                return Err(Error::validation(format!(
                    "{}:{}: record has {} verdicts, header says {}",
                    path.display(),
                    lineno + 2,
                    rec.verdicts.len(),
                    header.m
                )));
            }
            records.push(rec);
        }
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(PairSet {
            header,
            records,
            base_dir,
        })
    }
}

/// Rejection-sampling bound per requested pair before giving up on a type.
const MAX_ATTEMPTS: usize = 1000;

struct ManifestIndex<'a> {
    /// pristine -> indices of its distorted rows
    by_pristine: HashMap<&'a str, Vec<usize>>,
    /// (pristine, kind sequence) -> indices
    by_kind_seq: HashMap<(&'a str, String), Vec<usize>>,
    pristines: Vec<&'a str>,
    rows: Vec<&'a crate::corpus::ManifestRecord>,
}

impl<'a> ManifestIndex<'a> {
    fn build(manifest: &'a CorpusManifest) -> Self {
        let mut by_pristine: HashMap<&str, Vec<usize>> = HashMap::new();
        let mut by_kind_seq: HashMap<(&str, String), Vec<usize>> = HashMap::new();
        let rows: Vec<_> = manifest.distorted_records().collect();
        for (i, rec) in rows.iter().enumerate() {
            by_pristine.entry(&rec.pristine).or_default().push(i);
            if let Some(recipe) = &rec.recipe {
                by_kind_seq
                    .entry((&rec.pristine, recipe.kind_key()))
                    .or_default()
                    .push(i);
            }
        }
        let mut pristines: Vec<&str> = by_pristine.keys().copied().collect();
        pristines.sort();
        ManifestIndex {
            by_pristine,
            by_kind_seq,
            pristines,
            rows,
        }
    }
}

/// Samples `n_pairs` structural pairs with the given type mix.
///
/// Each draw picks a type from `type_mix`, then rejection-samples the
/// manifest for a pair satisfying that type's constraint; a type that stays
/// unsatisfiable after a bounded number of attempts is an error.
pub fn sample_pairs<R: Rng>(
    manifest: &CorpusManifest,
    n_pairs: usize,
    type_mix: [f64; 4],
    rng: &mut R,
) -> Result<Vec<UnlabeledPair>> {
    let sum: f64 = type_mix.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "type mix must sum to 1, got {sum}"
        )));
    }
    let index = ManifestIndex::build(manifest);
    if index.rows.is_empty() {
        return Err(Error::validation("manifest has no distorted records"));
    }
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pair_type = 4u8;
        for (i, p) in type_mix.iter().enumerate() {
            acc += p;
            if u < acc {
                pair_type = i as u8 + 1;
                break;
            }
        }
        pairs.push(sample_one(&index, pair_type, rng)?);
    }
    Ok(pairs)
}

fn sample_one<R: Rng>(index: &ManifestIndex, pair_type: u8, rng: &mut R) -> Result<UnlabeledPair> {
    for _ in 0..MAX_ATTEMPTS {
        let candidate = match pair_type {
            1 => {
                let p = *index.pristines.choose(rng).expect("nonempty");
                let rows = &index.by_pristine[p];
                let i = *rows.choose(rng).unwrap();
                let key = index.rows[i].recipe.as_ref().unwrap().kind_key();
                let group = &index.by_kind_seq[&(p, key)];
                if group.len() < 2 {
                    continue;
                }
                let j = *group.choose(rng).unwrap();
                if index.rows[i].recipe == index.rows[j].recipe {
                    continue;
                }
                Some((i, j))
            }
            2 => {
                let p = *index.pristines.choose(rng).expect("nonempty");
                let rows = &index.by_pristine[p];
                if rows.len() < 2 {
                    continue;
                }
                let i = *rows.choose(rng).unwrap();
                let j = *rows.choose(rng).unwrap();
                let (ri, rj) = (index.rows[i], index.rows[j]);
                if ri.recipe.as_ref().unwrap().kind_key() == rj.recipe.as_ref().unwrap().kind_key()
                {
                    continue;
                }
                Some((i, j))
            }
            3 => {
                if index.pristines.len() < 2 {
                    continue;
                }
                let i = *index.by_pristine[*index.pristines.choose(rng).unwrap()]
                    .choose(rng)
                    .unwrap();
                let j = *index.by_pristine[*index.pristines.choose(rng).unwrap()]
                    .choose(rng)
                    .unwrap();
                if index.rows[i].pristine == index.rows[j].pristine {
                    continue;
                }
                Some((i, j))
            }
            4 => {
                let p = *index.pristines.choose(rng).expect("nonempty");
                let i = *index.by_pristine[p].choose(rng).unwrap();
                // Pristine goes on a random side so type-4 verdicts are not
                // constant by construction.
                let rec = index.rows[i];
                let distorted = rec.distorted.clone().unwrap();
                let pristine = rec.pristine.clone();
                let pair = if rng.gen::<bool>() {
                    UnlabeledPair {
                        x_path: pristine.clone(),
                        y_path: distorted,
                        ref_x_path: pristine.clone(),
                        ref_y_path: pristine,
                        pair_type: 4,
                    }
                } else {
                    UnlabeledPair {
                        x_path: distorted,
                        y_path: pristine.clone(),
                        ref_x_path: pristine.clone(),
                        ref_y_path: pristine,
                        pair_type: 4,
                    }
                };
                return Ok(pair);
            }
            other => {
                return Err(Error::validation(format!("invalid pair type {other}")));
            }
        };
        if let Some((i, j)) = candidate {
            let (ri, rj) = (index.rows[i], index.rows[j]);
            return Ok(UnlabeledPair {
                x_path: ri.distorted.clone().unwrap(),
                y_path: rj.distorted.clone().unwrap(),
                ref_x_path: ri.pristine.clone(),
                ref_y_path: rj.pristine.clone(),
                pair_type,
            });
        }
    }
    Err(Error::validation(format!(
        "pair type {pair_type} unsatisfiable from this manifest after {MAX_ATTEMPTS} attempts"
    )))
}

/// Checks a pair's structural claim against the manifest.
pub fn validate_pair(manifest: &CorpusManifest, pair: &UnlabeledPair) -> Result<()> {
    let recipe_of = |path: &str| -> Option<&crate::distortion::DistortionRecipe> {
        manifest
            .distorted_records()
            .find(|r| r.distorted.as_deref() == Some(path))
            .and_then(|r| r.recipe.as_ref())
    };
    let fail = |msg: String| Err(Error::validation(msg));
    match pair.pair_type {
        1 => {
            let (rx, ry) = (recipe_of(&pair.x_path), recipe_of(&pair.y_path));
            match (rx, ry) {
                (Some(rx), Some(ry)) => {
                    if pair.ref_x_path != pair.ref_y_path {
                        return fail("type 1: references differ".into());
                    }
                    if rx.kind_key() != ry.kind_key() {
                        return fail("type 1: kind sequences differ".into());
                    }
                    if rx == ry {
                        return fail("type 1: identical recipes".into());
                    }
                    Ok(())
                }
                _ => fail("type 1: member not found in manifest".into()),
            }
        }
        2 => {
            let (rx, ry) = (recipe_of(&pair.x_path), recipe_of(&pair.y_path));
            match (rx, ry) {
                (Some(rx), Some(ry)) => {
                    if pair.ref_x_path != pair.ref_y_path {
                        return fail("type 2: references differ".into());
                    }
                    if rx.kind_key() == ry.kind_key() {
                        return fail("type 2: kind sequences match".into());
                    }
                    Ok(())
                }
                _ => fail("type 2: member not found in manifest".into()),
            }
        }
        3 => {
            if pair.ref_x_path == pair.ref_y_path {
                return fail("type 3: references match".into());
            }
            Ok(())
        }
        4 => {
            let pristine_is_x = pair.x_path == pair.ref_x_path;
            let pristine_is_y = pair.y_path == pair.ref_y_path;
            if pristine_is_x == pristine_is_y {
                return fail("type 4: exactly one member must be the pristine".into());
            }
            if pair.ref_x_path != pair.ref_y_path {
                return fail("type 4: references differ".into());
            }
            Ok(())
        }
        other => fail(format!("invalid pair type {other}")),
    }
}

/// Precomputed per-agent scores keyed by manifest-relative image path.
/// Column order matches the agent list the table was built with.
pub struct ScoreTable {
    pub agent_ids: Vec<AgentId>,
    pub by_path: HashMap<String, Vec<f64>>,
}

/// Scores every distorted row of the manifest (and each pristine against
/// itself, which type-4 pairs need) with each agent. Scoring is parallel
/// across images.
pub fn score_manifest(manifest: &CorpusManifest, agents: &[Agent]) -> Result<ScoreTable> {
    let mut targets: Vec<(String, String)> = Vec::new(); // (image, its reference)
    let mut seen_pristine: Vec<&str> = Vec::new();
    for rec in manifest.distorted_records() {
        targets.push((rec.distorted.clone().unwrap(), rec.pristine.clone()));
        if !seen_pristine.contains(&rec.pristine.as_str()) {
            seen_pristine.push(&rec.pristine);
            targets.push((rec.pristine.clone(), rec.pristine.clone()));
        }
    }
    let rows: Vec<Result<(String, Vec<f64>)>> = targets
        .par_iter()
        .map(|(img_rel, ref_rel)| {
            let img_px = RasterImage::load(&manifest.resolve(img_rel))?;
            let ref_px = if img_rel == ref_rel {
                img_px.clone()
            } else {
                RasterImage::load(&manifest.resolve(ref_rel))?
            };
            let scores = agents
                .iter()
                .map(|agent| {
                    agent.score(
                        ImageRef {
                            path: Path::new(ref_rel),
                            pixels: &ref_px,
                        },
                        ImageRef {
                            path: Path::new(img_rel),
                            pixels: &img_px,
                        },
                    )
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((img_rel.clone(), scores))
        })
        .collect();
    let mut by_path = HashMap::new();
    for row in rows {
        let (path, scores) = row?;
        by_path.insert(path, scores);
    }
    Ok(ScoreTable {
        agent_ids: agents.iter().map(Agent::id).collect(),
        by_path,
    })
}

/// Labels pairs from a precomputed score table. A pair whose member has no
/// score row is dropped and logged, never silently zero-filled.
pub fn label_pairs(pairs: &[UnlabeledPair], scores: &ScoreTable) -> Vec<PairRecord> {
    let mut records = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let (sx, sy) = match (scores.by_path.get(&pair.x_path), scores.by_path.get(&pair.y_path)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                eprintln!(
                    "warning: dropping pair ({}, {}): missing agent scores",
                    pair.x_path, pair.y_path
                );
                continue;
            }
        };
        let verdicts = scores
            .agent_ids
            .iter()
            .enumerate()
            .map(|(m, id)| preference_from_scores(id.polarity, sx[m], sy[m]))
            .collect();
        records.push(PairRecord {
            pair: pair.clone(),
            verdicts,
        });
    }
    records
}

/// Histogram over the number of positive verdicts per pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementHistogram {
    /// `counts[k]` = number of pairs with exactly `k` positive verdicts.
    pub counts: Vec<usize>,
}

impl AgreementHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Fraction of pairs on which all agents agree (all 0s or all 1s).
    pub fn full_agreement_fraction(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (self.counts[0] + self.counts[self.counts.len() - 1]) as f64 / total as f64
    }
}

pub fn agreement_histogram(records: &[PairRecord]) -> Result<AgreementHistogram> {
    let m = records
        .first()
        .map(|r| r.verdicts.len())
        .ok_or_else(|| Error::validation("no pair records"))?;
    let mut counts = vec![0usize; m + 1];
    for rec in records {
        if rec.verdicts.len() != m {
            return Err(Error::validation(format!(
                "mixed verdict counts: {} vs {m}",
                rec.verdicts.len()
            )));
        }
        let k: usize = rec.verdicts.iter().map(|&v| v as usize).sum();
        counts[k] += 1;
    }
    Ok(AgreementHistogram { counts })
}

/// Majority vote over the verdicts; a tie at exactly M/2 resolves to 1.
pub fn majority_label(record: &PairRecord) -> u8 {
    let m = record.verdicts.len() as f64;
    let positives: f64 = record.verdicts.iter().map(|&v| v as f64).sum();
    u8::from(positives >= m / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ManifestRecord;
    use crate::distortion::{DistortionKind, DistortionRecipe, DistortionStep};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fake_manifest(n_pristine: usize, kinds_per: usize, levels_per: usize) -> CorpusManifest {
        let mut records = Vec::new();
        for p in 0..n_pristine {
            let pristine = format!("images/p{p}.png");
            for k in 0..kinds_per {
                for l in 1..=levels_per {
                    let recipe = DistortionRecipe {
                        steps: vec![DistortionStep {
                            kind: DistortionKind::ALL[k],
                            level: l as u8,
                        }],
                    };
                    records.push(ManifestRecord {
                        pristine: pristine.clone(),
                        distorted: Some(format!("images/p{p}_k{k}_l{l}.png")),
                        recipe: Some(recipe),
                        seed: 0,
                        codec_notes: None,
                        skipped: None,
                    });
                }
            }
        }
        CorpusManifest {
            records,
            base_dir: PathBuf::from("."),
        }
    }

    #[test]
    fn sampled_pairs_satisfy_their_type_constraints() {
        let manifest = fake_manifest(6, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs = sample_pairs(&manifest, 500, DEFAULT_TYPE_MIX, &mut rng).unwrap();
        for pair in &pairs {
            validate_pair(&manifest, pair).unwrap();
        }
    }

    #[test]
    fn type_mix_frequencies_converge() {
        let manifest = fake_manifest(8, 5, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let pairs = sample_pairs(&manifest, n, DEFAULT_TYPE_MIX, &mut rng).unwrap();
        let mut counts = [0usize; 4];
        for p in &pairs {
            counts[p.pair_type as usize - 1] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            assert!(
                (freq - DEFAULT_TYPE_MIX[i]).abs() <= 0.01,
                "type {} frequency {freq} vs target {}",
                i + 1,
                DEFAULT_TYPE_MIX[i]
            );
        }
    }

    #[test]
    fn single_image_manifest_only_supports_type_4() {
        let manifest = fake_manifest(1, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(sample_pairs(&manifest, 5, [0.0, 0.0, 0.0, 1.0], &mut rng).is_ok());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(sample_pairs(&manifest, 5, [0.0, 0.0, 1.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let manifest = fake_manifest(4, 3, 3);
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let pa = sample_pairs(&manifest, 200, DEFAULT_TYPE_MIX, &mut a).unwrap();
        let pb = sample_pairs(&manifest, 200, DEFAULT_TYPE_MIX, &mut b).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn histogram_counts_and_conservation() {
        let mk = |verdicts: Vec<u8>| PairRecord {
            pair: UnlabeledPair {
                x_path: "a".into(),
                y_path: "b".into(),
                ref_x_path: "r".into(),
                ref_y_path: "r".into(),
                pair_type: 2,
            },
            verdicts,
        };
        let records = vec![mk(vec![1, 1, 1]), mk(vec![0, 0, 0]), mk(vec![1, 0, 1])];
        let hist = agreement_histogram(&records).unwrap();
        assert_eq!(hist.counts, vec![1, 0, 1, 1]);
        assert_eq!(hist.total(), 3);
        let mixed = vec![mk(vec![1, 1]), mk(vec![1, 1, 1])];
        assert!(agreement_histogram(&mixed).is_err());
    }

    #[test]
    fn majority_tie_resolves_to_one() {
        let mk = |verdicts: Vec<u8>| PairRecord {
            pair: UnlabeledPair {
                x_path: "a".into(),
                y_path: "b".into(),
                ref_x_path: "r".into(),
                ref_y_path: "r".into(),
                pair_type: 2,
            },
            verdicts,
        };
        assert_eq!(majority_label(&mk(vec![1, 1, 1, 0, 0, 0])), 1);
        assert_eq!(majority_label(&mk(vec![0, 0, 0, 0, 0, 0])), 0);
        assert_eq!(majority_label(&mk(vec![1, 0, 0])), 0);
        assert_eq!(majority_label(&mk(vec![1, 1, 0])), 1);
    }

    #[test]
    fn pair_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let set = PairSet {
            header: PairFileHeader {
                agent_ids: vec![AgentId {
                    name: "gmsd".into(),
                    polarity: crate::agents::Polarity::LowerIsBetter,
                }],
                m: 1,
            },
            records: vec![PairRecord {
                pair: UnlabeledPair {
                    x_path: "x.png".into(),
                    y_path: "y.png".into(),
                    ref_x_path: "r.png".into(),
                    ref_y_path: "r.png".into(),
                    pair_type: 2,
                },
                verdicts: vec![1],
            }],
            base_dir: dir.path().to_path_buf(),
        };
        set.save(&path).unwrap();
        let loaded = PairSet::load(&path).unwrap();
        assert_eq!(loaded.header, set.header);
        assert_eq!(loaded.records, set.records);
    }
}
