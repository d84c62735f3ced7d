//! Full-reference quality agents and the pairwise preference rule.
//!
//! Three metrics are built in (GMSD, MDSI, SR-SIM); anything else joins the
//! ensemble through [`ExternalAgent`], a read-only table of precomputed
//! scores keyed by image path.

mod gmsd;
mod mdsi;
pub mod plane;
mod srsim;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

pub use gmsd::gmsd;
pub use mdsi::mdsi;
pub use srsim::srsim;

use crate::error::{Error, Result};
use crate::image::RasterImage;

/// Score orientation: whether larger values mean better quality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    HigherIsBetter,
    LowerIsBetter,
}

/// Agent identity: a name and the polarity used in every preference
/// computation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentId {
    pub name: String,
    pub polarity: Polarity,
}

/// An image handed to an agent: decoded pixels plus the path it was loaded
/// from (external agents key their score tables by path).
#[derive(Clone, Copy)]
pub struct ImageRef<'a> {
    pub path: &'a Path,
    pub pixels: &'a RasterImage,
}

/// A member of the labeling ensemble.
pub enum Agent {
    Gmsd,
    Mdsi,
    Srsim,
    External(ExternalAgent),
}

impl Agent {
    pub fn id(&self) -> AgentId {
        match self {
            Agent::Gmsd => AgentId {
                name: "gmsd".into(),
                polarity: Polarity::LowerIsBetter,
            },
            Agent::Mdsi => AgentId {
                name: "mdsi".into(),
                polarity: Polarity::LowerIsBetter,
            },
            Agent::Srsim => AgentId {
                name: "srsim".into(),
                polarity: Polarity::HigherIsBetter,
            },
            Agent::External(ext) => ext.id.clone(),
        }
    }

    /// Scores `image` against its pristine `reference`.
    pub fn score(&self, reference: ImageRef, image: ImageRef) -> Result<f64> {
        let value = match self {
            Agent::Gmsd => gmsd(reference.pixels, image.pixels)?,
            Agent::Mdsi => mdsi(reference.pixels, image.pixels)?,
            Agent::Srsim => srsim(reference.pixels, image.pixels)?,
            Agent::External(ext) => ext.lookup(image.path)?,
        };
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "agent {} produced non-finite score for {}",
                self.id().name,
                image.path.display()
            )));
        }
        Ok(value)
    }

    /// Parses an `--agents` list entry: a built-in name or a path to an
    /// external score file.
    pub fn parse(spec: &str) -> Result<Agent> {
        match spec {
            "gmsd" => Ok(Agent::Gmsd),
            "mdsi" => Ok(Agent::Mdsi),
            "srsim" => Ok(Agent::Srsim),
            other if other.ends_with(".json") => {
                Ok(Agent::External(ExternalAgent::load(Path::new(other))?))
            }
            other => Err(Error::config(format!(
                "unknown agent '{other}' (expected gmsd, mdsi, srsim, or a .json score file)"
            ))),
        }
    }
}

/// Pseudo-binary preference: 1 iff `x` has quality at least that of `y`
/// under the agent after polarity normalization. Exact ties resolve to 1.
pub fn preference(
    agent: &Agent,
    ref_x: ImageRef,
    x: ImageRef,
    ref_y: ImageRef,
    y: ImageRef,
) -> Result<u8> {
    let sx = agent.score(ref_x, x)?;
    let sy = agent.score(ref_y, y)?;
    Ok(preference_from_scores(agent.id().polarity, sx, sy))
}

/// The comparison rule on raw scores.
pub fn preference_from_scores(polarity: Polarity, score_x: f64, score_y: f64) -> u8 {
    let better = match polarity {
        Polarity::HigherIsBetter => score_x >= score_y,
        Polarity::LowerIsBetter => score_x <= score_y,
    };
    u8::from(better)
}

/// Score table for an agent computed by a third-party tool.
///
/// File format: `{"name": ..., "polarity": "higher_is_better" |
/// "lower_is_better", "scores": {"<image path>": <finite score>, ...}}`.
/// Duplicate keys resolve last-wins with a warning. An empty table
/// constructs fine and fails on first lookup.
pub struct ExternalAgent {
    pub id: AgentId,
    scores: HashMap<String, f64>,
}

impl ExternalAgent {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ExternalScoreFile =
            serde_json::from_str(&text).map_err(|e| Error::config(format!(
                "{}: bad external agent file: {e}",
                path.display()
            )))?;
        let name = file.name.unwrap_or_else(|| {
            path.file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("external")
                .to_string()
        });
        let mut scores = HashMap::with_capacity(file.scores.entries.len());
        for (key, value) in file.scores.entries {
            if !value.is_finite() {
                return Err(Error::config(format!(
                    "{}: non-finite score for '{key}'",
                    path.display()
                )));
            }
            if scores.insert(key.clone(), value).is_some() {
                eprintln!(
                    "warning: {}: duplicate score key '{key}', keeping the last value",
                    path.display()
                );
            }
        }
        Ok(ExternalAgent {
            id: AgentId {
                name,
                polarity: file.polarity,
            },
            scores,
        })
    }

    pub fn from_scores(id: AgentId, scores: HashMap<String, f64>) -> Self {
        ExternalAgent { id, scores }
    }

    pub fn lookup(&self, image: &Path) -> Result<f64> {
        let key = image.to_string_lossy();
        self.scores
            .get(key.as_ref())
            .copied()
            .ok_or_else(|| Error::Lookup(PathBuf::from(image)))
    }
}

#[derive(Deserialize)]
struct ExternalScoreFile {
    #[serde(default)]
    name: Option<String>,
    polarity: Polarity,
    scores: ScoreEntries,
}

/// JSON map deserialized into an entry list so duplicate keys survive long
/// enough to warn about.
struct ScoreEntries {
    entries: Vec<(String, f64)>,
}

impl<'de> Deserialize<'de> for ScoreEntries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct EntriesVisitor;
        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = ScoreEntries;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a map of image path to score")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, f64>()? {
                    entries.push((k, v));
                }
                Ok(ScoreEntries { entries })
            }
        }
        deserializer.deserialize_map(EntriesVisitor)
    }
}

/// Builds the agent list from a comma-separated spec such as
/// `gmsd,mdsi,srsim` or `gmsd,scores/vsi.json`.
pub fn parse_agent_list(spec: &str) -> Result<Vec<Agent>> {
    let agents: Vec<Agent> = spec
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| Agent::parse(s.trim()))
        .collect::<Result<_>>()?;
    if agents.is_empty() {
        return Err(Error::config("agent list is empty"));
    }
    Ok(agents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::{apply_distortion, DistortionKind, SeverityTable};
    use crate::fixture::generate_pristine;

    fn img_ref<'a>(path: &'a Path, pixels: &'a RasterImage) -> ImageRef<'a> {
        ImageRef { path, pixels }
    }

    #[test]
    fn pristine_beats_heavy_distortion_for_every_builtin() {
        let img = generate_pristine(4, 96, 42).pop().unwrap();
        let table = SeverityTable::default();
        let bad = apply_distortion(&img, DistortionKind::GaussianNoise, 5, 1, &table).unwrap();
        let p = Path::new("pristine.png");
        let d = Path::new("bad.png");
        for agent in [Agent::Gmsd, Agent::Mdsi, Agent::Srsim] {
            let v = preference(
                &agent,
                img_ref(p, &img),
                img_ref(p, &img),
                img_ref(p, &img),
                img_ref(d, &bad),
            )
            .unwrap();
            assert_eq!(v, 1, "{} should prefer the pristine image", agent.id().name);
        }
    }

    #[test]
    fn ties_resolve_to_one_and_swapping_flips() {
        assert_eq!(preference_from_scores(Polarity::HigherIsBetter, 0.5, 0.5), 1);
        assert_eq!(preference_from_scores(Polarity::LowerIsBetter, 0.5, 0.5), 1);
        assert_eq!(preference_from_scores(Polarity::HigherIsBetter, 0.9, 0.7), 1);
        assert_eq!(preference_from_scores(Polarity::HigherIsBetter, 0.7, 0.9), 0);
        assert_eq!(preference_from_scores(Polarity::LowerIsBetter, 0.9, 0.7), 0);
    }

    #[test]
    fn external_agent_prefers_by_declared_polarity() {
        let mut scores = HashMap::new();
        scores.insert("a".to_string(), 0.9);
        scores.insert("b".to_string(), 0.7);
        let agent = Agent::External(ExternalAgent::from_scores(
            AgentId {
                name: "ext".into(),
                polarity: Polarity::HigherIsBetter,
            },
            scores,
        ));
        let px = RasterImage::constant(4, 4, [0.5; 3]);
        let v = preference(
            &agent,
            img_ref(Path::new("a"), &px),
            img_ref(Path::new("a"), &px),
            img_ref(Path::new("b"), &px),
            img_ref(Path::new("b"), &px),
        )
        .unwrap();
        assert_eq!(v, 1);
    }

    #[test]
    fn empty_external_agent_errors_on_first_query() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("empty.json");
        std::fs::write(&file, r#"{"polarity": "higher_is_better", "scores": {}}"#).unwrap();
        let agent = ExternalAgent::load(&file).unwrap();
        assert!(matches!(agent.lookup(Path::new("x.png")), Err(Error::Lookup(_))));
    }

    #[test]
    fn duplicate_external_keys_last_wins() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("dup.json");
        std::fs::write(
            &file,
            r#"{"polarity": "lower_is_better", "scores": {"a": 1.0, "a": 2.0}}"#,
        )
        .unwrap();
        let agent = ExternalAgent::load(&file).unwrap();
        assert_eq!(agent.lookup(Path::new("a")).unwrap(), 2.0);
    }

    #[test]
    fn missing_lookup_names_the_path() {
        let agent = ExternalAgent::from_scores(
            AgentId {
                name: "ext".into(),
                polarity: Polarity::HigherIsBetter,
            },
            HashMap::new(),
        );
        match agent.lookup(Path::new("gone.png")) {
            Err(Error::Lookup(p)) => assert_eq!(p, Path::new("gone.png")),
            other => panic!("expected lookup error, got {other:?}"),
        }
    }
}
