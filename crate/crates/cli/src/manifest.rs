//! Dataset manifest: composers, their genres and MIDI files.
//!
//! ```json
//! {
//!   "composers": [
//!     { "name": "bach", "genre": "baroque", "files": ["bach/*.mid"] },
//!     { "name": "chopin", "genre": "romantic", "files": ["chopin/op28.mid"] }
//!   ]
//! }
//! ```
//!
//! Relative paths and glob patterns resolve against the manifest's
//! directory. Composer order fixes the style index.

use anyhow::{bail, Context, Result};
use deepj_core::model::Composer;
use deepj_core::StyleCatalog;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposerEntry {
    pub name: String,
    pub genre: String,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub composers: Vec<ComposerEntry>,
}

impl DatasetManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).context("malformed dataset manifest")?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.composers.is_empty() {
            bail!("manifest lists no composers");
        }
        for (i, c) in self.composers.iter().enumerate() {
            if c.name.trim().is_empty() {
                bail!("composer #{i} has an empty name");
            }
            if c.name.contains([':', ',']) {
                bail!("composer name `{}` may not contain ':' or ','", c.name);
            }
            if c.genre.trim().is_empty() {
                bail!("composer `{}` has an empty genre", c.name);
            }
            if c.files.is_empty() {
                bail!("composer `{}` lists no files", c.name);
            }
            if self.composers[..i].iter().any(|o| o.name == c.name) {
                bail!("composer `{}` appears twice", c.name);
            }
        }
        Ok(())
    }

    pub fn catalog(&self) -> StyleCatalog {
        StyleCatalog::new(
            self.composers
                .iter()
                .map(|c| Composer {
                    name: c.name.clone(),
                    genre: c.genre.clone(),
                })
                .collect(),
        )
        .expect("names checked unique")
    }

    /// Files per composer, patterns expanded and sorted, relative to `base`.
    /// A composer whose patterns match nothing is an error.
    pub fn resolve_files(&self, base: &Path) -> Result<Vec<Vec<PathBuf>>> {
        self.composers
            .iter()
            .map(|c| {
                let mut files = Vec::new();
                for pattern in &c.files {
                    let full = base.join(pattern);
                    if is_pattern(pattern) {
                        let text = full.to_string_lossy();
                        let mut hits: Vec<PathBuf> = glob::glob(&text)
                            .with_context(|| format!("bad file pattern `{pattern}`"))?
                            .filter_map(Result::ok)
                            .filter(|p| p.is_file())
                            .collect();
                        hits.sort();
                        files.extend(hits);
                    } else {
                        files.push(full);
                    }
                }
                files.dedup();
                if files.is_empty() {
                    bail!("composer `{}` matches no files", c.name);
                }
                Ok(files)
            })
            .collect()
    }
}

fn is_pattern(s: &str) -> bool {
    s.contains(['*', '?', '['])
}
