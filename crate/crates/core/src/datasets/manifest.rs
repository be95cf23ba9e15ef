use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Segmentation label id to component index.
///
/// Labels not listed map to `default` when it is set; otherwise they are an
/// error.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LabelMapRepr", into = "LabelMapRepr")]
pub struct LabelMap {
    num_components: usize,
    labels: BTreeMap<u8, usize>,
    default: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct LabelMapRepr {
    num_components: usize,
    #[serde(default)]
    labels: BTreeMap<String, usize>,
    #[serde(default)]
    default: Option<usize>,
}

impl TryFrom<LabelMapRepr> for LabelMap {
    type Error = Error;

    fn try_from(r: LabelMapRepr) -> Result<Self> {
        let mut labels = BTreeMap::new();
        for (k, v) in r.labels {
            let id: u8 = k
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("label id {k:?} is not an integer in 0..=255")))?;
            labels.insert(id, v);
        }
        LabelMap::new(r.num_components, labels, r.default)
    }
}

impl From<LabelMap> for LabelMapRepr {
    fn from(m: LabelMap) -> Self {
        Self {
            num_components: m.num_components,
            labels: m.labels.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            default: m.default,
        }
    }
}

impl LabelMap {
    pub fn new(num_components: usize, labels: BTreeMap<u8, usize>, default: Option<usize>) -> Result<Self> {
        if num_components == 0 {
            return Err(Error::invalid("label map needs at least one component"));
        }
        if let Some((l, c)) = labels.iter().find(|(_, &c)| c >= num_components) {
            return Err(Error::invalid(format!(
                "label {l} maps to component {c}, but there are only {num_components}"
            )));
        }
        if default.is_some_and(|d| d >= num_components) {
            return Err(Error::invalid("default component out of range"));
        }
        Ok(Self {
            num_components,
            labels,
            default,
        })
    }

    /// Folds the given ids into component 0 and everything else into 1.
    pub fn vehicles(ids: &[u8]) -> Self {
        Self {
            num_components: 2,
            labels: ids.iter().map(|&i| (i, 0)).collect(),
            default: Some(1),
        }
    }

    /// The labelling written by the synthetic scene generator.
    pub fn synthetic() -> Self {
        Self::vehicles(&[super::VEHICLE_LABEL])
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    pub fn component(&self, label: u8) -> Option<usize> {
        self.labels.get(&label).copied().or(self.default)
    }

    pub fn map_labels(&self, labels: &[u8]) -> Result<Vec<u16>> {
        labels
            .iter()
            .map(|&l| {
                self.component(l)
                    .map(|c| c as u16)
                    .ok_or_else(|| Error::invalid(format!("unmapped segmentation label {l}")))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stem: String,
    pub rgb: PathBuf,
    pub thermal: PathBuf,
    pub seg: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub split: Split,
    pub entries: Vec<ManifestEntry>,
    pub label_map: LabelMap,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Files that could not be matched into triples, and other notes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ScanReport {
    pub orphans: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

const SUBDIRS: [&str; 3] = ["rgb", "thermal", "seg"];

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if let (true, Some(stem)) = (is_png, path.file_stem().and_then(|s| s.to_str())) {
            out.insert(stem.to_string(), path.clone());
        }
    }
    Ok(out)
}

/// Builds a sorted manifest of complete rgb/thermal/seg triples under `root`
/// (or `root/<split>` when that exists). Incomplete triples are reported as
/// orphans; a segmentation label the map cannot place is an error.
pub fn scan_dataset(root: &Path, split: Split, label_map: &LabelMap) -> Result<(DatasetManifest, ScanReport)> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let split_dir = root.join(split.to_string());
    let base = if split_dir.join("rgb").is_dir() {
        split_dir
    } else {
        root.to_path_buf()
    };
    let mut report = ScanReport::default();
    let mut found = Vec::new();
    for sub in SUBDIRS {
        let dir = base.join(sub);
        if !dir.is_dir() {
            report.warnings.push(format!("missing directory {}", dir.display()));
        }
        found.push(png_stems(&dir)?);
    }
    let all: BTreeSet<&String> = found.iter().flat_map(|m| m.keys()).collect();
    let mut entries = Vec::new();
    for stem in all {
        let paths: Vec<Option<&PathBuf>> = found.iter().map(|m| m.get(stem)).collect();
        match paths[..] {
            [Some(rgb), Some(thermal), Some(seg)] => entries.push(ManifestEntry {
                stem: stem.clone(),
                rgb: rgb.clone(),
                thermal: thermal.clone(),
                seg: seg.clone(),
            }),
            _ => report.orphans.extend(paths.into_iter().flatten().cloned()),
        }
    }
    if entries.is_empty() {
        report
            .warnings
            .push(format!("no complete triples under {}", base.display()));
    }
    for e in &entries {
        let seg = image::open(&e.seg)
            .map_err(|source| Error::Image {
                path: e.seg.clone(),
                source,
            })?
            .into_luma8();
        let mut seen = [false; 256];
        for &l in seg.as_raw() {
            seen[l as usize] = true;
        }
        if let Some(l) = (0..=255u8).find(|&l| seen[l as usize] && label_map.component(l).is_none()) {
            return Err(Error::invalid(format!(
                "unmapped segmentation label {l} in {}",
                e.seg.display()
            )));
        }
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok((
        DatasetManifest {
            root: base,
            split,
            entries,
            label_map: label_map.clone(),
        },
        report,
    ))
}
