use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use docforge_core::corrector::{
    build_index, check_indexes, CorrectionError, CorrectionPolicy, GazetteerRecord, IndexError,
    IndexSet, DEFAULT_NGRAM_SIZE,
};
use docforge_core::detection::{DetectionParams, ParamError};
use docforge_core::doc_model::{DatasetManifest, Split};
use docforge_core::FieldKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation_io::{load_gazetteer, read_manifest, GazetteerError, ManifestIoError};
use crate::backend::{BackendDescriptor, BackendError, BackendKind, GenerationConfig};
use crate::index_store::{load_index, IndexStoreError};

/// Overrides the location of a remote backend.
pub const BACKEND_URL_ENV: &str = "DOCFORGE_BACKEND_URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
}

fn default_formats() -> Vec<ReportFormat> {
    vec![ReportFormat::Json, ReportFormat::Markdown]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("reports")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<ReportFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_output_dir(),
            formats: default_formats(),
        }
    }
}

fn default_ngram_size() -> usize {
    DEFAULT_NGRAM_SIZE
}

fn default_split() -> Split {
    Split::Test
}

/// The single configuration document. Every threshold defaults to the
/// published setting, so a minimal file only names paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub backend: BackendDescriptor,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub policy: CorrectionPolicy,
    #[serde(default)]
    pub detection: DetectionParams,
    #[serde(default = "default_ngram_size")]
    pub ngram_size: usize,
    /// Gazetteer files per field label. A `.json` file is a prebuilt index
    /// and must be the only entry for its field; other files are plain
    /// gazetteer text and are merged.
    #[serde(default)]
    pub gazetteers: BTreeMap<String, Vec<PathBuf>>,
    pub manifest: PathBuf,
    /// Where `<doc_id>.json` LabelMe files live when a manifest entry does
    /// not name its annotation file.
    #[serde(default)]
    pub annotations_dir: Option<PathBuf>,
    /// Pre-cut field patches, `<patches_dir>/<doc_id>/<field>.png`.
    #[serde(default)]
    pub patches_dir: Option<PathBuf>,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub case_insensitive: bool,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{what} {path} does not exist")]
    MissingPath { what: &'static str, path: PathBuf },
    #[error("unknown field label {0:?} in gazetteers")]
    BadFieldLabel(String),
    #[error("{0}")]
    Backend(#[from] BackendError),
    #[error("{0}")]
    Detection(#[from] ParamError),
    #[error("{0}")]
    Policy(#[from] CorrectionError),
    #[error("gazetteer {path}: {source}")]
    Gazetteer {
        path: PathBuf,
        #[source]
        source: GazetteerError,
    },
    #[error("gazetteer index for {field}: {source}")]
    Index {
        field: FieldKind,
        #[source]
        source: IndexError,
    },
    #[error("index file {path}: {source}")]
    IndexFile {
        path: PathBuf,
        #[source]
        source: IndexStoreError,
    },
    #[error("field {0}: a prebuilt .json index cannot be combined with other files")]
    MixedGazetteerSources(FieldKind),
    #[error("prebuilt index {path} uses {found}-grams but the config asks for {expected}")]
    NgramSizeMismatch {
        path: PathBuf,
        found: usize,
        expected: usize,
    },
    #[error("manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: ManifestIoError,
    },
    #[error("ngram_size must be at least 1")]
    ZeroNgramSize,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub backend_kind: Option<BackendKind>,
    pub output_dir: Option<PathBuf>,
    /// Value of the backend URL environment variable, if set.
    pub backend_url: Option<String>,
}

impl Overrides {
    pub fn from_env() -> Self {
        Overrides {
            backend_url: std::env::var(BACKEND_URL_ENV).ok().filter(|v| !v.is_empty()),
            ..Default::default()
        }
    }
}

/// A validated configuration with every path resolved against the config
/// file's directory and the manifest and gazetteers loaded.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
    pub manifest: DatasetManifest,
    /// Directory used to resolve relative paths inside the manifest.
    pub manifest_dir: PathBuf,
    pub indexes: IndexSet,
}

pub(crate) fn read_file(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn require(what: &'static str, path: &Path) -> Result<(), ConfigError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ConfigError::MissingPath {
            what,
            path: path.to_path_buf(),
        })
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    pub fn from_json(content: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(content).map_err(|source| ConfigError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads, resolves and validates the config at `path`.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<LoadedConfig, ConfigError> {
        let content = read_file(path)?;
        let config = Self::from_json(&content, path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve(&base, overrides)
    }

    /// Validates thresholds, applies overrides, checks that every referenced
    /// path exists, and loads the manifest and gazetteer indexes.
    pub fn resolve(mut self, base: &Path, overrides: &Overrides) -> Result<LoadedConfig, ConfigError> {
        if let Some(kind) = overrides.backend_kind {
            self.backend.kind = kind;
        }
        match self.backend.kind {
            BackendKind::Remote => {
                if let Some(url) = &overrides.backend_url {
                    self.backend.location = url.clone();
                }
            }
            BackendKind::Fixture => {
                let root = resolve(base, Path::new(&self.backend.location));
                require("fixture directory", &root)?;
                self.backend.location = root.to_string_lossy().into_owned();
            }
        }
        self.backend.validate()?;
        self.generation.validate()?;
        self.detection.validate()?;
        self.policy.validate()?;
        if self.ngram_size == 0 {
            return Err(ConfigError::ZeroNgramSize);
        }

        self.manifest = resolve(base, &self.manifest);
        require("manifest", &self.manifest)?;
        let manifest = read_manifest(&read_file(&self.manifest)?).map_err(|source| {
            ConfigError::Manifest {
                path: self.manifest.clone(),
                source,
            }
        })?;
        let manifest_dir = self.manifest.parent().map(Path::to_path_buf).unwrap_or_default();

        if let Some(dir) = &self.annotations_dir {
            let dir = resolve(base, dir);
            require("annotation directory", &dir)?;
            self.annotations_dir = Some(dir);
        }
        if let Some(dir) = &self.patches_dir {
            let dir = resolve(base, dir);
            require("patch directory", &dir)?;
            self.patches_dir = Some(dir);
        }
        if let Some(dir) = overrides.output_dir.clone() {
            self.output.dir = dir;
        } else {
            self.output.dir = resolve(base, &self.output.dir);
        }

        let mut gazetteers = BTreeMap::new();
        for (label, paths) in &self.gazetteers {
            let resolved: Vec<PathBuf> = paths.iter().map(|p| resolve(base, p)).collect();
            for p in &resolved {
                require("gazetteer", p)?;
            }
            gazetteers.insert(label.clone(), resolved);
        }
        self.gazetteers = gazetteers;
        let indexes = self.build_indexes()?;
        check_indexes(&indexes, &self.policy)?;

        Ok(LoadedConfig {
            config: self,
            base_dir: base.to_path_buf(),
            manifest,
            manifest_dir,
            indexes,
        })
    }

    fn build_indexes(&self) -> Result<IndexSet, ConfigError> {
        let mut set = IndexSet::new();
        for (label, paths) in &self.gazetteers {
            let field =
                FieldKind::parse(label).map_err(|_| ConfigError::BadFieldLabel(label.clone()))?;
            let is_index = |p: &PathBuf| p.extension().and_then(|e| e.to_str()) == Some("json");
            let index = if paths.iter().any(is_index) {
                if paths.len() != 1 {
                    return Err(ConfigError::MixedGazetteerSources(field));
                }
                let path = &paths[0];
                let index = load_index(&read_file(path)?).map_err(|source| ConfigError::IndexFile {
                    path: path.clone(),
                    source,
                })?;
                if index.ngram_size() != self.ngram_size {
                    return Err(ConfigError::NgramSizeMismatch {
                        path: path.clone(),
                        found: index.ngram_size(),
                        expected: self.ngram_size,
                    });
                }
                index
            } else {
                let records = load_gazetteer_files(paths, &field)?;
                build_index(&records, self.ngram_size)
                    .map_err(|source| ConfigError::Index { field: field.clone(), source })?
            };
            for e in index.unreachable_entries() {
                log::warn!(
                    "gazetteer entry {:?} for {} is shorter than {} characters and can never be retrieved",
                    e.text,
                    field,
                    self.ngram_size
                );
            }
            set.insert(field, index);
        }
        Ok(set)
    }
}

/// Loads and merges plain gazetteer files, keeping the first occurrence of
/// each entry.
pub fn load_gazetteer_files(
    paths: &[PathBuf],
    field: &FieldKind,
) -> Result<Vec<GazetteerRecord>, ConfigError> {
    let mut records: Vec<GazetteerRecord> = Vec::new();
    for path in paths {
        let loaded = load_gazetteer(&read_file(path)?, field).map_err(|source| {
            ConfigError::Gazetteer {
                path: path.clone(),
                source,
            }
        })?;
        for r in loaded {
            if !records.iter().any(|e| e.entry == r.entry) {
                records.push(r);
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, content: &str) {
        if let Some(p) = dir.join(name).parent() {
            fs::create_dir_all(p).unwrap();
        }
        fs::write(dir.join(name), content).unwrap();
    }

    fn minimal(dir: &Path) -> PathBuf {
        write(dir, "fixtures/.keep", "");
        write(dir, "manifest.json", r#"{"entries":[{"doc_id":"d1","split":"test"}]}"#);
        write(dir, "names.txt", "Amar\nPrakash\n");
        write(dir, "stations.txt", "Baguiati\n");
        write(dir, "statutes.txt", "IPC\nNDPS Act\n");
        let cfg = r#"{
            "backend": {"kind": "fixture", "location": "fixtures"},
            "manifest": "manifest.json",
            "gazetteers": {
                "complainant_name": ["names.txt"],
                "police_station": ["stations.txt"],
                "statute": ["statutes.txt"]
            }
        }"#;
        write(dir, "config.json", cfg);
        dir.join("config.json")
    }

    #[test]
    fn minimal_config_gets_published_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let loaded = PipelineConfig::load(&minimal(dir.path()), &Overrides::default()).unwrap();
        let c = &loaded.config;
        assert_eq!(c.policy, CorrectionPolicy::default());
        assert_eq!(c.detection, DetectionParams::default());
        assert_eq!(c.generation, GenerationConfig::default());
        assert_eq!(c.split, Split::Test);
        assert_eq!(c.backend.patch_side, 384);
        assert_eq!(loaded.indexes.len(), 3);
        assert_eq!(loaded.indexes[&FieldKind::ComplainantName].len(), 2);
        assert!(c.output.dir.starts_with(dir.path()));
    }

    #[test]
    fn missing_paths_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal(dir.path());
        fs::remove_file(dir.path().join("stations.txt")).unwrap();
        match PipelineConfig::load(&path, &Overrides::default()) {
            Err(ConfigError::MissingPath { what, .. }) => assert_eq!(what, "gazetteer"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn correctable_fields_need_gazetteers() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal(dir.path());
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace(r#""statute": ["statutes.txt"]"#, r#""year": ["statutes.txt"]"#);
        fs::write(&path, text).unwrap();
        assert!(matches!(
            PipelineConfig::load(&path, &Overrides::default()),
            Err(ConfigError::Policy(CorrectionError::MissingIndex(FieldKind::Statute)))
        ));
    }

    #[test]
    fn out_of_range_thresholds_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal(dir.path());
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace(r#""manifest""#, r#""policy": {"knn_accept_threshold": 1.5}, "manifest""#);
        fs::write(&path, text).unwrap();
        assert!(matches!(
            PipelineConfig::load(&path, &Overrides::default()),
            Err(ConfigError::Policy(_))
        ));
    }

    #[test]
    fn environment_url_overrides_remote_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal(dir.path());
        let overrides = Overrides {
            backend_kind: Some(BackendKind::Remote),
            backend_url: Some("http://127.0.0.1:8080".into()),
            ..Default::default()
        };
        let loaded = PipelineConfig::load(&path, &overrides).unwrap();
        assert_eq!(loaded.config.backend.kind, BackendKind::Remote);
        assert_eq!(loaded.config.backend.location, "http://127.0.0.1:8080");
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal(dir.path());
        let text = fs::read_to_string(&path).unwrap().replace("\"manifest\"", "\"manfest\"");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            PipelineConfig::load(&path, &Overrides::default()),
            Err(ConfigError::Json { .. })
        ));
    }
}
