//! Pipeline configuration: TOML text, every key optional.
//!
//! ```toml
//! seed = 0
//! jobs = 4
//! out = "run"
//! frame_rate = 30.0
//!
//! [features]
//! kind = "dct"          # or "aam"
//! window = 36
//! roi = "landmarks"     # or "template"
//! roi_margin = 0.15
//! # template = "mouth.png"
//!
//! [aam]
//! warp = "patch"
//! descriptor = "sift"
//! part = "face"
//! variant = "s+a"
//!
//! [sampler]
//! confidence = 0.94
//! fraction = 0.05
//! sentences_per_speaker = 5
//!
//! [hmm]
//! states = 3
//! schedule = [1, 2, 4, 8, 16, 20]
//! runs = 5
//! floor_scale = 1e-4
//! silence = "sil"
//! insertion_penalty = 0.0
//!
//! [scoring]
//! costs = "unit"        # or "htk"
//!
//! [fit_eval]
//! max_error = 0.05
//! points = 51
//! threshold = 0.02
//!
//! [synth]
//! n_speakers = 4
//! sentences_per_speaker = 20
//! test_per_speaker = 4
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aam::{AamConfig, ColorMode, Descriptor, Part, SamplerConfig, WarpKind};
use crate::error::{Error, Result};
use crate::eval::EditCosts;
use crate::features::AamVariant;
use crate::hmm::HmmConfig;
use crate::synth::SynthConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub out: PathBuf,
    pub frame_rate: f64,
    pub features: FeatureSection,
    pub aam: AamSection,
    pub sampler: SamplerSection,
    pub hmm: HmmSection,
    pub scoring: ScoringSection,
    pub fit_eval: FitEvalSection,
    pub synth: SynthSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontEnd {
    Dct,
    Aam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoiSource {
    Landmarks,
    Template,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub kind: FrontEnd,
    pub window: usize,
    pub roi: RoiSource,
    pub roi_margin: f64,
    pub template: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AamSection {
    pub warp: String,
    pub descriptor: String,
    pub part: String,
    pub color: String,
    pub variant: String,
    pub iterations: Option<Vec<usize>>,
    pub n_shape: usize,
    pub n_appearance: usize,
    pub patch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub confidence: f64,
    pub fraction: f64,
    pub sentences_per_speaker: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmSection {
    pub states: usize,
    pub schedule: Vec<usize>,
    pub runs: usize,
    pub floor_scale: f64,
    /// Empty string: no silence model topology.
    pub silence: String,
    pub insertion_penalty: f64,
    pub max_components: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Unit,
    Htk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSection {
    pub costs: CostKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitEvalSection {
    pub max_error: f64,
    pub points: usize,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_speakers: usize,
    pub sentences_per_speaker: usize,
    pub test_per_speaker: usize,
    pub frames_per_viseme: usize,
    pub min_labels: usize,
    pub max_labels: usize,
    pub width: usize,
    pub height: usize,
    pub corrupt_fraction: f64,
    pub noise: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 0,
            out: PathBuf::from("run"),
            frame_rate: 30.0,
            features: FeatureSection::default(),
            aam: AamSection::default(),
            sampler: SamplerSection::default(),
            hmm: HmmSection::default(),
            scoring: ScoringSection::default(),
            fit_eval: FitEvalSection::default(),
            synth: SynthSection::default(),
        }
    }
}

impl Default for FeatureSection {
    fn default() -> Self {
        Self {
            kind: FrontEnd::Dct,
            window: crate::dct::DEFAULT_WINDOW,
            roi: RoiSource::Landmarks,
            roi_margin: 0.15,
            template: None,
        }
    }
}

impl Default for AamSection {
    fn default() -> Self {
        let c = AamConfig::new(WarpKind::Patch, Descriptor::Sift, Part::Face);
        Self {
            warp: c.warp.to_string(),
            descriptor: c.descriptor.to_string(),
            part: c.part.to_string(),
            color: c.color.to_string(),
            variant: AamVariant::ShapeAppearance.as_str().into(),
            iterations: None,
            n_shape: c.n_shape,
            n_appearance: c.n_appearance,
            patch: c.patch,
        }
    }
}

impl Default for SamplerSection {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Self {
            confidence: s.confidence,
            fraction: s.fraction,
            sentences_per_speaker: s.sentences_per_speaker,
        }
    }
}

impl Default for HmmSection {
    fn default() -> Self {
        let h = HmmConfig::default();
        Self {
            states: h.n_states,
            schedule: h.schedule,
            runs: h.runs,
            floor_scale: h.floor_scale,
            silence: h.silence.unwrap_or_default(),
            insertion_penalty: 0.0,
            max_components: h.max_components,
        }
    }
}

impl Default for ScoringSection {
    fn default() -> Self {
        Self { costs: CostKind::Unit }
    }
}

impl Default for FitEvalSection {
    fn default() -> Self {
        Self {
            max_error: 0.05,
            points: 51,
            threshold: 0.02,
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            n_speakers: s.n_speakers,
            sentences_per_speaker: s.sentences_per_speaker,
            test_per_speaker: s.test_per_speaker,
            frames_per_viseme: s.frames_per_viseme,
            min_labels: s.min_labels,
            max_labels: s.max_labels,
            width: s.width,
            height: s.height,
            corrupt_fraction: s.corrupt_fraction,
            noise: s.noise,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::format("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        Self::from_toml_str(&text).map_err(|e| e.at_path(path))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate > 0.0) {
            return Err(Error::invalid(format!("frame rate {} must be positive", self.frame_rate)));
        }
        if self.features.window < 8 {
            return Err(Error::invalid(format!("DCT window {} below 8 pixels", self.features.window)));
        }
        if !(self.features.roi_margin >= 0.0) {
            return Err(Error::invalid("ROI margin must be non-negative"));
        }
        if self.features.roi == RoiSource::Template && self.features.template.is_none() {
            return Err(Error::invalid("template ROI selected without a template image"));
        }
        if !(self.fit_eval.max_error > 0.0) || self.fit_eval.points < 2 {
            return Err(Error::invalid("fit evaluation needs a positive range and at least 2 points"));
        }
        self.aam_config()?;
        self.aam_variant()?;
        self.sampler_config()?;
        self.hmm_config().validate()?;
        self.synth_config().validate()
    }

    pub fn aam_config(&self) -> Result<AamConfig> {
        let a = &self.aam;
        let mut c = AamConfig::new(a.warp.parse()?, a.descriptor.parse()?, a.part.parse()?);
        c.color = a.color.parse::<ColorMode>()?;
        if let Some(it) = &a.iterations {
            c.iterations = it.clone();
        }
        c.n_shape = a.n_shape;
        c.n_appearance = a.n_appearance;
        c.patch = a.patch;
        c.validate()?;
        Ok(c)
    }

    /// Whole-face model used to initialize a chin or lips model.
    pub fn face_config(&self) -> Result<Option<AamConfig>> {
        let part = self.aam_config()?;
        if part.part == Part::Face {
            return Ok(None);
        }
        let mut c = AamConfig::new(part.warp, part.descriptor, Part::Face);
        c.color = part.color;
        c.n_shape = part.n_shape;
        c.n_appearance = part.n_appearance;
        c.patch = part.patch;
        Ok(Some(c))
    }

    pub fn aam_variant(&self) -> Result<AamVariant> {
        self.aam.variant.parse()
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let s = &self.sampler;
        if !(s.fraction > 0.0 && s.fraction <= 1.0) {
            return Err(Error::invalid(format!("sampling fraction {} outside (0, 1]", s.fraction)));
        }
        if s.sentences_per_speaker == 0 {
            return Err(Error::invalid("sampler needs at least one sentence per speaker"));
        }
        Ok(SamplerConfig {
            confidence: s.confidence,
            fraction: s.fraction,
            sentences_per_speaker: s.sentences_per_speaker,
            seed: self.seed,
        })
    }

    pub fn hmm_config(&self) -> HmmConfig {
        let h = &self.hmm;
        HmmConfig {
            n_states: h.states,
            silence: (!h.silence.is_empty()).then(|| h.silence.clone()),
            floor_scale: h.floor_scale,
            schedule: h.schedule.clone(),
            runs: h.runs,
            max_components: h.max_components,
        }
    }

    pub fn edit_costs(&self) -> EditCosts {
        match self.scoring.costs {
            CostKind::Unit => EditCosts::UNIT,
            CostKind::Htk => EditCosts::HTK,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            seed: self.seed,
            n_speakers: s.n_speakers,
            sentences_per_speaker: s.sentences_per_speaker,
            test_per_speaker: s.test_per_speaker,
            frames_per_viseme: s.frames_per_viseme,
            min_labels: s.min_labels,
            max_labels: s.max_labels,
            width: s.width,
            height: s.height,
            corrupt_fraction: s.corrupt_fraction,
            noise: s.noise,
            frame_rate: self.frame_rate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = PipelineConfig::from_toml_str("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.hmm.schedule, vec![1, 2, 4, 8, 16, 20]);
        assert_eq!(c.features.roi_margin, 0.15);
    }

    #[test]
    fn round_trip_and_overrides() {
        let text = "seed = 7\njobs = 2\n[features]\nkind = \"aam\"\n[aam]\nwarp = \"holistic\"\ndescriptor = \"noop\"\nvariant = \"s+a+da\"\n[scoring]\ncosts = \"htk\"\n";
        let c = PipelineConfig::from_toml_str(text).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.features.kind, FrontEnd::Aam);
        assert_eq!(c.aam_config().unwrap().iterations, vec![20, 10, 5]);
        assert_eq!(c.aam_variant().unwrap(), AamVariant::ShapeAppearanceDelta);
        assert_eq!(c.edit_costs(), EditCosts::HTK);
        assert_eq!(c.sampler_config().unwrap().seed, 7);
        let back = PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::from_toml_str("colour = 1").is_err());
        assert!(PipelineConfig::from_toml_str("[features]\nwindow = 4").is_err());
        assert!(PipelineConfig::from_toml_str("[features]\nroi = \"template\"").is_err());
        assert!(PipelineConfig::from_toml_str("[aam]\nvariant = \"xyz\"").is_err());
        assert!(PipelineConfig::from_toml_str("[hmm]\nschedule = [2, 1]").is_err());
        assert!(PipelineConfig::from_toml_str("[hmm]\nschedule = [1, 30]").is_err());
    }

    #[test]
    fn part_models_need_a_face_model() {
        let c = PipelineConfig::from_toml_str("[aam]\npart = \"lips\"").unwrap();
        let face = c.face_config().unwrap().unwrap();
        assert_eq!(face.part, Part::Face);
        assert_eq!(c.aam_config().unwrap().part, Part::Lips);
        assert!(PipelineConfig::default().face_config().unwrap().is_none());
    }
}
