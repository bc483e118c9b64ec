//! Default workflow, model lists and KSampler value domains.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::mutation::KsamplerProperty;
use crate::workflow::{InputValue, Violation, Workflow};

/// The 7-node text-to-image workflow used as the default baseline.
pub const DEFAULT_WORKFLOW_JSON: &str = include_str!("../data/default_workflow.json");

pub fn default_workflow() -> Workflow {
    Workflow::parse(DEFAULT_WORKFLOW_JSON).expect("bundled workflow parses")
}

/// Display name and checkpoint file of the nine bundled diffusion models.
pub const CHECKPOINTS: [(&str, &str); 9] = [
    ("Stable Diffusion 1.5", "v1-5-pruned.safetensors"),
    ("Stable Diffusion 2", "768-v-ema.safetensors"),
    ("Stable Diffusion 3 Medium", "sd3_medium_incl_clips.safetensors"),
    ("Stable Diffusion XL Turbo 1.0", "sd_xl_turbo_1.0_fp16.safetensors"),
    ("Stable Diffusion XL Base 1.0", "sd_xl_base_1.0.safetensors"),
    ("Dreamlike Photoreal 2.0", "dreamlike-photoreal-2.0.safetensors"),
    ("DreamShaper 3.3", "DreamShaper_3.3.safetensors"),
    ("Realistic Vision 6.0", "Realistic_Vision_V6.0_NV_B1.safetensors"),
    ("ReV Animated 1.2.2", "rev-animated-v1-2-2.safetensors"),
];

pub const LLM_MODELS: [&str; 3] = ["llama3.1:8b", "mistral-nemo:12b", "gemma2:9b"];

pub const SAMPLERS: [&str; 22] = [
    "euler",
    "euler_ancestral",
    "heun",
    "heunpp2",
    "dpm_2",
    "dpm_2_ancestral",
    "lms",
    "dpm_fast",
    "dpm_adaptive",
    "dpmpp_2s_ancestral",
    "dpmpp_sde",
    "dpmpp_sde_gpu",
    "dpmpp_2m",
    "dpmpp_2m_sde",
    "dpmpp_2m_sde_gpu",
    "dpmpp_3m_sde",
    "dpmpp_3m_sde_gpu",
    "ddpm",
    "lcm",
    "ddim",
    "uni_pc",
    "uni_pc_bh2",
];

pub const SCHEDULERS: [&str; 6] = ["normal", "karras", "exponential", "sgm_uniform", "simple", "ddim_uniform"];

pub const POSITIVE_STATEMENTS: &str = include_str!("../data/positive_statements.txt");
pub const NEGATIVE_STATEMENTS: &str = include_str!("../data/negative_statements.txt");

/// Parses a statement pool: one statement per line, `#` comments and blank
/// lines skipped.
pub fn parse_statement_pool(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(ToString::to_string).collect()
}

pub fn checkpoint_pool() -> Vec<String> {
    CHECKPOINTS.iter().map(|(_, file)| file.to_string()).collect()
}

/// Value domains of the KSampler properties the search may change.
///
/// `seed` in `[0, seed_max]`, `steps` in `[1, steps_end)`, `cfg` in
/// `[0, cfg_end)` at one decimal, `denoise` in `[0, 1]` at two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsamplerDomain {
    pub seed_max: u64,
    pub steps_end: u32,
    pub cfg_end: f64,
    pub samplers: Vec<String>,
    pub schedulers: Vec<String>,
}

impl Default for KsamplerDomain {
    fn default() -> Self {
        KsamplerDomain {
            seed_max: 100_000,
            steps_end: 200,
            cfg_end: 25.0,
            samplers: SAMPLERS.iter().map(|s| s.to_string()).collect(),
            schedulers: SCHEDULERS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl KsamplerDomain {
    pub fn contains(&self, property: KsamplerProperty, value: &InputValue) -> Result<(), &'static str> {
        match property {
            KsamplerProperty::Seed => match value.as_i64() {
                Some(v) if v >= 0 && (v as u64) <= self.seed_max => Ok(()),
                Some(_) => Err("[0, 100000]"),
                None => Err("integer"),
            },
            KsamplerProperty::Steps => match value.as_i64() {
                Some(v) if v >= 1 && v < i64::from(self.steps_end) => Ok(()),
                Some(_) => Err("[1, 200)"),
                None => Err("integer"),
            },
            KsamplerProperty::Cfg => match value.as_f64() {
                Some(v) if (0.0..self.cfg_end).contains(&v) => Ok(()),
                Some(_) => Err("[0.0, 25.0)"),
                None => Err("number"),
            },
            KsamplerProperty::Denoise => match value.as_f64() {
                Some(v) if (0.0..=1.0).contains(&v) => Ok(()),
                Some(_) => Err("[0.00, 1.00]"),
                None => Err("number"),
            },
            KsamplerProperty::SamplerName => match value.as_text() {
                Some(s) if self.samplers.iter().any(|x| x == s) => Ok(()),
                Some(_) => Err("sampler list"),
                None => Err("string"),
            },
            KsamplerProperty::Scheduler => match value.as_text() {
                Some(s) if self.schedulers.iter().any(|x| x == s) => Ok(()),
                Some(_) => Err("scheduler list"),
                None => Err("string"),
            },
        }
    }

    pub(crate) fn check_input(&self, node: &str, field: &str, value: &InputValue) -> Option<Violation> {
        let property = KsamplerProperty::from_field(field)?;
        match self.contains(property, value) {
            Ok(()) => None,
            Err(expected @ ("integer" | "number" | "string")) => {
                Some(Violation::WrongType { node: node.to_string(), field: field.to_string(), expected })
            }
            Err(domain) => Some(Violation::OutOfRange {
                node: node.to_string(),
                field: field.to_string(),
                value: render(value),
                domain: domain.to_string(),
            }),
        }
    }
}

fn render(value: &InputValue) -> String {
    match value {
        InputValue::Int(i) => alloc::format!("{i}"),
        InputValue::Real(r) => alloc::format!("{r}"),
        InputValue::Text(s) => s.clone(),
        other => alloc::format!("{other:?}"),
    }
}
