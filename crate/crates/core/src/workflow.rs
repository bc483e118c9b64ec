//! ComfyUI API-format workflow graphs.
//!
//! The API format is a JSON object mapping node ids to
//! `{ "class_type": ..., "inputs": { field: scalar | [source_id, output] } }`.
//! Node ids and object keys are kept in `BTreeMap`s so serialization is
//! canonical (sorted) without any extra work.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::defaults::KsamplerDomain;

pub const KSAMPLER: &str = "KSampler";
pub const CHECKPOINT_LOADER: &str = "CheckpointLoaderSimple";
pub const CLIP_TEXT_ENCODE: &str = "CLIPTextEncode";
pub const EMPTY_LATENT_IMAGE: &str = "EmptyLatentImage";
pub const VAE_DECODE: &str = "VAEDecode";
pub const SAVE_IMAGE: &str = "SaveImage";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkflowError {
    #[error("malformed workflow JSON: {0}")]
    Json(String),
    #[error("workflow document must be a JSON object of nodes")]
    NotAnObject,
    #[error("node id must be a non-empty string")]
    EmptyNodeId,
    #[error("node {0:?} is not a JSON object")]
    NodeNotAnObject(String),
    #[error("node {0:?} has no class_type")]
    MissingClassType(String),
    #[error("node {0:?} has inputs that are not a JSON object")]
    InputsNotAnObject(String),
    #[error("node {node:?} input {field:?}: link must be [source_id, output_index]")]
    MalformedLink { node: String, field: String },
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("workflow has no {0} node")]
    MissingNode(&'static str),
    #[error("workflow has {count} {class_type} nodes; expected exactly one")]
    Ambiguous { class_type: &'static str, count: usize },
    #[error("KSampler input {field:?} does not link to a {expected} node")]
    RoleMismatch { field: &'static str, expected: &'static str },
    #[error("positive and negative prompts resolve to the same node {0:?}")]
    SharedPromptNode(String),
}

/// A single node input: either a literal or a link to another node's output.
#[derive(Debug, Clone)]
pub enum InputValue {
    Link {
        node: String,
        output: u32,
    },
    Int(i64),
    Real(f64),
    Text(String),
    Bool(bool),
    /// Anything else (null, objects, integers beyond `i64`) is kept verbatim.
    Other(Value),
}

impl PartialEq for InputValue {
    fn eq(&self, other: &Self) -> bool {
        use InputValue::*;
        match (self, other) {
            (Link { node: a, output: x }, Link { node: b, output: y }) => a == b && x == y,
            (Int(a), Int(b)) => a == b,
            // Bit equality matches equality of the canonical decimal rendering.
            (Real(a), Real(b)) => a.to_bits() == b.to_bits(),
            (Text(a), Text(b)) => a == b,
            (Bool(a), Bool(b)) => a == b,
            (Other(a), Other(b)) => a == b,
            _ => false,
        }
    }
}

impl InputValue {
    pub fn link(node: impl Into<String>, output: u32) -> Self {
        InputValue::Link { node: node.into(), output }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            InputValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_link(&self) -> Option<(&str, u32)> {
        match self {
            InputValue::Link { node, output } => Some((node, *output)),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            InputValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// Numeric view; integers are widened.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            InputValue::Int(v) => Some(*v as f64),
            InputValue::Real(v) => Some(*v),
            _ => None,
        }
    }

    fn from_json(node: &str, field: &str, value: Value) -> Result<Self, WorkflowError> {
        Ok(match value {
            Value::Array(items) => {
                let malformed = || WorkflowError::MalformedLink { node: node.to_string(), field: field.to_string() };
                if items.len() != 2 {
                    return Err(malformed());
                }
                let source = items[0].as_str().filter(|s| !s.is_empty()).ok_or_else(malformed)?;
                let output = items[1].as_u64().and_then(|o| u32::try_from(o).ok()).ok_or_else(malformed)?;
                InputValue::Link { node: source.to_string(), output }
            }
            Value::String(s) => InputValue::Text(s),
            Value::Bool(b) => InputValue::Bool(b),
            Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    InputValue::Int(i)
                } else if n.is_u64() {
                    InputValue::Other(Value::Number(n))
                } else {
                    // serde_json only yields finite floats
                    InputValue::Real(n.as_f64().unwrap_or_default())
                }
            }
            other => InputValue::Other(other),
        })
    }

    fn to_json(&self) -> Value {
        match self {
            InputValue::Link { node, output } => {
                Value::Array(alloc::vec![Value::String(node.clone()), Value::from(*output)])
            }
            InputValue::Int(i) => Value::from(*i),
            InputValue::Real(r) => Number::from_f64(*r).map(Value::Number).unwrap_or(Value::Null),
            InputValue::Text(s) => Value::String(s.clone()),
            InputValue::Bool(b) => Value::Bool(*b),
            InputValue::Other(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub class_type: String,
    pub inputs: BTreeMap<String, InputValue>,
    /// Node-level keys other than `class_type`/`inputs` (e.g. `_meta`).
    pub extra: BTreeMap<String, Value>,
}

impl Node {
    pub fn new(class_type: impl Into<String>) -> Self {
        Node { class_type: class_type.into(), inputs: BTreeMap::new(), extra: BTreeMap::new() }
    }

    pub fn with_input(mut self, field: impl Into<String>, value: InputValue) -> Self {
        self.inputs.insert(field.into(), value);
        self
    }
}

/// A ComfyUI workflow graph. Immutable by convention: every edit returns a copy.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Workflow {
    nodes: BTreeMap<String, Node>,
}

impl Workflow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_nodes(nodes: impl IntoIterator<Item = (String, Node)>) -> Self {
        Workflow { nodes: nodes.into_iter().collect() }
    }

    /// Parses an API-format document. Dangling links are accepted here and
    /// reported by [`Workflow::validate`].
    pub fn parse(document: &str) -> Result<Self, WorkflowError> {
        let value: Value = serde_json::from_str(document).map_err(|e| WorkflowError::Json(e.to_string()))?;
        Self::from_json(value)
    }

    pub fn from_json(value: Value) -> Result<Self, WorkflowError> {
        let Value::Object(top) = value else {
            return Err(WorkflowError::NotAnObject);
        };
        let mut nodes = BTreeMap::new();
        for (id, node) in top {
            if id.is_empty() {
                return Err(WorkflowError::EmptyNodeId);
            }
            let Value::Object(mut fields) = node else {
                return Err(WorkflowError::NodeNotAnObject(id));
            };
            let class_type = match fields.remove("class_type") {
                Some(Value::String(s)) => s,
                _ => return Err(WorkflowError::MissingClassType(id)),
            };
            let mut inputs = BTreeMap::new();
            match fields.remove("inputs") {
                None | Some(Value::Null) => {}
                Some(Value::Object(raw)) => {
                    for (field, v) in raw {
                        let parsed = InputValue::from_json(&id, &field, v)?;
                        inputs.insert(field, parsed);
                    }
                }
                Some(_) => return Err(WorkflowError::InputsNotAnObject(id)),
            }
            let extra = fields.into_iter().collect();
            nodes.insert(id, Node { class_type, inputs, extra });
        }
        Ok(Workflow { nodes })
    }

    pub fn to_json(&self) -> Value {
        let mut top = Map::new();
        for (id, node) in &self.nodes {
            let mut obj = Map::new();
            obj.insert("class_type".into(), Value::String(node.class_type.clone()));
            let inputs: Map<String, Value> = node.inputs.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
            obj.insert("inputs".into(), Value::Object(inputs));
            for (k, v) in &node.extra {
                obj.insert(k.clone(), v.clone());
            }
            top.insert(id.clone(), Value::Object(obj));
        }
        Value::Object(top)
    }

    /// Canonical compact JSON: sorted node ids and keys, shortest round-trip
    /// float rendering.
    pub fn to_canonical_json(&self) -> String {
        // serde_json without `preserve_order` backs `Map` with a BTreeMap, so
        // keys come out sorted.
        serde_json::to_string(&self.to_json()).unwrap_or_default()
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn canonical_hash(&self) -> String {
        let digest = Sha256::digest(self.to_canonical_json().as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest.iter() {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, &Node)> {
        self.nodes.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn nodes_of_class<'a>(&'a self, class_type: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.nodes.iter().filter(move |(_, n)| n.class_type == class_type).map(|(k, _)| k.as_str())
    }

    pub fn get_field(&self, node: &str, field: &str) -> Result<Option<&InputValue>, WorkflowError> {
        let n = self.nodes.get(node).ok_or_else(|| WorkflowError::UnknownNode(node.into()))?;
        Ok(n.inputs.get(field))
    }

    /// Returns a copy with `node.field` set to `value`; `self` is untouched.
    pub fn set_field(&self, node: &str, field: &str, value: InputValue) -> Result<Workflow, WorkflowError> {
        let mut copy = self.clone();
        copy.set_field_in_place(node, field, value)?;
        Ok(copy)
    }

    pub(crate) fn set_field_in_place(
        &mut self,
        node: &str,
        field: &str,
        value: InputValue,
    ) -> Result<(), WorkflowError> {
        let n = self.nodes.get_mut(node).ok_or_else(|| WorkflowError::UnknownNode(node.into()))?;
        n.inputs.insert(field.into(), value);
        Ok(())
    }

    /// Text of a prompt node, if the node exists and its `text` is a string.
    pub fn prompt_text(&self, node: &str) -> Option<&str> {
        self.nodes.get(node)?.inputs.get("text")?.as_text()
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_workflow(self)
    }

    pub fn resolve_roles(&self) -> Result<WorkflowRoles, WorkflowError> {
        resolve_roles(self)
    }
}

impl serde::Serialize for Workflow {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> serde::Deserialize<'de> for Workflow {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        Workflow::from_json(value).map_err(serde::de::Error::custom)
    }
}

/// Node ids playing each role in a text-to-image workflow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkflowRoles {
    pub ksampler_id: String,
    pub checkpoint_id: String,
    pub positive_prompt_id: String,
    pub negative_prompt_id: String,
    pub latent_id: String,
    pub save_id: String,
}

fn unique_of_class(w: &Workflow, class_type: &'static str) -> Result<String, WorkflowError> {
    let ids: Vec<&str> = w.nodes_of_class(class_type).collect();
    match ids.as_slice() {
        [] => Err(WorkflowError::MissingNode(class_type)),
        [one] => Ok((*one).to_string()),
        many => Err(WorkflowError::Ambiguous { class_type, count: many.len() }),
    }
}

/// Follows a KSampler link input to a node of `expected` class.
fn linked_role(
    w: &Workflow,
    ksampler: &Node,
    field: &'static str,
    expected: &'static str,
) -> Result<Option<String>, WorkflowError> {
    let Some(value) = ksampler.inputs.get(field) else {
        return Ok(None);
    };
    let Some((source, _)) = value.as_link() else {
        return Err(WorkflowError::RoleMismatch { field, expected });
    };
    match w.node(source) {
        Some(n) if n.class_type == expected => Ok(Some(source.to_string())),
        Some(_) => Ok(None),
        None => Err(WorkflowError::RoleMismatch { field, expected }),
    }
}

/// Identifies the role nodes structurally by following the KSampler's links.
pub fn resolve_roles(w: &Workflow) -> Result<WorkflowRoles, WorkflowError> {
    let ksampler_id = unique_of_class(w, KSAMPLER)?;
    let ksampler = &w.nodes[&ksampler_id];

    let prompt = |field: &'static str| -> Result<String, WorkflowError> {
        linked_role(w, ksampler, field, CLIP_TEXT_ENCODE)?
            .ok_or(WorkflowError::RoleMismatch { field, expected: CLIP_TEXT_ENCODE })
    };
    let positive_prompt_id = prompt("positive")?;
    let negative_prompt_id = prompt("negative")?;
    if positive_prompt_id == negative_prompt_id {
        return Err(WorkflowError::SharedPromptNode(positive_prompt_id));
    }

    // Model and latent may pass through intermediate nodes (LoRA loaders,
    // upscalers); fall back to the unique node of the class.
    let checkpoint_id = match linked_role(w, ksampler, "model", CHECKPOINT_LOADER) {
        Ok(Some(id)) => id,
        _ => unique_of_class(w, CHECKPOINT_LOADER)?,
    };
    let latent_id = match linked_role(w, ksampler, "latent_image", EMPTY_LATENT_IMAGE) {
        Ok(Some(id)) => id,
        _ => unique_of_class(w, EMPTY_LATENT_IMAGE)?,
    };
    let save_id = unique_of_class(w, SAVE_IMAGE)?;

    Ok(WorkflowRoles { ksampler_id, checkpoint_id, positive_prompt_id, negative_prompt_id, latent_id, save_id })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyNodeId,
    DanglingLink { node: String, field: String, target: String },
    MissingField { node: String, class_type: String, field: &'static str },
    WrongType { node: String, field: String, expected: &'static str },
    OutOfRange { node: String, field: String, value: String, domain: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyNodeId => write!(f, "empty node id"),
            Violation::DanglingLink { node, field, target } => {
                write!(f, "node {node} input {field} links to missing node {target}")
            }
            Violation::MissingField { node, class_type, field } => {
                write!(f, "{class_type} node {node} lacks required input {field}")
            }
            Violation::WrongType { node, field, expected } => {
                write!(f, "node {node} input {field} should be {expected}")
            }
            Violation::OutOfRange { node, field, value, domain } => {
                write!(f, "node {node} input {field} = {value} outside {domain}")
            }
        }
    }
}

fn required_fields(class_type: &str) -> &'static [&'static str] {
    match class_type {
        KSAMPLER => &[
            "seed",
            "steps",
            "cfg",
            "sampler_name",
            "scheduler",
            "denoise",
            "model",
            "positive",
            "negative",
            "latent_image",
        ],
        CHECKPOINT_LOADER => &["ckpt_name"],
        CLIP_TEXT_ENCODE => &["text", "clip"],
        EMPTY_LATENT_IMAGE => &["width", "height", "batch_size"],
        VAE_DECODE => &["samples", "vae"],
        SAVE_IMAGE => &["images", "filename_prefix"],
        _ => &[],
    }
}

/// Lists every invariant violation; an empty list means the workflow is valid.
pub fn validate_workflow(w: &Workflow) -> Vec<Violation> {
    let domain = KsamplerDomain::default();
    let mut out = Vec::new();
    for (id, node) in &w.nodes {
        if id.is_empty() {
            out.push(Violation::EmptyNodeId);
        }
        for (field, value) in &node.inputs {
            if let Some((target, _)) = value.as_link() {
                if !w.nodes.contains_key(target) {
                    out.push(Violation::DanglingLink {
                        node: id.clone(),
                        field: field.clone(),
                        target: target.to_string(),
                    });
                }
            }
        }
        for field in required_fields(&node.class_type) {
            if !node.inputs.contains_key(*field) {
                out.push(Violation::MissingField { node: id.clone(), class_type: node.class_type.clone(), field });
            }
        }
        if node.class_type == KSAMPLER {
            for (field, value) in &node.inputs {
                if let Some(v) = domain.check_input(id, field, value) {
                    out.push(v);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defaults::default_workflow;

    #[test]
    fn default_workflow_shape() {
        let w = default_workflow();
        assert_eq!(w.len(), 7);
        assert_eq!(w.nodes_of_class(KSAMPLER).count(), 1);
        assert_eq!(w.nodes_of_class(CLIP_TEXT_ENCODE).count(), 2);
        assert!(w.validate().is_empty(), "{:?}", w.validate());
    }

    #[test]
    fn empty_document() {
        let w = Workflow::parse("{}").unwrap();
        assert!(w.is_empty());
        assert_eq!(w.to_canonical_json(), "{}");
    }

    #[test]
    fn dangling_link_parses_then_fails_validation() {
        let w =
            Workflow::parse(r#"{"8": {"class_type": "VAEDecode", "inputs": {"samples": ["3", 0], "vae": ["8", 0]}}}"#)
                .unwrap();
        let v = w.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(&v[0], Violation::DanglingLink { target, .. } if target == "3"));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(Workflow::parse("{"), Err(WorkflowError::Json(_))));
        assert_eq!(Workflow::parse("[]"), Err(WorkflowError::NotAnObject));
        assert_eq!(Workflow::parse(r#"{"1": {"inputs": {}}}"#), Err(WorkflowError::MissingClassType("1".into())));
        assert!(matches!(
            Workflow::parse(r#"{"1": {"class_type": "X", "inputs": {"a": ["2", 0, 1]}}}"#),
            Err(WorkflowError::MalformedLink { .. })
        ));
    }

    #[test]
    fn unknown_class_types_pass_through() {
        let doc =
            r#"{"1":{"_meta":{"title":"t"},"class_type":"FancyNode","inputs":{"flag":true,"n":null,"obj":{"k":1}}}}"#;
        let w = Workflow::parse(doc).unwrap();
        assert_eq!(w.to_canonical_json(), doc);
        assert!(w.validate().is_empty());
    }

    #[test]
    fn reals_render_stably() {
        let w = default_workflow();
        let a = w.to_canonical_json();
        let b = w.to_canonical_json();
        assert_eq!(a, b);
        assert!(a.contains("\"cfg\":8.0"));
        assert_eq!(Workflow::parse(&a).unwrap(), w);
    }

    #[test]
    fn cfg_out_of_range_is_one_violation() {
        let w = default_workflow().set_field("3", "cfg", InputValue::Real(30.0)).unwrap();
        let v = w.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(&v[0], Violation::OutOfRange { field, .. } if field == "cfg"));
    }

    #[test]
    fn roles_follow_links() {
        let w = default_workflow();
        let r = w.resolve_roles().unwrap();
        assert_eq!(r.ksampler_id, "3");
        assert_eq!(r.checkpoint_id, "4");
        assert_eq!(r.latent_id, "5");
        assert_eq!(r.positive_prompt_id, "6");
        assert_eq!(r.negative_prompt_id, "7");
        assert_eq!(r.save_id, "9");

        // swap the wiring: roles follow the links, not the ids
        let swapped = w
            .set_field("3", "positive", InputValue::link("7", 0))
            .unwrap()
            .set_field("3", "negative", InputValue::link("6", 0))
            .unwrap();
        let r = swapped.resolve_roles().unwrap();
        assert_eq!(r.positive_prompt_id, "7");
        assert_eq!(r.negative_prompt_id, "6");
    }

    #[test]
    fn role_errors() {
        let w = default_workflow();
        let mut nodes: Vec<(String, Node)> = w.nodes().map(|(k, n)| (k.to_string(), n.clone())).collect();
        nodes.retain(|(_, n)| n.class_type != SAVE_IMAGE);
        let no_save = Workflow::from_nodes(nodes);
        assert_eq!(no_save.resolve_roles(), Err(WorkflowError::MissingNode(SAVE_IMAGE)));

        let mut two = w.clone();
        two.nodes.insert("30".into(), w.node("3").unwrap().clone());
        assert_eq!(two.resolve_roles(), Err(WorkflowError::Ambiguous { class_type: KSAMPLER, count: 2 }));

        let bad = w.set_field("3", "positive", InputValue::link("4", 1)).unwrap();
        assert!(matches!(bad.resolve_roles(), Err(WorkflowError::RoleMismatch { .. })));
    }

    #[test]
    fn get_set_field() {
        let w = default_workflow();
        let edited = w.set_field("3", "steps", InputValue::Int(25)).unwrap();
        assert_eq!(edited.get_field("3", "steps").unwrap(), Some(&InputValue::Int(25)));
        assert_eq!(w.get_field("3", "steps").unwrap(), Some(&InputValue::Int(20)));
        assert_eq!(w.set_field("99", "steps", InputValue::Int(1)), Err(WorkflowError::UnknownNode("99".into())));

        let before = w.prompt_text("6").unwrap().to_string();
        let changed = w.set_field("6", "text", InputValue::Text("new".into())).unwrap();
        assert_eq!(w.prompt_text("6").unwrap(), before);
        assert_eq!(changed.prompt_text("6").unwrap(), "new");
    }

    #[test]
    fn hash_is_stable_and_key_order_independent() {
        let a =
            Workflow::parse(r#"{"2":{"inputs":{"b":1,"a":2},"class_type":"X"},"1":{"class_type":"Y","inputs":{}}}"#)
                .unwrap();
        let b =
            Workflow::parse(r#"{"1":{"class_type":"Y","inputs":{}},"2":{"class_type":"X","inputs":{"a":2,"b":1}}}"#)
                .unwrap();
        assert_eq!(a.canonical_hash(), b.canonical_hash());
        assert_eq!(a.canonical_hash().len(), 64);
    }
}
