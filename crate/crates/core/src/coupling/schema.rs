use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CouplingError;

/// Relative tolerance for `end_time` being a whole number of windows.
pub const SCHEMA_TIME_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingMesh {
    pub name: String,
    pub dim: usize,
    pub owner: String,
    pub vertices: Vec<Vec<f64>>,
    pub face_weights: Vec<f64>,
}

impl CouplingMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Vertex coordinates flattened vertex-major.
    pub fn flat_coords(&self) -> Vec<f64> {
        self.vertices.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    pub mesh: String,
    pub components: usize,
    pub writer: String,
    /// Receiving participant. May be omitted when it is implied: the mesh
    /// owner if the writer is not the owner, otherwise the writer's only peer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reader: Option<String>,
}

impl FieldSpec {
    pub fn key(&self) -> FieldKey {
        FieldKey::new(&self.name, &self.mesh)
    }

    /// Resolved reader; always `Some` on a validated schema.
    pub fn reader(&self) -> &str {
        self.reader.as_deref().unwrap_or("")
    }
}

/// A field is identified by its name together with the mesh carrying it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldKey {
    pub field: String,
    pub mesh: String,
}

impl FieldKey {
    pub fn new(field: &str, mesh: &str) -> Self {
        FieldKey { field: field.to_owned(), mesh: mesh.to_owned() }
    }
}

impl fmt::Display for FieldKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.field, self.mesh)
    }
}

/// The coupled-simulation contract shared by every participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSchema {
    pub participants: Vec<String>,
    /// Pairwise links `[first, second]`. In each window the first
    /// participant sends before the second.
    pub links: Vec<[String; 2]>,
    pub meshes: Vec<CouplingMesh>,
    pub fields: Vec<FieldSpec>,
    pub window_size: f64,
    pub end_time: f64,
}

fn invalid(msg: impl Into<String>) -> CouplingError {
    CouplingError::Validation(msg.into())
}

/// Parses and validates a schema document.
pub fn load_schema(text: &str) -> Result<CouplingSchema, CouplingError> {
    let schema: CouplingSchema = serde_json::from_str(text).map_err(|e| CouplingError::Parse(e.to_string()))?;
    schema.validated()
}

impl CouplingSchema {
    pub fn from_path(path: &std::path::Path) -> Result<CouplingSchema, CouplingError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CouplingError::Parse(format!("{}: {e}", path.display())))?;
        load_schema(&text)
    }

    /// Checks every invariant and fills in implied field readers.
    pub fn validated(mut self) -> Result<CouplingSchema, CouplingError> {
        if !(self.window_size.is_finite() && self.window_size > 0.0) {
            return Err(invalid("window_size must be positive"));
        }
        if !(self.end_time.is_finite() && self.end_time > 0.0) {
            return Err(invalid("end_time must be positive"));
        }
        let ratio = self.end_time / self.window_size;
        let n = ratio.round();
        if n < 1.0 || (self.end_time - n * self.window_size).abs() > SCHEMA_TIME_RTOL * self.end_time {
            return Err(invalid("end_time not multiple of window_size"));
        }

        let mut seen = BTreeSet::new();
        for p in &self.participants {
            if p.is_empty() {
                return Err(invalid("participant names must be non-empty"));
            }
            if !seen.insert(p.as_str()) {
                return Err(invalid(format!("participant '{p}' declared twice")));
            }
        }
        if self.participants.len() < 2 {
            return Err(invalid("at least two participants are required"));
        }

        let mut pairs = BTreeSet::new();
        for [a, b] in &self.links {
            for end in [a, b] {
                if !seen.contains(end.as_str()) {
                    return Err(invalid(format!("link endpoint '{end}' is not a declared participant")));
                }
            }
            if a == b {
                return Err(invalid(format!("link from '{a}' to itself")));
            }
            let pair = if a < b { (a, b) } else { (b, a) };
            if !pairs.insert(pair) {
                return Err(invalid(format!("duplicate link between '{a}' and '{b}'")));
            }
        }
        self.check_connected()?;

        let mut mesh_names = BTreeSet::new();
        for m in &self.meshes {
            if !mesh_names.insert(m.name.as_str()) {
                return Err(invalid(format!("mesh '{}' declared twice", m.name)));
            }
            if m.dim != 2 && m.dim != 3 {
                return Err(invalid(format!("mesh '{}' has dim {} (must be 2 or 3)", m.name, m.dim)));
            }
            if !seen.contains(m.owner.as_str()) {
                return Err(invalid(format!("mesh '{}' owner '{}' is not a declared participant", m.name, m.owner)));
            }
            if m.vertices.is_empty() {
                return Err(invalid(format!("mesh '{}' has no vertices", m.name)));
            }
            if let Some(v) = m.vertices.iter().find(|v| v.len() != m.dim) {
                return Err(invalid(format!(
                    "mesh '{}' vertex has {} coordinates, expected {}",
                    m.name,
                    v.len(),
                    m.dim
                )));
            }
            if m.vertices.iter().flatten().any(|c| !c.is_finite()) {
                return Err(invalid(format!("mesh '{}' has non-finite coordinates", m.name)));
            }
            if m.face_weights.len() != m.vertices.len() {
                return Err(invalid(format!("mesh '{}' needs one face weight per vertex", m.name)));
            }
            if m.face_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(invalid(format!("mesh '{}' has a negative face weight", m.name)));
            }
        }

        let mut keys = BTreeSet::new();
        for i in 0..self.fields.len() {
            let f = &self.fields[i];
            let Some(mesh) = self.meshes.iter().find(|m| m.name == f.mesh) else {
                return Err(invalid(format!("field '{}' references undeclared mesh '{}'", f.name, f.mesh)));
            };
            if f.components != 1 && f.components != mesh.dim {
                return Err(invalid(format!(
                    "field '{}' on '{}' has {} components (must be 1 or {})",
                    f.name, f.mesh, f.components, mesh.dim
                )));
            }
            if !keys.insert(f.key()) {
                return Err(invalid(format!("field '{}' declared twice on mesh '{}'", f.name, f.mesh)));
            }
            if !seen.contains(f.writer.as_str()) {
                return Err(invalid(format!("field '{}' writer '{}' is not a declared participant", f.name, f.writer)));
            }
            let reader = match &f.reader {
                Some(r) => r.clone(),
                None if f.writer != mesh.owner => mesh.owner.clone(),
                None => {
                    let peers = self.peers_of(&f.writer);
                    if peers.len() != 1 {
                        return Err(invalid(format!("field '{}' on '{}' needs an explicit reader", f.name, f.mesh)));
                    }
                    peers[0].to_owned()
                }
            };
            if !seen.contains(reader.as_str()) {
                return Err(invalid(format!("field '{}' reader '{reader}' is not a declared participant", f.name)));
            }
            if self.link_index(&f.writer, &reader).is_none() {
                return Err(invalid(format!(
                    "field '{}' flows from '{}' to '{reader}' but they share no link",
                    f.name, f.writer
                )));
            }
            if mesh.owner != f.writer && mesh.owner != reader {
                return Err(invalid(format!(
                    "field '{}' is exchanged between '{}' and '{reader}' but mesh '{}' belongs to '{}'",
                    f.name, f.writer, f.mesh, mesh.owner
                )));
            }
            self.fields[i].reader = Some(reader);
        }
        Ok(self)
    }

    fn check_connected(&self) -> Result<(), CouplingError> {
        let mut reached = BTreeSet::new();
        let mut queue = VecDeque::from([self.participants[0].as_str()]);
        while let Some(p) = queue.pop_front() {
            if reached.insert(p) {
                queue.extend(self.peers_of(p));
            }
        }
        if let Some(lonely) = self.participants.iter().find(|p| !reached.contains(p.as_str())) {
            return Err(invalid(format!("link graph is not connected ('{lonely}' unreachable)")));
        }
        Ok(())
    }

    pub fn peers_of(&self, participant: &str) -> Vec<&str> {
        self.links
            .iter()
            .filter_map(|[a, b]| {
                if a == participant {
                    Some(b.as_str())
                } else if b == participant {
                    Some(a.as_str())
                } else {
                    None
                }
            })
            .collect()
    }

    /// Index of the link joining `a` and `b`, in either order.
    pub fn link_index(&self, a: &str, b: &str) -> Option<usize> {
        self.links.iter().position(|[x, y]| (x == a && y == b) || (x == b && y == a))
    }

    pub fn mesh(&self, name: &str) -> Option<&CouplingMesh> {
        self.meshes.iter().find(|m| m.name == name)
    }

    pub fn field(&self, key: &FieldKey) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == key.field && f.mesh == key.mesh)
    }

    /// Number of `f64` values in one buffer of `field`.
    pub fn buffer_len(&self, field: &FieldSpec) -> usize {
        self.mesh(&field.mesh).map_or(0, |m| m.vertex_count() * field.components)
    }

    /// Number of coupling windows in one episode.
    pub fn n_windows(&self) -> u64 {
        (self.end_time / self.window_size).round() as u64
    }

    /// SHA-256 over the canonical JSON encoding of the validated schema.
    pub fn hash(&self) -> [u8; 32] {
        let canonical = serde_json::to_vec(self).expect("schema serializes");
        Sha256::digest(&canonical).into()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    /// Meshes grouped by owner, for diagnostics.
    pub fn meshes_by_owner(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for m in &self.meshes {
            out.entry(m.owner.as_str()).or_default().push(m.name.as_str());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn jet_doc(window_size: f64, end_time: f64, field_mesh: &str) -> String {
        let arc: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                let a = (85.0 + 2.5 * i as f64).to_radians();
                vec![0.05 * a.cos(), 0.05 * a.sin()]
            })
            .collect();
        serde_json::json!({
            "participants": ["controller", "fluid"],
            "links": [["controller", "fluid"]],
            "meshes": [{
                "name": "jet1", "dim": 2, "owner": "fluid",
                "vertices": arc, "face_weights": [0.001, 0.002, 0.002, 0.002, 0.001]
            }],
            "fields": [{"name": "Velocity", "mesh": field_mesh, "components": 2, "writer": "controller"}],
            "window_size": window_size,
            "end_time": end_time
        })
        .to_string()
    }

    #[test]
    fn valid_schema_counts_windows() {
        let s = load_schema(&jet_doc(0.1, 0.4, "jet1")).unwrap();
        assert_eq!(s.n_windows(), 4);
        assert_eq!(s.fields[0].reader(), "fluid");
        assert_eq!(s.buffer_len(&s.fields[0]), 10);
    }

    #[test]
    fn end_time_must_be_whole_windows() {
        let err = load_schema(&jet_doc(0.1, 0.35, "jet1")).unwrap_err();
        assert!(err.to_string().contains("end_time not multiple of window_size"), "{err}");
    }

    #[test]
    fn undeclared_mesh_is_named() {
        let err = load_schema(&jet_doc(0.1, 0.4, "jetX")).unwrap_err();
        assert!(err.to_string().contains("jetX"), "{err}");
    }

    #[test]
    fn malformed_document_is_a_parse_error() {
        assert!(matches!(load_schema("{ nope"), Err(CouplingError::Parse(_))));
        let extra = jet_doc(0.1, 0.4, "jet1").replacen('{', "{\"bogus\": 1,", 1);
        assert!(matches!(load_schema(&extra), Err(CouplingError::Parse(_))));
    }

    #[test]
    fn disconnected_links_rejected() {
        let mut s: CouplingSchema = serde_json::from_str(&jet_doc(0.1, 0.4, "jet1")).unwrap();
        s.participants.push("solid".into());
        let err = s.validated().unwrap_err();
        assert!(err.to_string().contains("not connected"), "{err}");
    }

    #[test]
    fn unknown_link_endpoint_rejected() {
        let mut s: CouplingSchema = serde_json::from_str(&jet_doc(0.1, 0.4, "jet1")).unwrap();
        s.links.push(["fluid".into(), "ghost".into()]);
        let err = s.validated().unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn bad_components_rejected() {
        let mut s: CouplingSchema = serde_json::from_str(&jet_doc(0.1, 0.4, "jet1")).unwrap();
        s.fields[0].components = 3;
        assert!(s.validated().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = load_schema(&jet_doc(0.1, 0.4, "jet1")).unwrap();
        let b = load_schema(&jet_doc(0.1, 0.5, "jet1")).unwrap();
        assert_eq!(a.hash(), load_schema(&jet_doc(0.1, 0.4, "jet1")).unwrap().hash());
        assert_ne!(a.hash(), b.hash());
        // explicit and implied readers hash identically
        assert_eq!(load_schema(&a.to_json_pretty()).unwrap().hash(), a.hash());
    }
}
