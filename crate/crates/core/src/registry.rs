// SPDX-License-Identifier: Apache-2.0

//! Capability registry: which offloadable packages can run on what a robot
//! provides.
//!
//! ROS packages declare required topics as `role -> message type`. Matching
//! is type-driven: each role binds to a distinct available topic carrying the
//! required type, so a robot that remaps `/scan` to `/front_laser` still
//! matches. Packages can opt into exact-name matching, where role `scan`
//! only binds to a topic literally named `/scan`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const REGISTRY_SCHEMA: &str = "smartcloud-registry/1";

const DEFAULT_REGISTRY: &str = include_str!("../config/registry.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackageKind {
    RosPackage,
    JsLibraryApp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    #[default]
    Type,
    Name,
}

/// Built-in app implementation a package runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Runtime {
    OccupancyMapper,
    ImageClassifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageDescriptor {
    pub id: String,
    pub kind: PackageKind,
    #[serde(default)]
    pub required_topics: BTreeMap<String, String>,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub match_by: MatchMode,
    #[serde(default)]
    pub runtime: Option<Runtime>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Image,
    Gps,
    LaserScan,
    Unknown,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry parse error: {0}")]
    Parse(String),
    #[error("duplicate package id {0:?}")]
    DuplicateId(String),
    #[error("payload list for {kind:?} references unknown package {id:?}")]
    DanglingReference { kind: PayloadKind, id: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    schema: String,
    packages: Vec<PackageDescriptor>,
    #[serde(default)]
    payload_apps: BTreeMap<PayloadKind, Vec<String>>,
}

/// Immutable after load; share behind an `Arc`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    packages: BTreeMap<String, PackageDescriptor>,
    payload_apps: BTreeMap<PayloadKind, Vec<String>>,
}

impl Registry {
    pub fn from_parts(
        packages: Vec<PackageDescriptor>,
        payload_apps: BTreeMap<PayloadKind, Vec<String>>,
    ) -> Result<Self, RegistryError> {
        let mut by_id = BTreeMap::new();
        for pkg in packages {
            if pkg.id.is_empty() {
                return Err(RegistryError::Parse("package id must not be empty".into()));
            }
            if by_id.contains_key(&pkg.id) {
                return Err(RegistryError::DuplicateId(pkg.id));
            }
            by_id.insert(pkg.id.clone(), pkg);
        }
        for (kind, ids) in &payload_apps {
            if let Some(id) = ids.iter().find(|id| !by_id.contains_key(*id)) {
                return Err(RegistryError::DanglingReference {
                    kind: *kind,
                    id: id.clone(),
                });
            }
        }
        Ok(Self {
            packages: by_id,
            payload_apps,
        })
    }

    /// The registry shipped with the gateway.
    pub fn shipped() -> Self {
        load_registry(DEFAULT_REGISTRY).expect("shipped registry is valid")
    }

    pub fn get(&self, id: &str) -> Option<&PackageDescriptor> {
        self.packages.get(id)
    }

    pub fn packages(&self) -> impl Iterator<Item = &PackageDescriptor> {
        self.packages.values()
    }

    pub fn len(&self) -> usize {
        self.packages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packages.is_empty()
    }
}

pub fn load_registry(source: &str) -> Result<Registry, RegistryError> {
    let file: RegistryFile =
        serde_json::from_str(source).map_err(|e| RegistryError::Parse(e.to_string()))?;
    if file.schema != REGISTRY_SCHEMA {
        return Err(RegistryError::Parse(format!(
            "unsupported schema {:?}, expected {REGISTRY_SCHEMA:?}",
            file.schema
        )));
    }
    Registry::from_parts(file.packages, file.payload_apps)
}

/// Role -> topic name assignment for one package.
pub type Bindings = BTreeMap<String, String>;

/// Finds a valid binding of every required role to a distinct available
/// topic, or `None` if the package cannot run on `available`.
///
/// Roles are grouped by required type; a type group binds to the
/// lexicographically first topics of that type, so suggestions are stable.
pub fn bind_roles(
    pkg: &PackageDescriptor,
    available: &BTreeMap<String, String>,
) -> Option<Bindings> {
    let mut bindings = Bindings::new();
    match pkg.match_by {
        MatchMode::Name => {
            for (role, ty) in &pkg.required_topics {
                let name = format!("/{role}");
                match available.get(&name) {
                    Some(t) if t == ty => {
                        bindings.insert(role.clone(), name);
                    }
                    _ => return None,
                }
            }
        }
        MatchMode::Type => {
            let mut by_type: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
            for (role, ty) in &pkg.required_topics {
                by_type.entry(ty.as_str()).or_default().push(role.as_str());
            }
            for (ty, roles) in by_type {
                let mut topics = available
                    .iter()
                    .filter(|(_, t)| t.as_str() == ty)
                    .map(|(name, _)| name);
                for role in roles {
                    let topic = topics.next()?;
                    bindings.insert(role.to_owned(), topic.clone());
                }
            }
        }
    }
    Some(bindings)
}

/// Checks caller-supplied bindings against the package and what is
/// available. Returns the first offending role on failure.
pub fn validate_bindings(
    pkg: &PackageDescriptor,
    bindings: &Bindings,
    available: &BTreeMap<String, String>,
) -> Result<(), BindingError> {
    for role in bindings.keys() {
        if !pkg.required_topics.contains_key(role) {
            return Err(BindingError::UnknownRole(role.clone()));
        }
    }
    let mut used: BTreeMap<&str, &str> = BTreeMap::new();
    for (role, ty) in &pkg.required_topics {
        let topic = bindings
            .get(role)
            .ok_or_else(|| BindingError::UnboundRole(role.clone()))?;
        let advertised = available
            .get(topic)
            .ok_or_else(|| BindingError::MissingTopic(topic.clone()))?;
        if advertised != ty && advertised != crate::protocol::UNKNOWN_TYPE {
            return Err(BindingError::TypeMismatch {
                role: role.clone(),
                expected: ty.clone(),
                found: advertised.clone(),
            });
        }
        if pkg.match_by == MatchMode::Name && topic != &format!("/{role}") {
            return Err(BindingError::NameMismatch(role.clone()));
        }
        if let Some(other) = used.insert(topic.as_str(), role.as_str()) {
            if pkg.required_topics[other] == *ty {
                return Err(BindingError::SharedTopic(topic.clone()));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BindingError {
    #[error("role {0:?} is not required by the package")]
    UnknownRole(String),
    #[error("role {0:?} is not bound")]
    UnboundRole(String),
    #[error("topic {0:?} is not advertised by the robot")]
    MissingTopic(String),
    #[error("role {role:?} needs {expected}, topic carries {found}")]
    TypeMismatch {
        role: String,
        expected: String,
        found: String,
    },
    #[error("role {0:?} requires exact-name binding")]
    NameMismatch(String),
    #[error("topic {0:?} bound to two roles of the same type")]
    SharedTopic(String),
}

/// Ids of every package whose required roles can all be bound on
/// `available` (topic name -> type name), sorted by id. Packages that
/// declare no topics are payload-only apps and never match here.
pub fn match_packages(available: &BTreeMap<String, String>, reg: &Registry) -> Vec<String> {
    // BTreeMap iteration already yields ids in order
    reg.packages
        .values()
        .filter(|pkg| !pkg.required_topics.is_empty())
        .filter(|pkg| bind_roles(pkg, available).is_some())
        .map(|pkg| pkg.id.clone())
        .collect()
}

pub fn apps_for_payload(kind: PayloadKind, reg: &Registry) -> Vec<String> {
    if kind == PayloadKind::Unknown {
        return Vec::new();
    }
    let mut ids = reg.payload_apps.get(&kind).cloned().unwrap_or_default();
    ids.sort();
    ids.dedup();
    ids
}

/// Declared content type accompanying a raw payload, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContentHint<'a> {
    #[default]
    None,
    Mime(&'a str),
}

/// Total classification of a raw non-ROS payload.
pub fn classify_payload(bytes: &[u8], hint: ContentHint<'_>) -> PayloadKind {
    if let ContentHint::Mime(mime) = hint {
        let mime = mime.trim().to_ascii_lowercase();
        if mime.starts_with("image/") {
            return PayloadKind::Image;
        }
    }
    if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) || bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        return PayloadKind::Image;
    }
    let Ok(text) = std::str::from_utf8(bytes) else {
        return PayloadKind::Unknown;
    };
    let text = text.trim_start();
    if text.starts_with("data:image/") {
        return PayloadKind::Image;
    }
    if text.starts_with("$GP") || text.starts_with("$GN") {
        return PayloadKind::Gps;
    }
    let Ok(serde_json::Value::Object(obj)) = serde_json::from_str::<serde_json::Value>(text) else {
        return PayloadKind::Unknown;
    };
    let number = |k: &str| obj.get(k).is_some_and(serde_json::Value::is_number);
    if (number("lat") && number("lon")) || (number("latitude") && number("longitude")) {
        PayloadKind::Gps
    } else if obj.get("ranges").is_some_and(serde_json::Value::is_array)
        && number("angle_min")
        && number("angle_increment")
    {
        PayloadKind::LaserScan
    } else {
        PayloadKind::Unknown
    }
}
