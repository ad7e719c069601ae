//! Run manifests: a JSON record of the resolved configuration and fit
//! metadata, with a config hash so reruns can be matched to outputs.

use std::path::Path;

use serde_json::{Map, Value};

/// FNV-1a over the canonical key=value listing.
pub fn config_hash(pairs: &[(&str, String)]) -> String {
    let mut sorted: Vec<&(&str, String)> = pairs.iter().collect();
    sorted.sort_by_key(|(k, _)| *k);
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for (k, v) in sorted {
        for byte in k.bytes().chain("=".bytes()).chain(v.bytes()).chain("\n".bytes()) {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{hash:016x}")
}

/// Builder collecting manifest fields in insertion-stable form.
pub struct Manifest {
    fields: Map<String, Value>,
    config_pairs: Vec<(&'static str, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut fields = Map::new();
        fields.insert("command".into(), Value::String(command.into()));
        Manifest {
            fields,
            config_pairs: vec![],
        }
    }

    /// Record a resolved config entry: goes into both the manifest and the
    /// config hash.
    pub fn config(&mut self, key: &'static str, value: impl ToString) -> &mut Self {
        let v = value.to_string();
        self.fields.insert(key.into(), Value::String(v.clone()));
        self.config_pairs.push((key, v));
        self
    }

    /// Record an output-only field (not part of the config hash).
    pub fn result(&mut self, key: &'static str, value: Value) -> &mut Self {
        self.fields.insert(key.into(), value);
        self
    }

    pub fn result_f64(&mut self, key: &'static str, value: f64) -> &mut Self {
        // Serialized as a string with 17 significant digits so round-trips
        // through the manifest are lossless.
        self.result(key, Value::String(crate::formats::fmt_f64(value)))
    }

    pub fn write(&mut self, dir: &Path) -> Result<(), Box<dyn std::error::Error>> {
        let hash = config_hash(&self.config_pairs);
        self.fields
            .insert("config_hash".into(), Value::String(hash));
        let text = serde_json::to_string_pretty(&Value::Object(self.fields.clone()))?;
        std::fs::write(dir.join("manifest.json"), text + "\n")
            .map_err(|e| format!("manifest.json: {e}"))?;
        Ok(())
    }
}
