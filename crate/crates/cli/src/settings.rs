//! Effective run settings: flag over config file over built-in default.

use crate::failure::Failure;
use acqsim::predictor::Mode;
use acqsim::scenarios::{ScenarioConfig, ScenarioKind};
use serde_json::{Map, Value};
use std::path::Path;

/// Settings that may be given on the command line.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub scenario: Option<ScenarioKind>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub mode: Option<Mode>,
    pub price: Option<f64>,
}

pub struct Resolved {
    pub config: ScenarioConfig,
    /// `setting -> flag | file | default`, sorted by setting name.
    pub sources: Vec<(String, String)>,
    /// Exact bytes written to `config.json` and hashed into the manifest.
    pub bytes: Vec<u8>,
}

fn read_object(path: &Path) -> Result<Map<String, Value>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config("ConfigUnreadable", format!("{}: {e}", path.display())))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Failure::config(
            "InvalidConfig",
            "config file must hold a JSON object",
        )),
        Err(e) => Err(Failure::config("InvalidConfig", e)),
    }
}

pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Resolved, Failure> {
    let file_obj = match file {
        Some(p) => read_object(p)?,
        None => Map::new(),
    };
    let mut config: ScenarioConfig = serde_json::from_value(Value::Object(file_obj.clone()))
        .map_err(|e| Failure::config("InvalidConfig", e))?;

    let defaults = serde_json::to_value(ScenarioConfig::default()).expect("config serializes");
    let mut sources: Vec<(String, String)> = Vec::new();
    let from_file = |key: &str| -> bool {
        let mut parts = key.split('.');
        let mut node = file_obj.get(parts.next().unwrap_or_default());
        for p in parts {
            node = node.and_then(|n| n.get(p));
        }
        node.is_some()
    };
    for (key, value) in defaults.as_object().expect("config is an object") {
        let nested = matches!(value, Value::Object(_)) && from_file(key);
        if nested {
            for sub in value.as_object().expect("checked").keys() {
                let full = format!("{key}.{sub}");
                let src = if from_file(&full) { "file" } else { "default" };
                sources.push((full, src.into()));
            }
        } else {
            let src = if from_file(key) { "file" } else { "default" };
            sources.push((key.clone(), src.into()));
        }
    }
    // Nested keys not split above (e.g. `simulate.price_per_label` when the
    // file has no `simulate` block) get their own line.
    let mut set_flag = |key: &str| match sources.iter_mut().find(|(k, _)| k == key) {
        Some(entry) => entry.1 = "flag".into(),
        None => sources.push((key.into(), "flag".into())),
    };
    if let Some(s) = flags.scenario {
        config.scenario = s;
        set_flag("scenario");
    }
    if let Some(s) = flags.seed {
        config.seed = s;
        set_flag("seed");
    }
    if let Some(t) = flags.threshold {
        config.threshold = t;
        set_flag("threshold");
    }
    if let Some(m) = flags.mode {
        config.mode = m;
        set_flag("mode");
    }
    if let Some(p) = flags.price {
        config.simulate.price_per_label = p;
        set_flag("simulate.price_per_label");
    }
    config.validate()?;
    let mut bytes = serde_json::to_vec_pretty(&config).expect("config serializes");
    bytes.push(b'\n');
    Ok(Resolved {
        config,
        sources,
        bytes,
    })
}
