//! Run manifests: enough to re-run a report command into a fresh directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, without `--out`. Input files are
    /// named relative to the manifest's directory.
    pub args: Vec<String>,
    pub seed: u64,
    /// Input files copied next to the manifest.
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub selected: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let v = json!({
            "command": self.command,
            "args": self.args,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "selected": self.selected,
        });
        serde_json::to_string_pretty(&v).expect("plain JSON values") + "\n"
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let v: Value =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("manifest: {e}")))?;
        let strings = |key: &str| -> Result<Vec<String>, CliError> {
            v[key]
                .as_array()
                .ok_or_else(|| CliError::Usage(format!("manifest: missing {key}")))?
                .iter()
                .map(|s| {
                    s.as_str().map(str::to_string).ok_or_else(|| {
                        CliError::Usage(format!("manifest: {key} must hold strings"))
                    })
                })
                .collect()
        };
        Ok(Self {
            command: v["command"]
                .as_str()
                .ok_or_else(|| CliError::Usage("manifest: missing command".into()))?
                .to_string(),
            args: strings("args")?,
            seed: v["seed"]
                .as_u64()
                .ok_or_else(|| CliError::Usage("manifest: missing seed".into()))?,
            inputs: strings("inputs")?,
            outputs: strings("outputs")?,
            selected: strings("selected")?,
        })
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        let p = out.join(MANIFEST_FILE);
        fs::write(&p, self.to_json())?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let m = RunManifest {
            command: "scenario".into(),
            args: vec![
                "scenario".into(),
                "CCN-CCN".into(),
                "--config".into(),
                "config.net".into(),
            ],
            seed: 42,
            inputs: vec!["config.net".into()],
            outputs: vec!["scenario.csv".into()],
            selected: vec!["CCN-CCN".into()],
        };
        assert_eq!(RunManifest::parse(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn malformed_manifest_is_usage_error() {
        assert_eq!(RunManifest::parse("{}").unwrap_err().kind(), "Usage");
        assert_eq!(RunManifest::parse("not json").unwrap_err().kind(), "Usage");
    }
}
