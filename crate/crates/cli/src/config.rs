use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::CliError;

/// Option values from a JSON config file. Keys may use `-` or `_`.
#[derive(Debug, Default)]
pub struct Resolver {
    file: Map<String, Value>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str::<Value>(&text) {
            // a logged run_config.json replays its resolved options
            Ok(Value::Object(mut file)) => match file.remove("config") {
                Some(Value::Object(inner)) if file.contains_key("command") => {
                    Ok(Self { file: inner })
                }
                Some(other) => {
                    file.insert("config".into(), other);
                    Ok(Self { file })
                }
                None => Ok(Self { file }),
            },
            Ok(_) => Err(CliError::Usage(format!(
                "config {} must hold a JSON object",
                path.display()
            ))),
            Err(e) => Err(CliError::Usage(format!("config {}: {e}", path.display()))),
        }
    }

    fn lookup(&self, key: &str) -> Option<&Value> {
        self.file
            .get(key)
            .or_else(|| self.file.get(&key.replace('_', "-")))
    }

    /// Flag (or its environment variable) if given, then the config file, then `default`.
    pub fn get<T: DeserializeOwned>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.lookup(key) {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| CliError::Usage(format!("config key '{key}': {e}"))),
            None => Ok(default),
        }
    }

    pub fn opt<T: DeserializeOwned>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.lookup(key) {
            Some(Value::Null) | None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key '{key}': {e}"))),
        }
    }

    /// Key present with an explicit `null`.
    pub fn is_null(&self, key: &str) -> bool {
        matches!(self.lookup(key), Some(Value::Null))
    }

    pub fn require<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<T, CliError> {
        self.opt(flag, key)?.ok_or_else(|| {
            CliError::Usage(format!(
                "missing required option --{}",
                key.replace('_', "-")
            ))
        })
    }
}

pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const RUN_LOG_FILE: &str = "run_log.jsonl";

/// JSON-lines run log with per-stage wall times.
pub struct RunLog {
    path: PathBuf,
    started: Instant,
    stage: Option<(String, Instant)>,
}

impl RunLog {
    /// Create the output directory, write the resolved config and open the log.
    pub fn start<C: Serialize>(out: &Path, command: &str, config: &C) -> Result<Self, CliError> {
        std::fs::create_dir_all(out)?;
        let resolved = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
        });
        let mut f = File::create(out.join(RUN_CONFIG_FILE))?;
        serde_json::to_writer_pretty(&mut f, &resolved).map_err(std::io::Error::from)?;
        writeln!(f)?;
        let path = out.join(RUN_LOG_FILE);
        File::create(&path)?;
        let log = Self {
            path,
            started: Instant::now(),
            stage: None,
        };
        log.write(
            json!({"event": "start", "command": command, "version": env!("CARGO_PKG_VERSION")}),
        )?;
        Ok(log)
    }

    fn write(&self, v: Value) -> Result<(), CliError> {
        let mut f = OpenOptions::new().append(true).open(&self.path)?;
        writeln!(f, "{v}")?;
        Ok(())
    }

    pub fn stage(&mut self, name: &str) -> Result<(), CliError> {
        self.finish_stage()?;
        log::info!("stage {name}");
        self.stage = Some((name.to_string(), Instant::now()));
        Ok(())
    }

    fn finish_stage(&mut self) -> Result<(), CliError> {
        if let Some((name, t)) = self.stage.take() {
            self.write(
                json!({"event": "stage", "stage": name, "seconds": t.elapsed().as_secs_f64()}),
            )?;
        }
        Ok(())
    }

    pub fn note(&self, v: Value) -> Result<(), CliError> {
        self.write(json!({"event": "note", "data": v}))
    }

    pub fn end(mut self, status: &str) -> Result<(), CliError> {
        self.finish_stage()?;
        self.write(json!({"event": "end", "status": status, "seconds": self.started.elapsed().as_secs_f64()}))
    }
}
