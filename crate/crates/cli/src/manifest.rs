use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ergodic_control::ProblemConfig;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub tool_version: &'static str,
    pub timestamp_unix: f64,
    pub problem: Option<ProblemConfig>,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
    pub iteration_wall_times: Vec<f64>,
    pub exit_status: u8,
    pub error: Option<String>,
}

impl Manifest {
    pub fn new(command: &str, config_path: Option<&Path>, out_dir: PathBuf) -> Self {
        Self {
            command: command.into(),
            config_path: config_path.map(Path::to_path_buf),
            out_dir,
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            problem: None,
            seed: None,
            outputs: Vec::new(),
            wall_time_seconds: 0.0,
            iteration_wall_times: Vec::new(),
            exit_status: 0,
            error: None,
        }
    }

    /// Writes `manifest.json`; failures only reach stderr.
    pub fn finish(&mut self, code: u8, error: Option<String>, started: Instant) {
        self.exit_status = code;
        self.error = error;
        self.wall_time_seconds = started.elapsed().as_secs_f64();
        let path = self.out_dir.join("manifest.json");
        let written = fs::create_dir_all(&self.out_dir)
            .map_err(|e| e.to_string())
            .and_then(|_| serde_json::to_string_pretty(self).map_err(|e| e.to_string()))
            .and_then(|text| fs::write(&path, text + "\n").map_err(|e| e.to_string()));
        if let Err(e) = written {
            eprintln!("error: cannot write {}: {e}", path.display());
        }
    }
}
