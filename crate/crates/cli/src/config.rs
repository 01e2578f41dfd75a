//! Resolved run settings.
//!
//! Every command starts from built-in defaults, overlays the optional config
//! file named by `RQF_CONFIG`, then overlays its own command-line flags.  The
//! file is flat `key = value` text; blank lines and `#` comments are skipped.
//! Unknown keys are usage errors so a typo cannot silently fall back to a
//! default.

use std::fmt::Write as _;

/// Knobs shared by every subcommand, after defaults and config-file merge.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub sigma: f64,
    pub rate: f64,
    pub q: f64,
    /// Quadrature tolerance for kernel pricing and kernel boundaries.
    pub tol: f64,
    /// Residual target for the relaxation solver.
    pub solver_tol: f64,
    /// Relaxation factor for the solver sweep.
    pub omega: f64,
    pub max_iter: usize,
}

pub const KNOWN_KEYS: [&str; 7] = [
    "sigma",
    "rate",
    "q",
    "tol",
    "solver-tol",
    "omega",
    "max-iter",
];

impl Default for Settings {
    fn default() -> Self {
        Settings {
            sigma: 0.2,
            rate: 0.05,
            q: 1.0,
            tol: 1e-8,
            solver_tol: 1e-10,
            omega: 1.5,
            max_iter: 100_000,
        }
    }
}

impl Settings {
    /// Defaults overlaid with the file named by `RQF_CONFIG`, when set.
    pub fn load() -> Result<Settings, String> {
        let mut s = Settings::default();
        if let Ok(path) = std::env::var("RQF_CONFIG") {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| format!("cannot read config file {path}: {e}"))?;
            s.merge_text(&text, &path)?;
        }
        Ok(s)
    }

    /// Overlay flat `key = value` lines onto the current values.
    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<(), String> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("{origin}:{lineno}: expected `key = value`, got `{line}`"))?;
            let key = key.trim();
            let value = value.trim();
            let num = |what: &str| -> Result<f64, String> {
                value
                    .parse::<f64>()
                    .map_err(|_| format!("{origin}:{lineno}: {what} wants a number, got `{value}`"))
            };
            match key {
                "sigma" => self.sigma = num("sigma")?,
                "rate" => self.rate = num("rate")?,
                "q" => self.q = num("q")?,
                "tol" => self.tol = num("tol")?,
                "solver-tol" => self.solver_tol = num("solver-tol")?,
                "omega" => self.omega = num("omega")?,
                "max-iter" => {
                    self.max_iter = value.parse::<usize>().map_err(|_| {
                        format!("{origin}:{lineno}: max-iter wants a positive integer, got `{value}`")
                    })?
                }
                other => {
                    let mut msg =
                        format!("{origin}:{lineno}: unknown config key `{other}`; known keys:");
                    for k in KNOWN_KEYS {
                        let _ = write!(msg, " {k}");
                    }
                    return Err(msg);
                }
            }
        }
        Ok(())
    }

    pub fn as_json(&self) -> serde_json::Value {
        serde_json::json!({
            "sigma": self.sigma,
            "rate": self.rate,
            "q": self.q,
            "tol": self.tol,
            "solver_tol": self.solver_tol,
            "omega": self.omega,
            "max_iter": self.max_iter,
        })
    }
}
