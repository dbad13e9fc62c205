//! Machine-readable experiment reports: a schema-versioned JSON document plus
//! CSV energy traces for plotting.

use crate::emin::EminReport;
use crate::error::Result;
use crate::solver::{Hierarchy, LevelStats, SolveReport};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Embedded description of the report document; `validate_report_json`
/// enforces it.
pub const REPORT_SCHEMA: &str = r#"{
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "eminamg experiment report",
  "type": "object",
  "required": ["schema_version", "software", "problem", "config", "runs"],
  "properties": {
    "schema_version": {"type": "integer"},
    "software": {
      "type": "object",
      "required": ["name", "version"],
      "properties": {"name": {"type": "string"}, "version": {"type": "string"}}
    },
    "problem": {
      "type": "object",
      "required": ["kind", "nrows", "nnz", "nullspace"],
      "properties": {
        "kind": {"type": "string"},
        "dims": {"type": "array", "items": {"type": "integer"}},
        "nrows": {"type": "integer"},
        "nnz": {"type": "integer"},
        "nullspace": {"type": "string"}
      }
    },
    "config": {
      "type": "object",
      "required": ["theta", "pattern_distance", "tau", "lmax", "seed", "tol", "threads"]
    },
    "runs": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["variant", "hierarchy", "solve"],
        "properties": {
          "variant": {"type": "string"},
          "hierarchy": {
            "type": "object",
            "required": ["levels", "c_gd", "c_op", "level_rows", "level_nnz"]
          },
          "solve": {
            "type": "object",
            "required": ["converged", "n_it", "final_relres"]
          }
        }
      }
    }
  }
}"#;

#[derive(Debug, Clone, Serialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaterialEcho {
    pub young: f64,
    pub poisson: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemEcho {
    pub kind: String,
    pub dims: Vec<usize>,
    pub nrows: usize,
    pub nnz: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub material: Option<MaterialEcho>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix_path: Option<String>,
    pub nullspace: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub theta: f64,
    pub pattern_distance: usize,
    pub tau: f64,
    pub emin_maxit: usize,
    pub precond: String,
    pub lmax: usize,
    pub seed: u64,
    pub tol: f64,
    pub solve_maxit: usize,
    pub threads: usize,
    pub smoother: String,
    pub omega: f64,
    pub coarse_size: usize,
    pub max_levels: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct HierarchyEcho {
    pub levels: usize,
    pub c_gd: f64,
    pub c_op: f64,
    pub level_rows: Vec<usize>,
    pub level_nnz: Vec<usize>,
    pub level_detail: Vec<LevelStats>,
    pub warnings: Vec<String>,
    /// Setup wall time (seconds); zeroed when comparing reports for
    /// determinism.
    pub t_setup_s: f64,
    /// Prolongation-improvement time, a subset of t_setup_s.
    pub t_improve_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveEcho {
    pub converged: bool,
    pub n_it: usize,
    pub final_relres: f64,
    pub relres_trace: Vec<f64>,
    pub t_solve_s: f64,
    pub t_total_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantRun {
    pub variant: String,
    pub hierarchy: HierarchyEcho,
    pub solve: SolveEcho,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub software: Software,
    pub problem: ProblemEcho,
    pub config: ConfigEcho,
    pub runs: Vec<VariantRun>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| {
            crate::error::Error::InvalidConfig(format!("report serialization failed: {e}"))
        })
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json()?.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// Copy with wall-time fields zeroed, for determinism comparisons.
    pub fn with_zeroed_times(&self) -> ExperimentReport {
        let mut r = self.clone();
        for run in &mut r.runs {
            run.hierarchy.t_setup_s = 0.0;
            run.hierarchy.t_improve_s = 0.0;
            run.solve.t_solve_s = 0.0;
            run.solve.t_total_s = 0.0;
            for d in &mut run.hierarchy.level_detail {
                if let Some(e) = &mut d.emin {
                    e.time_seconds = 0.0;
                }
            }
        }
        r
    }
}

/// Check a parsed report against the embedded schema (required keys and
/// basic types).
pub fn validate_report_json(doc: &serde_json::Value) -> std::result::Result<(), String> {
    let obj = doc.as_object().ok_or("report must be an object")?;
    for key in ["schema_version", "software", "problem", "config", "runs"] {
        if !obj.contains_key(key) {
            return Err(format!("missing top-level key '{key}'"));
        }
    }
    if !obj["schema_version"].is_u64() {
        return Err("schema_version must be an integer".into());
    }
    let software = obj["software"]
        .as_object()
        .ok_or("software must be an object")?;
    for key in ["name", "version"] {
        if !software.get(key).map(|v| v.is_string()).unwrap_or(false) {
            return Err(format!("software.{key} must be a string"));
        }
    }
    let problem = obj["problem"]
        .as_object()
        .ok_or("problem must be an object")?;
    for key in ["kind", "nrows", "nnz", "nullspace"] {
        if !problem.contains_key(key) {
            return Err(format!("missing problem.{key}"));
        }
    }
    let config = obj["config"]
        .as_object()
        .ok_or("config must be an object")?;
    for key in [
        "theta",
        "pattern_distance",
        "tau",
        "lmax",
        "seed",
        "tol",
        "threads",
    ] {
        if !config.contains_key(key) {
            return Err(format!("missing config.{key}"));
        }
    }
    let runs = obj["runs"].as_array().ok_or("runs must be an array")?;
    for (i, run) in runs.iter().enumerate() {
        let run = run
            .as_object()
            .ok_or(format!("runs[{i}] must be an object"))?;
        for key in ["variant", "hierarchy", "solve"] {
            if !run.contains_key(key) {
                return Err(format!("missing runs[{i}].{key}"));
            }
        }
        let h = run["hierarchy"]
            .as_object()
            .ok_or(format!("runs[{i}].hierarchy must be an object"))?;
        for key in ["levels", "c_gd", "c_op", "level_rows", "level_nnz"] {
            if !h.contains_key(key) {
                return Err(format!("missing runs[{i}].hierarchy.{key}"));
            }
        }
        let s = run["solve"]
            .as_object()
            .ok_or(format!("runs[{i}].solve must be an object"))?;
        for key in ["converged", "n_it", "final_relres"] {
            if !s.contains_key(key) {
                return Err(format!("missing runs[{i}].solve.{key}"));
            }
        }
    }
    Ok(())
}

/// CSV energy trace of one energy-minimization run: header
/// `iter,dE_rel,energy`, one row per applied iteration with the cumulative
/// energy E_0 - sum(dE).
pub fn write_trace_csv(path: impl AsRef<Path>, report: &EminReport) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "iter,dE_rel,energy")?;
    let mut energy = report.energy_initial;
    for (k, (&abs, &rel)) in report.d_e_abs.iter().zip(&report.d_e_rel).enumerate() {
        energy -= abs;
        writeln!(f, "{},{},{}", k + 1, rel, energy)?;
    }
    Ok(())
}

/// Assemble the per-variant section from solver outputs.
pub fn variant_run(variant: String, h: &Hierarchy, solve: &SolveReport) -> VariantRun {
    let stats: &[LevelStats] = &h.level_stats;
    VariantRun {
        variant,
        hierarchy: HierarchyEcho {
            levels: stats.len(),
            c_gd: h.c_gd,
            c_op: h.c_op,
            level_rows: stats.iter().map(|s| s.rows).collect(),
            level_nnz: stats.iter().map(|s| s.nnz).collect(),
            level_detail: stats.to_vec(),
            warnings: h.warnings.clone(),
            t_setup_s: h.t_setup,
            t_improve_s: h.t_improve,
        },
        solve: SolveEcho {
            converged: solve.converged,
            n_it: solve.n_it,
            final_relres: solve.final_relres,
            relres_trace: solve.relres_trace.clone(),
            t_solve_s: solve.time_seconds,
            t_total_s: h.t_setup + solve.time_seconds,
        },
    }
}
