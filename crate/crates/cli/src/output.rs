//! Output files: fixed-format reals, atomic writes and run manifests.

use std::path::{Path, PathBuf};

use kamreduce_core::flow::SymplecticMap;
use kamreduce_core::hamrep::write_atomic;
use kamreduce_core::linalg::{CMat, C64};
use kamreduce_core::smalldiv::NormalForm;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::CliError;

/// 17 significant digits, '.' decimal, no locale.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct OutDir {
    pub dir: PathBuf,
    pub written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(OutDir { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write_atomic(&path, contents.as_bytes()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// manifest.json: command, seed, resolved config, extra records and the
    /// list of files written so far.
    pub fn manifest(&mut self, command: &str, cfg: &ExperimentConfig, status: &str, extra: serde_json::Value) -> Result<(), CliError> {
        let m = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": cfg.seed,
            "status": status,
            "config": cfg,
            "outputs": self.written,
            "records": extra,
        });
        let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Io(e.to_string()))? + "\n";
        self.write("manifest.json", &text)
    }
}

/// Reducing transformation and final normal form, as saved by `reduce` and
/// read back by `verify`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformFile {
    pub n: usize,
    pub j: usize,
    pub grid: usize,
    pub omega: Vec<f64>,
    pub omega_breve: Vec<f64>,
    pub a0: f64,
    /// Per grid point, L − I row-major as [re, im] pairs.
    pub b: Vec<Vec<[f64; 2]>>,
}

impl TransformFile {
    pub fn new(nf: &NormalForm, map: &SymplecticMap) -> Self {
        let b = map
            .b
            .iter()
            .map(|m| {
                let mut v = Vec::with_capacity(m.nrows() * m.ncols());
                for r in 0..m.nrows() {
                    for c in 0..m.ncols() {
                        v.push([m[(r, c)].re, m[(r, c)].im]);
                    }
                }
                v
            })
            .collect();
        TransformFile {
            n: map.n,
            j: map.j,
            grid: map.grid,
            omega: nf.omega.clone(),
            omega_breve: nf.omega_breve.clone(),
            a0: nf.a0,
            b,
        }
    }

    pub fn load(path: &Path) -> Result<(NormalForm, SymplecticMap), CliError> {
        let io = |m: String| CliError::Io(format!("{}: {m}", path.display()));
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        let t: TransformFile = serde_json::from_str(&text).map_err(|e| io(e.to_string()))?;
        let n2 = 2 * t.j;
        if t.n == 0 || t.omega.len() != t.n || t.omega_breve.len() != t.j || t.grid == 0 {
            return Err(io("inconsistent transform header".into()));
        }
        if t.b.len() != t.grid.pow(t.n as u32) || t.b.iter().any(|m| m.len() != n2 * n2) {
            return Err(io("transform matrices do not match the header".into()));
        }
        let b: Vec<CMat> = t
            .b
            .iter()
            .map(|v| CMat::from_fn(n2, n2, |r, c| C64::new(v[r * n2 + c][0], v[r * n2 + c][1])))
            .collect();
        let m = vec![Vec::new(); b.len()];
        let mut nf = NormalForm::new(t.omega, t.omega_breve, t.a0);
        nf.breve_limit = Some(0.0);
        Ok((nf, SymplecticMap { n: t.n, j: t.j, grid: t.grid, b, m, quad_nodes: 0 }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_have_seventeen_digits() {
        assert_eq!(real(0.1), "1.0000000000000001e-1");
        assert_eq!(real(-2.0), "-2.0000000000000000e0");
    }
}
