use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::quadham::{QuadHam, Weights};
use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Serialize, Deserialize)]
struct Entry {
    k: Vec<i32>,
    block: String,
    i: usize,
    j: usize,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct QuadHamFile {
    n: usize,
    J: usize,
    K_cap: usize,
    r: f64,
    s: f64,
    a: f64,
    p: f64,
    #[serde(default)]
    tail_norm: f64,
    entries: Vec<Entry>,
}

/// Writes bytes to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Serializes with 1-based mode indices; symmetric blocks store i ≤ j only.
pub fn write_quadham(path: &Path, p: &QuadHam) -> Result<()> {
    let mut entries = Vec::new();
    for (k, b) in &p.coeffs {
        for i in 0..p.j {
            for j in 0..p.j {
                let mut push = |block: &str, v: C64| {
                    if v.re != 0.0 || v.im != 0.0 {
                        entries.push(Entry { k: k.clone(), block: block.into(), i: i + 1, j: j + 1, re: v.re, im: v.im });
                    }
                };
                if i <= j {
                    push("s20", b.s20[(i, j)]);
                    push("s02", b.s02[(i, j)]);
                }
                push("h11", b.h11[(i, j)]);
            }
        }
    }
    let file = QuadHamFile {
        n: p.n,
        J: p.j,
        K_cap: p.k_cap,
        r: p.w.r,
        s: p.w.s,
        a: p.w.a,
        p: p.w.p,
        tail_norm: p.tail_norm,
        entries,
    };
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

pub fn read_quadham(path: &Path) -> Result<QuadHam> {
    let text = fs::read_to_string(path)?;
    let f: QuadHamFile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut p = QuadHam::new(f.n, f.J, f.K_cap, Weights { r: f.r, s: f.s, a: f.a, p: f.p });
    p.tail_norm = f.tail_norm;
    for e in f.entries {
        if e.k.len() != f.n || e.i == 0 || e.j == 0 || e.i > f.J || e.j > f.J || super::l1(&e.k) > f.K_cap {
            return Err(Error::Parse(format!("entry out of range: k={:?} i={} j={}", e.k, e.i, e.j)));
        }
        let v = C64::new(e.re, e.im);
        let (i, j) = (e.i - 1, e.j - 1);
        match e.block.as_str() {
            "s20" => p.set_s20(&e.k, i, j, v),
            "s02" => p.set_s02(&e.k, i, j, v),
            "h11" => p.add_h11(&e.k, i, j, v),
            other => return Err(Error::Parse(format!("unknown block {other:?}"))),
        }
    }
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct NormRow {
    pub name: String,
    pub vf_norm: f64,
    pub tl_m1: f64,
    pub tl_m3: f64,
    pub tail_norm: f64,
}

pub fn write_norm_csv(path: &Path, rows: &[NormRow]) -> Result<()> {
    let mut s = String::from("name,vf_norm,tl_M1,tl_M3,tail_norm\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.name, r.vf_norm, r.tl_m1, r.tl_m3, r.tail_norm
        ));
    }
    write_atomic(path, s.as_bytes())
}
