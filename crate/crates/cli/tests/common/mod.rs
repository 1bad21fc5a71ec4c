//! Straight-loop reference pipeline for intercept-only models, and fixtures.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use conjset_core::bootstrap::rademacher_stream;
use conjset_core::field::save_field_stack;
use conjset_core::simharness::{generate_noise, SimulationSpec};
use conjset_core::{FieldStack, Lattice};

pub struct Oracle {
    /// Per condition, working field `ε(ȳ − c)/sd` on every pixel.
    pub g: Vec<Vec<f64>>,
    pub m: Vec<f64>,
    /// `(p, q, w, active bitmask)` in `(p, q, w)` order.
    pub points: Vec<(usize, usize, f64, u64)>,
    pub h: Vec<f64>,
    pub a: f64,
    pub index: usize,
    pub upper: Vec<bool>,
    pub point: Vec<bool>,
    pub lower: Vec<bool>,
}

pub struct OracleInput<'a> {
    pub width: usize,
    pub height: usize,
    pub n: usize,
    /// Observation-major values per condition.
    pub data: &'a [Vec<f64>],
    pub c: &'a [f64],
    /// `δᵢ` for a conjunction, `−δᵢ` for a disjunction.
    pub eff_signs: &'a [f64],
    pub eta: Option<f64>,
    pub boot: usize,
    pub alpha: f64,
    pub seed: u64,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn oracle(inp: &OracleInput) -> Oracle {
    let (w, h, n) = (inp.width, inp.height, inp.n);
    let len = w * h;
    let mcount = inp.data.len();
    let sqrt_n = (n as f64).sqrt();

    let mut g = vec![vec![0.0; len]; mcount];
    // residuals[i][s][l]
    let mut resid = vec![vec![vec![0.0; n]; len]; mcount];
    for i in 0..mcount {
        for s in 0..len {
            let y: Vec<f64> = (0..n).map(|l| inp.data[i][l * len + s]).collect();
            let (mean, sd) = mean_sd(&y);
            // se/τ = (sd/√n)·√n = sd
            g[i][s] = inp.eff_signs[i] * (mean - inp.c[i]) / sd;
            for l in 0..n {
                resid[i][s][l] = (y[l] - mean) / sd;
            }
        }
    }
    let m: Vec<f64> = (0..len)
        .map(|s| (0..mcount).map(|i| g[i][s]).fold(f64::INFINITY, f64::min))
        .collect();

    let eta = inp.eta.unwrap_or(2.0 / sqrt_n);
    let mut points = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let p = row * w + col;
            assert!(m[p] != 0.0, "fixture has an exact zero");
            let mut edges = Vec::new();
            if col + 1 < w {
                edges.push(p + 1);
            }
            if row + 1 < h {
                edges.push(p + w);
            }
            for q in edges {
                if (m[p] > 0.0) != (m[q] > 0.0) {
                    let wt = m[p] / (m[p] - m[q]);
                    let interp = |f: &[f64]| (1.0 - wt) * f[p] + wt * f[q];
                    let mut bits = 0u64;
                    let mut best = 0;
                    for i in 0..mcount {
                        if interp(&g[i]).abs() <= eta {
                            bits |= 1 << i;
                        }
                        if interp(&g[i]) < interp(&g[best]) {
                            best = i;
                        }
                    }
                    bits |= 1 << best;
                    points.push((p, q, wt, bits));
                }
            }
        }
    }
    points.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)).then(x.2.total_cmp(&y.2)));

    let mut hs = Vec::with_capacity(inp.boot);
    for b in 0..inp.boot {
        let r = rademacher_stream(inp.seed, b as u64, n);
        // full bootstrap fields on every pixel
        let mut gt = vec![vec![0.0; len]; mcount];
        for i in 0..mcount {
            for s in 0..len {
                let sample: Vec<f64> = (0..n).map(|l| r[l] * resid[i][s][l]).collect();
                let (_, sd) = mean_sd(&sample);
                let sum: f64 = sample.iter().sum();
                gt[i][s] = inp.eff_signs[i] * sum / sqrt_n / sd;
            }
        }
        // H̃ = max over nonempty subsets α of sup over ∂^α of |min_{i∈α} G̃ⁱ|
        let mut hb = 0.0f64;
        for alpha in 1u64..(1 << mcount) {
            for &(p, q, wt, bits) in &points {
                if bits != alpha {
                    continue;
                }
                let mut lo = f64::INFINITY;
                for i in 0..mcount {
                    if alpha >> i & 1 == 1 {
                        lo = lo.min((1.0 - wt) * gt[i][p] + wt * gt[i][q]);
                    }
                }
                hb = hb.max(lo.abs());
            }
        }
        hs.push(hb);
    }

    // smallest sample value with at least (1 − α)B values at or below it
    let mut sorted = hs.clone();
    sorted.sort_by(f64::total_cmp);
    let need = (1.0 - inp.alpha) * inp.boot as f64;
    let index = (1..=inp.boot).find(|&k| k as f64 >= need - 1e-9).unwrap();
    let a = sorted[index - 1];

    let t: Vec<f64> = m.iter().map(|v| v * sqrt_n).collect();
    Oracle {
        upper: t.iter().map(|&v| v >= a).collect(),
        point: m.iter().map(|&v| v >= 0.0).collect(),
        lower: t.iter().map(|&v| v >= -a).collect(),
        g,
        m,
        points,
        h: hs,
        a,
        index,
    }
}

/// `μ + ε` with a disk of height `amp` and radius `radius` centred at
/// `centre`, on unit-variance noise.
pub fn disk_stack(
    width: usize,
    height: usize,
    n: usize,
    centre: (f64, f64),
    radius: f64,
    amp: f64,
    seed: u64,
) -> FieldStack {
    let spec = SimulationSpec {
        width,
        height,
        n,
        conditions: 1,
        ..SimulationSpec::default()
    };
    let mut stack = generate_noise(&spec, seed).unwrap().remove(0);
    let lat = Lattice::new(width, height).unwrap();
    let mu = conjset_core::ScalarField::from_fn(lat, |r, c| {
        let (dy, dx) = (r as f64 - centre.0, c as f64 - centre.1);
        if dx * dx + dy * dy <= radius * radius {
            amp
        } else {
            0.0
        }
    });
    stack.add_field(&mu).unwrap();
    stack
}

pub fn write_stack(dir: &Path, name: &str, stack: &FieldStack) -> PathBuf {
    let path = dir.join(format!("{name}.json"));
    save_field_stack(&path, stack).unwrap();
    path
}

/// Reads a mask CSV written by the CLI into row-major bits.
pub fn read_mask_csv(path: &Path, len: usize) -> Vec<bool> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut bits = vec![false; len];
    let mut width = 0;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let v: Vec<usize> = line.split(',').map(|x| x.trim().parse().unwrap()).collect();
        width = width.max(v[1] + 1);
        rows.push(v);
    }
    for v in rows {
        bits[v[0] * width + v[1]] = v[2] == 1;
    }
    bits
}
