//! Log-density surfaces on the plane through three parameter vectors.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::posterior::PosteriorSpec;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormal frame `(w₁; û, v̂)` of the affine plane through `w₁, w₂, w₃`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBasis {
    pub origin: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub u_raw: Vec<f64>,
    pub v_raw: Vec<f64>,
    /// Coordinates of `w₂` and `w₃` in the frame.
    pub coords_w2: (f64, f64),
    pub coords_w3: (f64, f64),
}

/// Gram–Schmidt on `u = w₂ − w₁`, `v = w₃ − w₁`.
pub fn build_subspace(w1: &[f64], w2: &[f64], w3: &[f64]) -> Result<SubspaceBasis> {
    if w1.len() != w2.len() || w1.len() != w3.len() {
        return Err(Error::Shape("anchor vectors differ in length".into()));
    }
    let u: Vec<f64> = w2.iter().zip(w1).map(|(a, b)| a - b).collect();
    let v: Vec<f64> = w3.iter().zip(w1).map(|(a, b)| a - b).collect();
    let nu = norm(&u);
    if !(nu > 0.0) {
        return Err(Error::Degenerate("first two anchors coincide".into()));
    }
    let u_hat: Vec<f64> = u.iter().map(|x| x / nu).collect();
    let proj = dot(&u_hat, &v);
    let resid: Vec<f64> = v.iter().zip(&u_hat).map(|(a, b)| a - proj * b).collect();
    let nr = norm(&resid);
    if !(nr > 1e-8 * norm(&v)) {
        return Err(Error::Degenerate("anchors are collinear".into()));
    }
    let v_hat: Vec<f64> = resid.iter().map(|x| x / nr).collect();
    Ok(SubspaceBasis {
        origin: w1.to_vec(),
        coords_w2: (nu, 0.0),
        coords_w3: (proj, nr),
        u_hat,
        v_hat,
        u_raw: u,
        v_raw: v,
    })
}

impl SubspaceBasis {
    /// `w₁ + a·û + b·v̂`.
    pub fn point(&self, a: f64, b: f64) -> Vec<f64> {
        self.origin
            .iter()
            .zip(&self.u_hat)
            .zip(&self.v_hat)
            .map(|((o, u), v)| o + a * u + b * v)
            .collect()
    }

    /// Coordinates of the orthogonal projection of `w` onto the plane.
    pub fn project(&self, w: &[f64]) -> (f64, f64) {
        let d: Vec<f64> = w.iter().zip(&self.origin).map(|(x, o)| x - o).collect();
        (dot(&d, &self.u_hat), dot(&d, &self.v_hat))
    }

    /// Anchor bounding box expanded by 20% of its extent on each side.
    pub fn default_ranges(&self) -> ((f64, f64), (f64, f64)) {
        let xs = [0.0, self.coords_w2.0, self.coords_w3.0];
        let ys = [0.0, self.coords_w2.1, self.coords_w3.1];
        let expand = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pad = 0.2 * (hi - lo);
            (lo - pad, hi + pad)
        };
        (expand(&xs), expand(&ys))
    }
}

/// `resolution` evenly spaced values from `lo` to `hi`, endpoints exact.
pub fn linspace(lo: f64, hi: f64, resolution: usize) -> Vec<f64> {
    let last = resolution - 1;
    (0..resolution)
        .map(|i| {
            if i == last {
                hi
            } else {
                lo + (hi - lo) * i as f64 / last as f64
            }
        })
        .collect()
}

/// Three tempered fields on an `R × R` lattice.
///
/// Field layout is row-major: entry `i * R + j` sits at `(a_values[j], b_values[i])`.
/// Points where the likelihood is not finite hold `NaN` and are counted in
/// `n_nonfinite`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceGrid {
    pub basis: SubspaceBasis,
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
    pub resolution: usize,
    pub temperature: f64,
    /// `log p(D|w) / T`.
    pub log_likelihood: Vec<f64>,
    /// `log p(w) / T`.
    pub log_prior: Vec<f64>,
    /// `(log p(D|w) + log p(w)) / T`.
    pub log_posterior: Vec<f64>,
    pub n_nonfinite: usize,
}

pub fn scan_grid(
    basis: &SubspaceBasis,
    a_range: (f64, f64),
    b_range: (f64, f64),
    resolution: usize,
    posterior: &PosteriorSpec,
) -> Result<SubspaceGrid> {
    if resolution < 2 {
        return invalid("scan resolution must be at least 2");
    }
    if basis.origin.len() != posterior.param_count() {
        return Err(Error::Shape("subspace dimension does not match the model".into()));
    }
    let a_values = linspace(a_range.0, a_range.1, resolution);
    let b_values = linspace(b_range.0, b_range.1, resolution);
    let t = posterior.temperature;
    let cells: Vec<(f64, f64, f64)> = (0..resolution * resolution)
        .into_par_iter()
        .map(|q| {
            let w = basis.point(a_values[q % resolution], b_values[q / resolution]);
            let lp = posterior.log_prior(&w);
            match posterior.log_likelihood(&w) {
                Ok(ll) if lp.is_finite() => (ll / t, lp / t, (ll + lp) / t),
                _ => (f64::NAN, f64::NAN, f64::NAN),
            }
        })
        .collect();
    let n_nonfinite = cells.iter().filter(|c| c.2.is_nan()).count();
    Ok(SubspaceGrid {
        basis: basis.clone(),
        resolution,
        temperature: t,
        log_likelihood: cells.iter().map(|c| c.0).collect(),
        log_prior: cells.iter().map(|c| c.1).collect(),
        log_posterior: cells.iter().map(|c| c.2).collect(),
        n_nonfinite,
        a_values,
        b_values,
    })
}

impl SubspaceGrid {
    /// Writes `log_likelihood.csv`, `log_prior.csv`, `log_posterior.csv` (columns `a,b,value`)
    /// and `scan.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, field) in [
            ("log_likelihood", &self.log_likelihood),
            ("log_prior", &self.log_prior),
            ("log_posterior", &self.log_posterior),
        ] {
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}.csv")))?);
            writeln!(f, "a,b,value")?;
            for (q, v) in field.iter().enumerate() {
                let (i, j) = (q / self.resolution, q % self.resolution);
                writeln!(f, "{},{},{}", self.a_values[j], self.b_values[i], v)?;
            }
            f.flush()?;
        }
        let meta = serde_json::json!({
            "resolution": self.resolution,
            "temperature": self.temperature,
            "a_range": [self.a_values[0], self.a_values[self.resolution - 1]],
            "b_range": [self.b_values[0], self.b_values[self.resolution - 1]],
            "layout": "row-major; row index follows b, column index follows a",
            "anchors": {
                "w1": [0.0, 0.0],
                "w2": [self.basis.coords_w2.0, self.basis.coords_w2.1],
                "w3": [self.basis.coords_w3.0, self.basis.coords_w3.1],
            },
            "n_nonfinite": self.n_nonfinite,
        });
        std::fs::write(dir.join("scan.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_gram_schmidt() {
        let b = build_subspace(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 2.0]).unwrap();
        assert_eq!(b.u_hat, vec![1.0, 0.0]);
        assert_eq!(b.v_hat, vec![0.0, 1.0]);
        assert_eq!(b.coords_w3, (0.0, 2.0));
        assert_eq!(b.point(0.0, 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn collinear_rejected() {
        let r = build_subspace(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], &[3.0, 3.0, 3.0]);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(-0.3, 0.7, 7);
        assert_eq!(v[0], -0.3);
        assert_eq!(v[6], 0.7);
    }

    #[test]
    fn default_ranges_pad() {
        let b = build_subspace(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 2.0]).unwrap();
        let ((a0, a1), (b0, b1)) = b.default_ranges();
        assert!((a0 + 0.2).abs() < 1e-15 && (a1 - 1.2).abs() < 1e-15);
        assert!((b0 + 0.4).abs() < 1e-15 && (b1 - 2.4).abs() < 1e-15);
    }
}
