//! Exports for 2-D penultimate spaces: per-sample activation angles,
//! per-class vMF densities on a fixed angular grid, and an SVG composing both.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::Dataset;
use crate::activation_model::ClassActivationModel;
use crate::directional::UnitVector;
use crate::error::{Error, Result};
use crate::nn::Network;

pub const VIZ_DENSITY_ANGLES: usize = 720;

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

#[derive(Debug, Clone)]
pub struct VizFiles {
    pub activations_csv: PathBuf,
    pub density_csv: PathBuf,
    pub svg: Option<PathBuf>,
}

/// Write `activations.csv`, `density.csv` and optionally `polar.svg` into `out_dir`.
///
/// `activations.csv`: `index,label,angle_rad,norm` per sample.
/// `density.csv`: `class,angle_rad,density` at 720 equally spaced angles per class.
pub fn viz_export(net: &Network, ds: &Dataset, model: &ClassActivationModel, out_dir: impl AsRef<Path>, svg: bool) -> Result<VizFiles> {
    if net.penultimate_dim() != 2 {
        return Err(Error::UnsupportedDimension(net.penultimate_dim()));
    }
    if model.dim() != 2 {
        return Err(Error::UnsupportedDimension(model.dim()));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let penult = net.penultimate_batch(ds.features.view())?;
    let mut act = String::from("index,label,angle_rad,norm\n");
    let mut points = Vec::with_capacity(ds.len());
    for (i, row) in penult.rows().into_iter().enumerate() {
        let angle = row[1].atan2(row[0]);
        let n = row[0].hypot(row[1]);
        let _ = writeln!(act, "{i},{},{angle},{n}", ds.labels[i]);
        points.push((angle, ds.labels[i]));
    }
    let activations_csv = out_dir.join("activations.csv");
    fs::write(&activations_csv, act).map_err(|e| Error::io(&activations_csv, e))?;

    let curves = density_curves(model)?;
    let mut dens = String::from("class,angle_rad,density\n");
    for (class, curve) in curves.iter().enumerate() {
        for &(angle, p) in curve {
            let _ = writeln!(dens, "{class},{angle},{p}");
        }
    }
    let density_csv = out_dir.join("density.csv");
    fs::write(&density_csv, dens).map_err(|e| Error::io(&density_csv, e))?;

    let svg = if svg {
        let path = out_dir.join("polar.svg");
        fs::write(&path, render_svg(&points, &curves)).map_err(|e| Error::io(&path, e))?;
        Some(path)
    } else {
        None
    };
    Ok(VizFiles { activations_csv, density_csv, svg })
}

/// `(angle, density)` at [`VIZ_DENSITY_ANGLES`] points on `[-π, π)` per class.
pub(crate) fn density_curves(model: &ClassActivationModel) -> Result<Vec<Vec<(f64, f64)>>> {
    (0..model.class_count())
        .map(|class| {
            let dist = model.component(class)?;
            (0..VIZ_DENSITY_ANGLES)
                .map(|k| {
                    let angle = -PI + 2.0 * PI * k as f64 / VIZ_DENSITY_ANGLES as f64;
                    Ok((angle, dist.log_density(&UnitVector::from_angle(angle))?.exp()))
                })
                .collect()
        })
        .collect()
}

/// Angular gap in degrees between each class's mean activation direction
/// and its prototype direction `w̄_i`. `None` for classes absent from `ds`.
pub fn class_alignment_gaps(net: &Network, ds: &Dataset, model: &ClassActivationModel) -> Result<Vec<Option<f64>>> {
    if net.penultimate_dim() != 2 {
        return Err(Error::UnsupportedDimension(net.penultimate_dim()));
    }
    let penult = net.penultimate_batch(ds.features.view())?;
    let c = model.class_count();
    let mut sums = vec![[0.0f64; 2]; c];
    let mut counts = vec![0usize; c];
    for (row, &l) in penult.rows().into_iter().zip(&ds.labels) {
        let n = row[0].hypot(row[1]);
        if n > 0.0 && l < c {
            sums[l][0] += row[0] / n;
            sums[l][1] += row[1] / n;
            counts[l] += 1;
        }
    }
    Ok((0..c)
        .map(|i| {
            (counts[i] > 0).then(|| {
                let mean = sums[i][1].atan2(sums[i][0]);
                let mode = model.class_directions()[i].angle();
                let diff = (mean - mode + PI).rem_euclid(2.0 * PI) - PI;
                diff.abs().to_degrees()
            })
        })
        .collect())
}

fn render_svg(points: &[(f64, usize)], curves: &[Vec<(f64, f64)>]) -> String {
    const SIZE: f64 = 600.0;
    const C: f64 = SIZE / 2.0;
    const R: f64 = 150.0;
    let peak = curves.iter().flatten().map(|(_, p)| *p).fold(0.0, f64::max).max(1e-12);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r##"<circle cx="{C}" cy="{C}" r="{R}" fill="none" stroke="#999" stroke-width="1"/>"##);
    for (class, curve) in curves.iter().enumerate() {
        let mut d = String::new();
        for (k, (angle, p)) in curve.iter().enumerate() {
            let r = R + 120.0 * p / peak;
            let (x, y) = (C + r * angle.cos(), C - r * angle.sin());
            let _ = write!(d, "{}{x:.2},{y:.2} ", if k == 0 { "M" } else { "L" });
        }
        d.push('Z');
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"/>"#, PALETTE[class % PALETTE.len()]);
    }
    for (i, (angle, label)) in points.iter().enumerate() {
        // Small deterministic radial jitter so overlapping dots stay visible.
        let r = R - 8.0 - 24.0 * ((i * 7919) % 97) as f64 / 97.0;
        let (x, y) = (C + r * angle.cos(), C - r * angle.sin());
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.2" fill="{}" fill-opacity="0.6"/>"#, PALETTE[label % PALETTE.len()]);
    }
    s.push_str("</svg>\n");
    s
}
