//! Comparison of two trajectory tables: exact time alignment by default,
//! optional linear interpolation, population differences column by column.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use spinbath_core::exact::Trajectory;

/// A trajectory read back from CSV (wide or long) or taken from memory:
/// times plus one population series per site, qubit first.
pub struct TrajectoryTable {
    pub times: Vec<f64>,
    /// Column-major: columns[site][snapshot].
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl TrajectoryTable {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let n = traj.n_sites();
        let mut columns = vec![Vec::with_capacity(traj.n_snapshots()); n];
        for i in 0..traj.n_snapshots() {
            for (j, p) in traj.populations_at(i).iter().enumerate() {
                columns[j].push(*p);
            }
        }
        TrajectoryTable {
            times: traj.times().to_vec(),
            columns,
            labels: crate::output::population_labels(traj),
        }
    }

    pub fn n_sites(&self) -> usize {
        self.columns.len()
    }
}

pub fn read_trajectory_csv(path: &Path) -> Result<TrajectoryTable> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty file")?;
    let fields: Vec<&str> = header.split(',').collect();
    match fields.as_slice() {
        ["t", "index", "omega", "population"] => read_long(path, lines),
        ["t", "pop_qubit", ..] => read_wide(path, &fields, lines),
        _ => bail!(
            "{}: not a trajectory CSV (header {header:?})",
            path.display()
        ),
    }
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.parse::<f64>()
        .with_context(|| format!("{}: bad number {s:?}", path.display()))
}

fn read_wide<'a>(
    path: &Path,
    fields: &[&str],
    lines: impl Iterator<Item = &'a str>,
) -> Result<TrajectoryTable> {
    let n_cols = fields.len() - 1;
    let labels: Vec<String> = fields[1..].iter().map(|s| s.to_string()).collect();
    let mut times = Vec::new();
    let mut columns = vec![Vec::new(); n_cols];
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        times.push(parse_f64(parts.next().context("missing time")?, path)?);
        let mut count = 0;
        for (j, part) in parts.enumerate() {
            if j >= n_cols {
                bail!("{}: row wider than header", path.display());
            }
            columns[j].push(parse_f64(part, path)?);
            count += 1;
        }
        if count != n_cols {
            bail!("{}: row narrower than header", path.display());
        }
    }
    Ok(TrajectoryTable {
        times,
        columns,
        labels,
    })
}

fn read_long<'a>(path: &Path, lines: impl Iterator<Item = &'a str>) -> Result<TrajectoryTable> {
    // Rows arrive grouped by time with the site index cycling 0..n.
    let mut times: Vec<f64> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let t = parse_f64(parts.next().context("missing time")?, path)?;
        let index: usize = parts
            .next()
            .context("missing index")?
            .parse()
            .with_context(|| format!("{}: bad site index", path.display()))?;
        let _omega = parts.next().context("missing omega")?;
        let p = parse_f64(parts.next().context("missing population")?, path)?;
        if index == 0 {
            times.push(t);
        }
        if index >= columns.len() {
            columns.resize(index + 1, Vec::new());
        }
        columns[index].push(p);
    }
    if times.is_empty() || columns.iter().any(|c| c.len() != times.len()) {
        bail!("{}: ragged or incomplete long rows", path.display());
    }
    let labels = (0..columns.len())
        .map(|j| {
            if j == 0 {
                "pop_qubit".to_string()
            } else {
                format!("pop_spin_{j}")
            }
        })
        .collect();
    Ok(TrajectoryTable {
        times,
        columns,
        labels,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareSummary {
    pub n_times: usize,
    pub n_sites: usize,
    pub interpolated: bool,
    pub max_abs_diff: f64,
    pub mean_abs_diff: f64,
    /// Where the largest difference sits.
    pub argmax_time: f64,
    pub argmax_site: usize,
    pub argmax_label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qubit_rate_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qubit_rate_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_diff: Option<f64>,
}

/// Compare two tables over their common time support.
///
/// Without interpolation the grids must share exact snapshot times (the
/// writers round-trip floats, so re-read times are bitwise). With
/// `interpolate`, `b` is sampled linearly at `a`'s times inside `b`'s
/// support. Disjoint supports are an error either way.
pub fn compare_tables(
    a: &TrajectoryTable,
    b: &TrajectoryTable,
    interpolate: bool,
) -> Result<CompareSummary> {
    if a.n_sites() != b.n_sites() {
        bail!(
            "tables cover different site counts ({} vs {})",
            a.n_sites(),
            b.n_sites()
        );
    }
    if a.times.is_empty() || b.times.is_empty() {
        bail!("empty trajectory table");
    }
    let pairs: Vec<(usize, PointB)> = if interpolate {
        align_interpolated(a, b)
    } else {
        align_exact(a, b)
    };
    if pairs.is_empty() {
        let hint = if interpolate {
            ""
        } else {
            " (grids share no exact times; consider --interpolate)"
        };
        bail!("disjoint time supports{hint}");
    }

    let mut max_abs = 0.0f64;
    let mut argmax_time = a.times[pairs[0].0];
    let mut argmax_site = 0usize;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (ia, pb) in &pairs {
        for (site, col) in a.columns.iter().enumerate() {
            let va = col[*ia];
            let vb = pb.value(b, site);
            let d = (va - vb).abs();
            sum += d;
            count += 1;
            if d > max_abs {
                max_abs = d;
                argmax_time = a.times[*ia];
                argmax_site = site;
            }
        }
    }
    Ok(CompareSummary {
        n_times: pairs.len(),
        n_sites: a.n_sites(),
        interpolated: interpolate,
        max_abs_diff: max_abs,
        mean_abs_diff: sum / count as f64,
        argmax_time,
        argmax_site,
        argmax_label: a
            .labels
            .get(argmax_site)
            .cloned()
            .unwrap_or_else(|| argmax_site.to_string()),
        qubit_rate_a: None,
        qubit_rate_b: None,
        rate_diff: None,
    })
}

/// A point of `b` aligned to one of `a`'s times: either an exact row or
/// an interpolation between two rows.
enum PointB {
    Exact(usize),
    Lerp { i0: usize, i1: usize, w: f64 },
}

impl PointB {
    fn value(&self, b: &TrajectoryTable, site: usize) -> f64 {
        match *self {
            PointB::Exact(i) => b.columns[site][i],
            PointB::Lerp { i0, i1, w } => (1.0 - w) * b.columns[site][i0] + w * b.columns[site][i1],
        }
    }
}

fn align_exact(a: &TrajectoryTable, b: &TrajectoryTable) -> Vec<(usize, PointB)> {
    // Both time lists are sorted; merge-scan for equal values.
    let mut out = Vec::new();
    let mut ib = 0usize;
    for (ia, &ta) in a.times.iter().enumerate() {
        while ib < b.times.len() && b.times[ib] < ta {
            ib += 1;
        }
        if ib < b.times.len() && b.times[ib] == ta {
            out.push((ia, PointB::Exact(ib)));
        }
    }
    out
}

fn align_interpolated(a: &TrajectoryTable, b: &TrajectoryTable) -> Vec<(usize, PointB)> {
    let (lo, hi) = (b.times[0], b.times[b.times.len() - 1]);
    let mut out = Vec::new();
    let mut ib = 0usize;
    for (ia, &ta) in a.times.iter().enumerate() {
        if ta < lo || ta > hi {
            continue;
        }
        while ib + 1 < b.times.len() && b.times[ib + 1] < ta {
            ib += 1;
        }
        if b.times[ib] == ta {
            out.push((ia, PointB::Exact(ib)));
        } else {
            let i1 = (ib + 1).min(b.times.len() - 1);
            if i1 == ib {
                out.push((ia, PointB::Exact(ib)));
            } else {
                let w = (ta - b.times[ib]) / (b.times[i1] - b.times[ib]);
                out.push((ia, PointB::Lerp { i0: ib, i1, w }));
            }
        }
    }
    out
}

/// Fit ln p₀ on [start, end] for both tables and record the rate gap.
pub fn attach_rate_comparison(
    summary: &mut CompareSummary,
    a: &TrajectoryTable,
    b: &TrajectoryTable,
    start: f64,
    end: f64,
) -> Result<()> {
    let rate_a = fit_rate(a, start, end)?;
    let rate_b = fit_rate(b, start, end)?;
    summary.qubit_rate_a = Some(rate_a);
    summary.qubit_rate_b = Some(rate_b);
    summary.rate_diff = Some(rate_a - rate_b);
    Ok(())
}

fn fit_rate(table: &TrajectoryTable, start: f64, end: f64) -> Result<f64> {
    // Least squares on ln p over [start, end], the same estimator the
    // library applies to live trajectories.
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &t) in table.times.iter().enumerate() {
        if t < start || t > end {
            continue;
        }
        let p = table.columns[0][i];
        if p <= 0.0 {
            bail!("qubit population is not positive at t = {t}; shrink the fit window");
        }
        xs.push(t);
        ys.push(p.ln());
    }
    if xs.len() < 2 {
        bail!("fit window [{start}, {end}] holds fewer than two points");
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(-(sxy / sxx))
}

pub fn render_table(summary: &CompareSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<26} {:>14}", "quantity", "value");
    let _ = writeln!(s, "{:<26} {:>14}", "aligned snapshots", summary.n_times);
    let _ = writeln!(s, "{:<26} {:>14}", "sites compared", summary.n_sites);
    let _ = writeln!(
        s,
        "{:<26} {:>14}",
        "alignment",
        if summary.interpolated {
            "interpolated"
        } else {
            "exact"
        }
    );
    let _ = writeln!(
        s,
        "{:<26} {:>14.3e}",
        "max |Δpopulation|", summary.max_abs_diff
    );
    let _ = writeln!(
        s,
        "{:<26} {:>14.3e}",
        "mean |Δpopulation|", summary.mean_abs_diff
    );
    let _ = writeln!(
        s,
        "{:<26} {:>14}",
        "argmax (t, site)",
        format!("({}, {})", summary.argmax_time, summary.argmax_label)
    );
    if let (Some(ra), Some(rb), Some(rd)) = (
        summary.qubit_rate_a,
        summary.qubit_rate_b,
        summary.rate_diff,
    ) {
        let _ = writeln!(s, "{:<26} {:>14.6e}", "fitted rate (a)", ra);
        let _ = writeln!(s, "{:<26} {:>14.6e}", "fitted rate (b)", rb);
        let _ = writeln!(s, "{:<26} {:>14.3e}", "rate difference", rd);
    }
    s
}
