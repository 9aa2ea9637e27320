//! SVG figures from a trace CSV: the 3D path and error histories for q̃, Ω̃,
//! P̃ and Ṽ. Axis ranges always come from the full trace so decimation only
//! thins the drawn polylines.

use std::ops::Range;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use quadsmc::trace::{read_trace_file, TraceRow};

use crate::CliError;

pub struct Series {
    pub label: &'static str,
    pub points: Vec<(f64, f64)>,
}

pub struct Panel {
    pub file: &'static str,
    pub title: &'static str,
    pub y_label: &'static str,
    pub x_range: Range<f64>,
    pub y_range: Range<f64>,
    pub series: Vec<Series>,
}

pub struct PathFigure {
    /// Plot coordinates `(x, altitude, y)` with altitude `−z`.
    pub actual: Vec<(f64, f64, f64)>,
    pub reference: Vec<(f64, f64, f64)>,
    pub ranges: [Range<f64>; 3],
}

pub struct Figures {
    pub path: PathFigure,
    pub panels: Vec<Panel>,
}

fn padded(values: impl Iterator<Item = f64>) -> Range<f64> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let pad = ((hi - lo) * 0.05).max(1e-9 * lo.abs().max(hi.abs())).max(1e-12);
    lo - pad..hi + pad
}

fn kept(len: usize, decimate: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).step_by(decimate).collect();
    if idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx
}

/// Reference velocity by central differences of the logged reference position.
fn reference_velocity(rows: &[TraceRow]) -> Vec<[f64; 3]> {
    let n = rows.len();
    (0..n)
        .map(|k| {
            let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
            let dt = rows[b].t - rows[a].t;
            let d = (rows[b].position_ref - rows[a].position_ref) / dt;
            [d.x, d.y, d.z]
        })
        .collect()
}

fn panel(
    file: &'static str,
    title: &'static str,
    y_label: &'static str,
    labels: [&'static str; 3],
    t: &[f64],
    values: &[[f64; 3]],
    idx: &[usize],
) -> Panel {
    let series = (0..3)
        .map(|i| Series {
            label: labels[i],
            points: idx.iter().map(|&k| (t[k], values[k][i])).collect(),
        })
        .collect();
    Panel {
        file,
        title,
        y_label,
        x_range: padded(t.iter().copied()),
        y_range: padded(values.iter().flatten().copied()),
        series,
    }
}

pub fn build_figures(rows: &[TraceRow], decimate: usize) -> Result<Figures, CliError> {
    if rows.len() < 2 {
        return Err(CliError::Trace(
            "trace needs at least two samples to plot".into(),
        ));
    }
    if decimate == 0 {
        return Err(CliError::Config("--decimate must be at least 1".into()));
    }
    let idx = kept(rows.len(), decimate);
    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();

    let mut q_err = Vec::with_capacity(rows.len());
    for r in rows {
        let q = r.attitude_error().ok_or_else(|| {
            CliError::Trace(format!("t = {}: attitude or desired attitude is not a unit quaternion", r.t))
        })?;
        let v = q.vector();
        q_err.push([v.x, v.y, v.z]);
    }
    let w_err: Vec<[f64; 3]> = rows.iter().map(|r| r.omega_error().into()).collect();
    let p_err: Vec<[f64; 3]> = rows.iter().map(|r| r.position_error().into()).collect();
    let v_err: Vec<[f64; 3]> = rows
        .iter()
        .zip(reference_velocity(rows))
        .map(|(r, vd)| [r.velocity.x - vd[0], r.velocity.y - vd[1], r.velocity.z - vd[2]])
        .collect();

    let to3 = |p: &quadsmc::Vec3| (p.x, -p.z, p.y);
    let all: Vec<(f64, f64, f64)> = rows
        .iter()
        .flat_map(|r| [to3(&r.position), to3(&r.position_ref)])
        .collect();
    let path = PathFigure {
        actual: idx.iter().map(|&k| to3(&rows[k].position)).collect(),
        reference: idx.iter().map(|&k| to3(&rows[k].position_ref)).collect(),
        ranges: [
            padded(all.iter().map(|p| p.0)),
            padded(all.iter().map(|p| p.1)),
            padded(all.iter().map(|p| p.2)),
        ],
    };

    let panels = vec![
        panel("attitude_error", "Attitude error q~ (vector part)", "q~", ["q~1", "q~2", "q~3"], &t, &q_err, &idx),
        panel("omega_error", "Angular velocity error Theta + Psi", "rad/s", ["x", "y", "z"], &t, &w_err, &idx),
        panel("position_error", "Position error P - P_d", "m", ["x", "y", "z"], &t, &p_err, &idx),
        panel("velocity_error", "Velocity error V - dP_d/dt", "m/s", ["x", "y", "z"], &t, &v_err, &idx),
    ];
    Ok(Figures { path, panels })
}

const COLORS: [RGBColor; 3] = [RGBColor(200, 30, 30), RGBColor(30, 130, 30), RGBColor(30, 60, 200)];

fn draw_err<E: std::fmt::Debug>(file: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e:?}", file.display()))
}

fn render_panel(p: &Panel, file: &Path) -> Result<(), CliError> {
    let root = SVGBackend::new(file, (900, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err(file))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(p.title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(p.x_range.clone(), p.y_range.clone())
        .map_err(draw_err(file))?;
    chart
        .configure_mesh()
        .x_desc("t (s)")
        .y_desc(p.y_label)
        .draw()
        .map_err(draw_err(file))?;
    for (s, color) in p.series.iter().zip(COLORS) {
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), color))
            .map_err(draw_err(file))?
            .label(s.label)
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 18, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err(file))?;
    root.present().map_err(draw_err(file))
}

fn render_path(f: &PathFigure, file: &Path) -> Result<(), CliError> {
    let root = SVGBackend::new(file, (800, 700)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err(file))?;
    let [xr, hr, yr] = f.ranges.clone();
    let mut chart = ChartBuilder::on(&root)
        .caption("3D path (x north, y east, vertical -z)", ("sans-serif", 20))
        .margin(20)
        .build_cartesian_3d(xr, hr, yr)
        .map_err(draw_err(file))?;
    chart.with_projection(|mut p| {
        p.yaw = 0.6;
        p.pitch = 0.35;
        p.scale = 0.85;
        p.into_matrix()
    });
    chart.configure_axes().draw().map_err(draw_err(file))?;
    chart
        .draw_series(LineSeries::new(f.reference.iter().copied(), COLORS[2]))
        .map_err(draw_err(file))?
        .label("reference")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 18, y)], COLORS[2]));
    chart
        .draw_series(LineSeries::new(f.actual.iter().copied(), COLORS[0]))
        .map_err(draw_err(file))?
        .label("vehicle")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 18, y)], COLORS[0]));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err(file))?;
    root.present().map_err(draw_err(file))
}

pub fn render(figs: &Figures, out: &Path, stem: &str) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let path_file = out.join(format!("{stem}_path.svg"));
    render_path(&figs.path, &path_file)?;
    let mut files = vec![path_file];
    for p in &figs.panels {
        let file = out.join(format!("{stem}_{}.svg", p.file));
        render_panel(p, &file)?;
        files.push(file);
    }
    Ok(files)
}

pub fn plot_file(trace: &Path, decimate: usize, out: &Path, stem: &str) -> Result<Vec<PathBuf>, CliError> {
    let rows = read_trace_file(trace).map_err(|e| CliError::Trace(format!("{}: {e}", trace.display())))?;
    render(&build_figures(&rows, decimate)?, out, stem)
}

pub fn cmd_plot(trace: &Path, decimate: usize, out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => trace
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    let stem = trace
        .file_stem()
        .map_or("trace".into(), |s| s.to_string_lossy().into_owned());
    plot_file(trace, decimate, &dir, &stem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use quadsmc::trace::COLUMNS;

    fn rows(n: usize) -> Vec<TraceRow> {
        (0..n)
            .map(|k| {
                let t = k as f64 * 0.01;
                let mut f = [0.0; COLUMNS];
                f[0] = t;
                f[1] = t.sin();
                f[3] = -t;
                f[4] = t.cos();
                f[6] = -1.0;
                f[10] = 1.0; // q0
                f[30] = 1.0; // qd0
                f[14] = t.sin() + 0.1 * (-t).exp();
                f[16] = -t;
                TraceRow::from_fields(&f)
            })
            .collect()
    }

    #[test]
    fn decimation_thins_points_but_keeps_ranges() {
        let r = rows(1001);
        let full = build_figures(&r, 1).unwrap();
        let thin = build_figures(&r, 10).unwrap();
        assert_eq!(full.panels.len(), 4);
        for (a, b) in full.panels.iter().zip(&thin.panels) {
            assert_eq!(a.x_range, b.x_range);
            assert_eq!(a.y_range, b.y_range);
            for (sa, sb) in a.series.iter().zip(&b.series) {
                assert_eq!(sa.points.len(), 1001);
                assert_eq!(sb.points.len(), 101);
                assert_eq!(sa.points.last(), sb.points.last());
            }
        }
        assert_eq!(full.path.ranges, thin.path.ranges);
        assert!(thin.path.actual.len() < full.path.actual.len());
    }

    #[test]
    fn last_sample_is_always_kept() {
        assert_eq!(kept(10, 4), vec![0, 4, 8, 9]);
        assert_eq!(kept(9, 4), vec![0, 4, 8]);
        assert_eq!(kept(3, 100), vec![0, 2]);
    }

    #[test]
    fn velocity_error_uses_reference_derivative() {
        let r = rows(2001);
        let figs = build_figures(&r, 1).unwrap();
        let v = &figs.panels[3];
        // V = (cos t, 0, -1), dP_d/dt = (cos t - 0.1 e^-t, 0, -1)
        for &(t, e) in &v.series[0].points[1..2000] {
            assert!((e - 0.1 * (-t).exp()).abs() < 1e-4, "t={t} e={e}");
        }
        assert!(v.series[2].points[1..2000].iter().all(|p| p.1.abs() < 1e-9));
    }

    #[test]
    fn single_sample_is_rejected() {
        assert!(matches!(build_figures(&rows(1), 1), Err(CliError::Trace(_))));
    }
}
