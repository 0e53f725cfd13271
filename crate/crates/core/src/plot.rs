//! SVG figures of a result table: observables against the drive frequency, one curve per bias.
//!
//! One pair of figures is written per phonon-bath coupling. `transport_NN.svg` shows the
//! cycle-averaged current, induced power and vibrational occupation; `response_NN.svg`
//! shows the population amplitude and the population and displacement phases. HEOM curves
//! are solid, master-equation curves dashed.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::sweep::{ResultTable, Row};

const TRANSPORT: [(&str, &str); 3] = [
    ("avg_current", "current (e eV/hbar)"),
    ("avg_power", "power (eV^2/hbar)"),
    ("avg_occupation", "occupation <a^dagger a>"),
];

const RESPONSE: [(&str, &str); 3] = [
    ("amp_population", "population amplitude"),
    ("phase_population", "population phase (rad)"),
    ("phase_displacement", "displacement phase (rad)"),
];

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Io(format!("plot: {e}"))
}

/// A run of rows with one solver and bias and increasing drive frequency.
struct Curve<'a> {
    solver: &'a str,
    phi: f64,
    rows: Vec<&'a Row>,
}

fn curves<'a>(rows: &[&'a Row]) -> Vec<Curve<'a>> {
    let mut out: Vec<Curve> = Vec::new();
    for &row in rows {
        let (w, phi) = (row.values[0], row.values[1]);
        let extend = out.iter_mut().rev().find(|c| c.solver == row.solver && c.phi == phi);
        match extend {
            Some(c) if c.rows.last().is_some_and(|r| r.values[0] < w) => c.rows.push(row),
            _ => out.push(Curve {
                solver: &row.solver,
                phi,
                rows: vec![row],
            }),
        }
    }
    out
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1e-12) };
    (lo - pad, hi + pad)
}

fn figure(path: &Path, title: &str, curves: &[Curve], panels: &[(&str, &str); 3]) -> Result<()> {
    let root = SVGBackend::new(path, (720, 960)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let root = root.titled(title, ("sans-serif", 18)).map_err(plot_err)?;
    let x = range(curves.iter().flat_map(|c| c.rows.iter().map(|r| r.values[0])));
    for (area, &(column, label)) in root.split_evenly((3, 1)).iter().zip(panels) {
        let y = range(curves.iter().flat_map(|c| c.rows.iter().filter_map(|r| r.get(column))));
        let mut chart = ChartBuilder::on(area)
            .margin(10)
            .x_label_area_size(36)
            .y_label_area_size(70)
            .build_cartesian_2d(x.0..x.1, y.0..y.1)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .disable_mesh()
            .x_desc("drive frequency (eV)")
            .y_desc(label)
            .draw()
            .map_err(plot_err)?;
        for (k, c) in curves.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<(f64, f64)> = c
                .rows
                .iter()
                .filter_map(|r| Some((r.values[0], r.get(column)?)))
                .filter(|(_, v)| v.is_finite())
                .collect();
            let name = format!("{} phi = {} eV", c.solver, c.phi);
            if c.solver == "fqme" {
                chart
                    .draw_series(DashedLineSeries::new(pts.clone(), 6, 4, color.stroke_width(2)))
                    .map_err(plot_err)?
                    .label(name)
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
            } else {
                chart
                    .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
                    .map_err(plot_err)?
                    .label(name)
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
            }
            chart
                .draw_series(pts.iter().map(|&p| Circle::new(p, 2, color.filled())))
                .map_err(plot_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}

/// Writes the figures of `table` into `dir`; an empty table writes none.
pub fn write_figures(table: &ResultTable, dir: &Path) -> Result<()> {
    let mut lambdas: Vec<f64> = table.rows.iter().map(|r| r.values[2]).collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    for (i, lambda) in lambdas.iter().enumerate() {
        let rows: Vec<&Row> = table.rows.iter().filter(|r| r.values[2] == *lambda).collect();
        let curves = curves(&rows);
        let title = format!("bath coupling {lambda} eV");
        figure(&dir.join(format!("transport_{i:02}.svg")), &title, &curves, &TRANSPORT)?;
        figure(&dir.join(format!("response_{i:02}.svg")), &title, &curves, &RESPONSE)?;
    }
    Ok(())
}
