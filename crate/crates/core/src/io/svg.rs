use std::fmt::Write as _;

use crate::phase_map::{Phase, PhaseMap};

const CELL: f64 = 6.0;
const MARGIN: f64 = 40.0;

/// Dark blue at `t = 0` to yellow at `t = 1`.
fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(30.0, 250.0), lerp(30.0, 220.0), lerp(110.0, 40.0))
}

/// One rectangle per cell, colored by the largest stable transmittance.
/// Bistable cells are white and failed cells grey. Drive increases to the
/// right and the repump rate upwards.
pub fn heatmap_svg(map: &PhaseMap) -> String {
    let (rows, cols) = (map.n_rows(), map.n_cols());
    let width = 2.0 * MARGIN + CELL * cols as f64;
    let height = 2.0 * MARGIN + CELL * rows as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(s, r#"<g id="cells" shape-rendering="crispEdges">"#);
    for r in 0..rows {
        for c in 0..cols {
            let cell = map.cell(r, c);
            let fill = match cell.phase {
                Some(Phase::Bistable) => "#ffffff".to_string(),
                Some(_) => color(cell.transmittances.last().copied().unwrap_or(0.0)),
                None => "#808080".to_string(),
            };
            let x = MARGIN + CELL * c as f64;
            let y = MARGIN + CELL * (rows - 1 - r) as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}"/>"#
            );
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">eta</text>"#,
        width / 2.0,
        height - 12.0
    );
    let repump = match map.spec.repump_param {
        crate::phase_map::RepumpParam::BigG => "G",
        crate::phase_map::RepumpParam::Lambda => "lambda",
    };
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{repump}</text>"#,
        height / 2.0,
        height / 2.0
    );
    s.push_str("</svg>\n");
    s
}
