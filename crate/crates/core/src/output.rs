//! Plain-text and image writers for run logs, solution fields and
//! convergence tables.
//!
//! Heatmaps leave values below 0 or above 1 unpainted (white) so that
//! undershoot and overshoot regions stand out.

use std::io::Write;

use crate::error::Result;
use crate::experiments::ConvergenceTable;
use crate::mesh::Mesh;
use crate::schemes::StepRecord;

/// Per-step log: `step,t,u_min,u_max,dt_lower,dt_upper,mesh_ok,solver_iters`.
pub fn write_step_csv<W: Write>(history: &[StepRecord], mut w: W) -> Result<()> {
    writeln!(w, "step,t,u_min,u_max,dt_lower,dt_upper,mesh_ok,solver_iters")?;
    for r in history {
        writeln!(
            w,
            "{},{},{:e},{:e},{:e},{:e},{},{}",
            r.step, r.t, r.u_min, r.u_max, r.window.dt_lower, r.window.dt_upper, r.window.mesh_ok, r.solver_iters
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Vertex coordinates with the nodal value: `x,y[,z],u`.
pub fn write_point_cloud<W: Write>(mesh: &Mesh, u: &[f64], mut w: W) -> Result<()> {
    let names = ["x", "y", "z"];
    writeln!(w, "{},u", names[..mesh.dim()].join(","))?;
    for (i, ui) in u.iter().enumerate() {
        for c in mesh.vertex(i) {
            write!(w, "{c:e},")?;
        }
        writeln!(w, "{ui:e}")?;
    }
    w.flush()?;
    Ok(())
}

/// `parameter,n_elements,dt,error,exact_error,rate`.
pub fn write_convergence_csv<W: Write>(table: &ConvergenceTable, mut w: W) -> Result<()> {
    writeln!(w, "parameter,n_elements,dt,error,exact_error,rate")?;
    for r in &table.rows {
        let rate = r.rate.map(|x| format!("{x:.6}")).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{:e},{:e},{}",
            r.parameter, r.n_elements, r.dt, r.error, r.exact_error, rate
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Maps `v ∈ [0, 1]` to a blue–cyan–yellow–red ramp.
pub fn colormap(v: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] = [
        [48.0, 18.0, 130.0],
        [33.0, 120.0, 200.0],
        [60.0, 190.0, 150.0],
        [240.0, 220.0, 40.0],
        [200.0, 30.0, 30.0],
    ];
    let x = v.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (STOPS[i][c] + f * (STOPS[i + 1][c] - STOPS[i][c])).round() as u8;
    }
    out
}

fn in_range(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

/// Samples the piecewise linear field on a `width × height` pixel grid over
/// the mesh bounding box (row 0 at the top). Pixels outside the mesh are
/// `None`.
pub fn rasterize(mesh: &Mesh, u: &[f64], width: usize, height: usize) -> Vec<Option<f64>> {
    assert_eq!(mesh.dim(), 2, "rasterize supports 2D meshes");
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..mesh.n_vertices() {
        let p = mesh.vertex(i);
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let dx = (x1 - x0) / width as f64;
    let dy = (y1 - y0) / height as f64;
    let mut out = vec![None; width * height];
    for el in mesh.elements() {
        let p: Vec<&[f64]> = el.iter().map(|&v| mesh.vertex(v)).collect();
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let bx0 = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
        let bx1 = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
        let by0 = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
        let by1 = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
        let c0 = (((bx0 - x0) / dx - 0.5).floor().max(0.0)) as usize;
        let c1 = ((((bx1 - x0) / dx - 0.5).ceil()) as usize).min(width - 1);
        let r0 = (((by0 - y0) / dy - 0.5).floor().max(0.0)) as usize;
        let r1 = ((((by1 - y0) / dy - 0.5).ceil()) as usize).min(height - 1);
        for r in r0..=r1 {
            let y = y0 + (r as f64 + 0.5) * dy;
            for c in c0..=c1 {
                let x = x0 + (c as f64 + 0.5) * dx;
                let l1 = ((x - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (y - p[0][1])) / det;
                let l2 = ((p[1][0] - p[0][0]) * (y - p[0][1]) - (x - p[0][0]) * (p[1][1] - p[0][1])) / det;
                let l0 = 1.0 - l1 - l2;
                let tol = -1e-12;
                if l0 >= tol && l1 >= tol && l2 >= tol {
                    out[(height - 1 - r) * width + c] = Some(l0 * u[el[0]] + l1 * u[el[1]] + l2 * u[el[2]]);
                }
            }
        }
    }
    out
}

/// Binary PPM heatmap.
pub fn write_ppm<W: Write>(mesh: &Mesh, u: &[f64], width: usize, height: usize, mut w: W) -> Result<()> {
    let raster = rasterize(mesh, u, width, height);
    write!(w, "P6\n{width} {height}\n255\n")?;
    let mut bytes = Vec::with_capacity(width * height * 3);
    for v in raster {
        match v {
            Some(v) if in_range(v) => bytes.extend_from_slice(&colormap(v)),
            _ => bytes.extend_from_slice(&[255, 255, 255]),
        }
    }
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// SVG with one filled polygon per element, colored by the element mean.
/// Elements with any vertex value outside `[0, 1]` are left unfilled.
pub fn write_svg<W: Write>(mesh: &Mesh, u: &[f64], width: usize, mut w: W) -> Result<()> {
    assert_eq!(mesh.dim(), 2, "write_svg supports 2D meshes");
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..mesh.n_vertices() {
        let p = mesh.vertex(i);
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let scale = width as f64 / (x1 - x0);
    let height = ((y1 - y0) * scale).ceil() as usize;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )?;
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    for el in mesh.elements() {
        let vals: Vec<f64> = el.iter().map(|&v| u[v]).collect();
        if !vals.iter().all(|&v| in_range(v)) {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let [r, g, b] = colormap(mean);
        let pts: Vec<String> = el
            .iter()
            .map(|&v| {
                let p = mesh.vertex(v);
                format!("{:.2},{:.2}", (p[0] - x0) * scale, (y1 - p[1]) * scale)
            })
            .collect();
        writeln!(
            w,
            r##"<polygon points="{}" fill="#{r:02x}{g:02x}{b:02x}" stroke="none"/>"##,
            pts.join(" ")
        )?;
    }
    writeln!(w, "</svg>")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_structured_mesh, Rect, StructuredMeshKind, StructuredVariant};

    fn unit_mesh() -> Mesh {
        let kind = StructuredMeshKind::new(StructuredVariant::Right45, 4, 4, Rect::new(0.0, 1.0, 0.0, 1.0));
        generate_structured_mesh(&kind).unwrap()
    }

    #[test]
    fn raster_reproduces_linear_field() {
        let m = unit_mesh();
        let u: Vec<f64> = (0..m.n_vertices()).map(|i| m.vertex(i)[0]).collect();
        let r = rasterize(&m, &u, 10, 10);
        for (k, v) in r.iter().enumerate() {
            let x = (k % 10) as f64 / 10.0 + 0.05;
            assert!((v.unwrap() - x).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_is_blank() {
        let m = unit_mesh();
        let u = vec![-0.5; m.n_vertices()];
        let mut buf = Vec::new();
        write_ppm(&m, &u, 4, 4, &mut buf).unwrap();
        assert!(buf[buf.len() - 48..].iter().all(|&b| b == 255));
        let mut svg = Vec::new();
        write_svg(&m, &u, 100, &mut svg).unwrap();
        assert!(!String::from_utf8(svg).unwrap().contains("<polygon"));
    }

    #[test]
    fn colormap_ends() {
        assert_eq!(colormap(0.0), [48, 18, 130]);
        assert_eq!(colormap(1.0), [200, 30, 30]);
    }
}
