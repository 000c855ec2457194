//! One explicit substep of source injection, down-gradient transport and
//! settling of the mobile sediment pool.
//!
//! Mobile sediment is stored as thickness (m) per cell and type. The free
//! surface is `η = bed + Σ mobile`. Across each face the higher cell `u`
//! sends type `ℓ` to the lower cell `d`:
//!
//! ```text
//! T = k_ℓ · m(u) · dt · (η_u − η_d) / Δ² · mobile_ℓ(u) / (M(u) + h_active)
//! ```
//!
//! where `m(u)` is the subaerial multiplier when `η_u` is above sea level
//! and `M(u)` the total mobile thickness. Outgoing transfers are scaled down
//! when they would exceed the available mobile sediment, so every transfer
//! moves mass between two cells and the pool is conserved exactly. After
//! transport a fraction `1 − exp(−r_ℓ dt)` of each type settles into the bed.

use super::config::ForwardConfig;
use crate::error::{Error, Result};
use crate::grid_state::GridSpec;

/// Adds `rate · dt` (m³) of sediment, spread evenly over the source cells and
/// split by `composition`, to the mobile pool (stored as thickness).
pub fn apply_source(
    grid: &GridSpec,
    mobile: &mut [[f64; 4]],
    rate: f64,
    mask: &[bool],
    composition: [f64; 4],
    dt: f64,
) -> Result<()> {
    let n_src = mask.iter().filter(|m| **m).count();
    if n_src == 0 {
        return Err(Error::invalid("source mask selects no cells"));
    }
    if !(rate >= 0.0) {
        return Err(Error::invalid(format!("sediment supply rate must be non-negative, got {rate}")));
    }
    if rate == 0.0 {
        return Ok(());
    }
    let per_cell = rate * dt / n_src as f64 / grid.cell_area();
    for (m, _) in mobile.iter_mut().zip(mask).filter(|(_, on)| **on) {
        for (v, c) in m.iter_mut().zip(composition) {
            *v += per_cell * c;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Face {
    a: usize,
    b: usize,
    inv_d2: f64,
}

/// Reusable buffers for repeated substeps on one grid.
#[derive(Debug, Clone)]
pub(crate) struct TransportWorkspace {
    faces: Vec<Face>,
    eta: Vec<f64>,
    transfer: Vec<[f64; 4]>,
    outgoing: Vec<[f64; 4]>,
}

impl TransportWorkspace {
    pub(crate) fn new(grid: &GridSpec) -> Self {
        let mut faces = Vec::with_capacity(2 * grid.n_cells());
        let (ix2, iy2) = (1.0 / (grid.dx * grid.dx), 1.0 / (grid.dy * grid.dy));
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if i + 1 < grid.nx {
                    faces.push(Face { a: grid.index(i, j), b: grid.index(i + 1, j), inv_d2: ix2 });
                }
                if j + 1 < grid.ny {
                    faces.push(Face { a: grid.index(i, j), b: grid.index(i, j + 1), inv_d2: iy2 });
                }
            }
        }
        let n = grid.n_cells();
        TransportWorkspace {
            transfer: vec![[0.0; 4]; faces.len()],
            faces,
            eta: vec![0.0; n],
            outgoing: vec![[0.0; 4]; n],
        }
    }

    /// Moves mobile sediment in place and adds the settled part to `settled`.
    pub(crate) fn substep(
        &mut self,
        bed: &[f64],
        mobile: &mut [[f64; 4]],
        settled: &mut [[f64; 4]],
        sea_level: f64,
        cfg: &ForwardConfig,
        dt: f64,
    ) {
        for ((e, b), m) in self.eta.iter_mut().zip(bed).zip(mobile.iter()) {
            *e = b + m.iter().sum::<f64>();
        }
        for o in self.outgoing.iter_mut() {
            *o = [0.0; 4];
        }
        for (face, t) in self.faces.iter().zip(self.transfer.iter_mut()) {
            let (ea, eb) = (self.eta[face.a], self.eta[face.b]);
            let (up, drop) = if ea > eb { (face.a, ea - eb) } else { (face.b, eb - ea) };
            let m_up = &mobile[up];
            let total: f64 = m_up.iter().sum();
            let denom = total + cfg.active_thickness;
            if drop == 0.0 || total <= 0.0 || denom <= 0.0 {
                *t = [0.0; 4];
                continue;
            }
            let mult = if self.eta[up] > sea_level { cfg.subaerial_multiplier } else { 1.0 };
            let common = mult * dt * drop * face.inv_d2 / denom;
            for l in 0..4 {
                t[l] = cfg.diffusivity[l] * common * m_up[l];
                self.outgoing[up][l] += t[l];
            }
        }
        // scale factors: reuse `outgoing` to hold min(1, available / outgoing)
        for (o, m) in self.outgoing.iter_mut().zip(mobile.iter()) {
            for l in 0..4 {
                o[l] = if o[l] > m[l] { m[l] / o[l] } else { 1.0 };
            }
        }
        for (face, t) in self.faces.iter().zip(&self.transfer) {
            let (ea, eb) = (self.eta[face.a], self.eta[face.b]);
            let (up, down) = if ea > eb { (face.a, face.b) } else { (face.b, face.a) };
            for l in 0..4 {
                if t[l] == 0.0 {
                    continue;
                }
                let moved = t[l] * self.outgoing[up][l];
                mobile[up][l] -= moved;
                mobile[down][l] += moved;
            }
        }
        let keep = cfg.settling_rate.map(|r| (-r * dt).exp());
        for (m, s) in mobile.iter_mut().zip(settled.iter_mut()) {
            for l in 0..4 {
                // clamp rounding residue from exact-capacity transfers
                if m[l] < 0.0 {
                    m[l] = 0.0;
                }
                let remain = m[l] * keep[l];
                s[l] += m[l] - remain;
                m[l] = remain;
            }
        }
    }
}

/// Pure single-substep wrapper: returns the new mobile pool and the
/// thickness settled per type during `dt`.
pub fn diffuse_and_deposit(
    grid: &GridSpec,
    bed: &[f64],
    mobile: &[[f64; 4]],
    sea_level: f64,
    cfg: &ForwardConfig,
    dt: f64,
) -> Result<(Vec<[f64; 4]>, Vec<[f64; 4]>)> {
    cfg.check_cfl(grid, dt)?;
    let n = grid.n_cells();
    if bed.len() != n || mobile.len() != n {
        return Err(Error::invalid("bed and mobile fields must match the grid"));
    }
    let mut ws = TransportWorkspace::new(grid);
    let mut m = mobile.to_vec();
    let mut settled = vec![[0.0; 4]; n];
    ws.substep(bed, &mut m, &mut settled, sea_level, cfg, dt);
    Ok((m, settled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::config::landward_edge_mask;

    fn no_settling(grid: &GridSpec) -> ForwardConfig {
        let mut cfg = ForwardConfig::with_landward_source(grid);
        cfg.settling_rate = [0.0; 4];
        cfg.active_thickness = 0.0;
        cfg
    }

    #[test]
    fn source_injection_arithmetic() {
        let g = GridSpec::new(2, 2, 1.0, 1.0).unwrap();
        let mask = landward_edge_mask(&g);
        let mut mobile = vec![[0.0; 4]; 4];
        apply_source(&g, &mut mobile, 10.0, &mask, [0.25; 4], 1.0).unwrap();
        for idx in 0..4 {
            let vol: f64 = mobile[idx].iter().sum::<f64>() * g.cell_area();
            assert_eq!(vol, if mask[idx] { 5.0 } else { 0.0 });
            if mask[idx] {
                assert!(mobile[idx].iter().all(|v| *v == 1.25));
            }
        }
    }

    #[test]
    fn zero_rate_and_empty_mask() {
        let g = GridSpec::new(2, 1, 1.0, 1.0).unwrap();
        let mut mobile = vec![[0.1; 4]; 2];
        let before = mobile.clone();
        apply_source(&g, &mut mobile, 0.0, &[true, false], [0.25; 4], 3.0).unwrap();
        assert_eq!(mobile, before);
        assert!(apply_source(&g, &mut mobile, 1.0, &[false, false], [0.25; 4], 1.0).is_err());
    }

    #[test]
    fn uniform_surface_has_no_flux() {
        let g = GridSpec::new(5, 3, 100.0, 100.0).unwrap();
        let cfg = no_settling(&g);
        let mobile = vec![[0.2, 0.1, 0.3, 0.4]; g.n_cells()];
        let bed = vec![1.0; g.n_cells()];
        let (m, settled) = diffuse_and_deposit(&g, &bed, &mobile, 0.0, &cfg, 1.0).unwrap();
        assert_eq!(m, mobile);
        assert!(settled.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn two_cell_hand_calculation() {
        // bed (0, 0), one type with mobile thickness h in cell 1 -> surface (h, 0).
        let g = GridSpec::new(2, 1, 100.0, 100.0).unwrap();
        let mut cfg = no_settling(&g);
        cfg.subaerial_multiplier = 1.0;
        let h = 2.0;
        let k = cfg.diffusivity[3];
        let dt = 5.0;
        let mobile = vec![[0.0, 0.0, 0.0, h], [0.0; 4]];
        let (m, _) = diffuse_and_deposit(&g, &[0.0, 0.0], &mobile, 0.0, &cfg, dt).unwrap();
        let flux = k * dt * h / (100.0 * 100.0);
        assert!((m[1][3] - flux).abs() < 1e-15);
        assert!((m[0][3] - (h - flux)).abs() < 1e-15);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = GridSpec::new(2, 1, 100.0, 100.0).unwrap();
        let cfg = no_settling(&g);
        let err = diffuse_and_deposit(&g, &[0.0, 0.0], &[[0.0; 4]; 2], 0.0, &cfg, 1e3).unwrap_err();
        assert!(matches!(err, Error::Cfl { .. }));
    }

    #[test]
    fn transport_conserves_mass() {
        let g = GridSpec::new(6, 4, 50.0, 70.0).unwrap();
        let cfg = ForwardConfig::with_landward_source(&g);
        let bed: Vec<f64> = (0..g.n_cells()).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let mobile: Vec<[f64; 4]> = (0..g.n_cells()).map(|i| [0.1 * (i % 3) as f64, 0.05, 0.0, 0.2]).collect();
        let dt = cfg.max_stable_substep(&g);
        let (m, s) = diffuse_and_deposit(&g, &bed, &mobile, 0.5, &cfg, dt).unwrap();
        let before: f64 = mobile.iter().flatten().sum();
        let after: f64 = m.iter().flatten().sum::<f64>() + s.iter().flatten().sum::<f64>();
        assert!((before - after).abs() < 1e-12 * before);
        assert!(m.iter().flatten().all(|v| *v >= 0.0));
    }
}
