//! The SPH right-hand side: closed-form density with integration constant,
//! barotropic EOS, pressure and wall forces, anti-clump term, Shepard filter,
//! and conserved-quantity diagnostics.
//!
//! Every per-particle sum runs over the ascending-index neighbor list and
//! accumulates left to right, so results are bitwise reproducible for any
//! thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SphError;
use crate::kernel::Kernel;
use crate::math::Vec2;
use crate::neighbors::CellGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticleKind {
    Fluid,
    /// Fixed particle included in density and pressure sums (dissipative wall).
    WallDummy,
    /// Fixed particle interacting only through the Lennard-Jones wall force.
    WallLj,
}

impl ParticleKind {
    /// Participates in density and pressure sums.
    pub fn in_fluid_sums(self) -> bool {
        matches!(self, ParticleKind::Fluid | ParticleKind::WallDummy)
    }
}

/// Structure-of-arrays particle state. Particles are never reordered during a
/// run; index order is the canonical summation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub masses: Vec<f64>,
    pub densities: Vec<f64>,
    /// Integration constants C_a = rho0 - rho_a(0); set once, never mutated.
    pub density_offsets: Vec<f64>,
    pub kinds: Vec<ParticleKind>,
}

impl ParticleSystem {
    pub fn new() -> ParticleSystem {
        ParticleSystem {
            positions: Vec::new(),
            velocities: Vec::new(),
            masses: Vec::new(),
            densities: Vec::new(),
            density_offsets: Vec::new(),
            kinds: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, position: Vec2, velocity: Vec2, mass: f64, kind: ParticleKind) {
        self.positions.push(position);
        self.velocities.push(velocity);
        self.masses.push(mass);
        self.densities.push(0.0);
        self.density_offsets.push(0.0);
        self.kinds.push(kind);
    }

    pub fn fluid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == ParticleKind::Fluid)
            .map(|(i, _)| i)
    }

    pub fn fluid_count(&self) -> usize {
        self.fluid_indices().count()
    }

    pub fn has_kind(&self, kind: ParticleKind) -> bool {
        self.kinds.iter().any(|k| *k == kind)
    }
}

impl Default for ParticleSystem {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    /// Reference density rho0.
    pub rho0: f64,
    /// Numerical sound speed c.
    pub sound_speed: f64,
    /// Gravitational acceleration (acts in -y on fluid particles).
    pub gravity: f64,
    /// Lennard-Jones wall energy scale.
    pub e_wall: f64,
    /// Lennard-Jones wall cutoff radius.
    pub r_wall: f64,
    /// Anti-clump pressure p0; 0 disables the term.
    pub p0_anticlump: f64,
}

impl FluidParams {
    pub fn validate(&self) -> Result<(), SphError> {
        let ok = self.rho0 > 0.0
            && self.sound_speed > 0.0
            && self.gravity >= 0.0
            && self.e_wall >= 0.0
            && self.r_wall > 0.0
            && self.p0_anticlump >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(SphError::Config(format!("invalid fluid parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DensityMode {
    Raw,
    #[default]
    Offset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WallModel {
    #[default]
    None,
    Dummy,
    LennardJones,
}

/// Time-stamped conserved-quantity record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub kinetic: f64,
    pub internal: f64,
    pub gravitational: f64,
    pub wall: f64,
    pub total: f64,
    pub momentum: Vec2,
    pub angular_momentum: f64,
    pub min_density: f64,
    pub max_density: f64,
    /// Kinetic energy discarded so far by clamping dummy-wall velocities.
    pub dissipated: f64,
    pub entropy: Option<f64>,
    pub fitted_temperature: Option<f64>,
    pub equilibrium_entropy: Option<f64>,
}

pub fn build_grid(ps: &ParticleSystem, support_radius: f64) -> Result<CellGrid, SphError> {
    Ok(CellGrid::build(&ps.positions, support_radius)?)
}

pub fn neighbor_lists(ps: &ParticleSystem, support_radius: f64) -> Result<Vec<Vec<usize>>, SphError> {
    let grid = build_grid(ps, support_radius)?;
    Ok(grid.neighbor_lists(support_radius))
}

/// Closed-form density: rho_a = sum_b m_b w(r_ab) over the particle itself
/// and its fluid/dummy neighbors; Lennard-Jones wall particles are excluded
/// from the sum. Offset mode adds the integration constant C_a.
pub fn compute_density(
    ps: &mut ParticleSystem,
    lists: &[Vec<usize>],
    kernel: &Kernel,
    mode: DensityMode,
) -> Result<(), SphError> {
    let positions = &ps.positions;
    let masses = &ps.masses;
    let kinds = &ps.kinds;
    let offsets = &ps.density_offsets;
    let rho0_placeholder = 1.0;
    let new_densities: Vec<f64> = (0..ps.len())
        .into_par_iter()
        .map(|a| {
            if !kinds[a].in_fluid_sums() {
                // LJ wall particles carry no density of their own.
                return rho0_placeholder;
            }
            let mut rho = masses[a] * kernel.w(0.0);
            for &b in &lists[a] {
                if kinds[b].in_fluid_sums() {
                    let r = (positions[a] - positions[b]).norm();
                    rho += masses[b] * kernel.w(r);
                }
            }
            if mode == DensityMode::Offset {
                rho += offsets[a];
            }
            rho
        })
        .collect();
    for (a, &rho) in new_densities.iter().enumerate() {
        if ps.kinds[a].in_fluid_sums() && rho <= 0.0 {
            return Err(SphError::NonPositiveDensity {
                particle: a,
                density: rho,
            });
        }
    }
    ps.densities = new_densities;
    Ok(())
}

/// Fix the integration constants C_a = rho0 - rho_a|_{t=0} from the current
/// (raw) densities. Call exactly once, at initialization.
pub fn set_density_offsets(
    ps: &mut ParticleSystem,
    lists: &[Vec<usize>],
    kernel: &Kernel,
    rho0: f64,
) -> Result<(), SphError> {
    ps.density_offsets = vec![0.0; ps.len()];
    compute_density(ps, lists, kernel, DensityMode::Raw)?;
    ps.density_offsets = ps
        .densities
        .iter()
        .zip(&ps.kinds)
        .map(|(&rho, kind)| if kind.in_fluid_sums() { rho0 - rho } else { 0.0 })
        .collect();
    compute_density(ps, lists, kernel, DensityMode::Offset)?;
    Ok(())
}

/// Barotropic (Tait) equation of state.
pub fn eos_pressure(rho: f64, p: &FluidParams) -> f64 {
    debug_assert!(rho > 0.0);
    let c2 = p.sound_speed * p.sound_speed;
    let ratio = rho / p.rho0;
    c2 * p.rho0 / 7.0 * (ratio.powi(7) - 1.0)
}

/// Specific internal energy per unit mass, the antiderivative of p/rho^2.
pub fn internal_energy_density(rho: f64, p: &FluidParams) -> f64 {
    debug_assert!(rho > 0.0);
    let c2 = p.sound_speed * p.sound_speed;
    let ratio = rho / p.rho0;
    c2 / 42.0 * (ratio.powi(6) + 6.0 * p.rho0 / rho)
}

/// Signed magnitude of the Lennard-Jones wall force on a fluid particle,
/// along the unit vector pointing from the wall particle to the fluid
/// particle (positive = repulsive). Zero beyond r_wall.
pub fn lj_wall_force(r_ab: f64, p: &FluidParams) -> Result<f64, SphError> {
    if r_ab <= 0.0 {
        return Err(SphError::WallPenetration { particle: usize::MAX });
    }
    let s = (p.r_wall / r_ab).max(1.0);
    let s2 = s * s;
    Ok(-(p.e_wall / r_ab) * s2 * (1.0 - s2))
}

/// Pair potential whose negative radial derivative is `lj_wall_force`.
/// Vanishes continuously (with its derivative) at r = r_wall.
pub fn lj_wall_potential(r_ab: f64, p: &FluidParams) -> f64 {
    if r_ab >= p.r_wall {
        return 0.0;
    }
    let s2 = (p.r_wall / r_ab).powi(2);
    0.25 * p.e_wall * (s2 - 1.0) * (s2 - 1.0)
}

#[derive(Debug, Clone)]
pub struct ForceResult {
    pub accelerations: Vec<Vec2>,
    /// Pairs skipped because of coincident positions (e_ab undefined).
    pub coincident_pairs: usize,
}

/// Acceleration of every particle: symmetric pressure term, gravity,
/// Lennard-Jones wall force, and the anti-clump term when p0 > 0.
///
/// Dummy-wall particles get a full pressure acceleration (the integrator
/// discards it and logs the dissipated energy); LJ wall particles get zero.
pub fn compute_acceleration(
    ps: &ParticleSystem,
    lists: &[Vec<usize>],
    kernel: &Kernel,
    params: &FluidParams,
    anticlump: Option<&Kernel>,
) -> Result<ForceResult, SphError> {
    let pressures: Vec<f64> = ps
        .densities
        .iter()
        .zip(&ps.kinds)
        .map(|(&rho, kind)| {
            if kind.in_fluid_sums() {
                eos_pressure(rho, params)
            } else {
                0.0
            }
        })
        .collect();

    let results: Vec<Result<(Vec2, usize), SphError>> = (0..ps.len())
        .into_par_iter()
        .map(|a| {
            let kind_a = ps.kinds[a];
            if kind_a == ParticleKind::WallLj {
                return Ok((Vec2::default(), 0));
            }
            let mut acc = Vec2::default();
            let mut coincident = 0usize;
            let pa = ps.positions[a];
            let rho_a = ps.densities[a];
            let p_over_rho2_a = pressures[a] / (rho_a * rho_a);
            for &b in &lists[a] {
                let dr = pa - ps.positions[b];
                let r = dr.norm();
                if r == 0.0 {
                    coincident += 1;
                    continue;
                }
                let e_ab = dr / r;
                match ps.kinds[b] {
                    ParticleKind::Fluid | ParticleKind::WallDummy => {
                        let rho_b = ps.densities[b];
                        let sym = p_over_rho2_a + pressures[b] / (rho_b * rho_b);
                        // Repulsive for positive pressures with e_ab = (r_a - r_b)/r.
                        acc += e_ab * (-ps.masses[b] * sym * kernel.dw(r));
                        if let Some(ak) = anticlump {
                            let p0 = params.p0_anticlump;
                            let sym0 = p0 / (rho_a * rho_a) + p0 / (rho_b * rho_b);
                            acc += e_ab * (-ps.masses[b] * sym0 * ak.dw(r));
                        }
                    }
                    ParticleKind::WallLj => {
                        if kind_a == ParticleKind::Fluid && r < params.r_wall {
                            let f = lj_wall_force(r, params).map_err(|_| {
                                SphError::WallPenetration { particle: a }
                            })?;
                            acc += e_ab * (f / ps.masses[a]);
                        }
                    }
                }
            }
            if kind_a == ParticleKind::Fluid {
                acc.y -= params.gravity;
            }
            Ok((acc, coincident))
        })
        .collect();

    let mut accelerations = Vec::with_capacity(ps.len());
    let mut coincident_pairs = 0;
    for r in results {
        let (acc, c) = r?;
        accelerations.push(acc);
        coincident_pairs += c;
    }
    Ok(ForceResult {
        accelerations,
        coincident_pairs,
    })
}

/// Total energy, momentum, and angular momentum. Densities must be current.
pub fn total_energy(
    ps: &ParticleSystem,
    lists: &[Vec<usize>],
    kernel: &Kernel,
    params: &FluidParams,
    wall_model: WallModel,
    t: f64,
) -> DiagnosticsRecord {
    let _ = kernel;
    let mut kinetic = 0.0;
    let mut internal = 0.0;
    let mut gravitational = 0.0;
    let mut momentum = Vec2::default();
    let mut angular = 0.0;
    let mut min_density = f64::INFINITY;
    let mut max_density = f64::NEG_INFINITY;
    for a in 0..ps.len() {
        match ps.kinds[a] {
            ParticleKind::Fluid => {
                let m = ps.masses[a];
                let v = ps.velocities[a];
                kinetic += 0.5 * m * v.norm_squared();
                internal += m * internal_energy_density(ps.densities[a], params);
                gravitational += m * params.gravity * ps.positions[a].y;
                momentum += v * m;
                angular += m * ps.positions[a].cross(v);
                min_density = min_density.min(ps.densities[a]);
                max_density = max_density.max(ps.densities[a]);
            }
            ParticleKind::WallDummy => {
                // Dummy walls take part in the energy balance like fluid at rest.
                internal += ps.masses[a] * internal_energy_density(ps.densities[a], params);
            }
            ParticleKind::WallLj => {}
        }
    }
    let mut wall = 0.0;
    if wall_model == WallModel::LennardJones {
        for a in 0..ps.len() {
            if ps.kinds[a] != ParticleKind::Fluid {
                continue;
            }
            for &b in &lists[a] {
                if ps.kinds[b] == ParticleKind::WallLj {
                    let r = (ps.positions[a] - ps.positions[b]).norm();
                    wall += lj_wall_potential(r, params);
                }
            }
        }
    }
    DiagnosticsRecord {
        t,
        kinetic,
        internal,
        gravitational,
        wall,
        total: kinetic + internal + gravitational + wall,
        momentum,
        angular_momentum: angular,
        min_density,
        max_density,
        dissipated: 0.0,
        entropy: None,
        fitted_temperature: None,
        equilibrium_entropy: None,
    }
}

/// Right-hand side of the standard (STD) scheme's density ODE:
/// d rho_a / dt = sum_b m_b (u_a - u_b) . e_ab w'(r_ab).
pub fn standard_density_rate(ps: &ParticleSystem, lists: &[Vec<usize>], kernel: &Kernel) -> Vec<f64> {
    (0..ps.len())
        .into_par_iter()
        .map(|a| {
            if !ps.kinds[a].in_fluid_sums() {
                return 0.0;
            }
            let mut rate = 0.0;
            let pa = ps.positions[a];
            let ua = ps.velocities[a];
            for &b in &lists[a] {
                if !ps.kinds[b].in_fluid_sums() {
                    continue;
                }
                let dr = pa - ps.positions[b];
                let r = dr.norm();
                if r == 0.0 {
                    continue;
                }
                rate += ps.masses[b] * (ua - ps.velocities[b]).dot(dr / r) * kernel.dw(r);
            }
            rate
        })
        .collect()
}

/// Shepard-filtered velocity field. The particle system itself is untouched;
/// active filtering assigns the result back explicitly.
pub fn shepard_filter(ps: &ParticleSystem, lists: &[Vec<usize>], kernel: &Kernel) -> Vec<Vec2> {
    (0..ps.len())
        .into_par_iter()
        .map(|a| {
            if !ps.kinds[a].in_fluid_sums() {
                return ps.velocities[a];
            }
            let w0 = kernel.w(0.0);
            let va = ps.masses[a] / ps.densities[a];
            let mut gamma = va * w0;
            let mut filtered = ps.velocities[a] * (va * w0);
            for &b in &lists[a] {
                if !ps.kinds[b].in_fluid_sums() {
                    continue;
                }
                let r = (ps.positions[a] - ps.positions[b]).norm();
                let w = kernel.w(r);
                let vb = ps.masses[b] / ps.densities[b];
                gamma += vb * w;
                filtered += ps.velocities[b] * (vb * w);
            }
            if gamma == 0.0 {
                ps.velocities[a]
            } else {
                filtered / gamma
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;
    use approx::assert_relative_eq;

    fn params() -> FluidParams {
        FluidParams {
            rho0: 1000.0,
            sound_speed: 120.0,
            gravity: 9.8,
            e_wall: 1.0,
            r_wall: 0.0095,
            p0_anticlump: 0.0,
        }
    }

    fn lattice(n: usize, dr: f64, rho0: f64) -> ParticleSystem {
        let mut ps = ParticleSystem::new();
        for j in 0..n {
            for i in 0..n {
                ps.push(
                    Vec2::new(i as f64 * dr, j as f64 * dr),
                    Vec2::default(),
                    rho0 * dr * dr,
                    ParticleKind::Fluid,
                );
            }
        }
        ps
    }

    #[test]
    fn isolated_particle_raw_density() {
        let mut ps = ParticleSystem::new();
        ps.push(Vec2::default(), Vec2::default(), 2.0, ParticleKind::Fluid);
        let k = Kernel::wendland2(0.1);
        let lists = neighbor_lists(&ps, 0.1).unwrap();
        compute_density(&mut ps, &lists, &k, DensityMode::Raw).unwrap();
        assert_eq!(ps.densities[0], 2.0 * k.w(0.0));
    }

    #[test]
    fn offset_mode_gives_rho0_at_initial_configuration() {
        let dr = 0.01;
        let mut ps = lattice(12, dr, 1000.0);
        let k = Kernel::wendland2(3.0 * dr);
        let lists = neighbor_lists(&ps, 3.0 * dr).unwrap();
        set_density_offsets(&mut ps, &lists, &k, 1000.0).unwrap();
        for &rho in &ps.densities {
            assert_eq!(rho, 1000.0);
        }
    }

    #[test]
    fn interior_lattice_density_near_rho0() {
        // Direct lattice kernel-sum: interior particle of a large uniform
        // square lattice with m = rho0 dr^2 must give rho0 within 1%.
        let dr = 0.01;
        let n = 20;
        let mut ps = lattice(n, dr, 1000.0);
        let k = Kernel::wendland2(3.0 * dr);
        let lists = neighbor_lists(&ps, 3.0 * dr).unwrap();
        compute_density(&mut ps, &lists, &k, DensityMode::Raw).unwrap();
        let center = (n / 2) * n + n / 2;
        assert_relative_eq!(ps.densities[center], 1000.0, max_relative = 0.01);
    }

    #[test]
    fn eos_zero_at_reference_density() {
        assert_eq!(eos_pressure(1000.0, &params()), 0.0);
    }

    #[test]
    fn eos_matches_direct_evaluation() {
        let p = params();
        // (c^2 rho0 / 7) [(1.1)^7 - 1], evaluated independently
        let expected = 120.0f64.powi(2) * 1000.0 / 7.0 * (1.1f64.powi(7) - 1.0);
        assert_relative_eq!(eos_pressure(1100.0, &p), expected, max_relative = 1e-14);
    }

    #[test]
    fn eos_is_strictly_increasing() {
        let p = params();
        let mut last = eos_pressure(500.0, &p);
        for i in 1..200 {
            let rho = 500.0 + i as f64 * 5.0;
            let cur = eos_pressure(rho, &p);
            assert!(cur > last);
            last = cur;
        }
    }

    #[test]
    fn eos_slope_at_rho0_is_c_squared() {
        let p = params();
        let d = 1e-3;
        let fd = (eos_pressure(1000.0 + d, &p) - eos_pressure(1000.0 - d, &p)) / (2.0 * d);
        assert_relative_eq!(fd, 120.0 * 120.0, max_relative = 1e-8);
    }

    #[test]
    fn internal_energy_at_rho0() {
        let p = params();
        assert_relative_eq!(
            internal_energy_density(1000.0, &p),
            120.0f64.powi(2) / 6.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn internal_energy_derivative_identity() {
        // d eps / d rho == p / rho^2 is what makes the total energy conserved.
        let p = params();
        for i in 0..100 {
            let rho = 800.0 + i as f64 * 5.0;
            let d = rho * 1e-6;
            let fd = (internal_energy_density(rho + d, &p) - internal_energy_density(rho - d, &p))
                / (2.0 * d);
            let exact = eos_pressure(rho, &p) / (rho * rho);
            assert_relative_eq!(fd, exact, max_relative = 1e-8);
        }
    }

    #[test]
    fn internal_energy_minimized_at_rho0() {
        let p = params();
        let e0 = internal_energy_density(1000.0, &p);
        for i in 0..400 {
            let rho = 600.0 + i as f64 * 2.0;
            if (rho - 1000.0).abs() > 1.0 {
                assert!(internal_energy_density(rho, &p) > e0, "rho = {rho}");
            }
        }
    }

    #[test]
    fn lj_force_roots_and_cutoff() {
        let p = params();
        assert_eq!(lj_wall_force(p.r_wall, &p).unwrap(), 0.0);
        assert_eq!(lj_wall_force(2.0 * p.r_wall, &p).unwrap(), 0.0);
        assert!(lj_wall_force(0.0, &p).is_err());
    }

    #[test]
    fn lj_force_at_rwall_over_sqrt2() {
        let p = params();
        let r = p.r_wall / 2.0f64.sqrt();
        // s^2 = 2, s^2 (1 - s^2) = -2, so magnitude 2 E_wall / r, repulsive.
        assert_relative_eq!(
            lj_wall_force(r, &p).unwrap(),
            2.0 * p.e_wall / r,
            max_relative = 1e-12
        );
        assert!(lj_wall_force(r, &p).unwrap() > 0.0);
    }

    #[test]
    fn lj_potential_vanishes_at_contact_and_matches_force() {
        let p = params();
        assert_eq!(lj_wall_potential(p.r_wall, &p), 0.0);
        // -dPhi/dr reproduces the force at sampled radii.
        for i in 1..100 {
            let r = p.r_wall * (0.3 + 0.69 * i as f64 / 100.0);
            let d = p.r_wall * 1e-7;
            let fd = -(lj_wall_potential(r + d, &p) - lj_wall_potential(r - d, &p)) / (2.0 * d);
            assert_relative_eq!(
                fd,
                lj_wall_force(r, &p).unwrap(),
                max_relative = 1e-6,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn uniform_lattice_in_offset_mode_has_zero_acceleration() {
        let dr = 0.01;
        let mut ps = lattice(10, dr, 1000.0);
        let mut p = params();
        p.gravity = 0.0;
        let k = Kernel::wendland2(3.0 * dr);
        let lists = neighbor_lists(&ps, 3.0 * dr).unwrap();
        set_density_offsets(&mut ps, &lists, &k, 1000.0).unwrap();
        let forces = compute_acceleration(&ps, &lists, &k, &p, None).unwrap();
        for acc in &forces.accelerations {
            assert_eq!(*acc, Vec2::default());
        }
    }

    #[test]
    fn single_particle_feels_gravity_only() {
        let mut ps = ParticleSystem::new();
        ps.push(Vec2::default(), Vec2::default(), 1.0, ParticleKind::Fluid);
        ps.densities = vec![1000.0];
        let k = Kernel::wendland2(0.03);
        let lists = neighbor_lists(&ps, 0.03).unwrap();
        let forces = compute_acceleration(&ps, &lists, &k, &params(), None).unwrap();
        assert_eq!(forces.accelerations[0], Vec2::new(0.0, -9.8));
    }

    #[test]
    fn compressed_pair_repels_with_newtons_third_law() {
        let dr = 0.01;
        let p = FluidParams {
            gravity: 0.0,
            ..params()
        };
        let mut ps = ParticleSystem::new();
        let m = p.rho0 * dr * dr;
        ps.push(Vec2::new(0.0, 0.0), Vec2::default(), m, ParticleKind::Fluid);
        ps.push(Vec2::new(dr, 0.0), Vec2::default(), m, ParticleKind::Fluid);
        let k = Kernel::wendland2(3.0 * dr);
        let lists = neighbor_lists(&ps, 3.0 * dr).unwrap();
        // Compressed: raw density plus a large offset so both pressures > 0.
        compute_density(&mut ps, &lists, &k, DensityMode::Raw).unwrap();
        ps.density_offsets = vec![p.rho0 * 0.8; 2];
        compute_density(&mut ps, &lists, &k, DensityMode::Offset).unwrap();
        assert!(eos_pressure(ps.densities[0], &p) > 0.0);
        let forces = compute_acceleration(&ps, &lists, &k, &p, None).unwrap();
        let f0 = forces.accelerations[0] * m;
        let f1 = forces.accelerations[1] * m;
        // Equal and opposite, directed apart.
        assert!(f0.x < 0.0 && f1.x > 0.0);
        assert_relative_eq!(f0.x, -f1.x, max_relative = 1e-12);
        assert_eq!(f0.y, 0.0);
    }

    #[test]
    fn coincident_particles_are_skipped_and_counted() {
        let mut ps = ParticleSystem::new();
        ps.push(Vec2::default(), Vec2::default(), 1.0, ParticleKind::Fluid);
        ps.push(Vec2::default(), Vec2::default(), 1.0, ParticleKind::Fluid);
        let k = Kernel::wendland2(0.1);
        let lists = neighbor_lists(&ps, 0.1).unwrap();
        compute_density(&mut ps, &lists, &k, DensityMode::Raw).unwrap();
        let p = FluidParams {
            gravity: 0.0,
            ..params()
        };
        let forces = compute_acceleration(&ps, &lists, &k, &p, None).unwrap();
        assert_eq!(forces.coincident_pairs, 2);
        assert_eq!(forces.accelerations[0], Vec2::default());
    }

    #[test]
    fn std_density_rate_galilean_invariant() {
        let dr = 0.01;
        let mut ps = lattice(6, dr, 1000.0);
        for v in ps.velocities.iter_mut() {
            *v = Vec2::new(1.3, -0.4);
        }
        let k = Kernel::wendland2(3.0 * dr);
        let lists = neighbor_lists(&ps, 3.0 * dr).unwrap();
        let rates = standard_density_rate(&ps, &lists, &k);
        for r in rates {
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn std_density_rate_positive_for_approaching_pair() {
        let dr = 0.01;
        let mut ps = ParticleSystem::new();
        let m = 1000.0 * dr * dr;
        ps.push(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), m, ParticleKind::Fluid);
        ps.push(Vec2::new(2.0 * dr, 0.0), Vec2::new(-1.0, 0.0), m, ParticleKind::Fluid);
        let k = Kernel::wendland2(3.0 * dr);
        let lists = neighbor_lists(&ps, 3.0 * dr).unwrap();
        let rates = standard_density_rate(&ps, &lists, &k);
        assert!(rates[0] > 0.0 && rates[1] > 0.0);
    }

    #[test]
    fn std_density_rate_consistent_with_closed_density() {
        // rate == (rho(r + dt u) - rho(r)) / dt up to O(dt)
        let dr = 0.01;
        let mut ps = lattice(5, dr, 1000.0);
        for (i, v) in ps.velocities.iter_mut().enumerate() {
            *v = Vec2::new((i as f64 * 0.37).sin() * 0.1, (i as f64 * 0.71).cos() * 0.1);
        }
        let k = Kernel::wendland2(3.0 * dr);
        let lists = neighbor_lists(&ps, 3.0 * dr).unwrap();
        compute_density(&mut ps, &lists, &k, DensityMode::Raw).unwrap();
        let rates = standard_density_rate(&ps, &lists, &k);
        let dt = 1e-8;
        let mut moved = ps.clone();
        for (p, v) in moved.positions.iter_mut().zip(&ps.velocities) {
            *p += *v * dt;
        }
        let lists2 = neighbor_lists(&moved, 3.0 * dr).unwrap();
        compute_density(&mut moved, &lists2, &k, DensityMode::Raw).unwrap();
        for a in 0..ps.len() {
            let fd = (moved.densities[a] - ps.densities[a]) / dt;
            assert_relative_eq!(fd, rates[a], max_relative = 1e-5, epsilon = 1e-6);
        }
    }

    #[test]
    fn shepard_preserves_constant_field() {
        let dr = 0.01;
        let mut ps = lattice(8, dr, 1000.0);
        for v in ps.velocities.iter_mut() {
            *v = Vec2::new(0.7, -0.2);
        }
        let k = Kernel::wendland2(3.0 * dr);
        let lists = neighbor_lists(&ps, 3.0 * dr).unwrap();
        compute_density(&mut ps, &lists, &k, DensityMode::Raw).unwrap();
        let filtered = shepard_filter(&ps, &lists, &k);
        for f in filtered {
            assert_relative_eq!(f.x, 0.7, max_relative = 1e-12);
            assert_relative_eq!(f.y, -0.2, max_relative = 1e-12);
        }
    }

    #[test]
    fn shepard_leaves_isolated_particle_unchanged() {
        let mut ps = ParticleSystem::new();
        ps.push(Vec2::default(), Vec2::new(1.0, 2.0), 1.0, ParticleKind::Fluid);
        ps.densities = vec![5.0];
        let k = Kernel::wendland2(0.1);
        let lists = neighbor_lists(&ps, 0.1).unwrap();
        let filtered = shepard_filter(&ps, &lists, &k);
        assert_eq!(filtered[0], Vec2::new(1.0, 2.0));
    }

    #[test]
    fn shepard_tracks_linear_field_in_interior() {
        let dr = 0.01;
        let n = 14;
        let mut ps = lattice(n, dr, 1000.0);
        for (i, v) in ps.velocities.iter_mut().enumerate() {
            let p = Vec2::new((i % n) as f64 * dr, (i / n) as f64 * dr);
            *v = Vec2::new(2.0 * p.x + p.y, -p.x + 0.5 * p.y);
        }
        let k = Kernel::wendland2(3.0 * dr);
        let lists = neighbor_lists(&ps, 3.0 * dr).unwrap();
        compute_density(&mut ps, &lists, &k, DensityMode::Raw).unwrap();
        let filtered = shepard_filter(&ps, &lists, &k);
        let field_scale = 2.0 * (n as f64) * dr;
        for j in 4..n - 4 {
            for i in 4..n - 4 {
                let a = j * n + i;
                let dev = (filtered[a] - ps.velocities[a]).norm();
                assert!(dev < 0.01 * field_scale, "deviation {dev} at ({i},{j})");
            }
        }
    }
}
