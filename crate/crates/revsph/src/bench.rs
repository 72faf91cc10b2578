//! Benchmark scenario builders and metrics: the dam-break reversibility test
//! and the Gresho vortex accuracy test, plus the particle arrangements
//! (square, hexagonal, Vogel spiral) they are run on.

use serde::{Deserialize, Serialize};

use crate::error::SphError;
use crate::integrate::{Arithmetic, IntegratorConfig, Physics, Scheme, SimState};
use crate::isc::{solve_isc, IscProblem};
use crate::kernel::Kernel;
use crate::math::Vec2;
use crate::sphcore::{self, FluidParams, ParticleKind, ParticleSystem, WallModel};

/// Golden angle in radians, pi (3 - sqrt 5).
const GOLDEN_ANGLE: f64 = 2.399963229728653;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Arrangement {
    #[default]
    Square,
    Hexagonal,
    Vogel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Rect { min: Vec2, width: f64, height: f64 },
    Disk { center: Vec2, radius: f64 },
}

impl Region {
    pub fn area(&self) -> f64 {
        match *self {
            Region::Rect { width, height, .. } => width * height,
            Region::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        match *self {
            Region::Rect { min, width, height } => {
                p.x >= min.x && p.x < min.x + width && p.y >= min.y && p.y < min.y + height
            }
            Region::Disk { center, radius } => (p - center).norm() < radius,
        }
    }

    fn center(&self) -> Vec2 {
        match *self {
            Region::Rect { min, width, height } => Vec2::new(min.x + 0.5 * width, min.y + 0.5 * height),
            Region::Disk { center, .. } => center,
        }
    }

    fn circumradius(&self) -> f64 {
        match *self {
            Region::Rect { width, height, .. } => 0.5 * (width * width + height * height).sqrt(),
            Region::Disk { radius, .. } => radius,
        }
    }
}

/// A particle arrangement filling a region at mean density 1/dr² points per
/// unit area (every arrangement, including the hexagonal one, is scaled so
/// each point owns dr² of area; masses are then uniformly rho0 dr²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub arrangement: Arrangement,
    pub dr: f64,
    pub region: Region,
    pub apply_isc: bool,
}

impl GridSpec {
    /// Generate the point set (geometry only; no ISC).
    pub fn generate(&self) -> Vec<Vec2> {
        assert!(self.dr > 0.0, "grid spacing must be positive");
        let dr = self.dr;
        let mut points = Vec::new();
        match self.arrangement {
            Arrangement::Square => {
                if let Region::Rect { min, width, height } = self.region {
                    let nx = (width / dr).round() as usize;
                    let ny = (height / dr).round() as usize;
                    for j in 0..ny {
                        for i in 0..nx {
                            points.push(Vec2::new(
                                min.x + (i as f64 + 0.5) * dr,
                                min.y + (j as f64 + 0.5) * dr,
                            ));
                        }
                    }
                } else {
                    let c = self.region.center();
                    let rad = self.region.circumradius();
                    let n = (2.0 * rad / dr).ceil() as i64 + 2;
                    for j in -n..=n {
                        for i in -n..=n {
                            let p = c + Vec2::new(i as f64 * dr, j as f64 * dr);
                            if self.region.contains(p) {
                                points.push(p);
                            }
                        }
                    }
                }
            }
            Arrangement::Hexagonal => {
                // Isotropic scaling a = dr sqrt(2/sqrt(3)) makes the area of
                // the hexagonal unit cell a² sqrt(3)/2 equal dr² exactly.
                let a = dr * (2.0 / 3.0f64.sqrt()).sqrt();
                let row_h = a * 3.0f64.sqrt() / 2.0;
                let (x0, y0, width, height) = match self.region {
                    Region::Rect { min, width, height } => (min.x, min.y, width, height),
                    Region::Disk { center, radius } => {
                        (center.x - radius, center.y - radius, 2.0 * radius, 2.0 * radius)
                    }
                };
                let ny = (height / row_h).ceil() as usize + 1;
                let nx = (width / a).ceil() as usize + 1;
                for j in 0..ny {
                    let y = y0 + (j as f64 + 0.5) * row_h;
                    let offset = if j % 2 == 0 { 0.25 * a } else { 0.75 * a };
                    for i in 0..nx {
                        let p = Vec2::new(x0 + i as f64 * a + offset, y);
                        if self.region.contains(p) {
                            points.push(p);
                        }
                    }
                }
            }
            Arrangement::Vogel => {
                // Sunflower spiral: point k at radius dr sqrt(k/pi), angle
                // k times the golden angle; mean density is 1/dr² by
                // construction.
                let c = self.region.center();
                let r_max = self.region.circumradius() + dr;
                let k_max = (std::f64::consts::PI * (r_max / dr) * (r_max / dr)).ceil() as usize;
                for k in 0..k_max {
                    let r = dr * (k as f64 / std::f64::consts::PI).sqrt();
                    let theta = k as f64 * GOLDEN_ANGLE;
                    let p = c + Vec2::new(r * theta.cos(), r * theta.sin());
                    if self.region.contains(p) {
                        points.push(p);
                    }
                }
            }
        }
        points
    }

    /// Generate points and, when requested, relax them with the initial state
    /// correction so that the closed-form density equals `rho0` everywhere.
    pub fn build(&self, rho0: f64, kernel: &Kernel, isc_seed: u64) -> Result<Vec<Vec2>, SphError> {
        let mut points = self.generate();
        if self.apply_isc {
            let mass = rho0 * self.dr * self.dr;
            let masses = vec![mass; points.len()];
            let mut problem = IscProblem::new(points.clone(), masses, *kernel, rho0, self.dr);
            problem.seed = isc_seed;
            let (corrected, _report) = solve_isc(&problem).map_err(|e| {
                SphError::Config(format!(
                    "initial state correction failed for {:?} arrangement: {e}",
                    self.arrangement
                ))
            })?;
            points = corrected;
        }
        Ok(points)
    }
}

/// Dam break in a box: a water column collapsing under gravity, confined by
/// conservative Lennard-Jones wall particles along the box perimeter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamBreakScenario {
    pub dr: f64,
    pub column_width: f64,
    pub column_height: f64,
    pub box_width: f64,
    pub box_height: f64,
    pub rho0: f64,
    pub sound_speed: f64,
    pub gravity: f64,
}

impl DamBreakScenario {
    pub fn new(dr: f64) -> DamBreakScenario {
        DamBreakScenario {
            dr,
            column_width: 1.0,
            column_height: 2.0,
            box_width: 4.0,
            box_height: 3.0,
            rho0: 1000.0,
            sound_speed: 120.0,
            gravity: 9.8,
        }
    }

    pub fn validate(&self) -> Result<(), SphError> {
        let ok = self.dr > 0.0
            && self.column_width > 0.0
            && self.column_height > 0.0
            && self.column_width <= self.box_width
            && self.column_height <= self.box_height
            && self.rho0 > 0.0
            && self.sound_speed > 0.0
            && self.gravity >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(SphError::Config(format!("invalid dam-break scenario: {self:?}")))
        }
    }

    pub fn particle_mass(&self) -> f64 {
        self.rho0 * self.dr * self.dr
    }

    pub fn support_radius(&self) -> f64 {
        3.0 * self.dr
    }

    pub fn dt(&self) -> f64 {
        0.2 * self.support_radius() / self.sound_speed
    }

    pub fn fluid_params(&self) -> FluidParams {
        FluidParams {
            rho0: self.rho0,
            sound_speed: self.sound_speed,
            gravity: self.gravity,
            e_wall: 10.0 * self.particle_mass() * self.gravity * self.column_height,
            r_wall: 0.95 * self.dr,
            p0_anticlump: 0.0,
        }
    }

    pub fn physics(&self) -> Physics {
        Physics {
            params: self.fluid_params(),
            kernel: Kernel::wendland2(self.support_radius()),
            anticlump: None,
        }
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let mut cfg = IntegratorConfig::new(self.dt());
        cfg.wall_model = WallModel::LennardJones;
        cfg
    }

    /// Build the initial particle system: fluid column plus one layer of
    /// Lennard-Jones wall particles half a spacing outside the box, so every
    /// fluid particle starts exactly dr (> r_wall) from the nearest wall and
    /// the initial wall force vanishes. Density offsets are fixed from this
    /// configuration.
    pub fn build(&self) -> Result<ParticleSystem, SphError> {
        self.validate()?;
        let dr = self.dr;
        let m = self.particle_mass();
        let mut ps = ParticleSystem::new();

        let fluid = GridSpec {
            arrangement: Arrangement::Square,
            dr,
            region: Region::Rect {
                min: Vec2::new(0.0, 0.0),
                width: self.column_width,
                height: self.column_height,
            },
            apply_isc: false,
        };
        for p in fluid.generate() {
            ps.push(p, Vec2::default(), m, ParticleKind::Fluid);
        }

        // Wall ring on the rectangle expanded by dr/2, sampled at spacing dr.
        let lo = -0.5 * dr;
        let hi_x = self.box_width + 0.5 * dr;
        let hi_y = self.box_height + 0.5 * dr;
        let nx = ((hi_x - lo) / dr).round() as usize;
        let ny = ((hi_y - lo) / dr).round() as usize;
        for i in 0..=nx {
            let x = lo + i as f64 * (hi_x - lo) / nx as f64;
            ps.push(Vec2::new(x, lo), Vec2::default(), m, ParticleKind::WallLj);
            ps.push(Vec2::new(x, hi_y), Vec2::default(), m, ParticleKind::WallLj);
        }
        for j in 1..ny {
            let y = lo + j as f64 * (hi_y - lo) / ny as f64;
            ps.push(Vec2::new(lo, y), Vec2::default(), m, ParticleKind::WallLj);
            ps.push(Vec2::new(hi_x, y), Vec2::default(), m, ParticleKind::WallLj);
        }

        let lists = sphcore::neighbor_lists(&ps, self.support_radius())?;
        sphcore::set_density_offsets(&mut ps, &lists, &Kernel::wendland2(self.support_radius()), self.rho0)?;
        Ok(ps)
    }
}

/// Dimensionless x-coordinate of the wave's leading edge: max fluid x over
/// the column width. Time pairs with it as t sqrt(g / column width).
pub fn leading_edge(ps: &ParticleSystem, column_width: f64) -> f64 {
    ps.fluid_indices()
        .map(|a| ps.positions[a].x)
        .fold(f64::NEG_INFINITY, f64::max)
        / column_width
}

/// Gresho vortex tangential speed profile.
pub fn gresho_velocity(r: f64) -> f64 {
    debug_assert!(r >= 0.0);
    if r < 0.2 {
        5.0 * r
    } else if r < 0.4 {
        2.0 - 5.0 * r
    } else {
        0.0
    }
}

/// Cartesian Gresho velocity at a position relative to the vortex center.
pub fn gresho_velocity_field(p: Vec2) -> Vec2 {
    let r = p.norm();
    if r == 0.0 {
        return Vec2::default();
    }
    let tangent = Vec2::new(-p.y, p.x) / r;
    tangent * gresho_velocity(r)
}

/// Instantaneous Gresho error: sqrt( (75/4pi) sum_a V_a |u_a - u0(r_a)|^2 )
/// over fluid particles, with V_a = m_a / rho_a. The factor normalizes the
/// zero velocity field to error 1.
pub fn gresho_error_snapshot(ps: &ParticleSystem, velocities: &[Vec2]) -> f64 {
    let mut sum = 0.0;
    for a in ps.fluid_indices() {
        let v_a = ps.masses[a] / ps.densities[a];
        let dev = velocities[a] - gresho_velocity_field(ps.positions[a]);
        sum += v_a * dev.norm_squared();
    }
    (75.0 / (4.0 * std::f64::consts::PI) * sum).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    #[default]
    None,
    /// Shepard-filter the velocities a posteriori, for error evaluation only.
    Passive,
    /// Shepard-filter the state in-loop every M steps (dissipative).
    Active,
}

/// Gresho vortex in the unit box with two layers of dummy-wall particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreshoScenario {
    pub dr: f64,
    pub arrangement: Arrangement,
    pub apply_isc: bool,
    pub isc_seed: u64,
    /// Active-filter frequency in steps.
    pub filter_every: u64,
}

impl GreshoScenario {
    pub fn new(dr: f64, arrangement: Arrangement) -> GreshoScenario {
        GreshoScenario {
            dr,
            arrangement,
            apply_isc: false,
            isc_seed: 1,
            filter_every: 30,
        }
    }

    pub fn support_radius(&self) -> f64 {
        3.0 * self.dr
    }

    pub fn dt(&self) -> f64 {
        0.1 * self.support_radius() / 20.0
    }

    pub fn fluid_params(&self) -> FluidParams {
        FluidParams {
            rho0: 1.0,
            sound_speed: 20.0,
            gravity: 0.0,
            e_wall: 0.0,
            r_wall: self.dr,
            p0_anticlump: 10.0,
        }
    }

    pub fn physics(&self) -> Physics {
        let kernel = Kernel::wendland2(self.support_radius());
        Physics {
            params: self.fluid_params(),
            kernel,
            anticlump: Some(kernel.rescaled(0.5 * self.dr)),
        }
    }

    pub fn integrator_config(&self, filter: FilterMode) -> IntegratorConfig {
        let mut cfg = IntegratorConfig::new(self.dt());
        cfg.wall_model = WallModel::Dummy;
        if filter == FilterMode::Active {
            cfg.active_filter_every = Some(self.filter_every);
        }
        cfg
    }

    /// Build fluid in (-1/2, 1/2)^2 with the vortex velocity field, plus two
    /// square-lattice layers of dummy particles immediately outside the box.
    pub fn build(&self) -> Result<ParticleSystem, SphError> {
        if !(self.dr > 0.0) {
            return Err(SphError::Config(format!("invalid Gresho spacing {}", self.dr)));
        }
        let dr = self.dr;
        let m = 1.0 * dr * dr;
        let kernel = Kernel::wendland2(self.support_radius());
        let spec = GridSpec {
            arrangement: self.arrangement,
            dr,
            region: Region::Rect {
                min: Vec2::new(-0.5, -0.5),
                width: 1.0,
                height: 1.0,
            },
            apply_isc: self.apply_isc,
        };
        let points = spec.build(1.0, &kernel, self.isc_seed)?;
        let mut ps = ParticleSystem::new();
        for p in points {
            ps.push(p, gresho_velocity_field(p), m, ParticleKind::Fluid);
        }
        // Two dummy layers: square lattice over the expanded box, keeping
        // only the ring outside the fluid domain.
        let layers = 2;
        let n = (1.0 / dr).round() as i64;
        for j in -layers..n + layers {
            for i in -layers..n + layers {
                let inside = i >= 0 && i < n && j >= 0 && j < n;
                if inside {
                    continue;
                }
                let p = Vec2::new(-0.5 + (i as f64 + 0.5) * dr, -0.5 + (j as f64 + 0.5) * dr);
                ps.push(p, Vec2::default(), m, ParticleKind::WallDummy);
            }
        }
        let lists = sphcore::neighbor_lists(&ps, self.support_radius())?;
        sphcore::set_density_offsets(&mut ps, &lists, &kernel, 1.0)?;
        Ok(ps)
    }

    /// Run the vortex to t = 1. One trajectory yields both the unfiltered
    /// error and the passive (a posteriori Shepard-filtered) error; with
    /// `active_filter` the dynamics themselves are filtered every
    /// `filter_every` steps, and the "raw" error of that run is the
    /// active-filter error.
    pub fn run(&self, arithmetic: Arithmetic, active_filter: bool) -> Result<GreshoResult, SphError> {
        let ps = self.build()?;
        let physics = self.physics();
        let mut cfg = self.integrator_config(if active_filter {
            FilterMode::Active
        } else {
            FilterMode::None
        });
        cfg.arithmetic = arithmetic;
        cfg.scheme = Scheme::Sym;
        let mut state = SimState::new(ps, arithmetic)?;
        let mut samples: Vec<(f64, f64, f64)> = Vec::new();
        let kernel = physics.kernel;
        let mut on_diag = |state: &SimState, rec: &sphcore::DiagnosticsRecord| {
            let raw = gresho_error_snapshot(&state.ps, &state.ps.velocities);
            let lists = state.current_lists().expect("lists current at diagnostics");
            let filtered = sphcore::shepard_filter(&state.ps, lists, &kernel);
            let passive = gresho_error_snapshot(&state.ps, &filtered);
            samples.push((rec.t, raw, passive));
        };
        let mut hooks = crate::integrate::RunHooks {
            diagnostics_every: 50,
            on_diagnostics: Some(&mut on_diag),
            ..Default::default()
        };
        let series = crate::integrate::run(&mut state, &cfg, &physics, 1.0, &mut hooks)?;
        drop(hooks);
        let error_raw = samples.iter().map(|&(_, e, _)| e).fold(0.0f64, f64::max);
        let error_passive = samples.iter().map(|&(_, _, e)| e).fold(0.0f64, f64::max);
        Ok(GreshoResult {
            error_raw,
            error_passive,
            samples,
            series,
        })
    }
}

#[derive(Debug, Clone)]
pub struct GreshoResult {
    /// max over sampled times of the error of the state velocities.
    pub error_raw: f64,
    /// max over sampled times of the error after a posteriori filtering.
    pub error_passive: f64,
    /// (time, raw error, passive error) samples.
    pub samples: Vec<(f64, f64, f64)>,
    pub series: Vec<sphcore::DiagnosticsRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphcore::DensityMode;
    use approx::assert_relative_eq;

    #[test]
    fn gresho_profile_breakpoints() {
        assert_eq!(gresho_velocity(0.0), 0.0);
        assert_relative_eq!(gresho_velocity(0.2), 1.0, max_relative = 1e-14);
        assert_eq!(gresho_velocity(0.5), 0.0);
        assert_relative_eq!(gresho_velocity(0.1), 0.5, max_relative = 1e-14);
        assert_relative_eq!(gresho_velocity(0.3), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn gresho_field_is_tangential() {
        let p = Vec2::new(0.1, 0.05);
        let u = gresho_velocity_field(p);
        assert!((u.dot(p)).abs() < 1e-15);
        assert_relative_eq!(u.norm(), gresho_velocity(p.norm()), max_relative = 1e-14);
        assert_eq!(gresho_velocity_field(Vec2::default()), Vec2::default());
    }

    #[test]
    fn square_grid_count_over_unit_box() {
        let spec = GridSpec {
            arrangement: Arrangement::Square,
            dr: 0.1,
            region: Region::Rect {
                min: Vec2::new(0.0, 0.0),
                width: 1.0,
                height: 1.0,
            },
            apply_isc: false,
        };
        assert_eq!(spec.generate().len(), 100);
    }

    #[test]
    fn all_arrangements_have_unit_area_per_point() {
        // count * dr^2 must match the region area within 2% for each
        // arrangement, which is also the total-mass invariant with
        // m = rho0 dr^2.
        let region = Region::Rect {
            min: Vec2::new(-0.5, -0.5),
            width: 1.0,
            height: 1.0,
        };
        for arrangement in [Arrangement::Square, Arrangement::Hexagonal, Arrangement::Vogel] {
            let spec = GridSpec {
                arrangement,
                dr: 0.02,
                region,
                apply_isc: false,
            };
            let pts = spec.generate();
            let covered = pts.len() as f64 * 0.02 * 0.02;
            assert!(
                (covered - 1.0).abs() < 0.02,
                "{arrangement:?}: covered area {covered}"
            );
        }
    }

    #[test]
    fn generated_points_are_pairwise_distinct() {
        for arrangement in [Arrangement::Square, Arrangement::Hexagonal, Arrangement::Vogel] {
            let spec = GridSpec {
                arrangement,
                dr: 0.05,
                region: Region::Disk {
                    center: Vec2::new(0.0, 0.0),
                    radius: 0.4,
                },
                apply_isc: false,
            };
            let pts = spec.generate();
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    assert!((pts[i] - pts[j]).norm() > 1e-12, "{arrangement:?}: {i} vs {j}");
                }
            }
        }
    }

    #[test]
    fn hexagonal_rows_have_expected_geometry() {
        // Rows sit at constant y separated by a sqrt(3)/2 with alternate
        // rows offset by a/2, where a^2 sqrt(3)/2 = dr^2.
        let dr = 0.1;
        let a = dr * (2.0 / 3.0f64.sqrt()).sqrt();
        let spec = GridSpec {
            arrangement: Arrangement::Hexagonal,
            dr,
            region: Region::Rect {
                min: Vec2::new(0.0, 0.0),
                width: 1.0,
                height: 1.0,
            },
            apply_isc: false,
        };
        let pts = spec.generate();
        let mut ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
        ys.sort_by(f64::total_cmp);
        ys.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        for w in ys.windows(2) {
            assert_relative_eq!(w[1] - w[0], a * 3.0f64.sqrt() / 2.0, max_relative = 1e-10);
        }
        // Neighboring rows are offset by a/2.
        let row0: Vec<f64> = pts.iter().filter(|p| (p.y - ys[0]).abs() < 1e-12).map(|p| p.x).collect();
        let row1: Vec<f64> = pts.iter().filter(|p| (p.y - ys[1]).abs() < 1e-12).map(|p| p.x).collect();
        let dx = (row1[0] - row0[0]).abs();
        assert_relative_eq!(dx.min(a - dx), a / 2.0, max_relative = 1e-9);
    }

    #[test]
    fn vogel_spiral_is_statistically_uniform() {
        // Coefficient of variation of the nearest-neighbor distance stays
        // small for the sunflower arrangement.
        let dr = 0.02;
        let spec = GridSpec {
            arrangement: Arrangement::Vogel,
            dr,
            region: Region::Disk {
                center: Vec2::new(0.0, 0.0),
                radius: 0.4,
            },
            apply_isc: false,
        };
        let pts = spec.generate();
        assert!(pts.len() > 1000);
        let mut nn = Vec::with_capacity(pts.len());
        for i in 0..pts.len() {
            let mut best = f64::INFINITY;
            for j in 0..pts.len() {
                if i != j {
                    best = best.min((pts[i] - pts[j]).norm());
                }
            }
            nn.push(best);
        }
        let mean = nn.iter().sum::<f64>() / nn.len() as f64;
        let var = nn.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / nn.len() as f64;
        let cv = var.sqrt() / mean;
        assert!(cv < 0.15, "coefficient of variation {cv}");
    }

    #[test]
    fn gresho_error_zero_for_exact_field() {
        let scenario = GreshoScenario::new(0.05, Arrangement::Square);
        let ps = scenario.build().unwrap();
        assert_eq!(gresho_error_snapshot(&ps, &ps.velocities), 0.0);
    }

    #[test]
    fn gresho_error_one_for_zero_field() {
        // Zero velocities with the ideal volume partition V_a = dr^2: the
        // 75/(4pi) factor normalizes the error to 1 up to quadrature error.
        let dr = 0.01;
        let spec = GridSpec {
            arrangement: Arrangement::Square,
            dr,
            region: Region::Rect {
                min: Vec2::new(-0.5, -0.5),
                width: 1.0,
                height: 1.0,
            },
            apply_isc: false,
        };
        let mut ps = ParticleSystem::new();
        for p in spec.generate() {
            ps.push(p, Vec2::default(), dr * dr, ParticleKind::Fluid);
        }
        ps.densities = vec![1.0; ps.len()];
        let zero = vec![Vec2::default(); ps.len()];
        let e = gresho_error_snapshot(&ps, &zero);
        assert_relative_eq!(e, 1.0, max_relative = 2e-3);
    }

    #[test]
    fn gresho_error_matches_direct_formula_on_three_particles() {
        let mut ps = ParticleSystem::new();
        let positions = [Vec2::new(0.1, 0.0), Vec2::new(0.0, 0.3), Vec2::new(0.45, 0.1)];
        let masses = [2e-4, 3e-4, 1.5e-4];
        let densities = [1.1, 0.9, 1.05];
        let velocities = [Vec2::new(0.2, 0.6), Vec2::new(-0.4, 0.1), Vec2::new(0.05, -0.3)];
        for i in 0..3 {
            ps.push(positions[i], velocities[i], masses[i], ParticleKind::Fluid);
        }
        ps.densities = densities.to_vec();
        // Independent evaluation straight from the definition.
        let mut sum = 0.0;
        for i in 0..3 {
            let u0 = gresho_velocity_field(positions[i]);
            sum += masses[i] / densities[i] * (velocities[i] - u0).norm_squared();
        }
        let expected = (75.0 / (4.0 * std::f64::consts::PI) * sum).sqrt();
        assert_relative_eq!(
            gresho_error_snapshot(&ps, &velocities),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn dam_break_initial_state_geometry() {
        let scenario = DamBreakScenario::new(0.05);
        let ps = scenario.build().unwrap();
        // Fluid count matches column area / dr^2.
        let expected = (scenario.column_width * scenario.column_height
            / (scenario.dr * scenario.dr))
            .round() as usize;
        assert_eq!(ps.fluid_count(), expected);
        // Leading edge starts at the column face (within half a spacing).
        let x = leading_edge(&ps, scenario.column_width);
        assert!((x - 1.0).abs() <= scenario.dr, "leading edge {x}");
        // All fluid strictly inside the box; walls outside it.
        for a in ps.fluid_indices() {
            let p = ps.positions[a];
            assert!(p.x > 0.0 && p.x < scenario.box_width);
            assert!(p.y > 0.0 && p.y < scenario.box_height);
        }
        assert!(ps.has_kind(ParticleKind::WallLj));
        assert!(!ps.has_kind(ParticleKind::WallDummy));
    }

    #[test]
    fn dam_break_total_fluid_mass() {
        let scenario = DamBreakScenario::new(0.05);
        let ps = scenario.build().unwrap();
        let mass: f64 = ps.fluid_indices().map(|a| ps.masses[a]).sum();
        let expected = scenario.rho0 * scenario.column_width * scenario.column_height;
        assert_relative_eq!(mass, expected, max_relative = 0.02);
    }

    #[test]
    fn dam_break_initial_acceleration_is_pure_gravity() {
        // Offset-mode densities equal rho0 at t = 0, so every pressure is
        // zero and the walls are out of range: acceleration must be exactly
        // (0, -g) on the fluid.
        let scenario = DamBreakScenario::new(0.05);
        let ps = scenario.build().unwrap();
        let physics = scenario.physics();
        let lists = sphcore::neighbor_lists(&ps, scenario.support_radius()).unwrap();
        let forces =
            sphcore::compute_acceleration(&ps, &lists, &physics.kernel, &physics.params, None)
                .unwrap();
        for a in ps.fluid_indices() {
            let acc = forces.accelerations[a];
            assert!(acc.x.abs() < 1e-9, "particle {a}: {acc:?}");
            assert_relative_eq!(acc.y, -9.8, max_relative = 1e-9);
        }
    }

    #[test]
    fn dam_break_table_parameters() {
        let s = DamBreakScenario::new(0.005);
        let p = s.fluid_params();
        assert_eq!(p.rho0, 1000.0);
        assert_eq!(p.sound_speed, 120.0);
        assert_eq!(p.gravity, 9.8);
        assert_relative_eq!(p.r_wall, 0.95 * 0.005, max_relative = 1e-14);
        // E_wall = 10 m g l_wch with m = rho0 dr^2 and l_wch = 2.
        assert_relative_eq!(
            p.e_wall,
            10.0 * 1000.0 * 0.005 * 0.005 * 9.8 * 2.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(s.dt(), 0.2 * 3.0 * 0.005 / 120.0, max_relative = 1e-14);
    }

    #[test]
    fn leading_edge_of_point_cloud() {
        let mut ps = ParticleSystem::new();
        ps.push(Vec2::new(2.0, 0.1), Vec2::default(), 1.0, ParticleKind::Fluid);
        ps.push(Vec2::new(1.5, 0.5), Vec2::default(), 1.0, ParticleKind::Fluid);
        ps.push(Vec2::new(3.5, 0.0), Vec2::default(), 1.0, ParticleKind::WallLj);
        assert_eq!(leading_edge(&ps, 1.0), 2.0);
    }

    #[test]
    fn gresho_build_has_two_dummy_layers() {
        let scenario = GreshoScenario::new(0.05, Arrangement::Square);
        let ps = scenario.build().unwrap();
        let n = (1.0f64 / 0.05).round() as usize; // 20 fluid cells per side
        let dummy = ps.kinds.iter().filter(|k| **k == ParticleKind::WallDummy).count();
        // Ring of width 2 around an n x n block: (n+4)^2 - n^2.
        assert_eq!(dummy, (n + 4) * (n + 4) - n * n);
        assert_eq!(ps.fluid_count(), n * n);
        // Dummy particles are at rest and outside the box.
        for a in 0..ps.len() {
            if ps.kinds[a] == ParticleKind::WallDummy {
                assert_eq!(ps.velocities[a], Vec2::default());
                let p = ps.positions[a];
                assert!(p.x.abs() > 0.5 - 1e-12 || p.y.abs() > 0.5 - 1e-12);
            }
        }
    }

    #[test]
    fn gresho_table_parameters() {
        let s = GreshoScenario::new(0.01, Arrangement::Square);
        let p = s.fluid_params();
        assert_eq!(p.rho0, 1.0);
        assert_eq!(p.sound_speed, 20.0);
        assert_eq!(p.gravity, 0.0);
        assert_eq!(p.p0_anticlump, 10.0);
        assert_relative_eq!(s.dt(), 0.1 * 0.03 / 20.0, max_relative = 1e-14);
        assert_eq!(s.filter_every, 30);
        let physics = s.physics();
        assert_relative_eq!(
            physics.anticlump.unwrap().support_radius(),
            0.005,
            max_relative = 1e-14
        );
    }

    #[test]
    fn vogel_grid_with_isc_converges_and_improves_uniformity() {
        let dr = 0.05;
        let kernel = Kernel::wendland2(3.0 * dr);
        let region = Region::Rect {
            min: Vec2::new(-0.5, -0.5),
            width: 1.0,
            height: 1.0,
        };
        let raw = GridSpec {
            arrangement: Arrangement::Vogel,
            dr,
            region,
            apply_isc: false,
        };
        let corrected = GridSpec {
            apply_isc: true,
            ..raw
        };
        let max_density_error = |points: &[Vec2]| -> f64 {
            let mut ps = ParticleSystem::new();
            for &p in points {
                ps.push(p, Vec2::default(), dr * dr, ParticleKind::Fluid);
            }
            let lists = sphcore::neighbor_lists(&ps, 3.0 * dr).unwrap();
            sphcore::compute_density(&mut ps, &lists, &kernel, DensityMode::Raw).unwrap();
            ps.densities
                .iter()
                .map(|rho| (rho - 1.0).abs())
                .fold(0.0f64, f64::max)
        };
        let before = max_density_error(&raw.build(1.0, &kernel, 3).unwrap());
        let after = max_density_error(&corrected.build(1.0, &kernel, 3).unwrap());
        assert!(after < 1e-9, "post-correction density error {after}");
        assert!(before > 1e-3, "pre-correction density error {before}");
    }
}
