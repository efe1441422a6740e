//! Synthetic data-center fleets with a planted causal structure, and
//! structural VAR panels for testing causal discovery.
//!
//! A fleet center with `S` services has attributes
//! `usage_0 .. usage_{S-1}` (known future), `traffic_0 .. traffic_{S-1}` and
//! `total`:
//!
//! ```text
//! usage_s(t)   = base_s + slope_s·t + amp_s·sin(2π(t + phase_s)/7) + n_s(t)
//! n_s(t)       = φ·n_s(t-1) + uniform innovation
//! traffic_s(t) = gain_s·usage_s(t) + ρ·traffic_s(t-1) + uniform noise
//! total(t)     = Σ_s traffic_s(t) + uniform noise
//! ```
//!
//! Centers are grouped into latent profiles. Each profile draws its own
//! service parameters and its traffic persistence `ρ`; a center perturbs its profile's parameters by a
//! relative jitter of at most `heterogeneity`. Centers in the same profile
//! are therefore similar, which is what the cold-start strategies exploit.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{AttributeSchema, DataError, Fleet, Panel, Role};
use crate::fmath;
use crate::linalg::Matrix;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(&'static str),
    #[error("target index {0} out of range")]
    TargetOutOfRange(usize),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Parameters of a synthetic fleet. Noise levels are standard deviations of
/// zero-mean uniform variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSpec {
    pub n_centers: usize,
    pub n_services: usize,
    pub length: usize,
    /// Number of latent center profiles.
    pub profiles: usize,
    pub base_range: (f64, f64),
    pub trend_slope_range: (f64, f64),
    pub seasonal_amplitude_range: (f64, f64),
    pub usage_noise: f64,
    /// AR(1) coefficient `φ` of the usage noise; 0 gives white noise.
    pub usage_noise_persistence: f64,
    pub gain_range: (f64, f64),
    /// Lag-1 persistence `ρ` of service traffic, drawn once per profile.
    pub persistence_range: (f64, f64),
    pub traffic_noise: f64,
    pub total_noise: f64,
    /// Maximum relative jitter of a center's parameters around its profile.
    pub heterogeneity: f64,
    pub seed: u64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            n_centers: 15,
            n_services: 10,
            length: 533,
            profiles: 3,
            base_range: (50.0, 150.0),
            trend_slope_range: (-0.05, 0.2),
            seasonal_amplitude_range: (2.0, 8.0),
            usage_noise: 4.0,
            usage_noise_persistence: 0.8,
            gain_range: (0.5, 2.0),
            persistence_range: (0.1, 0.7),
            traffic_noise: 2.0,
            total_noise: 2.0,
            heterogeneity: 0.1,
            seed: 0,
        }
    }
}

impl FleetSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_centers < 2 {
            return Err(SynthError::InvalidSpec("a fleet needs at least 2 centers"));
        }
        if self.n_services < 1 {
            return Err(SynthError::InvalidSpec("at least one service is required"));
        }
        if self.length < 100 {
            return Err(SynthError::InvalidSpec("length must be at least 100"));
        }
        if self.profiles < 1 {
            return Err(SynthError::InvalidSpec("at least one profile is required"));
        }
        let sigmas = [self.usage_noise, self.traffic_noise, self.total_noise, self.heterogeneity];
        if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(SynthError::InvalidSpec("noise levels and heterogeneity must be finite and non-negative"));
        }
        let (plo, phi) = self.persistence_range;
        if !(0.0..1.0).contains(&plo) || !(0.0..1.0).contains(&phi) || plo > phi || !(0.0..1.0).contains(&self.usage_noise_persistence) {
            return Err(SynthError::InvalidSpec("persistence coefficients must lie in [0, 1)"));
        }
        for (lo, hi) in [self.base_range, self.trend_slope_range, self.seasonal_amplitude_range, self.gain_range] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(SynthError::InvalidSpec("parameter ranges must be finite with lo <= hi"));
            }
        }
        Ok(())
    }

    /// Schema shared by every center of the fleet.
    pub fn schema(&self) -> AttributeSchema {
        fleet_schema(self.n_services)
    }
}

/// `usage_*` (known future), `traffic_*`, `total`.
pub fn fleet_schema(services: usize) -> AttributeSchema {
    let mut names = Vec::with_capacity(2 * services + 1);
    let mut roles = Vec::with_capacity(2 * services + 1);
    let mut known = Vec::with_capacity(2 * services + 1);
    for s in 0..services {
        names.push(format!("usage_{s}"));
        roles.push(Role::MachineUsage);
        known.push(true);
    }
    for s in 0..services {
        names.push(format!("traffic_{s}"));
        roles.push(Role::ServiceTraffic);
        known.push(false);
    }
    names.push(String::from("total"));
    roles.push(Role::TotalTraffic);
    known.push(false);
    AttributeSchema::new(names, roles, known).expect("generated schema is valid")
}

/// Generating parameters of one center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterParams {
    pub profile: usize,
    pub base: Vec<f64>,
    pub slope: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
    pub gain: Vec<f64>,
    pub persistence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub attributes: Vec<String>,
    /// Instantaneous edges in graph layout (`(k, j) = 1` for `k → j`); the
    /// same for every center.
    pub adjacency: Matrix,
    pub centers: Vec<CenterParams>,
}

fn uniform_noise(g: &mut Rng, sigma: f64) -> f64 {
    // U(-a, a) has standard deviation a / sqrt(3)
    let a = sigma * fmath::sqrt(3.0);
    if a == 0.0 {
        0.0
    } else {
        rng::uniform(g, -a, a)
    }
}

fn draw(g: &mut Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng::uniform(g, range.0, range.1)
    }
}

fn jitter(g: &mut Rng, value: f64, h: f64) -> f64 {
    if h == 0.0 {
        value
    } else {
        value * (1.0 + rng::uniform(g, -h, h))
    }
}

fn profile_params(spec: &FleetSpec, profile: usize) -> CenterParams {
    let mut g = rng::seeded(rng::derive_seed(spec.seed, 0x5052_4f46_0000 + profile as u64));
    let s = spec.n_services;
    let mut p = CenterParams {
        profile,
        base: Vec::with_capacity(s),
        slope: Vec::with_capacity(s),
        amplitude: Vec::with_capacity(s),
        phase: Vec::with_capacity(s),
        gain: Vec::with_capacity(s),
        persistence: 0.0,
    };
    for _ in 0..s {
        p.base.push(draw(&mut g, spec.base_range));
        p.slope.push(draw(&mut g, spec.trend_slope_range));
        p.amplitude.push(draw(&mut g, spec.seasonal_amplitude_range));
        p.phase.push(rng::uniform(&mut g, 0.0, 7.0));
        p.gain.push(draw(&mut g, spec.gain_range));
    }
    p.persistence = draw(&mut g, spec.persistence_range);
    p
}

fn center_params(spec: &FleetSpec, center: usize, g: &mut Rng) -> CenterParams {
    let profile = center % spec.profiles;
    let base = profile_params(spec, profile);
    let h = spec.heterogeneity;
    CenterParams {
        profile,
        base: base.base.iter().map(|&v| jitter(g, v, h)).collect(),
        slope: base.slope.iter().map(|&v| jitter(g, v, h)).collect(),
        amplitude: base.amplitude.iter().map(|&v| jitter(g, v, h)).collect(),
        phase: base.phase.clone(),
        gain: base.gain.iter().map(|&v| jitter(g, v, h)).collect(),
        persistence: base.persistence,
    }
}

fn simulate_center(spec: &FleetSpec, params: &CenterParams, g: &mut Rng) -> Matrix {
    let (s, t_len) = (spec.n_services, spec.length);
    let a = 2 * s + 1;
    let mut m = Matrix::zeros(t_len, a);
    let rho = params.persistence;
    let phi = spec.usage_noise_persistence;
    // stationary scale of the AR(1) usage noise equals usage_noise
    let innovation = spec.usage_noise * fmath::sqrt(1.0 - phi * phi);
    let mut noise: Vec<f64> = (0..s).map(|_| uniform_noise(g, spec.usage_noise)).collect();
    let mut prev_traffic: Vec<f64> = Vec::with_capacity(s);
    for t in 0..t_len {
        let mut total = 0.0;
        for k in 0..s {
            if t > 0 {
                noise[k] = phi * noise[k] + uniform_noise(g, innovation);
            }
            let season = params.amplitude[k]
                * fmath::sin(2.0 * core::f64::consts::PI * (t as f64 + params.phase[k]) / 7.0);
            let usage = params.base[k] + params.slope[k] * t as f64 + season + noise[k];
            let drive = params.gain[k] * usage;
            let lagged = if t == 0 { rho * drive / (1.0 - rho) } else { rho * prev_traffic[k] };
            let traffic = drive + lagged + uniform_noise(g, spec.traffic_noise);
            if t == 0 {
                prev_traffic.push(traffic);
            } else {
                prev_traffic[k] = traffic;
            }
            m[(t, k)] = usage;
            m[(t, s + k)] = traffic;
            total += traffic;
        }
        m[(t, 2 * s)] = total + uniform_noise(g, spec.total_noise);
    }
    m
}

/// Deterministic in `spec.seed`; each center draws from its own derived stream.
pub fn generate_fleet(spec: &FleetSpec) -> Result<(Fleet, GroundTruth), SynthError> {
    spec.validate()?;
    let schema = spec.schema();
    let s = spec.n_services;
    let a = 2 * s + 1;
    let mut panels = Vec::with_capacity(spec.n_centers);
    let mut centers = Vec::with_capacity(spec.n_centers);
    for c in 0..spec.n_centers {
        let mut g = rng::seeded(rng::derive_seed(spec.seed, c as u64));
        let params = center_params(spec, c, &mut g);
        let values = simulate_center(spec, &params, &mut g);
        panels.push(Panel::from_values(format!("dc{c:02}"), schema.clone(), values)?);
        centers.push(params);
    }
    let mut adjacency = Matrix::zeros(a, a);
    for k in 0..s {
        adjacency[(k, s + k)] = 1.0;
        adjacency[(s + k, 2 * s)] = 1.0;
    }
    let truth = GroundTruth { attributes: schema.names().to_vec(), adjacency, centers };
    Ok((Fleet::new(panels)?, truth))
}

/// A fleet in which one center lost the history of some services.
#[derive(Debug, Clone, PartialEq)]
pub struct ColdStartScenario {
    pub fleet: Fleet,
    pub target: usize,
    pub cut: usize,
    /// Usage and traffic attributes of the masked services.
    pub masked: Vec<String>,
    /// The target center before masking, for scoring.
    pub truth: Panel,
}

/// Masks rows `[0, cut)` of the usage and traffic columns of the first
/// `masked_services` services of center `target`. Usage after `cut` stays
/// available as known future.
pub fn make_coldstart_scenario(
    fleet: &Fleet,
    target: usize,
    masked_services: usize,
    cut: usize,
) -> Result<ColdStartScenario, SynthError> {
    let truth = fleet.panels().get(target).ok_or(SynthError::TargetOutOfRange(target))?.clone();
    let schema = fleet.schema();
    let mut masked = Vec::with_capacity(2 * masked_services);
    for s in 0..masked_services {
        for prefix in ["usage", "traffic"] {
            let name = format!("{prefix}_{s}");
            if schema.index_of(&name).is_none() {
                return Err(SynthError::InvalidSpec("masked service count exceeds the fleet's services"));
            }
            masked.push(name);
        }
    }
    let names: Vec<&str> = masked.iter().map(String::as_str).collect();
    let panel = truth.mask_history(&names, cut)?;
    Ok(ColdStartScenario { fleet: fleet.with_panel(target, panel)?, target, cut, masked, truth })
}

/// How the masked services relate to the target's `total` before the cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Only the history is lost; `total` is untouched.
    Masked,
    /// The services start at the cut: besides masking, their traffic is
    /// removed from `total` before the cut.
    #[default]
    Added,
}

/// [`make_coldstart_scenario`] for services that go live at `cut`.
pub fn make_service_addition_scenario(
    fleet: &Fleet,
    target: usize,
    masked_services: usize,
    cut: usize,
) -> Result<ColdStartScenario, SynthError> {
    let mut sc = make_coldstart_scenario(fleet, target, masked_services, cut)?;
    let schema = fleet.schema();
    let total = schema.index_of("total").ok_or(SynthError::InvalidSpec("fleet has no total attribute"))?;
    let traffic: Vec<usize> = (0..masked_services).filter_map(|s| schema.index_of(&format!("traffic_{s}"))).collect();
    let truth = &sc.truth;
    let mut values = sc.fleet.panels()[target].raw_values().clone();
    for t in 0..cut.min(truth.rows()) {
        let removed: f64 = traffic.iter().map(|&j| truth.raw_values()[(t, j)]).sum();
        values[(t, total)] -= removed;
    }
    let masked = sc.fleet.panels()[target].clone();
    let panel = Panel::new(masked.id(), schema.clone(), values, masked.mask().to_vec())?;
    sc.fleet = sc.fleet.with_panel(target, panel)?;
    Ok(sc)
}

pub fn make_scenario(
    kind: ScenarioKind,
    fleet: &Fleet,
    target: usize,
    masked_services: usize,
    cut: usize,
) -> Result<ColdStartScenario, SynthError> {
    match kind {
        ScenarioKind::Masked => make_coldstart_scenario(fleet, target, masked_services, cut),
        ScenarioKind::Added => make_service_addition_scenario(fleet, target, masked_services, cut),
    }
}

/// Parameters of a random structural VAR(1) with uniform innovations:
/// `x_t = B0 x_t + B1 x_{t-1} + e_t`, `B0` acyclic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvarSpec {
    pub attributes: usize,
    pub length: usize,
    /// Probability of an instantaneous edge between an ordered pair.
    pub edge_probability: f64,
    pub effect_range: (f64, f64),
    pub self_lag_range: (f64, f64),
    /// Probability of a lagged cross edge.
    pub lag_edge_probability: f64,
    pub lag_effect_range: (f64, f64),
    pub seed: u64,
}

impl Default for SvarSpec {
    fn default() -> Self {
        Self {
            attributes: 5,
            length: 1000,
            edge_probability: 0.4,
            effect_range: (0.5, 0.9),
            self_lag_range: (0.2, 0.5),
            lag_edge_probability: 0.1,
            lag_effect_range: (0.3, 0.5),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvarSample {
    pub panel: Panel,
    /// Structural layout: `(j, k)` is the effect of `k` on `j`.
    pub b0: Matrix,
    pub b1: Matrix,
    /// Off-diagonal edges of `B0` and `B1` in graph layout.
    pub adjacency: Matrix,
}

fn signed(g: &mut Rng, range: (f64, f64)) -> f64 {
    let v = draw(g, range);
    if rng::uniform(g, 0.0, 1.0) < 0.5 {
        -v
    } else {
        v
    }
}

/// Random acyclic `B0` over a random order, diagonal plus sparse `B1`. Draws
/// whose simulation is not bounded are rejected and redrawn.
pub fn generate_svar(spec: &SvarSpec) -> Result<SvarSample, SynthError> {
    let a = spec.attributes;
    if a == 0 || spec.length < 2 {
        return Err(SynthError::InvalidSpec("SVAR needs at least one attribute and two rows"));
    }
    let mut g = rng::seeded(spec.seed);
    loop {
        let mut order: Vec<usize> = (0..a).collect();
        for i in (1..a).rev() {
            let j = (rng::uniform(&mut g, 0.0, (i + 1) as f64) as usize).min(i);
            order.swap(i, j);
        }
        let mut b0 = Matrix::zeros(a, a);
        for (pos, &j) in order.iter().enumerate() {
            for &k in &order[..pos] {
                if rng::uniform(&mut g, 0.0, 1.0) < spec.edge_probability {
                    b0[(j, k)] = signed(&mut g, spec.effect_range);
                }
            }
        }
        let mut b1 = Matrix::zeros(a, a);
        for j in 0..a {
            for k in 0..a {
                if j == k {
                    b1[(j, k)] = draw(&mut g, spec.self_lag_range);
                } else if rng::uniform(&mut g, 0.0, 1.0) < spec.lag_edge_probability {
                    b1[(j, k)] = signed(&mut g, spec.lag_effect_range);
                }
            }
        }
        let scales: Vec<f64> = (0..a).map(|_| rng::uniform(&mut g, 0.5, 1.5)).collect();
        let burn = 100;
        let mut x = Matrix::zeros(spec.length, a);
        let mut prev = vec![0.0; a];
        let mut bounded = true;
        for t in 0..spec.length + burn {
            let mut cur = vec![0.0; a];
            for &j in &order {
                let mut v = uniform_noise(&mut g, scales[j]);
                for k in 0..a {
                    v += b0[(j, k)] * cur[k] + b1[(j, k)] * prev[k];
                }
                cur[j] = v;
            }
            if cur.iter().any(|v| !v.is_finite() || v.abs() > 1e6) {
                bounded = false;
                break;
            }
            if t >= burn {
                x.row_mut(t - burn).copy_from_slice(&cur);
            }
            prev = cur;
        }
        if !bounded {
            continue;
        }
        let mut adjacency = Matrix::zeros(a, a);
        for j in 0..a {
            for k in 0..a {
                if j != k && (b0[(j, k)] != 0.0 || b1[(j, k)] != 0.0) {
                    adjacency[(k, j)] = 1.0;
                }
            }
        }
        let names: Vec<String> = (0..a).map(|j| format!("x{j}")).collect();
        let panel = Panel::from_values("svar", AttributeSchema::plain(&names)?, x)?;
        return Ok(SvarSample { panel, b0, b1, adjacency });
    }
}

/// Directed-edge F1 of `found` against `truth` (both graph layout, diagonal ignored).
pub fn edge_f1(found: &Matrix, truth: &Matrix) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for k in 0..truth.rows() {
        for j in 0..truth.cols() {
            if k == j {
                continue;
            }
            match (found[(k, j)] != 0.0, truth[(k, j)] != 0.0) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
    }
    if tp + fp + fneg == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FleetSpec {
        FleetSpec { n_centers: 3, n_services: 3, length: 120, ..FleetSpec::default() }
    }

    #[test]
    fn noiseless_total_is_gain_weighted_usage_sum() {
        let spec = FleetSpec {
            usage_noise: 0.0,
            traffic_noise: 0.0,
            total_noise: 0.0,
            persistence_range: (0.0, 0.0),
            ..small()
        };
        let (fleet, truth) = generate_fleet(&spec).unwrap();
        for (p, params) in fleet.panels().iter().zip(&truth.centers) {
            for t in 0..p.rows() {
                let expected: f64 = (0..3).map(|s| params.gain[s] * p.get(t, s).unwrap()).sum();
                assert!((p.get(t, 6).unwrap() - expected).abs() < 1e-9 * expected.abs().max(1.0));
            }
        }
    }

    #[test]
    fn same_seed_same_fleet() {
        let a = generate_fleet(&small()).unwrap();
        let b = generate_fleet(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_fleet(&FleetSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_fleet(&FleetSpec { n_centers: 1, ..small() }).is_err());
        assert!(generate_fleet(&FleetSpec { length: 50, ..small() }).is_err());
        assert!(generate_fleet(&FleetSpec { usage_noise: -1.0, ..small() }).is_err());
    }

    #[test]
    fn coldstart_masking() {
        let (fleet, _) = generate_fleet(&FleetSpec::default()).unwrap();
        let sc = make_coldstart_scenario(&fleet, 2, 0, 400).unwrap();
        assert_eq!(sc.fleet, fleet);
        let sc = make_coldstart_scenario(&fleet, 2, 10, 400).unwrap();
        let p = &sc.fleet.panels()[2];
        let masked_cells = p.mask().iter().filter(|o| !**o).count();
        assert_eq!(masked_cells, 400 * 20);
        for t in 400..p.rows() {
            for j in 0..p.cols() {
                assert_eq!(p.get(t, j), sc.truth.get(t, j));
            }
        }
        assert!(make_coldstart_scenario(&fleet, 2, 11, 400).is_err());
    }

    #[test]
    fn svar_is_acyclic_and_deterministic() {
        let s = generate_svar(&SvarSpec::default()).unwrap();
        assert_eq!(s.panel.rows(), 1000);
        assert_eq!(s, generate_svar(&SvarSpec::default()).unwrap());
        // B0 has no 2-cycles and zero diagonal
        for j in 0..5 {
            assert_eq!(s.b0[(j, j)], 0.0);
            for k in 0..5 {
                assert!(s.b0[(j, k)] == 0.0 || s.b0[(k, j)] == 0.0);
            }
        }
    }

    #[test]
    fn f1_examples() {
        let t = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]);
        assert_eq!(edge_f1(&t, &t), 1.0);
        assert_eq!(edge_f1(&Matrix::zeros(2, 2), &t), 0.0);
        assert_eq!(edge_f1(&Matrix::zeros(2, 2), &Matrix::zeros(2, 2)), 1.0);
    }
}
