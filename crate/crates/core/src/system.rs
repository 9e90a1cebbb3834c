//! System constants, mobile users, scenario generation and the four
//! benchmark dataset families.
//!
//! Every random quantity in a [`Scenario`] is derived from a latent uniform
//! (or Gaussian) draw taken from a dedicated ChaCha stream. The dataset
//! generators map the *same* latent draws onto different parameter ranges,
//! so scenarios from neighbouring buckets share common random numbers.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-user energy budget over one time block, in joules.
pub const DEFAULT_ENERGY_BUDGET_J: f64 = 10_000.0;

/// Number of slots in every benchmark dataset.
pub const DATASET_SLOTS: usize = 10;

pub const BUCKET_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
    pub server_cycles_per_sec: f64,
    pub server_cycles_per_bit: f64,
    pub ref_gain: f64,
    pub rician_k: f64,
    pub energy_coeff: f64,
    pub slot_count: usize,
    pub slot_duration_s: f64,
    pub server_pos: [f64; 2],
    pub server_height: f64,
    pub area_side_m: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 10e6,
            noise_power_w: 1e-10,
            server_cycles_per_sec: 30e9,
            server_cycles_per_bit: 900.0,
            ref_gain: 1e-5,
            rician_k: 50.0,
            energy_coeff: 1e-27,
            slot_count: DATASET_SLOTS,
            slot_duration_s: 1.0,
            server_pos: [150.0, 150.0],
            server_height: 20.0,
            area_side_m: 300.0,
        }
    }
}

impl SystemConfig {
    /// Server processing time per offloaded bit, `φ_server / F`.
    pub fn server_secs_per_bit(&self) -> f64 {
        self.server_cycles_per_bit / self.server_cycles_per_sec
    }
}

/// Outcome of [`validate_config`]; empty `violations` means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Validation {
    pub violations: Vec<String>,
}

impl Validation {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(self.violations))
        }
    }
}

pub fn validate_config(config: &SystemConfig) -> Validation {
    let mut violations = Vec::new();
    let mut require = |ok: bool, msg: &str| {
        if !ok {
            violations.push(msg.to_string());
        }
    };
    // Comparisons are written so that NaN fails them.
    require(config.bandwidth_hz > 0.0, "bandwidth_hz must be > 0");
    require(config.noise_power_w > 0.0, "noise_power_w must be > 0");
    require(config.server_cycles_per_sec > 0.0, "server_cycles_per_sec must be > 0");
    require(config.server_cycles_per_bit > 0.0, "server_cycles_per_bit must be > 0");
    require(config.rician_k >= 0.0, "rician_k must be >= 0");
    require(config.ref_gain > 0.0, "ref_gain must be > 0");
    require(config.energy_coeff >= 0.0, "energy_coeff must be >= 0");
    require(config.slot_count >= 1, "slot_count must be >= 1");
    require(config.slot_duration_s > 0.0, "slot_duration_s must be > 0");
    require(config.server_height >= 0.0, "server_height must be >= 0");
    require(config.area_side_m > 0.0, "area_side_m must be > 0");
    require(
        config.server_pos.iter().all(|c| c.is_finite()),
        "server_pos must be finite",
    );
    Validation { violations }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileUser {
    pub id: usize,
    pub cycles_per_sec: f64,
    pub cycles_per_bit: f64,
    pub max_power_w: f64,
    pub energy_budget_j: f64,
}

impl MobileUser {
    /// Local processing time per bit, `φ_k / f_k`.
    pub fn secs_per_bit(&self) -> f64 {
        self.cycles_per_bit / self.cycles_per_sec
    }
}

/// Full input to one simulation run. Outer vectors are indexed by slot,
/// inner vectors by user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: SystemConfig,
    pub users: Vec<MobileUser>,
    pub positions: Vec<Vec<[f64; 2]>>,
    pub task_bits: Vec<Vec<f64>>,
    pub fading_draws: Vec<Vec<Complex64>>,
    pub rng_seed: u64,
}

impl Scenario {
    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn slot_count(&self) -> usize {
        self.config.slot_count
    }

    /// Checks the shape and range invariants of a (possibly hand-edited)
    /// scenario.
    pub fn validate(&self) -> Result<()> {
        let mut v = validate_config(&self.config).violations;
        let t = self.config.slot_count;
        let k = self.users.len();
        if k == 0 {
            v.push("scenario has no users".into());
        }
        for (name, rows) in [
            ("positions", self.positions.len()),
            ("task_bits", self.task_bits.len()),
            ("fading_draws", self.fading_draws.len()),
        ] {
            if rows != t {
                v.push(format!("{name} has {rows} slots, expected {t}"));
            }
        }
        let side = self.config.area_side_m;
        for (s, row) in self.positions.iter().enumerate() {
            if row.len() != k {
                v.push(format!("positions[{s}] has {} users, expected {k}", row.len()));
            }
            if row
                .iter()
                .any(|p| !(0.0..=side).contains(&p[0]) || !(0.0..=side).contains(&p[1]))
            {
                v.push(format!("positions[{s}] leaves the area"));
            }
        }
        for (s, row) in self.task_bits.iter().enumerate() {
            if row.len() != k {
                v.push(format!("task_bits[{s}] has {} users, expected {k}", row.len()));
            }
            if row.iter().any(|d| !(*d > 0.0)) {
                v.push(format!("task_bits[{s}] has a non-positive entry"));
            }
        }
        for (s, row) in self.fading_draws.iter().enumerate() {
            if row.len() != k {
                v.push(format!("fading_draws[{s}] has {} users, expected {k}", row.len()));
            }
        }
        for u in &self.users {
            if !(u.cycles_per_sec > 0.0
                && u.cycles_per_bit > 0.0
                && u.max_power_w > 0.0
                && u.energy_budget_j > 0.0)
            {
                v.push(format!("user {} has a non-positive parameter", u.id));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fading {
    /// `h̄ ~ CN(0, 1)`, drawn independently per user and slot.
    #[default]
    Rician,
    /// `h̄ = 0`: only the line-of-sight component remains.
    Deterministic,
}

/// Knobs for scenario generation that are not part of [`SystemConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioOptions {
    pub user_count: usize,
    pub speed_m_per_slot: f64,
    pub max_power_w: f64,
    pub energy_budget_j: f64,
    pub fading: Fading,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            user_count: 10,
            speed_m_per_slot: 5.0,
            max_power_w: 2.0,
            energy_budget_j: DEFAULT_ENERGY_BUDGET_J,
            fading: Fading::Rician,
        }
    }
}

impl ScenarioOptions {
    pub fn with_users(user_count: usize) -> Self {
        Self {
            user_count,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DatasetKind {
    Dscc,
    Dusd,
    Dup,
    Ducc,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 4] = [Self::Dscc, Self::Dusd, Self::Dup, Self::Ducc];

    /// Parameter range of a bucket, in SI units (s/bit, bits, W, s/bit).
    /// DSCC buckets are single points, so `lo == hi`.
    pub fn bucket_range(self, bucket: usize) -> Result<(f64, f64)> {
        if bucket >= BUCKET_COUNT {
            return Err(Error::BadBucket(bucket));
        }
        let b = bucket as f64;
        Ok(match self {
            Self::Dscc => {
                let v = (b + 1.0) * 1e-8;
                (v, v)
            }
            Self::Dusd => ((0.5 + b) * 1e6, (1.0 + b) * 1e6),
            Self::Dup => (0.75 + 0.25 * b, 1.0 + 0.25 * b),
            Self::Ducc => ((0.5 + 0.5 * b) * 1e-6, (1.0 + 0.5 * b) * 1e-6),
        })
    }

    /// X-axis value used for plot data: the bucket's upper bound, in the
    /// units the datasets are usually quoted in (s/bit, Mbit, W, s/bit).
    pub fn x_value(self, bucket: usize) -> Result<f64> {
        let (_, hi) = self.bucket_range(bucket)?;
        Ok(match self {
            Self::Dusd => hi / 1e6,
            _ => hi,
        })
    }

    pub fn parameter_name(self) -> &'static str {
        match self {
            Self::Dscc => "server_secs_per_bit",
            Self::Dusd => "max_data_mbit",
            Self::Dup => "max_power_w",
            Self::Ducc => "user_secs_per_bit",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dscc => "DSCC",
            Self::Dusd => "DUSD",
            Self::Dup => "DUP",
            Self::Ducc => "DUCC",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DSCC" => Ok(Self::Dscc),
            "DUSD" => Ok(Self::Dusd),
            "DUP" => Ok(Self::Dup),
            "DUCC" => Ok(Self::Ducc),
            _ => Err(Error::UnknownDataset(s.to_string())),
        }
    }
}

/// A dataset family together with one of its five parameter buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub bucket: usize,
}

impl Dataset {
    pub fn new(kind: DatasetKind, bucket: usize) -> Result<Self> {
        kind.bucket_range(bucket)?;
        Ok(Self { kind, bucket })
    }
}

// Stream ids for the latent draws. Keep these stable: changing one changes
// every generated scenario.
const STREAM_PLACEMENT: u64 = 1;
const STREAM_USERS: u64 = 2;
const STREAM_TASKS: u64 = 3;
const STREAM_FADING: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Seed-determined uniforms and Gaussians that every generator maps onto
/// concrete parameter ranges.
struct LatentDraws {
    positions: Vec<Vec<[f64; 2]>>,
    capability_u: Vec<f64>,
    cycles_per_bit_u: Vec<f64>,
    power_u: Vec<f64>,
    secs_per_bit_u: Vec<f64>,
    data_u: Vec<Vec<f64>>,
    fading: Vec<Vec<Complex64>>,
}

impl LatentDraws {
    fn draw(config: &SystemConfig, options: &ScenarioOptions, seed: u64) -> Self {
        let k = options.user_count;
        let t = config.slot_count;

        let mut rng = stream(seed, STREAM_PLACEMENT);
        let positions = random_waypoint(&mut rng, k, t, config.area_side_m, options.speed_m_per_slot);

        let mut rng = stream(seed, STREAM_USERS);
        let draw_k = |rng: &mut ChaCha8Rng| (0..k).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
        let capability_u = draw_k(&mut rng);
        let cycles_per_bit_u = draw_k(&mut rng);
        let power_u = draw_k(&mut rng);
        let secs_per_bit_u = draw_k(&mut rng);

        let mut rng = stream(seed, STREAM_TASKS);
        let data_u = (0..t)
            .map(|_| (0..k).map(|_| rng.random::<f64>()).collect())
            .collect();

        let mut rng = stream(seed, STREAM_FADING);
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let fading = (0..t)
            .map(|_| {
                (0..k)
                    .map(|_| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex64::new(re * scale, im * scale)
                    })
                    .collect()
            })
            .collect();

        Self {
            positions,
            capability_u,
            cycles_per_bit_u,
            power_u,
            secs_per_bit_u,
            data_u,
            fading,
        }
    }
}

/// Random-waypoint mobility inside `[0, side]²`. Each user walks toward a
/// uniform waypoint at `speed` metres per slot and picks a new waypoint on
/// arrival. Slot 0 is the uniform initial placement.
fn random_waypoint(
    rng: &mut ChaCha8Rng,
    users: usize,
    slots: usize,
    side: f64,
    speed: f64,
) -> Vec<Vec<[f64; 2]>> {
    let point = |rng: &mut ChaCha8Rng| [rng.random::<f64>() * side, rng.random::<f64>() * side];
    let mut current: Vec<[f64; 2]> = (0..users).map(|_| point(rng)).collect();
    let mut waypoints: Vec<[f64; 2]> = (0..users).map(|_| point(rng)).collect();
    let mut out = Vec::with_capacity(slots);
    for _ in 0..slots {
        out.push(current.clone());
        for (pos, wp) in current.iter_mut().zip(waypoints.iter_mut()) {
            let (dx, dy) = (wp[0] - pos[0], wp[1] - pos[1]);
            let dist = dx.hypot(dy);
            if dist <= speed {
                *pos = *wp;
                *wp = point(rng);
            } else {
                pos[0] += dx / dist * speed;
                pos[1] += dy / dist * speed;
            }
        }
    }
    out
}

fn lerp(lo: f64, hi: f64, u: f64) -> f64 {
    lo + u * (hi - lo)
}

fn cycles_per_bit_from(u: f64) -> f64 {
    (500.0 + (u * 1001.0).floor()).min(1500.0)
}

fn build(
    config: SystemConfig,
    options: &ScenarioOptions,
    latent: LatentDraws,
    seed: u64,
) -> Scenario {
    let users = (0..options.user_count)
        .map(|k| MobileUser {
            id: k,
            cycles_per_sec: lerp(0.5e9, 2e9, latent.capability_u[k]),
            cycles_per_bit: cycles_per_bit_from(latent.cycles_per_bit_u[k]),
            max_power_w: options.max_power_w,
            energy_budget_j: options.energy_budget_j,
        })
        .collect();
    let task_bits = latent
        .data_u
        .iter()
        .map(|row| row.iter().map(|&u| lerp(0.5e6, 5e6, u)).collect())
        .collect();
    let fading_draws = match options.fading {
        Fading::Rician => latent.fading,
        Fading::Deterministic => latent
            .fading
            .iter()
            .map(|row| vec![Complex64::new(0.0, 0.0); row.len()])
            .collect(),
    };
    Scenario {
        config,
        users,
        positions: latent.positions,
        task_bits,
        fading_draws,
        rng_seed: seed,
    }
}

fn check_options(options: &ScenarioOptions) -> Result<()> {
    if options.user_count == 0 {
        return Err(Error::Precondition("user_count must be >= 1".into()));
    }
    if !(options.max_power_w > 0.0 && options.energy_budget_j > 0.0 && options.speed_m_per_slot >= 0.0) {
        return Err(Error::Precondition(
            "max_power_w and energy_budget_j must be > 0, speed_m_per_slot >= 0".into(),
        ));
    }
    Ok(())
}

/// Scenario with `user_count` users and default generation options.
pub fn generate_scenario(config: &SystemConfig, user_count: usize, seed: u64) -> Result<Scenario> {
    generate_scenario_with(config, &ScenarioOptions::with_users(user_count), seed)
}

pub fn generate_scenario_with(
    config: &SystemConfig,
    options: &ScenarioOptions,
    seed: u64,
) -> Result<Scenario> {
    validate_config(config).into_result()?;
    check_options(options)?;
    let latent = LatentDraws::draw(config, options, seed);
    Ok(build(config.clone(), options, latent, seed))
}

/// Ten-slot scenario whose swept parameter is drawn from the dataset's
/// bucket. Non-swept parameters follow the defaults of
/// [`generate_scenario_with`] and share its latent draws.
pub fn generate_dataset(
    dataset: Dataset,
    base: &SystemConfig,
    options: &ScenarioOptions,
    seed: u64,
) -> Result<Scenario> {
    let (lo, hi) = dataset.kind.bucket_range(dataset.bucket)?;
    let mut config = base.clone();
    config.slot_count = DATASET_SLOTS;
    validate_config(&config).into_result()?;
    check_options(options)?;

    let latent = LatentDraws::draw(&config, options, seed);
    let data_u = latent.data_u.clone();
    let power_u = latent.power_u.clone();
    let spb_u = latent.secs_per_bit_u.clone();
    let mut scenario = build(config, options, latent, seed);

    match dataset.kind {
        DatasetKind::Dscc => {
            // Hold φ_server, scale F.
            let c = &mut scenario.config;
            c.server_cycles_per_sec = c.server_cycles_per_bit / lo;
        }
        DatasetKind::Dusd => {
            for (row, us) in scenario.task_bits.iter_mut().zip(&data_u) {
                for (d, &u) in row.iter_mut().zip(us) {
                    *d = lerp(lo, hi, u);
                }
            }
        }
        DatasetKind::Dup => {
            for (user, &u) in scenario.users.iter_mut().zip(&power_u) {
                user.max_power_w = lerp(lo, hi, u);
            }
        }
        DatasetKind::Ducc => {
            // Hold φ_k, vary f_k so that φ_k / f_k lands in the bucket.
            for (user, &u) in scenario.users.iter_mut().zip(&spb_u) {
                user.cycles_per_sec = user.cycles_per_bit / lerp(lo, hi, u);
            }
        }
    }
    Ok(scenario)
}
