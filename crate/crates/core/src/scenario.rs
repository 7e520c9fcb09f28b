//! Hexagonal multi-cell simulation world: antenna and user placement,
//! large-scale and fast fading, serving-antenna selection, co-channel
//! scheduling, and the normalization that turns raw gains into a
//! [`ProblemInstance`].
//!
//! Every random draw flows from one 64-bit seed; separate ChaCha streams are
//! used for placement, channel draws and scheduling so that changing one stage
//! does not perturb the others.

use std::f64::consts::PI;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{db_to_linear, AccessMap, ProblemInstance, ValidationReport};

pub const DEFAULT_SPACING_M: f64 = 1000.0;
pub const ANTENNAS_PER_CELL: usize = 7;
pub const MIN_USER_DISTANCE_M: f64 = 10.0;
pub const SHADOWING_STD_DB: f64 = 8.0;

const STREAM_TOPOLOGY: u64 = 0;
const STREAM_CHANNEL: u64 = 1;
const STREAM_SCHEDULE: u64 = 2;
const STREAM_INSTANCE: u64 = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("path loss is undefined below 1 m (got {0} m)")]
    DistanceTooSmall(f64),
    #[error("serving count {count} must be between 1 and the number of antennas ({antennas})")]
    ServingCount { count: usize, antennas: usize },
    #[error("invalid scenario parameter: {0}")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Validation(#[from] ValidationReport),
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Positions of antennas and users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub antenna_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    /// Base station (cell) that owns each antenna.
    pub bs_of_antenna: Vec<usize>,
    pub spacing: f64,
}

impl Topology {
    pub fn num_antennas(&self) -> usize {
        self.antenna_positions.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn num_base_stations(&self) -> usize {
        self.bs_of_antenna.iter().map(|b| b + 1).max().unwrap_or(0)
    }

    pub fn distance(&self, antenna: usize, user: usize) -> f64 {
        self.antenna_positions[antenna].distance(&self.user_positions[user])
    }
}

/// Cell centers: points of the sublattice spanned by `2 a1 + a2` and its 60
/// degree rotation, nearest first. Seven-antenna clusters around these
/// centers tile the triangular antenna lattice without overlap.
fn cell_centers(cells: usize, spacing: f64) -> Vec<Point> {
    let a1 = Point::new(spacing, 0.0);
    let a2 = Point::new(spacing / 2.0, spacing * 3f64.sqrt() / 2.0);
    // b1 = 2 a1 + a2, b2 = -a1 + 3 a2
    let b1 = Point::new(2.0 * a1.x + a2.x, 2.0 * a1.y + a2.y);
    let b2 = Point::new(-a1.x + 3.0 * a2.x, -a1.y + 3.0 * a2.y);
    let mut radius = 1i64;
    loop {
        let mut pts = Vec::new();
        for i in -radius..=radius {
            for j in -radius..=radius {
                let x = i as f64 * b1.x + j as f64 * b2.x;
                let y = i as f64 * b1.y + j as f64 * b2.y;
                // rounded ring index keeps the ordering exact across float noise
                let ring = ((x * x + y * y) / (7.0 * spacing * spacing)).round() as i64;
                let mut angle = y.atan2(x);
                if angle < -1e-9 {
                    angle += 2.0 * PI;
                }
                pts.push((ring, angle, Point::new(x, y)));
            }
        }
        pts.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        // i^2 + ij + j^2 >= 3/4 max(|i|, |j|)^2, so these rings fit in the window
        let complete: Vec<_> = pts.into_iter().filter(|p| 4 * p.0 <= 3 * radius * radius).collect();
        if complete.len() >= cells {
            return complete.into_iter().take(cells).map(|p| p.2).collect();
        }
        radius += 1;
    }
}

/// Uniform point inside the Voronoi hexagon (inradius `spacing / 2`) of a
/// lattice point at the origin.
fn sample_hexagon(rng: &mut ChaCha8Rng, spacing: f64) -> Point {
    let inradius = spacing / 2.0;
    let circumradius = spacing / 3f64.sqrt();
    loop {
        let x = rng.random_range(-inradius..=inradius);
        let y = rng.random_range(-circumradius..=circumradius);
        let inside = (0..3).all(|m| {
            let t = m as f64 * PI / 3.0;
            (x * t.cos() + y * t.sin()).abs() <= inradius
        });
        if inside {
            return Point::new(x, y);
        }
    }
}

/// Builds `cells` seven-antenna cells (one center antenna, six boundary antennas
/// at distance `spacing`) and drops `cells * users_per_cell` users uniformly over
/// the network footprint, at least 10 m from every antenna.
pub fn generate_topology(cells: usize, spacing: f64, users_per_cell: usize, seed: u64) -> Topology {
    assert!(cells >= 1 && spacing > 0.0, "need at least one cell and positive spacing");
    let mut antenna_positions = Vec::with_capacity(cells * ANTENNAS_PER_CELL);
    let mut bs_of_antenna = Vec::with_capacity(cells * ANTENNAS_PER_CELL);
    for (bs, center) in cell_centers(cells, spacing).into_iter().enumerate() {
        antenna_positions.push(center);
        bs_of_antenna.push(bs);
        for m in 0..6 {
            let t = m as f64 * PI / 3.0;
            antenna_positions.push(Point::new(center.x + spacing * t.cos(), center.y + spacing * t.sin()));
            bs_of_antenna.push(bs);
        }
    }
    let mut rng = rng_for(seed, STREAM_TOPOLOGY);
    let num_users = cells * users_per_cell;
    let mut user_positions = Vec::with_capacity(num_users);
    while user_positions.len() < num_users {
        let anchor = antenna_positions[rng.random_range(0..antenna_positions.len())];
        let offset = sample_hexagon(&mut rng, spacing);
        let p = Point::new(anchor.x + offset.x, anchor.y + offset.y);
        if antenna_positions.iter().all(|a| a.distance(&p) >= MIN_USER_DISTANCE_M) {
            user_positions.push(p);
        }
    }
    Topology {
        antenna_positions,
        user_positions,
        bs_of_antenna,
        spacing,
    }
}

/// Urban-macro path loss `34.5 + 35 log10(d)` in dB.
pub fn path_loss_db(distance_m: f64) -> Result<f64, ScenarioError> {
    if !(distance_m >= 1.0) {
        return Err(ScenarioError::DistanceTooSmall(distance_m));
    }
    Ok(34.5 + 35.0 * distance_m.log10())
}

/// Antenna-major dense matrix of per-pair values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMatrix {
    pub num_antennas: usize,
    pub num_users: usize,
    pub data: Vec<f64>,
}

impl PairMatrix {
    pub fn new(num_antennas: usize, num_users: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), num_antennas * num_users);
        Self {
            num_antennas,
            num_users,
            data,
        }
    }

    pub fn filled(num_antennas: usize, num_users: usize, value: f64) -> Self {
        Self::new(num_antennas, num_users, vec![value; num_antennas * num_users])
    }

    #[inline]
    pub fn get(&self, antenna: usize, user: usize) -> f64 {
        self.data[antenna * self.num_users + user]
    }

    pub fn set(&mut self, antenna: usize, user: usize, value: f64) {
        self.data[antenna * self.num_users + user] = value;
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.num_antennas, self.num_users, self.data.iter().map(|v| v * factor).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Standard deviation of log-normal shadowing; zero disables it.
    pub shadowing_std_db: f64,
    /// Unit-mean exponential power fading; `false` fixes it at 1.
    pub rayleigh: bool,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            shadowing_std_db: SHADOWING_STD_DB,
            rayleigh: true,
        }
    }
}

/// Per-pair channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    /// Path loss plus shadowing (dB); the quantity used for antenna selection.
    pub large_scale_db: PairMatrix,
    /// `|h_kn|^2`, including fast fading.
    pub raw_gain: PairMatrix,
}

/// Draws shadowing and fading independently for every `(antenna, user)` pair.
pub fn draw_channel(topology: &Topology, model: ChannelModel, seed: u64) -> ChannelDraw {
    let k_count = topology.num_antennas();
    let n_count = topology.num_users();
    let mut rng = rng_for(seed, STREAM_CHANNEL);
    let shadow = Normal::new(0.0, model.shadowing_std_db.max(0.0)).expect("finite shadowing std");
    let mut large = Vec::with_capacity(k_count * n_count);
    let mut raw = Vec::with_capacity(k_count * n_count);
    for k in 0..k_count {
        for n in 0..n_count {
            let pl = path_loss_db(topology.distance(k, n).max(1.0)).expect("clamped distance");
            let x: f64 = shadow.sample(&mut rng);
            let f: f64 = if model.rayleigh { Exp1.sample(&mut rng) } else { 1.0 };
            let ls = pl + x;
            large.push(ls);
            raw.push(db_to_linear(-ls) * f);
        }
    }
    ChannelDraw {
        large_scale_db: PairMatrix::new(k_count, n_count, large),
        raw_gain: PairMatrix::new(k_count, n_count, raw),
    }
}

/// Picks, for each user, the `count` antennas with the smallest large-scale
/// loss; ties go to the lower antenna index.
pub fn select_serving_antennas(large_scale_db: &PairMatrix, count: usize) -> Result<AccessMap, ScenarioError> {
    let k_count = large_scale_db.num_antennas;
    if count == 0 || count > k_count {
        return Err(ScenarioError::ServingCount {
            count,
            antennas: k_count,
        });
    }
    let serving = (0..large_scale_db.num_users)
        .map(|n| {
            let mut order: Vec<usize> = (0..k_count).collect();
            order.sort_by(|&a, &b| {
                large_scale_db
                    .get(a, n)
                    .total_cmp(&large_scale_db.get(b, n))
                    .then(a.cmp(&b))
            });
            order.truncate(count);
            order
        })
        .collect();
    Ok(AccessMap::new(k_count, serving)?)
}

/// Channel assignment and the co-channel interferers of each user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub channel_of_user: Vec<usize>,
    pub num_channels: usize,
    /// `I(n)`: `(antenna, user)` pairs transmitting on user n's channel to
    /// another user.
    pub interference: Vec<Vec<(usize, usize)>>,
}

impl Schedule {
    /// Rebuilds interference sets from a channel assignment.
    pub fn from_channels(access: &AccessMap, channel_of_user: Vec<usize>) -> Self {
        let num_channels = channel_of_user.iter().map(|c| c + 1).max().unwrap_or(0);
        let mut members = vec![Vec::new(); num_channels];
        for (n, &ch) in channel_of_user.iter().enumerate() {
            members[ch].push(n);
        }
        let interference = (0..access.num_users())
            .map(|n| {
                let mut set = Vec::new();
                for &m in &members[channel_of_user[n]] {
                    if m != n {
                        set.extend(access.serving(m).iter().map(|&k| (k, m)));
                    }
                }
                set
            })
            .collect();
        Self {
            channel_of_user,
            num_channels,
            interference,
        }
    }

    pub fn partners(&self, user: usize) -> impl Iterator<Item = usize> + '_ {
        let ch = self.channel_of_user[user];
        self.channel_of_user
            .iter()
            .enumerate()
            .filter(move |&(m, &c)| c == ch && m != user)
            .map(|(m, _)| m)
    }
}

fn disjoint(a: &[usize], b: &[usize]) -> bool {
    // both sorted ascending
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return false,
        }
    }
    true
}

/// Greedy pairing in a seeded random order: each unpaired user takes the
/// first later unpaired user with a disjoint serving set as its co-channel
/// partner; users left over get a channel of their own.
pub fn schedule_users(access: &AccessMap, seed: u64) -> Schedule {
    let n_count = access.num_users();
    let mut order: Vec<usize> = (0..n_count).collect();
    order.shuffle(&mut rng_for(seed, STREAM_SCHEDULE));
    let mut channel = vec![usize::MAX; n_count];
    let mut next = 0;
    for (pos, &u) in order.iter().enumerate() {
        if channel[u] != usize::MAX {
            continue;
        }
        channel[u] = next;
        if let Some(&v) = order[pos + 1..]
            .iter()
            .find(|&&v| channel[v] == usize::MAX && disjoint(access.serving(u), access.serving(v)))
        {
            channel[v] = next;
        }
        next += 1;
    }
    Schedule::from_channels(access, channel)
}

/// Receiver noise chain; the defaults give -109 dBm of noise and a -104 dBm
/// conservative noise-plus-interference level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub thermal_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    /// Extra headroom for residual interference.
    pub margin_db: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            thermal_dbm_per_hz: -174.0,
            bandwidth_hz: 1e6,
            noise_figure_db: 5.0,
            margin_db: 5.0,
        }
    }
}

impl NoiseModel {
    pub fn noise_dbm(&self) -> f64 {
        self.thermal_dbm_per_hz + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    pub fn peak_dbm(&self) -> f64 {
        self.noise_dbm() + self.margin_db
    }

    /// Noise power in Watts.
    pub fn noise_power(&self) -> f64 {
        crate::model::dbm_to_watts(self.noise_dbm())
    }

    /// `sigma_peak^2` in Watts.
    pub fn peak_power(&self) -> f64 {
        crate::model::dbm_to_watts(self.peak_dbm())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub cells: usize,
    pub spacing_m: f64,
    pub users_per_cell: usize,
    pub serving_count: usize,
    pub channel: ChannelModel,
    pub noise: NoiseModel,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            cells: 7,
            spacing_m: DEFAULT_SPACING_M,
            users_per_cell: 10,
            serving_count: 3,
            channel: ChannelModel::default(),
            noise: NoiseModel::default(),
        }
    }
}

/// One full realization of the simulated network.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelScenario {
    pub topology: Topology,
    pub large_scale_db: PairMatrix,
    pub raw_gain: PairMatrix,
    /// `sigma^2` in Watts.
    pub noise_power: f64,
    /// `sigma_{n,peak}^2` per user, in Watts.
    pub sigma_peak: Vec<f64>,
    pub access: AccessMap,
    pub schedule: Schedule,
    pub seed: u64,
}

impl ChannelScenario {
    pub fn generate(params: &ScenarioParams, seed: u64) -> Result<Self, ScenarioError> {
        if params.cells == 0 || !(params.spacing_m > 0.0) {
            return Err(ScenarioError::InvalidParameter("cells must be >= 1 and spacing > 0"));
        }
        let topology = generate_topology(params.cells, params.spacing_m, params.users_per_cell, seed);
        let draw = draw_channel(&topology, params.channel, seed);
        let access = select_serving_antennas(&draw.large_scale_db, params.serving_count)?;
        let schedule = schedule_users(&access, seed);
        let sigma_peak = vec![params.noise.peak_power(); topology.num_users()];
        Ok(Self {
            topology,
            large_scale_db: draw.large_scale_db,
            raw_gain: draw.raw_gain,
            noise_power: params.noise.noise_power(),
            sigma_peak,
            access,
            schedule,
            seed,
        })
    }

    pub fn num_users(&self) -> usize {
        self.access.num_users()
    }

    pub fn num_antennas(&self) -> usize {
        self.access.num_antennas()
    }

    /// Actual noise plus co-channel interference at user `n` under powers `p`.
    pub fn interference_plus_noise(&self, p: &[f64], user: usize) -> f64 {
        let mut total = self.noise_power;
        for &(k, m) in &self.schedule.interference[user] {
            if let Some(i) = self.access.var_index(k, m) {
                total += self.raw_gain.get(k, user) * p[i];
            }
        }
        total
    }

    pub fn write_gains_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "antenna,user,gain_linear")?;
        for k in 0..self.raw_gain.num_antennas {
            for n in 0..self.raw_gain.num_users {
                writeln!(out, "{},{},{}", k, n, self.raw_gain.get(k, n))?;
            }
        }
        Ok(())
    }

    pub fn to_document(&self) -> ScenarioDocument {
        let mut gains = Vec::with_capacity(self.raw_gain.data.len());
        let mut large = Vec::with_capacity(self.raw_gain.data.len());
        for k in 0..self.raw_gain.num_antennas {
            for n in 0..self.raw_gain.num_users {
                gains.push((k, n, self.raw_gain.get(k, n)));
                large.push((k, n, self.large_scale_db.get(k, n)));
            }
        }
        ScenarioDocument {
            seed: self.seed,
            antenna_positions: self.topology.antenna_positions.clone(),
            user_positions: self.topology.user_positions.clone(),
            bs_of_antenna: self.topology.bs_of_antenna.clone(),
            spacing: self.topology.spacing,
            gains,
            large_scale_db: large,
            noise_power: self.noise_power,
            sigma_peak: self.sigma_peak.clone(),
            serving_sets: self.access.serving_sets().to_vec(),
            channel_of_user: self.schedule.channel_of_user.clone(),
        }
    }

    pub fn from_document(doc: ScenarioDocument) -> Result<Self, ScenarioError> {
        let k_count = doc.antenna_positions.len();
        let n_count = doc.user_positions.len();
        if doc.bs_of_antenna.len() != k_count
            || doc.sigma_peak.len() != n_count
            || doc.channel_of_user.len() != n_count
            || doc.serving_sets.len() != n_count
        {
            return Err(ScenarioError::InvalidParameter("scenario document dimensions disagree"));
        }
        let mut raw = PairMatrix::filled(k_count, n_count, f64::NAN);
        let mut large = PairMatrix::filled(k_count, n_count, f64::NAN);
        for (matrix, triplets) in [(&mut raw, &doc.gains), (&mut large, &doc.large_scale_db)] {
            for &(k, n, v) in triplets {
                if k >= k_count || n >= n_count {
                    return Err(ScenarioError::InvalidParameter("gain triplet out of range"));
                }
                matrix.set(k, n, v);
            }
            if matrix.data.iter().any(|v| v.is_nan()) {
                return Err(ScenarioError::InvalidParameter("gain matrix incomplete"));
            }
        }
        let access = AccessMap::new(k_count, doc.serving_sets)?;
        if doc.channel_of_user.iter().any(|&c| c >= n_count.max(1)) {
            return Err(ScenarioError::InvalidParameter("channel index out of range"));
        }
        let schedule = Schedule::from_channels(&access, doc.channel_of_user);
        Ok(Self {
            topology: Topology {
                antenna_positions: doc.antenna_positions,
                user_positions: doc.user_positions,
                bs_of_antenna: doc.bs_of_antenna,
                spacing: doc.spacing,
            },
            large_scale_db: large,
            raw_gain: raw,
            noise_power: doc.noise_power,
            sigma_peak: doc.sigma_peak,
            access,
            schedule,
            seed: doc.seed,
        })
    }
}

/// JSON form of a scenario; gains are `(antenna, user, value)` triplets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub seed: u64,
    pub antenna_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    pub bs_of_antenna: Vec<usize>,
    pub spacing: f64,
    pub gains: Vec<(usize, usize, f64)>,
    pub large_scale_db: Vec<(usize, usize, f64)>,
    pub noise_power: f64,
    pub sigma_peak: Vec<f64>,
    pub serving_sets: Vec<Vec<usize>>,
    pub channel_of_user: Vec<usize>,
}

/// Normalized-gain instance: `gamma_kn = |h_kn|^2 / sigma_{n,peak}^2`.
pub fn build_problem_instance(
    scenario: &ChannelScenario,
    weights: Vec<f64>,
    budgets: Vec<f64>,
    proximal: Vec<f64>,
) -> Result<ProblemInstance, ValidationReport> {
    build_instance_normalized(scenario, &scenario.sigma_peak, weights, budgets, proximal)
}

/// Same as [`build_problem_instance`] with an explicit per-user normalizer.
pub fn build_instance_normalized(
    scenario: &ChannelScenario,
    normalizer: &[f64],
    weights: Vec<f64>,
    budgets: Vec<f64>,
    proximal: Vec<f64>,
) -> Result<ProblemInstance, ValidationReport> {
    let access = &scenario.access;
    let gains = (0..access.num_vars())
        .map(|i| {
            let n = access.var_user(i);
            scenario.raw_gain.get(access.var_antenna(i), n) / normalizer[n]
        })
        .collect();
    ProblemInstance::new(access.clone(), gains, weights, budgets, proximal)
}

/// Ranges for [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceShape {
    pub antennas: (usize, usize),
    pub users: (usize, usize),
    pub max_serving: usize,
    pub gain: (f64, f64),
    pub budget: (f64, f64),
    pub weight: (f64, f64),
    pub proximal: f64,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            antennas: (2, 8),
            users: (1, 6),
            max_serving: 3,
            gain: (0.5, 10.0),
            budget: (0.5, 2.0),
            weight: (0.5, 2.0),
            proximal: crate::model::DEFAULT_PROXIMAL,
        }
    }
}

/// Small instance with uniformly drawn sizes, serving sets and parameters.
pub fn random_instance(seed: u64, shape: &InstanceShape) -> ProblemInstance {
    let mut rng = rng_for(seed, STREAM_INSTANCE);
    let k_count = rng.random_range(shape.antennas.0..=shape.antennas.1);
    let n_count = rng.random_range(shape.users.0..=shape.users.1);
    let max_serving = shape.max_serving.clamp(1, k_count);
    let mut antennas: Vec<usize> = (0..k_count).collect();
    let serving: Vec<Vec<usize>> = (0..n_count)
        .map(|_| {
            let size = rng.random_range(1..=max_serving);
            antennas.shuffle(&mut rng);
            antennas[..size].to_vec()
        })
        .collect();
    let access = AccessMap::new(k_count, serving).expect("valid serving sets");
    let mut draw = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..hi) };
    let gains = (0..access.num_vars()).map(|_| draw(shape.gain)).collect();
    let weights = (0..n_count).map(|_| draw(shape.weight)).collect();
    let budgets = (0..k_count).map(|_| draw(shape.budget)).collect();
    ProblemInstance::new(access, gains, weights, budgets, vec![shape.proximal; n_count]).expect("valid instance")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_instances_respect_shape() {
        let shape = InstanceShape::default();
        for seed in 0..50 {
            let inst = random_instance(seed, &shape);
            assert!((2..=8).contains(&inst.num_antennas()));
            assert!((1..=6).contains(&inst.num_users()));
            for n in 0..inst.num_users() {
                assert!((1..=3).contains(&inst.access().serving(n).len()));
            }
            assert!(inst.gains().iter().all(|g| (0.5..10.0).contains(g)));
        }
        assert_eq!(random_instance(7, &shape), random_instance(7, &shape));
    }

    #[test]
    fn seven_cell_topology_size() {
        let t = generate_topology(7, 1000.0, 10, 1);
        assert_eq!(t.num_antennas(), 49);
        assert_eq!(t.num_users(), 70);
        assert_eq!(t.num_base_stations(), 7);
    }

    #[test]
    fn single_cell_no_users() {
        let t = generate_topology(1, 1000.0, 0, 0);
        assert_eq!(t.num_antennas(), 7);
        assert_eq!(t.num_users(), 0);
        assert_eq!(t.antenna_positions[0], Point::new(0.0, 0.0));
    }

    #[test]
    fn antennas_form_a_lattice() {
        let t = generate_topology(7, 1000.0, 0, 0);
        let pos = &t.antenna_positions;
        let mut min = f64::INFINITY;
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                min = min.min(pos[i].distance(&pos[j]));
            }
        }
        assert!((min - 1000.0).abs() < 1e-6);
        // every antenna except the outer rim has six neighbors at distance D
        let neighbors = |i: usize| pos.iter().filter(|q| (q.distance(&pos[i]) - 1000.0).abs() < 1e-6).count();
        assert_eq!(neighbors(0), 6);
        for cell in 0..7 {
            assert_eq!(neighbors(cell * 7), 6);
        }
    }

    #[test]
    fn path_loss_values() {
        assert!((path_loss_db(1000.0).unwrap() - 139.5).abs() < 1e-12);
        assert!((path_loss_db(10.0).unwrap() - 69.5).abs() < 1e-12);
        assert!(path_loss_db(50.0).unwrap() < path_loss_db(51.0).unwrap());
        assert_eq!(path_loss_db(0.5), Err(ScenarioError::DistanceTooSmall(0.5)));
    }

    #[test]
    fn pure_path_loss_channel() {
        let topology = Topology {
            antenna_positions: vec![Point::new(0.0, 0.0)],
            user_positions: vec![Point::new(1000.0, 0.0)],
            bs_of_antenna: vec![0],
            spacing: 1000.0,
        };
        let model = ChannelModel {
            shadowing_std_db: 0.0,
            rayleigh: false,
        };
        let draw = draw_channel(&topology, model, 3);
        let g = draw.raw_gain.get(0, 0);
        assert!((g / 10f64.powf(-13.95) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let mut m = PairMatrix::filled(8, 1, 200.0);
        m.set(2, 0, 100.0);
        m.set(7, 0, 100.0);
        let access = select_serving_antennas(&m, 1).unwrap();
        assert_eq!(access.serving(0), &[2]);
        assert!(select_serving_antennas(&m, 0).is_err());
        assert!(select_serving_antennas(&m, 9).is_err());
    }

    #[test]
    fn nearest_antenna_is_selected() {
        let mut t = generate_topology(1, 1000.0, 0, 0);
        let a5 = t.antenna_positions[5];
        t.user_positions.push(Point::new(a5.x + 12.0, a5.y));
        let model = ChannelModel {
            shadowing_std_db: 0.0,
            rayleigh: true,
        };
        let draw = draw_channel(&t, model, 9);
        let access = select_serving_antennas(&draw.large_scale_db, 1).unwrap();
        assert_eq!(access.serving(0), &[5]);
    }

    #[test]
    fn schedule_examples() {
        let disjoint = AccessMap::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let s = schedule_users(&disjoint, 5);
        assert_eq!(s.num_channels, 1);
        assert_eq!(s.interference[0], vec![(2, 1), (3, 1)]);
        assert_eq!(s.interference[1], vec![(0, 0), (1, 0)]);

        let shared = AccessMap::new(4, vec![vec![0, 3], vec![3, 2]]).unwrap();
        let s = schedule_users(&shared, 5);
        assert_eq!(s.num_channels, 2);
        assert!(s.interference.iter().all(|i| i.is_empty()));

        let clique = AccessMap::new(2, vec![vec![1]; 6]).unwrap();
        assert_eq!(schedule_users(&clique, 1).num_channels, 6);
    }

    #[test]
    fn noise_levels() {
        let noise = NoiseModel::default();
        assert!((noise.peak_dbm() + 104.0).abs() < 1e-12);
        assert!((noise.peak_power() / 10f64.powf(-13.4) - 1.0).abs() < 1e-12);
        assert!((noise.noise_dbm() + 109.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_is_linear() {
        let params = ScenarioParams {
            cells: 1,
            users_per_cell: 3,
            ..ScenarioParams::default()
        };
        let mut sc = ChannelScenario::generate(&params, 4).unwrap();
        let n = sc.num_users();
        let ones = || vec![1.0; n];
        let first = sc.access.serving(0)[0];
        sc.raw_gain.set(first, 0, sc.sigma_peak[0]);
        let inst = build_problem_instance(&sc, ones(), vec![1.0; 7], vec![3.0; n]).unwrap();
        assert!((inst.gain(first, 0).unwrap() - 1.0).abs() < 1e-12);
        sc.raw_gain.set(first, 0, 2.0 * sc.sigma_peak[0]);
        let doubled = build_problem_instance(&sc, ones(), vec![1.0; 7], vec![3.0; n]).unwrap();
        assert!((doubled.gain(first, 0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn document_round_trip_and_csv() {
        let params = ScenarioParams {
            cells: 1,
            users_per_cell: 4,
            ..ScenarioParams::default()
        };
        let sc = ChannelScenario::generate(&params, 11).unwrap();
        let json = serde_json::to_string(&sc.to_document()).unwrap();
        let back = ChannelScenario::from_document(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, sc);
        let mut buf = Vec::new();
        sc.write_gains_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("antenna,user,gain_linear\n0,0,"));
        assert_eq!(text.lines().count(), 1 + 7 * 4);
    }
}
