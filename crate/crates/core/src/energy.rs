//! Radio energy accounting and phone batteries.
//!
//! All bookkeeping is done in integer nanojoules so that the per-run energy
//! ledger balances exactly: every debit is an integer subtraction and the sum
//! of debits telescopes to `initial - remaining` with no rounding. Joule-based
//! accessors convert at the boundary only.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NANOJOULES_PER_JOULE: f64 = 1e9;

/// Radio link used for a transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkMode {
    ThreeG,
    Bluetooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Upload,
    Download,
}

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("battery sample bounds are invalid: min {min_j} > max {max_j}")]
    BadBounds { min_j: f64, max_j: f64 },
    #[error("battery sample mean {mean_j} outside [{min_j}, {max_j}]")]
    MeanOutOfRange { mean_j: f64, min_j: f64, max_j: f64 },
    #[error("negative or non-finite parameter: {0}")]
    BadParameter(&'static str),
}

/// Per-byte transfer costs and link rates.
///
/// Defaults are the calibration used throughout: 3G at 2 Mb/s costing
/// 0.001224 J/byte down and 0.0003375 J/byte up; Bluetooth at 1 Mb/s costing
/// 0.0001377 J/byte down and 0.00012012 J/byte up. Coefficients are stored in
/// integer nanojoules per byte, which represents all four defaults exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    threeg_download_nj_per_byte: u64,
    threeg_upload_nj_per_byte: u64,
    bluetooth_download_nj_per_byte: u64,
    bluetooth_upload_nj_per_byte: u64,
    threeg_rate_bps: f64,
    bluetooth_rate_bps: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            threeg_download_nj_per_byte: 1_224_000,
            threeg_upload_nj_per_byte: 337_500,
            bluetooth_download_nj_per_byte: 137_700,
            bluetooth_upload_nj_per_byte: 120_120,
            threeg_rate_bps: 2_000_000.0,
            bluetooth_rate_bps: 1_000_000.0,
        }
    }
}

impl EnergyModel {
    /// Energy to move `bytes` over `mode` in `direction`, in nanojoules.
    pub fn tx_energy_nj(&self, mode: LinkMode, direction: Direction, bytes: u64) -> u64 {
        let coeff = match (mode, direction) {
            (LinkMode::ThreeG, Direction::Download) => self.threeg_download_nj_per_byte,
            (LinkMode::ThreeG, Direction::Upload) => self.threeg_upload_nj_per_byte,
            (LinkMode::Bluetooth, Direction::Download) => self.bluetooth_download_nj_per_byte,
            (LinkMode::Bluetooth, Direction::Upload) => self.bluetooth_upload_nj_per_byte,
        };
        (coeff as u128 * bytes as u128).min(u64::MAX as u128) as u64
    }

    /// Energy in joules; transfers scale linearly with size and a zero-byte
    /// transfer is free.
    pub fn tx_energy_j(&self, mode: LinkMode, direction: Direction, bytes: u64) -> f64 {
        self.tx_energy_nj(mode, direction, bytes) as f64 / NANOJOULES_PER_JOULE
    }

    /// Wall-clock transfer time in seconds: `bytes * 8 / rate`.
    pub fn tx_time_s(&self, mode: LinkMode, bytes: u64) -> f64 {
        let rate = match mode {
            LinkMode::ThreeG => self.threeg_rate_bps,
            LinkMode::Bluetooth => self.bluetooth_rate_bps,
        };
        bytes as f64 * 8.0 / rate
    }

    pub fn set_coefficient_j_per_byte(
        &mut self,
        mode: LinkMode,
        direction: Direction,
        j_per_byte: f64,
    ) -> Result<(), EnergyError> {
        if !j_per_byte.is_finite() || j_per_byte < 0.0 {
            return Err(EnergyError::BadParameter("coefficient_j_per_byte"));
        }
        let nj = (j_per_byte * NANOJOULES_PER_JOULE).round() as u64;
        match (mode, direction) {
            (LinkMode::ThreeG, Direction::Download) => self.threeg_download_nj_per_byte = nj,
            (LinkMode::ThreeG, Direction::Upload) => self.threeg_upload_nj_per_byte = nj,
            (LinkMode::Bluetooth, Direction::Download) => self.bluetooth_download_nj_per_byte = nj,
            (LinkMode::Bluetooth, Direction::Upload) => self.bluetooth_upload_nj_per_byte = nj,
        }
        Ok(())
    }

    pub fn set_rate_bps(&mut self, mode: LinkMode, rate_bps: f64) -> Result<(), EnergyError> {
        if !rate_bps.is_finite() || rate_bps <= 0.0 {
            return Err(EnergyError::BadParameter("rate_bps"));
        }
        match mode {
            LinkMode::ThreeG => self.threeg_rate_bps = rate_bps,
            LinkMode::Bluetooth => self.bluetooth_rate_bps = rate_bps,
        }
        Ok(())
    }
}

/// Result of a battery debit. `drained` is terminal: the phone never becomes
/// active again once its charge reaches zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Debit {
    pub drawn_nj: u64,
    pub drained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Battery {
    remaining_nj: u64,
    capacity_nj: u64,
}

impl Battery {
    pub fn from_j(remaining_j: f64, capacity_j: f64) -> Battery {
        let remaining_nj = (remaining_j.max(0.0) * NANOJOULES_PER_JOULE).round() as u64;
        let capacity_nj = (capacity_j.max(0.0) * NANOJOULES_PER_JOULE).round() as u64;
        Battery {
            remaining_nj: remaining_nj.min(capacity_nj),
            capacity_nj,
        }
    }

    pub fn remaining_nj(&self) -> u64 {
        self.remaining_nj
    }

    pub fn remaining_j(&self) -> f64 {
        self.remaining_nj as f64 / NANOJOULES_PER_JOULE
    }

    pub fn capacity_j(&self) -> f64 {
        self.capacity_nj as f64 / NANOJOULES_PER_JOULE
    }

    pub fn is_empty(&self) -> bool {
        self.remaining_nj == 0
    }

    /// Withdraw up to `nj`. An overdraw clamps the charge to zero and keeps
    /// only what was actually available; reaching zero signals `drained`.
    pub fn debit_nj(&mut self, nj: u64) -> Debit {
        if nj >= self.remaining_nj {
            let drawn = self.remaining_nj;
            self.remaining_nj = 0;
            Debit {
                drawn_nj: drawn,
                drained: true,
            }
        } else {
            self.remaining_nj -= nj;
            Debit {
                drawn_nj: nj,
                drained: false,
            }
        }
    }
}

/// Draw an initial charge from a normal truncated to `[min_j, max_j]` by
/// resampling; capacity is `max_j`. `sd_j = 0` degenerates to the mean.
pub fn sample_initial_battery<R: Rng + ?Sized>(
    rng: &mut R,
    mean_j: f64,
    sd_j: f64,
    min_j: f64,
    max_j: f64,
) -> Result<Battery, EnergyError> {
    if !(min_j.is_finite() && max_j.is_finite()) || min_j > max_j {
        return Err(EnergyError::BadBounds {
            min_j,
            max_j,
        });
    }
    if !(min_j..=max_j).contains(&mean_j) {
        return Err(EnergyError::MeanOutOfRange {
            mean_j,
            min_j,
            max_j,
        });
    }
    if !sd_j.is_finite() || sd_j < 0.0 {
        return Err(EnergyError::BadParameter("sd_j"));
    }
    if sd_j == 0.0 {
        return Ok(Battery::from_j(mean_j, max_j));
    }
    let dist = Normal::new(mean_j, sd_j).map_err(|_| EnergyError::BadParameter("sd_j"))?;
    // The mean lies inside the window, so acceptance probability is far from
    // zero; the cap only guards against pathological configurations.
    for _ in 0..100_000 {
        let draw = dist.sample(rng);
        if (min_j..=max_j).contains(&draw) {
            return Ok(Battery::from_j(draw, max_j));
        }
    }
    Ok(Battery::from_j(mean_j, max_j))
}

/// Initial-charge distribution of the phone population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub mean_j: f64,
    pub sd_j: f64,
    pub min_j: f64,
    pub max_j: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryParams {
            mean_j: 1_500.0,
            sd_j: 500.0,
            min_j: 100.0,
            max_j: 3_000.0,
        }
    }
}

impl BatteryParams {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Battery, EnergyError> {
        sample_initial_battery(rng, self.mean_j, self.sd_j, self.min_j, self.max_j)
    }
}

/// All phone batteries of one run plus the exact debit ledger.
#[derive(Debug, Clone)]
pub struct PhoneFleet {
    batteries: Vec<Battery>,
    active: Vec<bool>,
    initial_total_nj: u64,
    debited_total_nj: u64,
    drained_order: Vec<u32>,
    drained_cursor: usize,
}

impl PhoneFleet {
    pub fn new(batteries: Vec<Battery>) -> PhoneFleet {
        let initial_total_nj = batteries.iter().map(|b| b.remaining_nj()).sum();
        let active = batteries.iter().map(|b| !b.is_empty()).collect();
        PhoneFleet {
            batteries,
            active,
            initial_total_nj,
            debited_total_nj: 0,
            drained_order: Vec::new(),
            drained_cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.batteries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batteries.is_empty()
    }

    pub fn is_active(&self, phone: u32) -> bool {
        self.active.get(phone as usize).copied().unwrap_or(false)
    }

    pub fn remaining_nj(&self, phone: u32) -> u64 {
        self.batteries[phone as usize].remaining_nj()
    }

    pub fn remaining_j(&self, phone: u32) -> f64 {
        self.batteries[phone as usize].remaining_j()
    }

    /// Debit one phone, recording the drawn amount in the run ledger. A debit
    /// that empties the battery deactivates the phone permanently.
    pub fn debit(&mut self, phone: u32, nj: u64) -> Debit {
        let idx = phone as usize;
        let debit = self.batteries[idx].debit_nj(nj);
        self.debited_total_nj += debit.drawn_nj;
        if debit.drained && self.active[idx] {
            self.active[idx] = false;
            self.drained_order.push(phone);
        }
        debit
    }

    pub fn drained_count(&self) -> u32 {
        self.drained_order.len() as u32
    }

    /// Phones drained since the previous call, in drain order.
    pub fn take_new_drained(&mut self) -> Vec<u32> {
        let new = self.drained_order[self.drained_cursor..].to_vec();
        self.drained_cursor = self.drained_order.len();
        new
    }

    pub fn consumed_nj(&self) -> u64 {
        let remaining: u64 = self.batteries.iter().map(|b| b.remaining_nj()).sum();
        self.initial_total_nj - remaining
    }

    pub fn consumed_j(&self) -> f64 {
        self.consumed_nj() as f64 / NANOJOULES_PER_JOULE
    }

    pub fn debited_total_nj(&self) -> u64 {
        self.debited_total_nj
    }

    /// The conservation invariant: debits account for every nanojoule that
    /// left a battery.
    pub fn ledger_balanced(&self) -> bool {
        self.consumed_nj() == self.debited_total_nj
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn threeg_upload_cost_is_exact() {
        let m = EnergyModel::default();
        let j = m.tx_energy_j(LinkMode::ThreeG, Direction::Upload, 10_000);
        assert!((j - 3.375).abs() < 1e-12, "got {j}");
    }

    #[test]
    fn bluetooth_upload_cost_is_exact() {
        let m = EnergyModel::default();
        let j = m.tx_energy_j(LinkMode::Bluetooth, Direction::Upload, 10_000);
        assert!((j - 1.2012).abs() / 1.2012 < 1e-12, "got {j}");
    }

    #[test]
    fn zero_bytes_are_free() {
        let m = EnergyModel::default();
        assert_eq!(m.tx_energy_j(LinkMode::ThreeG, Direction::Download, 0), 0.0);
        assert_eq!(m.tx_time_s(LinkMode::Bluetooth, 0), 0.0);
    }

    #[test]
    fn transfer_times_match_rates() {
        let m = EnergyModel::default();
        assert_eq!(m.tx_time_s(LinkMode::ThreeG, 250_000), 1.0);
        assert_eq!(m.tx_time_s(LinkMode::Bluetooth, 125_000), 1.0);
    }

    #[test]
    fn energy_is_linear_in_bytes() {
        let m = EnergyModel::default();
        for mode in [LinkMode::ThreeG, LinkMode::Bluetooth] {
            for dir in [Direction::Upload, Direction::Download] {
                let one = m.tx_energy_nj(mode, dir, 1);
                for n in [2u64, 17, 1000, 500_000] {
                    assert_eq!(m.tx_energy_nj(mode, dir, n), one * n);
                }
            }
        }
    }

    #[test]
    fn debit_partial_leaves_remainder() {
        let mut b = Battery::from_j(100.0, 100.0);
        let d = b.debit_nj(30_000_000_000);
        assert_eq!(d.drawn_nj, 30_000_000_000);
        assert!(!d.drained);
        assert!((b.remaining_j() - 70.0).abs() < 1e-12);
    }

    #[test]
    fn debit_to_exactly_zero_is_drained() {
        let mut b = Battery::from_j(10.0, 10.0);
        let d = b.debit_nj(10_000_000_000);
        assert_eq!(d.drawn_nj, 10_000_000_000);
        assert!(d.drained);
        assert!(b.is_empty());
    }

    #[test]
    fn overdraw_clamps_and_drains() {
        let mut b = Battery::from_j(5.0, 10.0);
        let d = b.debit_nj(20_000_000_000);
        assert_eq!(d.drawn_nj, 5_000_000_000);
        assert!(d.drained);
        assert!(b.is_empty());
    }

    #[test]
    fn zero_sd_sample_is_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = sample_initial_battery(&mut rng, 1500.0, 0.0, 100.0, 3000.0).unwrap();
        assert_eq!(b.remaining_j(), 1500.0);
        assert_eq!(b.capacity_j(), 3000.0);
    }

    #[test]
    fn samples_respect_truncation_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut sum = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let b = sample_initial_battery(&mut rng, 1500.0, 500.0, 100.0, 3000.0).unwrap();
            let j = b.remaining_j();
            assert!((100.0..=3000.0).contains(&j), "sample {j} out of range");
            sum += j;
        }
        let mean = sum / n as f64;
        assert!(
            (mean - 1500.0).abs() / 1500.0 < 0.05,
            "mean {mean} drifted more than 5%"
        );
    }

    #[test]
    fn fleet_ledger_balances() {
        let mut fleet = PhoneFleet::new(vec![
            Battery::from_j(10.0, 10.0),
            Battery::from_j(200.0, 3000.0),
        ]);
        fleet.debit(0, 4_000_000_000);
        fleet.debit(1, 150_000_000_000);
        fleet.debit(0, 99_000_000_000); // overdraw
        assert!(fleet.ledger_balanced());
        assert_eq!(fleet.drained_count(), 1);
        assert_eq!(fleet.take_new_drained(), vec![0]);
        assert!(fleet.take_new_drained().is_empty());
        assert!(!fleet.is_active(0));
        assert!(fleet.is_active(1));
    }
}
