//! Frequency-dependent conductance data for a binary memristor.
//!
//! A [`ConductanceTable`] holds the measured ON/OFF conductance of one device
//! at a handful of drive frequencies. Lookups between grid points are linear
//! in `log10(frequency)`; nothing is extrapolated past the measured range.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Relative tolerance used to snap a query onto a tabulated grid value.
const GRID_SNAP_REL: f64 = 1e-12;

/// Header line of the table CSV format.
pub const TABLE_CSV_HEADER: &str = "freq_hz,g_off_ms,g_on_ms";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("row {row}: {msg}")]
    Malformed { row: usize, msg: String },
    #[error("row {row}: duplicate frequency {freq_hz} Hz")]
    DuplicateFrequency { row: usize, freq_hz: f64 },
    #[error("row {row}: ON branch is not strictly decreasing in frequency")]
    NonMonotoneOn { row: usize },
    #[error("row {row}: g_on must exceed g_off")]
    OffAboveOn { row: usize },
    #[error("table needs at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("{quantity} {value} outside representable range [{lo}, {hi}]")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("inverse lookup is only supported on the ON branch")]
    UnsupportedBranch,
    #[error("io: {0}")]
    Io(String),
}

/// Binary device state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeviceState {
    On,
    Off,
}

impl fmt::Display for DeviceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceState::On => f.write_str("ON"),
            DeviceState::Off => f.write_str("OFF"),
        }
    }
}

impl FromStr for DeviceState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ON" => Ok(DeviceState::On),
            "OFF" => Ok(DeviceState::Off),
            other => Err(format!("unknown device state `{other}`")),
        }
    }
}

/// One measured grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    pub freq_hz: f64,
    pub g_off_ms: f64,
    pub g_on_ms: f64,
}

impl TableEntry {
    pub const fn new(freq_hz: f64, g_off_ms: f64, g_on_ms: f64) -> Self {
        Self {
            freq_hz,
            g_off_ms,
            g_on_ms,
        }
    }

    fn branch(&self, state: DeviceState) -> f64 {
        match state {
            DeviceState::On => self.g_on_ms,
            DeviceState::Off => self.g_off_ms,
        }
    }
}

/// Measured GeSeSn-W conductances, listed from fastest to slowest drive.
const BUILTIN_ROWS: [TableEntry; 8] = [
    TableEntry::new(10_000.0, 1.71, 2.10),
    TableEntry::new(1_000.0, 1.49, 3.13),
    TableEntry::new(750.0, 1.56, 4.20),
    TableEntry::new(500.0, 2.20, 5.97),
    TableEntry::new(100.0, 2.26, 7.60),
    TableEntry::new(10.0, 1.4, 8.40),
    TableEntry::new(1.0, 1.32, 10.8),
    TableEntry::new(0.5, 1.15, 11.4),
];

/// Validated frequency to conductance map, sorted by ascending frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceTable {
    entries: Vec<TableEntry>,
    source_label: String,
}

impl Default for ConductanceTable {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ConductanceTable {
    /// The built-in GeSeSn-W table.
    pub fn builtin() -> Self {
        Self::from_entries(BUILTIN_ROWS.to_vec(), "GeSeSn-W (built-in)")
            .expect("built-in table is valid")
    }

    /// Validates `entries` and sorts them canonically. Row numbers in errors
    /// are 1-based positions in `entries`.
    pub fn from_entries(
        entries: Vec<TableEntry>,
        source_label: impl Into<String>,
    ) -> Result<Self, DeviceError> {
        let rows: Vec<usize> = (1..=entries.len()).collect();
        Self::validated(entries, rows, source_label.into())
    }

    fn validated(
        entries: Vec<TableEntry>,
        rows: Vec<usize>,
        source_label: String,
    ) -> Result<Self, DeviceError> {
        if entries.len() < 2 {
            return Err(DeviceError::TooFewRows(entries.len()));
        }
        for (e, &row) in entries.iter().zip(&rows) {
            let finite = e.freq_hz.is_finite() && e.g_off_ms.is_finite() && e.g_on_ms.is_finite();
            if !finite || e.freq_hz <= 0.0 || e.g_off_ms <= 0.0 || e.g_on_ms <= 0.0 {
                return Err(DeviceError::Malformed {
                    row,
                    msg: "values must be finite and strictly positive".into(),
                });
            }
            if e.g_on_ms <= e.g_off_ms {
                return Err(DeviceError::OffAboveOn { row });
            }
        }

        let mut indexed: Vec<(TableEntry, usize)> = entries.into_iter().zip(rows).collect();
        indexed.sort_by(|a, b| a.0.freq_hz.total_cmp(&b.0.freq_hz));
        for pair in indexed.windows(2) {
            let (lo, hi) = (&pair[0], &pair[1]);
            if lo.0.freq_hz == hi.0.freq_hz {
                return Err(DeviceError::DuplicateFrequency {
                    row: lo.1.max(hi.1),
                    freq_hz: hi.0.freq_hz,
                });
            }
            if hi.0.g_on_ms >= lo.0.g_on_ms {
                return Err(DeviceError::NonMonotoneOn { row: hi.1 });
            }
        }

        Ok(Self {
            entries: indexed.into_iter().map(|(e, _)| e).collect(),
            source_label,
        })
    }

    /// Reads a table in the `freq_hz,g_off_ms,g_on_ms` CSV format.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DeviceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| DeviceError::Io(format!("{}: {e}", path.display())))?;
        Self::parse_csv(&text, path.display().to_string())
    }

    pub fn parse_csv(text: &str, source_label: impl Into<String>) -> Result<Self, DeviceError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, header)) if header.trim() == TABLE_CSV_HEADER => {}
            Some((i, _)) => {
                return Err(DeviceError::Malformed {
                    row: i + 1,
                    msg: format!("expected header `{TABLE_CSV_HEADER}`"),
                })
            }
            None => return Err(DeviceError::TooFewRows(0)),
        }

        let mut entries = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in lines {
            let row = i + 1;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(DeviceError::Malformed {
                    row,
                    msg: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let mut vals = [0.0; 3];
            for (slot, field) in vals.iter_mut().zip(&fields) {
                *slot = field.parse::<f64>().map_err(|_| DeviceError::Malformed {
                    row,
                    msg: format!("not a number: `{field}`"),
                })?;
            }
            entries.push(TableEntry::new(vals[0], vals[1], vals[2]));
            rows.push(row);
        }
        Self::validated(entries, rows, source_label.into())
    }

    /// Serializes back to the CSV format, fastest frequency first.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{TABLE_CSV_HEADER}\n");
        for e in self.entries.iter().rev() {
            out.push_str(&format!("{},{},{}\n", e.freq_hz, e.g_off_ms, e.g_on_ms));
        }
        out
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    /// `(min, max)` tabulated frequency in Hz.
    pub fn frequency_range(&self) -> (f64, f64) {
        (
            self.entries[0].freq_hz,
            self.entries[self.entries.len() - 1].freq_hz,
        )
    }

    /// `(min, max)` ON-branch conductance in mS.
    pub fn on_range(&self) -> (f64, f64) {
        (
            self.entries[self.entries.len() - 1].g_on_ms,
            self.entries[0].g_on_ms,
        )
    }

    /// ON conductance at the fastest tabulated frequency; the conductance of a
    /// unit weight.
    pub fn unit_conductance(&self) -> f64 {
        self.on_range().0
    }

    /// Conductance on `state`'s branch at `freq_hz`, interpolated linearly in
    /// `log10(freq_hz)` between grid points.
    pub fn conductance_at(&self, state: DeviceState, freq_hz: f64) -> Result<f64, DeviceError> {
        let (lo, hi) = self.frequency_range();
        if !(freq_hz >= lo && freq_hz <= hi) {
            return Err(DeviceError::OutOfRange {
                quantity: "frequency",
                value: freq_hz,
                lo,
                hi,
            });
        }
        let idx = self.entries.partition_point(|e| e.freq_hz < freq_hz);
        let upper = &self.entries[idx];
        if upper.freq_hz == freq_hz {
            return Ok(upper.branch(state));
        }
        let lower = &self.entries[idx - 1];
        let u = (freq_hz.log10() - lower.freq_hz.log10())
            / (upper.freq_hz.log10() - lower.freq_hz.log10());
        let (g0, g1) = (lower.branch(state), upper.branch(state));
        Ok(g0 + u * (g1 - g0))
    }

    /// Frequency at which the ON branch reaches `g_ms`.
    pub fn frequency_for(&self, state: DeviceState, g_ms: f64) -> Result<f64, DeviceError> {
        if state != DeviceState::On {
            return Err(DeviceError::UnsupportedBranch);
        }
        let (g_lo, g_hi) = self.on_range();
        if let Some(e) = self
            .entries
            .iter()
            .find(|e| (e.g_on_ms - g_ms).abs() <= GRID_SNAP_REL * e.g_on_ms)
        {
            return Ok(e.freq_hz);
        }
        if !(g_ms >= g_lo && g_ms <= g_hi) {
            return Err(DeviceError::OutOfRange {
                quantity: "conductance",
                value: g_ms,
                lo: g_lo,
                hi: g_hi,
            });
        }
        // g_on descends as frequency ascends: find the first entry below g.
        let idx = self.entries.partition_point(|e| e.g_on_ms > g_ms);
        let (slow, fast) = (&self.entries[idx - 1], &self.entries[idx]);
        let u = (slow.g_on_ms - g_ms) / (slow.g_on_ms - fast.g_on_ms);
        let log_f = slow.freq_hz.log10() + u * (fast.freq_hz.log10() - slow.freq_hz.log10());
        Ok(10f64.powf(log_f))
    }

    /// Conductance with multiplicative Gaussian read variation.
    pub fn sample_conductance(
        &self,
        state: DeviceState,
        freq_hz: f64,
        noise: &NoiseModel,
        ctx: &mut DrawContext,
    ) -> Result<f64, DeviceError> {
        let g = self.conductance_at(state, freq_hz)?;
        Ok(noise.perturb(g, ctx))
    }
}

/// Multiplicative read variation `g * (1 + eps)`, `eps ~ N(0, relative_sigma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub relative_sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub const DEFAULT_RELATIVE_SIGMA: f64 = 0.01;

    pub fn new(relative_sigma: f64, seed: u64) -> Self {
        assert!(
            relative_sigma.is_finite() && relative_sigma >= 0.0,
            "relative_sigma must be finite and >= 0"
        );
        Self {
            relative_sigma,
            seed,
        }
    }

    /// No variation.
    pub fn ideal() -> Self {
        Self::new(0.0, 0)
    }

    pub fn is_ideal(&self) -> bool {
        self.relative_sigma == 0.0
    }

    /// Applies one draw to `g`. Consumes no randomness when ideal.
    pub fn perturb(&self, g: f64, ctx: &mut DrawContext) -> f64 {
        if self.is_ideal() {
            return g;
        }
        let normal = Normal::new(0.0, self.relative_sigma).expect("sigma validated");
        g * (1.0 + normal.sample(&mut ctx.rng))
    }
}

/// An independent, reproducible random substream.
///
/// Substreams are keyed by `(seed, purpose tag, coordinates)` so results do
/// not depend on the order in which work is scheduled.
#[derive(Debug, Clone)]
pub struct DrawContext {
    rng: ChaCha8Rng,
}

impl DrawContext {
    pub fn keyed(seed: u64, tag: &str, coords: &[u64]) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(mix_key(seed, tag, coords)),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds the seed, an FNV-1a hash of `tag`, and each coordinate through
/// splitmix64.
pub fn mix_key(seed: u64, tag: &str, coords: &[u64]) -> u64 {
    let mut tag_hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        tag_hash ^= u64::from(b);
        tag_hash = tag_hash.wrapping_mul(0x0100_0000_01b3);
    }
    let mut h = splitmix64(seed ^ splitmix64(tag_hash));
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c));
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn builtin_grid_rows() {
        let t = ConductanceTable::builtin();
        assert_eq!(t.conductance_at(DeviceState::Off, 10.0).unwrap(), 1.4);
        assert_eq!(t.conductance_at(DeviceState::On, 10.0).unwrap(), 8.40);
        assert_eq!(t.conductance_at(DeviceState::Off, 0.5).unwrap(), 1.15);
        assert_eq!(t.conductance_at(DeviceState::On, 0.5).unwrap(), 11.4);
        assert_eq!(t.conductance_at(DeviceState::On, 750.0).unwrap(), 4.20);
        assert_eq!(t.conductance_at(DeviceState::On, 10_000.0).unwrap(), 2.10);
        assert_eq!(t.unit_conductance(), 2.10);
    }

    #[test]
    fn log_linear_interpolation() {
        // hand evaluation between (100 Hz, 7.60) and (500 Hz, 5.97)
        let expected = 7.60 + (5.97 - 7.60) * (4.8f64.log10() / 5f64.log10());
        let t = ConductanceTable::builtin();
        let g = t.conductance_at(DeviceState::On, 480.0).unwrap();
        assert!((g - expected).abs() < 1e-12);
        assert!((g - 6.011).abs() < 5e-4);
    }

    #[test]
    fn no_extrapolation() {
        let t = ConductanceTable::builtin();
        assert!(matches!(
            t.conductance_at(DeviceState::On, 0.4),
            Err(DeviceError::OutOfRange { .. })
        ));
        assert!(t.conductance_at(DeviceState::Off, 10_001.0).is_err());
        assert!(t.conductance_at(DeviceState::On, f64::NAN).is_err());
    }

    #[test]
    fn inverse_lookup() {
        let t = ConductanceTable::builtin();
        assert_eq!(t.frequency_for(DeviceState::On, 4.20).unwrap(), 750.0);
        assert_eq!(t.frequency_for(DeviceState::On, 8.40).unwrap(), 10.0);
        assert_eq!(t.frequency_for(DeviceState::On, 2.1 * 4.0).unwrap(), 10.0);
        let f = t.frequency_for(DeviceState::On, 5.0).unwrap();
        assert!((f - 624.4).abs() < 0.05, "{f}");
        assert!(rel(t.conductance_at(DeviceState::On, f).unwrap(), 5.0) < 1e-12);
    }

    #[test]
    fn inverse_errors() {
        let t = ConductanceTable::builtin();
        assert_eq!(
            t.frequency_for(DeviceState::Off, 1.5),
            Err(DeviceError::UnsupportedBranch)
        );
        match t.frequency_for(DeviceState::On, 12.0) {
            Err(DeviceError::OutOfRange { lo, hi, .. }) => {
                assert_eq!((lo, hi), (2.10, 11.4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let t = ConductanceTable::builtin();
        let back = ConductanceTable::parse_csv(&t.to_csv(), "x").unwrap();
        assert_eq!(back.entries(), t.entries());

        let dup = "freq_hz,g_off_ms,g_on_ms\n10,1,5\n10,1,4\n";
        let err = ConductanceTable::parse_csv(dup, "dup").unwrap_err();
        assert_eq!(
            err,
            DeviceError::DuplicateFrequency {
                row: 3,
                freq_hz: 10.0
            }
        );
        assert!(err.to_string().contains("duplicate frequency"));

        let bad = "freq_hz,g_off_ms,g_on_ms\n10,1,5\n20,1,abc\n";
        assert!(matches!(
            ConductanceTable::parse_csv(bad, "bad"),
            Err(DeviceError::Malformed { row: 3, .. })
        ));

        let rising = "freq_hz,g_off_ms,g_on_ms\n10,1,5\n20,1,6\n";
        assert_eq!(
            ConductanceTable::parse_csv(rising, "r").unwrap_err(),
            DeviceError::NonMonotoneOn { row: 3 }
        );

        let one = "freq_hz,g_off_ms,g_on_ms\n10,1,5\n";
        assert_eq!(
            ConductanceTable::parse_csv(one, "one").unwrap_err(),
            DeviceError::TooFewRows(1)
        );

        let inverted = "freq_hz,g_off_ms,g_on_ms\n10,6,5\n20,1,4\n";
        assert_eq!(
            ConductanceTable::parse_csv(inverted, "inv").unwrap_err(),
            DeviceError::OffAboveOn { row: 2 }
        );
    }

    #[test]
    fn zero_sigma_is_exact_regardless_of_seed() {
        let t = ConductanceTable::builtin();
        for seed in [0, 1, 42, u64::MAX] {
            let noise = NoiseModel::new(0.0, seed);
            let mut ctx = DrawContext::keyed(seed, "read", &[3]);
            let g = t
                .sample_conductance(DeviceState::On, 480.0, &noise, &mut ctx)
                .unwrap();
            assert_eq!(g, t.conductance_at(DeviceState::On, 480.0).unwrap());
        }
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let t = ConductanceTable::builtin();
        let noise = NoiseModel::new(0.01, 7);
        let draw = || {
            let mut ctx = DrawContext::keyed(7, "read", &[1, 2]);
            t.sample_conductance(DeviceState::On, 750.0, &noise, &mut ctx)
                .unwrap()
        };
        assert_eq!(draw(), draw());
        assert_ne!(draw(), 4.20);
    }

    #[test]
    fn sampling_mean_converges() {
        let t = ConductanceTable::builtin();
        let noise = NoiseModel::new(0.01, 99);
        let mut ctx = DrawContext::keyed(99, "lln", &[]);
        let n = 10_000;
        let sum: f64 = (0..n)
            .map(|_| {
                t.sample_conductance(DeviceState::On, 750.0, &noise, &mut ctx)
                    .unwrap()
            })
            .sum();
        assert!(rel(sum / n as f64, 4.20) < 0.005);
    }

    #[test]
    fn keys_separate_streams() {
        assert_ne!(mix_key(1, "a", &[0]), mix_key(1, "b", &[0]));
        assert_ne!(mix_key(1, "a", &[0, 1]), mix_key(1, "a", &[1, 0]));
        assert_ne!(mix_key(1, "a", &[0]), mix_key(2, "a", &[0]));
    }
}
