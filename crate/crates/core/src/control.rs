//! Credit economy shared by the central authority and every contract replica.
//!
//! Each control period, every DER of a feeder bids a credit demand drawn
//! uniformly from `[0, credit]`; the lowest bid becomes the feeder's voltage
//! regulator (VSC) for the next period and collects the sum of all bids.
//! Credits are integers in milli-credit units, so conservation is exact.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::streams::{self, Stream};

/// Identifies one DER: feeder-major, then unit. Both indices are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DerId {
    pub feeder: u16,
    pub unit: u16,
}

impl DerId {
    pub const fn new(feeder: u16, unit: u16) -> Self {
        Self { feeder, unit }
    }

    /// Packs the id into a single integer, preserving the ordering.
    pub fn key(self) -> u64 {
        (u64::from(self.feeder) << 16) | u64::from(self.unit)
    }
}

impl fmt::Display for DerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}u{}", self.feeder, self.unit)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed DER id `{0}` (expected f<feeder>u<unit>)")]
pub struct ParseDerIdError(String);

impl FromStr for DerId {
    type Err = ParseDerIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseDerIdError(s.to_string());
        let rest = s.strip_prefix('f').ok_or_else(err)?;
        let (feeder, unit) = rest.split_once('u').ok_or_else(err)?;
        Ok(Self {
            feeder: feeder.parse().map_err(|_| err())?,
            unit: unit.parse().map_err(|_| err())?,
        })
    }
}

impl TryFrom<String> for DerId {
    type Error = ParseDerIdError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<DerId> for String {
    fn from(id: DerId) -> Self {
        id.to_string()
    }
}

/// A non-negative credit amount in milli-credits.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Credit(pub u64);

impl Credit {
    pub const ZERO: Credit = Credit(0);

    pub fn checked_sub(self, rhs: Credit) -> Option<Credit> {
        self.0.checked_sub(rhs.0).map(Credit)
    }
}

impl Add for Credit {
    type Output = Credit;
    fn add(self, rhs: Credit) -> Credit {
        Credit(self.0 + rhs.0)
    }
}

impl AddAssign for Credit {
    fn add_assign(&mut self, rhs: Credit) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Credit {
    fn sum<I: Iterator<Item = Credit>>(iter: I) -> Credit {
        Credit(iter.map(|c| c.0).sum())
    }
}

impl fmt::Display for Credit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControlError {
    #[error("no demands were submitted")]
    EmptyDemandSet,
    #[error("{der} demands {demand} but holds only {held}")]
    Overdraft { der: DerId, demand: Credit, held: Credit },
    #[error("{0} is not in the ledger")]
    UnknownDer(DerId),
    #[error("elected {0} did not submit a demand")]
    ElectedWithoutDemand(DerId),
    #[error("{der} does not belong to feeder {feeder}")]
    ForeignDer { der: DerId, feeder: u16 },
}

/// Per-DER credit statuses of one feeder. `total` always equals the entry sum.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreditLedger {
    entries: BTreeMap<DerId, Credit>,
    total: Credit,
}

impl CreditLedger {
    pub fn new(entries: impl IntoIterator<Item = (DerId, Credit)>) -> Self {
        let entries: BTreeMap<_, _> = entries.into_iter().collect();
        let total = entries.values().copied().sum();
        Self { entries, total }
    }

    /// Splits `total` over `ders` uniformly at random (uniform over the
    /// discrete simplex of compositions).
    pub fn random_split(total: Credit, ders: &[DerId], rng: &mut impl Rng) -> Self {
        if ders.is_empty() {
            return Self::default();
        }
        let mut cuts: Vec<u64> = (1..ders.len()).map(|_| rng.random_range(0..=total.0)).collect();
        cuts.sort_unstable();
        let mut prev = 0;
        let mut entries = Vec::with_capacity(ders.len());
        for (i, der) in ders.iter().enumerate() {
            let end = cuts.get(i).copied().unwrap_or(total.0);
            entries.push((*der, Credit(end - prev)));
            prev = end;
        }
        Self::new(entries)
    }

    pub fn get(&self, der: DerId) -> Option<Credit> {
        self.entries.get(&der).copied()
    }

    pub fn contains(&self, der: DerId) -> bool {
        self.entries.contains_key(&der)
    }

    pub fn total(&self) -> Credit {
        self.total
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (DerId, Credit)> + '_ {
        self.entries.iter().map(|(d, c)| (*d, *c))
    }

    /// Adds a DER with zero credit. No-op if it is already present.
    pub fn admit(&mut self, der: DerId) {
        self.entries.entry(der).or_insert(Credit::ZERO);
    }

    pub fn debit(&mut self, der: DerId, amount: Credit) -> Result<(), ControlError> {
        let held = self.entries.get_mut(&der).ok_or(ControlError::UnknownDer(der))?;
        *held = held.checked_sub(amount).ok_or(ControlError::Overdraft {
            der,
            demand: amount,
            held: *held,
        })?;
        self.total = Credit(self.total.0 - amount.0);
        Ok(())
    }

    pub fn credit(&mut self, der: DerId, amount: Credit) -> Result<(), ControlError> {
        let held = self.entries.get_mut(&der).ok_or(ControlError::UnknownDer(der))?;
        *held += amount;
        self.total += amount;
        Ok(())
    }
}

/// Demands submitted for one election round.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandVector {
    pub period: u64,
    pub demands: BTreeMap<DerId, Credit>,
}

impl DemandVector {
    pub fn new(period: u64) -> Self {
        Self { period, demands: BTreeMap::new() }
    }

    pub fn insert(&mut self, der: DerId, amount: Credit) {
        self.demands.insert(der, amount);
    }

    pub fn total(&self) -> Credit {
        self.demands.values().copied().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }

    /// `f2u1:123;f2u2:456`, in DER order.
    pub fn to_compact(&self) -> String {
        self.demands
            .iter()
            .map(|(d, c)| format!("{d}:{c}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Draws a demand uniformly from `{0, ..., credit}`.
pub fn draw_demand(credit: Credit, rng: &mut impl Rng) -> Credit {
    Credit(rng.random_range(0..=credit.0))
}

/// The stream a DER's demand for `round` is drawn from.
pub fn demand_stream(seed: u64, der: DerId, round: u64) -> Stream {
    streams::fork(seed, "demand", der.key(), round)
}

/// Lowest demand wins; ties go to the smallest [`DerId`].
pub fn elect_vsc(demands: &DemandVector) -> Result<DerId, ControlError> {
    demands
        .demands
        .iter()
        .min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
        .map(|(d, _)| *d)
        .ok_or(ControlError::EmptyDemandSet)
}

/// Debits each demander by its demand and pays the demand total to `elected`.
pub fn settle_credits(
    ledger: &CreditLedger,
    demands: &DemandVector,
    elected: DerId,
) -> Result<CreditLedger, ControlError> {
    if !demands.demands.contains_key(&elected) {
        return Err(ControlError::ElectedWithoutDemand(elected));
    }
    let mut out = ledger.clone();
    for (&der, &amount) in &demands.demands {
        out.debit(der, amount)?;
    }
    out.credit(elected, demands.total())?;
    debug_assert_eq!(out.total(), ledger.total());
    Ok(out)
}

/// Binary mode history of one feeder: one row per DER, one column per period.
/// Stored as the elected row index of every column.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlHistory {
    feeder: u16,
    ders: Vec<DerId>,
    columns: Vec<usize>,
}

impl ControlHistory {
    pub fn new(feeder: u16, ders: impl IntoIterator<Item = DerId>) -> Self {
        let mut ders: Vec<_> = ders.into_iter().collect();
        ders.sort_unstable();
        ders.dedup();
        Self { feeder, ders, columns: Vec::new() }
    }

    pub fn feeder(&self) -> u16 {
        self.feeder
    }

    pub fn ders(&self) -> &[DerId] {
        &self.ders
    }

    pub fn periods(&self) -> usize {
        self.columns.len()
    }

    /// Adds a row for a DER that joined mid-run; it was CSC in all past periods.
    pub fn add_der(&mut self, der: DerId) -> Result<(), ControlError> {
        self.check_feeder(der)?;
        if let Err(pos) = self.ders.binary_search(&der) {
            self.ders.insert(pos, der);
            for c in &mut self.columns {
                if *c >= pos {
                    *c += 1;
                }
            }
        }
        Ok(())
    }

    /// Appends the indicator column of `elected`.
    pub fn record(&mut self, elected: DerId) -> Result<(), ControlError> {
        self.check_feeder(elected)?;
        let row = self.ders.binary_search(&elected).map_err(|_| ControlError::UnknownDer(elected))?;
        self.columns.push(row);
        Ok(())
    }

    pub fn elected(&self, period: usize) -> Option<DerId> {
        self.columns.get(period).map(|&r| self.ders[r])
    }

    /// Mode of `der` in `period`: 1 for VSC, 0 for CSC.
    pub fn mode(&self, der: DerId, period: usize) -> u8 {
        u8::from(self.elected(period) == Some(der))
    }

    pub fn column(&self, period: usize) -> Vec<u8> {
        self.ders.iter().map(|&d| self.mode(d, period)).collect()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.ders.len()];
        for &c in &self.columns {
            sums[c] += 1;
        }
        sums
    }

    fn check_feeder(&self, der: DerId) -> Result<(), ControlError> {
        if der.feeder != self.feeder {
            return Err(ControlError::ForeignDer { der, feeder: self.feeder });
        }
        Ok(())
    }
}

/// Largest deviation of any DER's VSC share from the fair share `1/U_f`.
/// Returns 0 for a history without columns.
pub fn fairness_gap(history: &ControlHistory) -> f64 {
    let k = history.periods();
    if k == 0 || history.ders.is_empty() {
        return 0.0;
    }
    let fair = 1.0 / history.ders.len() as f64;
    history
        .row_sums()
        .into_iter()
        .map(|s| (s as f64 / k as f64 - fair).abs())
        .fold(0.0, f64::max)
}
