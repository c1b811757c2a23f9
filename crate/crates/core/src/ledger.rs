//! Append-only curated data: validated items with their shift tags.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forge::{ShiftKind, ShiftSpec, MAX_SEVERITY, NUM_CLASSES};

pub const CSV_HEADER: &str = "interval,item_id,predicted_label,true_label,match,kind,severity,image_ref";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub interval: u32,
    pub item_id: u64,
    pub predicted_label: usize,
    pub true_label: usize,
    #[serde(rename = "match")]
    pub is_match: bool,
    pub kind: ShiftKind,
    pub severity: u8,
    pub image_ref: u64,
}

impl LedgerRecord {
    pub fn tag(&self) -> Result<ShiftSpec> {
        ShiftSpec::new(self.kind, self.severity)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.predicted_label >= NUM_CLASSES || self.true_label >= NUM_CLASSES {
            return Err("label out of range".into());
        }
        if self.is_match != (self.predicted_label == self.true_label) {
            return Err("match flag disagrees with labels".into());
        }
        if self.severity > MAX_SEVERITY {
            return Err(format!("severity {} out of range", self.severity));
        }
        if (self.kind == ShiftKind::None) != (self.severity == 0) {
            return Err(format!("severity {} inconsistent with kind {}", self.severity, self.kind));
        }
        if self.interval == 0 {
            return Err("interval must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CulpritReport {
    pub dominant_kind: ShiftKind,
    pub group_counts: BTreeMap<ShiftKind, usize>,
    pub mean_severity: BTreeMap<ShiftKind, f64>,
    /// Every group, best first.
    pub ranking: Vec<ShiftKind>,
    /// Mismatched item ids of the dominant group, in ledger order.
    pub sample_ids: Vec<u64>,
    /// Mismatched item ids of every group, in ledger order.
    pub group_ids: BTreeMap<ShiftKind, Vec<u64>>,
}

impl CulpritReport {
    /// Item ids of the `k` best-ranked groups, group by group.
    pub fn top_k_ids(&self, k: usize) -> Vec<u64> {
        self.ranking.iter().take(k.max(1)).flat_map(|g| self.group_ids[g].iter().copied()).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ledger {
    records: Vec<LedgerRecord>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_interval(&self) -> Option<u32> {
        self.records.last().map(|r| r.interval)
    }

    pub fn append(&mut self, record: LedgerRecord) -> Result<()> {
        record.check().map_err(Error::InvalidConfig)?;
        if let Some(last) = self.last_interval() {
            if record.interval < last {
                return Err(Error::OutOfOrderInterval { got: record.interval, last });
            }
        }
        self.records.push(record);
        Ok(())
    }

    /// `(validated, mismatched)` for `interval`.
    pub fn interval_counts(&self, interval: u32) -> (usize, usize) {
        self.records
            .iter()
            .filter(|r| r.interval == interval)
            .fold((0, 0), |(v, m), r| (v + 1, m + usize::from(!r.is_match)))
    }

    /// Mismatch rate among validated items of `interval`.
    pub fn interval_proxy_rate(&self, interval: u32) -> Result<(f64, usize, usize)> {
        let (validated, mismatched) = self.interval_counts(interval);
        if validated == 0 {
            return Err(Error::NoObservations(interval));
        }
        Ok((mismatched as f64 / validated as f64, validated, mismatched))
    }

    /// Groups tagged mismatches from interval `since` onwards by kind. The
    /// dominant group has the most mismatches; ties go to the higher mean
    /// severity, then to the earlier kind.
    pub fn culprit_analysis(&self, since: u32) -> Result<CulpritReport> {
        let mut counts: BTreeMap<ShiftKind, usize> = BTreeMap::new();
        let mut sev_sums: BTreeMap<ShiftKind, u64> = BTreeMap::new();
        let mut group_ids: BTreeMap<ShiftKind, Vec<u64>> = BTreeMap::new();
        let tagged = self.records.iter().filter(|r| r.interval >= since && !r.is_match && r.kind != ShiftKind::None);
        for r in tagged {
            *counts.entry(r.kind).or_default() += 1;
            *sev_sums.entry(r.kind).or_default() += u64::from(r.severity);
            group_ids.entry(r.kind).or_default().push(r.image_ref);
        }
        if counts.is_empty() {
            return Err(Error::NoCulprit(since));
        }
        let mut ranking: Vec<ShiftKind> = counts.keys().copied().collect();
        // Compare mean severities exactly: s_a / n_a vs s_b / n_b.
        ranking.sort_by(|&a, &b| {
            let (na, nb) = (counts[&a] as u64, counts[&b] as u64);
            nb.cmp(&na).then_with(|| (sev_sums[&b] * na).cmp(&(sev_sums[&a] * nb))).then(a.cmp(&b))
        });
        let dominant_kind = ranking[0];
        let mean_severity = counts.iter().map(|(&k, &n)| (k, sev_sums[&k] as f64 / n as f64)).collect();
        let sample_ids = group_ids[&dominant_kind].clone();
        Ok(CulpritReport { dominant_kind, group_counts: counts, mean_severity, ranking, sample_ids, group_ids })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(CSV_HEADER.split(','))?;
        for r in &self.records {
            w.write_record(&[
                r.interval.to_string(),
                r.item_id.to_string(),
                r.predicted_label.to_string(),
                r.true_label.to_string(),
                r.is_match.to_string(),
                r.kind.name().to_string(),
                r.severity.to_string(),
                r.image_ref.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
        let mut ledger = Ledger::new();
        let mut rows = rd.records();
        match rows.next() {
            Some(Ok(h)) if h.iter().collect::<Vec<_>>().join(",") == CSV_HEADER => {}
            Some(Err(e)) => return Err(Error::Parse { line: 1, msg: e.to_string() }),
            _ => return Err(Error::Parse { line: 1, msg: format!("expected header `{CSV_HEADER}`") }),
        }
        for (i, row) in rows.enumerate() {
            let line = i as u64 + 2;
            let row = row.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
            let record = parse_row(&row).map_err(|msg| Error::Parse { line, msg })?;
            ledger.append(record).map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        }
        Ok(ledger)
    }

    pub fn export_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn import_csv(path: &std::path::Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn parse_row(row: &csv::StringRecord) -> std::result::Result<LedgerRecord, String> {
    if row.len() != 8 {
        return Err(format!("expected 8 fields, found {}", row.len()));
    }
    fn num<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<T, String> {
        row[i].parse().map_err(|_| format!("invalid {name} `{}`", &row[i]))
    }
    let is_match = match &row[4] {
        "true" => true,
        "false" => false,
        other => return Err(format!("invalid match `{other}`")),
    };
    let record = LedgerRecord {
        interval: num(row, 0, "interval")?,
        item_id: num(row, 1, "item_id")?,
        predicted_label: num(row, 2, "predicted_label")?,
        true_label: num(row, 3, "true_label")?,
        is_match,
        kind: row[5].parse()?,
        severity: num(row, 6, "severity")?,
        image_ref: num(row, 7, "image_ref")?,
    };
    record.check()?;
    Ok(record)
}
