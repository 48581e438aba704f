//! Claim datasets: CSV parsing, cleaning and the train/test split.
//!
//! Calendar dates become fractional years as `days since Jan 1 of epoch_start
//! / 365.25`. Year boundaries used for splitting sit at whole-year offsets
//! `split_year − epoch_start`.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DAYS_PER_YEAR: f64 = 365.25;

/// One claim: its value (thousands) and its occurrence time (years since epoch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub value: f64,
    pub time: f64,
}

/// Time-ordered claims observed over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimDataset {
    records: Vec<ClaimRecord>,
    pub epoch_start: i32,
    pub horizon: f64,
}

impl ClaimDataset {
    /// Build a dataset, sorting the records by time.
    ///
    /// Fails if a record has a negative value or time, or a time beyond `horizon`.
    pub fn new(mut records: Vec<ClaimRecord>, epoch_start: i32, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::DomainError(format!("invalid horizon {horizon}")));
        }
        for (i, r) in records.iter().enumerate() {
            if !r.time.is_finite() || r.time < 0.0 || r.time > horizon {
                return Err(Error::UnparseableRow {
                    row: i,
                    reason: format!("time {} outside [0, {horizon}]", r.time),
                });
            }
            if !r.value.is_finite() {
                return Err(Error::UnparseableRow {
                    row: i,
                    reason: format!("non-finite value {}", r.value),
                });
            }
        }
        records.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(ClaimDataset {
            records,
            epoch_start,
            horizon,
        })
    }

    pub fn records(&self) -> &[ClaimRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.value).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    /// Realised aggregate claim over the whole window.
    pub fn total_value(&self) -> f64 {
        self.records.iter().map(|r| r.value).sum()
    }
}

fn epoch_date(epoch_start: i32) -> Result<NaiveDate> {
    NaiveDate::from_ymd_opt(epoch_start, 1, 1)
        .ok_or_else(|| Error::DomainError(format!("invalid epoch year {epoch_start}")))
}

/// Fractional years between Jan 1 of `epoch_start` and `date`.
pub fn years_since_epoch(date: NaiveDate, epoch_start: i32) -> Result<f64> {
    let days = (date - epoch_date(epoch_start)?).num_days();
    Ok(days as f64 / DAYS_PER_YEAR)
}

/// Read claims from a headered CSV with ISO-8601 dates.
///
/// The dataset horizon extends to the end of the last calendar year present.
pub fn parse_claims_csv(
    path: impl AsRef<Path>,
    value_column: &str,
    date_column: &str,
    epoch_start: i32,
) -> Result<ClaimDataset> {
    let reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    parse_claims_reader(reader, value_column, date_column, epoch_start)
}

pub fn parse_claims_reader<R: std::io::Read>(
    mut reader: csv::Reader<R>,
    value_column: &str,
    date_column: &str,
    epoch_start: i32,
) -> Result<ClaimDataset> {
    let epoch = epoch_date(epoch_start)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let vi = find(value_column)?;
    let di = find(date_column)?;

    let mut records = Vec::new();
    let mut last_year = epoch_start;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::UnparseableRow {
            row,
            reason: e.to_string(),
        })?;
        let bad = |reason: String| Error::UnparseableRow { row, reason };
        let raw_value = rec
            .get(vi)
            .ok_or_else(|| bad("missing value field".into()))?;
        let value: f64 = raw_value
            .parse()
            .map_err(|_| bad(format!("value `{raw_value}` is not numeric")))?;
        if !value.is_finite() {
            return Err(bad(format!("value `{raw_value}` is not finite")));
        }
        let raw_date = rec
            .get(di)
            .ok_or_else(|| bad("missing date field".into()))?;
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|e| bad(format!("date `{raw_date}`: {e}")))?;
        if date < epoch {
            return Err(bad(format!("date {date} precedes epoch start {epoch}")));
        }
        last_year = last_year.max(chrono::Datelike::year(&date));
        let time = (date - epoch).num_days() as f64 / DAYS_PER_YEAR;
        records.push(ClaimRecord { value, time });
    }
    if records.is_empty() {
        return Err(Error::EmptyFile);
    }
    let horizon = f64::from(last_year + 1 - epoch_start);
    ClaimDataset::new(records, epoch_start, horizon)
}

/// Keep material claims and drop the top `trim_fraction` of them by value.
///
/// `ceil(trim_fraction · m)` records are removed among the `m` positive ones;
/// among equal values the later ones go first. Time order is preserved.
pub fn preprocess(ds: &ClaimDataset, trim_fraction: f64) -> Result<ClaimDataset> {
    if !(0.0..1.0).contains(&trim_fraction) {
        return Err(Error::DomainError(format!(
            "trim fraction {trim_fraction} outside [0, 1)"
        )));
    }
    let kept: Vec<ClaimRecord> = ds
        .records
        .iter()
        .copied()
        .filter(|r| r.value > 0.0)
        .collect();
    let m = kept.len();
    // guard against products such as 0.07·100 = 7.000000000000001
    let n_trim = ((trim_fraction * m as f64) - 1e-9).ceil().max(0.0) as usize;

    let mut order: Vec<usize> = (0..m).collect();
    // descending value, then descending time (later removed first)
    order.sort_by(|&a, &b| {
        kept[b]
            .value
            .total_cmp(&kept[a].value)
            .then(kept[b].time.total_cmp(&kept[a].time))
            .then(b.cmp(&a))
    });
    let mut drop = vec![false; m];
    for &i in order.iter().take(n_trim) {
        drop[i] = true;
    }
    let records: Vec<ClaimRecord> = kept
        .into_iter()
        .zip(drop)
        .filter_map(|(r, d)| (!d).then_some(r))
        .collect();
    if records.is_empty() {
        return Err(Error::AllRecordsRemoved);
    }
    Ok(ClaimDataset {
        records,
        epoch_start: ds.epoch_start,
        horizon: ds.horizon,
    })
}

/// Split at the start of `split_year`; the test part is re-anchored so that its
/// time zero is the boundary.
pub fn split_train_test(
    ds: &ClaimDataset,
    split_year: i32,
) -> Result<(ClaimDataset, ClaimDataset)> {
    let boundary = f64::from(split_year - ds.epoch_start);
    if boundary <= 0.0 || boundary >= ds.horizon {
        return Err(Error::DomainError(format!(
            "split year {split_year} outside the observation window ({}..{})",
            ds.epoch_start,
            f64::from(ds.epoch_start) + ds.horizon
        )));
    }
    let (train, test): (Vec<ClaimRecord>, Vec<ClaimRecord>) =
        ds.records.iter().partition(|r| r.time < boundary);
    if train.is_empty() {
        return Err(Error::EmptySplit { side: "training" });
    }
    if test.is_empty() {
        return Err(Error::EmptySplit { side: "test" });
    }
    let test = test
        .into_iter()
        .map(|r| ClaimRecord {
            value: r.value,
            time: r.time - boundary,
        })
        .collect();
    Ok((
        ClaimDataset {
            records: train,
            epoch_start: ds.epoch_start,
            horizon: boundary,
        },
        ClaimDataset {
            records: test,
            epoch_start: split_year,
            horizon: ds.horizon - boundary,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
        csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes())
    }

    fn ds(pairs: &[(f64, f64)], horizon: f64) -> ClaimDataset {
        let recs = pairs
            .iter()
            .map(|&(value, time)| ClaimRecord { value, time })
            .collect();
        ClaimDataset::new(recs, 2000, horizon).unwrap()
    }

    #[test]
    fn single_row_at_epoch_is_time_zero() {
        let d = parse_claims_reader(
            csv_reader("value,date\n100,1990-01-01\n"),
            "value",
            "date",
            1990,
        )
        .unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(
            d.records()[0],
            ClaimRecord {
                value: 100.0,
                time: 0.0
            }
        );
        assert_eq!(d.horizon, 1.0);
    }

    #[test]
    fn four_years_of_days_is_four_years() {
        // 1461 days = 4 × 365.25
        let d = parse_claims_reader(csv_reader("v,d\n1,1994-01-01\n"), "v", "d", 1990).unwrap();
        assert_eq!(d.records()[0].time, 4.0);
        let t = years_since_epoch(
            NaiveDate::from_ymd_opt(1990, 1, 1).unwrap() + chrono::Duration::days(365),
            1990,
        )
        .unwrap();
        assert_eq!(t, 365.0 / 365.25);
    }

    #[test]
    fn shuffled_rows_are_sorted() {
        let text = "value,date\n3,1992-06-01\n1,1990-03-01\n2,1991-01-15\n";
        let d = parse_claims_reader(csv_reader(text), "value", "date", 1990).unwrap();
        let mut expected: Vec<(f64, f64)> = vec![
            (
                3.0,
                years_since_epoch(NaiveDate::from_ymd_opt(1992, 6, 1).unwrap(), 1990).unwrap(),
            ),
            (
                1.0,
                years_since_epoch(NaiveDate::from_ymd_opt(1990, 3, 1).unwrap(), 1990).unwrap(),
            ),
            (
                2.0,
                years_since_epoch(NaiveDate::from_ymd_opt(1991, 1, 15).unwrap(), 1990).unwrap(),
            ),
        ];
        expected.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let got: Vec<(f64, f64)> = d.records().iter().map(|r| (r.value, r.time)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn parse_errors() {
        let e = parse_claims_reader(
            csv_reader("value,when\n1,1990-01-01\n"),
            "value",
            "date",
            1990,
        )
        .unwrap_err();
        assert!(matches!(e, Error::MissingColumn(c) if c == "date"));
        let e = parse_claims_reader(
            csv_reader("value,date\n1,1990-01-01\nabc,1990-02-01\n"),
            "value",
            "date",
            1990,
        )
        .unwrap_err();
        assert!(matches!(e, Error::UnparseableRow { row: 1, .. }));
        let e = parse_claims_reader(
            csv_reader("value,date\n1,1990-13-01\n"),
            "value",
            "date",
            1990,
        )
        .unwrap_err();
        assert!(matches!(e, Error::UnparseableRow { row: 0, .. }));
        let e = parse_claims_reader(csv_reader("value,date\n"), "value", "date", 1990).unwrap_err();
        assert!(matches!(e, Error::EmptyFile));
        let e = parse_claims_reader(
            csv_reader("value,date\n1,1989-12-31\n"),
            "value",
            "date",
            1990,
        )
        .unwrap_err();
        assert!(matches!(e, Error::UnparseableRow { .. }));
    }

    #[test]
    fn preprocess_keeps_only_material_claims() {
        let d = ds(&[(0.0, 0.1), (-5.0, 0.2), (10.0, 0.3)], 1.0);
        let p = preprocess(&d, 0.0).unwrap();
        assert_eq!(p.values(), vec![10.0]);
    }

    #[test]
    fn preprocess_trims_top_five_percent() {
        // values 1..100 at shuffled times
        let pairs: Vec<(f64, f64)> = (1..=100)
            .map(|v| (v as f64, ((v * 37) % 100) as f64 / 10.0))
            .collect();
        let d = ds(&pairs, 10.0);
        let p = preprocess(&d, 0.05).unwrap();
        // brute-force oracle: drop the five largest values
        let mut vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.truncate(95);
        let mut got = p.values();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vals);
        assert_eq!(p.len(), 95);
        assert_eq!(got.last().copied(), Some(95.0));
        assert!(p.times().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn preprocess_tie_break_removes_latest() {
        let d = ds(&[(7.0, 0.1), (7.0, 0.4), (7.0, 0.2), (7.0, 0.3)], 1.0);
        let p = preprocess(&d, 0.25).unwrap();
        assert_eq!(p.times(), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn preprocess_rejects_bad_fraction_and_empty_result() {
        let d = ds(&[(1.0, 0.1)], 1.0);
        assert!(preprocess(&d, 1.0).is_err());
        let d = ds(&[(0.0, 0.1)], 1.0);
        assert!(matches!(preprocess(&d, 0.0), Err(Error::AllRecordsRemoved)));
        let d = ds(&[(3.0, 0.1)], 1.0);
        assert!(matches!(preprocess(&d, 0.5), Err(Error::AllRecordsRemoved)));
    }

    #[test]
    fn split_boundary_arithmetic() {
        let d = ClaimDataset::new(
            vec![
                ClaimRecord {
                    value: 1.0,
                    time: 0.5,
                },
                ClaimRecord {
                    value: 2.0,
                    time: 1.5,
                },
            ],
            1990,
            2.0,
        )
        .unwrap();
        let (train, test) = split_train_test(&d, 1991).unwrap();
        assert_eq!(train.times(), vec![0.5]);
        assert_eq!(test.times(), vec![0.5]);
        assert_eq!(train.horizon, 1.0);
        assert_eq!(test.horizon, 1.0);
        assert_eq!(test.epoch_start, 1991);
    }

    #[test]
    fn split_counts_and_empty_side() {
        let pairs: Vec<(f64, f64)> = (0..10)
            .map(|i| {
                (
                    1.0,
                    if i < 7 {
                        0.1 * i as f64
                    } else {
                        1.0 + 0.1 * i as f64
                    },
                )
            })
            .collect();
        let d = ds(&pairs, 3.0);
        let (a, b) = split_train_test(&d, 2001).unwrap();
        let oracle = pairs.iter().filter(|p| p.1 < 1.0).count();
        assert_eq!((a.len(), b.len()), (oracle, 10 - oracle));
        assert_eq!(oracle, 7);

        let d = ds(&[(1.0, 0.1), (1.0, 0.2)], 3.0);
        assert!(matches!(
            split_train_test(&d, 2001),
            Err(Error::EmptySplit { side: "test" })
        ));
    }

    proptest! {
        #[test]
        fn preprocess_idempotent(values in prop::collection::vec(-10.0f64..100.0, 1..60), f in 0.0f64..0.5) {
            let pairs: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (v, i as f64 * 0.01)).collect();
            let d = ds(&pairs, 1.0);
            if let Ok(p) = preprocess(&d, f) {
                prop_assert_eq!(preprocess(&p, 0.0).unwrap(), p);
            }
        }

        #[test]
        fn split_conserves_and_bounds(times in prop::collection::vec(0.0f64..5.0, 2..60), year in 2001i32..2005) {
            let pairs: Vec<(f64, f64)> = times.iter().map(|&t| (1.0, t)).collect();
            let d = ds(&pairs, 5.0);
            if let Ok((a, b)) = split_train_test(&d, year) {
                prop_assert_eq!(a.len() + b.len(), d.len());
                for part in [&a, &b] {
                    prop_assert!(part.times().iter().all(|&t| t >= 0.0 && t <= part.horizon));
                }
            }
        }
    }
}
