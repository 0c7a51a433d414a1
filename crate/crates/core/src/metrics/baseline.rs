use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Indicator, MetricsError};

/// Pointwise mean of equally long series.
pub fn group_mean_trajectory(series: &[&[f64]]) -> Result<Vec<f64>, MetricsError> {
    let first = series.first().ok_or(MetricsError::Empty)?;
    let len = first.len();
    if let Some(bad) = series.iter().find(|s| s.len() != len) {
        return Err(MetricsError::LengthMismatch {
            expected: len,
            got: bad.len(),
        });
    }
    let n = series.len() as f64;
    Ok((0..len).map(|t| series.iter().map(|s| s[t]).sum::<f64>() / n).collect())
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

/// Median over ticks of one series.
pub fn temporal_median(series: &[f64]) -> Result<f64, MetricsError> {
    median(series)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BaselineProvenance {
    OwnGroup { group: String },
    Shared { groups: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSet {
    pub values: BTreeMap<Indicator, f64>,
    pub provenance: BaselineProvenance,
}

/// Per indicator, the median of the groups' temporal medians. `group_medians`
/// maps group id to that group's per-indicator medians.
pub fn shared_baseline(
    group_medians: &BTreeMap<String, BTreeMap<Indicator, f64>>,
) -> Result<BaselineSet, MetricsError> {
    if group_medians.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut values = BTreeMap::new();
    for k in Indicator::ALL {
        let per_group: Vec<f64> = group_medians.values().filter_map(|m| m.get(&k).copied()).collect();
        if per_group.is_empty() {
            continue;
        }
        values.insert(k, median(&per_group)?);
    }
    let groups: Vec<String> = group_medians.keys().cloned().collect();
    let provenance = if groups.len() == 1 {
        BaselineProvenance::OwnGroup {
            group: groups[0].clone(),
        }
    } else {
        BaselineProvenance::Shared { groups }
    };
    Ok(BaselineSet { values, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_trajectory() {
        let a = [0.0, 2.0, 4.0];
        let b = [2.0, 2.0, 2.0];
        assert_eq!(group_mean_trajectory(&[&a, &b]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(group_mean_trajectory(&[&a]).unwrap(), a.to_vec());
        assert_eq!(group_mean_trajectory(&[&a, &a]).unwrap(), a.to_vec());
        assert!(group_mean_trajectory(&[&a, &[1.0][..]]).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(temporal_median(&[7.0; 5]).unwrap(), 7.0);
        assert_eq!(temporal_median(&[1.0, 9.0, 5.0]).unwrap(), 5.0);
        assert_eq!(temporal_median(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(temporal_median(&[]), Err(MetricsError::Empty));
    }

    fn groups(vals: &[f64]) -> BTreeMap<String, BTreeMap<Indicator, f64>> {
        vals.iter()
            .enumerate()
            .map(|(i, v)| (format!("g{i}"), BTreeMap::from([(Indicator::Apples, *v)])))
            .collect()
    }

    #[test]
    fn shared() {
        let b = shared_baseline(&groups(&[8.0, 6.0, 7.0, 9.0])).unwrap();
        assert_eq!(b.values[&Indicator::Apples], 7.5);
        assert!(matches!(b.provenance, BaselineProvenance::Shared { ref groups } if groups.len() == 4));

        let single = shared_baseline(&groups(&[3.0])).unwrap();
        assert_eq!(single.values[&Indicator::Apples], 3.0);
        assert!(matches!(single.provenance, BaselineProvenance::OwnGroup { .. }));

        let same = shared_baseline(&groups(&[2.0, 2.0, 2.0])).unwrap();
        assert_eq!(same.values[&Indicator::Apples], 2.0);
    }
}
