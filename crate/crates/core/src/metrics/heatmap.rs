use std::collections::BTreeMap;
use std::fmt::Write;

use crate::scenario::ScenarioId;

const D_ROWS: [u32; 3] = [1, 2, 3];
const VS_COLS: [f64; 3] = [0.3, 0.5, 0.7];

/// Nine-cell table, rows by disruption count and columns by removal
/// probability. Returns the CSV and one warning per missing scenario.
pub fn heatmap_csv(results: &BTreeMap<ScenarioId, f64>) -> (String, Vec<String>) {
    let mut out = String::from("d\\v_s");
    for v in VS_COLS {
        write!(out, ",{v}").expect("write to string");
    }
    out.push('\n');
    let mut warnings = Vec::new();
    for d in D_ROWS {
        write!(out, "{d}").expect("write to string");
        for col in 0..3u8 {
            let id = ScenarioId::new((d as u8 - 1) * 3 + col + 1).expect("1..=9");
            match results.get(&id) {
                Some(rho) => write!(out, ",{rho:.6}").expect("write to string"),
                None => {
                    out.push(',');
                    warnings.push(format!("no result for {id}; cell left blank"));
                }
            }
        }
        out.push('\n');
    }
    for w in &warnings {
        tracing::warn!("{w}");
    }
    (out, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(f: impl Fn(u8) -> f64) -> BTreeMap<ScenarioId, f64> {
        (1..=9).map(|n| (ScenarioId::new(n).unwrap(), f(n))).collect()
    }

    #[test]
    fn layout() {
        let (csv, warns) = heatmap_csv(&full(|n| n as f64 / 10.0));
        assert!(warns.is_empty());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "d\\v_s,0.3,0.5,0.7");
        assert_eq!(lines[1], "1,0.100000,0.200000,0.300000");
        assert_eq!(lines[3], "3,0.700000,0.800000,0.900000");
    }

    #[test]
    fn constant_and_missing() {
        let (csv, _) = heatmap_csv(&full(|_| 1.0));
        assert!(csv.lines().skip(1).all(|l| l.ends_with("1.000000,1.000000,1.000000")));
        let mut partial = full(|_| 1.0);
        partial.remove(&ScenarioId::new(5).unwrap());
        let (csv, warns) = heatmap_csv(&partial);
        assert_eq!(warns.len(), 1);
        assert_eq!(csv.lines().nth(2).unwrap(), "2,1.000000,,1.000000");
    }
}
