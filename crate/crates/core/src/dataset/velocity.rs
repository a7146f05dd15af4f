//! Per-account behavioral velocity features.
//!
//! All five features are causal: the value for a row uses only rows of the
//! same account that come strictly earlier in (time, original index) order,
//! so deleting any later row never changes an earlier row's features.

use serde::{Deserialize, Serialize};

use super::{DataTable, DatasetError};

/// Column roles for velocity construction. Time and account come from the
/// table's own role columns; amount and merchant name feature columns.
/// Location is a pair of coordinate columns and is optional — without it
/// the distance feature is skipped with a warning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VelocityConfig {
    pub amount: String,
    pub merchant: String,
    #[serde(default)]
    pub location: Option<(String, String)>,
    /// Length of one day in time-column units (86400 for epoch seconds).
    #[serde(default = "default_day")]
    pub day_duration: f64,
}

fn default_day() -> f64 {
    86_400.0
}

/// Append the velocity features:
///
/// - `vel_time_since_last`: gap to the account's previous transaction.
/// - `vel_amount_ratio_7d`: amount over the mean amount of the account's
///   prior-7-day window.
/// - `vel_count_24h`: prior transactions of the account within 24 hours.
/// - `vel_merchant_count_7d`: distinct merchants in the prior 7 days.
/// - `vel_geo_distance`: Euclidean distance from the previous transaction's
///   location (omitted when no location columns are mapped).
///
/// An account's first transaction gets neutral sentinels: gap 0, ratio 1,
/// counts 0, distance 0. An empty rolling window also yields ratio 1, as
/// does a zero window mean.
pub fn velocity_features(
    table: &DataTable,
    config: &VelocityConfig,
) -> Result<DataTable, DatasetError> {
    let time = table.time().ok_or_else(|| {
        DatasetError::Configuration("velocity features need a time column".into())
    })?;
    let account = table.account().ok_or_else(|| {
        DatasetError::Configuration("velocity features need an account column".into())
    })?;
    let amount_col = table.feature_index(&config.amount).ok_or_else(|| {
        DatasetError::Configuration(format!("amount column '{}' not found", config.amount))
    })?;
    let merchant_col = table.feature_index(&config.merchant).ok_or_else(|| {
        DatasetError::Configuration(format!("merchant column '{}' not found", config.merchant))
    })?;
    let location_cols = match &config.location {
        Some((x, y)) => {
            let xi = table.feature_index(x).ok_or_else(|| {
                DatasetError::Configuration(format!("location column '{x}' not found"))
            })?;
            let yi = table.feature_index(y).ok_or_else(|| {
                DatasetError::Configuration(format!("location column '{y}' not found"))
            })?;
            Some((xi, yi))
        }
        None => {
            log::warn!("no location columns mapped; skipping the geo-distance feature");
            None
        }
    };
    if config.day_duration <= 0.0 {
        return Err(DatasetError::Configuration(
            "day_duration must be positive".into(),
        ));
    }

    let n = table.n_rows();
    let day = config.day_duration;
    let mut time_since = vec![0.0; n];
    let mut amount_ratio = vec![1.0; n];
    let mut count_24h = vec![0.0; n];
    let mut merchant_7d = vec![0.0; n];
    let mut geo_dist = vec![0.0; n];

    // group rows per account, in (time, index) order
    let mut groups: std::collections::HashMap<&str, Vec<usize>> = std::collections::HashMap::new();
    for (i, acct) in account.iter().enumerate() {
        groups.entry(acct.as_str()).or_default().push(i);
    }
    for order in groups.values_mut() {
        order.sort_by(|&a, &b| time[a].total_cmp(&time[b]).then(a.cmp(&b)));

        for (pos, &i) in order.iter().enumerate() {
            if pos == 0 {
                continue; // sentinels already in place
            }
            let prev = order[pos - 1];
            time_since[i] = time[i] - time[prev];

            let mut amount_sum = 0.0;
            let mut amount_n = 0.0;
            let mut count = 0.0;
            let mut merchants: Vec<f64> = Vec::new();
            for &j in order[..pos].iter().rev() {
                let gap = time[i] - time[j];
                if gap >= 7.0 * day {
                    break;
                }
                amount_sum += table.row(j)[amount_col];
                amount_n += 1.0;
                let m = table.row(j)[merchant_col];
                if !merchants.contains(&m) {
                    merchants.push(m);
                }
                if gap < day {
                    count += 1.0;
                }
            }
            if amount_n > 0.0 && amount_sum != 0.0 {
                amount_ratio[i] = table.row(i)[amount_col] / (amount_sum / amount_n);
            }
            count_24h[i] = count;
            merchant_7d[i] = merchants.len() as f64;

            if let Some((xi, yi)) = location_cols {
                let dx = table.row(i)[xi] - table.row(prev)[xi];
                let dy = table.row(i)[yi] - table.row(prev)[yi];
                geo_dist[i] = (dx * dx + dy * dy).sqrt();
            }
        }
    }

    let mut names = vec![
        "vel_time_since_last".to_string(),
        "vel_amount_ratio_7d".to_string(),
        "vel_count_24h".to_string(),
        "vel_merchant_count_7d".to_string(),
    ];
    let mut columns = vec![time_since, amount_ratio, count_24h, merchant_7d];
    if location_cols.is_some() {
        names.push("vel_geo_distance".to_string());
        columns.push(geo_dist);
    }
    table.append_columns(names, columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> VelocityConfig {
        VelocityConfig {
            amount: "amt".into(),
            merchant: "merch".into(),
            location: Some(("lx".into(), "ly".into())),
            day_duration: 1.0, // 1 unit = 1 day in these tests
        }
    }

    fn table(times: Vec<f64>, accounts: Vec<&str>, rows: Vec<Vec<f64>>) -> DataTable {
        let labels = vec![0u8; rows.len()];
        DataTable::new(
            vec!["amt".into(), "merch".into(), "lx".into(), "ly".into()],
            rows,
            labels,
        )
        .unwrap()
        .with_time(times)
        .unwrap()
        .with_account(accounts.into_iter().map(str::to_owned).collect())
        .unwrap()
    }

    fn col<'a>(t: &'a DataTable, name: &str) -> Vec<f64> {
        let j = t.feature_index(name).unwrap();
        t.rows().iter().map(|r| r[j]).collect()
    }

    #[test]
    fn time_since_last_is_the_gap() {
        let t = table(
            vec![0.0, 100.0],
            vec!["a", "a"],
            vec![vec![10.0, 1.0, 0.0, 0.0], vec![10.0, 1.0, 0.0, 0.0]],
        );
        let out = velocity_features(&t, &config()).unwrap();
        assert_eq!(col(&out, "vel_time_since_last"), vec![0.0, 100.0]);
    }

    #[test]
    fn first_transaction_sentinels() {
        let t = table(
            vec![5.0],
            vec!["a"],
            vec![vec![10.0, 1.0, 2.0, 3.0]],
        );
        let out = velocity_features(&t, &config()).unwrap();
        assert_eq!(col(&out, "vel_time_since_last"), vec![0.0]);
        assert_eq!(col(&out, "vel_amount_ratio_7d"), vec![1.0]);
        assert_eq!(col(&out, "vel_count_24h"), vec![0.0]);
        assert_eq!(col(&out, "vel_merchant_count_7d"), vec![0.0]);
        assert_eq!(col(&out, "vel_geo_distance"), vec![0.0]);
    }

    #[test]
    fn count_in_prior_24h_window() {
        // three transactions inside one day: the third sees the other two
        let t = table(
            vec![0.0, 0.3, 0.6],
            vec!["a", "a", "a"],
            vec![
                vec![10.0, 1.0, 0.0, 0.0],
                vec![10.0, 2.0, 0.0, 0.0],
                vec![10.0, 3.0, 0.0, 0.0],
            ],
        );
        let out = velocity_features(&t, &config()).unwrap();
        assert_eq!(col(&out, "vel_count_24h"), vec![0.0, 1.0, 2.0]);
        assert_eq!(col(&out, "vel_merchant_count_7d"), vec![0.0, 1.0, 2.0]);

        // brute-force window oracle for the last row
        let times = [0.0, 0.3, 0.6];
        let expected = times[..2]
            .iter()
            .filter(|&&tj| times[2] - tj < 1.0)
            .count() as f64;
        assert_eq!(col(&out, "vel_count_24h")[2], expected);
    }

    #[test]
    fn rolling_mean_ratio() {
        // prior-7d amounts for the third row: 10 and 30, mean 20; amount 40
        let t = table(
            vec![0.0, 1.0, 2.0],
            vec!["a", "a", "a"],
            vec![
                vec![10.0, 1.0, 0.0, 0.0],
                vec![30.0, 1.0, 0.0, 0.0],
                vec![40.0, 1.0, 0.0, 0.0],
            ],
        );
        let out = velocity_features(&t, &config()).unwrap();
        let ratio = col(&out, "vel_amount_ratio_7d");
        assert_eq!(ratio[0], 1.0);
        assert!((ratio[1] - 3.0).abs() < 1e-12);
        assert!((ratio[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn accounts_do_not_mix_and_distance_is_euclidean() {
        let t = table(
            vec![0.0, 1.0, 2.0],
            vec!["a", "b", "a"],
            vec![
                vec![10.0, 1.0, 0.0, 0.0],
                vec![99.0, 9.0, 50.0, 50.0],
                vec![10.0, 2.0, 3.0, 4.0],
            ],
        );
        let out = velocity_features(&t, &config()).unwrap();
        assert_eq!(col(&out, "vel_time_since_last"), vec![0.0, 0.0, 2.0]);
        let d = col(&out, "vel_geo_distance");
        assert_eq!(d[1], 0.0);
        assert!((d[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn missing_location_skips_distance() {
        let t = table(
            vec![0.0],
            vec!["a"],
            vec![vec![1.0, 1.0, 0.0, 0.0]],
        );
        let mut cfg = config();
        cfg.location = None;
        let out = velocity_features(&t, &cfg).unwrap();
        assert!(out.feature_index("vel_geo_distance").is_none());
        assert!(out.feature_index("vel_merchant_count_7d").is_some());
    }

    #[test]
    fn missing_merchant_column_is_configuration_error() {
        let t = table(vec![0.0], vec!["a"], vec![vec![1.0, 1.0, 0.0, 0.0]]);
        let mut cfg = config();
        cfg.merchant = "nope".into();
        assert!(matches!(
            velocity_features(&t, &cfg),
            Err(DatasetError::Configuration(_))
        ));
    }

    #[test]
    fn causal_no_lookahead() {
        // recomputing after deleting any strictly-later row leaves earlier
        // rows' features unchanged
        let times = vec![0.0, 0.5, 1.0, 1.5, 9.0];
        let t = table(
            times.clone(),
            vec!["a", "a", "a", "a", "a"],
            (0..5)
                .map(|i| vec![10.0 + i as f64, i as f64, i as f64, 0.0])
                .collect(),
        );
        let full = velocity_features(&t, &config()).unwrap();

        for cut in 0..5 {
            let keep: Vec<usize> = (0..5).filter(|&i| times[i] <= times[cut]).collect();
            let truncated = velocity_features(&t.subset(&keep).unwrap(), &config()).unwrap();
            for (local, &orig) in keep.iter().enumerate() {
                assert_eq!(
                    truncated.row(local)[4..],
                    full.row(orig)[4..],
                    "row {orig} changed after deleting later rows"
                );
            }
        }
    }
}
