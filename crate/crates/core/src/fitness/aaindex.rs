use nalgebra::{DMatrix, SymmetricEigen};

use super::FitnessError;
use crate::structio::AminoAcid;

pub const AAINDEX_DIM: usize = 19;

/// One 19-dimensional row per amino acid, in [`AminoAcid`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct AaIndexTable {
    pub rows: [[f64; AAINDEX_DIM]; 20],
}

/// Reads CSV rows `aa,<values...>` (optional header). Empty or `NA`
/// fields are missing values. Every amino acid must appear exactly once.
pub fn read_aaindex_csv(text: &str) -> Result<Vec<Vec<Option<f64>>>, FitnessError> {
    let mut rows: Vec<Option<Vec<Option<f64>>>> = vec![None; 20];
    let mut width = None;
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let Some(aa) = fields[0].parse::<AminoAcid>().ok() else {
            if k == 0 {
                continue;
            }
            return Err(FitnessError::Parse {
                line: line_no,
                message: format!("unknown amino acid '{}'", fields[0]),
            });
        };
        let values: Result<Vec<Option<f64>>, FitnessError> = fields[1..]
            .iter()
            .map(|f| match *f {
                "" | "NA" | "nan" | "NaN" => Ok(None),
                v => v.parse().map(Some).map_err(|_| FitnessError::Parse {
                    line: line_no,
                    message: format!("bad value '{v}'"),
                }),
            })
            .collect();
        let values = values?;
        if *width.get_or_insert(values.len()) != values.len() {
            return Err(FitnessError::Parse {
                line: line_no,
                message: "row width differs from earlier rows".into(),
            });
        }
        if rows[aa.index()].replace(values).is_some() {
            return Err(FitnessError::Parse {
                line: line_no,
                message: format!("amino acid {aa} appears twice"),
            });
        }
    }
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.ok_or_else(|| {
                FitnessError::Dimension(format!("no row for amino acid {}", AminoAcid::from_index(i).expect("< 20")))
            })
        })
        .collect()
}

/// Imputes missing entries with their column mean, z-scores every column
/// (population standard deviation), and projects onto the top 19 principal
/// components. Each component's sign makes its largest-magnitude coordinate
/// positive.
pub fn reduce_aaindex(raw: &[Vec<Option<f64>>]) -> Result<AaIndexTable, FitnessError> {
    if raw.len() != 20 {
        return Err(FitnessError::Dimension(format!("expected 20 rows, got {}", raw.len())));
    }
    let k = raw[0].len();
    if k < AAINDEX_DIM || raw.iter().any(|r| r.len() != k) {
        return Err(FitnessError::Dimension(format!("need at least {AAINDEX_DIM} equal-width columns, got {k}")));
    }
    let mut z = DMatrix::<f64>::zeros(20, k);
    for c in 0..k {
        let present: Vec<f64> = raw.iter().filter_map(|r| r[c]).collect();
        if present.is_empty() {
            return Err(FitnessError::Dimension(format!("column {c} has no values")));
        }
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        let col: Vec<f64> = raw.iter().map(|r| r[c].unwrap_or(mean)).collect();
        let mu = col.iter().sum::<f64>() / 20.0;
        let sd = (col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / 20.0).sqrt();
        if !(sd > 1e-12 * (1.0 + mu.abs())) {
            return Err(FitnessError::Dimension(format!("column {c} is constant")));
        }
        for (r, x) in col.iter().enumerate() {
            z[(r, c)] = (x - mu) / sd;
        }
    }
    let cov = z.transpose() * &z / 20.0;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut rows = [[0.0; AAINDEX_DIM]; 20];
    for (j, &e) in order.iter().take(AAINDEX_DIM).enumerate() {
        let v = eig.eigenvectors.column(e);
        let proj = &z * v;
        let pivot = proj.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..20 {
            rows[r][j] = sign * proj[r];
        }
    }
    Ok(AaIndexTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(k: usize) -> Vec<Vec<Option<f64>>> {
        (0..20)
            .map(|r| (0..k).map(|c| Some(((r * 7 + c * 13) % 17) as f64 + (r * c) as f64 * 0.01)).collect())
            .collect()
    }

    #[test]
    fn variance_is_non_increasing() {
        let t = reduce_aaindex(&table(30)).unwrap();
        let var: Vec<f64> = (0..AAINDEX_DIM).map(|j| t.rows.iter().map(|r| r[j] * r[j]).sum::<f64>()).collect();
        assert!(var.windows(2).all(|w| w[0] >= w[1] - 1e-9));
    }

    #[test]
    fn dimension_errors() {
        assert!(matches!(reduce_aaindex(&table(10)), Err(FitnessError::Dimension(_))));
        let mut t = table(25);
        t.iter_mut().for_each(|r| r[3] = Some(1.0));
        assert!(matches!(reduce_aaindex(&t), Err(FitnessError::Dimension(_))));
    }

    #[test]
    fn missing_values_take_column_mean() {
        let mut t = table(25);
        let col: Vec<f64> = t.iter().skip(1).map(|r| r[0].unwrap()).collect();
        let mean = col.iter().sum::<f64>() / 19.0;
        t[0][0] = None;
        let mut filled = t.clone();
        filled[0][0] = Some(mean);
        assert_eq!(reduce_aaindex(&t).unwrap(), reduce_aaindex(&filled).unwrap());
    }

    #[test]
    fn csv_reader_accepts_header_and_gaps() {
        let mut text = String::from("aa,i1,i2\n");
        for (k, c) in crate::structio::CODES.iter().enumerate() {
            text.push_str(&format!("{c},{k},{}\n", if k == 3 { "NA".to_string() } else { (k * 2).to_string() }));
        }
        let rows = read_aaindex_csv(&text).unwrap();
        assert_eq!(rows.len(), 20);
        assert_eq!(rows[3][1], None);
        assert_eq!(rows[4][1], Some(8.0));
    }
}
