//! File formats: mortality panel loaders (HMD fixed-width text and long
//! CSV), pandemic tables, and the CSV writers for every command's outputs.

use std::fmt;
use std::fs;
use std::path::Path;

use leecarter::bootstrap::BootstrapSummary;
use leecarter::dataset::{AgeGroup, MortalityDataset, PandemicTable};
use leecarter::gaussian::LeeCarterFit;
use leecarter::matching::OutlierReport;
use leecarter::matrix::Mat;
use leecarter::simulation::{AggregateRow, ExperimentResult};

/// U.S. 2020 Covid-19 deaths by age group (CDC), the default pandemic
/// table for `simulate`. The open-ended oldest group is bounded at 100 to
/// match the 0-100 study convention.
pub const BUNDLED_PANDEMIC_CSV: &str = include_str!("../data/us_covid19_deaths_2020.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    HmdTxt,
    CsvLong,
}

impl InputFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hmd_txt" => Some(InputFormat::HmdTxt),
            "csv_long" => Some(InputFormat::CsvLong),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            InputFormat::HmdTxt => "hmd_txt",
            InputFormat::CsvLong => "csv_long",
        }
    }
}

/// IO and parse failures, with line numbers where they exist.
#[derive(Debug)]
pub enum FormatError {
    Io(String),
    Parse { line: usize, message: String },
    Panel(String),
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatError::Io(msg) => write!(f, "io: {msg}"),
            FormatError::Parse { line, message } => write!(f, "line {line}: {message}"),
            FormatError::Panel(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for FormatError {}

fn read(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|e| FormatError::Io(format!("{}: {e}", path.display())))
}

/// Age token: plain integer, or an open group like "100+" / "110+" which
/// maps to its numeric prefix.
fn parse_age(tok: &str, line: usize) -> Result<u32, FormatError> {
    let digits = tok.strip_suffix('+').unwrap_or(tok);
    digits.parse::<u32>().map_err(|_| FormatError::Parse {
        line,
        message: format!("bad age token {tok:?}"),
    })
}

fn parse_num(tok: &str, what: &str, line: usize) -> Result<f64, FormatError> {
    tok.parse::<f64>().map_err(|_| FormatError::Parse {
        line,
        message: format!("bad {what} value {tok:?}"),
    })
}

/// Cell collector that assembles a full rectangular panel or reports the
/// missing/duplicate cell.
struct PanelBuilder {
    cells: std::collections::BTreeMap<(i32, u32), f64>,
}

impl PanelBuilder {
    fn new() -> Self {
        PanelBuilder {
            cells: std::collections::BTreeMap::new(),
        }
    }

    fn insert(&mut self, year: i32, age: u32, value: f64, line: usize) -> Result<(), FormatError> {
        if self.cells.insert((year, age), value).is_some() {
            return Err(FormatError::Parse {
                line,
                message: format!("duplicate cell (age {age}, year {year})"),
            });
        }
        Ok(())
    }

    fn into_matrix(self, what: &str) -> Result<(Vec<u32>, Vec<i32>, Mat), FormatError> {
        if self.cells.is_empty() {
            return Err(FormatError::Panel(format!("no {what} rows found")));
        }
        let mut ages: Vec<u32> = self.cells.keys().map(|&(_, a)| a).collect();
        ages.sort_unstable();
        ages.dedup();
        let mut years: Vec<i32> = self.cells.keys().map(|&(y, _)| y).collect();
        years.sort_unstable();
        years.dedup();
        let mut data = Vec::with_capacity(ages.len() * years.len());
        for &year in &years {
            for &age in &ages {
                match self.cells.get(&(year, age)) {
                    Some(&v) => data.push(v),
                    None => {
                        return Err(FormatError::Panel(format!(
                            "non-rectangular panel: missing {what} cell (age {age}, year {year})"
                        )))
                    }
                }
            }
        }
        let m = Mat::from_col_major(ages.len(), years.len(), data);
        Ok((ages, years, m))
    }
}

/// Long CSV with header `year,age,deaths,exposure`, one cell per row.
fn parse_csv_long(text: &str) -> Result<(Vec<u32>, Vec<i32>, Mat, Mat), FormatError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(FormatError::Panel("empty file".into()))?;
    let cols: Vec<String> = header
        .split(',')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    if cols != ["year", "age", "deaths", "exposure"] {
        return Err(FormatError::Parse {
            line: 1,
            message: "expected header `year,age,deaths,exposure`".into(),
        });
    }
    let mut deaths = PanelBuilder::new();
    let mut exposures = PanelBuilder::new();
    for (idx, row) in lines {
        let line = idx + 1;
        if row.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = row.split(',').map(str::trim).collect();
        if toks.len() != 4 {
            return Err(FormatError::Parse {
                line,
                message: format!("expected 4 fields, found {}", toks.len()),
            });
        }
        let year: i32 = toks[0].parse().map_err(|_| FormatError::Parse {
            line,
            message: format!("bad year {:?}", toks[0]),
        })?;
        let age = parse_age(toks[1], line)?;
        deaths.insert(year, age, parse_num(toks[2], "deaths", line)?, line)?;
        exposures.insert(year, age, parse_num(toks[3], "exposure", line)?, line)?;
    }
    let (ages, years, d) = deaths.into_matrix("deaths")?;
    let (_, _, n) = exposures.into_matrix("exposure")?;
    Ok((ages, years, d, n))
}

/// One HMD-style table (Deaths or Exposures): whitespace-separated rows
/// `Year Age Female Male Total`; preamble and header lines are skipped.
/// The Total column is used.
fn parse_hmd_table(text: &str, what: &str) -> Result<(Vec<u32>, Vec<i32>, Mat), FormatError> {
    let mut builder = PanelBuilder::new();
    for (idx, row) in text.lines().enumerate() {
        let line = idx + 1;
        let toks: Vec<&str> = row.split_whitespace().collect();
        if toks.len() != 5 {
            continue;
        }
        // Data rows start with a 4-digit year; anything else is preamble.
        let Ok(year) = toks[0].parse::<i32>() else {
            continue;
        };
        let age = parse_age(toks[1], line)?;
        let total = parse_num(toks[4], what, line)?;
        builder.insert(year, age, total, line)?;
    }
    builder.into_matrix(what)
}

/// Load a mortality panel.
///
/// For `csv_long`, `path` is the CSV file. For `hmd_txt`, `path` is a
/// directory holding `Deaths_1x1.txt` and `Exposures_1x1.txt` as
/// downloaded from the Human Mortality Database.
pub fn load_dataset(
    path: &Path,
    format: InputFormat,
    rate_floor: f64,
) -> Result<MortalityDataset, Box<dyn std::error::Error>> {
    let (ages, years, deaths, exposures) = match format {
        InputFormat::CsvLong => parse_csv_long(&read(path)?)?,
        InputFormat::HmdTxt => {
            let deaths_text = read(&path.join("Deaths_1x1.txt"))?;
            let exposures_text = read(&path.join("Exposures_1x1.txt"))?;
            let (ages_d, years_d, d) = parse_hmd_table(&deaths_text, "deaths")?;
            let (ages_n, years_n, n) = parse_hmd_table(&exposures_text, "exposure")?;
            if ages_d != ages_n || years_d != years_n {
                return Err(Box::new(FormatError::Panel(
                    "deaths and exposures cover different age/year grids".into(),
                )));
            }
            (ages_d, years_d, d, n)
        }
    };
    Ok(MortalityDataset::with_rate_floor(
        ages, years, deaths, exposures, rate_floor,
    )?)
}

/// Pandemic table CSV with header `age_low,age_high,deaths`.
pub fn parse_pandemic_csv(text: &str) -> Result<PandemicTable, Box<dyn std::error::Error>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(FormatError::Panel("empty pandemic table".into()))?;
    let cols: Vec<String> = header
        .split(',')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    if cols != ["age_low", "age_high", "deaths"] {
        return Err(Box::new(FormatError::Parse {
            line: 1,
            message: "expected header `age_low,age_high,deaths`".into(),
        }));
    }
    let mut groups = Vec::new();
    for (idx, row) in lines {
        let line = idx + 1;
        if row.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = row.split(',').map(str::trim).collect();
        if toks.len() != 3 {
            return Err(Box::new(FormatError::Parse {
                line,
                message: format!("expected 3 fields, found {}", toks.len()),
            }));
        }
        groups.push(AgeGroup {
            age_low: parse_age(toks[0], line)?,
            age_high: parse_age(toks[1], line)?,
            deaths: parse_num(toks[2], "deaths", line)?,
        });
    }
    Ok(PandemicTable::new(groups)?)
}

pub fn load_pandemic_table(path: &Path) -> Result<PandemicTable, Box<dyn std::error::Error>> {
    parse_pandemic_csv(&read(path)?)
}

/// 17 significant digits; round-trips f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), Box<dyn std::error::Error>> {
    fs::write(path, content).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(())
}

/// `a.csv`, `b.csv` (age,value) and `k.csv` (year,value).
pub fn write_fit_csvs(
    dir: &Path,
    ds: &MortalityDataset,
    fit: &LeeCarterFit,
) -> Result<(), Box<dyn std::error::Error>> {
    let mut a = String::from("age,value\n");
    let mut b = String::from("age,value\n");
    for (x, &age) in ds.ages().iter().enumerate() {
        a.push_str(&format!("{age},{}\n", fmt_f64(fit.a[x])));
        b.push_str(&format!("{age},{}\n", fmt_f64(fit.b[x])));
    }
    let mut k = String::from("year,value\n");
    for (t, &year) in ds.years().iter().enumerate() {
        k.push_str(&format!("{year},{}\n", fmt_f64(fit.k[t])));
    }
    write_file(&dir.join("a.csv"), &a)?;
    write_file(&dir.join("b.csv"), &b)?;
    write_file(&dir.join("k.csv"), &k)?;
    Ok(())
}

/// `bootstrap.csv`: `parameter,index,point,se,ci_lo,ci_hi`.
pub fn write_bootstrap_csv(
    dir: &Path,
    summary: &BootstrapSummary,
) -> Result<(), Box<dyn std::error::Error>> {
    let mut out = String::from("parameter,index,point,se,ci_lo,ci_hi\n");
    for row in &summary.parameters {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.block.as_str(),
            row.label,
            fmt_f64(row.point),
            fmt_f64(row.se),
            fmt_f64(row.ci_lo),
            fmt_f64(row.ci_hi),
        ));
    }
    write_file(&dir.join("bootstrap.csv"), &out)
}

/// `outliers.csv`: `year,score,threshold,flagged`.
pub fn write_outlier_csv(
    dir: &Path,
    years: &[i32],
    report: &OutlierReport,
) -> Result<(), Box<dyn std::error::Error>> {
    let mut out = String::from("year,score,threshold,flagged\n");
    for (t, &year) in years.iter().enumerate() {
        out.push_str(&format!(
            "{year},{},{},{}\n",
            fmt_f64(report.scores[t]),
            fmt_f64(report.threshold),
            report.flags[t],
        ));
    }
    write_file(&dir.join("outliers.csv"), &out)
}

/// `experiments.csv`: one row per experiment per estimator.
pub fn write_experiments_csv(
    dir: &Path,
    experiments: &[ExperimentResult],
) -> Result<(), Box<dyn std::error::Error>> {
    let mut out = String::from(
        "window_start,window_end,method,mape_a,rmspe_a,mape_b,rmspe_b,mape_k,rmspe_k,excluded,failed\n",
    );
    for e in experiments {
        for s in &e.scores {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                e.outlier_window.0,
                e.outlier_window.1,
                s.method.as_str(),
                fmt_f64(s.a_mape),
                fmt_f64(s.a_rmspe),
                fmt_f64(s.b_mape),
                fmt_f64(s.b_rmspe),
                fmt_f64(s.k_mape),
                fmt_f64(s.k_rmspe),
                s.excluded,
                s.failed,
            ));
        }
    }
    write_file(&dir.join("experiments.csv"), &out)
}

/// `aggregate.csv`: per-method, per-metric sample mean and s.d.
pub fn write_aggregate_csv(
    dir: &Path,
    rows: &[AggregateRow],
) -> Result<(), Box<dyn std::error::Error>> {
    let mut out = String::from("method,metric,mean,sd,experiments\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method.as_str(),
            r.metric,
            fmt_f64(r.mean),
            fmt_f64(r.sd),
            r.experiments,
        ));
    }
    write_file(&dir.join("aggregate.csv"), &out)
}
