//! `mdd report`: static SVG charts from sweep and per-phone CSVs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;

use crate::svg::{bar_chart, line_chart, Series};
use crate::util::{write_file, CliError, CliResult};

#[derive(Args)]
pub struct ReportArgs {
    /// sweep.csv from `mdd sweep`: renders per-metric lines over M, one
    /// line per beta.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// per_phone.csv from `mdd eval`: renders a per-phone F1 bar chart.
    #[arg(long)]
    pub per_phone: Option<PathBuf>,
    /// Output directory for the SVG files.
    #[arg(long)]
    pub out: PathBuf,
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_csv(path: &Path) -> CliResult<Csv> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {path:?}: {e}")))?;
    let mut lines = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| CliError::data(format!("{path:?} has no header row")))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok(Csv { header, rows })
}

fn column(csv: &Csv, name: &str) -> CliResult<usize> {
    csv.header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::data(format!("missing CSV column {name:?}")))
}

fn render_sweep(path: &Path, out: &Path) -> CliResult<Vec<String>> {
    let csv = read_csv(path)?;
    let (m_col, beta_col) = (column(&csv, "m")?, column(&csv, "beta")?);
    let mut written = Vec::new();
    for metric in ["per", "f1", "dar"] {
        let v_col = column(&csv, metric)?;
        // beta -> averaged points per M (averaging over seeds)
        let mut by_beta: BTreeMap<String, BTreeMap<u64, (f64, usize)>> = BTreeMap::new();
        for row in &csv.rows {
            let (Ok(m), Ok(v)) = (row[m_col].parse::<u64>(), row[v_col].parse::<f64>()) else {
                continue; // NA or failed cell
            };
            let slot = by_beta
                .entry(row[beta_col].clone())
                .or_default()
                .entry(m)
                .or_insert((0.0, 0));
            slot.0 += v;
            slot.1 += 1;
        }
        let series: Vec<Series> = by_beta
            .iter()
            .map(|(beta, points)| Series {
                label: format!("beta={beta}"),
                points: points
                    .iter()
                    .map(|(&m, &(sum, n))| (m as f64, sum / n as f64))
                    .collect(),
            })
            .collect();
        if series.is_empty() {
            continue;
        }
        let chart = line_chart(
            &format!("dev {} vs M-best list size", metric.to_uppercase()),
            "M",
            metric,
            &series,
        );
        let file = out.join(format!("sweep_{metric}.svg"));
        write_file(&file, &chart)?;
        written.push(file.display().to_string());
    }
    Ok(written)
}

fn render_per_phone(path: &Path, out: &Path) -> CliResult<Vec<String>> {
    let csv = read_csv(path)?;
    let (p_col, f1_col) = (column(&csv, "phone")?, column(&csv, "f1")?);
    let mut bars: Vec<(String, f64)> = csv
        .rows
        .iter()
        .filter_map(|row| {
            row[f1_col]
                .parse::<f64>()
                .ok()
                .map(|f1| (row[p_col].clone(), f1))
        })
        .collect();
    bars.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    bars.truncate(20);
    let chart = bar_chart("per-phone detection F1 (top 20)", "F1", &bars);
    let file = out.join("per_phone_f1.svg");
    write_file(&file, &chart)?;
    Ok(vec![file.display().to_string()])
}

pub fn run(args: ReportArgs) -> CliResult {
    if args.sweep.is_none() && args.per_phone.is_none() {
        return Err(CliError::usage(
            "nothing to render: pass --sweep and/or --per-phone",
        ));
    }
    std::fs::create_dir_all(&args.out)?;
    let mut written = Vec::new();
    if let Some(sweep) = &args.sweep {
        written.extend(render_sweep(sweep, &args.out)?);
    }
    if let Some(per_phone) = &args.per_phone {
        written.extend(render_per_phone(per_phone, &args.out)?);
    }
    println!("rendered: {}", written.join(", "));
    Ok(())
}
