//! Merging metrics across run directories without recomputing anything.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use landscape_core::io::{fmt_num, parse_csv, CsvBuilder};

use crate::commands::open_run;
use crate::rundir::{self, read_listed};
use crate::{invalid, Command, ReportArgs, RunConfig};

/// Rows keyed by `(arch, seed, epoch)` with the numeric columns that follow.
struct Keyed {
    columns: Vec<String>,
    rows: BTreeMap<(String, u64, usize), Vec<f64>>,
}

fn parse_num(s: &str) -> Result<f64> {
    match s {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().with_context(|| format!("bad number '{s}'")),
    }
}

fn absorb(into: &mut Option<Keyed>, columns: &[String], rows: Vec<((String, u64, usize), Vec<f64>)>) -> Result<()> {
    let k = into.get_or_insert_with(|| Keyed { columns: columns.to_vec(), rows: BTreeMap::new() });
    if k.columns != columns {
        return invalid(format!("metric columns differ across runs: {:?} vs {:?}", k.columns, columns));
    }
    for (key, vals) in rows {
        if k.rows.insert(key.clone(), vals).is_some() {
            return invalid(format!("duplicate metrics for {key:?}"));
        }
    }
    Ok(())
}

/// Reads either a plain training run (`metrics.csv`, key from its config) or a
/// keyed bundle (`metrics_keyed.csv`).
fn load_run(dir: &Path, merged: &mut Option<Keyed>, tables: &mut Vec<String>) -> Result<()> {
    let m = rundir::verify(dir)?;
    if let Some(text) = read_listed(dir, &m, "metrics_keyed.csv")? {
        let (header, rows) = parse_csv(&text);
        let cols = header[3..].to_vec();
        let parsed = rows
            .iter()
            .map(|r| Ok(((r[0].clone(), r[1].parse()?, r[2].parse()?), r[3..].iter().map(|x| parse_num(x)).collect::<Result<Vec<_>>>()?)))
            .collect::<Result<Vec<_>>>()?;
        absorb(merged, &cols, parsed)?;
    } else if let Some(text) = read_listed(dir, &m, "metrics.csv")? {
        let cfg: RunConfig = serde_json::from_str(&fs::read_to_string(dir.join(rundir::CONFIG))?)?;
        let Command::Train(t) = cfg.command else {
            return invalid(format!("{}: metrics.csv without a training config", dir.display()));
        };
        let arch: landscape_core::model::Arch = t.arch.parse()?;
        let seed = t.seed.unwrap_or(0);
        let (header, rows) = parse_csv(&text);
        let cols = header[1..].to_vec();
        let parsed = rows
            .iter()
            .map(|r| Ok(((arch.to_string(), seed, r[0].parse()?), r[1..].iter().map(|x| parse_num(x)).collect::<Result<Vec<_>>>()?)))
            .collect::<Result<Vec<_>>>()?;
        absorb(merged, &cols, parsed)?;
    }
    if let Some(text) = read_listed(dir, &m, "length.csv")? {
        tables.push(text);
    }
    Ok(())
}

pub fn run_report(a: &ReportArgs, cmd: &Command) -> Result<()> {
    let mut merged = None;
    let mut tables = Vec::new();
    for dir in &a.runs {
        load_run(dir, &mut merged, &mut tables).with_context(|| format!("run {}", dir.display()))?;
    }
    if merged.is_none() && tables.is_empty() {
        return invalid("no metrics or length files in the given runs");
    }
    let mut rd = open_run(&a.out, cmd)?;
    if let Some(k) = merged {
        let mut header = vec!["arch".to_owned(), "seed".into(), "epoch".into()];
        header.extend(k.columns.iter().cloned());
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut b = CsvBuilder::new(&h);
        for ((arch, seed, epoch), vals) in &k.rows {
            b.row([arch.clone(), seed.to_string(), epoch.to_string()].into_iter().chain(vals.iter().map(|v| fmt_num(*v))));
        }
        rd.write("merged.csv", b.finish())?;

        let mut groups: BTreeMap<(String, usize), Vec<&Vec<f64>>> = BTreeMap::new();
        for ((arch, _, epoch), vals) in &k.rows {
            groups.entry((arch.clone(), *epoch)).or_default().push(vals);
        }
        let mut header = vec!["arch".to_owned(), "epoch".into(), "runs".into()];
        for c in &k.columns {
            header.extend([format!("{c}_mean"), format!("{c}_min"), format!("{c}_max")]);
        }
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut b = CsvBuilder::new(&h);
        for ((arch, epoch), list) in &groups {
            let mut fields = vec![arch.clone(), epoch.to_string(), list.len().to_string()];
            for c in 0..k.columns.len() {
                let col: Vec<f64> = list.iter().map(|v| v[c]).collect();
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                fields.extend([fmt_num(mean), fmt_num(lo), fmt_num(hi)]);
            }
            b.row(fields);
        }
        rd.write("summary.csv", b.finish())?;
    }
    if !tables.is_empty() {
        let mut out = String::new();
        for (i, t) in tables.iter().enumerate() {
            let mut lines = t.lines();
            let header = lines.next().unwrap_or_default();
            if i == 0 {
                out.push_str(header);
                out.push('\n');
            }
            for l in lines {
                out.push_str(l);
                out.push('\n');
            }
        }
        rd.write("length.csv", out)?;
    }
    rd.finish()?;
    println!("merged {} runs into {}", a.runs.len(), a.out.display());
    Ok(())
}
