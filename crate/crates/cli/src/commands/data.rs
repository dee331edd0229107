use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use emoforge_core::dataset::{manifest_path, record_key, split_held, Manifest, SplitSpec, SCHEMA_VERSION};
use emoforge_core::instruction::validate_record;
use emoforge_core::{jsonl, Dataset, InstructionRecord, Kind};

use crate::{fail, Failure, WithCode, EXIT_CONFIG, EXIT_INVALID, EXIT_OK};

fn read_dataset(path: &Path) -> Result<Dataset, Failure> {
    if !path.exists() {
        return fail(EXIT_CONFIG, format!("{}: no such file", path.display()));
    }
    Dataset::read(path).code(EXIT_INVALID)
}

/// Checks every line and reports each problem with its line number.
pub fn validate(path: &Path) -> Result<u8, Failure> {
    let text = jsonl::read_text(path).code(EXIT_CONFIG)?;
    let mut problems = Vec::new();
    let mut first_seen = HashMap::new();
    let mut counts: BTreeMap<Kind, usize> = BTreeMap::new();
    let mut total = 0;
    for (line, parsed) in jsonl::parse_lines::<InstructionRecord>(&text) {
        total += 1;
        let record = match parsed {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        if record.schema_version != SCHEMA_VERSION {
            problems.push(format!("line {line}: schema_version {} (expected {SCHEMA_VERSION})", record.schema_version));
            continue;
        }
        let key = record_key(&record);
        match validate_record(record) {
            Ok(r) => match first_seen.entry(key) {
                Entry::Occupied(prev) => {
                    problems.push(format!("line {line}: duplicate of line {} ({} {})", prev.get(), r.image_id, r.kind))
                }
                Entry::Vacant(slot) => {
                    slot.insert(line);
                    *counts.entry(r.kind).or_default() += 1;
                }
            },
            Err(violations) => {
                for v in violations {
                    problems.push(format!("line {line}: {v}"));
                }
            }
        }
    }

    let mpath = manifest_path(path);
    if mpath.exists() {
        match std::fs::read_to_string(&mpath).map_err(|e| e.to_string()).and_then(|t| {
            serde_json::from_str::<Manifest>(&t).map_err(|e| e.to_string())
        }) {
            Ok(m) => {
                let declared: BTreeMap<Kind, usize> = m.counts.into_iter().filter(|(_, n)| *n > 0).collect();
                if problems.is_empty() && declared != counts {
                    problems.push(format!("{}: declared counts {declared:?}, file has {counts:?}", mpath.display()));
                }
            }
            Err(e) => problems.push(format!("{}: {e}", mpath.display())),
        }
    }

    if problems.is_empty() {
        out!("ok: {total} records");
        Ok(EXIT_OK)
    } else {
        for p in &problems {
            out!("{}: {p}", path.display());
        }
        out!("{} problem(s) in {total} records", problems.len());
        Ok(EXIT_INVALID)
    }
}

fn named(arg: &str) -> Result<(String, PathBuf), Failure> {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => fail(EXIT_CONFIG, format!("expected name=path, got {arg:?}")),
    }
}

pub fn split(held_in: &str, held_out: &[String]) -> Result<u8, Failure> {
    let mut datasets = BTreeMap::new();
    let (in_name, in_path) = named(held_in)?;
    datasets.insert(in_name.clone(), read_dataset(&in_path)?);
    let mut out_names = Vec::new();
    for arg in held_out {
        let (name, path) = named(arg)?;
        if datasets.contains_key(&name) && name != in_name {
            return fail(EXIT_CONFIG, format!("dataset name {name:?} given twice"));
        }
        if name != in_name {
            datasets.insert(name.clone(), read_dataset(&path)?);
        }
        out_names.push(name);
    }
    let spec = SplitSpec { held_in: in_name, held_out: out_names };
    let (held_in, held_out) = split_held(&datasets, &spec).code(EXIT_INVALID)?;
    out!("held-in {}: {} images", spec.held_in, held_in.image_ids().len());
    for (name, d) in &held_out {
        out!("held-out {name}: {} images", d.image_ids().len());
    }
    out!("disjoint");
    Ok(EXIT_OK)
}

pub fn sample(input: &Path, output: &Path, fraction: f64, seed: u64) -> Result<u8, Failure> {
    if input == output {
        return fail(EXIT_CONFIG, "input and output must differ");
    }
    let d = read_dataset(input)?;
    let s = d.sample_fraction(fraction, seed).code(EXIT_CONFIG)?;
    s.write(output).code(EXIT_CONFIG)?;
    out!("sampled {} of {} images ({} records)", s.image_ids().len(), d.image_ids().len(), s.len());
    Ok(EXIT_OK)
}

pub fn stats(path: &Path) -> Result<u8, Failure> {
    let d = read_dataset(path)?;
    out!("{}", serde_json::to_string_pretty(&d.stats()).code(EXIT_CONFIG)?);
    Ok(EXIT_OK)
}

pub fn export(input: &Path, output: &Path) -> Result<u8, Failure> {
    let d = read_dataset(input)?;
    let rows = d.export_rows();
    jsonl::write_atomic(output, jsonl::to_string(&rows).as_bytes()).code(EXIT_CONFIG)?;
    out!("exported {} rows", rows.len());
    Ok(EXIT_OK)
}
