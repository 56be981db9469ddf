//! CSV persistence for value grids and feedback policies.
//!
//! A policy file starts with one header line
//!
//! ```text
//! #gclt-policy v1 dim=1 steps=8 extremes=2 half_width=12 nodes=193
//! ```
//!
//! followed by CSV rows `step,start,end,index`: nodes `start..end` of step
//! `step` use extreme `index`. Runs cover every node of every step.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::dp::{FeedbackPolicy, ValueGrid};
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;

const POLICY_MAGIC: &str = "#gclt-policy v1";

/// Writes `slice,time,x0,..,value`, one row per stored node value.
pub fn write_value_grid<W: Write>(values: &ValueGrid, out: W) -> Result<()> {
    let grid = &values.grid;
    let d = grid.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["slice".to_owned(), "time".to_owned()];
    header.extend((0..d).map(|r| format!("x{r}")));
    header.push("value".into());
    w.write_record(&header)?;
    let mut x = vec![0.0; d];
    for (s, (t, slice)) in values.times.iter().zip(&values.slices).enumerate() {
        for (node, v) in slice.iter().enumerate() {
            grid.coords(node, &mut x);
            let mut row = vec![s.to_string(), t.to_string()];
            row.extend(x.iter().map(f64::to_string));
            row.push(v.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_policy<W: Write>(policy: &FeedbackPolicy, mut out: W) -> Result<()> {
    let g = &policy.grid;
    let join = |v: Vec<String>| v.join(",");
    writeln!(
        out,
        "{POLICY_MAGIC} dim={} steps={} extremes={} half_width={} nodes={}",
        g.dim(),
        policy.steps(),
        policy.extremes,
        join(g.half_width().iter().map(f64::to_string).collect()),
        join(g.nodes_per_axis().iter().map(usize::to_string).collect()),
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "start", "end", "index"])?;
    for (j, slice) in policy.indices.iter().enumerate() {
        let mut start = 0;
        for end in 1..=slice.len() {
            if end == slice.len() || slice[end] != slice[start] {
                w.serialize((j, start, end, slice[start]))?;
                start = end;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_policy<R: Read>(input: R) -> Result<FeedbackPolicy> {
    let mut reader = BufReader::new(input);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let fields = header
        .trim()
        .strip_prefix(POLICY_MAGIC)
        .ok_or_else(|| Error::PolicyMismatch("missing policy header line".into()))?;
    let mut dim = None;
    let mut steps = None;
    let mut extremes = None;
    let mut half_width = None;
    let mut nodes = None;
    let bad = |what: &str| Error::PolicyMismatch(format!("malformed header field `{what}`"));
    for field in fields.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| bad(field))?;
        match key {
            "dim" => dim = Some(value.parse::<usize>().map_err(|_| bad(field))?),
            "steps" => steps = Some(value.parse::<usize>().map_err(|_| bad(field))?),
            "extremes" => extremes = Some(value.parse::<usize>().map_err(|_| bad(field))?),
            "half_width" => {
                half_width = Some(
                    value
                        .split(',')
                        .map(|v| v.parse::<f64>().map_err(|_| bad(field)))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "nodes" => {
                nodes = Some(
                    value
                        .split(',')
                        .map(|v| v.parse::<usize>().map_err(|_| bad(field)))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            _ => return Err(bad(field)),
        }
    }
    let (Some(dim), Some(steps), Some(extremes), Some(half_width), Some(nodes)) =
        (dim, steps, extremes, half_width, nodes)
    else {
        return Err(Error::PolicyMismatch("policy header is incomplete".into()));
    };
    let grid = SpatialGrid::new(half_width, nodes)?;
    if grid.dim() != dim {
        return Err(Error::PolicyMismatch(format!(
            "header dim={dim} disagrees with a {}-dimensional grid",
            grid.dim()
        )));
    }
    let mut indices = vec![vec![u16::MAX; grid.len()]; steps];
    let mut rows = csv::Reader::from_reader(reader);
    for row in rows.deserialize() {
        let (j, start, end, index): (usize, usize, usize, u16) = row?;
        if j >= steps || start >= end || end > grid.len() {
            return Err(Error::PolicyMismatch(format!(
                "run ({j}, {start}..{end}) is outside {steps} steps x {} nodes",
                grid.len()
            )));
        }
        indices[j][start..end].fill(index);
    }
    if indices.iter().flatten().any(|&i| i == u16::MAX) {
        return Err(Error::PolicyMismatch("policy rows do not cover every node".into()));
    }
    Ok(FeedbackPolicy {
        grid,
        indices,
        extremes,
    })
}

pub fn save_policy(policy: &FeedbackPolicy, path: &Path) -> Result<()> {
    write_policy(policy, std::fs::File::create(path)?)
}

pub fn load_policy(path: &Path) -> Result<FeedbackPolicy> {
    read_policy(std::fs::File::open(path)?)
}

/// Serializes `rows` as CSV with a header taken from the field names.
pub fn write_rows<W: Write, T: serde::Serialize>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
