//! Line-oriented text formats.
//!
//! Blank lines and lines starting with `#` are ignored by every reader.
//!
//! ```text
//! tree <n> <root>                      kernel:  mode float|rational
//! edge <u> <v>                                  row <u> <v1>:<p1> <v2>:<p2> ...
//! label <v> <text>                              prov <u> known|unknown|recovered
//! origin <v> original|added
//! layer inner|outer <v...>             batch:   batch <n> <seed> <t_cap>
//!                                               in|out <t> <v> <count>
//! distribution (TSV):                           overflow <count>
//! layer  t  vertex  prob
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::estimation::SampleBatch;
use crate::forward::{HittingDistribution, Layer};
use crate::kernel::{Provenance, TransitionKernel};
use crate::scalar::{ArithmeticMode, Scalar};
use crate::tomography::RecoveryReport;
use crate::tree::{AugmentedTree, Origin, RootedTree, VertexId};

/// Numbered, non-empty, non-comment lines split on whitespace.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        (!line.is_empty() && !line.starts_with('#')).then(|| (i + 1, line.split_whitespace().collect()))
    })
}

fn num<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| Error::format(line, format!("bad {what} `{field}`")))
}

fn vertex(line: usize, field: &str, n: usize) -> Result<VertexId> {
    let v: usize = num(line, field, "vertex")?;
    if v >= n {
        return Err(Error::format(line, format!("vertex {v} out of range (n = {n})")));
    }
    Ok(VertexId(v))
}

fn arity(line: usize, fields: &[&str], expected: usize) -> Result<()> {
    if fields.len() != expected {
        return Err(Error::format(line, format!("`{}` takes {} fields", fields[0], expected - 1)));
    }
    Ok(())
}

pub fn write_tree(tree: &RootedTree) -> String {
    let mut out = format!("tree {} {}\n", tree.vertex_count(), tree.root());
    for (u, v) in tree.edges() {
        writeln!(out, "edge {u} {v}").unwrap();
    }
    for v in tree.vertices() {
        if let Some(label) = tree.label(v) {
            writeln!(out, "label {v} {label}").unwrap();
        }
    }
    out
}

struct TreeRecords {
    n: usize,
    root: usize,
    edges: Vec<(usize, usize)>,
    labels: Vec<Option<String>>,
}

impl TreeRecords {
    fn build(self) -> Result<RootedTree> {
        let tree =
            RootedTree::from_edges(self.n, &self.edges, self.root).map_err(|e| Error::format(0, e.to_string()))?;
        if self.labels.iter().all(Option::is_none) {
            return Ok(tree);
        }
        let labels = self.labels.into_iter().enumerate().map(|(v, l)| l.unwrap_or_else(|| v.to_string())).collect();
        Ok(tree.with_labels(labels))
    }
}

/// Splits tree records from the rest; `extra` sees every other record.
fn read_tree_records<'a>(
    text: &'a str,
    mut extra: impl FnMut(usize, &[&'a str], usize) -> Result<()>,
) -> Result<TreeRecords> {
    let mut header: Option<TreeRecords> = None;
    for (line, fields) in records(text) {
        match (fields[0], header.as_mut()) {
            ("tree", None) => {
                arity(line, &fields, 3)?;
                let n: usize = num(line, fields[1], "vertex count")?;
                if n == 0 {
                    return Err(Error::format(line, "a tree needs at least one vertex"));
                }
                let root = vertex(line, fields[2], n)?.0;
                header = Some(TreeRecords { n, root, edges: Vec::new(), labels: vec![None; n] });
            }
            ("tree", Some(_)) => return Err(Error::format(line, "repeated `tree` header")),
            (_, None) => return Err(Error::format(line, "expected `tree <n> <root>` header")),
            ("edge", Some(h)) => {
                arity(line, &fields, 3)?;
                h.edges.push((vertex(line, fields[1], h.n)?.0, vertex(line, fields[2], h.n)?.0));
            }
            ("label", Some(h)) => {
                arity(line, &fields, 3)?;
                h.labels[vertex(line, fields[1], h.n)?.0] = Some(fields[2].to_string());
            }
            (_, Some(h)) => extra(line, &fields, h.n)?,
        }
    }
    header.ok_or_else(|| Error::format(0, "missing `tree` header"))
}

pub fn parse_tree(text: &str) -> Result<RootedTree> {
    read_tree_records(text, |line, fields, _| Err(Error::format(line, format!("unknown record `{}`", fields[0]))))?
        .build()
}

pub fn write_augmented(aug: &AugmentedTree) -> String {
    let mut out = write_tree(aug.full());
    for v in aug.full().vertices() {
        let origin = match aug.origin(v) {
            Origin::Original => "original",
            Origin::Added => "added",
        };
        writeln!(out, "origin {v} {origin}").unwrap();
    }
    for (name, layer) in [("inner", aug.inner_layer()), ("outer", aug.outer_layer())] {
        let ids: Vec<String> = layer.iter().map(VertexId::to_string).collect();
        writeln!(out, "layer {name} {}", ids.join(" ")).unwrap();
    }
    out
}

/// Reads an augmented tree. The origin map is required; layer lines are
/// optional but must agree with the recomputed layers when present.
pub fn parse_augmented(text: &str) -> Result<AugmentedTree> {
    let mut origins: BTreeMap<usize, Origin> = BTreeMap::new();
    let mut layers: Vec<(usize, &str, Vec<usize>)> = Vec::new();
    let records = read_tree_records(text, |line, fields, n| match fields[0] {
        "origin" => {
            arity(line, fields, 3)?;
            let v = vertex(line, fields[1], n)?.0;
            let origin = match fields[2] {
                "original" => Origin::Original,
                "added" => Origin::Added,
                other => return Err(Error::format(line, format!("bad origin `{other}`"))),
            };
            origins.insert(v, origin);
            Ok(())
        }
        "layer" => {
            if fields.len() < 2 || !matches!(fields[1], "inner" | "outer") {
                return Err(Error::format(line, "expected `layer inner|outer <v...>`"));
            }
            let ids = fields[2..].iter().map(|f| vertex(line, f, n).map(|v| v.0)).collect::<Result<_>>()?;
            layers.push((line, fields[1], ids));
            Ok(())
        }
        other => Err(Error::format(line, format!("unknown record `{other}`"))),
    })?;
    let n = records.n;
    let full = records.build()?;
    if origins.len() != n {
        let missing = (0..n).find(|v| !origins.contains_key(v)).unwrap_or(0);
        return Err(Error::format(0, format!("no origin given for vertex {missing}")));
    }
    let origin = origins.into_values().collect();
    let aug = AugmentedTree::from_full(full, origin).map_err(|e| Error::format(0, e.to_string()))?;
    for (line, name, ids) in layers {
        let expected = if name == "inner" { aug.inner_layer() } else { aug.outer_layer() };
        let given: BTreeSet<usize> = ids.into_iter().collect();
        if given != expected.iter().map(|v| v.0).collect() {
            return Err(Error::format(line, format!("{name} layer does not match the tree")));
        }
    }
    Ok(aug)
}

pub fn write_kernel<S: Scalar>(kernel: &TransitionKernel<S>) -> String {
    let mut out = format!("mode {}\n", S::MODE.as_str());
    for v in (0..kernel.vertex_count()).map(VertexId) {
        if let Some(row) = kernel.row(v) {
            write!(out, "row {v}").unwrap();
            for (w, p) in row {
                write!(out, " {w}:{}", p.to_text()).unwrap();
            }
            out.push('\n');
        }
    }
    for v in (0..kernel.vertex_count()).map(VertexId) {
        writeln!(out, "prov {v} {}", kernel.provenance(v).as_str()).unwrap();
    }
    out
}

/// The `mode` header of a kernel file.
pub fn kernel_mode(text: &str) -> Result<ArithmeticMode> {
    for (line, fields) in records(text) {
        if fields[0] == "mode" {
            arity(line, &fields, 2)?;
            return ArithmeticMode::parse(fields[1])
                .ok_or_else(|| Error::format(line, format!("unknown mode `{}`", fields[1])));
        }
    }
    Err(Error::format(0, "missing `mode` header"))
}

/// Reads a kernel over `n` vertices. Values in either notation are accepted
/// in either mode; rows without a `prov` line are `Unknown`.
pub fn parse_kernel<S: Scalar>(text: &str, n: usize) -> Result<TransitionKernel<S>> {
    kernel_mode(text)?;
    let mut kernel = TransitionKernel::blank(n);
    let mut provenance = BTreeMap::new();
    for (line, fields) in records(text) {
        match fields[0] {
            "mode" => {}
            "row" => {
                let u = vertex(line, fields.get(1).copied().unwrap_or(""), n)?;
                if kernel.row(u).is_some() {
                    return Err(Error::format(line, format!("repeated row for vertex {u}")));
                }
                let mut row = Vec::with_capacity(fields.len() - 2);
                for entry in &fields[2..] {
                    let (w, p) = entry
                        .split_once(':')
                        .ok_or_else(|| Error::format(line, format!("expected `<v>:<p>`, got `{entry}`")))?;
                    let p = S::parse_text(p).ok_or_else(|| Error::format(line, format!("bad probability `{p}`")))?;
                    row.push((vertex(line, w, n)?, p));
                }
                kernel.set_row(u, row, Provenance::Unknown);
            }
            "prov" => {
                arity(line, &fields, 3)?;
                let v = vertex(line, fields[1], n)?;
                let p = Provenance::parse(fields[2])
                    .ok_or_else(|| Error::format(line, format!("bad provenance `{}`", fields[2])))?;
                provenance.insert(v, p);
            }
            other => return Err(Error::format(line, format!("unknown record `{other}`"))),
        }
    }
    for (v, p) in provenance {
        kernel.set_provenance(v, p);
    }
    Ok(kernel)
}

pub const DISTRIBUTION_HEADER: &str = "layer\tt\tvertex\tprob";

/// One row per cell `t = 0..=t_max`, zero cells included.
pub fn write_distribution<S: Scalar>(dist: &HittingDistribution<S>) -> String {
    let mut out = format!("{DISTRIBUTION_HEADER}\n");
    let layer = dist.layer().as_str();
    for (t, v, p) in dist.cells() {
        writeln!(out, "{layer}\t{t}\t{v}\t{}", p.to_text()).unwrap();
    }
    out
}

/// Reads a distribution of the given layer of `aug`. The time range is the
/// largest `t` present; absent cells are zero.
pub fn parse_distribution<S: Scalar>(text: &str, aug: &AugmentedTree, layer: Layer) -> Result<HittingDistribution<S>> {
    let vertices = match layer {
        Layer::Inner => aug.inner_layer(),
        Layer::Outer => aug.outer_layer(),
    };
    let mut cells = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, header)) if header.split_whitespace().eq(DISTRIBUTION_HEADER.split('\t')) => {}
        Some((i, _)) => {
            return Err(Error::format(i + 1, format!("expected header `{}`", DISTRIBUTION_HEADER.replace('\t', " "))))
        }
        None => return Err(Error::format(0, "empty distribution file")),
    }
    for (i, text_line) in lines {
        let line = i + 1;
        let fields: Vec<&str> = text_line.split_whitespace().collect();
        arity(line, &fields, 4)?;
        if Layer::parse(fields[0]) != Some(layer) {
            return Err(Error::format(line, format!("expected layer `{}`, got `{}`", layer.as_str(), fields[0])));
        }
        let t: usize = num(line, fields[1], "time")?;
        let v = vertex(line, fields[2], aug.vertex_count())?;
        if !vertices.contains(&v) {
            return Err(Error::format(line, format!("vertex {v} is not on the {} layer", layer.as_str())));
        }
        let p =
            S::parse_text(fields[3]).ok_or_else(|| Error::format(line, format!("bad probability `{}`", fields[3])))?;
        cells.push((t, v, p));
    }
    let t_max = cells.iter().map(|(t, _, _)| *t).max().unwrap_or(0);
    let mut dist = HittingDistribution::zeros(layer, aug.root(), vertices.to_vec(), t_max);
    for (t, v, p) in cells {
        dist.set(t, v, p);
    }
    Ok(dist)
}

pub fn write_batch(batch: &SampleBatch) -> String {
    let mut out = format!("batch {} {} {}\n", batch.n, batch.seed, batch.t_cap);
    for (tag, counts) in [("in", &batch.counts_in), ("out", &batch.counts_out)] {
        for ((t, v), c) in counts {
            writeln!(out, "{tag} {t} {v} {c}").unwrap();
        }
    }
    writeln!(out, "overflow {}", batch.overflow).unwrap();
    out
}

pub fn parse_batch(text: &str) -> Result<SampleBatch> {
    let mut batch: Option<SampleBatch> = None;
    for (line, fields) in records(text) {
        match (fields[0], batch.as_mut()) {
            ("batch", None) => {
                arity(line, &fields, 4)?;
                batch = Some(SampleBatch {
                    n: num(line, fields[1], "sample size")?,
                    seed: num(line, fields[2], "seed")?,
                    t_cap: num(line, fields[3], "time cap")?,
                    counts_in: BTreeMap::new(),
                    counts_out: BTreeMap::new(),
                    overflow: 0,
                });
            }
            (_, None) => return Err(Error::format(line, "expected `batch <n> <seed> <t_cap>` header")),
            (tag @ ("in" | "out"), Some(b)) => {
                arity(line, &fields, 4)?;
                let t: usize = num(line, fields[1], "time")?;
                let v = VertexId(num(line, fields[2], "vertex")?);
                let c: u64 = num(line, fields[3], "count")?;
                let counts = if tag == "in" { &mut b.counts_in } else { &mut b.counts_out };
                *counts.entry((t, v)).or_default() += c;
            }
            ("overflow", Some(b)) => {
                arity(line, &fields, 2)?;
                b.overflow = num(line, fields[1], "count")?;
            }
            (other, Some(_)) => return Err(Error::format(line, format!("unknown record `{other}`"))),
        }
    }
    let batch = batch.ok_or_else(|| Error::format(0, "missing `batch` header"))?;
    if batch.counts_out.values().sum::<u64>() + batch.overflow != batch.n {
        return Err(Error::format(0, "outer counts and overflow do not add up to n"));
    }
    Ok(batch)
}

/// The recovered kernel followed by diagnostics:
/// `flag <code> <v>`, `residual <v> <x>`, `shell_time_read <k> <t>`,
/// `max_time_read <t>` and, when known, `max_error <x>`.
pub fn write_report<S: Scalar>(report: &RecoveryReport<S>) -> String {
    let mut out = write_kernel(&report.kernel);
    for flag in &report.flags {
        writeln!(out, "flag {} {}", flag.code.as_str(), flag.vertex).unwrap();
    }
    for (v, r) in &report.residuals {
        writeln!(out, "residual {v} {r:.16e}").unwrap();
    }
    for (k, t) in &report.shell_time_read {
        writeln!(out, "shell_time_read {k} {t}").unwrap();
    }
    writeln!(out, "max_time_read {}", report.max_time_read).unwrap();
    if let Some(err) = report.max_error {
        writeln!(out, "max_error {err:.16e}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::collect_batch;
    use crate::forward::first_hitting_joint;
    use crate::kernel::{random_kernel, KernelScope};
    use crate::scalar::Rational;
    use crate::tomography::recover_all;
    use crate::tree::{segment, spherical_augmentation, star};

    #[test]
    fn tree_roundtrip_keeps_labels() {
        let tree = segment(2, 1).unwrap();
        let text = write_tree(&tree);
        assert!(text.starts_with("tree 4 0\n"));
        assert_eq!(parse_tree(&text).unwrap(), tree);
    }

    #[test]
    fn tree_errors_carry_line_numbers() {
        assert!(matches!(parse_tree("edge 0 1"), Err(Error::Format { line: 1, .. })));
        assert!(matches!(parse_tree("tree 2 0\n\nedge 0 5"), Err(Error::Format { line: 3, .. })));
        assert!(matches!(parse_tree("tree 3 0\nedge 0 1\nedge 1 0"), Err(Error::Format { .. })));
        assert!(matches!(parse_tree("tree 2 0\nbogus"), Err(Error::Format { line: 2, .. })));
    }

    #[test]
    fn augmented_roundtrip() {
        let aug = spherical_augmentation(&star(2, 3).unwrap(), 2).unwrap();
        let text = write_augmented(&aug);
        assert_eq!(parse_augmented(&text).unwrap(), aug);
        let wrong = text.replace("layer inner", "layer outer");
        assert!(parse_augmented(&wrong).is_err());
        let unlisted: String = text.lines().filter(|l| !l.starts_with("origin 0")).map(|l| format!("{l}\n")).collect();
        assert!(parse_augmented(&unlisted).is_err());
    }

    #[test]
    fn kernel_roundtrip_both_modes() {
        let aug = spherical_augmentation(&star(1, 3).unwrap(), 2).unwrap();
        let exact = random_kernel::<Rational>(&aug, 9, 0.05, KernelScope::LambdaOnly).unwrap();
        let text = write_kernel(&exact);
        assert!(text.starts_with("mode rational\n"));
        assert_eq!(parse_kernel::<Rational>(&text, aug.vertex_count()).unwrap(), exact);
        assert_eq!(kernel_mode(&text).unwrap(), ArithmeticMode::ExactRational);

        let float = exact.convert::<f64>();
        let text = write_kernel(&float);
        assert_eq!(parse_kernel::<f64>(&text, aug.vertex_count()).unwrap(), float);
        let widened = parse_kernel::<Rational>(&text, aug.vertex_count()).unwrap();
        assert!(widened.max_abs_error(&exact, &exact.vertices_with(Provenance::Unknown)) < 1e-16);
    }

    #[test]
    fn kernel_file_errors() {
        assert!(parse_kernel::<f64>("row 0 1:1", 2).is_err());
        assert!(matches!(parse_kernel::<f64>("mode float\nrow 0 1:x", 2), Err(Error::Format { line: 2, .. })));
        assert!(parse_kernel::<f64>("mode float\nrow 0 1:1\nrow 0 1:1", 2).is_err());
        assert!(parse_kernel::<f64>("mode float\nrow 0 9:1", 2).is_err());
        assert!(parse_kernel::<f64>("mode decimal", 2).is_err());
        let k = parse_kernel::<f64>("mode float\nrow 0 1:1/2 2:0.5\n", 3).unwrap();
        assert_eq!(k.provenance(VertexId(0)), Provenance::Unknown);
        assert_eq!(k.prob(VertexId(0), VertexId(1)), Some(&0.5));
    }

    #[test]
    fn distribution_roundtrip_and_truncation() {
        let aug = spherical_augmentation(&star(1, 2).unwrap(), 2).unwrap();
        let k = random_kernel::<Rational>(&aug, 1, 0.05, KernelScope::LambdaOnly).unwrap();
        let p_out = first_hitting_joint(&aug, &k, Layer::Outer, 7).unwrap();
        let text = write_distribution(&p_out);
        assert_eq!(text.lines().count(), 1 + 8 * 2);
        assert_eq!(parse_distribution::<Rational>(&text, &aug, Layer::Outer).unwrap(), p_out);
        assert!(parse_distribution::<Rational>(&text, &aug, Layer::Inner).is_err());

        let short: String = text.lines().filter(|l| !l.starts_with("outer\t7\t")).map(|l| format!("{l}\n")).collect();
        assert_eq!(parse_distribution::<Rational>(&short, &aug, Layer::Outer).unwrap().t_max(), 6);
        assert!(parse_distribution::<f64>("t\tprob\n", &aug, Layer::Outer).is_err());
    }

    #[test]
    fn float_text_is_lossless() {
        let aug = spherical_augmentation(&segment(1, 1).unwrap(), 2).unwrap();
        let k = random_kernel::<f64>(&aug, 3, 0.05, KernelScope::AllVertices).unwrap();
        let p_in = first_hitting_joint(&aug, &k, Layer::Inner, 9).unwrap();
        let back: HittingDistribution<f64> =
            parse_distribution(&write_distribution(&p_in), &aug, Layer::Inner).unwrap();
        assert_eq!(back, p_in);
    }

    #[test]
    fn batch_roundtrip() {
        let aug = spherical_augmentation(&star(1, 2).unwrap(), 2).unwrap();
        let k = random_kernel::<f64>(&aug, 1, 0.05, KernelScope::LambdaOnly).unwrap();
        let batch = collect_batch(&aug, &k, 500, 4, 2).unwrap();
        let text = write_batch(&batch);
        assert_eq!(parse_batch(&text).unwrap(), batch);
        assert!(parse_batch(&text.replace("batch 500", "batch 501")).is_err());
        assert!(parse_batch("in 1 2 3").is_err());
    }

    #[test]
    fn report_lists_diagnostics() {
        let aug = spherical_augmentation(&star(1, 2).unwrap(), 2).unwrap();
        let k = random_kernel::<Rational>(&aug, 1, 0.05, KernelScope::LambdaOnly).unwrap();
        let p_in = first_hitting_joint(&aug, &k, Layer::Inner, 7).unwrap();
        let p_out = first_hitting_joint(&aug, &k, Layer::Outer, 7).unwrap();
        let mut report = recover_all(&aug, &k.known_part(), &p_in, &p_out).unwrap();
        report.compare_with(&k);
        let text = write_report(&report);
        assert!(text.contains("max_time_read 7\n"));
        assert!(text.contains("max_error 0.0000000000000000e0\n"));
        assert!(text.contains("prov 0 recovered\n"));
        let kernel_part: String = text
            .lines()
            .filter(|l| l.starts_with("mode") || l.starts_with("row") || l.starts_with("prov"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(parse_kernel::<Rational>(&kernel_part, aug.vertex_count()).unwrap(), report.kernel);
    }
}
