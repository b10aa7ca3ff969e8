//! TSV loading, JSON snapshots, and label files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EntityId, KnowledgeGraph, NoiseLabelSet, Triple, TypeId, Vocab, UNTYPED};
use crate::error::{Error, Result};

/// What `load_graph` had to repair or skip.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub duplicates: usize,
    /// Entities absent from the type file, assigned [`UNTYPED`].
    pub untyped: Vec<String>,
    /// Type-file rows naming entities that never occur in a triple.
    pub unused_type_rows: usize,
    /// Entities listed more than once in the type file; the first type wins.
    pub conflicting_types: usize,
    pub warnings: Vec<String>,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_err(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

fn split_fields<'a>(path: &Path, line_no: usize, line: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != n {
        return Err(parse_err(
            path,
            line_no,
            format!("expected {n} tab-separated fields, found {}", fields.len()),
        ));
    }
    if let Some(i) = fields.iter().position(|f| f.is_empty()) {
        return Err(parse_err(path, line_no, format!("field {} is empty", i + 1)));
    }
    Ok(fields)
}

/// Reads `head<TAB>relation<TAB>tail` triples and `entity<TAB>type` rows.
///
/// Entities and relations are numbered in order of first appearance in the
/// triple file; types in order of first appearance over entities.
pub fn load_graph(triples_path: &Path, types_path: &Path) -> Result<(KnowledgeGraph, LoadReport)> {
    let text = fs::read_to_string(triples_path).map_err(Error::at(triples_path))?;
    let mut entities = Vocab::new();
    let mut relations = Vocab::new();
    let mut triples = Vec::new();
    for (no, line) in data_lines(&text) {
        let f = split_fields(triples_path, no, line, 3)?;
        let h = entities.intern(f[0]);
        let r = relations.intern(f[1]);
        let t = entities.intern(f[2]);
        triples.push(Triple::new(h, r, t));
    }
    if triples.is_empty() {
        return Err(Error::EmptyGraph(triples_path.to_path_buf()));
    }

    let mut report = LoadReport::default();
    let type_text = fs::read_to_string(types_path).map_err(Error::at(types_path))?;
    let mut type_name: Vec<Option<String>> = vec![None; entities.len()];
    for (no, line) in data_lines(&type_text) {
        let f = split_fields(types_path, no, line, 2)?;
        match entities.get(f[0]) {
            None => report.unused_type_rows += 1,
            Some(e) => match &type_name[e] {
                Some(existing) if existing != f[1] => report.conflicting_types += 1,
                Some(_) => {}
                None => type_name[e] = Some(f[1].to_string()),
            },
        }
    }
    let mut types = Vocab::new();
    let type_of: Vec<TypeId> = type_name
        .iter()
        .enumerate()
        .map(|(e, name)| {
            let name = match name {
                Some(n) => n.as_str(),
                None => {
                    report.untyped.push(entities.name(e).to_string());
                    UNTYPED
                }
            };
            TypeId(types.intern(name))
        })
        .collect();

    let (kg, duplicates) = KnowledgeGraph::from_parts(entities, relations, types, triples, type_of)?;
    report.duplicates = duplicates;
    if !report.untyped.is_empty() {
        report.warnings.push(format!(
            "{} entities have no type and were assigned `{UNTYPED}`",
            report.untyped.len()
        ));
    }
    if duplicates > 0 {
        report.warnings.push(format!("dropped {duplicates} duplicate triples"));
    }
    if report.conflicting_types > 0 {
        report.warnings.push(format!(
            "{} entities have conflicting type rows; kept the first",
            report.conflicting_types
        ));
    }
    if !kg.type_domain_is_smaller() {
        report.warnings.push(format!(
            "type domain ({}) is not smaller than the entity domain ({})",
            kg.num_types(),
            kg.num_entities()
        ));
    }
    Ok((kg, report))
}

pub fn write_triples_tsv(kg: &KnowledgeGraph, path: &Path) -> Result<()> {
    let mut out = String::new();
    for t in kg.triples() {
        let (h, r, tl) = kg.triple_names(t);
        out.push_str(&format!("{h}\t{r}\t{tl}\n"));
    }
    fs::write(path, out).map_err(Error::at(path))?;
    Ok(())
}

/// Writes one `entity<TAB>type` row per entity, in entity order.
pub fn write_types_tsv(kg: &KnowledgeGraph, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (e, name) in kg.entities().names().iter().enumerate() {
        let c = kg.type_of(EntityId(e));
        out.push_str(&format!("{name}\t{}\n", kg.types().name(c.0)));
    }
    fs::write(path, out).map_err(Error::at(path))?;
    Ok(())
}

/// JSON snapshot of a graph (`"format": 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub format: u32,
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub types: Vec<String>,
    pub type_of: Vec<usize>,
    pub triples: Vec<[usize; 3]>,
    pub augmented: bool,
}

impl GraphSnapshot {
    pub fn from_graph(kg: &KnowledgeGraph) -> Self {
        Self {
            format: 1,
            entities: kg.entities().names().to_vec(),
            relations: kg.relations().names().to_vec(),
            types: kg.types().names().to_vec(),
            type_of: kg.type_map().iter().map(|c| c.0).collect(),
            triples: kg
                .triples()
                .iter()
                .map(|t| [t.head.0, t.relation.0, t.tail.0])
                .collect(),
            augmented: kg.is_augmented(),
        }
    }

    pub fn into_graph(self) -> Result<KnowledgeGraph> {
        if self.format != 1 {
            return Err(Error::InvalidArgument(format!(
                "unsupported snapshot format {}",
                self.format
            )));
        }
        let (mut kg, dups) = KnowledgeGraph::from_parts(
            Vocab::from_names(self.entities)?,
            Vocab::from_names(self.relations)?,
            Vocab::from_names(self.types)?,
            self.triples.iter().map(|&[h, r, t]| Triple::new(h, r, t)).collect(),
            self.type_of.into_iter().map(TypeId).collect(),
        )?;
        if dups > 0 {
            return Err(Error::InvalidArgument("snapshot contains duplicate triples".into()));
        }
        if self.augmented {
            if kg.num_relations() % 2 != 0 || kg.num_triples() % 2 != 0 {
                return Err(Error::InvalidArgument("augmented snapshot has odd sizes".into()));
            }
            kg.set_augmented_unchecked(true);
        }
        Ok(kg)
    }
}

pub fn save_snapshot(kg: &KnowledgeGraph, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&GraphSnapshot::from_graph(kg))?;
    fs::write(path, json).map_err(Error::at(path))?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<KnowledgeGraph> {
    let snap: GraphSnapshot = serde_json::from_str(&fs::read_to_string(path).map_err(Error::at(path))?)?;
    snap.into_graph()
}

/// JSON form of a label set: triple index arrays against a graph snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSnapshot {
    pub format: u32,
    pub noisy: Vec<[usize; 3]>,
}

pub fn save_labels_json(labels: &NoiseLabelSet, path: &Path) -> Result<()> {
    let snap = LabelSnapshot {
        format: 1,
        noisy: labels.iter().map(|t| [t.head.0, t.relation.0, t.tail.0]).collect(),
    };
    fs::write(path, serde_json::to_string_pretty(&snap)?).map_err(Error::at(path))?;
    Ok(())
}

pub fn load_labels_json(path: &Path) -> Result<NoiseLabelSet> {
    let snap: LabelSnapshot = serde_json::from_str(&fs::read_to_string(path).map_err(Error::at(path))?)?;
    Ok(NoiseLabelSet::from_triples(
        snap.noisy.iter().map(|&[h, r, t]| Triple::new(h, r, t)),
    ))
}

/// Writes labeled triples as `head<TAB>relation<TAB>tail`, in `order`.
pub fn write_labels_tsv(kg: &KnowledgeGraph, order: &[Triple], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(Error::at(path))?;
    for t in order {
        let (h, r, tl) = kg.triple_names(t);
        writeln!(f, "{h}\t{r}\t{tl}")?;
    }
    Ok(())
}

/// Reads a label TSV against `kg`; every row must name a triple of `kg`.
pub fn read_labels_tsv(kg: &KnowledgeGraph, path: &Path) -> Result<NoiseLabelSet> {
    let text = fs::read_to_string(path).map_err(Error::at(path))?;
    let mut labels = NoiseLabelSet::new();
    for (no, line) in data_lines(&text) {
        let f = split_fields(path, no, line, 3)?;
        let t = kg
            .lookup(f[0], f[1], f[2])
            .filter(|t| kg.contains(t))
            .ok_or_else(|| parse_err(path, no, "labeled triple is not in the graph".into()))?;
        labels.insert(t);
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;

    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn duplicates_are_dropped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "t.tsv", "a\tr\tb\nb\tr\tc\na\tr\tb\n");
        let c = write(dir.path(), "c.tsv", "a\tX\nb\tY\nc\tX\n");
        let (kg, rep) = load_graph(&t, &c).unwrap();
        assert_eq!(kg.num_triples(), 2);
        assert_eq!(rep.duplicates, 1);
        assert_eq!(kg.types().names(), &["X", "Y"]);
    }

    #[test]
    fn missing_type_becomes_untyped() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "t.tsv", "# comment\na\tr\tb\n");
        let c = write(dir.path(), "c.tsv", "a\tX\n");
        let (kg, rep) = load_graph(&t, &c).unwrap();
        assert_eq!(rep.untyped, vec!["b".to_string()]);
        assert_eq!(kg.types().name(kg.type_of(EntityId(1)).0), UNTYPED);
        assert!(!rep.warnings.is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "t.tsv", "a\tr\tb\nbroken line\n");
        let c = write(dir.path(), "c.tsv", "");
        match load_graph(&t, &c) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_triple_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "t.tsv", "# nothing\n");
        let c = write(dir.path(), "c.tsv", "");
        assert!(matches!(load_graph(&t, &c), Err(Error::EmptyGraph(_))));
    }

    #[test]
    fn snapshot_round_trip_keeps_augmentation() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "t.tsv", "a\tr\tb\nb\ts\tc\n");
        let c = write(dir.path(), "c.tsv", "a\tX\nb\tY\nc\tX\n");
        let kg = load_graph(&t, &c).unwrap().0.augment_reverse().unwrap();
        let p = dir.path().join("g.json");
        save_snapshot(&kg, &p).unwrap();
        let back = load_snapshot(&p).unwrap();
        assert_eq!(back, kg);
        assert!(back.is_augmented());
    }
}
