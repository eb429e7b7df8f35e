//! Grouped categorical panel data stored as sparse frequency tables over
//! response patterns.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("line {line}: unknown category label {label:?}")]
    UnknownCategory { line: u64, label: String },
    #[error("line {line}: count {value:?} is not a non-negative integer")]
    BadCount { line: u64, value: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("header declares no occasion columns t1..tT")]
    NoOccasions,
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unknown group {0:?}")]
    UnknownGroup(String),
    #[error("group {0:?} has zero total count")]
    ZeroTotal(String),
    #[error("category mapping covers {found} categories, table has {expected}")]
    MappingNotTotal { expected: usize, found: usize },
    #[error("category mapping is not onto 1..{0}")]
    MappingNotOnto(usize),
    #[error("merged table would have {0} categories; at least 2 required")]
    TooFewCategories(usize),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("pattern {pattern:?} does not fit a table with T = {occasions}, J = {categories}")]
    PatternShape {
        pattern: Vec<u16>,
        occasions: usize,
        categories: usize,
    },
    #[error("table has {0} groups, at least one required")]
    NoGroups(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One observed response sequence, stored as zero-based category indices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pattern(pub Vec<u16>);

impl Pattern {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn categories(&self) -> &[u16] {
        &self.0
    }

    /// True when the same category is observed on every occasion.
    pub fn is_constant(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }

    /// Lexicographic position of the pattern in the full `J^T` lattice.
    pub fn lattice_index(&self, categories: usize) -> usize {
        self.0
            .iter()
            .fold(0usize, |acc, &c| acc * categories + c as usize)
    }

    pub fn from_lattice_index(mut index: usize, categories: usize, occasions: usize) -> Self {
        let mut cells = vec![0u16; occasions];
        for slot in cells.iter_mut().rev() {
            *slot = (index % categories) as u16;
            index /= categories;
        }
        Pattern(cells)
    }

    /// One-based rendering, e.g. `1,1,3`.
    pub fn display_one_based(&self) -> String {
        self.0
            .iter()
            .map(|c| (c + 1).to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Number of cells `J^T` in the full response-pattern lattice.
pub fn lattice_size(categories: usize, occasions: usize) -> usize {
    categories.pow(occasions as u32)
}

/// Iterates every pattern of the `J^T` lattice in lexicographic order.
pub fn lattice(categories: usize, occasions: usize) -> impl Iterator<Item = Pattern> {
    (0..lattice_size(categories, occasions))
        .map(move |i| Pattern::from_lattice_index(i, categories, occasions))
}

/// Sidecar declaring the ordered category and group labels of a CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelSchema {
    pub groups: Vec<String>,
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub category_names: Vec<String>,
}

impl PanelSchema {
    pub fn from_json(text: &str) -> Result<Self, PanelError> {
        let schema: PanelSchema = serde_json::from_str(text)?;
        schema.check()?;
        Ok(schema)
    }

    fn check(&self) -> Result<(), PanelError> {
        if self.groups.is_empty() {
            return Err(PanelError::Schema("no groups declared".into()));
        }
        if self.categories.len() < 2 {
            return Err(PanelError::Schema(
                "at least two categories must be declared".into(),
            ));
        }
        if !self.category_names.is_empty() && self.category_names.len() != self.categories.len()
        {
            return Err(PanelError::Schema(
                "category_names must match categories in length".into(),
            ));
        }
        for (kind, labels) in [("group", &self.groups), ("category", &self.categories)] {
            let mut seen = std::collections::HashSet::new();
            for label in labels {
                if !seen.insert(label) {
                    return Err(PanelError::Schema(format!("duplicate {kind} {label:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Frequency table of response patterns over `T` occasions, one sparse
/// table per group. Absent cells are zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PanelTable {
    occasions: usize,
    categories: Vec<String>,
    category_names: Vec<String>,
    groups: Vec<String>,
    cells: Vec<BTreeMap<Pattern, u64>>,
}

impl PanelTable {
    pub fn new(
        occasions: usize,
        categories: Vec<String>,
        groups: Vec<String>,
    ) -> Result<Self, PanelError> {
        if occasions == 0 {
            return Err(PanelError::NoOccasions);
        }
        if categories.len() < 2 {
            return Err(PanelError::TooFewCategories(categories.len()));
        }
        if groups.is_empty() {
            return Err(PanelError::NoGroups(0));
        }
        let cells = vec![BTreeMap::new(); groups.len()];
        Ok(PanelTable {
            occasions,
            categories,
            category_names: Vec::new(),
            groups,
            cells,
        })
    }

    pub fn with_category_names(mut self, names: Vec<String>) -> Self {
        if names.len() == self.categories.len() {
            self.category_names = names;
        }
        self
    }

    /// Adds `count` observations of `pattern` to group `group`; duplicates
    /// accumulate.
    pub fn add(&mut self, group: usize, pattern: Pattern, count: u64) -> Result<(), PanelError> {
        if group >= self.groups.len() {
            return Err(PanelError::UnknownGroup(format!("#{group}")));
        }
        if pattern.len() != self.occasions
            || pattern.0.iter().any(|&c| c as usize >= self.categories.len())
        {
            return Err(PanelError::PatternShape {
                pattern: pattern.0,
                occasions: self.occasions,
                categories: self.categories.len(),
            });
        }
        if count > 0 {
            *self.cells[group].entry(pattern).or_insert(0) += count;
        }
        Ok(())
    }

    pub fn occasions(&self) -> usize {
        self.occasions
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn category_labels(&self) -> &[String] {
        &self.categories
    }

    pub fn category_names(&self) -> &[String] {
        &self.category_names
    }

    pub fn group_labels(&self) -> &[String] {
        &self.groups
    }

    pub fn group_index(&self, label: &str) -> Result<usize, PanelError> {
        self.groups
            .iter()
            .position(|g| g == label)
            .ok_or_else(|| PanelError::UnknownGroup(label.to_string()))
    }

    /// Non-zero cells of one group in lexicographic pattern order.
    pub fn cells(&self, group: usize) -> impl Iterator<Item = (&Pattern, u64)> + '_ {
        self.cells[group].iter().map(|(p, &n)| (p, n))
    }

    pub fn count(&self, group: usize, pattern: &Pattern) -> u64 {
        self.cells[group].get(pattern).copied().unwrap_or(0)
    }

    pub fn group_total(&self, group: usize) -> u64 {
        self.cells[group].values().sum()
    }

    pub fn group_totals(&self) -> Vec<u64> {
        (0..self.n_groups()).map(|g| self.group_total(g)).collect()
    }

    pub fn grand_total(&self) -> u64 {
        self.group_totals().iter().sum()
    }

    /// Σ frequencies over all patterns of the labelled group.
    pub fn total_count(&self, group: &str) -> Result<u64, PanelError> {
        Ok(self.group_total(self.group_index(group)?))
    }

    /// Materializes the full `J^T` lattice of counts for one group.
    pub fn dense_counts(&self, group: usize) -> Vec<u64> {
        let j = self.n_categories();
        let mut dense = vec![0u64; lattice_size(j, self.occasions)];
        for (pattern, n) in self.cells(group) {
            dense[pattern.lattice_index(j)] = n;
        }
        dense
    }

    /// Relabels categories through `mapping` (zero-based old index → new
    /// index) and sums the patterns that collide.
    pub fn merge_categories(
        &self,
        mapping: &[usize],
        new_labels: Vec<String>,
    ) -> Result<PanelTable, PanelError> {
        if mapping.len() != self.n_categories() {
            return Err(PanelError::MappingNotTotal {
                expected: self.n_categories(),
                found: mapping.len(),
            });
        }
        let merged_j = new_labels.len();
        if merged_j < 2 {
            return Err(PanelError::TooFewCategories(merged_j));
        }
        let mut hit = vec![false; merged_j];
        for &target in mapping {
            if target >= merged_j {
                return Err(PanelError::MappingNotOnto(merged_j));
            }
            hit[target] = true;
        }
        if hit.iter().any(|h| !h) {
            return Err(PanelError::MappingNotOnto(merged_j));
        }
        let mut merged = PanelTable::new(self.occasions, new_labels, self.groups.clone())?;
        for (g, cells) in self.cells.iter().enumerate() {
            for (pattern, &n) in cells {
                let mapped = Pattern(pattern.0.iter().map(|&c| mapping[c as usize] as u16).collect());
                merged.add(g, mapped, n)?;
            }
        }
        Ok(merged)
    }

    /// Share of the group's observations whose rating never changes.
    pub fn manifest_stability(&self, group: &str) -> Result<f64, PanelError> {
        let g = self.group_index(group)?;
        let total = self.group_total(g);
        if total == 0 {
            return Err(PanelError::ZeroTotal(group.to_string()));
        }
        let constant: u64 = self
            .cells(g)
            .filter(|(p, _)| p.is_constant())
            .map(|(_, n)| n)
            .sum();
        Ok(constant as f64 / total as f64)
    }

    /// Restricts the table to the listed groups, in the given order.
    pub fn select_groups(&self, labels: &[&str]) -> Result<PanelTable, PanelError> {
        let mut out = PanelTable::new(
            self.occasions,
            self.categories.clone(),
            labels.iter().map(|s| s.to_string()).collect(),
        )?
        .with_category_names(self.category_names.clone());
        for (new_g, label) in labels.iter().enumerate() {
            let g = self.group_index(label)?;
            out.cells[new_g] = self.cells[g].clone();
        }
        Ok(out)
    }

    pub fn schema(&self) -> PanelSchema {
        PanelSchema {
            groups: self.groups.clone(),
            categories: self.categories.clone(),
            category_names: self.category_names.clone(),
        }
    }

    /// Renders the table in the `group,t1,...,tT,count` CSV layout.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group");
        for t in 1..=self.occasions {
            let _ = write!(out, ",t{t}");
        }
        out.push_str(",count\n");
        for (g, label) in self.groups.iter().enumerate() {
            for (pattern, n) in self.cells(g) {
                out.push_str(label);
                for &c in pattern.categories() {
                    out.push(',');
                    out.push_str(&self.categories[c as usize]);
                }
                let _ = writeln!(out, ",{n}");
            }
        }
        out
    }

    /// Stable digest of the cell contents, used to tie fits to their data.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.to_csv().as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Parses `group,t1,...,tT,count` CSV text against a schema.
pub fn parse_panel_csv(text: &str, schema: &PanelSchema) -> Result<PanelTable, PanelError> {
    schema.check()?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let header = reader.headers()?.clone();
    let fields: Vec<&str> = header.iter().collect();
    if fields.len() < 2 || fields[0] != "group" || fields[fields.len() - 1] != "count" {
        return Err(PanelError::Header(format!(
            "expected `group,t1,...,tT,count`, found `{}`",
            fields.join(",")
        )));
    }
    let occasions = fields.len() - 2;
    if occasions == 0 {
        return Err(PanelError::NoOccasions);
    }
    for (t, name) in fields[1..fields.len() - 1].iter().enumerate() {
        if *name != format!("t{}", t + 1) {
            return Err(PanelError::Header(format!(
                "column {} should be t{}, found {name:?}",
                t + 2,
                t + 1
            )));
        }
    }

    let mut table = PanelTable::new(occasions, schema.categories.clone(), schema.groups.clone())?
        .with_category_names(schema.category_names.clone());
    let width = occasions + 2;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != width {
            return Err(PanelError::RaggedRow {
                line,
                expected: width,
                found: record.len(),
            });
        }
        let group = table.group_index(&record[0])?;
        let mut pattern = Vec::with_capacity(occasions);
        for label in record.iter().skip(1).take(occasions) {
            let c = schema
                .categories
                .iter()
                .position(|known| known == label)
                .ok_or_else(|| PanelError::UnknownCategory {
                    line,
                    label: label.to_string(),
                })?;
            pattern.push(c as u16);
        }
        let raw = &record[width - 1];
        let count: u64 = raw.parse().map_err(|_| PanelError::BadCount {
            line,
            value: raw.to_string(),
        })?;
        table.add(group, Pattern(pattern), count)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> PanelSchema {
        PanelSchema {
            groups: vec!["doctoral".into(), "post-doctoral".into()],
            categories: vec!["1".into(), "2".into(), "3".into()],
            category_names: vec![],
        }
    }

    #[test]
    fn parses_a_row_into_a_cell() {
        let t = parse_panel_csv("group,t1,t2,t3,count\ndoctoral,1,1,1,143\n", &schema()).unwrap();
        assert_eq!(t.count(0, &Pattern(vec![0, 0, 0])), 143);
        assert_eq!(t.occasions(), 3);
    }

    #[test]
    fn header_only_parses_to_empty_table() {
        let t = parse_panel_csv("group,t1,t2,t3,count\n", &schema()).unwrap();
        assert_eq!(t.grand_total(), 0);
        assert!(t.manifest_stability("doctoral").is_err());
    }

    #[test]
    fn comments_and_duplicates() {
        let text = "# exported\ngroup,t1,t2,count\ndoctoral,1,2,3\n# mid\ndoctoral,1,2,4\n";
        let t = parse_panel_csv(text, &schema()).unwrap();
        assert_eq!(t.count(0, &Pattern(vec![0, 1])), 7);
    }

    #[test]
    fn rejects_bad_rows() {
        let s = schema();
        let h = "group,t1,t2,t3,count\n";
        assert!(matches!(
            parse_panel_csv(&format!("{h}doctoral,1,4,1,2\n"), &s),
            Err(PanelError::UnknownCategory { .. })
        ));
        assert!(matches!(
            parse_panel_csv(&format!("{h}doctoral,1,1,1,-2\n"), &s),
            Err(PanelError::BadCount { .. })
        ));
        assert!(matches!(
            parse_panel_csv(&format!("{h}doctoral,1,1,1,2.5\n"), &s),
            Err(PanelError::BadCount { .. })
        ));
        assert!(matches!(
            parse_panel_csv(&format!("{h}doctoral,1,1,2\n"), &s),
            Err(PanelError::RaggedRow { .. })
        ));
        assert!(matches!(
            parse_panel_csv("group,count\ndoctoral,3\n", &s),
            Err(PanelError::NoOccasions)
        ));
        assert!(matches!(
            parse_panel_csv(&format!("{h}nurses,1,1,1,2\n"), &s),
            Err(PanelError::UnknownGroup(_))
        ));
    }

    #[test]
    fn unknown_group_total() {
        let t = PanelTable::new(3, schema().categories, schema().groups).unwrap();
        assert!(matches!(t.total_count("x"), Err(PanelError::UnknownGroup(_))));
    }

    #[test]
    fn lattice_indexing_is_lexicographic() {
        let all: Vec<_> = lattice(3, 3).collect();
        assert_eq!(all.len(), 27);
        assert_eq!(all[0], Pattern(vec![0, 0, 0]));
        assert_eq!(all[5], Pattern(vec![0, 1, 2]));
        for (i, p) in all.iter().enumerate() {
            assert_eq!(p.lattice_index(3), i);
        }
    }

    #[test]
    fn four_to_three_category_merge() {
        let cats: Vec<String> = (1..=4).map(|c| c.to_string()).collect();
        let mut t = PanelTable::new(2, cats, vec!["g".into()]).unwrap();
        t.add(0, Pattern(vec![0, 1]), 5).unwrap();
        t.add(0, Pattern(vec![1, 0]), 2).unwrap();
        t.add(0, Pattern(vec![3, 2]), 4).unwrap();
        let merged = t
            .merge_categories(&[0, 0, 1, 2], vec!["1".into(), "2".into(), "3".into()])
            .unwrap();
        assert_eq!(merged.n_categories(), 3);
        assert_eq!(merged.count(0, &Pattern(vec![0, 0])), 7);
        assert_eq!(merged.count(0, &Pattern(vec![2, 1])), 4);
        assert_eq!(merged.group_total(0), t.group_total(0));
    }

    #[test]
    fn merge_errors() {
        let t = PanelTable::new(2, schema().categories, vec!["g".into()]).unwrap();
        assert!(matches!(
            t.merge_categories(&[0, 1], vec!["a".into(), "b".into()]),
            Err(PanelError::MappingNotTotal { .. })
        ));
        assert!(matches!(
            t.merge_categories(&[0, 0, 0], vec!["a".into()]),
            Err(PanelError::TooFewCategories(1))
        ));
        assert!(matches!(
            t.merge_categories(&[0, 0, 0], vec!["a".into(), "b".into()]),
            Err(PanelError::MappingNotOnto(2))
        ));
    }

    #[test]
    fn all_constant_table_is_fully_stable() {
        let mut t = PanelTable::new(3, schema().categories, vec!["g".into()]).unwrap();
        t.add(0, Pattern(vec![0, 0, 0]), 9).unwrap();
        assert_eq!(t.manifest_stability("g").unwrap(), 1.0);
    }
}
