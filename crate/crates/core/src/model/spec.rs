use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("invalid dimensions: {0}")]
    Dims(String),
    #[error("row {0} is outside the model dimensions")]
    RowOutOfRange(RowRef),
    #[error("cannot tie rows of different shape: {0} and {1}")]
    TieShape(RowRef, RowRef),
    #[error("fixed value {value} for {cell} is outside [0, 1]")]
    FixRange { cell: CellRef, value: f64 },
    #[error("conflicting fixed values for column {col} of tied rows containing {row}")]
    FixConflict { row: RowRef, col: usize },
    #[error("fixed cells of row {0} sum to more than 1")]
    FixOverflow(RowRef),
    #[error("row {0} is fully fixed but does not sum to 1")]
    FixNotSimplex(RowRef),
    #[error("manifest variant requires as many classes as categories ({classes} vs {categories})")]
    ManifestShape { classes: usize, categories: usize },
}

/// Sizes of the model: groups `H`, categories `J`, occasions `T`, latent
/// classes `A`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub groups: usize,
    pub categories: usize,
    pub occasions: usize,
    pub classes: usize,
}

impl Dims {
    pub fn new(
        groups: usize,
        categories: usize,
        occasions: usize,
        classes: usize,
    ) -> Result<Self, SpecError> {
        let dims = Dims {
            groups,
            categories,
            occasions,
            classes,
        };
        dims.check()?;
        Ok(dims)
    }

    pub fn check(&self) -> Result<(), SpecError> {
        if self.groups < 1 {
            return Err(SpecError::Dims("H must be at least 1".into()));
        }
        if self.categories < 2 {
            return Err(SpecError::Dims("J must be at least 2".into()));
        }
        if self.occasions < 1 {
            return Err(SpecError::Dims("T must be at least 1".into()));
        }
        if self.classes < 1 {
            return Err(SpecError::Dims("A must be at least 1".into()));
        }
        Ok(())
    }

    pub fn transitions(&self) -> usize {
        self.occasions - 1
    }

    pub fn patterns(&self) -> usize {
        self.categories.pow(self.occasions as u32)
    }

    pub fn paths(&self) -> usize {
        self.classes.pow(self.occasions as u32)
    }

    /// Independent cell proportions of the saturated model, `Σ_h (J^T − 1)`.
    pub fn saturated_parameters(&self) -> usize {
        self.groups * (self.patterns() - 1)
    }

    pub fn delta_len(&self) -> usize {
        self.groups * self.classes
    }

    pub fn rho_len(&self) -> usize {
        self.occasions * self.groups * self.classes * self.categories
    }

    pub fn tau_len(&self) -> usize {
        self.transitions() * self.groups * self.classes * self.classes
    }

    pub fn row_len(&self, row: RowRef) -> usize {
        match row {
            RowRef::Delta { .. } | RowRef::Tau { .. } => self.classes,
            RowRef::Rho { .. } => self.categories,
        }
    }

    /// Offset of the row inside its block's flat storage.
    pub fn row_offset(&self, row: RowRef) -> usize {
        let (h, a, j) = (self.groups, self.classes, self.categories);
        match row {
            RowRef::Delta { group } => group * a,
            RowRef::Rho {
                occasion,
                group,
                class,
            } => ((occasion * h + group) * a + class) * j,
            RowRef::Tau {
                transition,
                group,
                from,
            } => ((transition * h + group) * a + from) * a,
        }
    }

    pub fn contains(&self, row: RowRef) -> bool {
        match row {
            RowRef::Delta { group } => group < self.groups,
            RowRef::Rho {
                occasion,
                group,
                class,
            } => occasion < self.occasions && group < self.groups && class < self.classes,
            RowRef::Tau {
                transition,
                group,
                from,
            } => transition < self.transitions() && group < self.groups && from < self.classes,
        }
    }

    /// Every probability row of the model in storage order: δ by group,
    /// then ρ by (occasion, group, class), then τ by (transition, group,
    /// origin class).
    pub fn rows(&self) -> Vec<RowRef> {
        let mut rows = Vec::new();
        for group in 0..self.groups {
            rows.push(RowRef::Delta { group });
        }
        for occasion in 0..self.occasions {
            for group in 0..self.groups {
                for class in 0..self.classes {
                    rows.push(RowRef::Rho {
                        occasion,
                        group,
                        class,
                    });
                }
            }
        }
        for transition in 0..self.transitions() {
            for group in 0..self.groups {
                for from in 0..self.classes {
                    rows.push(RowRef::Tau {
                        transition,
                        group,
                        from,
                    });
                }
            }
        }
        rows
    }
}

/// Address of one probability row (one simplex) of the parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "param", rename_all = "lowercase")]
pub enum RowRef {
    /// Initial class proportions of a group.
    Delta { group: usize },
    /// Response probabilities of a class at an occasion.
    Rho {
        occasion: usize,
        group: usize,
        class: usize,
    },
    /// Transition probabilities out of `from` between occasion
    /// `transition` and `transition + 1`.
    Tau {
        transition: usize,
        group: usize,
        from: usize,
    },
}

impl RowRef {
    pub fn block(&self) -> Block {
        match self {
            RowRef::Delta { .. } => Block::Delta,
            RowRef::Rho { .. } => Block::Rho,
            RowRef::Tau { .. } => Block::Tau,
        }
    }

    pub fn group(&self) -> usize {
        match *self {
            RowRef::Delta { group } | RowRef::Rho { group, .. } | RowRef::Tau { group, .. } => {
                group
            }
        }
    }

    /// The same row with latent classes relabelled by `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> RowRef {
        match *self {
            RowRef::Delta { group } => RowRef::Delta { group },
            RowRef::Rho {
                occasion,
                group,
                class,
            } => RowRef::Rho {
                occasion,
                group,
                class: perm[class],
            },
            RowRef::Tau {
                transition,
                group,
                from,
            } => RowRef::Tau {
                transition,
                group,
                from: perm[from],
            },
        }
    }
}

impl fmt::Display for RowRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RowRef::Delta { group } => write!(f, "delta[group {}]", group + 1),
            RowRef::Rho {
                occasion,
                group,
                class,
            } => write!(
                f,
                "rho[t{}, group {}, class {}]",
                occasion + 1,
                group + 1,
                class + 1
            ),
            RowRef::Tau {
                transition,
                group,
                from,
            } => write!(
                f,
                "tau[t{}->t{}, group {}, from class {}]",
                transition + 1,
                transition + 2,
                group + 1,
                from + 1
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    Delta,
    Rho,
    Tau,
}

/// One entry of a probability row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellRef {
    pub row: RowRef,
    pub col: usize,
}

impl fmt::Display for CellRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} column {}", self.row, self.col + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fix {
    pub cell: CellRef,
    pub value: f64,
}

/// Equality ties between whole rows plus cells pinned to constants.
///
/// Ties are declared row-wise: tying two rows ties each of their columns
/// pairwise. A fix on a row that belongs to a tie class applies to every
/// member of the class.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    #[serde(default)]
    pub ties: Vec<Vec<RowRef>>,
    #[serde(default)]
    pub fixes: Vec<Fix>,
}

impl ConstraintSet {
    pub fn tie(&mut self, rows: Vec<RowRef>) -> &mut Self {
        if rows.len() > 1 {
            self.ties.push(rows);
        }
        self
    }

    pub fn fix(&mut self, cell: CellRef, value: f64) -> &mut Self {
        self.fixes.push(Fix { cell, value });
        self
    }

    /// ρ of each (group, class) equal at every occasion.
    pub fn tie_rho_over_time(&mut self, dims: &Dims) -> &mut Self {
        for group in 0..dims.groups {
            for class in 0..dims.classes {
                let rows = (0..dims.occasions)
                    .map(|occasion| RowRef::Rho {
                        occasion,
                        group,
                        class,
                    })
                    .collect();
                self.tie(rows);
            }
        }
        self
    }

    /// δ and ρ equal across groups.
    pub fn tie_delta_rho_over_groups(&mut self, dims: &Dims) -> &mut Self {
        self.tie((0..dims.groups).map(|group| RowRef::Delta { group }).collect());
        for occasion in 0..dims.occasions {
            for class in 0..dims.classes {
                let rows = (0..dims.groups)
                    .map(|group| RowRef::Rho {
                        occasion,
                        group,
                        class,
                    })
                    .collect();
                self.tie(rows);
            }
        }
        self
    }

    /// τ equal across groups at each transition.
    pub fn tie_tau_over_groups(&mut self, dims: &Dims) -> &mut Self {
        for transition in 0..dims.transitions() {
            for from in 0..dims.classes {
                let rows = (0..dims.groups)
                    .map(|group| RowRef::Tau {
                        transition,
                        group,
                        from,
                    })
                    .collect();
                self.tie(rows);
            }
        }
        self
    }

    /// Time-homogeneous transitions: τ of each (group, class) equal at
    /// every transition.
    pub fn stationary_tau(&mut self, dims: &Dims) -> &mut Self {
        for group in 0..dims.groups {
            for from in 0..dims.classes {
                let rows = (0..dims.transitions())
                    .map(|transition| RowRef::Tau {
                        transition,
                        group,
                        from,
                    })
                    .collect();
                self.tie(rows);
            }
        }
        self
    }

    /// Error-free measurement: every ρ row fixed to a unit vector on the
    /// category matching its class.
    pub fn identity_rho(&mut self, dims: &Dims) -> &mut Self {
        for occasion in 0..dims.occasions {
            for group in 0..dims.groups {
                for class in 0..dims.classes {
                    for col in 0..dims.categories {
                        let row = RowRef::Rho {
                            occasion,
                            group,
                            class,
                        };
                        self.fix(CellRef { row, col }, if col == class { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        self
    }
}

/// A set of rows forced to share one value vector.
#[derive(Clone, Debug, PartialEq)]
pub struct RowClass {
    pub members: Vec<RowRef>,
    /// Per column: `Some(v)` when the column is pinned to `v`.
    pub fixed: Vec<Option<f64>>,
}

impl RowClass {
    pub fn representative(&self) -> RowRef {
        self.members[0]
    }

    pub fn fixed_mass(&self) -> f64 {
        self.fixed.iter().flatten().sum()
    }

    pub fn is_fully_fixed(&self) -> bool {
        self.fixed.iter().all(Option::is_some)
    }

    pub fn free_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.fixed
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_none())
            .map(|(c, _)| c)
    }
}

/// Model structure: dimensions, variant flags and the resolved constraint
/// partition of rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    dims: Dims,
    manifest: bool,
    stationary: bool,
    constraints: ConstraintSet,
    classes: Vec<RowClass>,
    class_of: HashMap<RowRef, usize>,
}

impl ModelSpec {
    pub fn builder(dims: Dims) -> ModelSpecBuilder {
        ModelSpecBuilder {
            dims,
            manifest: false,
            stationary: false,
            constraints: ConstraintSet::default(),
        }
    }

    /// Unconstrained model: every row estimated separately.
    pub fn unconstrained(dims: Dims) -> Result<Self, SpecError> {
        Self::builder(dims).build()
    }

    pub fn new(
        dims: Dims,
        constraints: ConstraintSet,
        manifest: bool,
        stationary: bool,
    ) -> Result<Self, SpecError> {
        dims.check()?;
        if manifest && dims.classes != dims.categories {
            return Err(SpecError::ManifestShape {
                classes: dims.classes,
                categories: dims.categories,
            });
        }
        let mut constraints = constraints;
        if manifest {
            constraints.identity_rho(&dims);
        }
        if stationary {
            constraints.stationary_tau(&dims);
        }

        let rows = dims.rows();
        let index: HashMap<RowRef, usize> = rows.iter().enumerate().map(|(i, r)| (*r, i)).collect();
        let mut uf = UnionFind::new(rows.len());
        for tie in &constraints.ties {
            for row in tie {
                if !dims.contains(*row) {
                    return Err(SpecError::RowOutOfRange(*row));
                }
            }
            for pair in tie.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if a.block() == Block::Rho
                    && b.block() != Block::Rho
                    || a.block() != Block::Rho && b.block() == Block::Rho
                {
                    return Err(SpecError::TieShape(a, b));
                }
                uf.union(index[&a], index[&b]);
            }
        }

        // Classes ordered by their first member in storage order.
        let mut by_root: BTreeMap<usize, Vec<RowRef>> = BTreeMap::new();
        let mut root_order: Vec<usize> = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            let root = uf.find(i);
            let entry = by_root.entry(root).or_default();
            if entry.is_empty() {
                root_order.push(root);
            }
            entry.push(*row);
        }
        let mut classes: Vec<RowClass> = root_order
            .into_iter()
            .map(|root| {
                let members = by_root.remove(&root).unwrap();
                let width = dims.row_len(members[0]);
                RowClass {
                    members,
                    fixed: vec![None; width],
                }
            })
            .collect();
        let mut class_of = HashMap::new();
        for (k, class) in classes.iter().enumerate() {
            for row in &class.members {
                class_of.insert(*row, k);
            }
        }

        for fix in &constraints.fixes {
            let cell = fix.cell;
            if !dims.contains(cell.row) || cell.col >= dims.row_len(cell.row) {
                return Err(SpecError::RowOutOfRange(cell.row));
            }
            if !(0.0..=1.0).contains(&fix.value) || !fix.value.is_finite() {
                return Err(SpecError::FixRange {
                    cell,
                    value: fix.value,
                });
            }
            let class = &mut classes[class_of[&cell.row]];
            match class.fixed[cell.col] {
                Some(v) if (v - fix.value).abs() > 1e-12 => {
                    return Err(SpecError::FixConflict {
                        row: cell.row,
                        col: cell.col,
                    })
                }
                _ => class.fixed[cell.col] = Some(fix.value),
            }
        }
        for class in &classes {
            let mass = class.fixed_mass();
            if class.is_fully_fixed() {
                if (mass - 1.0).abs() > 1e-9 {
                    return Err(SpecError::FixNotSimplex(class.representative()));
                }
            } else if mass > 1.0 + 1e-9 {
                return Err(SpecError::FixOverflow(class.representative()));
            }
        }

        Ok(ModelSpec {
            dims,
            manifest,
            stationary,
            constraints,
            classes,
            class_of,
        })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn is_manifest(&self) -> bool {
        self.manifest
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    /// The declared constraints, including those implied by the variant
    /// flags.
    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn row_classes(&self) -> &[RowClass] {
        &self.classes
    }

    pub fn class_of(&self, row: RowRef) -> &RowClass {
        &self.classes[self.class_of[&row]]
    }

    pub fn class_index(&self, row: RowRef) -> usize {
        self.class_of[&row]
    }

    pub fn fixed_value(&self, cell: CellRef) -> Option<f64> {
        self.class_of(cell.row).fixed[cell.col]
    }

    /// True when every restriction of `self` is also imposed by
    /// `restricted`, i.e. `self` is the more general model.
    pub fn relaxes(&self, restricted: &ModelSpec) -> bool {
        if self.dims != restricted.dims {
            return false;
        }
        for class in &self.classes {
            let k = restricted.class_index(class.members[0]);
            if class.members.iter().any(|r| restricted.class_index(*r) != k) {
                return false;
            }
            let other = &restricted.classes[k];
            for (mine, theirs) in class.fixed.iter().zip(&other.fixed) {
                if let Some(v) = mine {
                    match theirs {
                        Some(w) if (v - w).abs() <= 1e-12 => {}
                        _ => return false,
                    }
                }
            }
        }
        true
    }
}

pub struct ModelSpecBuilder {
    dims: Dims,
    manifest: bool,
    stationary: bool,
    constraints: ConstraintSet,
}

impl ModelSpecBuilder {
    pub fn manifest(mut self) -> Self {
        self.manifest = true;
        self
    }

    pub fn stationary(mut self) -> Self {
        self.stationary = true;
        self
    }

    pub fn tie_rho_over_time(mut self) -> Self {
        self.constraints.tie_rho_over_time(&self.dims);
        self
    }

    pub fn tie_delta_rho_over_groups(mut self) -> Self {
        self.constraints.tie_delta_rho_over_groups(&self.dims);
        self
    }

    pub fn tie_tau_over_groups(mut self) -> Self {
        self.constraints.tie_tau_over_groups(&self.dims);
        self
    }

    pub fn tie(mut self, rows: Vec<RowRef>) -> Self {
        self.constraints.tie(rows);
        self
    }

    pub fn fix(mut self, cell: CellRef, value: f64) -> Self {
        self.constraints.fix(cell, value);
        self
    }

    pub fn constraints(mut self, extra: ConstraintSet) -> Self {
        self.constraints.ties.extend(extra.ties);
        self.constraints.fixes.extend(extra.fixes);
        self
    }

    pub fn build(self) -> Result<ModelSpec, SpecError> {
        ModelSpec::new(self.dims, self.constraints, self.manifest, self.stationary)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
