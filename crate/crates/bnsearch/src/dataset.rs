//! Dataset storage, MCAR missingness injection, the imputation overlay that
//! turns incomplete data plus a missing-value chromosome into a complete
//! view, and sufficient-statistic counting.
//!
//! CSV format: first row is the variable names, `,` delimiter, `?` marks a
//! missing cell, labels restricted to `[A-Za-z0-9_]+` (never quoted).

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::bn::{parent_config_count, parent_config_index, valid_token, Variable};
use crate::error::{Error, Result};

/// A case-by-variable table of value indices; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    variables: Vec<Variable>,
    cells: Vec<Option<usize>>,
    case_count: usize,
}

impl Dataset {
    /// Build from complete rows of value indices.
    pub fn complete(variables: Vec<Variable>, rows: Vec<Vec<usize>>) -> Result<Self> {
        let cells = rows.iter().flatten().map(|&v| Some(v)).collect();
        Self::from_cells(variables, cells, rows.len())
    }

    /// Build from a flat row-major cell table.
    pub fn from_cells(
        variables: Vec<Variable>,
        cells: Vec<Option<usize>>,
        case_count: usize,
    ) -> Result<Self> {
        let n = variables.len();
        if cells.len() != case_count * n {
            return Err(Error::LengthMismatch { expected: case_count * n, found: cells.len() });
        }
        for (i, cell) in cells.iter().enumerate() {
            if let Some(v) = cell {
                let var = i % n;
                if *v >= variables[var].arity {
                    return Err(Error::InvalidConfig(format!(
                        "value index {v} out of range for variable '{}'",
                        variables[var].name
                    )));
                }
            }
        }
        Ok(Self { variables, cells, case_count })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn case_count(&self) -> usize {
        self.case_count
    }

    pub fn cell(&self, case: usize, var: usize) -> Option<usize> {
        self.cells[case * self.n_vars() + var]
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|c| c.is_some())
    }

    /// Independently blank each cell with probability `rate`.
    ///
    /// The input must be complete; returns the masked copy and its mask.
    pub fn inject_mcar(
        &self,
        rate: f64,
        rng: &mut impl Rng,
    ) -> Result<(Dataset, MissingMask)> {
        assert!((0.0..=1.0).contains(&rate), "rate must be a probability");
        if !self.is_complete() {
            return Err(Error::AlreadyIncomplete);
        }
        let mut masked = self.clone();
        for cell in &mut masked.cells {
            if rng.gen::<f64>() < rate {
                *cell = None;
            }
        }
        let mask = MissingMask::of(&masked);
        Ok((masked, mask))
    }
}

/// Row-major coordinates of every missing cell, with an O(1) reverse index
/// from (case, variable) to chromosome position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingMask {
    coords: Vec<(usize, usize)>,
    slots: Vec<u32>,
    n_vars: usize,
}

const OBSERVED: u32 = u32::MAX;

impl MissingMask {
    /// The mask of a dataset's missing cells.
    pub fn of(data: &Dataset) -> Self {
        let n = data.n_vars();
        let mut coords = Vec::new();
        let mut slots = vec![OBSERVED; data.case_count() * n];
        for case in 0..data.case_count() {
            for var in 0..n {
                if data.cell(case, var).is_none() {
                    slots[case * n + var] = coords.len() as u32;
                    coords.push((case, var));
                }
            }
        }
        Self { coords, slots, n_vars: n }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    /// Variable index of the cell at chromosome position `pos`.
    pub fn var_of(&self, pos: usize) -> usize {
        self.coords[pos].1
    }

    fn slot(&self, case: usize, var: usize) -> Option<usize> {
        match self.slots[case * self.n_vars + var] {
            OBSERVED => None,
            s => Some(s as usize),
        }
    }

    /// True iff this mask describes exactly `data`'s missing cells.
    pub fn matches(&self, data: &Dataset) -> bool {
        *self == Self::of(data)
    }
}

/// The missing-data chromosome: one imputed value per masked cell,
/// positionally aligned with a [`MissingMask`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MissingAssignment {
    pub values: Vec<usize>,
}

impl MissingAssignment {
    pub fn new(values: Vec<usize>) -> Self {
        Self { values }
    }

    pub fn empty() -> Self {
        Self { values: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Validate alignment with a mask and value ranges against `data`.
    pub fn check_against(&self, data: &Dataset, mask: &MissingMask) -> Result<()> {
        if self.values.len() != mask.len() {
            return Err(Error::LengthMismatch { expected: mask.len(), found: self.values.len() });
        }
        for (pos, &v) in self.values.iter().enumerate() {
            let var = mask.var_of(pos);
            if v >= data.variables()[var].arity {
                return Err(Error::InvalidConfig(format!(
                    "assignment value {v} out of range at position {pos}"
                )));
            }
        }
        Ok(())
    }
}

/// Read-only complete-data view: observed cells come from the dataset,
/// masked cells from the assignment. No copying.
#[derive(Clone, Copy)]
pub struct CompletedView<'a> {
    data: &'a Dataset,
    mask: &'a MissingMask,
    assignment: &'a MissingAssignment,
}

impl<'a> CompletedView<'a> {
    pub fn new(
        data: &'a Dataset,
        mask: &'a MissingMask,
        assignment: &'a MissingAssignment,
    ) -> Result<Self> {
        if assignment.len() != mask.len() {
            return Err(Error::LengthMismatch {
                expected: mask.len(),
                found: assignment.len(),
            });
        }
        Ok(Self { data, mask, assignment })
    }

    pub fn variables(&self) -> &'a [Variable] {
        self.data.variables()
    }

    pub fn assignment(&self) -> &'a MissingAssignment {
        self.assignment
    }

    pub fn case_count(&self) -> usize {
        self.data.case_count()
    }

    pub fn value(&self, case: usize, var: usize) -> usize {
        match self.data.cell(case, var) {
            Some(v) => v,
            None => {
                let pos = self.mask.slot(case, var).expect("mask matches dataset");
                self.assignment.values[pos]
            }
        }
    }

    /// Order-sensitive 128-bit digest of one completed column; used as the
    /// data component of family-score cache keys.
    pub fn column_digest(&self, var: usize) -> u128 {
        let mut lo: u64 = 0xcbf2_9ce4_8422_2325 ^ self.case_count() as u64;
        let mut hi: u64 = 0x9e37_79b9_7f4a_7c15 ^ var as u64;
        for case in 0..self.case_count() {
            let v = self.value(case, var) as u64 + 1;
            lo = (lo ^ v).wrapping_mul(0x0000_0100_0000_01B3);
            hi = (hi ^ v).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
        }
        ((hi as u128) << 64) | lo as u128
    }
}

/// N_ijk count table for one (variable, parent set) family. Parent
/// configurations `j` follow the global mixed-radix order; `k` is the child
/// value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SufficientStats {
    pub variable: usize,
    pub arity: usize,
    pub parent_config_count: usize,
    counts: Vec<u64>,
    row_totals: Vec<u64>,
}

impl SufficientStats {
    pub fn count(&self, j: usize, k: usize) -> u64 {
        self.counts[j * self.arity + k]
    }

    pub fn row_total(&self, j: usize) -> u64 {
        self.row_totals[j]
    }

    pub fn total(&self) -> u64 {
        self.row_totals.iter().sum()
    }
}

/// Exact N_ijk counts for one family over a completed view.
pub fn count_family(view: &CompletedView<'_>, variable: usize, parents: &[usize]) -> SufficientStats {
    debug_assert!(!parents.contains(&variable));
    let vars = view.variables();
    let arity = vars[variable].arity;
    let q = parent_config_count(parents, |p| vars[p].arity);
    let mut counts = vec![0u64; q * arity];
    let mut row_totals = vec![0u64; q];
    for case in 0..view.case_count() {
        let j = parent_config_index(parents, |p| vars[p].arity, |p| view.value(case, p));
        let k = view.value(case, variable);
        counts[j * arity + k] += 1;
        row_totals[j] += 1;
    }
    SufficientStats { variable, arity, parent_config_count: q, counts, row_totals }
}

// ---------------------------------------------------------------------------
// CSV I/O

/// How CSV labels map to value indices.
pub enum LabelPolicy<'a> {
    /// Columns must match these declared variables (names and labels).
    Declared(&'a [Variable]),
    /// Infer each column's value set as the sorted distinct observed labels.
    Infer,
}

pub fn load_csv(path: &Path, policy: LabelPolicy<'_>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, policy)
}

pub fn parse_csv(text: &str, policy: LabelPolicy<'_>) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::EmptyFile);
    };
    let names: Vec<&str> = header.split(',').collect();
    if names.is_empty() || names.iter().any(|n| n.is_empty()) {
        return Err(Error::Parse { line: 1, message: "bad header row".into() });
    }
    let n = names.len();
    let mut raw_rows: Vec<Vec<Option<String>>> = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n {
            return Err(Error::RaggedRow {
                line: lineno + 1,
                expected: n,
                found: fields.len(),
            });
        }
        let row: Vec<Option<String>> = fields
            .iter()
            .map(|f| if *f == "?" { None } else { Some(f.to_string()) })
            .collect();
        raw_rows.push(row);
    }

    let variables: Vec<Variable> = match policy {
        LabelPolicy::Declared(decl) => {
            if decl.len() != n {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("header has {n} columns, expected {}", decl.len()),
                });
            }
            for (i, name) in names.iter().enumerate() {
                if *name != decl[i].name {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!(
                            "column {i} is '{name}', expected '{}'",
                            decl[i].name
                        ),
                    });
                }
            }
            decl.to_vec()
        }
        LabelPolicy::Infer => {
            let mut label_sets: Vec<Vec<String>> = vec![Vec::new(); n];
            for row in &raw_rows {
                for (i, cell) in row.iter().enumerate() {
                    if let Some(label) = cell {
                        if !valid_token(label) {
                            return Err(Error::Parse {
                                line: 0,
                                message: format!("invalid label '{label}'"),
                            });
                        }
                        if !label_sets[i].contains(label) {
                            label_sets[i].push(label.clone());
                        }
                    }
                }
            }
            let mut vars = Vec::with_capacity(n);
            for (i, mut labels) in label_sets.into_iter().enumerate() {
                labels.sort();
                vars.push(Variable::new(names[i], labels)?);
            }
            vars
        }
    };

    let case_count = raw_rows.len();
    let mut cells = Vec::with_capacity(case_count * n);
    for row in &raw_rows {
        for (i, cell) in row.iter().enumerate() {
            match cell {
                None => cells.push(None),
                Some(label) => match variables[i].label_index(label) {
                    Some(v) => cells.push(Some(v)),
                    None => {
                        return Err(Error::UnknownLabel {
                            variable: variables[i].name.clone(),
                            label: label.clone(),
                        });
                    }
                },
            }
        }
    }
    Dataset::from_cells(variables, cells, case_count)
}

pub fn write_csv(data: &Dataset) -> String {
    let mut out = String::new();
    let names: Vec<&str> = data.variables().iter().map(|v| v.name.as_str()).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for case in 0..data.case_count() {
        for var in 0..data.n_vars() {
            if var > 0 {
                out.push(',');
            }
            match data.cell(case, var) {
                Some(v) => out.push_str(&data.variables()[var].value_labels[v]),
                None => out.push('?'),
            }
        }
        out.push('\n');
    }
    out
}

pub fn save_csv(data: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, write_csv(data))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Assignment file I/O (`case,variable,value` per masked cell, mask order)

pub fn write_assignment(
    data: &Dataset,
    mask: &MissingMask,
    assignment: &MissingAssignment,
) -> String {
    let mut out = String::from("case,variable,value\n");
    for (pos, &(case, var)) in mask.coords().iter().enumerate() {
        let label = &data.variables()[var].value_labels[assignment.values[pos]];
        let _ = writeln!(out, "{case},{},{label}", data.variables()[var].name);
    }
    out
}

pub fn parse_assignment(
    text: &str,
    data: &Dataset,
    mask: &MissingMask,
) -> Result<MissingAssignment> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "case,variable,value")) => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("bad assignment header '{header}'"),
            })
        }
        None => return Err(Error::EmptyFile),
    }
    let mut values = Vec::with_capacity(mask.len());
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::RaggedRow { line: lineno + 1, expected: 3, found: fields.len() });
        }
        let pos = values.len();
        if pos >= mask.len() {
            return Err(Error::LengthMismatch { expected: mask.len(), found: pos + 1 });
        }
        let (case, var) = mask.coords()[pos];
        let file_case: usize = fields[0].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            message: "case index is not an integer".into(),
        })?;
        if file_case != case || fields[1] != data.variables()[var].name {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!(
                    "expected cell ({case},{}), found ({file_case},{})",
                    data.variables()[var].name,
                    fields[1]
                ),
            });
        }
        let value = data.variables()[var].label_index(fields[2]).ok_or_else(|| {
            Error::UnknownLabel {
                variable: data.variables()[var].name.clone(),
                label: fields[2].to_string(),
            }
        })?;
        values.push(value);
    }
    if values.len() != mask.len() {
        return Err(Error::LengthMismatch { expected: mask.len(), found: values.len() });
    }
    Ok(MissingAssignment::new(values))
}

/// The original values of the masked cells of `complete` (the ground-truth
/// chromosome a benchmark generator knows).
pub fn truth_assignment(complete: &Dataset, mask: &MissingMask) -> MissingAssignment {
    let values = mask
        .coords()
        .iter()
        .map(|&(case, var)| complete.cell(case, var).expect("source dataset is complete"))
        .collect();
    MissingAssignment::new(values)
}
