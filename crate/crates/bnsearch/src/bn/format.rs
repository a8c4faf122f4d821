//! Line-oriented network text format.
//!
//! ```text
//! network <name>
//! variable <name> <arity> <label1>,<label2>,...
//! parents <name> <pname1> <pname2> ...
//! cpt <name> <row-index> <p1> <p2> ... <p_r>
//! ```
//!
//! `#` starts a comment, blank lines are skipped. A file with no `cpt` lines
//! is a bare structure; partial CPTs are an error. Parsing is strict: arity
//! mismatches, rows not summing to 1 within 1e-6, and unknown names are hard
//! errors. Row indices enumerate parent configurations in mixed-radix order
//! with the first-listed (lowest-index) parent most significant.

use std::collections::HashMap;

use crate::bn::{parent_config_count, BayesianNetwork, Cpt, Structure, Variable};
use crate::error::{Error, Result};

/// A parsed network file: always variables and a structure, CPTs only when
/// the file carries them.
#[derive(Debug, Clone)]
pub struct ParsedNetwork {
    pub name: String,
    pub variables: Vec<Variable>,
    pub structure: Structure,
    pub cpts: Option<Vec<Cpt>>,
}

impl ParsedNetwork {
    /// Promote to a full network; errors if the file had no CPTs.
    pub fn into_network(self) -> Result<BayesianNetwork> {
        match self.cpts {
            Some(cpts) => BayesianNetwork::new(self.variables, self.structure, cpts),
            None => Err(Error::InvalidConfig(
                "network file carries no CPTs (bare structure)".into(),
            )),
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

pub fn parse_network(text: &str) -> Result<ParsedNetwork> {
    let mut name: Option<String> = None;
    let mut variables: Vec<Variable> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    // (line, child, parent names) and (line, var, row, probs), resolved after
    // all declarations are known so line order stays free.
    let mut parent_lines: Vec<(usize, String, Vec<String>)> = Vec::new();
    let mut cpt_lines: Vec<(usize, String, usize, Vec<f64>)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let mut fields = line.split_whitespace();
        let Some(keyword) = fields.next() else {
            continue;
        };
        match keyword {
            "network" => {
                let n: Vec<&str> = fields.collect();
                if n.len() != 1 {
                    return Err(parse_err(lineno, "expected: network <name>"));
                }
                if name.is_some() {
                    return Err(parse_err(lineno, "duplicate network line"));
                }
                name = Some(n[0].to_string());
            }
            "variable" => {
                let vname = fields
                    .next()
                    .ok_or_else(|| parse_err(lineno, "variable line missing name"))?;
                let arity: usize = fields
                    .next()
                    .ok_or_else(|| parse_err(lineno, "variable line missing arity"))?
                    .parse()
                    .map_err(|_| parse_err(lineno, "arity is not an integer"))?;
                let labels_field = fields
                    .next()
                    .ok_or_else(|| parse_err(lineno, "variable line missing labels"))?;
                if fields.next().is_some() {
                    return Err(parse_err(lineno, "trailing fields on variable line"));
                }
                let labels: Vec<String> =
                    labels_field.split(',').map(|s| s.to_string()).collect();
                if labels.len() != arity {
                    return Err(parse_err(
                        lineno,
                        format!("arity {arity} does not match {} labels", labels.len()),
                    ));
                }
                if index.contains_key(vname) {
                    return Err(parse_err(lineno, format!("duplicate variable '{vname}'")));
                }
                let var = Variable::new(vname, labels)
                    .map_err(|e| parse_err(lineno, e.to_string()))?;
                index.insert(vname.to_string(), variables.len());
                variables.push(var);
            }
            "parents" => {
                let vname = fields
                    .next()
                    .ok_or_else(|| parse_err(lineno, "parents line missing variable name"))?;
                let parents: Vec<String> = fields.map(|s| s.to_string()).collect();
                parent_lines.push((lineno, vname.to_string(), parents));
            }
            "cpt" => {
                let vname = fields
                    .next()
                    .ok_or_else(|| parse_err(lineno, "cpt line missing variable name"))?;
                let row: usize = fields
                    .next()
                    .ok_or_else(|| parse_err(lineno, "cpt line missing row index"))?
                    .parse()
                    .map_err(|_| parse_err(lineno, "row index is not an integer"))?;
                let mut probs = Vec::new();
                for field in fields {
                    let p: f64 = field
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad probability '{field}'")))?;
                    probs.push(p);
                }
                cpt_lines.push((lineno, vname.to_string(), row, probs));
            }
            other => {
                return Err(parse_err(lineno, format!("unknown keyword '{other}'")));
            }
        }
    }

    let name = name.ok_or_else(|| parse_err(0, "missing network line"))?;
    if variables.is_empty() {
        return Err(parse_err(0, "no variables declared"));
    }
    let n = variables.len();

    let mut parent_sets: Vec<Option<Vec<usize>>> = vec![None; n];
    for (lineno, vname, pnames) in parent_lines {
        let &v = index
            .get(&vname)
            .ok_or_else(|| parse_err(lineno, format!("unknown variable '{vname}'")))?;
        if parent_sets[v].is_some() {
            return Err(parse_err(lineno, format!("duplicate parents line for '{vname}'")));
        }
        let mut set = Vec::with_capacity(pnames.len());
        for pname in &pnames {
            let &p = index
                .get(pname)
                .ok_or_else(|| parse_err(lineno, format!("unknown parent '{pname}'")))?;
            set.push(p);
        }
        parent_sets[v] = Some(set);
    }
    let structure = Structure::new(
        parent_sets.into_iter().map(|s| s.unwrap_or_default()).collect(),
    )?;

    if cpt_lines.is_empty() {
        return Ok(ParsedNetwork { name, variables, structure, cpts: None });
    }

    let mut rows: Vec<Vec<Option<Vec<f64>>>> = (0..n)
        .map(|v| {
            let q = parent_config_count(structure.parents(v), |p| variables[p].arity);
            vec![None; q]
        })
        .collect();
    for (lineno, vname, row, probs) in cpt_lines {
        let &v = index
            .get(&vname)
            .ok_or_else(|| parse_err(lineno, format!("unknown variable '{vname}'")))?;
        if row >= rows[v].len() {
            return Err(parse_err(
                lineno,
                format!("row index {row} out of range for '{vname}' ({} rows)", rows[v].len()),
            ));
        }
        if rows[v][row].is_some() {
            return Err(parse_err(lineno, format!("duplicate cpt row {row} for '{vname}'")));
        }
        if probs.len() != variables[v].arity {
            return Err(parse_err(
                lineno,
                format!(
                    "cpt row for '{vname}' has {} entries, expected arity {}",
                    probs.len(),
                    variables[v].arity
                ),
            ));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(parse_err(lineno, format!("negative probability for '{vname}'")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(parse_err(
                lineno,
                format!("cpt row for '{vname}' sums to {sum}, not 1"),
            ));
        }
        // Keep exact values when they already satisfy the in-memory CPT
        // tolerance, so written files round-trip bit-for-bit.
        let probs = if (sum - 1.0).abs() > 1e-9 {
            probs.iter().map(|p| p / sum).collect()
        } else {
            probs
        };
        rows[v][row] = Some(probs);
    }
    let mut cpts = Vec::with_capacity(n);
    for (v, var_rows) in rows.into_iter().enumerate() {
        let mut table = Vec::with_capacity(var_rows.len());
        for (j, row) in var_rows.into_iter().enumerate() {
            match row {
                Some(r) => table.push(r),
                None => {
                    return Err(parse_err(
                        0,
                        format!("missing cpt row {j} for variable '{}'", variables[v].name),
                    ))
                }
            }
        }
        cpts.push(Cpt::new(v, variables[v].arity, table)?);
    }
    Ok(ParsedNetwork { name, variables, structure, cpts: Some(cpts) })
}

/// Serialize a network (or bare structure when `cpts` is `None`).
///
/// Probabilities are written with Rust's shortest round-trip float syntax,
/// so load-save-load is bit-exact.
pub fn write_network(
    name: &str,
    variables: &[Variable],
    structure: &Structure,
    cpts: Option<&[Cpt]>,
) -> String {
    let mut out = String::new();
    out.push_str(&format!("network {name}\n"));
    for var in variables {
        out.push_str(&format!(
            "variable {} {} {}\n",
            var.name,
            var.arity,
            var.value_labels.join(",")
        ));
    }
    for v in 0..structure.n() {
        let parents = structure.parents(v);
        if parents.is_empty() {
            continue;
        }
        let names: Vec<&str> = parents.iter().map(|&p| variables[p].name.as_str()).collect();
        out.push_str(&format!("parents {} {}\n", variables[v].name, names.join(" ")));
    }
    if let Some(cpts) = cpts {
        for (v, cpt) in cpts.iter().enumerate() {
            for (j, row) in cpt.probabilities.iter().enumerate() {
                let probs: Vec<String> = row.iter().map(|p| p.to_string()).collect();
                out.push_str(&format!(
                    "cpt {} {} {}\n",
                    variables[v].name,
                    j,
                    probs.join(" ")
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# toy chain
network toy
variable A 2 a0,a1
variable B 3 b0,b1,b2
parents B A
cpt A 0 0.25 0.75
cpt B 0 0.2 0.3 0.5
cpt B 1 0.6 0.3 0.1
";

    #[test]
    fn parse_and_roundtrip() {
        let parsed = parse_network(SAMPLE).unwrap();
        assert_eq!(parsed.name, "toy");
        assert_eq!(parsed.variables.len(), 2);
        assert_eq!(parsed.structure.parents(1), &[0]);
        let net = parsed.clone().into_network().unwrap();
        assert_eq!(net.cpts[1].probabilities[1], vec![0.6, 0.3, 0.1]);

        let text = write_network("toy", &net.variables, &net.structure, Some(&net.cpts));
        let reparsed = parse_network(&text).unwrap();
        assert_eq!(reparsed.variables, net.variables);
        assert_eq!(reparsed.structure, net.structure);
        assert_eq!(reparsed.cpts.unwrap(), net.cpts);
        // Writing again produces identical bytes.
        let text2 =
            write_network("toy", &net.variables, &net.structure, Some(&net.cpts));
        assert_eq!(text, text2);
    }

    #[test]
    fn bare_structure_has_no_cpts() {
        let text = "network s\nvariable A 2 a0,a1\nvariable B 2 b0,b1\nparents B A\n";
        let parsed = parse_network(text).unwrap();
        assert!(parsed.cpts.is_none());
        assert!(parsed.into_network().is_err());
    }

    #[test]
    fn strict_errors() {
        // Row sum off by more than 1e-6.
        let bad_sum = "network x\nvariable A 2 a,b\ncpt A 0 0.5 0.6\n";
        assert!(parse_network(bad_sum).is_err());
        // Unknown parent name.
        let unknown = "network x\nvariable A 2 a,b\nparents A Z\n";
        assert!(parse_network(unknown).is_err());
        // Arity does not match label count.
        let arity = "network x\nvariable A 3 a,b\n";
        assert!(parse_network(arity).is_err());
        // Missing cpt row.
        let partial = "network x\nvariable A 2 a,b\nvariable B 2 c,d\nparents B A\ncpt B 0 0.5 0.5\ncpt B 1 0.5 0.5\n";
        assert!(parse_network(partial).is_err());
        // Unknown keyword.
        assert!(parse_network("networks x\n").is_err());
    }

    #[test]
    fn near_one_rows_are_normalized() {
        // 1e-7 off: accepted and normalized to satisfy the CPT invariant.
        let text = "network x\nvariable A 2 a,b\ncpt A 0 0.5 0.5000001\n";
        let net = parse_network(text).unwrap().into_network().unwrap();
        let row = &net.cpts[0].probabilities[0];
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}
