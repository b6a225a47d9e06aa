//! Exact discrete structural-causal-model computations: observational
//! conditionals, interventions via graph surgery and backdoor adjustment, and
//! counterfactuals via abduction / action / prediction.
//!
//! All queries enumerate the full joint, which is exact and cheap for the
//! desk-scale models this lab targets (a handful of variables with small
//! finite domains). Counterfactual queries require structural-equation form:
//! every variable with parents must be a deterministic function of them, so
//! the parentless roots act as the exogenous noise terms.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const CPT_ROW_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ScmError {
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("value {value} out of domain for variable {variable} (domain size {domain})")]
    OutOfDomain {
        variable: String,
        value: usize,
        domain: usize,
    },
    #[error("causal graph has a cycle involving {0}")]
    Cyclic(String),
    #[error("variable {variable}: {msg}")]
    BadCpt { variable: String, msg: String },
    #[error("evidence has probability zero")]
    ZeroProbabilityEvidence,
    #[error("factual assignment has probability zero; abduction undefined")]
    ZeroProbabilityFactual,
    #[error("counterfactual requires structural-equation form: variable {0} with parents has a stochastic mechanism")]
    NotStructural(String),
    #[error("backdoor sum undefined: P(do-assignment, adjustment={0}) = 0 for a positive-probability stratum")]
    BackdoorUndefined(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed SCM file: {0}")]
    Parse(String),
}

/// A value assignment to a subset of variables.
pub type Assignment = BTreeMap<String, usize>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    /// Domain size; values are 0..domain.
    pub domain: usize,
    pub parents: Vec<String>,
    /// One row per parent assignment. Rows are indexed mixed-radix over the
    /// parents in listed order with the last parent varying fastest.
    pub cpt: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSCM {
    pub variables: Vec<Variable>,
}

impl DiscreteSCM {
    pub fn new(variables: Vec<Variable>) -> Result<Self, ScmError> {
        let scm = DiscreteSCM { variables };
        scm.validate()?;
        Ok(scm)
    }

    pub fn from_json_reader<R: std::io::Read>(reader: R) -> Result<Self, ScmError> {
        let scm: DiscreteSCM =
            serde_json::from_reader(reader).map_err(|e| ScmError::Parse(e.to_string()))?;
        scm.validate()?;
        Ok(scm)
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self, ScmError> {
        Self::from_json_reader(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    fn validate(&self) -> Result<(), ScmError> {
        let index = self.index();
        for v in &self.variables {
            if v.domain == 0 {
                return Err(ScmError::BadCpt {
                    variable: v.name.clone(),
                    msg: "domain must be nonempty".into(),
                });
            }
            let mut rows = 1usize;
            for p in &v.parents {
                let pi = index
                    .get(p.as_str())
                    .ok_or_else(|| ScmError::UnknownVariable(p.clone()))?;
                rows *= self.variables[*pi].domain;
            }
            if v.cpt.len() != rows {
                return Err(ScmError::BadCpt {
                    variable: v.name.clone(),
                    msg: format!("expected {rows} CPT rows, found {}", v.cpt.len()),
                });
            }
            for (i, row) in v.cpt.iter().enumerate() {
                if row.len() != v.domain {
                    return Err(ScmError::BadCpt {
                        variable: v.name.clone(),
                        msg: format!("row {i} has {} entries, domain is {}", row.len(), v.domain),
                    });
                }
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(ScmError::BadCpt {
                        variable: v.name.clone(),
                        msg: format!("row {i} has entries outside [0,1]"),
                    });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > CPT_ROW_TOL {
                    return Err(ScmError::BadCpt {
                        variable: v.name.clone(),
                        msg: format!("row {i} sums to {sum}, not 1"),
                    });
                }
            }
        }
        self.topo_order()?;
        Ok(())
    }

    fn index(&self) -> BTreeMap<&str, usize> {
        self.variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.as_str(), i))
            .collect()
    }

    fn var(&self, name: &str) -> Result<usize, ScmError> {
        self.index()
            .get(name)
            .copied()
            .ok_or_else(|| ScmError::UnknownVariable(name.to_string()))
    }

    fn topo_order(&self) -> Result<Vec<usize>, ScmError> {
        let index = self.index();
        let n = self.variables.len();
        let mut indegree = vec![0usize; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, v) in self.variables.iter().enumerate() {
            for p in &v.parents {
                let pi = *index
                    .get(p.as_str())
                    .ok_or_else(|| ScmError::UnknownVariable(p.clone()))?;
                children[pi].push(i);
                indegree[i] += 1;
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        while let Some(i) = ready.pop() {
            order.push(i);
            for &c in &children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap();
            return Err(ScmError::Cyclic(self.variables[stuck].name.clone()));
        }
        Ok(order)
    }

    fn check_assignment(&self, a: &Assignment) -> Result<(), ScmError> {
        for (name, &value) in a {
            let vi = self.var(name)?;
            if value >= self.variables[vi].domain {
                return Err(ScmError::OutOfDomain {
                    variable: name.clone(),
                    value,
                    domain: self.variables[vi].domain,
                });
            }
        }
        Ok(())
    }

    fn cpt_row_index(&self, vi: usize, values: &[usize]) -> usize {
        let index = self.index();
        let mut row = 0usize;
        for p in &self.variables[vi].parents {
            let pi = index[p.as_str()];
            row = row * self.variables[pi].domain + values[pi];
        }
        row
    }

    /// Probability of one full joint configuration.
    fn joint_prob(&self, values: &[usize]) -> f64 {
        let mut p = 1.0;
        for (vi, v) in self.variables.iter().enumerate() {
            let row = self.cpt_row_index(vi, values);
            p *= v.cpt[row][values[vi]];
            if p == 0.0 {
                return 0.0;
            }
        }
        p
    }

    /// Iterate all joint configurations with their probabilities.
    fn enumerate_joint(&self, mut visit: impl FnMut(&[usize], f64)) {
        let n = self.variables.len();
        let mut values = vec![0usize; n];
        loop {
            let p = self.joint_prob(&values);
            visit(&values, p);
            // increment mixed-radix counter
            let mut i = n;
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                values[i] += 1;
                if values[i] < self.variables[i].domain {
                    break;
                }
                values[i] = 0;
            }
        }
    }

    /// Exact P(target | evidence) by full joint enumeration.
    pub fn observational(&self, target: &str, evidence: &Assignment) -> Result<Vec<f64>, ScmError> {
        self.check_assignment(evidence)?;
        let ti = self.var(target)?;
        let index = self.index();
        let evidence_idx: Vec<(usize, usize)> = evidence
            .iter()
            .map(|(name, &val)| (index[name.as_str()], val))
            .collect();
        let mut dist = vec![0.0; self.variables[ti].domain];
        let mut total = 0.0;
        self.enumerate_joint(|values, p| {
            if evidence_idx.iter().all(|&(vi, val)| values[vi] == val) {
                dist[values[ti]] += p;
                total += p;
            }
        });
        if total == 0.0 {
            return Err(ScmError::ZeroProbabilityEvidence);
        }
        for d in &mut dist {
            *d /= total;
        }
        Ok(dist)
    }

    /// Graph surgery: delete incoming edges of the do-variables and fix them.
    pub fn surgery(&self, intervention: &Assignment) -> Result<DiscreteSCM, ScmError> {
        self.check_assignment(intervention)?;
        let mut variables = self.variables.clone();
        for v in &mut variables {
            if let Some(&value) = intervention.get(&v.name) {
                v.parents.clear();
                let mut row = vec![0.0; v.domain];
                row[value] = 1.0;
                v.cpt = vec![row];
            }
        }
        Ok(DiscreteSCM { variables })
    }

    /// Exact P(target | do(intervention)) via graph surgery.
    pub fn interventional(&self, target: &str, intervention: &Assignment) -> Result<Vec<f64>, ScmError> {
        let mutilated = self.surgery(intervention)?;
        mutilated.observational(target, &Assignment::new())
    }

    /// P(target | do(intervention)) via the backdoor sum
    /// sum_c P(target | intervention, c) P(c) over the adjustment set.
    ///
    /// Valid only when the adjustment set satisfies the backdoor criterion
    /// for (intervention -> target); this routine computes the sum without
    /// checking the criterion.
    pub fn backdoor_interventional(
        &self,
        target: &str,
        intervention: &Assignment,
        adjustment: &[String],
    ) -> Result<Vec<f64>, ScmError> {
        self.check_assignment(intervention)?;
        let ti = self.var(target)?;
        let adj_idx: Vec<usize> = adjustment
            .iter()
            .map(|name| self.var(name))
            .collect::<Result<_, _>>()?;
        let mut dist = vec![0.0; self.variables[ti].domain];

        // enumerate adjustment strata
        let mut stratum: Vec<usize> = vec![0; adj_idx.len()];
        loop {
            let mut c = Assignment::new();
            for (k, &vi) in adj_idx.iter().enumerate() {
                c.insert(self.variables[vi].name.clone(), stratum[k]);
            }
            let p_c = self.marginal_prob(&c);
            if p_c > 0.0 {
                let mut conditioning = intervention.clone();
                conditioning.extend(c.clone());
                let cond = self.observational(target, &conditioning).map_err(|e| {
                    if matches!(e, ScmError::ZeroProbabilityEvidence) {
                        ScmError::BackdoorUndefined(format!("{c:?}"))
                    } else {
                        e
                    }
                })?;
                for (v, d) in cond.iter().zip(dist.iter_mut()) {
                    *d += p_c * v;
                }
            }
            // next stratum
            let mut k = adj_idx.len();
            loop {
                if k == 0 {
                    return Ok(dist);
                }
                k -= 1;
                stratum[k] += 1;
                if stratum[k] < self.variables[adj_idx[k]].domain {
                    break;
                }
                stratum[k] = 0;
            }
        }
    }

    fn marginal_prob(&self, assignment: &Assignment) -> f64 {
        let index = self.index();
        let idx: Vec<(usize, usize)> = assignment
            .iter()
            .map(|(name, &val)| (index[name.as_str()], val))
            .collect();
        let mut total = 0.0;
        self.enumerate_joint(|values, p| {
            if idx.iter().all(|&(vi, val)| values[vi] == val) {
                total += p;
            }
        });
        total
    }

    /// Check structural-equation form: every variable with parents is a
    /// deterministic function of them.
    fn check_structural(&self) -> Result<(), ScmError> {
        for v in &self.variables {
            if v.parents.is_empty() {
                continue;
            }
            for row in &v.cpt {
                if !row.iter().all(|&p| p == 0.0 || p == 1.0) {
                    return Err(ScmError::NotStructural(v.name.clone()));
                }
            }
        }
        Ok(())
    }

    /// Counterfactual P(target_{twiddle} | factual) via abduction (posterior
    /// over the exogenous roots given the factual assignment), action (graph
    /// surgery applying the twiddle), and prediction.
    pub fn counterfactual(
        &self,
        target: &str,
        factual: &Assignment,
        twiddle: &Assignment,
    ) -> Result<Vec<f64>, ScmError> {
        self.check_assignment(factual)?;
        self.check_assignment(twiddle)?;
        self.check_structural()?;
        let ti = self.var(target)?;
        let index = self.index();
        let order = self.topo_order()?;
        let roots: Vec<usize> = (0..self.variables.len())
            .filter(|&i| self.variables[i].parents.is_empty())
            .collect();
        let factual_idx: Vec<(usize, usize)> = factual
            .iter()
            .map(|(name, &val)| (index[name.as_str()], val))
            .collect();
        let twiddle_idx: BTreeMap<usize, usize> = twiddle
            .iter()
            .map(|(name, &val)| (index[name.as_str()], val))
            .collect();

        let mut dist = vec![0.0; self.variables[ti].domain];
        let mut total = 0.0;
        let mut noise: Vec<usize> = vec![0; roots.len()];
        loop {
            // weight of this exogenous configuration
            let mut weight = 1.0;
            for (k, &ri) in roots.iter().enumerate() {
                weight *= self.variables[ri].cpt[0][noise[k]];
            }
            if weight > 0.0 {
                // determine endogenous values in the factual world
                let mut values = vec![0usize; self.variables.len()];
                for (k, &ri) in roots.iter().enumerate() {
                    values[ri] = noise[k];
                }
                for &vi in &order {
                    if self.variables[vi].parents.is_empty() {
                        continue;
                    }
                    let row = self.cpt_row_index(vi, &values);
                    values[vi] = one_hot_value(&self.variables[vi].cpt[row]);
                }
                if factual_idx.iter().all(|&(vi, val)| values[vi] == val) {
                    total += weight;
                    // action: apply the twiddle, prediction: recompute downstream
                    let mut cf = values.clone();
                    for (&vi, &val) in &twiddle_idx {
                        cf[vi] = val;
                    }
                    for &vi in &order {
                        if self.variables[vi].parents.is_empty() || twiddle_idx.contains_key(&vi) {
                            continue;
                        }
                        let row = self.cpt_row_index(vi, &cf);
                        cf[vi] = one_hot_value(&self.variables[vi].cpt[row]);
                    }
                    dist[cf[ti]] += weight;
                }
            }
            // next noise configuration
            let mut k = roots.len();
            loop {
                if k == 0 {
                    if total == 0.0 {
                        return Err(ScmError::ZeroProbabilityFactual);
                    }
                    for d in &mut dist {
                        *d /= total;
                    }
                    return Ok(dist);
                }
                k -= 1;
                noise[k] += 1;
                if noise[k] < self.variables[roots[k]].domain {
                    break;
                }
                noise[k] = 0;
            }
        }
    }

    /// Variables with no outgoing edges.
    pub fn leaves(&self) -> BTreeSet<&str> {
        let mut has_child: BTreeSet<&str> = BTreeSet::new();
        for v in &self.variables {
            for p in &v.parents {
                has_child.insert(p.as_str());
            }
        }
        self.variables
            .iter()
            .map(|v| v.name.as_str())
            .filter(|n| !has_child.contains(n))
            .collect()
    }
}

fn one_hot_value(row: &[f64]) -> usize {
    row.iter()
        .position(|&p| p == 1.0)
        .expect("structural CPT row must be one-hot")
}

/// The binary fork T -> X, T -> Y with P(T=1)=0.5, P(X=1|T)=0.8/0.2,
/// P(Y=1|T)=0.9/0.1. Observing X=1 yields P(Y=1|X=1)=0.74 while
/// do(X=1) yields 0.5.
pub fn fork_fixture() -> DiscreteSCM {
    DiscreteSCM::new(vec![
        Variable {
            name: "T".into(),
            domain: 2,
            parents: vec![],
            cpt: vec![vec![0.5, 0.5]],
        },
        Variable {
            name: "X".into(),
            domain: 2,
            parents: vec!["T".into()],
            cpt: vec![vec![0.8, 0.2], vec![0.2, 0.8]],
        },
        Variable {
            name: "Y".into(),
            domain: 2,
            parents: vec!["T".into()],
            cpt: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        },
    ])
    .expect("fork fixture is valid")
}

/// Random small SCM for agreement tests: a DAG over `n_vars` variables with
/// domain sizes up to `max_domain` and CPT probabilities bounded away from 0.
pub fn random_scm<R: Rng>(rng: &mut R, n_vars: usize, max_domain: usize) -> DiscreteSCM {
    let mut variables = Vec::with_capacity(n_vars);
    for i in 0..n_vars {
        let name = format!("V{i}");
        let domain = rng.gen_range(2..=max_domain.max(2));
        // parents only among earlier variables keeps the graph acyclic
        let parents: Vec<String> = (0..i)
            .filter(|_| rng.gen_bool(0.5))
            .map(|j| format!("V{j}"))
            .collect();
        let mut rows = 1usize;
        for p in &parents {
            let pd = variables
                .iter()
                .find(|v: &&Variable| &v.name == p)
                .unwrap()
                .domain;
            rows *= pd;
        }
        let cpt = (0..rows)
            .map(|_| {
                let raw: Vec<f64> = (0..domain).map(|_| rng.gen_range(0.05..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|p| p / sum).collect()
            })
            .collect();
        variables.push(Variable {
            name,
            domain,
            parents,
            cpt,
        });
    }
    DiscreteSCM::new(variables).expect("random SCM is valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assign(pairs: &[(&str, usize)]) -> Assignment {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn fork_observational_is_confounded() {
        let scm = fork_fixture();
        let dist = scm.observational("Y", &assign(&[("X", 1)])).unwrap();
        assert!((dist[1] - 0.74).abs() < 1e-12);
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fork_interventional_removes_confounding() {
        let scm = fork_fixture();
        let surgery = scm.interventional("Y", &assign(&[("X", 1)])).unwrap();
        assert!((surgery[1] - 0.5).abs() < 1e-12);
        let backdoor = scm
            .backdoor_interventional("Y", &assign(&[("X", 1)]), &["T".to_string()])
            .unwrap();
        assert!((backdoor[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn independent_target_matches_marginal() {
        // Y has no connection to X at all.
        let scm = DiscreteSCM::new(vec![
            Variable {
                name: "X".into(),
                domain: 2,
                parents: vec![],
                cpt: vec![vec![0.3, 0.7]],
            },
            Variable {
                name: "Y".into(),
                domain: 2,
                parents: vec![],
                cpt: vec![vec![0.6, 0.4]],
            },
        ])
        .unwrap();
        let marginal = scm.observational("Y", &Assignment::new()).unwrap();
        for x in 0..2 {
            let cond = scm.observational("Y", &assign(&[("X", x)])).unwrap();
            for (a, b) in cond.iter().zip(marginal.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_chain() {
        let scm = DiscreteSCM::new(vec![
            Variable {
                name: "X".into(),
                domain: 2,
                parents: vec![],
                cpt: vec![vec![0.5, 0.5]],
            },
            Variable {
                name: "Y".into(),
                domain: 2,
                parents: vec!["X".into()],
                cpt: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
        ])
        .unwrap();
        let dist = scm.observational("Y", &assign(&[("X", 1)])).unwrap();
        assert_eq!(dist[1], 1.0);
    }

    #[test]
    fn parentless_do_equals_conditioning() {
        let scm = fork_fixture();
        // T has no parents, so do(T=t) = conditioning on T=t.
        for t in 0..2 {
            let obs = scm.observational("Y", &assign(&[("T", t)])).unwrap();
            let int = scm.interventional("Y", &assign(&[("T", t)])).unwrap();
            for (a, b) in obs.iter().zip(int.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn do_on_childless_variable_leaves_target_unchanged() {
        let scm = fork_fixture();
        let base = scm.observational("X", &Assignment::new()).unwrap();
        let after = scm.interventional("X", &assign(&[("Y", 1)])).unwrap();
        for (a, b) in base.iter().zip(after.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_probability_evidence_errors() {
        let scm = DiscreteSCM::new(vec![
            Variable {
                name: "X".into(),
                domain: 2,
                parents: vec![],
                cpt: vec![vec![1.0, 0.0]],
            },
            Variable {
                name: "Y".into(),
                domain: 2,
                parents: vec!["X".into()],
                cpt: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            },
        ])
        .unwrap();
        let err = scm.observational("Y", &assign(&[("X", 1)])).unwrap_err();
        assert!(matches!(err, ScmError::ZeroProbabilityEvidence));
    }

    fn noisy_fork() -> DiscreteSCM {
        // structural form of a fork: T root, X = f(T, Ux), Y = g(T, Uy)
        DiscreteSCM::new(vec![
            Variable {
                name: "T".into(),
                domain: 2,
                parents: vec![],
                cpt: vec![vec![0.5, 0.5]],
            },
            Variable {
                name: "Ux".into(),
                domain: 2,
                parents: vec![],
                cpt: vec![vec![0.8, 0.2]],
            },
            Variable {
                name: "Uy".into(),
                domain: 2,
                parents: vec![],
                cpt: vec![vec![0.9, 0.1]],
            },
            // X = T xor Ux
            Variable {
                name: "X".into(),
                domain: 2,
                parents: vec!["T".into(), "Ux".into()],
                cpt: vec![
                    vec![1.0, 0.0],
                    vec![0.0, 1.0],
                    vec![0.0, 1.0],
                    vec![1.0, 0.0],
                ],
            },
            // Y = T xor Uy
            Variable {
                name: "Y".into(),
                domain: 2,
                parents: vec!["T".into(), "Uy".into()],
                cpt: vec![
                    vec![1.0, 0.0],
                    vec![0.0, 1.0],
                    vec![0.0, 1.0],
                    vec![1.0, 0.0],
                ],
            },
        ])
        .unwrap()
    }

    #[test]
    fn counterfactual_identity_intervention() {
        let scm = noisy_fork();
        let factual = assign(&[("X", 1), ("Y", 1)]);
        // abduction-only posterior of Y given the factual
        let posterior = scm.observational("Y", &factual).unwrap();
        let cf = scm.counterfactual("Y", &factual, &assign(&[("X", 1)])).unwrap();
        for (a, b) in cf.iter().zip(posterior.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn counterfactual_deterministic_chain() {
        // X root, Y = X. Factual X=1,Y=1; twiddle X=0 -> Y must be 0.
        let scm = DiscreteSCM::new(vec![
            Variable {
                name: "X".into(),
                domain: 2,
                parents: vec![],
                cpt: vec![vec![0.5, 0.5]],
            },
            Variable {
                name: "Y".into(),
                domain: 2,
                parents: vec!["X".into()],
                cpt: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
        ])
        .unwrap();
        let cf = scm
            .counterfactual("Y", &assign(&[("X", 1), ("Y", 1)]), &assign(&[("X", 0)]))
            .unwrap();
        assert_eq!(cf, vec![1.0, 0.0]);
    }

    #[test]
    fn counterfactual_matches_noise_enumeration() {
        // independent oracle: brute force over all noise configurations
        let scm = noisy_fork();
        let factual = assign(&[("X", 1)]);
        let twiddle = assign(&[("X", 0)]);
        let cf = scm.counterfactual("Y", &factual, &twiddle).unwrap();

        // oracle: enumerate (T, Ux, Uy); keep worlds with X = T xor Ux = 1;
        // in those worlds Y_cf = T xor Uy (X's value is irrelevant to Y).
        let p = [0.5, 0.8, 0.9]; // P(T=0), P(Ux=0), P(Uy=0)
        let mut dist = [0.0f64; 2];
        let mut total = 0.0;
        for t in 0..2 {
            for ux in 0..2 {
                for uy in 0..2 {
                    let w = (if t == 0 { p[0] } else { 1.0 - p[0] })
                        * (if ux == 0 { p[1] } else { 1.0 - p[1] })
                        * (if uy == 0 { p[2] } else { 1.0 - p[2] });
                    if t ^ ux == 1 {
                        total += w;
                        dist[t ^ uy] += w;
                    }
                }
            }
        }
        for d in &mut dist {
            *d /= total;
        }
        for (a, b) in cf.iter().zip(dist.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn counterfactual_rejects_stochastic_mechanisms() {
        let scm = fork_fixture();
        let err = scm
            .counterfactual("Y", &assign(&[("X", 1)]), &assign(&[("X", 0)]))
            .unwrap_err();
        assert!(matches!(err, ScmError::NotStructural(_)));
    }

    #[test]
    fn surgery_and_backdoor_agree_on_random_scms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        for _ in 0..60 {
            let n = rng.gen_range(2..=5);
            let scm = random_scm(&mut rng, n, 3);
            let xi = rng.gen_range(0..n);
            let x = scm.variables[xi].name.clone();
            let parents = scm.variables[xi].parents.clone();
            // any target that is not X and not one of X's parents
            let Some(target) = scm
                .variables
                .iter()
                .map(|v| v.name.clone())
                .find(|name| *name != x && !parents.contains(name))
            else {
                continue;
            };
            let value = rng.gen_range(0..scm.variables[xi].domain);
            let intervention = Assignment::from([(x.clone(), value)]);
            let surgery = scm.interventional(&target, &intervention).unwrap();
            // the parent set of X always blocks every backdoor path
            let backdoor = scm
                .backdoor_interventional(&target, &intervention, &parents)
                .unwrap();
            for (a, b) in surgery.iter().zip(backdoor.iter()) {
                assert!((a - b).abs() < 1e-10, "mismatch {a} vs {b}");
            }
            assert!((surgery.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            checked += 1;
        }
        assert!(checked >= 50);
    }

    #[test]
    fn cpt_row_sum_is_checked() {
        let err = DiscreteSCM::new(vec![Variable {
            name: "X".into(),
            domain: 2,
            parents: vec![],
            cpt: vec![vec![0.5, 0.6]],
        }])
        .unwrap_err();
        assert!(matches!(err, ScmError::BadCpt { .. }));
    }

    #[test]
    fn cycles_are_rejected() {
        let err = DiscreteSCM::new(vec![
            Variable {
                name: "A".into(),
                domain: 2,
                parents: vec!["B".into()],
                cpt: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
            Variable {
                name: "B".into(),
                domain: 2,
                parents: vec!["A".into()],
                cpt: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
        ])
        .unwrap_err();
        assert!(matches!(err, ScmError::Cyclic(_)));
    }

    #[test]
    fn json_round_trip() {
        let scm = fork_fixture();
        let json = serde_json::to_string(&scm).unwrap();
        let back = DiscreteSCM::from_json_reader(std::io::Cursor::new(json)).unwrap();
        assert_eq!(back, scm);
    }
}
