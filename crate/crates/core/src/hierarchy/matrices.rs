use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassCounts, LabelTree};
use crate::error::{HkgError, Result};
use crate::matrix::Matrix;

pub const DEFAULT_TAU: f64 = 0.3;
pub const DEFAULT_ETA: f64 = 0.4;
pub const DEFAULT_SMOOTHING: f64 = 1e-6;

/// Correlation-matrix hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    /// Binarization threshold, in `(0, 1]`.
    pub tau: f64,
    /// Neighbour weight, in `[0, 1]`.
    pub eta: f64,
    /// Row-sum smoothing, `>= 0`.
    pub smoothing: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            tau: DEFAULT_TAU,
            eta: DEFAULT_ETA,
            smoothing: DEFAULT_SMOOTHING,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        validate_tau(self.tau)?;
        validate_eta(self.eta)?;
        validate_smoothing(self.smoothing)
    }
}

fn validate_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(HkgError::Parameter(format!(
            "tau must lie in (0, 1], got {tau}"
        )));
    }
    Ok(())
}

fn validate_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(HkgError::Parameter(format!(
            "eta must lie in [0, 1], got {eta}"
        )));
    }
    Ok(())
}

fn validate_smoothing(c: f64) -> Result<()> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(HkgError::Parameter(format!(
            "smoothing must be finite and >= 0, got {c}"
        )));
    }
    Ok(())
}

/// Statistical correlation matrix: `A_ij = S_i / (S_i + S_j)` off the
/// diagonal and `1` on it.
pub fn build_scm(tree: &LabelTree, counts: &ClassCounts) -> Result<Matrix> {
    let s: Vec<f64> = tree
        .classes()
        .iter()
        .map(|&n| counts.get(n) as f64)
        .collect();
    let c = s.len();
    for i in 0..c {
        for j in 0..c {
            if i != j && s[i] + s[j] == 0.0 {
                return Err(HkgError::DegenerateCounts(format!(
                    "classes {:?} and {:?} both have zero count",
                    tree.name(tree.classes()[i]),
                    tree.name(tree.classes()[j])
                )));
            }
        }
    }
    Ok(Matrix::from_fn(c, c, |i, j| {
        if i == j {
            1.0
        } else {
            s[i] / (s[i] + s[j])
        }
    }))
}

/// Transition matrix: `1` on the diagonal, `0` between siblings, `1/A_ij` at
/// (child row, parent column), and `1` everywhere else.
pub fn build_transition(tree: &LabelTree, scm: &Matrix) -> Result<Matrix> {
    let classes = tree.classes();
    let c = classes.len();
    if scm.shape() != [c, c] {
        return Err(HkgError::shape("build_transition", &scm.shape(), &[c, c]));
    }
    let mut phi = Matrix::identity(c);
    for i in 0..c {
        for j in 0..c {
            if i == j {
                continue;
            }
            let (u, v) = (classes[i], classes[j]);
            phi[(i, j)] = if tree.are_siblings(u, v) {
                0.0
            } else if tree.parent(u) == Some(v) {
                let a = scm[(i, j)];
                if a == 0.0 {
                    return Err(HkgError::Division(format!(
                        "SCM entry ({:?}, {:?}) on a child->parent edge is zero",
                        tree.name(u),
                        tree.name(v)
                    )));
                }
                1.0 / a
            } else {
                1.0
            };
        }
    }
    Ok(phi)
}

/// Hierarchical knowledge correlation matrix `A ⊙ Φ`, with child->parent
/// entries pinned to exactly 1 (the Hadamard product gives `A * (1/A)`).
pub fn build_hkcm(tree: &LabelTree, scm: &Matrix, phi: &Matrix) -> Result<Matrix> {
    let mut hkcm = scm.hadamard(phi)?;
    let classes = tree.classes();
    for (i, &u) in classes.iter().enumerate() {
        if let Some(p) = tree.parent(u) {
            if let Some(j) = tree.class_index(p) {
                hkcm[(i, j)] = 1.0;
            }
        }
    }
    Ok(hkcm)
}

/// `1` where the entry is `>= tau`, else `0`.
pub fn binarize(hkcm: &Matrix, tau: f64) -> Result<Matrix> {
    validate_tau(tau)?;
    Ok(Matrix {
        rows: hkcm.rows,
        cols: hkcm.cols,
        data: hkcm
            .data
            .iter()
            .map(|&v| if v >= tau { 1.0 } else { 0.0 })
            .collect(),
    })
}

/// Re-weighting: off-diagonal `eta * B_ij / (sum_j B_ij + c)` (the row sum
/// includes the diagonal), diagonal `1 - eta`.
pub fn reweight(bhkcm: &Matrix, eta: f64, smoothing: f64) -> Result<Matrix> {
    validate_eta(eta)?;
    validate_smoothing(smoothing)?;
    if bhkcm.rows != bhkcm.cols {
        return Err(HkgError::shape(
            "reweight",
            &bhkcm.shape(),
            &[bhkcm.rows, bhkcm.rows],
        ));
    }
    let n = bhkcm.rows;
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let denom = bhkcm.row(i).iter().sum::<f64>() + smoothing;
        if denom == 0.0 {
            return Err(HkgError::Division(format!(
                "row {i} of the binary matrix is empty and smoothing is 0"
            )));
        }
        for j in 0..n {
            out[(i, j)] = if i == j {
                1.0 - eta
            } else {
                eta * bhkcm[(i, j)] / denom
            };
        }
    }
    Ok(out)
}

/// All five correlation matrices, indexed by the tree's class order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPipeline {
    pub scm: Matrix,
    pub transition: Matrix,
    pub hkcm: Matrix,
    pub bhkcm: Matrix,
    pub rehkcm: Matrix,
    pub params: PipelineParams,
    pub node_order: Vec<String>,
}

/// Result of one structural check on a built pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl MatrixPipeline {
    pub fn build(tree: &LabelTree, counts: &ClassCounts, params: PipelineParams) -> Result<Self> {
        params.validate()?;
        let scm = build_scm(tree, counts)?;
        let transition = build_transition(tree, &scm)?;
        let hkcm = build_hkcm(tree, &scm, &transition)?;
        let bhkcm = binarize(&hkcm, params.tau)?;
        let rehkcm = reweight(&bhkcm, params.eta, params.smoothing)?;
        Ok(MatrixPipeline {
            scm,
            transition,
            hkcm,
            bhkcm,
            rehkcm,
            params,
            node_order: tree.class_names(),
        })
    }

    pub fn named(&self) -> [(&'static str, &Matrix); 5] {
        [
            ("scm", &self.scm),
            ("transition", &self.transition),
            ("hkcm", &self.hkcm),
            ("bhkcm", &self.bhkcm),
            ("rehkcm", &self.rehkcm),
        ]
    }

    /// Write `<name>.csv` for each matrix, with the class names as header row.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| HkgError::io(dir, e))?;
        for (name, m) in self.named() {
            let path = dir.join(format!("{name}.csv"));
            std::fs::write(&path, m.to_csv(Some(&self.node_order)))
                .map_err(|e| HkgError::io(&path, e))?;
        }
        Ok(())
    }

    pub fn check_invariants(&self, tree: &LabelTree) -> Vec<InvariantCheck> {
        let c = self.scm.rows;
        let classes = tree.classes();
        let mut checks = Vec::new();
        let mut push = |name, bad: Vec<String>| {
            checks.push(InvariantCheck {
                name,
                passed: bad.is_empty(),
                detail: if bad.is_empty() {
                    "ok".into()
                } else {
                    bad.join("; ")
                },
            })
        };

        let mut bad = Vec::new();
        for i in 0..c {
            if self.scm[(i, i)] != 1.0 {
                bad.push(format!("A[{i},{i}]={}", self.scm[(i, i)]));
            }
            for j in 0..c {
                let s = self.scm[(i, j)] + self.scm[(j, i)];
                if i != j && (s - 1.0).abs() > 1e-12 {
                    bad.push(format!("A[{i},{j}]+A[{j},{i}]={s}"));
                }
            }
        }
        push("scm_diagonal_and_complement", bad);

        let mut bad = Vec::new();
        for (i, &u) in classes.iter().enumerate() {
            for (j, &v) in classes.iter().enumerate() {
                let x = self.hkcm[(i, j)];
                if tree.parent(u) == Some(v) && x != 1.0 {
                    bad.push(format!("child->parent [{i},{j}]={x}"));
                }
                if tree.are_siblings(u, v) && x != 0.0 {
                    bad.push(format!("sibling [{i},{j}]={x}"));
                }
            }
        }
        push("hkcm_hierarchy_constraints", bad);

        let bad = self
            .bhkcm
            .data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0 && v != 1.0)
            .map(|(k, v)| format!("entry {k}={v}"))
            .collect();
        push("bhkcm_binary", bad);

        let mut bad = Vec::new();
        let eta = self.params.eta;
        for i in 0..c {
            if self.rehkcm[(i, i)] != 1.0 - eta {
                bad.push(format!("diag[{i}]={}", self.rehkcm[(i, i)]));
            }
            let off: f64 = (0..c)
                .filter(|&j| j != i)
                .map(|j| self.rehkcm[(i, j)])
                .sum();
            let row: f64 = self.bhkcm.row(i).iter().sum();
            let want = eta * (row - self.bhkcm[(i, i)]) / (row + self.params.smoothing);
            if (off - want).abs() > 1e-12 {
                bad.push(format!("row {i} off-diagonal sum {off} != {want}"));
            }
        }
        push("rehkcm_diagonal_and_row_sum", bad);
        checks
    }
}

#[cfg(test)]
mod tests {
    use super::super::{count_classes, tree::cavitation_tree, NodeSpec};
    use super::*;

    fn counts_by_name(tree: &LabelTree, pairs: &[(&str, u64)]) -> ClassCounts {
        let mut labels = Vec::new();
        for (name, n) in pairs {
            let id = tree.leaf_by_name(name).unwrap();
            labels.extend(std::iter::repeat_n(id, *n as usize));
        }
        count_classes(tree, &labels).unwrap()
    }

    #[test]
    fn scm_from_cavitation_counts() {
        let t = cavitation_tree();
        let counts = counts_by_name(
            &t,
            &[
                ("choked flow cavitation", 72),
                ("constant cavitation", 93),
                ("incipient cavitation", 40),
                ("non-cavitation", 151),
            ],
        );
        let a = build_scm(&t, &counts).unwrap();
        let cho = t
            .class_index(t.find("choked flow cavitation").unwrap())
            .unwrap();
        let con = t
            .class_index(t.find("constant cavitation").unwrap())
            .unwrap();
        assert!((a[(cho, con)] - 72.0 / 165.0).abs() < 1e-15);
        assert!((a[(cho, con)] - 0.43636).abs() < 1e-5);
        assert!((a[(con, cho)] - 0.56364).abs() < 1e-5);
        for i in 0..5 {
            assert_eq!(a[(i, i)], 1.0);
        }
    }

    #[test]
    fn equal_counts_give_one_half() {
        let t = cavitation_tree();
        let counts = counts_by_name(
            &t,
            &[
                ("choked flow cavitation", 3),
                ("constant cavitation", 3),
                ("incipient cavitation", 3),
                ("non-cavitation", 3),
            ],
        );
        let a = build_scm(&t, &counts).unwrap();
        assert_eq!(a[(2, 3)], 0.5);
        assert_eq!(a[(3, 2)], 0.5);
    }

    #[test]
    fn zero_pair_is_degenerate() {
        let t = cavitation_tree();
        let counts = count_classes(&t, &[]).unwrap();
        assert!(matches!(
            build_scm(&t, &counts),
            Err(HkgError::DegenerateCounts(_))
        ));
    }

    #[test]
    fn transition_reciprocal_and_sibling_zero() {
        let t = cavitation_tree();
        // Hand-built SCM: only the entries we inspect matter.
        let mut a = Matrix::from_fn(5, 5, |i, j| if i == j { 1.0 } else { 0.5 });
        let inc = t
            .class_index(t.find("incipient cavitation").unwrap())
            .unwrap();
        let cav = t.class_index(t.find("cavitation").unwrap()).unwrap();
        let non = t.class_index(t.find("non-cavitation").unwrap()).unwrap();
        a[(inc, cav)] = 0.4;
        let phi = build_transition(&t, &a).unwrap();
        assert_eq!(phi[(inc, cav)], 2.5);
        assert_eq!(phi[(cav, inc)], 1.0);
        assert_eq!(phi[(cav, non)], 0.0);
        assert_eq!(phi[(non, cav)], 0.0);
        assert_eq!(phi[(non, inc)], 1.0);
    }

    #[test]
    fn two_leaf_transition_is_identity() {
        let t = LabelTree::build(&[
            NodeSpec::new("r", None),
            NodeSpec::new("a", Some("r")),
            NodeSpec::new("b", Some("r")),
        ])
        .unwrap();
        let a = Matrix::from_vec(2, 2, vec![1.0, 0.3, 0.7, 1.0]).unwrap();
        assert_eq!(build_transition(&t, &a).unwrap(), Matrix::identity(2));
    }

    #[test]
    fn hkcm_entries() {
        let t = cavitation_tree();
        let counts = counts_by_name(
            &t,
            &[
                ("choked flow cavitation", 7),
                ("constant cavitation", 11),
                ("incipient cavitation", 3),
                ("non-cavitation", 13),
            ],
        );
        let p = MatrixPipeline::build(&t, &counts, PipelineParams::default()).unwrap();
        let [cav, non, inc, _con, _cho] = [0, 1, 2, 3, 4];
        assert_eq!(p.hkcm[(inc, cav)], 1.0);
        assert_eq!(p.hkcm[(cav, non)], 0.0);
        assert_eq!(p.hkcm[(non, inc)], p.scm[(non, inc)]);
        assert!(p.check_invariants(&t).iter().all(|c| c.passed));
    }

    #[test]
    fn binarize_rules() {
        let m = Matrix::from_vec(2, 2, vec![1.0, 0.25, 0.3, 1.0]).unwrap();
        let b = binarize(&m, 0.3).unwrap();
        assert_eq!(b.data, vec![1.0, 0.0, 1.0, 1.0]);
        assert!(binarize(&m, 0.0).is_err());
        assert!(binarize(&m, 1.5).is_err());
        assert_eq!(binarize(&m, 1.0).unwrap().data, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn reweight_arithmetic() {
        let ones = Matrix::from_vec(2, 2, vec![1.0; 4]).unwrap();
        let r = reweight(&ones, 0.4, 0.0).unwrap();
        assert!((r[(0, 1)] - 0.2).abs() < 1e-15);
        assert!((r[(0, 0)] - 0.6).abs() < 1e-15);
        assert_eq!(reweight(&ones, 0.0, 0.0).unwrap(), Matrix::identity(2));
        let r = reweight(&ones, 1.0, 0.5).unwrap();
        assert_eq!(r[(0, 0)], 0.0);
        assert!((r[(0, 1)] - 1.0 / 2.5).abs() < 1e-15);
    }

    #[test]
    fn reweight_empty_row() {
        let m = Matrix::from_vec(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(reweight(&m, 0.4, 0.0), Err(HkgError::Division(_))));
        let r = reweight(&m, 0.4, 1e-6).unwrap();
        assert_eq!(r[(0, 1)], 0.0);
    }

    #[test]
    fn csv_export_has_header() {
        let t = cavitation_tree();
        let counts = counts_by_name(
            &t,
            &[
                ("choked flow cavitation", 1),
                ("constant cavitation", 1),
                ("incipient cavitation", 1),
                ("non-cavitation", 1),
            ],
        );
        let p = MatrixPipeline::build(
            &t,
            &counts,
            PipelineParams {
                eta: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        p.write_csvs(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("rehkcm.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), t.class_names().join(","));
        assert_eq!(lines.next().unwrap(), "1,0,0,0,0");
    }
}
