//! The on-disk instance format and report files.
//!
//! Instances travel as JSON documents with explicit dimensions and dense
//! row-major matrices:
//! `{n, m, r, l, a, b, c, A, B, C, D, d_rhs, X:{lb, ub, integer_flags,
//! constraints}, meta:{name, seed, family}}`. Loading cross-checks the
//! declared dimensions against every array and runs full instance
//! validation, so a loaded instance is usable as-is.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::driver::RunReport;
use crate::error::{Error, Result};
use crate::linalg::DMat;
use crate::model::{
    FirstStageSet, InstanceMeta, LinearConstraint, TwoStageInstance, UncertaintyPolytope,
};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct XBlock {
    lb: Vec<f64>,
    ub: Vec<f64>,
    integer_flags: Vec<bool>,
    #[serde(default)]
    constraints: Vec<LinearConstraint>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaBlock {
    name: String,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    family: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    n: usize,
    m: usize,
    r: usize,
    l: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    #[serde(rename = "A")]
    a_mat: DMat,
    #[serde(rename = "B")]
    b_mat: DMat,
    #[serde(rename = "C")]
    c_mat: DMat,
    #[serde(rename = "D")]
    d_mat: DMat,
    d_rhs: Vec<f64>,
    #[serde(rename = "X")]
    x: XBlock,
    meta: MetaBlock,
}

impl InstanceFile {
    fn from_instance(inst: &TwoStageInstance) -> Self {
        InstanceFile {
            n: inst.n(),
            m: inst.m(),
            r: inst.r(),
            l: inst.l(),
            a: inst.a.clone(),
            b: inst.b.clone(),
            c: inst.c.clone(),
            a_mat: inst.a_mat.clone(),
            b_mat: inst.b_mat.clone(),
            c_mat: inst.c_mat.clone(),
            d_mat: inst.u_set.d_mat.clone(),
            d_rhs: inst.u_set.rhs.clone(),
            x: XBlock {
                lb: inst.x_set.lb.clone(),
                ub: inst.x_set.ub.clone(),
                integer_flags: inst.x_set.integer.clone(),
                constraints: inst.x_set.constraints.clone(),
            },
            meta: MetaBlock {
                name: inst.meta.name.clone(),
                seed: inst.meta.seed,
                family: inst.meta.family.clone(),
            },
        }
    }

    fn into_instance(self, tol: &Tolerances) -> Result<TwoStageInstance> {
        let mut bad = Vec::new();
        let check = |bad: &mut Vec<String>, what: &str, got: usize, want: usize| {
            if got != want {
                bad.push(format!("{what}: declared {want}, found {got}"));
            }
        };
        check(&mut bad, "a length vs n", self.a.len(), self.n);
        check(&mut bad, "b length vs m", self.b.len(), self.m);
        check(&mut bad, "c length vs r", self.c.len(), self.r);
        check(&mut bad, "A rows vs r", self.a_mat.rows, self.r);
        check(&mut bad, "A cols vs n", self.a_mat.cols, self.n);
        check(&mut bad, "B rows vs r", self.b_mat.rows, self.r);
        check(&mut bad, "B cols vs m", self.b_mat.cols, self.m);
        check(&mut bad, "C rows vs r", self.c_mat.rows, self.r);
        check(&mut bad, "C cols vs l", self.c_mat.cols, self.l);
        check(&mut bad, "D cols vs l", self.d_mat.cols, self.l);
        check(&mut bad, "d_rhs length vs D rows", self.d_rhs.len(), self.d_mat.rows);
        check(&mut bad, "X.lb length vs n", self.x.lb.len(), self.n);
        check(&mut bad, "X.ub length vs n", self.x.ub.len(), self.n);
        check(&mut bad, "X.integer_flags length vs n", self.x.integer_flags.len(), self.n);
        if !bad.is_empty() {
            return Err(Error::InvalidInstance(bad));
        }
        let inst = TwoStageInstance {
            meta: InstanceMeta {
                name: self.meta.name,
                seed: self.meta.seed,
                family: self.meta.family,
            },
            a: self.a,
            b: self.b,
            c: self.c,
            a_mat: self.a_mat,
            b_mat: self.b_mat,
            c_mat: self.c_mat,
            x_set: FirstStageSet {
                lb: self.x.lb,
                ub: self.x.ub,
                integer: self.x.integer_flags,
                constraints: self.x.constraints,
            },
            u_set: UncertaintyPolytope { d_mat: self.d_mat, rhs: self.d_rhs },
        };
        inst.validated(tol)?;
        Ok(inst)
    }
}

pub fn instance_to_json(inst: &TwoStageInstance) -> Result<String> {
    Ok(serde_json::to_string_pretty(&InstanceFile::from_instance(inst))?)
}

pub fn instance_from_json(text: &str, tol: &Tolerances) -> Result<TwoStageInstance> {
    let file: InstanceFile = serde_json::from_str(text)?;
    file.into_instance(tol)
}

pub fn save_instance(inst: &TwoStageInstance, path: &Path) -> Result<()> {
    std::fs::write(path, instance_to_json(inst)? + "\n")?;
    Ok(())
}

pub fn load_instance(path: &Path, tol: &Tolerances) -> Result<TwoStageInstance> {
    instance_from_json(&std::fs::read_to_string(path)?, tol)
}

pub fn save_report(report: &RunReport, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{capcover, loctran, lotsizing, LoctranParams};
    use crate::model::fixtures::tiny2;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        for inst in [
            loctran(2, 2, 5, &LoctranParams::default()).unwrap(),
            lotsizing(3, 5, 20.0).unwrap(),
            capcover(2, 5).unwrap(),
            tiny2(),
        ] {
            let path = dir.path().join(format!("{}.json", inst.meta.name));
            save_instance(&inst, &path).unwrap();
            let back = load_instance(&path, &tol()).unwrap();
            assert_eq!(inst.meta, back.meta);
            assert_eq!(inst.a, back.a);
            assert_eq!(inst.b, back.b);
            assert_eq!(inst.c, back.c);
            assert_eq!(inst.a_mat, back.a_mat);
            assert_eq!(inst.b_mat, back.b_mat);
            assert_eq!(inst.c_mat, back.c_mat);
            assert_eq!(inst.x_set, back.x_set);
            assert_eq!(inst.u_set, back.u_set);
            // Bit-identity also at the byte level across a second hop.
            let again = dir.path().join("again.json");
            save_instance(&back, &again).unwrap();
            assert_eq!(
                std::fs::read_to_string(&path).unwrap(),
                std::fs::read_to_string(&again).unwrap()
            );
        }
    }

    #[test]
    fn load_rejects_dimension_lies() {
        let inst = tiny2();
        let mut text = instance_to_json(&inst).unwrap();
        text = text.replacen("\"n\": 1", "\"n\": 2", 1);
        let err = instance_from_json(&text, &tol()).unwrap_err();
        assert!(matches!(err, Error::InvalidInstance(_)), "{err}");
    }

    #[test]
    fn load_rejects_unknown_fields() {
        let inst = tiny2();
        let text = instance_to_json(&inst).unwrap();
        let spiked = text.replacen("\"n\":", "\"bogus\": 7,\n  \"n\":", 1);
        assert!(matches!(instance_from_json(&spiked, &tol()), Err(Error::Json(_))));
    }

    #[test]
    fn load_rejects_non_finite_numbers() {
        // Standard JSON cannot carry NaN/Inf; serde_json refuses the token.
        let inst = tiny2();
        let text = instance_to_json(&inst).unwrap();
        let spiked = text.replacen("0.5", "NaN", 1);
        assert!(instance_from_json(&spiked, &tol()).is_err());
    }

    #[test]
    fn handwritten_document_loads() {
        let text = r#"{
            "n": 1, "m": 1, "r": 1, "l": 1,
            "a": [1.0], "b": [1.0], "c": [1.0],
            "A": [[1.0]], "B": [[1.0]], "C": [[1.0]],
            "D": [[1.0]], "d_rhs": [1.0],
            "X": {"lb": [0.0], "ub": [2.0], "integer_flags": [false]},
            "meta": {"name": "box"}
        }"#;
        let inst = instance_from_json(text, &tol()).unwrap();
        assert_eq!(inst.meta.name, "box");
        assert_eq!(inst.n(), 1);
        assert!(inst.x_set.constraints.is_empty());
    }
}
