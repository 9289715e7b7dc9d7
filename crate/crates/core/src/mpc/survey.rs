//! Survey schemas, conjunctive predicates and their compilation to circuits.
//!
//! Numeric answers are held in both integer and bit form; booleans as a single
//! shared bit. A range `a ≤ x ≤ b` becomes `¬(x < a) ∧ (x < b + 1)`, dropping
//! bounds that are trivially satisfied, and a conjunction of `j` literals costs
//! `j − 1` multiplications.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::MpcError;
use crate::field::{Fe, Field};

use super::circuit::{Circuit, CircuitBuilder, CircuitStats, Direction, InputRef, MulKind, Wire};
use super::value::{max_width, NodeShares, Repr, SharedValue};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AttrType {
    Bool,
    Uint { width: u8 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(flatten)]
    pub ty: AttrType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveySchema {
    pub attributes: Vec<Attribute>,
}

impl SurveySchema {
    pub fn validate(&self, field: Field) -> Result<(), MpcError> {
        if self.attributes.is_empty() {
            return Err(MpcError::BadSchema("no attributes".into()));
        }
        let mut names = BTreeSet::new();
        for a in &self.attributes {
            if a.name.is_empty() || !names.insert(a.name.as_str()) {
                return Err(MpcError::BadSchema(format!("bad or duplicate name {:?}", a.name)));
            }
            if let AttrType::Uint { width } = a.ty {
                if width == 0 || width > max_width(field) {
                    return Err(MpcError::BadSchema(format!("width {width} of {:?}", a.name)));
                }
            }
        }
        Ok(())
    }

    pub fn position(&self, name: &str) -> Result<(usize, AttrType), MpcError> {
        self.attributes
            .iter()
            .enumerate()
            .find(|(_, a)| a.name == name)
            .map(|(i, a)| (i, a.ty))
            .ok_or_else(|| MpcError::UnknownAttribute(name.to_owned()))
    }

    /// Answers are positional, one per attribute.
    pub fn check_answers(&self, answers: &[u64]) -> Result<(), MpcError> {
        if answers.len() != self.attributes.len() {
            return Err(MpcError::TypeMismatch(format!(
                "{} answers for {} attributes",
                answers.len(),
                self.attributes.len()
            )));
        }
        for (a, &v) in self.attributes.iter().zip(answers) {
            let ok = match a.ty {
                AttrType::Bool => v <= 1,
                AttrType::Uint { width } => v >> width == 0,
            };
            if !ok {
                return Err(MpcError::TypeMismatch(a.name.clone()));
            }
        }
        Ok(())
    }

    /// Client-side encoding: a shared bit per boolean, a Dual value per number.
    pub fn encode_answers<R: Rng + ?Sized>(
        &self,
        field: Field,
        answers: &[u64],
        k: usize,
        n: usize,
        policy: Option<String>,
        rng: &mut R,
    ) -> Result<Vec<SharedValue>, MpcError> {
        self.check_answers(answers)?;
        self.attributes
            .iter()
            .zip(answers)
            .map(|(a, &v)| match a.ty {
                AttrType::Bool => SharedValue::input(field, v, Repr::BitsOnly, 1, k, n, policy.clone(), rng),
                AttrType::Uint { width } => SharedValue::input(field, v, Repr::Dual, width, k, n, policy.clone(), rng),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Literal {
    /// Boolean attribute equals `value`.
    Is { attr: String, value: bool },
    /// Inclusive range on a numeric attribute.
    Range {
        attr: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<u64>,
    },
}

/// Conjunction of literals; empty means "every record".
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub all: Vec<Literal>,
}

impl Predicate {
    pub fn new(all: Vec<Literal>) -> Self {
        Self { all }
    }

    pub fn check(&self, schema: &SurveySchema) -> Result<(), MpcError> {
        for lit in &self.all {
            match lit {
                Literal::Is { attr, .. } => {
                    if schema.position(attr)?.1 != AttrType::Bool {
                        return Err(MpcError::TypeMismatch(attr.clone()));
                    }
                }
                Literal::Range { attr, .. } => {
                    if schema.position(attr)?.1 == AttrType::Bool {
                        return Err(MpcError::TypeMismatch(attr.clone()));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatQuery {
    pub query_id: String,
    pub predicate: Predicate,
    /// When present the statistic is `count(predicate) / count(percentage_of)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub percentage_of: Option<Predicate>,
}

impl StatQuery {
    pub fn check(&self, schema: &SurveySchema) -> Result<(), MpcError> {
        self.predicate.check(schema)?;
        if let Some(d) = &self.percentage_of {
            d.check(schema)?;
        }
        Ok(())
    }
}

/// Wires of one record's answers.
#[derive(Clone, Debug)]
pub struct AttrWires {
    pub int: Option<Wire>,
    pub bits: Vec<Wire>,
}

pub fn answer_ref(record: usize, attr: usize, component: Option<usize>) -> InputRef {
    match component {
        None => InputRef::new(format!("r{record}.a{attr}.int")),
        Some(i) => InputRef::new(format!("r{record}.a{attr}.b{i}")),
    }
}

/// Binds one record's input wires in `builder`.
pub fn bind_record(builder: &mut CircuitBuilder, schema: &SurveySchema, record: usize) -> Vec<AttrWires> {
    schema
        .attributes
        .iter()
        .enumerate()
        .map(|(a, attr)| match attr.ty {
            AttrType::Bool => AttrWires {
                int: None,
                bits: vec![builder.input(answer_ref(record, a, Some(0)))],
            },
            AttrType::Uint { width } => AttrWires {
                int: Some(builder.input(answer_ref(record, a, None))),
                bits: (0..width as usize)
                    .map(|i| builder.input(answer_ref(record, a, Some(i))))
                    .collect(),
            },
        })
        .collect()
}

/// Party-local input map entries for one stored record.
pub fn record_inputs(record: usize, shares: &[NodeShares]) -> Vec<(InputRef, Fe)> {
    let mut out = Vec::new();
    for (a, s) in shares.iter().enumerate() {
        if let Some(int) = s.int {
            out.push((answer_ref(record, a, None), int));
        }
        for (i, &b) in s.bits.iter().enumerate() {
            out.push((answer_ref(record, a, Some(i)), b));
        }
    }
    out
}

/// Emits the indicator bit of `predicate` for one record.
pub fn emit_predicate(
    builder: &mut CircuitBuilder,
    schema: &SurveySchema,
    predicate: &Predicate,
    record: &[AttrWires],
) -> Result<Wire, MpcError> {
    predicate.check(schema)?;
    let mut literals = Vec::new();
    for lit in &predicate.all {
        match lit {
            Literal::Is { attr, value } => {
                let (pos, _) = schema.position(attr)?;
                let b = record[pos].bits[0];
                literals.push(if *value { b } else { builder.not(b) });
            }
            Literal::Range { attr, min, max } => {
                let (pos, ty) = schema.position(attr)?;
                let AttrType::Uint { width } = ty else {
                    return Err(MpcError::TypeMismatch(attr.clone()));
                };
                let top = (1u64 << width) - 1;
                let bits = record[pos].bits.clone();
                if let Some(lo) = min.filter(|&lo| lo > 0) {
                    literals.push(if lo > top {
                        builder.constant(0)
                    } else {
                        let below = builder.compare_public(&bits, lo, Direction::Less)?;
                        builder.not(below)
                    });
                }
                if let Some(hi) = max.filter(|&hi| hi < top) {
                    literals.push(builder.compare_public(&bits, hi + 1, Direction::Less)?);
                }
            }
        }
    }
    Ok(builder.and_all(&literals, MulKind::TopLevel))
}

/// Stand-alone compilation of a predicate over one record. The indicator is
/// exported as `indicator`.
pub fn compile_predicate(field: Field, schema: &SurveySchema, predicate: &Predicate) -> Result<(Circuit, CircuitStats), MpcError> {
    let mut builder = CircuitBuilder::new(field);
    let record = bind_record(&mut builder, schema, 0);
    let w = emit_predicate(&mut builder, schema, predicate, &record)?;
    builder.export("indicator", w);
    let circuit = builder.finish();
    let stats = circuit.stats;
    Ok((circuit, stats))
}

pub const NUMERATOR: &str = "numerator";
pub const DENOMINATOR: &str = "denominator";

#[derive(Clone, Debug)]
pub struct QueryCircuit {
    pub circuit: Circuit,
    /// Cost of the query predicate for a single record.
    pub per_record: CircuitStats,
}

/// Sums per-record indicators locally and opens the aggregate count(s).
pub fn build_query_circuit(
    field: Field,
    schema: &SurveySchema,
    query: &StatQuery,
    records: usize,
) -> Result<QueryCircuit, MpcError> {
    query.check(schema)?;
    let (_, per_record) = compile_predicate(field, schema, &query.predicate)?;
    let mut builder = CircuitBuilder::new(field);
    let mut num = builder.constant(0);
    let mut den = builder.constant(0);
    for r in 0..records {
        let wires = bind_record(&mut builder, schema, r);
        let ind = emit_predicate(&mut builder, schema, &query.predicate, &wires)?;
        num = builder.add(num, ind);
        if let Some(d) = &query.percentage_of {
            let dind = emit_predicate(&mut builder, schema, d, &wires)?;
            den = builder.add(den, dind);
        }
    }
    builder.open(NUMERATOR, num);
    if query.percentage_of.is_some() {
        builder.open(DENOMINATOR, den);
    }
    Ok(QueryCircuit {
        circuit: builder.finish(),
        per_record,
    })
}

/// Validation run when a response arrives: the Dual consistency opening for
/// each number and a booleanity test for every bit. Accept iff all opened
/// values are zero.
pub fn build_response_check(field: Field, schema: &SurveySchema) -> Circuit {
    let mut builder = CircuitBuilder::new(field);
    let wires = bind_record(&mut builder, schema, 0);
    for (a, w) in wires.iter().enumerate() {
        builder.consistency_gadget(&format!("a{a}"), w.int, &w.bits);
    }
    builder.finish()
}

/// Two-decimal fixed-point percentage.
pub fn percentage(numerator: u64, denominator: u64) -> Option<String> {
    if denominator == 0 {
        return None;
    }
    let scaled = (numerator as u128 * 100_000 / denominator as u128 + 5) / 10;
    Some(format!("{}.{:02}", scaled / 100, scaled % 100))
}
