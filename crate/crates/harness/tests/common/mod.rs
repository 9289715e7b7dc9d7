#![allow(dead_code)]

use trustworthy_core::mpc::survey::{AttrType, Literal, Predicate, StatQuery, SurveySchema};
use trustworthy_core::policy::Action;
use trustworthy_harness::SimDeployment;
use trustworthy_node::proto::SurveyDef;

pub fn health_schema() -> SurveySchema {
    serde_json::from_str(
        r#"{"attributes":[
            {"name":"female","type":"bool"},
            {"name":"age","type":"uint","width":8},
            {"name":"diabetes","type":"bool"},
            {"name":"coeliac","type":"bool"}]}"#,
    )
    .unwrap()
}

pub fn example_query() -> StatQuery {
    StatQuery {
        query_id: "q1".into(),
        predicate: Predicate::new(vec![
            Literal::Is { attr: "female".into(), value: true },
            Literal::Range { attr: "age".into(), min: Some(32), max: Some(40) },
            Literal::Is { attr: "diabetes".into(), value: true },
            Literal::Is { attr: "coeliac".into(), value: true },
        ]),
        percentage_of: Some(Predicate::new(vec![Literal::Is { attr: "female".into(), value: true }])),
    }
}

pub const EXAMPLE_RECORDS: [[u64; 4]; 4] = [[1, 35, 1, 1], [1, 50, 1, 1], [0, 35, 1, 1], [1, 33, 0, 1]];

/// Declares survey `id` with the example query through institution 1.
pub fn declare(dep: &mut SimDeployment, id: &str, min_respondents: usize) -> SurveyDef {
    let def = SurveyDef {
        survey_id: id.into(),
        schema: health_schema(),
        threshold: 3,
        min_respondents,
        queries: vec![example_query()],
    };
    let pid = dep
        .approve(dep.institution(1), Action::Compute, &format!("survey:{id}"), None, &[1, 2, 3])
        .unwrap();
    dep.client(dep.institution(1), |c| c.survey_create(&def, &pid)).unwrap();
    def
}

/// Plaintext evaluation of a conjunction on one record.
pub fn holds(schema: &SurveySchema, p: &Predicate, record: &[u64]) -> bool {
    p.all.iter().all(|lit| match lit {
        Literal::Is { attr, value } => {
            let i = schema.attributes.iter().position(|a| &a.name == attr).unwrap();
            (record[i] == 1) == *value
        }
        Literal::Range { attr, min, max } => {
            let i = schema.attributes.iter().position(|a| &a.name == attr).unwrap();
            assert!(matches!(schema.attributes[i].ty, AttrType::Uint { .. }));
            min.is_none_or(|m| record[i] >= m) && max.is_none_or(|m| record[i] <= m)
        }
    })
}

/// (numerator, denominator) computed in the clear.
pub fn oracle(schema: &SurveySchema, q: &StatQuery, records: &[Vec<u64>]) -> (u64, Option<u64>) {
    let num = records.iter().filter(|r| holds(schema, &q.predicate, r)).count() as u64;
    let den = q
        .percentage_of
        .as_ref()
        .map(|d| records.iter().filter(|r| holds(schema, d, r)).count() as u64);
    (num, den)
}
