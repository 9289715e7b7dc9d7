//! Surveys: institutions declare a schema and its statistics; respondents
//! submit shared answers; approved statistics are computed by MPC.

use std::collections::BTreeMap;

use rand::Rng;
use trustworthy_core::{Field, MpcError};
use trustworthy_node::node::services::survey_record_id;
use trustworthy_node::proto::{AnswerShares, PublishedStat, SurveyCompute, SurveyCreate, SurveyDef, SurveyInfo, SurveyRef, SurveyRespond};
use trustworthy_node::wire::Kind;

use crate::{all_ok, at_least, majority, Client, Result, ServiceError, N};

/// Sharing threshold of survey answers.
pub const ANSWER_THRESHOLD: usize = 3;

fn schema_error(e: MpcError) -> ServiceError {
    match e {
        MpcError::Math(m) => ServiceError::Math(m),
        e => ServiceError::SchemaMismatch(e.to_string()),
    }
}

/// Encodes `answers` and splits them into one request per node.
pub fn response_bodies<R: Rng + ?Sized>(
    field: Field,
    def: &SurveyDef,
    answers: &[u64],
    submission: &str,
    rng: &mut R,
) -> Result<BTreeMap<u32, SurveyRespond>> {
    let policy = Some(survey_record_id(&def.survey_id));
    let values = def
        .schema
        .encode_answers(field, answers, ANSWER_THRESHOLD, N, policy, rng)
        .map_err(schema_error)?;
    Ok((1..=N as u32)
        .map(|i| {
            let answers = values
                .iter()
                .map(|v| {
                    let s = v.node_shares(i);
                    AnswerShares {
                        int: s.int.map(|x| x.to_string()),
                        bits: s.bits.iter().map(ToString::to_string).collect(),
                    }
                })
                .collect();
            let body = SurveyRespond {
                survey_id: def.survey_id.clone(),
                submission: submission.to_owned(),
                answers,
            };
            (i, body)
        })
        .collect())
}

impl Client<'_> {
    /// Declares a survey. `proposal` is an approved COMPUTE on `survey:<id>`.
    pub fn survey_create(&mut self, survey: &SurveyDef, proposal: &str) -> Result<()> {
        let req = SurveyCreate {
            survey: survey.clone(),
            proposal: proposal.to_owned(),
        };
        all_ok::<serde_json::Value>(self.broadcast(Kind::SurveyCreate, |_| req.clone()))?;
        Ok(())
    }

    /// The survey as a majority of nodes report it.
    pub fn survey_result(&mut self, survey_id: &str) -> Result<SurveyInfo> {
        let req = SurveyRef {
            survey_id: survey_id.to_owned(),
        };
        let replies: BTreeMap<u32, SurveyInfo> = at_least(self.broadcast(Kind::SurveyResult, |_| req.clone()), crate::MAJORITY)?;
        majority(replies.into_values()).ok_or(ServiceError::Disagreement)
    }

    /// Submits one response. Each node receives only its shares.
    pub fn survey_respond(&mut self, survey_id: &str, answers: &[u64]) -> Result<()> {
        let def = self.survey_result(survey_id)?.survey;
        let field = self.field();
        let submission = self.random_id();
        let mut bodies = response_bodies(field, &def, answers, &submission, self.rng())?;
        let replies = self.broadcast(Kind::SurveyRespond, |i| bodies.remove(&i).expect("one body per node"));
        all_ok::<serde_json::Value>(replies)?;
        Ok(())
    }

    /// Runs an approved statistic; every node must publish the same value.
    pub fn survey_compute(&mut self, survey_id: &str, query_id: &str, proposal: &str) -> Result<PublishedStat> {
        let req = SurveyCompute {
            survey_id: survey_id.to_owned(),
            query_id: query_id.to_owned(),
            proposal: proposal.to_owned(),
        };
        let replies: BTreeMap<u32, PublishedStat> = all_ok(self.broadcast(Kind::SurveyCompute, |_| req.clone()))?;
        let mut it = replies.into_values();
        let first = it.next().ok_or(ServiceError::Disagreement)?;
        if it.any(|s| s != first) {
            return Err(ServiceError::Disagreement);
        }
        Ok(first)
    }
}
