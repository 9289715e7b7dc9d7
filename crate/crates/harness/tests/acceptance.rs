//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits non-zero when any criterion fails, except those listed in
//! [`UNATTAINABLE`], which still print FAIL.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use serde_json::json;
use trustworthy_core::mpc::survey::{build_query_circuit, record_inputs, Literal, Predicate, StatQuery, DENOMINATOR, NUMERATOR};
use trustworthy_core::mpc::{Authorization, Direction, LocalCluster, Operand, Repr, SharedValue};
use trustworthy_core::policy::{self, Action};
use trustworthy_core::shamir::{reconstruct, share, share_with_coeffs};
use trustworthy_core::{Field, RandomStream, Share, MERSENNE_61};
use trustworthy_harness::recovery::verify_recovery;
use trustworthy_harness::scenario::Schedule;
use trustworthy_harness::{privacy_check_exhaustive, run, AdversaryView, Gate, PrivacyVerdict, Scenario, SimDeployment, Variant};
use trustworthy_node::node::services::{email_record_id, note_blob_id};
use trustworthy_node::sim::Scheduler;
use trustworthy_node::store;
use trustworthy_services::ServiceError;

/// Criteria that cannot hold as literally stated; their FAIL line does not
/// change the exit status.
const UNATTAINABLE: &[&str] = &["mpc-soundness/add-mul p=5 n=5 k=3"];

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Debug>(e: E) -> String {
    format!("{e:?}")
}

struct Suite {
    failed: Vec<String>,
    passed: usize,
}

impl Suite {
    fn check(&mut self, name: &str, budget: Duration, f: impl FnOnce() -> Check) {
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let out = out.and_then(|d| {
            if took <= budget {
                Ok(d)
            } else {
                Err(format!("{d}; took {took:.2?}, budget {budget:?}"))
            }
        });
        match out {
            Ok(detail) => {
                self.passed += 1;
                println!("PASS {name}: {detail} [{took:.2?}]");
            }
            Err(why) => {
                self.failed.push(name.to_owned());
                println!("FAIL {name}: {why} [{took:.2?}]");
            }
        }
    }
}

fn open(v: &SharedValue) -> Result<u64, String> {
    let mut v = v.clone();
    v.policy_ref = None;
    let all: Vec<u32> = (1..=v.n() as u32).collect();
    v.open(&Authorization::PublicAggregate, &all).map(|x| x.value()).map_err(err)
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn deployment_constants() -> Check {
    ensure(trustworthy_core::INSTITUTIONS == 5, || "institutions".into())?;
    ensure(policy::MAJORITY == 3 && policy::UNANIMITY == 5, || "majority/unanimity".into())?;
    let mut dep = SimDeployment::new(101, Scheduler::Fifo).map_err(err)?;
    ensure(dep.plan.addresses.len() == 5 && dep.network().indices() == vec![1, 2, 3, 4, 5], || "node count".into())?;
    let owner = dep.add_user("locked").map_err(err)?;
    let id = dep.client(owner.credentials(), |c| c.note_create("unanimity-locked", 5)).map_err(err)?;

    let reveal = dep
        .approve(dep.institution(1), Action::Reveal, &id, None, &[1, 2, 3, 4])
        .map_err(err)?;
    let st = dep.client(dep.institution(1), |c| c.proposal_status(&reveal)).map_err(err)?;
    ensure(st.decision.is_none(), || format!("4 votes decided a reveal: {st:?}"))?;
    let read = dep.client(dep.institution(1), |c| c.note_read(&id, Some(&reveal)));
    ensure(matches!(read, Err(ServiceError::NotAuthorized(_))), || format!("reveal with 4 votes: {read:?}"))?;

    let discard = dep
        .approve(dep.institution(2), Action::Discard, &id, None, &[1, 2, 3])
        .map_err(err)?;
    let st = dep.client(dep.institution(2), |c| c.proposal_status(&discard)).map_err(err)?;
    ensure(st.decision.as_ref().is_some_and(|d| d.approved), || format!("3 votes did not discard: {st:?}"))?;
    for i in 1..=5 {
        ensure(dep.record(i, &id).is_none(), || format!("node {i} kept the share after discard"))?;
    }
    let gone = dep.client(owner.credentials(), |c| c.note_read(&id, None));
    ensure(matches!(gone, Err(ServiceError::NotFound(_))), || format!("after discard: {gone:?}"))?;
    Ok("5 nodes, majority 3, unanimity 5; 4 votes cannot reveal, 3 votes discard".into())
}

fn shamir_reconstruction() -> Check {
    let mut cases = 0;
    for p in [31, MERSENNE_61] {
        let field = Field::new(p).map_err(err)?;
        let mut runner = TestRunner::new(Config {
            cases: 1000,
            failure_persistence: None,
            ..Config::default()
        });
        let strategy = (1usize..=7, 0usize..7, 0..p, any::<u64>(), any::<u64>()).prop_map(|(n, dk, s, seed, pick)| {
            let k = 1 + dk % n;
            (k, n, s, seed, pick)
        });
        runner
            .run(&strategy, |(k, n, s, seed, pick)| {
                let mut rng = RandomStream::from_u64(seed);
                let sharing = share(field.elem(s), k, n, &mut rng).map_err(|e| TestCaseError::fail(err(e)))?;
                // a pseudo-random k-subset, rotated by `pick`
                let start = (pick % n as u64) as usize;
                let subset: Vec<Share> = (0..k).map(|j| sharing.shares[(start + j) % n]).collect();
                let got = reconstruct(&subset, k).map_err(|e| TestCaseError::fail(err(e)))?;
                prop_assert_eq!(got.value(), s);
                if k > 1 {
                    prop_assert!(reconstruct(&subset[1..], k).is_err());
                }
                Ok(())
            })
            .map_err(err)?;
        cases += 1000;
    }
    Ok(format!("{cases} random cases, k <= n <= 7, p in {{31, 2^61-1}}"))
}

fn shamir_secrecy() -> Check {
    const P: u64 = 31;
    const N: usize = 7;
    let field = Field::new(P).map_err(err)?;
    let pairs: Vec<(usize, usize)> = (0..N).flat_map(|i| (i + 1..N).map(move |j| (i, j))).collect();
    for s in 0..P {
        let mut counts = vec![vec![0u32; (P * P) as usize]; pairs.len()];
        for a1 in 0..P {
            for a2 in 0..P {
                let shares = share_with_coeffs(field.elem(s), &[field.elem(a1), field.elem(a2)], N).map_err(err)?;
                for (c, &(i, j)) in pairs.iter().enumerate() {
                    counts[c][(shares[i].value.value() * P + shares[j].value.value()) as usize] += 1;
                }
            }
        }
        for (c, &(i, j)) in pairs.iter().enumerate() {
            if let Some(bad) = counts[c].iter().position(|&x| x != 1) {
                return Err(format!("secret {s}, shares {} and {}: pair {bad} seen {} times", i + 1, j + 1, counts[c][bad]));
            }
        }
    }
    Ok(format!("every secret, every pair of {N} shares uniform over Z_31^2"))
}

fn add_mul_exhaustive(p: u64, k: usize, n: usize) -> Check {
    let field = Field::new(p).map_err(err)?;
    let mut c = LocalCluster::new(field, k, n, p * 100 + n as u64);
    for a in 0..p {
        for b in 0..p {
            let x = c.input(a, Repr::IntOnly, 0, None).map_err(|e| format!("sharing {a} with n={n} over Z_{p}: {e}"))?;
            let y = c.input(b, Repr::IntOnly, 0, None).map_err(err)?;
            let sum = open(&c.add(&x, Operand::Shared(&y)).map_err(err)?)?;
            let prod = open(&c.mul(&x, &y).map_err(err)?)?;
            ensure(sum == (a + b) % p, || format!("{a}+{b} gave {sum}"))?;
            ensure(prod == (a * b) % p, || format!("{a}*{b} gave {prod}"))?;
        }
    }
    Ok(format!("all {} pairs, add and mul", p * p))
}

fn comparison_exhaustive() -> Check {
    let mut c = LocalCluster::new(Field::new(MERSENNE_61).map_err(err)?, 3, 5, 8);
    let bounds = [0u64, 1, 128, 255];
    for x in 0..256u64 {
        let v = c.input(x, Repr::BitsOnly, 8, None).map_err(err)?;
        for t in bounds {
            let lt = open(&c.compare_public(&v, t, Direction::Less).map_err(err)?)?;
            ensure(lt == (x < t) as u64, || format!("{x} < {t} gave {lt}"))?;
        }
    }
    Ok(format!("256 values x thresholds {bounds:?}"))
}

fn t_privacy() -> Check {
    let honest = privacy_check_exhaustive(&[1, 2], Gate::Multiplication, 3, Variant::Honest).map_err(err)?;
    let PrivacyVerdict::Pass { inputs, tapes_per_input } = honest else {
        return Err(format!("honest protocol: {honest:?}"));
    };
    let broken = privacy_check_exhaustive(&[1, 2], Gate::Multiplication, 3, Variant::DegreeZero).map_err(err)?;
    let PrivacyVerdict::Leak { first, second } = broken else {
        return Err(format!("degree-0 variant not caught: {broken:?}"));
    };
    Ok(format!(
        "{{1,2}} at p=3: {inputs} inputs x {tapes_per_input} tapes identical; degree-0 variant separates {first:?} from {second:?}"
    ))
}

fn example_statistic() -> Check {
    let mut dep = SimDeployment::new(102, Scheduler::Fifo).map_err(err)?;
    let def = common::declare(&mut dep, "health", 4);
    for (r, answers) in common::EXAMPLE_RECORDS.iter().enumerate() {
        let u = dep.add_user(&format!("resp{r}")).map_err(err)?;
        dep.client(u.credentials(), |c| c.survey_respond("health", answers)).map_err(err)?;
    }
    let pid = dep
        .approve(dep.institution(2), Action::Compute, "survey:health/q1", None, &[1, 2, 3])
        .map_err(err)?;
    let stat = dep.client(dep.institution(2), |c| c.survey_compute("health", "q1", &pid)).map_err(err)?;
    let rows: Vec<Vec<u64>> = common::EXAMPLE_RECORDS.iter().map(|r| r.to_vec()).collect();
    let (num, den) = common::oracle(&def.schema, &def.queries[0], &rows);
    ensure((stat.numerator, stat.denominator) == (num, den), || format!("mpc {stat:?}, oracle {num}/{den:?}"))?;
    ensure((num, den) == (1, Some(3)), || format!("oracle gave {num}/{den:?}"))?;
    ensure(stat.percentage.as_deref() == Some("33.33"), || format!("percentage {:?}", stat.percentage))?;
    let q = build_query_circuit(dep.deployment().field, &def.schema, &def.queries[0], 4).map_err(err)?;
    let s = q.per_record;
    ensure(s.comparisons == 2 && s.top_level_mults == 4, || format!("per-record stats {s:?}"))?;
    Ok(format!(
        "1/3 = 33.33% through 5 simulated nodes; per record {} comparisons, {} top-level mults",
        s.comparisons, s.top_level_mults
    ))
}

fn literal_strategy() -> impl Strategy<Value = Vec<Literal>> {
    let female = prop::option::of(any::<bool>()).prop_map(|v| v.map(|value| Literal::Is { attr: "female".into(), value }));
    let age = prop::option::of((prop::option::of(0u64..256), prop::option::of(0u64..256)))
        .prop_map(|r| r.map(|(min, max)| Literal::Range { attr: "age".into(), min, max }));
    let diabetes = prop::option::of(any::<bool>()).prop_map(|v| v.map(|value| Literal::Is { attr: "diabetes".into(), value }));
    let coeliac = prop::option::of(any::<bool>()).prop_map(|v| v.map(|value| Literal::Is { attr: "coeliac".into(), value }));
    (female, age, diabetes, coeliac).prop_map(|(a, b, c, d)| [a, b, c, d].into_iter().flatten().collect())
}

fn randomized_surveys() -> Check {
    let field = Field::new(MERSENNE_61).map_err(err)?;
    let schema = common::health_schema();
    let record = (0u64..2, 0u64..256, 0u64..2, 0u64..2).prop_map(|(a, b, c, d)| vec![a, b, c, d]);
    let strategy = (
        prop::collection::vec(record, 1..10),
        literal_strategy(),
        prop::option::of(literal_strategy()),
        any::<u64>(),
    );
    let mut runner = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, |(records, num_lits, den_lits, seed)| {
            let query = StatQuery {
                query_id: "q".into(),
                predicate: Predicate::new(num_lits),
                percentage_of: den_lits.map(Predicate::new),
            };
            let mut c = LocalCluster::new(field, 3, 5, seed);
            let shared: Vec<Vec<SharedValue>> = records
                .iter()
                .map(|r| schema.encode_answers(field, r, 3, 5, None, c.rng()))
                .collect::<Result<_, _>>()
                .map_err(|e| TestCaseError::fail(err(e)))?;
            let q = build_query_circuit(field, &schema, &query, records.len()).map_err(|e| TestCaseError::fail(err(e)))?;
            let out = c
                .run(q.circuit, |i| {
                    shared
                        .iter()
                        .enumerate()
                        .flat_map(|(r, vals)| record_inputs(r, &vals.iter().map(|v| v.node_shares(i)).collect::<Vec<_>>()))
                        .collect()
                })
                .map_err(|e| TestCaseError::fail(err(e)))?;
            let (num, den) = common::oracle(&schema, &query, &records);
            prop_assert_eq!(out.outputs[NUMERATOR].value(), num);
            prop_assert_eq!(out.outputs.get(DENOMINATOR).map(|v| v.value()), den);
            Ok(())
        })
        .map_err(err)?;
    Ok("100 random record sets and queries match the plaintext count".into())
}

/// `x` as a Dual value whose bit `pos` is shared as the flipped bit.
fn flipped(c: &mut LocalCluster, x: u64, width: u8, pos: usize) -> Result<SharedValue, String> {
    let mut v = c.input(x, Repr::Dual, width, None).map_err(err)?;
    let other = c.input(x ^ (1 << pos), Repr::Dual, width, None).map_err(err)?;
    v.bit_shares[pos] = other.bit_shares[pos].clone();
    Ok(v)
}

fn consistency_exhaustive() -> Check {
    let mut c = LocalCluster::new(Field::new(MERSENNE_61).map_err(err)?, 3, 5, 4);
    let mut rejected = 0;
    for x in 0..16u64 {
        let v = c.input(x, Repr::Dual, 4, None).map_err(err)?;
        ensure(c.consistency_check(&v).map_err(err)?, || format!("honest {x} rejected"))?;
        for pos in 0..4 {
            let bad = flipped(&mut c, x, 4, pos)?;
            ensure(!c.consistency_check(&bad).map_err(err)?, || format!("{x} with bit {pos} flipped accepted"))?;
            rejected += 1;
        }
    }
    Ok(format!("16 honest encodings accepted, {rejected} single-bit corruptions rejected"))
}

fn consistency_property(width: u8) -> Check {
    let mut runner = TestRunner::new(Config {
        cases: 64,
        failure_persistence: None,
        ..Config::default()
    });
    let field = Field::new(MERSENNE_61).map_err(err)?;
    runner
        .run(&(0u64..1 << width, 0..width as usize, any::<u64>()), |(x, pos, seed)| {
            let mut c = LocalCluster::new(field, 3, 5, seed);
            let v = c.input(x, Repr::Dual, width, None).map_err(|e| TestCaseError::fail(err(e)))?;
            prop_assert!(c.consistency_check(&v).map_err(|e| TestCaseError::fail(err(e)))?);
            let bad = flipped(&mut c, x, width, pos).map_err(TestCaseError::fail)?;
            prop_assert!(!c.consistency_check(&bad).map_err(|e| TestCaseError::fail(err(e)))?);
            Ok(())
        })
        .map_err(err)?;
    Ok(format!("64 random values of width {width}: honest accepted, flipped bit rejected"))
}

fn note_roundtrip() -> Check {
    let mut dep = SimDeployment::new(103, Scheduler::Fifo).map_err(err)?;
    let u = dep.add_user("writer").map_err(err)?;
    let id = dep.client(u.credentials(), |c| c.note_create("first draft", 3)).map_err(err)?;
    let got = dep.client(u.credentials(), |c| c.note_read(&id, None)).map_err(err)?;
    ensure(got == "first draft", || format!("read {got:?}"))?;
    dep.client(u.credentials(), |c| c.note_update(&id, "second draft", 4)).map_err(err)?;
    let got = dep.client(u.credentials(), |c| c.note_read(&id, None)).map_err(err)?;
    ensure(got == "second draft", || format!("read after update {got:?}"))?;
    Ok("create, read, update, read".into())
}

fn email_roundtrip() -> Check {
    let mut dep = SimDeployment::new(104, Scheduler::Fifo).map_err(err)?;
    let a = dep.add_user("sender").map_err(err)?;
    let b = dep.add_user("recipient").map_err(err)?;
    let body = "quarterly figures attached below";
    let id = dep.client(a.credentials(), |c| c.email_send("recipient", body)).map_err(err)?;
    let got = dep.client(b.credentials(), |c| c.email_read(&b, &id)).map_err(err)?;
    ensure(got.body == body && got.sender == "user:sender", || format!("{got:?}"))?;
    let rec = email_record_id(&id);
    let mut pairs = 0;
    for i in 1..=5u32 {
        for j in i + 1..=5 {
            let view = AdversaryView::capture(&mut dep, &[i, j]).map_err(err)?;
            ensure(!view.contains(body.as_bytes()), || format!("{{{i},{j}}} saw the body"))?;
            let held = view.shares_of(&rec);
            ensure(held.len() == 2, || format!("{{{i},{j}}} hold {} shares", held.len()))?;
            let field = dep.deployment().field;
            let first: Vec<Share> = held
                .iter()
                .map(|(n, r)| field.parse(&r.values[0]).map(|v| Share::new(*n, v)))
                .collect::<Result<_, _>>()
                .map_err(err)?;
            ensure(reconstruct(&first, 3).is_err(), || "2 shares reconstructed".into())?;
            pairs += 1;
        }
    }
    Ok(format!("delivered; none of {pairs} node pairs sees the body or can reconstruct"))
}

fn escrow_roundtrip() -> Check {
    let mut dep = SimDeployment::new(105, Scheduler::Fifo).map_err(err)?;
    let u = dep.add_user("keeper").map_err(err)?;
    let other = dep.add_user("other").map_err(err)?;
    for k in [3u8, 5] {
        let key = [k; 32];
        let id = dep.client(u.credentials(), |c| c.key_escrow(&key, k, "disk key")).map_err(err)?;
        let got = dep.client(u.credentials(), |c| c.key_retrieve(&id, None)).map_err(err)?;
        ensure(got == key, || format!("k={k}: retrieved a different key"))?;
        let denied = dep.client(other.credentials(), |c| c.key_retrieve(&id, None));
        ensure(matches!(denied, Err(ServiceError::NotOwner)), || format!("non-owner: {denied:?}"))?;
    }
    Ok("escrow and retrieve at k=3 and k=5; non-owner refused".into())
}

fn shares_on_nodes(dep: &SimDeployment, id: &str) -> Result<Vec<Vec<Share>>, String> {
    let field = dep.deployment().field;
    let mut per_elem: Vec<Vec<Share>> = Vec::new();
    for i in 1..=5u32 {
        let Some(rec) = dep.record(i, id) else { continue };
        for (e, v) in rec.values.iter().enumerate() {
            if per_elem.len() <= e {
                per_elem.push(Vec::new());
            }
            per_elem[e].push(Share::new(i, field.parse(v).map_err(err)?));
        }
    }
    Ok(per_elem)
}

fn reshare_raises_threshold() -> Check {
    let mut dep = SimDeployment::new(106, Scheduler::Fifo).map_err(err)?;
    let u = dep.add_user("rekey").map_err(err)?;
    let key = *b"a thirty-two byte escrowed key!!";
    let id = dep.client(u.credentials(), |c| c.key_escrow(&key, 3, "")).map_err(err)?;
    let before: Vec<u64> = shares_on_nodes(&dep, &id)?
        .iter()
        .map(|s| reconstruct(s, 3).map(|v| v.value()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let pid = dep
        .approve(u.credentials(), Action::Rethreshold, &id, Some(4), &[1, 2, 3])
        .map_err(err)?;
    let done = dep.client(dep.institution(1), |c| c.reshare(&pid, None)).map_err(err)?;
    ensure(done.len() == 5 && done.values().all(|d| d.threshold == 4), || format!("{done:?}"))?;
    for i in 1..=5 {
        let t = dep.record(i, &id).map(|r| r.policy.reveal_threshold);
        ensure(t == Some(4), || format!("node {i} threshold {t:?}"))?;
    }
    let after = shares_on_nodes(&dep, &id)?;
    for (e, shares) in after.iter().enumerate() {
        let v = reconstruct(shares, 4).map_err(err)?;
        ensure(v.value() == before[e], || format!("element {e} changed"))?;
        ensure(reconstruct(shares, 3).is_err(), || format!("element {e} still lies on a degree-2 polynomial"))?;
    }
    let got = dep.client(u.credentials(), |c| c.key_retrieve(&id, None)).map_err(err)?;
    ensure(got == key, || "retrieve after reshare".into())?;
    Ok(format!("(3,5) -> (4,5), {} elements preserved, new shares of degree 3", after.len()))
}

fn recover_after_crash() -> Check {
    let mut dep = SimDeployment::new(107, Scheduler::Fifo).map_err(err)?;
    let u = dep.add_user("lost").map_err(err)?;
    let id = dep.client(u.credentials(), |c| c.key_escrow(&[9u8; 32], 3, "")).map_err(err)?;
    let out = verify_recovery(&mut dep, 4, &id, vec![1, 2, 3]).map_err(err)?;
    ensure(out.restored(), || format!("{out:?}"))?;
    Ok(format!("node 4 wiped and rebuilt {} share values exactly from nodes 1-3", out.original.len()))
}

fn erase_leaves_nothing() -> Check {
    let mut dep = SimDeployment::new(108, Scheduler::Fifo).map_err(err)?;
    let u = dep.add_user("forgetful").map_err(err)?;
    let id = dep.client(u.credentials(), |c| c.note_create("to be forgotten", 3)).map_err(err)?;
    let mut needles: BTreeSet<Vec<u8>> = BTreeSet::new();
    for i in 1..=5 {
        let rec = dep.record(i, &id).ok_or("missing share record")?;
        needles.extend(rec.values.iter().map(|v| v.as_bytes().to_vec()));
        let blob = dep
            .network()
            .node(i)
            .ok_or("node down")?
            .store()
            .blob(&note_blob_id(&id))
            .map_err(err)?;
        needles.insert(blob[..32.min(blob.len())].to_vec());
    }
    dep.client(u.credentials(), |c| c.erase(&id, None)).map_err(err)?;
    for i in 1..=5 {
        for (path, bytes) in store::scan_bytes(&dep.data_dir(i)).map_err(err)? {
            if let Some(n) = needles.iter().find(|n| store::contains_bytes(&bytes, n)) {
                return Err(format!("{} still holds {:?}", path.display(), String::from_utf8_lossy(n)));
            }
        }
    }
    let left = shares_on_nodes(&dep, &id)?;
    for k in 1..=5 {
        let first = left.first().cloned().unwrap_or_default();
        ensure(reconstruct(&first, k).is_err(), || format!("reconstruction at k={k} succeeded"))?;
    }
    let read = dep.client(u.credentials(), |c| c.note_read(&id, None));
    ensure(matches!(read, Err(ServiceError::NotFound(_))), || format!("read after erase: {read:?}"))?;
    Ok(format!("{} share and ciphertext patterns absent from all 5 nodes; k=1..5 all fail", needles.len()))
}

fn min_respondents() -> Check {
    let mut dep = SimDeployment::new(109, Scheduler::Fifo).map_err(err)?;
    common::declare(&mut dep, "health", 3);
    let pid = dep
        .approve(dep.institution(1), Action::Compute, "survey:health/q1", None, &[1, 2, 3])
        .map_err(err)?;
    for (r, answers) in common::EXAMPLE_RECORDS.iter().enumerate().take(3) {
        let u = dep.add_user(&format!("r{r}")).map_err(err)?;
        dep.client(u.credentials(), |c| c.survey_respond("health", answers)).map_err(err)?;
        let res = dep.client(dep.institution(1), |c| c.survey_compute("health", "q1", &pid));
        match (r + 1 < 3, res) {
            (true, Err(ServiceError::TooFewRespondents(_))) => {}
            (false, Ok(stat)) => ensure(stat.respondents == 3, || format!("{stat:?}"))?,
            (_, other) => return Err(format!("{} respondents: {other:?}", r + 1)),
        }
    }
    Ok("blocked at 1 and 2 respondents, computed at R=3".into())
}

fn survey_scenario(schedule: Schedule) -> Result<Scenario, String> {
    let def = json!({
        "survey_id": "s", "threshold": 3, "min_respondents": 2,
        "schema": common::health_schema(), "queries": [common::example_query()]
    });
    let mut script = vec![
        json!({"op": "propose", "by": "inst:1", "action": "COMPUTE", "target": "survey:s", "save_as": "c"}),
        json!({"op": "vote", "institution": 1, "proposal": "{c}", "approve": true}),
        json!({"op": "vote", "institution": 2, "proposal": "{c}", "approve": true}),
        json!({"op": "vote", "institution": 3, "proposal": "{c}", "approve": true}),
        json!({"op": "survey_create", "institution": 1, "survey": def, "proposal": "{c}"}),
    ];
    for (r, answers) in common::EXAMPLE_RECORDS.iter().enumerate() {
        script.push(json!({"op": "register", "user": format!("u{r}")}));
        script.push(json!({"op": "survey_respond", "user": format!("u{r}"), "survey": "s", "answers": answers}));
    }
    script.extend([
        json!({"op": "propose", "by": "inst:2", "action": "COMPUTE", "target": "survey:s/q1", "save_as": "q"}),
        json!({"op": "vote", "institution": 2, "proposal": "{q}", "approve": true}),
        json!({"op": "vote", "institution": 4, "proposal": "{q}", "approve": true}),
        json!({"op": "vote", "institution": 5, "proposal": "{q}", "approve": true}),
        json!({"op": "survey_compute", "by": "inst:2", "survey": "s", "query": "q1", "proposal": "{q}",
               "expect": {"numerator": 1, "denominator": 3, "percentage": "33.33"}}),
    ]);
    let s = json!({"seed": 77, "schedule": schedule, "script": script});
    Scenario::from_json(&s.to_string()).map_err(err)
}

fn determinism() -> Check {
    let mut hashes = Vec::new();
    for schedule in [Schedule::Fifo, Schedule::Random(5)] {
        let s = survey_scenario(schedule)?;
        let a = run(&s).map_err(err)?;
        let b = run(&s).map_err(err)?;
        ensure(a.passed, || format!("{schedule:?} run failed: {:?}", a.steps.iter().find(|x| !x.passed)))?;
        ensure(a.deliveries > 0, || "no peer traffic".into())?;
        ensure(a.transcript_hash == b.transcript_hash, || format!("{schedule:?}: hashes differ"))?;
        ensure(a.decisions == b.decisions && a.opened == b.opened, || format!("{schedule:?}: logs differ"))?;
        hashes.push(a.transcript_hash);
    }
    ensure(hashes[0] != hashes[1], || "schedule had no effect".into())?;
    Ok(format!("FIFO and random schedules each reproduce ({}..., {}...)", &hashes[0][..12], &hashes[1][..12]))
}

fn main() -> ExitCode {
    let mut s = Suite {
        failed: Vec::new(),
        passed: 0,
    };
    s.check("deployment-constants", secs(60), deployment_constants);
    s.check("shamir/reconstruct-property", secs(10), shamir_reconstruction);
    s.check("shamir/perfect-secrecy p=31 k=3", secs(10), shamir_secrecy);
    s.check("mpc-soundness/add-mul p=5 n=5 k=3", secs(30), || add_mul_exhaustive(5, 3, 5));
    s.check("mpc-soundness/add-mul p=7 n=5 k=3 (supplementary)", secs(30), || add_mul_exhaustive(7, 3, 5));
    s.check("mpc-soundness/add-mul p=5 n=4 k=2 (supplementary)", secs(30), || add_mul_exhaustive(5, 2, 4));
    s.check("mpc-soundness/8-bit comparison", secs(30), comparison_exhaustive);
    s.check("t-privacy/multiplication p=3 {1,2}", secs(300), t_privacy);
    s.check("example-statistic/4-record survey", secs(60), example_statistic);
    s.check("example-statistic/100 randomized", secs(120), randomized_surveys);
    s.check("consistency/exhaustive width 4", secs(60), consistency_exhaustive);
    s.check("consistency/property width 8", secs(60), || consistency_property(8));
    s.check("consistency/property width 16", secs(60), || consistency_property(16));
    s.check("lifecycle/note round-trip", secs(60), note_roundtrip);
    s.check("lifecycle/email round-trip", secs(60), email_roundtrip);
    s.check("lifecycle/escrow and retrieve", secs(60), escrow_roundtrip);
    s.check("lifecycle/reshare (3,5)->(4,5)", secs(60), reshare_raises_threshold);
    s.check("lifecycle/recover after crash", secs(60), recover_after_crash);
    s.check("lifecycle/erase", secs(60), erase_leaves_nothing);
    s.check("lifecycle/min-respondents", secs(60), min_respondents);
    s.check("determinism/transcript hash", secs(120), determinism);

    let unexpected: Vec<&String> = s.failed.iter().filter(|f| !UNATTAINABLE.contains(&f.as_str())).collect();
    println!(
        "acceptance: {} passed, {} failed ({} unattainable as stated)",
        s.passed,
        s.failed.len(),
        s.failed.len() - unexpected.len()
    );
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
