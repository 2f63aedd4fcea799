//! Acceptance checks. Each check prints one PASS/FAIL line with the measured
//! values next to the pinned limits; the test fails if any check fails.
//!
//! Run with `cargo test -p govgate-core --test acceptance`.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use govgate_core::clock::SteppingClock;
use govgate_core::embed::HashingEmbedder;
use govgate_core::enactment::*;
use govgate_core::harness::*;
use govgate_core::policy::*;
use govgate_core::policy_agent::{
    Candidate, DecisionPhase, Resolver, ResolverError, ResolverVerdict, ScriptedResolver,
};
use govgate_core::store::PolicyStore;
use govgate_core::trigger::MatchContext;

const GUARD_LIMIT: Duration = Duration::from_secs(1);
const SEARCH_LIMIT: Duration = Duration::from_secs(5);
const ABLATION_LIMIT: Duration = Duration::from_secs(30);
const SCORE_TOLERANCE: f64 = 1e-12;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn demo() -> Suite {
    Suite::load(&common::suite_dir("demo")).expect("demo suite loads")
}

fn bpo() -> Suite {
    Suite::load(&common::suite_dir("bpo-ablation")).expect("ablation suite loads")
}

fn config_ids(suite: &Suite, config: &str, sc: &Scenario) -> Vec<PolicyId> {
    suite.config.configs[config]
        .iter()
        .filter(|id| sc.policy_set.as_ref().is_none_or(|set| set.contains(id)))
        .cloned()
        .collect()
}

fn tool_events(trace: &[TraceEvent]) -> usize {
    trace.iter().filter(|e| matches!(e.detail, TraceDetail::ToolInvoked { .. })).count()
}

fn paraphrases(n: usize, seed: u64) -> Vec<String> {
    let lead = ["", "please ", "can you ", "I need you to ", "go ahead and ", "urgent: "];
    let verb = ["delete", "Delete", "DELETE", "delete all of", "quietly delete"];
    let object = ["every contact", "all contacts", "the whole contact list", "each customer record", "all leads"];
    let place = ["in CRM", "in the CRM", "from our crm", "from the Crm system", "stored in CRM"];
    let tail = ["", " now", " today, thanks", "!", " before Friday", "?"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeSet::new();
    while out.len() < n {
        let body = format!(
            "{}{} {} {}{}",
            lead.choose(&mut rng).unwrap(),
            verb.choose(&mut rng).unwrap(),
            object.choose(&mut rng).unwrap(),
            place.choose(&mut rng).unwrap(),
            tail.choose(&mut rng).unwrap()
        );
        out.insert(if rng.gen_bool(0.2) {
            let (v, rest) = body.split_once(' ').unwrap_or((&body, ""));
            format!("{} {}", rest.trim(), v)
        } else {
            body
        });
    }
    out.into_iter().collect()
}

/// The CRM guard blocks every paraphrase before any tool runs.
fn guard_supremacy() -> Check {
    let suite = demo();
    let base = suite.scenarios.iter().find(|s| s.id == "crm-delete").ok_or("no crm-delete scenario")?;
    let texts = paraphrases(100, 11);
    let started = Instant::now();
    let mut blocked = 0;
    let mut tools = 0;
    let mut resolver_calls = 0;
    for text in &texts {
        let lower = text.to_lowercase();
        ensure(lower.contains("delete") && lower.contains("crm"), || format!("bad fixture {text:?}"))?;
        let sc = Scenario { user_input: text.clone(), ..base.clone() };
        let rec = suite.run_one(&sc, "all").map_err(|e| e.to_string())?;
        blocked += usize::from(rec.outcome.terminal_phase == SessionPhase::Blocked);
        tools += tool_events(&rec.outcome.trace);
        resolver_calls += rec.resolver_calls;
    }
    let elapsed = started.elapsed();
    let line = format!(
        "{blocked}/{} blocked, {tools} tool events, {resolver_calls} resolver calls, {:.3}s (limit {}s)",
        texts.len(),
        elapsed.as_secs_f64(),
        GUARD_LIMIT.as_secs()
    );
    ensure(blocked == texts.len() && tools == 0 && elapsed < GUARD_LIMIT, || line.clone())?;
    Ok(line)
}

fn jitter(rng: &mut ChaCha8Rng) {
    match rng.gen_range(0..4) {
        0 => {}
        1 => (0..rng.gen_range(1..20)).for_each(|_| thread::yield_now()),
        _ => thread::sleep(Duration::from_micros(rng.gen_range(0..300))),
    }
}

/// Deny runs the gated tool zero times, approve exactly once, and only one of
/// two racing decisions wins.
fn hitl_exactly_once() -> Check {
    let suite = demo();
    let sc = suite.scenarios.iter().find(|s| s.id == "drop-database-deny").ok_or("no drop-database scenario")?;
    let ids = suite.config.configs["all"].clone();
    let (mut approvals, mut denials) = (0, 0);
    for seed in 0..50u64 {
        let executor = Arc::new(suite.executor());
        let store = suite.build_store(&ids).map_err(|e| e.to_string())?;
        let engine = Engine::builder(Arc::new(RwLock::new(store)), suite.registry.clone())
            .executor(executor.clone())
            .resolver(Arc::new(suite.resolver()))
            .ids(IdSource::sequential())
            .build();
        let id = engine.create_session(sc.context());
        let first = if seed % 2 == 0 { ApprovalDecision::Approve } else { ApprovalDecision::Deny };
        let second = match first {
            ApprovalDecision::Approve => ApprovalDecision::Deny,
            ApprovalDecision::Deny => ApprovalDecision::Approve,
        };

        let (phase, results) = thread::scope(|s| {
            let engine = &engine;
            let id = &id;
            let looper = s.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 3);
                let runner = SessionRunner { engine, agent: &sc.agent, approvals: &NoHandler };
                let mut cursor = Cursor::default();
                loop {
                    jitter(&mut rng);
                    match runner.drive(id, &mut cursor).expect("drive") {
                        Drive::Paused(_) => {
                            jitter(&mut rng);
                            engine.wait_for_resolution(id, Duration::from_secs(5)).expect("wait");
                        }
                        Drive::Finished(phase) => break phase,
                    }
                }
            });
            let deciders: Vec<_> = [(first, 1u64), (second, 2u64)]
                .into_iter()
                .map(|(decision, k)| {
                    s.spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed * 3 + k);
                        let request = loop {
                            if let Some(r) = engine.approvals_for(id).into_iter().next() {
                                break r;
                            }
                            jitter(&mut rng);
                        };
                        jitter(&mut rng);
                        (decision, engine.resolve_approval(&request.id, decision, &format!("actor-{k}")))
                    })
                })
                .collect();
            let results: Vec<_> = deciders.into_iter().map(|h| h.join().unwrap()).collect();
            (looper.join().unwrap(), results)
        });

        let winners: Vec<_> = results.iter().filter(|(_, r)| r.is_ok()).map(|(d, _)| *d).collect();
        let losers = results
            .iter()
            .filter(|(_, r)| matches!(r, Err(EnactmentError::AlreadyResolved(_))))
            .count();
        ensure(winners.len() == 1 && losers == 1, || format!("seed {seed}: {results:?}"))?;
        let request = engine.approvals_for(&id).pop().ok_or("no request")?;
        let again = engine.resolve_approval(&request.id, ApprovalDecision::Approve, "late");
        ensure(matches!(again, Err(EnactmentError::AlreadyResolved(_))), || {
            format!("seed {seed}: late resolution gave {again:?}")
        })?;
        let drops = executor.count(&id, "drop_database");
        match winners[0] {
            ApprovalDecision::Approve => {
                approvals += 1;
                ensure(drops == 1 && phase == SessionPhase::Completed, || {
                    format!("seed {seed}: approved, {drops} executions, phase {phase}")
                })?;
                ensure(request.status == ApprovalStatus::Approved, || format!("seed {seed}: status {:?}", request.status))?;
            }
            ApprovalDecision::Deny => {
                denials += 1;
                ensure(drops == 0 && phase == SessionPhase::Denied, || {
                    format!("seed {seed}: denied, {drops} executions, phase {phase}")
                })?;
                ensure(executor.invocations_for(&id).is_empty(), || format!("seed {seed}: tools ran after deny"))?;
            }
        }
    }
    Ok(format!(
        "50/50 interleavings consistent ({approvals} approved: 1 execution each, {denials} denied: 0 executions), double resolution rejected"
    ))
}

/// Tool metadata is byte-identical after every suite has run under every
/// configuration, while sessions did see enriched descriptions.
fn registry_immutability() -> Check {
    let mut enriched_sessions = 0;
    let mut runs = 0;
    for suite in [bpo(), demo()] {
        let before = suite.registry.to_json();
        for config in suite.config_names() {
            for sc in &suite.scenarios {
                let rec = suite.run_one(sc, &config).map_err(|e| e.to_string())?;
                runs += 1;
                enriched_sessions += usize::from(rec.outcome.trace.iter().any(
                    |e| matches!(&e.detail, TraceDetail::ToolsEnriched { guides } if !guides.is_empty()),
                ));
            }
        }
        let after = suite.registry.to_json();
        ensure(before == after, || format!("{} registry changed", suite.name))?;
    }
    ensure(enriched_sessions > 0, || "no session saw enriched tools".into())?;
    Ok(format!("{runs} scenario runs, {enriched_sessions} with enriched tools, registry bytes unchanged"))
}

/// Resolver that records the kind of every candidate set it is shown.
struct Spy {
    inner: ScriptedResolver,
    kinds: HashMap<PolicyId, PolicyKind>,
    seen: Mutex<Vec<PolicyKind>>,
}

impl Resolver for Spy {
    fn resolve(&self, candidates: &[Candidate], context: &str) -> Result<ResolverVerdict, ResolverError> {
        if let Some(c) = candidates.first() {
            self.seen.lock().push(self.kinds[&c.policy_id]);
        }
        self.inner.resolve(candidates, context)
    }
}

/// No resolver call is made for a kind whose decision was settled by a
/// deterministic trigger.
fn two_phase_resolution() -> Check {
    let mut deterministic = 0;
    let mut strict = 0;
    let mut total_calls = 0;
    let mut runs = 0;
    for suite in [bpo(), demo()] {
        for config in suite.config_names() {
            for sc in &suite.scenarios {
                let ids = config_ids(&suite, &config, sc);
                let store = suite.build_store(&ids).map_err(|e| e.to_string())?;
                let kinds = store.policies().map(|p| (p.id.clone(), p.kind())).collect();
                let spy = Arc::new(Spy { inner: suite.resolver(), kinds, seen: Mutex::new(Vec::new()) });
                let mut builder = Engine::builder(Arc::new(RwLock::new(store)), suite.registry.clone())
                    .resolver(spy.clone())
                    .formatter(Arc::new(suite.config.formatter.clone()))
                    .executor(Arc::new(suite.executor()))
                    .clock(Arc::new(SteppingClock::default()))
                    .ids(IdSource::sequential());
                if let Some(p) = &suite.config.system_prompt {
                    builder = builder.system_prompt(p.clone());
                }
                let engine = builder.build();
                let trace = match run_scenario(sc, &engine) {
                    Ok(o) => o.trace,
                    Err(_) => engine.trace(&engine.session_ids()[0]).map_err(|e| e.to_string())?,
                };
                runs += 1;
                let seen = spy.seen.lock().clone();
                total_calls += seen.len();
                let settled: Vec<PolicyKind> = trace
                    .iter()
                    .filter_map(|e| e.decision.as_ref())
                    .filter(|d| d.phase == DecisionPhase::Deterministic)
                    .map(|d| d.kind)
                    .collect();
                if !settled.is_empty() {
                    deterministic += 1;
                    strict += usize::from(seen.is_empty());
                }
                for kind in &settled {
                    ensure(!seen.contains(kind), || {
                        format!("{}/{config}/{}: resolver consulted for deterministic {kind}", suite.name, sc.id)
                    })?;
                }
            }
        }
    }
    // guard paraphrases are all keyword-settled
    let suite = demo();
    let base = suite.scenarios.iter().find(|s| s.id == "crm-delete").ok_or("no crm-delete")?;
    for text in paraphrases(20, 12) {
        let rec = suite.run_one(&Scenario { user_input: text, ..base.clone() }, "all").map_err(|e| e.to_string())?;
        ensure(rec.resolver_calls == 0, || format!("{} resolver calls on a keyword guard", rec.resolver_calls))?;
        deterministic += 1;
        strict += 1;
    }
    ensure(deterministic > 0, || "no deterministic matches observed".into())?;
    Ok(format!(
        "{deterministic} runs with deterministic matches: 0 resolver calls for settled kinds; {strict} of them with 0 calls overall ({total_calls} calls across {runs} suite runs)"
    ))
}

const APPROVAL: &str = "---\nid: {ID}\nkind: tool_approval\npriority: {P}\npatterns: ['{PAT}']\nauto_approve: false\n---\n";

/// When two approval policies cover the same tool, the request names the
/// higher-priority one.
fn approval_priority() -> Check {
    let suite = demo();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let patterns = ["drop_*", "drop_database", "*_database", "*"];
    for run in 0..100 {
        let low_first = rng.gen_bool(0.5);
        let (low_id, high_id) = if low_first { ("a-approval", "b-approval") } else { ("b-approval", "a-approval") };
        let mut defs = vec![
            (low_id, 50, *patterns.choose(&mut rng).unwrap()),
            (high_id, 80, *patterns.choose(&mut rng).unwrap()),
        ];
        defs.shuffle(&mut rng);
        let mut store = PolicyStore::new(Arc::new(HashingEmbedder::default()));
        for (id, p, pat) in &defs {
            let text = APPROVAL.replace("{ID}", id).replace("{P}", &p.to_string()).replace("{PAT}", pat);
            store.upsert_source(&text).map_err(|e| e.to_string())?;
        }
        let engine = Engine::builder(Arc::new(RwLock::new(store)), suite.registry.clone()).build();
        let id = engine.create_session(MatchContext::new("drop the staging database"));
        engine.checkpoint_intent(&id).map_err(|e| e.to_string())?;
        engine.prepare_tools(&id).map_err(|e| e.to_string())?;
        engine.submit_code(&id, "drop_database('staging')").map_err(|e| e.to_string())?;
        match engine.gate_execution(&id).map_err(|e| e.to_string())? {
            GateOutcome::Pause(req) => ensure(req.policy.as_str() == high_id, || {
                format!("run {run}: request names {} ({defs:?})", req.policy)
            })?,
            other => return Err(format!("run {run}: gate gave {other:?}")),
        }
    }
    Ok("priority-80 policy named in 100/100 requests".into())
}

/// Store search agrees with a brute-force scan over 1000 random policies.
fn vector_search_oracle() -> Check {
    let kinds = [PolicyKind::IntentGuard, PolicyKind::Playbook, PolicyKind::OutputFormatter];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let policies: Vec<Policy> =
        (0..1000).map(|i| common::random_semantic_policy(&mut rng, i, kinds[i % 3])).collect();
    let queries: Vec<(String, PolicyKind, usize, f64)> = (0..200)
        .map(|_| {
            (
                common::words(&mut rng, 1, 6),
                kinds[rng.gen_range(0..3)],
                rng.gen_range(1..=50),
                rng.gen_range(0..=5) as f64 / 10.0,
            )
        })
        .collect();

    let started = Instant::now();
    let mut store = PolicyStore::new(Arc::new(HashingEmbedder::default()));
    for p in &policies {
        store.upsert(p.clone()).map_err(|e| e.to_string())?;
    }
    let results: Vec<_> = queries.iter().map(|(t, k, n, th)| store.semantic_search(t, *k, *n, *th)).collect();
    let elapsed = started.elapsed();

    let mut hits = 0;
    for ((text, kind, top_k, threshold), got) in queries.iter().zip(&results) {
        let want = common::brute_force(&policies, text, *kind, *top_k, *threshold);
        common::hits_agree(got, &want, SCORE_TOLERANCE).map_err(|e| format!("{text:?}: {e}"))?;
        hits += got.len();
    }
    let line = format!(
        "200 queries over 1000 policies, {hits} hits identical (tolerance {SCORE_TOLERANCE:e}), {:.3}s (limit {}s)",
        elapsed.as_secs_f64(),
        SEARCH_LIMIT.as_secs()
    );
    ensure(elapsed < SEARCH_LIMIT && hits > 0, || line.clone())?;
    Ok(line)
}

/// Pass counts of the ablation suite.
fn ablation_shape() -> Check {
    let suite = bpo();
    let started = Instant::now();
    let mut counts = Vec::new();
    let mut parts = Vec::new();
    for config in ["none", "two", "five"] {
        let r = run_suite(&suite, config, 3).map_err(|e| e.to_string())?;
        ensure(r.scenarios == 26, || format!("{} scenarios", r.scenarios))?;
        ensure(r.metrics.std_dev == 0.0, || format!("{config}: std {}", r.metrics.std_dev))?;
        ensure(r.per_run_passes.windows(2).all(|w| w[0] == w[1]), || {
            format!("{config}: runs differ {:?}", r.per_run_passes)
        })?;
        parts.push(format!("{config} {:?}/26", r.per_run_passes));
        counts.push(r.per_run_passes[0]);
    }
    let elapsed = started.elapsed();
    let line = format!(
        "{} (need 12, >=18, >=20, nondecreasing), std 0, {:.2}s (limit {}s)",
        parts.join(", "),
        elapsed.as_secs_f64(),
        ABLATION_LIMIT.as_secs()
    );
    ensure(
        counts[0] == 12 && counts[1] >= 18 && counts[2] >= 20 && counts.windows(2).all(|w| w[0] <= w[1])
            && elapsed < ABLATION_LIMIT,
        || line.clone(),
    )?;
    Ok(line)
}

/// Independent check of the extraction schema used below.
fn total_schema_holds(v: &Value) -> bool {
    match v {
        Value::Object(m) => m.len() == 1 && m.get("total").is_some_and(Value::is_number),
        _ => false,
    }
}

/// Template output is byte-exact; schema output validates or passes through.
fn formatter_contract() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let id = PolicyId::new("fmt");
    let pieces = ["Total: ", "{{total}}", "  ", "\n", "\t", "émigré", "日本語", "| a | b |", "\r\n", "**bold**", " "];
    let mut templates = 0;
    for _ in 0..300 {
        let template: String = (0..rng.gen_range(1..12)).map(|_| *pieces.choose(&mut rng).unwrap()).collect();
        let payload = OutputFormatterPayload { mode: FormatMode::Template, template: Some(template.clone()), schema: None };
        let response = common::words(&mut rng, 1, 8);
        let out = format_output(&response, "report", Some((&id, &payload)), &BasicFormatter);
        ensure(matches!(&out.output, FinalOutput::Text(t) if t.as_bytes() == template.as_bytes()), || {
            format!("template {template:?} became {:?}", out.output)
        })?;
        templates += 1;
    }

    // end to end through a stored policy file
    let template = "Quarterly total: see the attached sheet.  \n\n  Regards";
    let policy = Policy {
        id: id.clone(),
        priority: 10,
        enabled: true,
        triggers: vec![Trigger::Keyword(KeywordTrigger {
            keywords: vec!["report".into()],
            mode: KeywordMode::Or,
            case_sensitive: false,
            fuzzy_max_edits: 0,
            target: TargetField::UserInput,
        })],
        description: String::new(),
        payload: PolicyPayload::OutputFormatter(OutputFormatterPayload {
            mode: FormatMode::Template,
            template: Some(template.into()),
            schema: None,
        }),
    };
    let mut store = PolicyStore::new(Arc::new(HashingEmbedder::default()));
    store.upsert_source(&serialize_policy(&policy)).map_err(|e| e.to_string())?;
    let engine = Engine::builder(Arc::new(RwLock::new(store)), Arc::new(ToolRegistry::new(vec![]).unwrap())).build();
    let id_s = engine.create_session(MatchContext::new("send the quarterly report"));
    let agent = ScriptedAgent::answering("The total is 42.");
    let runner = SessionRunner { engine: &engine, agent: &agent, approvals: &NoHandler };
    runner.drive(&id_s, &mut Cursor::default()).map_err(|e| e.to_string())?;
    let output = engine.session(&id_s).map_err(|e| e.to_string())?.output;
    ensure(output == Some(FinalOutput::Text(template.into())), || format!("engine output {output:?}"))?;

    let schema = json!({
        "type": "object",
        "properties": {"total": {"type": "number"}},
        "required": ["total"],
        "additionalProperties": false
    });
    let payload = OutputFormatterPayload { mode: FormatMode::JsonSchema, template: None, schema: Some(schema) };
    let candidates = [
        json!({"total": 42}),
        json!({"total": 3.5}),
        json!({"total": "42"}),
        json!({}),
        json!({"total": 1, "extra": true}),
        json!([42]),
        Value::Null,
        json!("total"),
    ];
    let (mut structured, mut passed_through) = (0, 0);
    for i in 0..300 {
        let response = format!("response {i}: {}", common::words(&mut rng, 1, 5));
        let mut model = ScriptedFormatter::new();
        let extracted = rng.gen_bool(0.85).then(|| candidates.choose(&mut rng).unwrap().clone());
        if let Some(v) = &extracted {
            model = model.with_extraction(response.clone(), v.clone());
        }
        let out = format_output(&response, "report", Some((&id, &payload)), &model);
        match &out.output {
            FinalOutput::Json(v) => {
                ensure(total_schema_holds(v) && out.diagnostic.is_none(), || format!("invalid output {v}"))?;
                structured += 1;
            }
            FinalOutput::Text(t) => {
                ensure(t == &response && out.diagnostic.is_some(), || format!("bad pass-through {out:?}"))?;
                ensure(!extracted.as_ref().is_some_and(total_schema_holds), || {
                    format!("valid extraction {extracted:?} was rejected")
                })?;
                passed_through += 1;
            }
        }
    }
    Ok(format!(
        "{templates}/300 templates byte-exact plus engine run; schema mode {structured} valid, {passed_through} passed through with diagnostic"
    ))
}

/// Parse inverts serialize, and a saved store searches like the original.
fn round_trip_laws() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..1000 {
        let p = common::random_policy(&mut rng, i);
        let text = serialize_policy(&p);
        let back = parse_policy_file(&text).map_err(|e| format!("policy {i}: {e}"))?;
        ensure(back == p, || format!("policy {i} changed:\n{text}"))?;
    }
    let kinds = [PolicyKind::IntentGuard, PolicyKind::Playbook, PolicyKind::OutputFormatter];
    let mut store = PolicyStore::new(Arc::new(HashingEmbedder::default()));
    for i in 0..300 {
        store.upsert(common::random_semantic_policy(&mut rng, i, kinds[i % 3])).map_err(|e| e.to_string())?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    store.save(dir.path()).map_err(|e| e.to_string())?;
    let (loaded, _) = PolicyStore::load(dir.path(), Arc::new(HashingEmbedder::default()), Arc::new(SteppingClock::default()))
        .map_err(|e| e.to_string())?;
    for q in 0..200 {
        let text = common::words(&mut rng, 1, 6);
        let kind = kinds[q % 3];
        let (a, b) = (store.semantic_search(&text, kind, 20, 0.0), loaded.semantic_search(&text, kind, 20, 0.0));
        ensure(a == b, || format!("{text:?}: {a:?} vs {b:?}"))?;
    }
    Ok("1000/1000 policies survive serialize then parse; 200 searches equal after save and reload".into())
}

/// Summary rows of the per-run table, computed from the raw run scores.
fn metrics_arithmetic() -> Check {
    let runs = |config: &str, passes: &[usize]| ConfigRuns { config: config.into(), total: 26, per_run_passes: passes.to_vec() };
    let summary = compute_metrics(&[
        runs("none", &[11, 13, 12]),
        runs("two", &[19, 18, 19]),
        runs("five", &[20, 20, 21]),
    ])
    .map_err(|e| e.to_string())?;
    let rates: Vec<f64> = summary.configs.iter().map(|c| c.success_rate_pct).collect();
    let means: Vec<f64> = summary.configs.iter().map(|c| c.mean_passes).collect();
    let stds: Vec<f64> = summary.configs.iter().map(|c| c.std_dev).collect();
    let deltas: Vec<f64> = summary.deltas.iter().map(|d| d.pp).collect();
    let line = format!("rates {rates:?}, means {means:?}, std {stds:?}, deltas {deltas:?}");
    ensure(
        rates == [46.2, 71.8, 78.2] && deltas == [25.6, 32.0] && means == [12.0, 18.7, 20.3] && stds == [1.0, 0.6, 0.6],
        || line.clone(),
    )?;
    Ok(line)
}

type CheckFn = fn() -> Check;

/// Runs without the libtest harness so the report lines are never captured.
fn main() {
    let checks: [(&str, CheckFn); 10] = [
        ("guard-supremacy", guard_supremacy),
        ("hitl-exactly-once", hitl_exactly_once),
        ("registry-immutability", registry_immutability),
        ("two-phase-resolution", two_phase_resolution),
        ("approval-priority", approval_priority),
        ("vector-search-oracle", vector_search_oracle),
        ("ablation-shape", ablation_shape),
        ("formatter-contract", formatter_contract),
        ("round-trip-laws", round_trip_laws),
        ("metrics-arithmetic", metrics_arithmetic),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name:<22} {detail}", i + 1),
            Err(detail) => {
                println!("FAIL {:>2} {name:<22} {detail}", i + 1);
                failed.push(*name);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed: {failed:?}");
        std::process::exit(1);
    }
}
