//! Lockstep data-parallel baseline: every epoch all workers contribute a
//! gradient, the plain mean is applied everywhere, and the workers stay exact
//! copies of one another.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Barrier, Mutex};
use std::thread;

use super::group::SendSink;
use super::{
    local_record, AgentOutcome, EpochOutput, EpochRecord, GroupConfig, GroupOutcome, Learner,
    RuntimeError, Scheduler,
};
use crate::environment::CartPole;
use crate::neural::GradientVector;

/// Component-wise mean in worker order.
fn mean_gradient(grads: &[&GradientVector]) -> GradientVector {
    let first = grads[0];
    let mut acc = first.as_slice().to_vec();
    for g in &grads[1..] {
        for (a, v) in acc.iter_mut().zip(g.as_slice()) {
            *a += v;
        }
    }
    let n = grads.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    GradientVector::from_values(first.shape().clone(), acc).expect("mean of finite gradients")
}

/// Learners for every worker; all of them start from worker 1's parameters.
fn learners(group: &GroupConfig) -> Result<Vec<Learner>, RuntimeError> {
    let mut learners = group
        .agents
        .iter()
        .map(|cfg| Learner::new(cfg.clone(), CartPole))
        .collect::<Result<Vec<_>, _>>()?;
    let init = learners[0].params().clone();
    for l in learners.iter_mut().skip(1) {
        l.set_params(init.clone());
    }
    Ok(learners)
}

pub fn run_group_sync(
    group: &GroupConfig,
    sinks: Vec<SendSink>,
) -> Result<GroupOutcome, RuntimeError> {
    group.validate()?;
    match group.scheduler {
        Scheduler::Deterministic => sync_sequential(group, sinks),
        Scheduler::Concurrent => sync_threaded(group, sinks),
    }
}

fn sync_sequential(
    group: &GroupConfig,
    mut sinks: Vec<SendSink>,
) -> Result<GroupOutcome, RuntimeError> {
    let mut learners = learners(group)?;
    let n = learners.len();
    let total = group.agents[0].total_epochs;
    let mut records: Vec<Vec<EpochRecord>> = vec![Vec::new(); n];
    let mut failure: Option<(usize, RuntimeError)> = None;

    'epochs: for epoch in 1..=total {
        let mut outputs: Vec<EpochOutput> = Vec::with_capacity(n);
        for (i, l) in learners.iter_mut().enumerate() {
            match l.run_epoch(epoch) {
                Ok(out) => outputs.push(out),
                Err(e) => {
                    failure = Some((i, e));
                    break 'epochs;
                }
            }
        }
        let mean = mean_gradient(&outputs.iter().map(|o| &o.grad).collect::<Vec<_>>());
        for (i, l) in learners.iter_mut().enumerate() {
            if let Err(e) = l.apply(&mean, epoch) {
                failure = Some((i, e));
                break 'epochs;
            }
        }
        for (i, out) in outputs.iter().enumerate() {
            let rec = local_record(learners[i].id(), epoch, out);
            sinks[i].record(&rec);
            records[i].push(rec);
        }
    }

    Ok(finish(learners, records, failure))
}

fn finish(
    learners: Vec<Learner>,
    records: Vec<Vec<EpochRecord>>,
    failure: Option<(usize, RuntimeError)>,
) -> GroupOutcome {
    let failed_id = failure.as_ref().map(|(i, _)| learners[*i].id());
    let mut failure = failure;
    let agents = learners
        .into_iter()
        .zip(records)
        .enumerate()
        .map(|(i, (l, recs))| {
            let error = match &failure {
                Some((f, _)) if *f == i => failure.take().map(|(_, e)| e),
                _ => failed_id.map(RuntimeError::PeerAborted),
            };
            AgentOutcome {
                agent_id: l.id(),
                records: recs,
                final_params: l.params().clone(),
                error,
                pending_at_shutdown: 0,
                send_failures: 0,
                decode_errors: 0,
            }
        })
        .collect();
    GroupOutcome { agents }
}

fn sync_threaded(
    group: &GroupConfig,
    mut sinks: Vec<SendSink>,
) -> Result<GroupOutcome, RuntimeError> {
    let learners = learners(group)?;
    let n = learners.len();
    let total = group.agents[0].total_epochs;
    let slots: Mutex<Vec<Option<GradientVector>>> = Mutex::new(vec![None; n]);
    let barrier = Barrier::new(n);
    let abort = AtomicBool::new(false);

    type WorkerResult = (Learner, Vec<EpochRecord>, Option<RuntimeError>);
    let results: Vec<WorkerResult> = thread::scope(|s| {
        let handles: Vec<_> = learners
            .into_iter()
            .zip(sinks.iter_mut())
            .enumerate()
            .map(|(i, (mut learner, sink))| {
                let slots = &slots;
                let barrier = &barrier;
                let abort = &abort;
                s.spawn(move || {
                    let id = learner.id();
                    let mut records = Vec::with_capacity(total as usize);
                    let mut failed: Option<RuntimeError> = None;
                    for epoch in 1..=total {
                        let mut output = None;
                        if failed.is_none() {
                            match learner.run_epoch(epoch) {
                                Ok(out) => {
                                    slots.lock().expect("slots")[i] = Some(out.grad.clone());
                                    output = Some(out);
                                }
                                Err(e) => {
                                    failed = Some(e);
                                    abort.store(true, Ordering::SeqCst);
                                }
                            }
                        }
                        barrier.wait();
                        if abort.load(Ordering::SeqCst) {
                            break;
                        }
                        let mean = {
                            let guard = slots.lock().expect("slots");
                            let grads: Vec<&GradientVector> = guard
                                .iter()
                                .map(|g| g.as_ref().expect("slot filled"))
                                .collect();
                            mean_gradient(&grads)
                        };
                        barrier.wait();
                        if let Err(e) = learner.apply(&mean, epoch) {
                            failed = Some(e);
                            abort.store(true, Ordering::SeqCst);
                            continue;
                        }
                        let out = output.expect("computed this epoch");
                        let rec = local_record(id, epoch, &out);
                        sink.record(&rec);
                        records.push(rec);
                    }
                    (learner, records, failed)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sync worker panicked"))
            .collect()
    });

    let mut learners = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    let mut failure = None;
    for (i, (l, r, e)) in results.into_iter().enumerate() {
        if let (Some(e), None) = (e, &failure) {
            failure = Some((i, e));
        }
        learners.push(l);
        records.push(r);
    }
    Ok(finish(learners, records, failure))
}
