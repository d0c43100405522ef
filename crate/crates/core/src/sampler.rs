//! Online data collection with a frozen exploration policy, and the
//! interchange formats for the resulting datasets.

use std::io::{Read, Write};

use rand::RngCore;

use crate::covariance::RegularizedCovariance;
use crate::error::{config, contract, Error, Result};
use crate::model::{BanditInstance, Context, InteractionDataset, InteractionRecord};
use crate::policy::ExplorationPolicy;

fn check_dims(policy_dim: Option<usize>, instance: &BanditInstance) -> Result<()> {
    match policy_dim {
        Some(d) if d != instance.dim() => Err(contract(format!(
            "policy dimension {d} does not match instance dimension {}",
            instance.dim()
        ))),
        _ => Ok(()),
    }
}

/// Draws `n` fresh contexts and plays `policy` on each, recording rewards.
///
/// One generator drives contexts, mixture draws and noise, in that order
/// per step.
pub fn sample(
    policy: &dyn ExplorationPolicy,
    instance: &BanditInstance,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<InteractionDataset> {
    if n == 0 {
        return Err(config("the sampler needs N >= 1"));
    }
    check_dims(policy.dim(), instance)?;
    let mut ds = InteractionDataset::new(instance.dim());
    for _ in 0..n {
        let context = instance.draw_context(rng);
        record_step(policy, instance, &context, rng, None, &mut ds)?;
    }
    Ok(ds)
}

/// Plays `policy` over a pre-drawn context stream, with separate generators
/// for the policy's randomization and the reward noise.
pub fn sample_stream<'a>(
    policy: &dyn ExplorationPolicy,
    instance: &BanditInstance,
    contexts: impl IntoIterator<Item = &'a Context>,
    policy_rng: &mut dyn RngCore,
    noise_rng: &mut dyn RngCore,
) -> Result<InteractionDataset> {
    check_dims(policy.dim(), instance)?;
    let mut ds = InteractionDataset::new(instance.dim());
    for context in contexts {
        record_step(policy, instance, context, policy_rng, Some(&mut *noise_rng), &mut ds)?;
    }
    if ds.is_empty() {
        return Err(config("the sampler needs N >= 1"));
    }
    Ok(ds)
}

fn record_step(
    policy: &dyn ExplorationPolicy,
    instance: &BanditInstance,
    context: &Context,
    rng: &mut dyn RngCore,
    noise_rng: Option<&mut dyn RngCore>,
    ds: &mut InteractionDataset,
) -> Result<()> {
    if context.dim() != instance.dim() {
        return Err(contract("context dimension does not match the instance"));
    }
    let action = policy.choose(context, rng);
    let reward = match noise_rng {
        Some(noise) => instance.draw_reward(context, action, noise),
        None => instance.draw_reward(context, action, rng),
    };
    ds.push(InteractionRecord {
        context_id: context.id,
        action_index: action,
        feature: context.feature(action).to_vec(),
        reward,
    })
}

/// `λI + Σ φφᵀ` over the dataset's records (unscaled, `α = 1`).
pub fn dataset_covariance(ds: &InteractionDataset, lambda_reg: f64) -> Result<RegularizedCovariance> {
    let mut cov = RegularizedCovariance::new(ds.dim(), lambda_reg, 1.0)?;
    for r in ds.records() {
        cov.rank_one_update(&r.feature)?;
    }
    cov.refresh();
    Ok(cov)
}

/// Writes `context_id, action_index, f0..f{d-1}, reward` rows.
pub fn write_dataset_csv(ds: &InteractionDataset, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["context_id".to_owned(), "action_index".to_owned()];
    header.extend((0..ds.dim()).map(|i| format!("f{i}")));
    header.push("reward".to_owned());
    out.write_record(&header)?;
    for r in ds.records() {
        let mut row = Vec::with_capacity(ds.dim() + 3);
        row.push(r.context_id.to_string());
        row.push(r.action_index.to_string());
        row.extend(r.feature.iter().map(f64::to_string));
        row.push(r.reward.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset_csv(r: impl Read) -> Result<InteractionDataset> {
    let mut input = csv::Reader::from_reader(r);
    let n_cols = input.headers()?.len();
    if n_cols < 4 {
        return Err(Error::Data("dataset CSV needs at least one feature column".into()));
    }
    let d = n_cols - 3;
    let mut ds = InteractionDataset::new(d);
    for (i, row) in input.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let parse_err = |what: &str| Error::Parse {
            line,
            message: format!("invalid {what}"),
        };
        let context_id = row[0].parse().map_err(|_| parse_err("context_id"))?;
        let action_index = row[1].parse().map_err(|_| parse_err("action_index"))?;
        let feature = (0..d)
            .map(|j| row[2 + j].parse::<f64>().map_err(|_| parse_err("feature")))
            .collect::<Result<Vec<_>>>()?;
        let reward = row[n_cols - 1].parse().map_err(|_| parse_err("reward"))?;
        ds.push(InteractionRecord {
            context_id,
            action_index,
            feature,
            reward,
        })?;
    }
    Ok(ds)
}

const DATASET_MAGIC: &[u8; 8] = b"LXDATA01";

/// Compact little-endian form: magic, d, count, then fixed-size records.
pub fn write_dataset_binary(ds: &InteractionDataset, mut w: impl Write) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&(ds.dim() as u64).to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    for r in ds.records() {
        w.write_all(&r.context_id.to_le_bytes())?;
        w.write_all(&(r.action_index as u64).to_le_bytes())?;
        for v in &r.feature {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&r.reward.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_dataset_binary(mut r: impl Read) -> Result<InteractionDataset> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    if &buf != DATASET_MAGIC {
        return Err(Error::Data("bad dataset magic".into()));
    }
    let mut next = |r: &mut dyn Read| -> Result<u64> {
        r.read_exact(&mut buf)?;
        Ok(u64::from_le_bytes(buf))
    };
    let d = next(&mut r)? as usize;
    let n = next(&mut r)? as usize;
    if d == 0 {
        return Err(Error::Data("dataset dimension is zero".into()));
    }
    let mut ds = InteractionDataset::new(d);
    for _ in 0..n {
        let context_id = next(&mut r)?;
        let action_index = next(&mut r)? as usize;
        let feature = (0..d)
            .map(|_| next(&mut r).map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        let reward = f64::from_bits(next(&mut r)?);
        ds.push(InteractionRecord {
            context_id,
            action_index,
            feature,
            reward,
        })?;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::SingleAction;
    use crate::model::{stream_rng, ActionFeatures, FiniteContexts};
    use std::sync::Arc;

    fn fixed_instance(noise: f64) -> BanditInstance {
        let ctx = Context::new(
            3,
            ActionFeatures::from_rows(vec![vec![0.6, 0.8], vec![0.0, 1.0]]).unwrap(),
        );
        BanditInstance::new(
            "fixed",
            vec![2.0, -1.0],
            noise,
            Arc::new(FiniteContexts::uniform(vec![ctx]).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn zero_samples_rejected() {
        let inst = fixed_instance(0.0);
        let mut rng = stream_rng(0, 0);
        assert!(sample(&SingleAction::new(0), &inst, 0, &mut rng).is_err());
    }

    #[test]
    fn noiseless_single_record() {
        let inst = fixed_instance(0.0);
        let mut rng = stream_rng(0, 0);
        let ds = sample(&SingleAction::new(0), &inst, 1, &mut rng).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.records()[0].reward, 0.6 * 2.0 - 0.8);
        assert_eq!(ds.records()[0].context_id, 3);
    }

    #[test]
    fn deterministic_policy_gives_identical_noiseless_rewards() {
        let inst = fixed_instance(0.0);
        let mut rng = stream_rng(1, 0);
        let ds = sample(&SingleAction::new(1), &inst, 100, &mut rng).unwrap();
        assert_eq!(ds.len(), 100);
        assert!(ds.records().iter().all(|r| r.reward == -1.0));
    }

    #[test]
    fn replay_is_bit_exact() {
        let inst = fixed_instance(1.0);
        let a = sample(&crate::baselines::UniformRandom, &inst, 50, &mut stream_rng(9, 2)).unwrap();
        let b = sample(&crate::baselines::UniformRandom, &inst, 50, &mut stream_rng(9, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let inst = fixed_instance(1.0);
        let ds = sample(&crate::baselines::UniformRandom, &inst, 30, &mut stream_rng(4, 0)).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&ds, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("context_id,action_index,f0,f1,reward\n"));
        assert_eq!(read_dataset_csv(buf.as_slice()).unwrap(), ds);
        let mut bin = Vec::new();
        write_dataset_binary(&ds, &mut bin).unwrap();
        assert_eq!(read_dataset_binary(bin.as_slice()).unwrap(), ds);
    }

    #[test]
    fn malformed_csv_reports_line() {
        let text = "context_id,action_index,f0,reward\n1,0,0.5,1.0\n2,x,0.5,1.0\n";
        match read_dataset_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
