//! Checkpoint files: magic `CPC1`, u32 version, a u32-length-prefixed UTF-8
//! config echo (`key = value` lines), a u32 network count, then per network a
//! u32-length-prefixed name, u64 parameter count and the f32 parameters.
//! All integers little-endian.

use std::fs;
use std::path::Path;

use super::agent::Agent;
use super::config::{Algo, TrainConfig};
use crate::critic::CriticSet;
use crate::envs::make_env;
use crate::error::{Error, FormatError, Result};
use crate::numerics::{Mlp, Rng};
use crate::policy::ConsistencyPolicy;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CPC1";
pub const CHECKPOINT_VERSION: u32 = 1;

fn net_names(mode: Algo) -> Vec<&'static str> {
    let mut names = vec!["policy", "policy_target", "q1", "q2", "q1_target", "q2_target"];
    if mode == Algo::Cpiql {
        names.push("v");
    }
    names
}

fn nets(agent: &Agent) -> Vec<&Mlp> {
    let c = &agent.critics;
    let mut v = vec![
        &agent.policy.net,
        &agent.policy_target.net,
        &c.q1,
        &c.q2,
        &c.q1_target,
        &c.q2_target,
    ];
    if let Some(vn) = &c.v {
        v.push(vn);
    }
    v
}

pub fn write_checkpoint(path: impl AsRef<Path>, cfg: &TrainConfig, agent: &Agent) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let echo = cfg.to_config_string();
    buf.extend_from_slice(&(echo.len() as u32).to_le_bytes());
    buf.extend_from_slice(echo.as_bytes());
    let names = net_names(cfg.mode);
    let nets = nets(agent);
    if names.len() != nets.len() {
        return Err(Error::usage("agent networks do not match the configured mode"));
    }
    buf.extend_from_slice(&(nets.len() as u32).to_le_bytes());
    for (name, net) in names.iter().zip(nets) {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
        for p in net.params() {
            buf.extend_from_slice(&(*p as f32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(FormatError::Truncated {
            expected: (self.pos as u64).saturating_add(n as u64),
            found: self.bytes.len() as u64,
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Reads a checkpoint back into its config and an agent (fresh optimiser state).
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(TrainConfig, Agent)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fmt = |kind| Error::format(path, kind);
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    let magic: [u8; 4] = c.take(4).map_err(fmt)?.try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(fmt(FormatError::BadMagic {
            found: magic,
            expected: CHECKPOINT_MAGIC,
        }));
    }
    let version = c.u32().map_err(fmt)?;
    if version != CHECKPOINT_VERSION {
        return Err(fmt(FormatError::Version(version)));
    }
    let echo_len = c.u32().map_err(fmt)? as usize;
    let echo = std::str::from_utf8(c.take(echo_len).map_err(fmt)?)
        .map_err(|_| fmt(FormatError::Invalid("config echo is not UTF-8".into())))?;
    let cfg = TrainConfig::parse_str(echo)
        .map_err(|e| fmt(FormatError::Invalid(format!("config echo: {e}"))))?;

    // Rebuild the architecture from the config, then overwrite every parameter.
    let env = make_env(&cfg.env_name).map_err(|e| fmt(FormatError::Invalid(e.to_string())))?;
    let mut agent = Agent::new(&cfg, env.spec(), &mut Rng::new(0))
        .map_err(|e| fmt(FormatError::Invalid(format!("cannot rebuild networks: {e}"))))?;
    let names = net_names(cfg.mode);
    let count = c.u32().map_err(fmt)? as usize;
    if count != names.len() {
        return Err(fmt(FormatError::Invalid(format!(
            "expected {} networks, found {count}",
            names.len()
        ))));
    }
    let mut params: Vec<Vec<f64>> = Vec::with_capacity(count);
    for want in &names {
        let len = c.u32().map_err(fmt)? as usize;
        let name = c.take(len).map_err(fmt)?;
        if name != want.as_bytes() {
            return Err(fmt(FormatError::Invalid(format!(
                "expected network {want:?}, found {:?}",
                String::from_utf8_lossy(name)
            ))));
        }
        let n = c.u64().map_err(fmt)?;
        let raw = c.take((n as usize).saturating_mul(4)).map_err(fmt)?;
        params.push(
            raw.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect(),
        );
    }
    if c.pos != bytes.len() {
        return Err(fmt(FormatError::TrailingData {
            expected: c.pos as u64,
            found: bytes.len() as u64,
        }));
    }
    let mut params = params.into_iter();
    let mut load = |net: &mut Mlp, name: &str| -> Result<()> {
        let p = params.next().expect("count checked above");
        net.set_params(&p)
            .map_err(|_| fmt(FormatError::Invalid(format!("network {name:?} has {} parameters, expected {}", p.len(), net.param_count()))))
    };
    load(&mut agent.policy.net, "policy")?;
    load(&mut agent.policy_target.net, "policy_target")?;
    let c = &mut agent.critics;
    load(&mut c.q1, "q1")?;
    load(&mut c.q2, "q2")?;
    load(&mut c.q1_target, "q1_target")?;
    load(&mut c.q2_target, "q2_target")?;
    if let Some(v) = &mut c.v {
        load(v, "v")?;
    }
    Ok((cfg, agent))
}

/// Policy-only view of a checkpoint.
pub fn read_policy(path: impl AsRef<Path>) -> Result<(TrainConfig, ConsistencyPolicy, CriticSet)> {
    let (cfg, agent) = read_checkpoint(path)?;
    Ok((cfg, agent.policy, agent.critics))
}
