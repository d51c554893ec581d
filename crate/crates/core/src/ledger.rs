//! Append-only hash-chained block store with a simulated two-peer
//! endorsement and single-orderer flow.
//!
//! Every committed global model update becomes a block binding the round's
//! aggregated-parameter digest to the chain through the previous block's
//! hash. Peers endorse a proposal by independently re-executing the
//! aggregation and comparing digests, so endorsement is a real integrity
//! check, not a signature. The chain detects any single-byte mutation of a
//! stored field; truncation of trailing blocks is the documented blind spot
//! of a bare hash chain.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::aggregation::{self, ClientUpdate, ServerState, StrategyConfig, StrategyKind};
use crate::error::{Error, Result};
use crate::exec;
use crate::params::{Digest, ParameterSet};
use crate::wire;

/// 32-byte hash serialized as lowercase hex.
mod hex_hash {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(&text).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("hash must be 32 bytes"))
    }
}

/// One ledger entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    #[serde(with = "hex_hash")]
    pub prev_hash: [u8; 32],
    pub round: u64,
    pub strategy_kind: String,
    pub params_digest: Digest,
    pub update_digests: Vec<(u64, Digest)>,
    pub endorsements: Vec<(u64, Digest)>,
    pub timestamp_ms: u64,
    #[serde(with = "hex_hash")]
    pub block_hash: [u8; 32],
}

impl Block {
    /// Canonical encoding of every field before `block_hash`, in declaration
    /// order, using the same primitive encoders as parameter serialization.
    fn hash_input(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        wire::put_u64(&mut buf, self.index);
        wire::put_bytes(&mut buf, &self.prev_hash);
        wire::put_u64(&mut buf, self.round);
        wire::put_str(&mut buf, &self.strategy_kind);
        wire::put_bytes(&mut buf, &self.params_digest.0);
        wire::put_u64(&mut buf, self.update_digests.len() as u64);
        for (client, digest) in &self.update_digests {
            wire::put_u64(&mut buf, *client);
            wire::put_bytes(&mut buf, &digest.0);
        }
        wire::put_u64(&mut buf, self.endorsements.len() as u64);
        for (peer, digest) in &self.endorsements {
            wire::put_u64(&mut buf, *peer);
            wire::put_bytes(&mut buf, &digest.0);
        }
        wire::put_u64(&mut buf, self.timestamp_ms);
        buf
    }

    pub fn compute_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.hash_input());
        hasher.finalize().into()
    }

    fn seal(mut self) -> Block {
        self.block_hash = self.compute_hash();
        self
    }
}

/// Peer and orderer topology plus the endorsement policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LedgerConfig {
    pub peer_count: u64,
    /// Endorsements required to commit. Defaults to all peers (2-of-2).
    pub endorsement_policy: u64,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        Self {
            peer_count: 2,
            endorsement_policy: 2,
        }
    }
}

impl LedgerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.peer_count == 0 {
            return Err(Error::Config("at least one peer required".into()));
        }
        if self.endorsement_policy == 0 || self.endorsement_policy > self.peer_count {
            return Err(Error::Config(format!(
                "endorsement policy {} incompatible with {} peers",
                self.endorsement_policy, self.peer_count
            )));
        }
        Ok(())
    }

    pub fn peers(&self) -> Vec<Peer> {
        (0..self.peer_count).map(|id| Peer { id }).collect()
    }
}

/// A round's proposed global update: the server's claim plus the context a
/// peer needs to re-execute the aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub round: u64,
    pub strategy_kind: StrategyKind,
    pub update_digests: Vec<(u64, Digest)>,
    pub claimed_global: Digest,
    pub prev_global: Digest,
    pub strategy_config: StrategyConfig,
}

/// Build the proposal for a round from the updates the server aggregated and
/// the global parameters it claims resulted.
pub fn propose(
    round: u64,
    strategy_kind: StrategyKind,
    updates: &[ClientUpdate],
    claimed_global: &ParameterSet,
    strategy_config: &StrategyConfig,
    server_state_before: &ServerState,
) -> Result<Proposal> {
    if updates.is_empty() {
        return Err(Error::NoUpdates);
    }
    let update_digests = updates
        .iter()
        .map(|u| Ok((u.client_id, u.params.digest()?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Proposal {
        round,
        strategy_kind,
        update_digests,
        claimed_global: claimed_global.digest()?,
        prev_global: server_state_before.global_params.digest()?,
        strategy_config: *strategy_config,
    })
}

/// A simulated endorsing peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Peer {
    pub id: u64,
}

/// Outcome of one peer's verification. A refusal is a value, not a failure.
#[derive(Debug, Clone, PartialEq)]
pub enum EndorseOutcome {
    Endorsed { peer_id: u64, digest: Digest },
    Refused { peer_id: u64, reason: String },
}

impl EndorseOutcome {
    pub fn is_endorsed(&self) -> bool {
        matches!(self, EndorseOutcome::Endorsed { .. })
    }
}

impl Peer {
    /// Re-execute the strategy over the updates the server claims to have
    /// aggregated and endorse only if every digest matches the proposal.
    pub fn endorse(
        &self,
        proposal: &Proposal,
        updates: &[ClientUpdate],
        server_state_before: &ServerState,
        strategy_config: &StrategyConfig,
    ) -> EndorseOutcome {
        let refuse = |reason: String| EndorseOutcome::Refused {
            peer_id: self.id,
            reason,
        };
        if updates.len() != proposal.update_digests.len() {
            return refuse(format!(
                "proposal lists {} updates, peer holds {}",
                proposal.update_digests.len(),
                updates.len()
            ));
        }
        for (u, (claimed_id, claimed_digest)) in updates.iter().zip(&proposal.update_digests) {
            if u.client_id != *claimed_id {
                return refuse(format!(
                    "update order mismatch: client {} where {} was claimed",
                    u.client_id, claimed_id
                ));
            }
            match u.params.digest() {
                Ok(d) if d == *claimed_digest => {}
                Ok(_) => {
                    return refuse(format!("client {} update digest mismatch", u.client_id));
                }
                Err(e) => return refuse(format!("client {} update undigestable: {e}", u.client_id)),
            }
        }
        let recomputed = match aggregation::aggregate(
            proposal.strategy_kind,
            server_state_before,
            updates,
            strategy_config,
        ) {
            Ok(state) => state.global_params,
            Err(e) => return refuse(format!("re-aggregation failed: {e}")),
        };
        match recomputed.digest() {
            Ok(d) if d == proposal.claimed_global => EndorseOutcome::Endorsed {
                peer_id: self.id,
                digest: d,
            },
            Ok(d) => refuse(format!(
                "recomputed global {d} does not match claimed {}",
                proposal.claimed_global
            )),
            Err(e) => refuse(format!("recomputed global undigestable: {e}")),
        }
    }
}

/// The append-only chain. Single writer (the orderer role); snapshots may be
/// verified concurrently with appends.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Chain {
    blocks: Vec<Block>,
}

impl Chain {
    /// Start a chain with the genesis block: index 0, zero previous hash,
    /// round 0, the initial parameters' digest, endorsements from all peers.
    pub fn genesis(
        initial_params: &ParameterSet,
        config: &LedgerConfig,
        timestamp_ms: u64,
    ) -> Result<Chain> {
        config.validate()?;
        let digest = initial_params.digest()?;
        let endorsements = config.peers().iter().map(|p| (p.id, digest)).collect();
        let block = Block {
            index: 0,
            prev_hash: [0u8; 32],
            round: 0,
            strategy_kind: "genesis".to_string(),
            params_digest: digest,
            update_digests: Vec::new(),
            endorsements,
            timestamp_ms,
            block_hash: [0u8; 32],
        }
        .seal();
        Ok(Chain {
            blocks: vec![block],
        })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn last(&self) -> Option<&Block> {
        self.blocks.last()
    }

    /// Order a proposal into a block once the endorsement policy is met and
    /// every endorsement digest equals the claimed digest.
    pub fn order_and_append(
        &mut self,
        proposal: &Proposal,
        outcomes: &[EndorseOutcome],
        config: &LedgerConfig,
        timestamp_ms: u64,
    ) -> Result<&Block> {
        let endorsements: Vec<(u64, Digest)> = outcomes
            .iter()
            .filter_map(|o| match o {
                EndorseOutcome::Endorsed { peer_id, digest } => Some((*peer_id, *digest)),
                EndorseOutcome::Refused { .. } => None,
            })
            .collect();
        if (endorsements.len() as u64) < config.endorsement_policy {
            let refusals: Vec<String> = outcomes
                .iter()
                .filter_map(|o| match o {
                    EndorseOutcome::Refused { peer_id, reason } => {
                        Some(format!("peer {peer_id}: {reason}"))
                    }
                    _ => None,
                })
                .collect();
            return Err(Error::ProposalRejected(format!(
                "{} of {} endorsements (policy {}); {}",
                endorsements.len(),
                outcomes.len(),
                config.endorsement_policy,
                refusals.join("; ")
            )));
        }
        if let Some((peer, digest)) = endorsements
            .iter()
            .find(|(_, d)| *d != proposal.claimed_global)
        {
            return Err(Error::ProposalRejected(format!(
                "peer {peer} endorsed digest {digest}, proposal claims {}",
                proposal.claimed_global
            )));
        }
        let prev = self
            .blocks
            .last()
            .ok_or_else(|| Error::Ledger("cannot append before genesis".into()))?;
        let block = Block {
            index: prev.index + 1,
            prev_hash: prev.block_hash,
            round: proposal.round,
            strategy_kind: proposal.strategy_kind.name().to_string(),
            params_digest: proposal.claimed_global,
            update_digests: proposal.update_digests.clone(),
            endorsements,
            timestamp_ms,
            block_hash: [0u8; 32],
        }
        .seal();
        self.blocks.push(block);
        Ok(self.blocks.last().unwrap())
    }

    /// Recompute every hash and linkage, and replay round monotonicity.
    pub fn verify(&self) -> ChainReport {
        for (i, block) in self.blocks.iter().enumerate() {
            if block.index != i as u64 {
                return ChainReport::invalid(i, format!("index field is {}", block.index));
            }
            let expected_prev = if i == 0 {
                [0u8; 32]
            } else {
                self.blocks[i - 1].block_hash
            };
            if block.prev_hash != expected_prev {
                return ChainReport::invalid(i, "prev_hash does not match prior block".into());
            }
            if block.compute_hash() != block.block_hash {
                return ChainReport::invalid(i, "block hash mismatch".into());
            }
            if i == 0 {
                if block.round != 0 {
                    return ChainReport::invalid(i, format!("genesis round is {}", block.round));
                }
            } else if block.round <= self.blocks[i - 1].round {
                return ChainReport::invalid(
                    i,
                    format!(
                        "round {} does not increase over {}",
                        block.round,
                        self.blocks[i - 1].round
                    ),
                );
            }
            if let Some((peer, digest)) = block
                .endorsements
                .iter()
                .find(|(_, d)| *d != block.params_digest)
            {
                return ChainReport::invalid(
                    i,
                    format!("endorsement by peer {peer} carries digest {digest}"),
                );
            }
        }
        ChainReport::Valid {
            blocks: self.blocks.len(),
        }
    }

    /// Endorsements for a proposal from every configured peer, computed
    /// independently (and in parallel when enabled).
    pub fn collect_endorsements(
        proposal: &Proposal,
        updates: &[ClientUpdate],
        server_state_before: &ServerState,
        strategy_config: &StrategyConfig,
        config: &LedgerConfig,
    ) -> Vec<EndorseOutcome> {
        let peers = config.peers();
        exec::map_indexed(peers.len(), |i| {
            peers[i].endorse(proposal, updates, server_state_before, strategy_config)
        })
    }

    /// Persist as JSON Lines, one block per line, digests lowercase hex.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for block in &self.blocks {
            serde_json::to_writer(&mut file, block)?;
            file.write_all(b"\n")?;
        }
        file.flush()?;
        Ok(())
    }

    /// Load a chain previously written by [`write_jsonl`](Self::write_jsonl).
    pub fn read_jsonl(path: &Path) -> Result<Chain> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut blocks = Vec::new();
        for (i, line) in file.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let block: Block = serde_json::from_str(&line).map_err(|e| {
                Error::Ledger(format!("line {}: unparseable block: {e}", i + 1))
            })?;
            blocks.push(block);
        }
        Ok(Chain { blocks })
    }

    /// Test-oriented constructor for verification of externally built chains.
    pub fn from_blocks(blocks: Vec<Block>) -> Chain {
        Chain { blocks }
    }
}

/// Verification result; a report, never a failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChainReport {
    Valid { blocks: usize },
    Invalid { index: usize, reason: String },
}

impl ChainReport {
    fn invalid(index: usize, reason: String) -> ChainReport {
        ChainReport::Invalid { index, reason }
    }

    pub fn is_valid(&self) -> bool {
        matches!(self, ChainReport::Valid { .. })
    }
}
