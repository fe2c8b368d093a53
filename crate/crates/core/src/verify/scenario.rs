use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::anchors::{select_anchors, AnchorSet};
use super::metrics::{MetricsReport, RocCurve, DEFAULT_TPR_TARGETS};
use crate::model::{Embedding, FingerprintModel};
use crate::seed::derive;
use crate::sigcore::Waveform;
use crate::synth::{make_profile, replay, rng_from_seed, Attacker, MessageRecord};
use crate::{Error, Result};

const ANCHOR_TAG: u64 = 0x414e_4348;
const STALE_TAG: u64 = 0x5354_414c;
const NEGATIVE_TAG: u64 = 0x4e45_4741;
const REPLAY_TAG: u64 = 0x5245_504c;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Genuine messages against their own and other transmitters' anchors.
    Closed,
    /// Genuine messages against replayed copies of the same transmitter.
    Replay,
    /// The closed protocol on transmitters excluded from training.
    Heldout,
    /// Later messages against training-era (stale) and later (fresh) anchors.
    Timegap,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Closed, Scenario::Replay, Scenario::Heldout, Scenario::Timegap];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Closed => "closed",
            Scenario::Replay => "replay",
            Scenario::Heldout => "heldout",
            Scenario::Timegap => "timegap",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?} (closed, replay, heldout, timegap)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub anchor_counts: Vec<usize>,
    pub seed: u64,
    /// Cap on wrong-transmitter pairs, as a multiple of the positive count.
    pub max_negative_ratio: usize,
    pub tpr_targets: Vec<f64>,
    pub attacker_seed: u64,
    pub attacker_severity: f64,
    pub attacker_quantization_bits: Option<u32>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            anchor_counts: vec![1, 4, 16, 32],
            seed: 0,
            max_negative_ratio: 10,
            tpr_targets: DEFAULT_TPR_TARGETS.to_vec(),
            attacker_seed: 0xA77A_C4E5,
            attacker_severity: 1.0,
            attacker_quantization_bits: Some(8),
        }
    }
}

impl ScenarioConfig {
    /// Attacker built from the seed, severity and quantization settings.
    pub fn attacker(&self) -> Result<Attacker> {
        let mut a = Attacker::new(make_profile(self.attacker_seed, self.attacker_severity)?);
        a.quantization_bits = self.attacker_quantization_bits;
        Ok(a)
    }

    fn validate(&self) -> Result<()> {
        if self.anchor_counts.is_empty() || self.anchor_counts.contains(&0) {
            return Err(Error::Config(format!("anchor counts must be >= 1, got {:?}", self.anchor_counts)));
        }
        if self.max_negative_ratio == 0 {
            return Err(Error::Config("max_negative_ratio must be >= 1".into()));
        }
        Ok(())
    }

    fn max_anchors(&self) -> usize {
        self.anchor_counts.iter().copied().max().unwrap_or(1)
    }
}

/// Data for a scenario run.
///
/// `records` is the evaluation pool from the training era. `later` holds the
/// later capture for `timegap`; `heldout` names the transmitters excluded
/// from training for `heldout`; `attacker` overrides the attacker that
/// `replay` otherwise builds from the config.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScenarioInputs<'a> {
    pub records: &'a [MessageRecord],
    pub later: Option<&'a [MessageRecord]>,
    pub heldout: Option<&'a BTreeSet<u32>>,
    pub attacker: Option<&'a Attacker>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub metrics: MetricsReport,
    pub roc: RocCurve,
}

fn by_transmitter<'a>(records: impl IntoIterator<Item = &'a MessageRecord>) -> BTreeMap<u32, Vec<&'a MessageRecord>> {
    let mut m: BTreeMap<u32, Vec<&MessageRecord>> = BTreeMap::new();
    for r in records {
        m.entry(r.transmitter_id).or_default().push(r);
    }
    m
}

fn encode_records(model: &FingerprintModel, recs: &[&MessageRecord]) -> Result<Vec<Embedding>> {
    let ws: Vec<&Waveform> = recs.iter().map(|r| &r.waveform).collect();
    model.encode_many(&ws)
}

/// A probe message and the transmitter it claims to be.
struct Probe {
    tx: u32,
    embedding: Embedding,
}

/// Reports for the closed protocol: each probe against its own transmitter's
/// anchors (positives) and against other transmitters' anchors (negatives).
/// The negative pairs are subsampled once, so every anchor count scores the
/// same pairs.
fn closed_reports(
    label: &str,
    anchors: &BTreeMap<u32, AnchorSet>,
    probes: &[Probe],
    cfg: &ScenarioConfig,
) -> Result<Vec<ScenarioReport>> {
    if anchors.len() < 2 {
        return Err(Error::Config(format!("{label}: need at least 2 transmitters, have {}", anchors.len())));
    }
    let txs: Vec<u32> = anchors.keys().copied().collect();
    let others = txs.len() - 1;
    let total = probes.len() * others;
    let cap = cfg.max_negative_ratio * probes.len();
    let mut picks: Vec<usize> = if total > cap {
        sample(&mut rng_from_seed(derive(&[cfg.seed, NEGATIVE_TAG])), total, cap).into_vec()
    } else {
        (0..total).collect()
    };
    picks.sort_unstable();
    let pairs: Vec<(usize, u32)> = picks
        .into_iter()
        .map(|k| {
            let (p, o) = (k / others, k % others);
            let own = probes[p].tx;
            let wrong: Vec<u32> = txs.iter().copied().filter(|&t| t != own).collect();
            (p, wrong[o])
        })
        .collect();

    let mut out = Vec::with_capacity(cfg.anchor_counts.len());
    for &n in &cfg.anchor_counts {
        let sets: BTreeMap<u32, AnchorSet> =
            anchors.iter().map(|(&t, a)| Ok((t, a.truncated(n)?))).collect::<Result<_>>()?;
        let pos = probes.iter().map(|p| sets[&p.tx].score_embedding(&p.embedding)).collect::<Result<Vec<_>>>()?;
        let neg = pairs
            .iter()
            .map(|&(p, t)| sets[&t].score_embedding(&probes[p].embedding))
            .collect::<Result<Vec<_>>>()?;
        let (metrics, roc) = MetricsReport::from_scores(label, n, &pos, &neg, &cfg.tpr_targets)?;
        out.push(ScenarioReport { metrics, roc });
    }
    Ok(out)
}

fn anchor_seed(cfg: &ScenarioConfig, tx: u32, tag: u64) -> u64 {
    derive(&[cfg.seed, tag, u64::from(tx)])
}

fn check_pool(groups: &BTreeMap<u32, Vec<&MessageRecord>>, need: usize, what: &str) -> Result<()> {
    let short: Vec<String> = groups
        .iter()
        .filter(|(_, v)| v.len() < need)
        .map(|(t, v)| format!("{t} ({})", v.len()))
        .collect();
    if short.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what}: every transmitter needs {need} records; short: [{}]", short.join(", "))))
    }
}

fn closed_like(
    label: &str,
    model: &FingerprintModel,
    records: &[&MessageRecord],
    cfg: &ScenarioConfig,
) -> Result<Vec<ScenarioReport>> {
    let groups = by_transmitter(records.iter().copied());
    let n_max = cfg.max_anchors();
    check_pool(&groups, n_max + 1, label)?;
    let mut anchors = BTreeMap::new();
    let mut probes = Vec::new();
    for (&tx, recs) in &groups {
        let (a, rest) = select_anchors(recs, n_max, anchor_seed(cfg, tx, ANCHOR_TAG))?;
        anchors.insert(tx, AnchorSet::from_records(model, &a)?);
        probes.extend(encode_records(model, &rest)?.into_iter().map(|embedding| Probe { tx, embedding }));
    }
    closed_reports(label, &anchors, &probes, cfg)
}

fn replay_reports(
    model: &FingerprintModel,
    records: &[&MessageRecord],
    attacker: &Attacker,
    cfg: &ScenarioConfig,
) -> Result<Vec<ScenarioReport>> {
    let groups = by_transmitter(records.iter().copied());
    let n_max = cfg.max_anchors();
    check_pool(&groups, n_max + 2, "replay")?;
    let mut anchors = BTreeMap::new();
    let mut genuine = Vec::new();
    let mut replayed = Vec::new();
    for (&tx, recs) in &groups {
        let (a, rest) = select_anchors(recs, n_max, anchor_seed(cfg, tx, ANCHOR_TAG))?;
        anchors.insert(tx, AnchorSet::from_records(model, &a)?);
        // Alternate the shuffled remainder between genuine probes and replay sources.
        let (gen, src): (Vec<(usize, &&MessageRecord)>, Vec<_>) = rest.iter().enumerate().partition(|(k, _)| k % 2 == 0);
        let gen: Vec<&MessageRecord> = gen.into_iter().map(|(_, r)| *r).collect();
        genuine.extend(encode_records(model, &gen)?.into_iter().map(|embedding| Probe { tx, embedding }));
        let copies = src
            .into_iter()
            .map(|(_, r)| {
                let mut rng = rng_from_seed(derive(&[cfg.seed, REPLAY_TAG, u64::from(r.transmitter_id), r.message_id]));
                replay(&r.waveform, attacker, &mut rng)
            })
            .collect::<Result<Vec<Waveform>>>()?;
        let refs: Vec<&Waveform> = copies.iter().collect();
        replayed.extend(model.encode_many(&refs)?.into_iter().map(|embedding| Probe { tx, embedding }));
    }
    let mut out = Vec::with_capacity(cfg.anchor_counts.len());
    for &n in &cfg.anchor_counts {
        let score = |p: &Probe| anchors[&p.tx].truncated(n)?.score_embedding(&p.embedding);
        let pos = genuine.iter().map(score).collect::<Result<Vec<_>>>()?;
        let neg = replayed.iter().map(score).collect::<Result<Vec<_>>>()?;
        let (metrics, roc) = MetricsReport::from_scores("replay", n, &pos, &neg, &cfg.tpr_targets)?;
        out.push(ScenarioReport { metrics, roc });
    }
    Ok(out)
}

fn timegap_reports(
    model: &FingerprintModel,
    era: &[&MessageRecord],
    later: &[&MessageRecord],
    cfg: &ScenarioConfig,
) -> Result<Vec<ScenarioReport>> {
    let n_max = cfg.max_anchors();
    let old = by_transmitter(era.iter().copied());
    let new = by_transmitter(later.iter().copied());
    let shared: BTreeSet<u32> = old.keys().filter(|t| new.contains_key(t)).copied().collect();
    let old: BTreeMap<u32, Vec<&MessageRecord>> = old.into_iter().filter(|(t, _)| shared.contains(t)).collect();
    let new: BTreeMap<u32, Vec<&MessageRecord>> = new.into_iter().filter(|(t, _)| shared.contains(t)).collect();
    check_pool(&old, n_max + 1, "timegap (training-era pool)")?;
    check_pool(&new, n_max + 1, "timegap (later pool)")?;
    let mut stale = BTreeMap::new();
    let mut fresh = BTreeMap::new();
    let mut probes = Vec::new();
    for &tx in &shared {
        let (a, _) = select_anchors(&old[&tx], n_max, anchor_seed(cfg, tx, STALE_TAG))?;
        stale.insert(tx, AnchorSet::from_records(model, &a)?);
        let (a, rest) = select_anchors(&new[&tx], n_max, anchor_seed(cfg, tx, ANCHOR_TAG))?;
        fresh.insert(tx, AnchorSet::from_records(model, &a)?);
        probes.extend(encode_records(model, &rest)?.into_iter().map(|embedding| Probe { tx, embedding }));
    }
    let s = closed_reports("timegap-stale", &stale, &probes, cfg)?;
    let f = closed_reports("timegap-fresh", &fresh, &probes, cfg)?;
    Ok(s.into_iter().zip(f).flat_map(|(a, b)| [a, b]).collect())
}

/// Runs one evaluation scenario, returning one report per anchor count (two
/// per count for `timegap`: stale then fresh).
///
/// Anchors are a shuffle split of each transmitter's records; smaller anchor
/// counts use a prefix of the largest set, so the probes are the same for
/// every count.
pub fn run_scenario(
    model: &FingerprintModel,
    scenario: Scenario,
    cfg: &ScenarioConfig,
    inputs: &ScenarioInputs<'_>,
) -> Result<Vec<ScenarioReport>> {
    cfg.validate()?;
    let pool: Vec<&MessageRecord> = inputs.records.iter().collect();
    match scenario {
        Scenario::Closed => closed_like("closed", model, &pool, cfg),
        Scenario::Replay => {
            let built;
            let attacker = match inputs.attacker {
                Some(a) => a,
                None => {
                    built = cfg.attacker()?;
                    &built
                }
            };
            replay_reports(model, &pool, attacker, cfg)
        }
        Scenario::Heldout => {
            let ids = inputs
                .heldout
                .ok_or_else(|| Error::Config("heldout scenario needs the held-out transmitter ids".into()))?;
            let kept: Vec<&MessageRecord> = pool.into_iter().filter(|r| ids.contains(&r.transmitter_id)).collect();
            closed_like("heldout", model, &kept, cfg)
        }
        Scenario::Timegap => {
            let later = inputs
                .later
                .ok_or_else(|| Error::Config("timegap scenario needs a later dataset".into()))?;
            let later: Vec<&MessageRecord> = later.iter().collect();
            timegap_reports(model, &pool, &later, cfg)
        }
    }
}
