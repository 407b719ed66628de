//! Contract-coordinated mode: every DER is a peer that mines, gossips, and
//! keeps its own replayed view of the feeder contracts.
//!
//! Timeline of period `k` (length `T`):
//! - `kT`: every agent reads the round-`k` election from its own view and
//!   actuates; the elected DER sends its withdraw.
//! - uniform in `[kT, kT + lock_fraction*T - guard)`: each active DER sends its
//!   round-`k+1` demand, deferred until it sees round `k` settled.
//! - `kT + lock_fraction*T`: every active DER sends the round-`k+1` lock.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use super::config::{RunMode, Scenario};
use super::plant::simulate_grid;
use super::report::{ChainStats, ConsensusStats, CreditAudit, ElectionRecord, RunReport};
use super::{controlled_feeders, expect_mode, histories, initial_ledger, RunError};
use crate::chain::{
    agent_mining_rate, assemble_block, next_block_delay, Action, Block, ChainView, ContractBook, ContractState,
    Genesis, KeyStub, Phase, Receipt, UpdateSigner,
};
use crate::control::{demand_stream, draw_demand, Credit, DemandVector, DerId};
use crate::costs::{empirical_cost_report, CostCategory, CostCounters};
use crate::digest::DigestMap;
use crate::netsim::{build_topology, from_seconds, Dedup, EventQueue, LatencyModel, Message, SimTime, Topology};
use crate::streams::{fork, Stream};

enum Ev {
    PeriodStart(u64),
    SendDemand { agent: usize, round: u64 },
    SendLock(u64),
    Mine(usize),
    Deliver { to: usize, from: usize, msg: Message },
}

struct Agent {
    id: DerId,
    active_from: u64,
    view: ChainView,
    seen: Dedup,
    mine_rng: Stream,
    pending_demand: Option<u64>,
    last_withdraw: Option<u64>,
}

struct Sim<'a> {
    s: &'a Scenario,
    agents: Vec<Agent>,
    topo: Topology,
    queue: EventQueue<Ev>,
    net_rng: Stream,
    latency: LatencyModel,
    signer: UpdateSigner,
    costs: CostCounters,
    period_us: SimTime,
    mining_rate: f64,
    archive: DigestMap<Arc<Block>>,
    blocks_mined: u64,
    transmissions: u64,
    transmitted_bits: u64,
    consensus: ConsensusStats,
    audit: CreditAudit,
    feeders: Vec<u16>,
    feeder_credit: BTreeMap<u16, Credit>,
    previous: BTreeMap<u16, DerId>,
    schedule: Vec<Vec<Option<DerId>>>,
    elections: Vec<ElectionRecord>,
}

/// Genesis fixes the initial credit split and runs round 0 in full: its
/// demands are escrowed and its VSC elected, so the first withdraw settles.
fn genesis(s: &Scenario, signer: &mut UpdateSigner) -> Genesis {
    let mut book = ContractBook::new();
    for (f, ders) in controlled_feeders(s) {
        let ledger = initial_ledger(s, f, &ders);
        let mut state = ContractState::collecting(f, 0, ledger.clone());
        for (der, credit) in ledger.iter() {
            let amount = draw_demand(credit, &mut demand_stream(s.seed, der, 0));
            let upd = signer.make_update(Action::Demand(amount), der, f, 0);
            state.try_apply(&upd, signer.keys()).expect("genesis demand is valid");
        }
        let lock = signer.make_update(Action::Lock, ders[0], f, 0);
        state.try_apply(&lock, signer.keys()).expect("genesis lock is valid");
        book.insert(f, Arc::new(state));
    }
    Genesis::new(book)
}

/// The genesis a run of `s` starts from.
pub fn genesis_for(s: &Scenario) -> Genesis {
    genesis(s, &mut UpdateSigner::new(KeyStub::new(s.seed)))
}

pub fn run_blockchain(s: &Scenario) -> Result<RunReport, RunError> {
    expect_mode(s, RunMode::Blockchain)?;
    let all = s.all_ders();
    let topo = build_topology(all.len(), s.network.peers, &mut fork(s.seed, "topology", 0, 0))?;
    run_with_topology(s, topo)
}

/// Runs the contract mode over a caller-supplied peer graph.
pub fn run_with_topology(s: &Scenario, topo: Topology) -> Result<RunReport, RunError> {
    expect_mode(s, RunMode::Blockchain)?;
    s.validate()?;
    let all = s.all_ders();
    assert_eq!(topo.len(), all.len(), "topology must cover every DER");
    let keys = KeyStub::new(s.seed);
    let mut signer = UpdateSigner::new(keys.clone());
    let gen = genesis(s, &mut signer);
    let agents = all
        .iter()
        .map(|&(id, active_from)| Agent {
            id,
            active_from,
            view: ChainView::new(&gen, s.chain.mining, keys.clone()),
            seen: Dedup::default(),
            mine_rng: fork(s.seed, "mine", id.key(), 0),
            pending_demand: None,
            last_withdraw: None,
        })
        .collect::<Vec<_>>();
    let feeders: Vec<u16> = gen.book.keys().copied().collect();
    let previous = gen
        .book
        .iter()
        .map(|(f, c)| (*f, c.last_election.as_ref().expect("genesis elects").elected))
        .collect();
    let mut sim = Sim {
        s,
        topo,
        queue: EventQueue::new(),
        net_rng: fork(s.seed, "network", 0, 0),
        latency: s.network.latency(),
        signer,
        costs: CostCounters::new(all.iter().map(|&(d, _)| d).collect(), s.periods as usize),
        period_us: from_seconds(s.control_period_s),
        mining_rate: agent_mining_rate(s.chain.block_period_s, all.len()),
        archive: DigestMap::default(),
        blocks_mined: 0,
        transmissions: 0,
        transmitted_bits: 0,
        consensus: ConsensusStats::default(),
        audit: CreditAudit::default(),
        feeder_credit: feeders.iter().map(|&f| (f, s.feeder_credit(f))).collect(),
        feeders,
        previous,
        schedule: vec![vec![None; s.feeder_count()]; s.periods as usize],
        elections: Vec::new(),
        agents,
    };
    sim.run();
    sim.finish()
}

impl Sim<'_> {
    fn run(&mut self) {
        self.queue.schedule(0, Ev::PeriodStart(0));
        for a in 0..self.agents.len() {
            let delay = next_block_delay(&mut self.agents[a].mine_rng, self.mining_rate);
            self.queue.schedule(from_seconds(delay), Ev::Mine(a));
        }
        let horizon = self.period_us * self.s.periods;
        while let Some((now, ev)) = self.queue.pop_next() {
            if now > horizon {
                break;
            }
            match ev {
                Ev::PeriodStart(k) => {
                    if !self.period_start(now, k) {
                        break;
                    }
                }
                Ev::SendDemand { agent, round } => self.demand_due(now, agent, round),
                Ev::SendLock(round) => self.send_locks(now, round),
                Ev::Mine(a) => self.mine(now, a),
                Ev::Deliver { to, from, msg } => self.deliver(now, to, from, msg),
            }
        }
    }

    fn period_of(&self, now: SimTime) -> usize {
        (now / self.period_us) as usize
    }

    /// Returns false at the closing boundary of the horizon.
    fn period_start(&mut self, now: SimTime, k: u64) -> bool {
        for a in &self.agents {
            for (f, c) in a.view.tip_state() {
                self.audit.check(c.total_credit() == self.feeder_credit[f]);
            }
        }
        if k == self.s.periods {
            return false;
        }
        self.actuate(k);
        for a in &mut self.agents {
            a.seen.rotate();
            a.view.prune(self.s.chain.prune_depth);
        }
        for a in 0..self.agents.len() {
            self.poll(now, a);
        }

        let s = self.s;
        let window = from_seconds(s.lock_fraction * s.control_period_s - s.demand_guard_s).max(1);
        for a in 0..self.agents.len() {
            let agent = &self.agents[a];
            if agent.active_from > k || !self.feeder_credit.contains_key(&agent.id.feeder) {
                continue;
            }
            let offset = fork(s.seed, "demand_time", agent.id.key(), k + 1).random_range(0..window);
            self.queue.schedule(now + offset, Ev::SendDemand { agent: a, round: k + 1 });
        }
        self.queue.schedule(now + from_seconds(s.lock_fraction * s.control_period_s), Ev::SendLock(k + 1));
        self.queue.schedule(now + self.period_us, Ev::PeriodStart(k + 1));
        true
    }

    /// Every agent reads its own copy of each contract; the period's VSC is
    /// actuated only when all of them agree.
    fn actuate(&mut self, k: u64) {
        for i in 0..self.feeders.len() {
            let f = self.feeders[i];
            let mut agreed: Option<DerId> = None;
            let (mut have, mut split) = (0usize, false);
            for a in &self.agents {
                if let Some(e) = a.view.contract(f).and_then(|c| c.last_election.as_ref()).filter(|e| e.round == k) {
                    have += 1;
                    if agreed.is_some_and(|x| x != e.elected) {
                        split = true;
                    }
                    agreed.get_or_insert(e.elected);
                }
            }
            let record = if have == self.agents.len() && !split {
                let elected = agreed.expect("at least one agent");
                let demands = self.agents[0].view.contract(f).and_then(|c| c.last_election.clone()).expect("checked").demands;
                self.previous.insert(f, elected);
                ElectionRecord { period: k, feeder: f, elected, demands }
            } else {
                if have == 0 {
                    self.consensus.stale_periods += 1;
                } else {
                    self.consensus.desync_events += 1;
                }
                ElectionRecord { period: k, feeder: f, elected: self.previous[&f], demands: DemandVector::new(k) }
            };
            self.schedule[k as usize][usize::from(f) - 1] = Some(record.elected);
            self.elections.push(record);
        }
    }

    fn demand_due(&mut self, now: SimTime, a: usize, round: u64) {
        self.agents[a].pending_demand = Some(round);
        self.poll(now, a);
    }

    /// Sends whatever the agent's view now allows: a deferred demand once the
    /// previous round has settled, and the withdraw once it is elected.
    fn poll(&mut self, now: SimTime, a: usize) {
        let agent = &self.agents[a];
        let Some(c) = agent.view.contract(agent.id.feeder) else {
            return;
        };
        let (id, period, phase, elected) = (agent.id, c.period, c.phase, c.elected);
        if let Some(round) = agent.pending_demand {
            if period == round && phase == Phase::Collecting {
                let credit = c.ledger.get(id).unwrap_or(Credit::ZERO);
                let amount = draw_demand(credit, &mut demand_stream(self.s.seed, id, round));
                self.agents[a].pending_demand = None;
                self.originate(now, a, Action::Demand(amount), round);
            } else if period > round || (period == round && phase == Phase::Locked) {
                self.agents[a].pending_demand = None;
                self.consensus.missed_demands += 1;
            }
        }
        let agent = &self.agents[a];
        let current = now / self.period_us;
        if phase == Phase::Locked && elected == Some(id) && period <= current && agent.last_withdraw != Some(period) {
            self.agents[a].last_withdraw = Some(period);
            self.originate(now, a, Action::Withdraw, period);
        }
    }

    fn send_locks(&mut self, now: SimTime, round: u64) {
        for a in 0..self.agents.len() {
            let agent = &self.agents[a];
            if agent.active_from >= round || !self.feeder_credit.contains_key(&agent.id.feeder) {
                continue;
            }
            if agent.pending_demand == Some(round) {
                self.agents[a].pending_demand = None;
                self.consensus.missed_demands += 1;
            }
            self.originate(now, a, Action::Lock, round);
        }
    }

    /// Signs an update, pools it locally, and sends it to every peer.
    fn originate(&mut self, now: SimTime, a: usize, action: Action, round: u64) {
        let id = self.agents[a].id;
        let upd = self.signer.make_update(action, id, id.feeder, round);
        let msg = Message::Update(Arc::new(upd.clone()));
        self.agents[a].seen.first_sight(msg.digest());
        self.agents[a].view.offer_update(upd);
        let cat = match action {
            Action::Demand(_) => CostCategory::OwnUpdate,
            Action::Lock | Action::Withdraw => CostCategory::OwnControl,
        };
        self.send(now, a, None, &msg, cat);
    }

    fn mine(&mut self, now: SimTime, a: usize) {
        let agent = &mut self.agents[a];
        let block = assemble_block(&agent.view, agent.id, now, self.s.chain.max_block_updates, &mut agent.mine_rng);
        let block = Arc::new(block);
        self.blocks_mined += 1;
        self.archive.insert(block.hash, Arc::clone(&block));
        agent.seen.first_sight(block.hash);
        // Built on the miner's own tip, so there is nothing to verify.
        let ext = agent.view.extend_chain(Arc::clone(&block));
        let delay = next_block_delay(&mut agent.mine_rng, self.mining_rate);
        self.queue.schedule(now + from_seconds(delay).max(1), Ev::Mine(a));
        if ext.tip_changed {
            self.poll(now, a);
        }
        self.send(now, a, None, &Message::Block(block), CostCategory::OwnBlock);
    }

    fn deliver(&mut self, now: SimTime, to: usize, from: usize, msg: Message) {
        let agent = &mut self.agents[to];
        if !agent.seen.first_sight(msg.digest()) {
            return;
        }
        let (cat, tip_changed) = match &msg {
            Message::Update(u) => {
                agent.view.offer_update((**u).clone());
                (CostCategory::RelayUpdate, false)
            }
            Message::Block(b) => match agent.view.receive_block(Arc::clone(b)) {
                Receipt::Invalid => return,
                Receipt::Accepted(e) => (CostCategory::RelayBlock, e.tip_changed),
                Receipt::Known | Receipt::Orphaned => (CostCategory::RelayBlock, false),
            },
        };
        if tip_changed {
            self.poll(now, to);
        }
        self.send(now, to, Some(from), &msg, cat);
    }

    /// One transmission per peer (except the one it came from), each with its
    /// own latency; the sender pays every transmission.
    fn send(&mut self, now: SimTime, a: usize, except: Option<usize>, msg: &Message, cat: CostCategory) {
        let bits = msg.size_bits(self.s.costs.l_u, self.s.costs.l_b);
        let period = self.period_of(now);
        for i in 0..self.topo.degree(a) {
            let to = self.topo.peers(a)[i];
            if Some(to) == except {
                continue;
            }
            self.costs.record(period, a, cat, bits);
            if period < self.s.periods as usize {
                self.transmissions += 1;
                self.transmitted_bits += bits;
            }
            let at = now + self.latency.sample_us(&mut self.net_rng);
            self.queue.schedule(at, Ev::Deliver { to, from: a, msg: msg.clone() });
        }
    }

    fn finish(self) -> Result<RunReport, RunError> {
        let s = self.s;
        let lead = &self.agents[0].view;
        let mut chain_dump = Vec::new();
        let mut cur = lead.tip();
        while let Some(b) = self.archive.get(&cur) {
            chain_dump.push(Arc::clone(b));
            cur = b.parent;
        }
        chain_dump.reverse();
        let stats = self.agents.iter().map(|a| a.view.stats());
        let mut chain = ChainStats {
            blocks_mined: self.blocks_mined,
            canonical_height: lead.tip_height(),
            orphaned_blocks: self.blocks_mined - lead.tip_height(),
            updates_included: chain_dump.iter().map(|b| b.updates.len() as u64).sum(),
            transmissions: self.transmissions,
            transmitted_bits: self.transmitted_bits,
            ..ChainStats::default()
        };
        for st in stats {
            chain.reorgs += st.reorgs;
            chain.max_reorg_depth = chain.max_reorg_depth.max(st.max_reorg_depth);
            chain.max_mempool = chain.max_mempool.max(st.max_mempool);
            chain.restored_updates += st.restored_updates;
        }
        let final_ledgers = lead.tip_state().iter().map(|(f, c)| (*f, c.ledger.clone())).collect();
        let final_escrow = lead.tip_state().iter().map(|(f, c)| (*f, c.escrow)).collect();
        let voltage = simulate_grid(s, &self.schedule)?;
        let degrees = self.topo.degrees();
        let mean_degree = degrees.iter().sum::<usize>() as f64 / degrees.len() as f64;
        let costs = empirical_cost_report(&self.costs, &s.cost_params(mean_degree), &degrees);
        Ok(RunReport {
            scenario: s.clone(),
            histories: histories(s, &self.elections)?,
            elections: self.elections,
            voltage,
            costs,
            credit_audit: self.audit,
            consensus: self.consensus,
            chain: Some(chain),
            chain_dump,
            final_ledgers,
            final_escrow,
        })
    }
}
