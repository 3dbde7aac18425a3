//! Multi-worker execution of MP-AMP: `P` node workers plus a fusion-center
//! worker exchanging framed messages, with exact byte accounting.
//!
//! Workers communicate only through encoded [`wire`] frames, over in-process
//! channels by default or local TCP sockets; both transports carry identical
//! bytes, so the protocol is testable byte-for-byte without network
//! flakiness. Rounds are strictly synchronous: the fusion center broadcasts
//! `(g, x_t)` with the round's rate in the frame header, every node replies
//! with exactly one estimate frame, and a straggler is a timeout error
//! naming the node, never a silent skip. The fusion center accumulates node
//! messages in node-id order whatever the arrival order, so fused sums are
//! deterministic.
//!
//! Each node worker holds only its own row slice of the measurement matrix
//! and the matching measurements; the slice is copied in at spawn time, so
//! out-of-partition access is impossible by construction.
//!
//! Byte accounting: the billed uplink for a round at rate `R` is
//! `P * ceil(N * R / 8)` (the information-theoretic budget of the schedule),
//! while the transported column records the payload bytes actually moved
//! (f32 message entries plus three f64 scalars in the emulation modes), so
//! the gap between the idealized codec and the carrier encoding stays
//! visible. The wire header carries rates in milli-bits, which represents
//! schedules on the default 0.05-bit grid exactly.

pub mod wire;

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::rd::RdModel;
use crate::sim::{self, ProblemInstance, QuantMode, RowMatrix};
use crate::sevo::ProblemParams;
use crate::{Error, Result};
use wire::{MsgType, WireMessage};

/// Message carrier between workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    /// In-process channels (default).
    Channel,
    /// Localhost TCP sockets with the identical frame bytes.
    Socket,
}

#[derive(Debug, Clone, Copy)]
pub struct ClusterOptions {
    pub quant_mode: QuantMode,
    pub rd_model: RdModel,
    pub transport: Transport,
    /// How long the fusion center waits for a node's frame in one round.
    pub round_timeout: Duration,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            quant_mode: QuantMode::GaussianEmulation,
            rd_model: RdModel::GaussianClosedForm,
            transport: Transport::Channel,
            round_timeout: Duration::from_secs(30),
        }
    }
}

/// Byte accounting for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerRow {
    pub iteration: u16,
    /// `P * ceil(N * R_t / 8)` at the scheduled rate.
    pub billed_uplink_bytes: u64,
    /// Sum of node payload bytes actually transported.
    pub transported_uplink_bytes: u64,
    /// Broadcast payload plus header, counted once per round.
    pub downlink_bytes: u64,
}

/// Accumulated per-round byte accounting.
#[derive(Debug, Clone, Default)]
pub struct ByteLedger {
    pub rows: Vec<LedgerRow>,
}

impl ByteLedger {
    pub fn billed_uplink_total(&self) -> u64 {
        self.rows.iter().map(|r| r.billed_uplink_bytes).sum()
    }

    pub fn transported_uplink_total(&self) -> u64 {
        self.rows.iter().map(|r| r.transported_uplink_bytes).sum()
    }

    pub fn downlink_total(&self) -> u64 {
        self.rows.iter().map(|r| r.downlink_bytes).sum()
    }
}

/// Result of one synchronous round.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    /// Denoised estimate after the round.
    pub fused_estimate: Vec<f64>,
    /// `|r|^2 / M` aggregated from the node reports (NaN until the first
    /// transmitting round).
    pub sigma_hat_sq: f64,
    /// Mean measured per-node distortion.
    pub distortion: f64,
    /// Mean honest rate reported by the nodes.
    pub honest_rate_bits: f64,
    pub ledger_row: LedgerRow,
}

/// Liveness counters, returned at shutdown.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClusterStats {
    /// Node -> fusion estimate frames received.
    pub node_frames: u64,
    /// Fusion -> node broadcasts sent (one per round).
    pub broadcasts: u64,
}

enum FusionCommand {
    RunRound { iteration: u16, rate_milli_bits: u32 },
}

struct RoundData {
    fused_estimate: Vec<f64>,
    sigma_hat_sq: f64,
    distortion: f64,
    honest_rate_bits: f64,
    transported_uplink_bytes: u64,
    downlink_bytes: u64,
}

/// Handle driving a spawned cluster round by round.
pub struct ClusterHandle {
    cmd_tx: Option<Sender<FusionCommand>>,
    reply_rx: Receiver<Result<RoundData>>,
    fusion_join: Option<JoinHandle<ClusterStats>>,
    node_joins: Vec<JoinHandle<()>>,
    ledger: ByteLedger,
    next_iteration: u16,
    failed: bool,
    n: usize,
    nodes: usize,
    round_timeout: Duration,
}

/// Starts `P` node workers (each holding only its row slice) and one fusion
/// worker. On a worker startup failure every already-started worker is shut
/// down before the error returns.
pub fn spawn_cluster(instance: &ProblemInstance, nodes: usize, options: ClusterOptions) -> Result<ClusterHandle> {
    if nodes == 0 || nodes != instance.partition.len() || nodes != instance.params.nodes {
        return Err(Error::Cluster(format!(
            "instance is partitioned for {} nodes, asked to spawn {nodes}",
            instance.partition.len()
        )));
    }
    if nodes > u16::MAX as usize {
        return Err(Error::Cluster(format!("node count {nodes} exceeds the wire limit")));
    }
    let n = instance.n();
    let m = instance.m();

    // Per-node transports plus the fusion-side endpoints.
    let mut node_specs: Vec<NodeTransportSpec> = Vec::with_capacity(nodes);
    let fusion_transport = match options.transport {
        Transport::Channel => {
            let (to_fusion, from_nodes) = mpsc::channel::<Vec<u8>>();
            let mut to_nodes = Vec::with_capacity(nodes);
            for _ in 0..nodes {
                let (tx, rx) = mpsc::channel::<Vec<u8>>();
                to_nodes.push(tx);
                node_specs.push(NodeTransportSpec::Channel {
                    rx,
                    tx: to_fusion.clone(),
                });
            }
            FusionTransportInit::Channel { to_nodes, from_nodes }
        }
        Transport::Socket => {
            let listener = TcpListener::bind("127.0.0.1:0")
                .map_err(|e| Error::Cluster(format!("failed to bind listener: {e}")))?;
            let addr = listener
                .local_addr()
                .map_err(|e| Error::Cluster(format!("no local addr: {e}")))?;
            for _ in 0..nodes {
                node_specs.push(NodeTransportSpec::Socket { addr });
            }
            FusionTransportInit::Socket { listener }
        }
    };

    let mut node_joins: Vec<JoinHandle<()>> = Vec::with_capacity(nodes);
    for (node_id, spec) in node_specs.into_iter().enumerate() {
        let range = instance.partition[node_id].clone();
        let worker = NodeWorker {
            node_id: node_id as u16,
            nodes,
            n,
            params: instance.params,
            matrix: instance.matrix.slice_rows(range.clone()),
            y: instance.y[range.clone()].to_vec(),
            residual: instance.y[range].to_vec(),
            quant_mode: options.quant_mode,
            rd_model: options.rd_model,
            seed: instance.seed,
        };
        let spawned = thread::Builder::new()
            .name(format!("mpamp-node-{node_id}"))
            .spawn(move || worker.run(spec));
        match spawned {
            Ok(j) => node_joins.push(j),
            Err(e) => {
                // Partial shutdown: dropping the transport endpoints ends the
                // already-running workers, then join them.
                drop(fusion_transport);
                for j in node_joins {
                    let _ = j.join();
                }
                return Err(Error::Cluster(format!("failed to spawn node {node_id}: {e}")));
            }
        }
    }

    let transport = match fusion_transport.finish(nodes, options.round_timeout) {
        Ok(t) => t,
        Err(e) => {
            for j in node_joins {
                let _ = j.join();
            }
            return Err(e);
        }
    };

    let (cmd_tx, cmd_rx) = mpsc::channel::<FusionCommand>();
    let (reply_tx, reply_rx) = mpsc::channel::<Result<RoundData>>();
    let fusion = FusionWorker {
        nodes,
        n,
        m,
        params: instance.params,
        quant_mode: options.quant_mode,
        x_hat: vec![0.0; n],
        g: 0.0,
        last_sigma: f64::NAN,
        transport,
        cmd_rx,
        reply_tx,
        timeout: options.round_timeout,
        stats: ClusterStats::default(),
    };
    let fusion_join = match thread::Builder::new().name("mpamp-fusion".into()).spawn(move || fusion.run()) {
        Ok(j) => j,
        Err(e) => {
            // The worker (and its transport endpoints) dropped with the failed
            // spawn, so the nodes are already unblocking.
            for j in node_joins {
                let _ = j.join();
            }
            return Err(Error::Cluster(format!("failed to spawn fusion worker: {e}")));
        }
    };

    Ok(ClusterHandle {
        cmd_tx: Some(cmd_tx),
        reply_rx,
        fusion_join: Some(fusion_join),
        node_joins,
        ledger: ByteLedger::default(),
        next_iteration: 1,
        failed: false,
        n,
        nodes,
        round_timeout: options.round_timeout,
    })
}

impl ClusterHandle {
    /// Runs one synchronous round at the scheduled rate. Iterations must be
    /// called as 1, 2, 3, ... (the handshake reserves 0).
    pub fn run_round(&mut self, iteration: u16, rate_bits: f64) -> Result<RoundOutput> {
        if self.failed {
            return Err(Error::Cluster("cluster failed in an earlier round".into()));
        }
        if iteration == 0 || iteration != self.next_iteration {
            return Err(Error::Protocol(format!(
                "out-of-order iteration index: got {iteration}, expected {}",
                self.next_iteration
            )));
        }
        if rate_bits.is_nan() || rate_bits < 0.0 {
            return Err(Error::domain(format!("rate must be nonnegative, got {rate_bits}")));
        }
        let cmd_tx = self
            .cmd_tx
            .as_ref()
            .ok_or_else(|| Error::Cluster("cluster already shut down".into()))?;
        cmd_tx
            .send(FusionCommand::RunRound {
                iteration,
                rate_milli_bits: wire::rate_to_milli_bits(rate_bits),
            })
            .map_err(|_| Error::Cluster("fusion worker hung up".into()))?;
        let reply = self
            .reply_rx
            .recv_timeout(self.round_timeout + Duration::from_secs(10))
            .map_err(|_| Error::Cluster("fusion worker did not reply".into()))?;
        let data = match reply {
            Ok(d) => d,
            Err(e) => {
                self.failed = true;
                return Err(e);
            }
        };
        let row = LedgerRow {
            iteration,
            billed_uplink_bytes: sim::billed_uplink_bytes(self.n, rate_bits, self.nodes),
            transported_uplink_bytes: data.transported_uplink_bytes,
            downlink_bytes: data.downlink_bytes,
        };
        self.ledger.rows.push(row);
        self.next_iteration += 1;
        Ok(RoundOutput {
            fused_estimate: data.fused_estimate,
            sigma_hat_sq: data.sigma_hat_sq,
            distortion: data.distortion,
            honest_rate_bits: data.honest_rate_bits,
            ledger_row: row,
        })
    }

    pub fn ledger(&self) -> &ByteLedger {
        &self.ledger
    }

    /// Stops every worker and returns the liveness counters.
    pub fn shutdown(mut self) -> Result<ClusterStats> {
        self.cmd_tx.take();
        let stats = match self.fusion_join.take() {
            Some(j) => j
                .join()
                .map_err(|_| Error::Cluster("fusion worker panicked".into()))?,
            None => ClusterStats::default(),
        };
        for j in std::mem::take(&mut self.node_joins) {
            j.join().map_err(|_| Error::Cluster("node worker panicked".into()))?;
        }
        Ok(stats)
    }
}

impl Drop for ClusterHandle {
    fn drop(&mut self) {
        self.cmd_tx.take();
        if let Some(j) = self.fusion_join.take() {
            let _ = j.join();
        }
        for j in std::mem::take(&mut self.node_joins) {
            let _ = j.join();
        }
    }
}

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

enum NodeTransportSpec {
    Channel {
        rx: Receiver<Vec<u8>>,
        tx: Sender<Vec<u8>>,
    },
    Socket {
        addr: std::net::SocketAddr,
    },
}

enum NodeTransport {
    Channel {
        rx: Receiver<Vec<u8>>,
        tx: Sender<Vec<u8>>,
    },
    Socket {
        stream: TcpStream,
    },
}

impl NodeTransport {
    fn recv(&mut self) -> Option<Vec<u8>> {
        match self {
            NodeTransport::Channel { rx, .. } => rx.recv().ok(),
            NodeTransport::Socket { stream } => read_frame(stream).ok().flatten(),
        }
    }

    fn send(&mut self, frame: Vec<u8>) -> std::result::Result<(), ()> {
        match self {
            NodeTransport::Channel { tx, .. } => tx.send(frame).map_err(|_| ()),
            NodeTransport::Socket { stream } => stream.write_all(&frame).map_err(|_| ()),
        }
    }
}

enum FusionTransportInit {
    Channel {
        to_nodes: Vec<Sender<Vec<u8>>>,
        from_nodes: Receiver<Vec<u8>>,
    },
    Socket {
        listener: TcpListener,
    },
}

impl FusionTransportInit {
    /// Completes the fusion-side endpoints; for sockets this accepts the `P`
    /// connections and orders them by the node id in each hello frame.
    fn finish(self, nodes: usize, timeout: Duration) -> Result<FusionTransport> {
        match self {
            FusionTransportInit::Channel { to_nodes, from_nodes } => Ok(FusionTransport::Channel {
                to_nodes,
                from_nodes,
            }),
            FusionTransportInit::Socket { listener } => {
                listener
                    .set_nonblocking(true)
                    .map_err(|e| Error::Cluster(format!("listener: {e}")))?;
                let deadline = Instant::now() + timeout.max(Duration::from_secs(5));
                let mut streams: Vec<Option<TcpStream>> = (0..nodes).map(|_| None).collect();
                let mut connected = 0;
                while connected < nodes {
                    if Instant::now() > deadline {
                        return Err(Error::Cluster(format!(
                            "only {connected} of {nodes} nodes connected before the deadline"
                        )));
                    }
                    match listener.accept() {
                        Ok((stream, _)) => {
                            stream
                                .set_nonblocking(false)
                                .map_err(|e| Error::Cluster(format!("stream: {e}")))?;
                            stream
                                .set_read_timeout(Some(timeout.max(Duration::from_secs(5))))
                                .map_err(|e| Error::Cluster(format!("stream: {e}")))?;
                            let mut stream = stream;
                            let hello = read_frame(&mut stream)
                                .map_err(|e| Error::Cluster(format!("handshake read: {e}")))?
                                .ok_or_else(|| Error::Cluster("node closed during handshake".into()))?;
                            let msg = wire::decode_message(&hello)?;
                            let id = msg.node_id as usize;
                            if msg.iteration != 0 || id >= nodes || streams[id].is_some() {
                                return Err(Error::Cluster(format!("invalid handshake from node {id}")));
                            }
                            streams[id] = Some(stream);
                            connected += 1;
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            thread::sleep(Duration::from_millis(1));
                        }
                        Err(e) => return Err(Error::Cluster(format!("accept: {e}"))),
                    }
                }
                Ok(FusionTransport::Socket {
                    streams: streams.into_iter().map(|s| s.unwrap()).collect(),
                })
            }
        }
    }
}

enum FusionTransport {
    Channel {
        to_nodes: Vec<Sender<Vec<u8>>>,
        from_nodes: Receiver<Vec<u8>>,
    },
    Socket {
        streams: Vec<TcpStream>,
    },
}

impl FusionTransport {
    fn send_to(&mut self, node: usize, frame: Vec<u8>) -> Result<()> {
        match self {
            FusionTransport::Channel { to_nodes, .. } => to_nodes[node]
                .send(frame)
                .map_err(|_| Error::Cluster(format!("node {node} hung up"))),
            FusionTransport::Socket { streams } => streams[node]
                .write_all(&frame)
                .map_err(|e| Error::Cluster(format!("write to node {node}: {e}"))),
        }
    }

    /// Collects exactly one estimate frame per node for round `t`, returned
    /// in node-id order. A missing frame after the timeout is an error
    /// naming the node.
    fn collect_estimates(&mut self, nodes: usize, t: u16, timeout: Duration) -> Result<Vec<WireMessage>> {
        let mut slots: Vec<Option<WireMessage>> = (0..nodes).map(|_| None).collect();
        match self {
            FusionTransport::Channel { from_nodes, .. } => {
                let deadline = Instant::now() + timeout;
                let mut filled = 0;
                while filled < nodes {
                    let now = Instant::now();
                    let remaining = deadline.saturating_duration_since(now);
                    if remaining.is_zero() {
                        break;
                    }
                    match from_nodes.recv_timeout(remaining) {
                        Ok(frame) => {
                            let msg = wire::decode_message(&frame)?;
                            validate_estimate(&msg, nodes, t)?;
                            let id = msg.node_id as usize;
                            if slots[id].is_some() {
                                return Err(Error::Protocol(format!(
                                    "round {t}: duplicate frame from node {id}"
                                )));
                            }
                            slots[id] = Some(msg);
                            filled += 1;
                        }
                        Err(RecvTimeoutError::Timeout) => break,
                        Err(RecvTimeoutError::Disconnected) => {
                            return Err(Error::Cluster("all nodes hung up".into()))
                        }
                    }
                }
            }
            FusionTransport::Socket { streams } => {
                for (id, stream) in streams.iter_mut().enumerate() {
                    stream
                        .set_read_timeout(Some(timeout))
                        .map_err(|e| Error::Cluster(format!("stream {id}: {e}")))?;
                    match read_frame(stream) {
                        Ok(Some(frame)) => {
                            let msg = wire::decode_message(&frame)?;
                            validate_estimate(&msg, nodes, t)?;
                            if msg.node_id as usize != id {
                                return Err(Error::Protocol(format!(
                                    "round {t}: stream {id} carried a frame from node {}",
                                    msg.node_id
                                )));
                            }
                            slots[id] = Some(msg);
                        }
                        Ok(None) | Err(_) => {}
                    }
                }
            }
        }
        if let Some(missing) = slots.iter().position(|s| s.is_none()) {
            return Err(Error::Protocol(format!(
                "round {t}: no message from node {missing} within {timeout:?}"
            )));
        }
        Ok(slots.into_iter().map(|s| s.unwrap()).collect())
    }
}

fn validate_estimate(msg: &WireMessage, nodes: usize, t: u16) -> Result<()> {
    if msg.msg_type != MsgType::NodeEstimate {
        return Err(Error::Protocol(format!("round {t}: unexpected broadcast frame")));
    }
    if msg.iteration != t {
        return Err(Error::Protocol(format!(
            "out-of-order iteration index: node {} sent {}, round is {t}",
            msg.node_id, msg.iteration
        )));
    }
    if msg.node_id as usize >= nodes {
        return Err(Error::Protocol(format!(
            "round {t}: node id {} out of range",
            msg.node_id
        )));
    }
    Ok(())
}

/// Reads one length-delimited frame; `None` on a clean shutdown.
fn read_frame(stream: &mut TcpStream) -> std::io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; wire::HEADER_LEN];
    if let Err(e) = stream.read_exact(&mut header) {
        return if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Ok(None)
        } else {
            Err(e)
        };
    }
    let payload_len = u32::from_le_bytes([header[14], header[15], header[16], header[17]]) as usize;
    let mut frame = header.to_vec();
    frame.resize(wire::HEADER_LEN + payload_len, 0);
    stream.read_exact(&mut frame[wire::HEADER_LEN..])?;
    Ok(Some(frame))
}

// ---------------------------------------------------------------------------
// Workers
// ---------------------------------------------------------------------------

struct NodeWorker {
    node_id: u16,
    nodes: usize,
    n: usize,
    params: ProblemParams,
    matrix: RowMatrix,
    y: Vec<f64>,
    residual: Vec<f64>,
    quant_mode: QuantMode,
    rd_model: RdModel,
    seed: u64,
}

impl NodeWorker {
    fn run(mut self, spec: NodeTransportSpec) {
        let mut transport = match spec {
            NodeTransportSpec::Channel { rx, tx } => NodeTransport::Channel { rx, tx },
            NodeTransportSpec::Socket { addr } => {
                let Ok(stream) = TcpStream::connect(addr) else { return };
                let hello = WireMessage {
                    msg_type: MsgType::NodeEstimate,
                    iteration: 0,
                    node_id: self.node_id,
                    rate_milli_bits: 0,
                    payload: Vec::new(),
                };
                let mut t = NodeTransport::Socket { stream };
                if t.send(wire::encode_message(&hello).expect("hello frame")).is_err() {
                    return;
                }
                t
            }
        };
        let mut expected: u16 = 1;
        while let Some(frame) = transport.recv() {
            let Ok(msg) = wire::decode_message(&frame) else { break };
            if msg.msg_type != MsgType::Broadcast || msg.iteration != expected {
                break; // protocol desync; the fusion center times out and names us
            }
            let Some(reply) = self.process_round(&msg) else { break };
            let Ok(bytes) = wire::encode_message(&reply) else { break };
            if transport.send(bytes).is_err() {
                break;
            }
            expected = expected.wrapping_add(1);
        }
    }

    fn process_round(&mut self, msg: &WireMessage) -> Option<WireMessage> {
        let rate = wire::milli_bits_to_rate(msg.rate_milli_bits);
        if rate == 0.0 {
            // No-op round: nothing computed, empty payload on the wire.
            return Some(WireMessage {
                msg_type: MsgType::NodeEstimate,
                iteration: msg.iteration,
                node_id: self.node_id,
                rate_milli_bits: 0,
                payload: Vec::new(),
            });
        }
        let (g, x) = wire::decode_broadcast_payload(&msg.payload, self.n).ok()?;
        if msg.iteration > 1 {
            let ax = sim::mat_vec(&self.matrix, &x, 0..self.matrix.rows());
            let coef = g / self.params.kappa;
            for ((ri, axi), yi) in self.residual.iter_mut().zip(&ax).zip(&self.y) {
                *ri = yi - axi + coef * *ri;
            }
        }
        let norm = self.residual.iter().map(|v| v * v).sum::<f64>();
        let mut message = sim::mat_t_vec(&self.matrix, &self.residual, 0..self.matrix.rows());
        let inv_p = 1.0 / self.nodes as f64;
        for (f, xi) in message.iter_mut().zip(&x) {
            *f += xi * inv_p;
        }
        let source_var = message.iter().map(|v| v * v).sum::<f64>() / self.n as f64;
        let target = self
            .rd_model
            .distortion_for_source_variance(rate, source_var, &self.params)
            .ok()?;
        let outcome = sim::quantize_message(
            &mut message,
            rate,
            self.quant_mode,
            target,
            sim::quant_seed(self.seed, msg.iteration as usize, self.nodes, self.node_id as usize),
        );
        let wide = self.quant_mode == QuantMode::Lossless;
        Some(WireMessage {
            msg_type: MsgType::NodeEstimate,
            iteration: msg.iteration,
            node_id: self.node_id,
            rate_milli_bits: msg.rate_milli_bits,
            payload: wire::encode_node_payload(
                norm,
                outcome.distortion,
                outcome.honest_rate_bits,
                &message,
                wide,
            ),
        })
    }
}

struct FusionWorker {
    nodes: usize,
    n: usize,
    m: usize,
    params: ProblemParams,
    quant_mode: QuantMode,
    x_hat: Vec<f64>,
    g: f64,
    last_sigma: f64,
    transport: FusionTransport,
    cmd_rx: Receiver<FusionCommand>,
    reply_tx: Sender<Result<RoundData>>,
    timeout: Duration,
    stats: ClusterStats,
}

impl FusionWorker {
    fn run(mut self) -> ClusterStats {
        while let Ok(FusionCommand::RunRound {
            iteration,
            rate_milli_bits,
        }) = self.cmd_rx.recv()
        {
            let result = self.round(iteration, rate_milli_bits);
            if self.reply_tx.send(result).is_err() {
                break;
            }
        }
        self.stats
    }

    fn round(&mut self, t: u16, rate_milli_bits: u32) -> Result<RoundData> {
        let payload = wire::encode_broadcast_payload(self.g, &self.x_hat);
        let downlink = (wire::HEADER_LEN + payload.len()) as u64;
        for node in 0..self.nodes {
            let msg = WireMessage {
                msg_type: MsgType::Broadcast,
                iteration: t,
                node_id: node as u16,
                rate_milli_bits,
                payload: payload.clone(),
            };
            self.transport.send_to(node, wire::encode_message(&msg)?)?;
        }
        self.stats.broadcasts += 1;

        let frames = self.transport.collect_estimates(self.nodes, t, self.timeout)?;
        self.stats.node_frames += frames.len() as u64;
        let transported: u64 = frames.iter().map(|f| f.payload.len() as u64).sum();

        if wire::milli_bits_to_rate(rate_milli_bits) == 0.0 {
            for f in &frames {
                if !f.payload.is_empty() {
                    return Err(Error::Protocol(format!(
                        "round {t}: node {} sent payload in a zero-rate round",
                        f.node_id
                    )));
                }
            }
            return Ok(RoundData {
                fused_estimate: self.x_hat.clone(),
                sigma_hat_sq: self.last_sigma,
                distortion: 0.0,
                honest_rate_bits: 0.0,
                transported_uplink_bytes: transported,
                downlink_bytes: downlink,
            });
        }

        let wide = self.quant_mode == QuantMode::Lossless;
        let mut fused = vec![0.0f64; self.n];
        let mut norm_sum = 0.0;
        let mut dist_sum = 0.0;
        let mut honest_sum = 0.0;
        for frame in &frames {
            // Frames arrive ordered by node id, so the sums are deterministic.
            let (norm, dist, honest, entries) = wire::decode_node_payload(&frame.payload, self.n, wide)?;
            norm_sum += norm;
            dist_sum += dist;
            honest_sum += honest;
            for (acc, v) in fused.iter_mut().zip(&entries) {
                *acc += v;
            }
        }
        let sigma_hat = norm_sum / self.m as f64;
        self.last_sigma = sigma_hat;
        let d_mean = dist_sum / self.nodes as f64;
        let (x_next, g_next) = sim::fused_denoise(&fused, &self.params, sigma_hat + self.nodes as f64 * d_mean)?;
        self.x_hat = x_next;
        self.g = g_next;
        Ok(RoundData {
            fused_estimate: self.x_hat.clone(),
            sigma_hat_sq: sigma_hat,
            distortion: d_mean,
            honest_rate_bits: honest_sum / self.nodes as f64,
            transported_uplink_bytes: transported,
            downlink_bytes: downlink,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Prior;
    use crate::sim::{generate_instance, run_centralized_amp, run_mpamp};

    fn params(nodes: usize) -> ProblemParams {
        let prior = Prior::bernoulli_gaussian(0.1).unwrap();
        ProblemParams::new(prior, 0.4, 1.0 / 400.0, nodes).unwrap()
    }

    fn mse_of(estimate: &[f64], truth: &[f64]) -> f64 {
        estimate
            .iter()
            .zip(truth)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / truth.len() as f64
    }

    #[test]
    fn single_node_cluster_matches_centralized_amp() {
        let p = params(1);
        let inst = generate_instance(&p, 300, 40).unwrap();
        let central = run_centralized_amp(&inst, 5).unwrap();
        let mut cluster = spawn_cluster(
            &inst,
            1,
            ClusterOptions {
                quant_mode: QuantMode::Lossless,
                ..ClusterOptions::default()
            },
        )
        .unwrap();
        let mut last = Vec::new();
        for t in 1..=5u16 {
            last = cluster.run_round(t, f64::INFINITY).unwrap().fused_estimate;
        }
        cluster.shutdown().unwrap();
        let max_abs = last
            .iter()
            .zip(&central.final_estimate)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_abs < 1e-12, "max-abs {max_abs}");
    }

    #[test]
    fn cluster_matches_simulator_in_every_quant_mode() {
        for nodes in [2usize, 4] {
            for mode in [QuantMode::Lossless, QuantMode::GaussianEmulation, QuantMode::UniformScalar] {
                let p = params(nodes);
                let inst = generate_instance(&p, 600, 51).unwrap();
                let rates = [1.5, 2.5, 3.0];
                let sim_rec = run_mpamp(&inst, &rates, mode, &RdModel::GaussianClosedForm).unwrap();
                let mut cluster = spawn_cluster(
                    &inst,
                    nodes,
                    ClusterOptions {
                        quant_mode: mode,
                        ..ClusterOptions::default()
                    },
                )
                .unwrap();
                for (i, &r) in rates.iter().enumerate() {
                    let out = cluster.run_round((i + 1) as u16, r).unwrap();
                    let mse = mse_of(&out.fused_estimate, &inst.x);
                    assert!(
                        (mse - sim_rec.mse[i]).abs() < 1e-12,
                        "P={nodes} mode={mode:?} t={}: {mse} vs {}",
                        i + 1,
                        sim_rec.mse[i]
                    );
                    if mode != QuantMode::Lossless {
                        assert!((out.sigma_hat_sq - sim_rec.sigma_hat_sq[i]).abs() < 1e-12);
                        assert!((out.distortion - sim_rec.distortion[i]).abs() < 1e-12);
                    }
                }
                cluster.shutdown().unwrap();
            }
        }
    }

    #[test]
    fn zero_rate_rounds_are_free_and_hold_state() {
        let p = params(2);
        let inst = generate_instance(&p, 400, 7).unwrap();
        let mut cluster = spawn_cluster(&inst, 2, ClusterOptions::default()).unwrap();
        let first = cluster.run_round(1, 2.0).unwrap();
        let second = cluster.run_round(2, 0.0).unwrap();
        assert_eq!(first.fused_estimate, second.fused_estimate);
        assert_eq!(second.ledger_row.billed_uplink_bytes, 0);
        assert_eq!(second.ledger_row.transported_uplink_bytes, 0);
        let third = cluster.run_round(3, 2.0).unwrap();
        assert!(mse_of(&third.fused_estimate, &inst.x) < mse_of(&first.fused_estimate, &inst.x));
        cluster.shutdown().unwrap();
    }

    #[test]
    fn billed_bytes_follow_the_ceil_formula() {
        let p = params(4);
        let inst = generate_instance(&p, 1000, 3).unwrap();
        let mut cluster = spawn_cluster(&inst, 4, ClusterOptions::default()).unwrap();
        for (i, &r) in [1.0, 2.0, 3.0].iter().enumerate() {
            cluster.run_round((i + 1) as u16, r).unwrap();
        }
        let rows = cluster.ledger().rows.clone();
        assert_eq!(rows[0].billed_uplink_bytes, 4 * 125);
        assert_eq!(rows[1].billed_uplink_bytes, 4 * 250);
        assert_eq!(rows[2].billed_uplink_bytes, 4 * 375);
        assert_eq!(cluster.ledger().billed_uplink_total(), 3000);
        cluster.shutdown().unwrap();
    }

    #[test]
    fn liveness_counters_match_round_count() {
        let p = params(3);
        let inst = generate_instance(&p, 300, 5).unwrap();
        let mut cluster = spawn_cluster(&inst, 3, ClusterOptions::default()).unwrap();
        for t in 1..=3u16 {
            cluster.run_round(t, 1.0).unwrap();
        }
        let stats = cluster.shutdown().unwrap();
        assert_eq!(stats.node_frames, 9);
        assert_eq!(stats.broadcasts, 3);
    }

    #[test]
    fn out_of_order_rounds_are_rejected() {
        let p = params(2);
        let inst = generate_instance(&p, 200, 6).unwrap();
        let mut cluster = spawn_cluster(&inst, 2, ClusterOptions::default()).unwrap();
        cluster.run_round(1, 1.0).unwrap();
        match cluster.run_round(3, 1.0) {
            Err(Error::Protocol(msg)) => assert!(msg.contains("out-of-order"), "{msg}"),
            other => panic!("expected protocol error, got {other:?}"),
        }
        cluster.shutdown().unwrap();
    }

    #[test]
    fn missing_node_is_named_after_timeout() {
        // Drive the collector directly: two of three nodes reply.
        let (tx, rx) = mpsc::channel::<Vec<u8>>();
        let mut transport = FusionTransport::Channel {
            to_nodes: Vec::new(),
            from_nodes: rx,
        };
        for id in [0u16, 2] {
            let msg = WireMessage {
                msg_type: MsgType::NodeEstimate,
                iteration: 1,
                node_id: id,
                rate_milli_bits: 0,
                payload: Vec::new(),
            };
            tx.send(wire::encode_message(&msg).unwrap()).unwrap();
        }
        match transport.collect_estimates(3, 1, Duration::from_millis(50)) {
            Err(Error::Protocol(msg)) => assert!(msg.contains("node 1"), "{msg}"),
            other => panic!("expected timeout naming node 1, got {other:?}"),
        }
    }

    #[test]
    fn socket_transport_matches_channel_transport() {
        let p = params(2);
        let inst = generate_instance(&p, 200, 12).unwrap();
        let mut by_transport = Vec::new();
        for transport in [Transport::Channel, Transport::Socket] {
            let mut cluster = spawn_cluster(
                &inst,
                2,
                ClusterOptions {
                    transport,
                    ..ClusterOptions::default()
                },
            )
            .unwrap();
            let mut estimates = Vec::new();
            for (i, &r) in [2.0, 3.0].iter().enumerate() {
                estimates.push(cluster.run_round((i + 1) as u16, r).unwrap().fused_estimate);
            }
            cluster.shutdown().unwrap();
            by_transport.push(estimates);
        }
        assert_eq!(by_transport[0], by_transport[1]);
    }

    #[test]
    fn node_slices_cover_exactly_their_partition() {
        let p = params(3);
        let inst = generate_instance(&p, 90, 1).unwrap();
        for range in &inst.partition {
            let slice = inst.matrix.slice_rows(range.clone());
            assert_eq!(slice.rows(), range.len());
            for (local, global) in (0..slice.rows()).zip(range.clone()) {
                assert_eq!(slice.row(local), inst.matrix.row(global));
            }
        }
    }
}
