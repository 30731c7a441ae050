//! Live-session protocol, independent of any transport.
//!
//! Clients send JSON messages tagged by `type` (`hello`, `command`, `instruction`, `control`,
//! `end`); the server answers with `hello`, `state`, `ack`, `error` and `end`. Every server
//! message carries a sequence number starting at 1. Commands and instructions are queued and
//! applied between ticks in arrival order; the velocity command holds until replaced.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::comms::{ActiveInstruction, CommLevel, Instruction, InstructionKind};
use crate::metrics::EpisodeLog;
use crate::sim::{
    run_trace, Episode, EpisodeConfig, HumanMode, Setup, SimError, Status, TraceAction, TraceEntry,
    World,
};
use crate::worldmap::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAction {
    Pause,
    Resume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientBody {
    Hello {
        #[serde(default)]
        viewer: bool,
    },
    Command {
        vx: f64,
        vy: f64,
    },
    Instruction {
        kind: InstructionKind,
        center: [f64; 2],
        radius: f64,
        #[serde(default)]
        clear: bool,
    },
    Control {
        action: ControlAction,
    },
    End,
}

impl ClientBody {
    fn name(&self) -> &'static str {
        match self {
            ClientBody::Hello { .. } => "hello",
            ClientBody::Command { .. } => "command",
            ClientBody::Instruction { .. } => "instruction",
            ClientBody::Control { .. } => "control",
            ClientBody::End => "end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    /// Client-side sequence number, echoed back as `re`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(flatten)]
    pub body: ClientBody,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateMessage {
    pub seq: u64,
    pub clock: f64,
    pub status: Status,
    /// True when the mask lists are complete rather than additions since the last state.
    pub keyframe: bool,
    pub robot: Pose,
    pub human: Pose,
    pub true_explored: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perceived_explored: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<Vec<Pose>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instructions: Option<Vec<ActiveInstruction>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        seq: u64,
        session: String,
        level: CommLevel,
        dt: f64,
        /// Occupancy in the map file format; cell ids number free cells in row-major order.
        map: serde_json::Value,
    },
    State(StateMessage),
    Ack {
        seq: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        re: Option<u64>,
        of: &'static str,
        #[serde(skip_serializing_if = "Option::is_none")]
        revision: Option<u64>,
    },
    Error {
        seq: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        re: Option<u64>,
        message: String,
    },
    End {
        seq: u64,
        status: Status,
        clock: f64,
    },
}

impl ServerMessage {
    pub fn seq(&self) -> u64 {
        match self {
            ServerMessage::Hello { seq, .. }
            | ServerMessage::Ack { seq, .. }
            | ServerMessage::Error { seq, .. }
            | ServerMessage::End { seq, .. } => *seq,
            ServerMessage::State(s) => s.seq,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// One episode driven by remote clients.
pub struct Session {
    id: String,
    episode: Episode,
    seq: u64,
    queue: VecDeque<ClientMessage>,
    trace: Vec<TraceEntry>,
    sent_true: usize,
    sent_perceived: usize,
    keyframe_due: bool,
    paused: bool,
    ended: bool,
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        world: Arc<World>,
        config: &EpisodeConfig,
        level: CommLevel,
    ) -> Result<Self, SimError> {
        let episode = Episode::new(world, config, Setup::Collab(level), HumanMode::External)?;
        Ok(Self {
            id: id.into(),
            episode,
            seq: 0,
            queue: VecDeque::new(),
            trace: Vec::new(),
            sent_true: 0,
            sent_perceived: 0,
            keyframe_due: true,
            paused: false,
            ended: false,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn level(&self) -> CommLevel {
        self.episode.level()
    }

    pub fn episode(&self) -> &Episode {
        &self.episode
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn set_paused(&mut self, paused: bool) {
        self.paused = paused;
    }

    /// Finished either by the episode's own termination or by an `end` message.
    pub fn is_over(&self) -> bool {
        self.ended
    }

    pub fn log(&self) -> EpisodeLog {
        self.episode.log()
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn error(&mut self, re: Option<u64>, message: impl Into<String>) -> ServerMessage {
        ServerMessage::Error {
            seq: self.next_seq(),
            re,
            message: message.into(),
        }
    }

    /// Greeting for a newly connected client. The next state is sent as a keyframe.
    pub fn hello(&mut self) -> ServerMessage {
        self.keyframe_due = true;
        ServerMessage::Hello {
            seq: self.next_seq(),
            session: self.id.clone(),
            level: self.level(),
            dt: self.episode.config().dt,
            map: self.episode.world().grid.to_json(),
        }
    }

    /// Parses one client frame. Returns an immediate reply for greetings and rejected
    /// messages; everything else is queued and acknowledged by the next [`Session::step`].
    pub fn receive(&mut self, text: &str) -> Option<ServerMessage> {
        let message: ClientMessage = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => return Some(self.error(None, format!("malformed message: {e}"))),
        };
        if self.ended {
            return Some(self.error(message.seq, "session has ended"));
        }
        match &message.body {
            ClientBody::Hello { .. } => return Some(self.hello()),
            ClientBody::Instruction { .. } if !self.level().accepts_instructions() => {
                return Some(self.error(message.seq, SimError::InstructionsRequireL3.to_string()));
            }
            _ => {}
        }
        self.queue.push_back(message);
        None
    }

    /// Applies queued messages, advances one tick unless paused, and reports the new state.
    pub fn step(&mut self) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        if self.ended {
            return out;
        }
        while let Some(message) = self.queue.pop_front() {
            let re = message.seq;
            let of = message.body.name();
            let tick = self.episode.tick_index();
            let reply = match message.body {
                ClientBody::Hello { .. } => None,
                ClientBody::Command { vx, vy } => {
                    if vx.is_finite() && vy.is_finite() {
                        self.episode.set_human_command([vx, vy]);
                        self.trace.push(TraceEntry {
                            tick,
                            action: TraceAction::Command { vx, vy },
                        });
                        Some(Ok(None))
                    } else {
                        Some(Err("command velocity must be finite".to_string()))
                    }
                }
                ClientBody::Instruction {
                    kind,
                    center,
                    radius,
                    clear,
                } => {
                    let instruction = Instruction {
                        kind,
                        center,
                        radius,
                        issued_at: self.episode.clock(),
                    };
                    let result = self.episode.instruct(instruction, clear);
                    if !matches!(
                        result,
                        Err(SimError::InstructionsRequireL3 | SimError::NotRunning)
                    ) {
                        self.trace.push(TraceEntry {
                            tick,
                            action: TraceAction::Instruction { instruction, clear },
                        });
                    }
                    Some(
                        result
                            .map(|report| Some(report.revision))
                            .map_err(|e| e.to_string()),
                    )
                }
                ClientBody::Control { action } => {
                    self.paused = action == ControlAction::Pause;
                    Some(Ok(None))
                }
                ClientBody::End => {
                    self.ended = true;
                    Some(Ok(None))
                }
            };
            match reply {
                Some(Ok(revision)) => out.push(ServerMessage::Ack {
                    seq: self.next_seq(),
                    re,
                    of,
                    revision,
                }),
                Some(Err(message)) => out.push(self.error(re, message)),
                None => {}
            }
            if self.ended {
                break;
            }
        }
        if !self.ended && !self.paused && self.episode.status() == Status::Running {
            self.episode.tick();
        }
        if !self.ended {
            out.push(ServerMessage::State(self.state()));
        }
        if self.episode.status() != Status::Running {
            self.ended = true;
        }
        if self.ended {
            out.push(ServerMessage::End {
                seq: self.next_seq(),
                status: self.episode.status(),
                clock: self.episode.clock(),
            });
        }
        out
    }

    fn state(&mut self) -> StateMessage {
        let keyframe = std::mem::take(&mut self.keyframe_due);
        if keyframe {
            self.sent_true = 0;
            self.sent_perceived = 0;
        }
        let view = self.episode.view();
        let true_order = self.episode.true_explored().order();
        let true_explored = true_order[self.sent_true..].iter().map(|c| c.0).collect();
        self.sent_true = true_order.len();
        let perceived_explored = view.perceived_explored.as_ref().map(|_| {
            let order = self.episode.knowledge().perceived.order();
            let delta = order[self.sent_perceived..].iter().map(|c| c.0).collect();
            self.sent_perceived = order.len();
            delta
        });
        StateMessage {
            seq: self.next_seq(),
            clock: view.clock,
            status: self.episode.status(),
            keyframe,
            robot: view.robot,
            human: view.human,
            true_explored,
            perceived_explored,
            plan: view.plan,
            instructions: view.instructions,
        }
    }
}

/// Re-runs a recorded session without a client.
pub fn replay(
    world: Arc<World>,
    config: &EpisodeConfig,
    level: CommLevel,
    trace: &[TraceEntry],
    last_tick: u64,
) -> Result<EpisodeLog, SimError> {
    run_trace(world, config, Setup::Collab(level), trace, last_tick)
}
