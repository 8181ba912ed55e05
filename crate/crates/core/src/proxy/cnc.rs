//! Talker announcements and the CNC stub.
//!
//! Wire format: each message is a 4-byte big-endian length `N` followed by
//! `N` bytes of UTF-8 JSON (at most [`MAX_FRAME`]). The JSON object carries
//! a `type` of `announce`, `admit` or `deny`; see `docs/cnc-wire-protocol.md`.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::StreamKey;
use crate::descriptor::TrafficDescriptor;
use crate::error::{Error, Result};
use crate::qosmap::QosRequirements;

pub const MAX_FRAME: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TalkerAnnouncement {
    pub key: StreamKey,
    pub descriptor: TrafficDescriptor,
    pub qos: QosRequirements,
    pub app: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum CncResponse {
    Admitted { vlan_id: u16, pcp: u8 },
    Denied { reason: String },
}

impl CncResponse {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CncResponse::Admitted { vlan_id, pcp } => {
                if !(1..=4094).contains(&vlan_id) {
                    return Err(Error::Protocol(format!("VLAN id {vlan_id} outside 1..=4094")));
                }
                if pcp > 7 {
                    return Err(Error::Protocol(format!("PCP {pcp} outside 0..=7")));
                }
                Ok(())
            }
            CncResponse::Denied { .. } => Ok(()),
        }
    }
}

/// Admission control endpoint.
pub trait Cnc {
    fn announce(&mut self, announcement: &TalkerAnnouncement) -> Result<CncResponse>;
}

/// How a stub CNC answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum CncPolicy {
    Admit { vlan_id: u16, pcp: u8 },
    Deny { reason: String },
    /// Answers with a frame that is not a valid response (for testing).
    Garble,
}

impl CncPolicy {
    pub fn admit(vlan_id: u16, pcp: u8) -> Self {
        CncPolicy::Admit { vlan_id, pcp }
    }

    /// `None` for [`CncPolicy::Garble`].
    fn answer(&self, id: u64) -> Option<WireMessage> {
        match self {
            CncPolicy::Admit { vlan_id, pcp } => Some(WireMessage::Admit {
                id,
                vlan_id: *vlan_id,
                pcp: *pcp,
            }),
            CncPolicy::Deny { reason } => Some(WireMessage::Deny {
                id,
                reason: reason.clone(),
            }),
            CncPolicy::Garble => None,
        }
    }
}

/// In-process CNC that answers every announcement with a fixed policy.
#[derive(Debug, Clone)]
pub struct StaticCnc {
    policy: CncPolicy,
    received: Vec<TalkerAnnouncement>,
}

impl StaticCnc {
    pub fn new(policy: CncPolicy) -> Self {
        StaticCnc {
            policy,
            received: Vec::new(),
        }
    }

    pub fn received(&self) -> &[TalkerAnnouncement] {
        &self.received
    }
}

impl Cnc for StaticCnc {
    fn announce(&mut self, a: &TalkerAnnouncement) -> Result<CncResponse> {
        self.received.push(a.clone());
        match &self.policy {
            CncPolicy::Admit { vlan_id, pcp } => {
                let r = CncResponse::Admitted {
                    vlan_id: *vlan_id,
                    pcp: *pcp,
                };
                r.validate()?;
                Ok(r)
            }
            CncPolicy::Deny { reason } => Ok(CncResponse::Denied {
                reason: reason.clone(),
            }),
            CncPolicy::Garble => Err(Error::Protocol("garbled response".into())),
        }
    }
}

/// Messages on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Announce {
        id: u64,
        announcement: TalkerAnnouncement,
    },
    Admit {
        id: u64,
        vlan_id: u16,
        pcp: u8,
    },
    Deny {
        id: u64,
        reason: String,
    },
}

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> io::Result<()> {
    if payload.len() > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
    }
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(Error::Protocol(format!("frame of {n} bytes exceeds the limit")));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

pub fn encode(msg: &WireMessage) -> Vec<u8> {
    serde_json::to_vec(msg).expect("wire messages always serialize")
}

pub fn decode(payload: &[u8]) -> Result<WireMessage> {
    serde_json::from_slice(payload).map_err(|e| Error::Protocol(format!("bad message: {e}")))
}

/// CNC reached over TCP; one connection per announcement.
#[derive(Debug, Clone)]
pub struct TcpCncClient {
    addr: SocketAddr,
    timeout: Duration,
    next_id: u64,
}

impl TcpCncClient {
    pub fn new(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self> {
        let addr = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| Error::Config("CNC address resolves to nothing".into()))?;
        Ok(TcpCncClient {
            addr,
            timeout,
            next_id: 1,
        })
    }
}

impl Cnc for TcpCncClient {
    fn announce(&mut self, a: &TalkerAnnouncement) -> Result<CncResponse> {
        let id = self.next_id;
        self.next_id += 1;
        let mut s = TcpStream::connect_timeout(&self.addr, self.timeout)?;
        s.set_read_timeout(Some(self.timeout))?;
        s.set_write_timeout(Some(self.timeout))?;
        write_frame(
            &mut s,
            &encode(&WireMessage::Announce {
                id,
                announcement: a.clone(),
            }),
        )?;
        let payload = read_frame(&mut s)?
            .ok_or_else(|| Error::Protocol("connection closed before a response".into()))?;
        let response = match decode(&payload)? {
            WireMessage::Admit { id: rid, vlan_id, pcp } if rid == id => {
                CncResponse::Admitted { vlan_id, pcp }
            }
            WireMessage::Deny { id: rid, reason } if rid == id => CncResponse::Denied { reason },
            other => {
                return Err(Error::Protocol(format!("unexpected response {other:?}")));
            }
        };
        response.validate()?;
        Ok(response)
    }
}

/// Threaded TCP CNC stub; stops when dropped.
pub struct CncStubServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl CncStubServer {
    pub fn spawn(bind: impl ToSocketAddrs, policy: CncPolicy) -> Result<Self> {
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(s) => {
                        if let Err(e) = serve(s, &policy) {
                            log::warn!("CNC stub: {e}");
                        }
                    }
                    Err(e) => log::warn!("CNC stub accept: {e}"),
                }
            }
        });
        Ok(CncStubServer {
            addr,
            stop,
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server is stopped by another thread or process.
    pub fn wait(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(&mut self) {
        if let Some(h) = self.handle.take() {
            self.stop.store(true, Ordering::SeqCst);
            // unblock accept()
            let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
            let _ = h.join();
        }
    }
}

impl Drop for CncStubServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve(mut s: TcpStream, policy: &CncPolicy) -> Result<()> {
    s.set_read_timeout(Some(Duration::from_secs(5)))?;
    while let Some(payload) = read_frame(&mut s)? {
        let id = match decode(&payload)? {
            WireMessage::Announce { id, announcement } => {
                log::info!("CNC stub: announcement for {}", announcement.key);
                id
            }
            other => return Err(Error::Protocol(format!("stub expected announce, got {other:?}"))),
        };
        match policy.answer(id) {
            Some(m) => write_frame(&mut s, &encode(&m))?,
            None => write_frame(&mut s, br#"{"type":"admit","id":"x"}"#)?,
        }
    }
    Ok(())
}
