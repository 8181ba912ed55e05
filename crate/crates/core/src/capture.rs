//! Packet capture files: JSONL packet records and classic PCAP.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::net::IpAddr;
use std::path::Path;

use etherparse::{NetSlice, SlicedPacket, TransportSlice};
use pcap_file::pcap::PcapReader;
use pcap_file::DataLink;

use crate::error::{Error, Result};
use crate::proxy::{PacketRecord, Protocol};

pub fn read_packets_jsonl(r: impl BufRead) -> Result<Vec<PacketRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PacketRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("packet line {}: {e}", i + 1)))?;
        out.push(p);
    }
    Ok(out)
}

pub fn write_packets_jsonl(packets: &[PacketRecord], mut w: impl Write) -> Result<()> {
    for p in packets {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct PcapReadout {
    pub packets: Vec<PacketRecord>,
    /// Frames that are not IPv4/IPv6 carrying UDP or TCP.
    pub skipped: usize,
}

/// Ethernet PCAP to packet records. The frame size is the original
/// on-wire length.
pub fn read_pcap(r: impl Read) -> Result<PcapReadout> {
    let mut reader = PcapReader::new(r).map_err(|e| Error::Data(format!("pcap: {e}")))?;
    if reader.header().datalink != DataLink::ETHERNET {
        return Err(Error::Data(format!(
            "pcap link type {:?} is not Ethernet",
            reader.header().datalink
        )));
    }
    let mut out = PcapReadout::default();
    while let Some(pkt) = reader.next_packet() {
        let pkt = pkt.map_err(|e| Error::Data(format!("pcap: {e}")))?;
        let t_ns = u64::try_from(pkt.timestamp.as_nanos())
            .map_err(|_| Error::Data("pcap timestamp out of range".into()))?;
        let len = u16::try_from(pkt.orig_len).unwrap_or(u16::MAX);
        match parse_frame(&pkt.data) {
            Some((src, dst, proto, sport, dport)) => out.packets.push(PacketRecord {
                t_ns,
                src,
                dst,
                proto,
                sport,
                dport,
                len,
            }),
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

fn parse_frame(data: &[u8]) -> Option<(IpAddr, IpAddr, Protocol, u16, u16)> {
    let sliced = SlicedPacket::from_ethernet(data).ok()?;
    let (src, dst): (IpAddr, IpAddr) = match sliced.net? {
        NetSlice::Ipv4(ip) => (ip.header().source_addr().into(), ip.header().destination_addr().into()),
        NetSlice::Ipv6(ip) => (ip.header().source_addr().into(), ip.header().destination_addr().into()),
        NetSlice::Arp(_) => return None,
    };
    match sliced.transport? {
        TransportSlice::Udp(u) => Some((src, dst, Protocol::Udp, u.source_port(), u.destination_port())),
        TransportSlice::Tcp(t) => Some((src, dst, Protocol::Tcp, t.source_port(), t.destination_port())),
        _ => None,
    }
}

/// `.pcap` files are parsed as PCAP, everything else as packet JSONL.
pub fn read_capture(path: &Path) -> Result<Vec<PacketRecord>> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pcap")) {
        let r = read_pcap(BufReader::new(file))?;
        if r.skipped > 0 {
            log::info!("{}: skipped {} non-UDP/TCP frames", path.display(), r.skipped);
        }
        Ok(r.packets)
    } else {
        read_packets_jsonl(BufReader::new(file))
    }
}

pub fn write_capture(packets: &[PacketRecord], path: &Path) -> Result<()> {
    write_packets_jsonl(packets, BufWriter::new(File::create(path)?))
}
