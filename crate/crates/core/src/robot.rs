//! A simulated manufacturing machine driven by a line-oriented command
//! language: one uppercase command per line, one `OK <detail>` or
//! `ERR <code>` reply per line.

use std::fmt;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verb {
    LoadImage,
    Feed,
    Manufacture,
    Clear,
    Status,
}

impl Verb {
    fn takes_arg(self) -> bool {
        matches!(self, Verb::LoadImage | Verb::Feed)
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verb::LoadImage => "LOAD_IMAGE",
            Verb::Feed => "FEED",
            Verb::Manufacture => "MANUFACTURE",
            Verb::Clear => "CLEAR",
            Verb::Status => "STATUS",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Command {
    pub verb: Verb,
    pub arg: Option<String>,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.arg {
            Some(a) => write!(f, "{} {a}", self.verb),
            None => write!(f, "{}", self.verb),
        }
    }
}

impl FromStr for Command {
    type Err = ErrCode;

    fn from_str(line: &str) -> Result<Self, ErrCode> {
        let mut words = line.split_ascii_whitespace();
        let verb = match words.next().ok_or(ErrCode::BadCmd)? {
            "LOAD_IMAGE" => Verb::LoadImage,
            "FEED" => Verb::Feed,
            "MANUFACTURE" => Verb::Manufacture,
            "CLEAR" => Verb::Clear,
            "STATUS" => Verb::Status,
            _ => return Err(ErrCode::BadCmd),
        };
        let arg = words.next().map(str::to_string);
        if words.next().is_some() || verb.takes_arg() != arg.is_some() {
            return Err(ErrCode::BadArg);
        }
        if arg.as_ref().is_some_and(|a| !a.chars().all(|c| c.is_ascii_graphic())) {
            return Err(ErrCode::BadArg);
        }
        Ok(Command { verb, arg })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrCode {
    NoImage,
    NoMaterial,
    BadArg,
    BadCmd,
    Busy,
}

impl fmt::Display for ErrCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrCode::NoImage => "NO_IMAGE",
            ErrCode::NoMaterial => "NO_MATERIAL",
            ErrCode::BadArg => "BAD_ARG",
            ErrCode::BadCmd => "BAD_CMD",
            ErrCode::Busy => "BUSY",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Ok(String),
    Err(ErrCode),
}

impl Reply {
    pub fn is_ok(&self) -> bool {
        matches!(self, Reply::Ok(_))
    }

    /// Last word of an `OK` detail, e.g. the piece id of `OK PIECE pc1`.
    pub fn value(&self) -> Option<&str> {
        match self {
            Reply::Ok(d) => d.split_ascii_whitespace().last(),
            Reply::Err(_) => None,
        }
    }
}

impl fmt::Display for Reply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reply::Ok(d) if d.is_empty() => f.write_str("OK"),
            Reply::Ok(d) => write!(f, "OK {d}"),
            Reply::Err(c) => write!(f, "ERR {c}"),
        }
    }
}

impl FromStr for Reply {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, String> {
        let line = line.trim_end();
        if line == "OK" {
            return Ok(Reply::Ok(String::new()));
        }
        if let Some(d) = line.strip_prefix("OK ") {
            return Ok(Reply::Ok(d.to_string()));
        }
        let code = match line.strip_prefix("ERR ") {
            Some("NO_IMAGE") => ErrCode::NoImage,
            Some("NO_MATERIAL") => ErrCode::NoMaterial,
            Some("BAD_ARG") => ErrCode::BadArg,
            Some("BAD_CMD") => ErrCode::BadCmd,
            Some("BUSY") => ErrCode::Busy,
            _ => return Err(format!("malformed reply `{line}`")),
        };
        Ok(Reply::Err(code))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Idle,
    Fault,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RobotState {
    pub loaded_image: Option<String>,
    pub material: Option<String>,
    pub bin: Vec<String>,
    pub waste: u32,
    pub mode: Mode,
}

/// Pure transition function of the machine.
pub fn execute(state: &RobotState, cmd: &Command) -> (RobotState, Reply) {
    let mut s = state.clone();
    let reply = match cmd.verb {
        Verb::LoadImage => {
            let img = cmd.arg.clone().unwrap_or_default();
            let r = Reply::Ok(format!("LOADED {img}"));
            s.loaded_image = Some(img);
            r
        }
        Verb::Feed => {
            let m = cmd.arg.clone().unwrap_or_default();
            let r = Reply::Ok(format!("FED {m}"));
            s.material = Some(m);
            r
        }
        Verb::Manufacture => {
            if s.loaded_image.is_none() {
                s.mode = Mode::Fault;
                Reply::Err(ErrCode::NoImage)
            } else if s.material.is_none() {
                s.mode = Mode::Fault;
                Reply::Err(ErrCode::NoMaterial)
            } else {
                s.material = None;
                let piece = format!("pc{}", s.bin.len() + 1);
                s.bin.push(piece.clone());
                s.waste += 1;
                Reply::Ok(format!("PIECE {piece}"))
            }
        }
        Verb::Clear => {
            s.waste = 0;
            s.mode = Mode::Idle;
            Reply::Ok("CLEARED".into())
        }
        Verb::Status => Reply::Ok(format!(
            "STATUS image={} material={} pieces={} waste={} mode={}",
            s.loaded_image.as_deref().unwrap_or("-"),
            s.material.as_deref().unwrap_or("-"),
            s.bin.len(),
            s.waste,
            match s.mode {
                Mode::Idle => "idle",
                Mode::Fault => "fault",
            }
        )),
    };
    (s, reply)
}

/// Anything that answers command lines: the in-process simulator or a TCP
/// connection to one.
pub trait RobotPort: Send {
    fn send(&mut self, line: &str) -> io::Result<Reply>;

    /// Snapshot of the machine, when the port can observe it.
    fn state(&self) -> Option<RobotState> {
        None
    }
}

#[derive(Debug, Clone, Default)]
pub struct RobotSim {
    pub state: RobotState,
}

impl RobotSim {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn handle_line(&mut self, line: &str) -> Reply {
        match line.parse::<Command>() {
            Ok(cmd) => {
                let (s, r) = execute(&self.state, &cmd);
                self.state = s;
                r
            }
            Err(code) => Reply::Err(code),
        }
    }
}

impl RobotPort for RobotSim {
    fn send(&mut self, line: &str) -> io::Result<Reply> {
        Ok(self.handle_line(line))
    }

    fn state(&self) -> Option<RobotState> {
        Some(self.state.clone())
    }
}

/// Serves `sim` on `listener`, one thread per connection. While one
/// connection is open every line from another one is answered `ERR BUSY`.
pub fn serve_tcp(listener: TcpListener, sim: Arc<Mutex<RobotSim>>) -> JoinHandle<()> {
    let busy = Arc::new(AtomicBool::new(false));
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let sim = Arc::clone(&sim);
            let busy = Arc::clone(&busy);
            thread::spawn(move || {
                let owner = busy.compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst).is_ok();
                let _ = connection(stream, &sim, owner);
                if owner {
                    busy.store(false, Ordering::SeqCst);
                }
            });
        }
    })
}

fn connection(stream: TcpStream, sim: &Mutex<RobotSim>, owner: bool) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        let reply = if owner {
            sim.lock().expect("robot lock").handle_line(&line)
        } else {
            Reply::Err(ErrCode::Busy)
        };
        writeln!(writer, "{reply}")?;
    }
    Ok(())
}

/// Client side of the TCP text mode.
pub struct TcpRobot {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpRobot {
    pub fn connect(addr: impl std::net::ToSocketAddrs) -> io::Result<Self> {
        let writer = TcpStream::connect(addr)?;
        let reader = BufReader::new(writer.try_clone()?);
        Ok(TcpRobot { reader, writer })
    }
}

impl RobotPort for TcpRobot {
    fn send(&mut self, line: &str) -> io::Result<Reply> {
        writeln!(self.writer, "{line}")?;
        let mut buf = String::new();
        if self.reader.read_line(&mut buf)? == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "robot closed the connection"));
        }
        buf.parse().map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manufacture_needs_an_image() {
        let mut sim = RobotSim::new();
        assert_eq!(sim.handle_line("MANUFACTURE"), Reply::Err(ErrCode::NoImage));
        assert_eq!(sim.state.mode, Mode::Fault);
    }

    #[test]
    fn full_cycle() {
        let mut sim = RobotSim::new();
        assert_eq!(sim.handle_line("LOAD_IMAGE i1").to_string(), "OK LOADED i1");
        assert_eq!(sim.handle_line("MANUFACTURE"), Reply::Err(ErrCode::NoMaterial));
        assert_eq!(sim.handle_line("FEED rm1").to_string(), "OK FED rm1");
        let r = sim.handle_line("MANUFACTURE");
        assert_eq!(r.to_string(), "OK PIECE pc1");
        assert_eq!(r.value(), Some("pc1"));
        assert_eq!(sim.state.waste, 1);
        assert_eq!(sim.state.material, None);
        assert_eq!(sim.handle_line("CLEAR").to_string(), "OK CLEARED");
        assert_eq!(sim.state.waste, 0);
        assert_eq!(sim.state.bin, vec!["pc1"]);
        assert_eq!(sim.state.mode, Mode::Idle);
    }

    #[test]
    fn argument_rules() {
        let mut sim = RobotSim::new();
        assert_eq!(sim.handle_line("LOAD_IMAGE"), Reply::Err(ErrCode::BadArg));
        assert_eq!(sim.handle_line("CLEAR now"), Reply::Err(ErrCode::BadArg));
        assert_eq!(sim.handle_line("FEED a b"), Reply::Err(ErrCode::BadArg));
        assert_eq!(sim.handle_line("load_image x"), Reply::Err(ErrCode::BadCmd));
        assert_eq!(sim.handle_line(""), Reply::Err(ErrCode::BadCmd));
        assert_eq!(sim.state, RobotState::default());
    }

    #[test]
    fn replies_round_trip_through_text() {
        for r in [
            Reply::Ok("PIECE pc1".into()),
            Reply::Ok(String::new()),
            Reply::Err(ErrCode::Busy),
        ] {
            assert_eq!(r.to_string().parse::<Reply>().unwrap(), r);
        }
        assert!("HELLO".parse::<Reply>().is_err());
    }

    #[test]
    fn status_reports_state() {
        let mut sim = RobotSim::new();
        sim.handle_line("LOAD_IMAGE im(pg1)");
        assert_eq!(
            sim.handle_line("STATUS").to_string(),
            "OK STATUS image=im(pg1) material=- pieces=0 waste=0 mode=idle"
        );
    }
}
