//! Predictor bridge: length-prefixed frames over a child process's stdio.
//!
//! Frame layout (see `docs/bridge-protocol.md`):
//!
//! ```text
//! u32 LE  body length N
//! N bytes body = UTF-8 header lines "key=value\n" ... "\n"  then  f64 LE payload
//! ```
//!
//! The header always starts with `type=` and carries `floats=` giving the
//! payload length in 8-byte values.

use std::collections::HashSet;
use std::io::{self, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::geometry::{Point3, PointSet, Viewpoint};
use crate::predictor::{PredictorRequest, ViewRecord};

pub const PROTOCOL_VERSION: &str = "1";
/// Largest accepted frame body.
pub const MAX_FRAME: usize = 1 << 30;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("response has {got} points, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("bridge i/o: {0}")]
    Io(#[from] io::Error),
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("remote error ({kind}): {message}")]
    Remote { kind: String, message: String },
    #[error("connection closed")]
    Closed,
}

impl BridgeError {
    /// Short stable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            BridgeError::Timeout(_) => "timeout",
            BridgeError::Malformed(_) => "malformed",
            BridgeError::SizeMismatch { .. } => "size_mismatch",
            BridgeError::Io(_) => "io",
            BridgeError::Handshake(_) => "handshake",
            BridgeError::Remote { .. } => "remote",
            BridgeError::Closed => "closed",
        }
    }
}

fn malformed(msg: impl Into<String>) -> BridgeError {
    BridgeError::Malformed(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub header: Vec<(String, String)>,
    pub payload: Vec<f64>,
}

impl Frame {
    pub fn new(kind: &str) -> Self {
        Self {
            header: vec![("type".into(), kind.into())],
            payload: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.header.push((key.into(), value.to_string()));
        self
    }

    pub fn with_payload(mut self, payload: Vec<f64>) -> Self {
        self.payload = payload;
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn kind(&self) -> &str {
        self.get("type").unwrap_or("")
    }

    fn require(&self, key: &str) -> Result<&str, BridgeError> {
        self.get(key).ok_or_else(|| malformed(format!("missing header field '{key}'")))
    }

    fn require_usize(&self, key: &str) -> Result<usize, BridgeError> {
        let v = self.require(key)?;
        v.parse().map_err(|_| malformed(format!("field '{key}' is not a count: '{v}'")))
    }

    fn require_f64(&self, key: &str) -> Result<f64, BridgeError> {
        let v = self.require(key)?;
        v.parse().map_err(|_| malformed(format!("field '{key}' is not a number: '{v}'")))
    }

    /// Body bytes (without the length prefix). `floats` is appended.
    pub fn encode_body(&self) -> Vec<u8> {
        let mut text = String::new();
        for (k, v) in &self.header {
            if k == "floats" {
                continue;
            }
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        text.push_str(&format!("floats={}\n\n", self.payload.len()));
        let mut body = text.into_bytes();
        body.reserve(self.payload.len() * 8);
        for v in &self.payload {
            body.extend_from_slice(&v.to_le_bytes());
        }
        body
    }

    pub fn encode(&self) -> Vec<u8> {
        let body = self.encode_body();
        let mut out = Vec::with_capacity(body.len() + 4);
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn decode_body(body: &[u8]) -> Result<Frame, BridgeError> {
        let end = body
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| malformed("header is not terminated by an empty line"))?;
        let text = std::str::from_utf8(&body[..end + 1]).map_err(|_| malformed("header is not UTF-8"))?;
        let mut header = Vec::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| malformed(format!("header line without '=': '{line}'")))?;
            if k.is_empty() {
                return Err(malformed("empty header key"));
            }
            header.push((k.to_string(), v.to_string()));
        }
        if header.first().map(|(k, _)| k.as_str()) != Some("type") {
            return Err(malformed("first header field must be 'type'"));
        }
        let raw = &body[end + 2..];
        if raw.len() % 8 != 0 {
            return Err(malformed(format!("payload of {} bytes is not a whole number of f64", raw.len())));
        }
        let payload: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let frame = Frame { header, payload };
        let declared = frame.require_usize("floats")?;
        if declared != frame.payload.len() {
            return Err(malformed(format!(
                "header declares {declared} floats, payload holds {}",
                frame.payload.len()
            )));
        }
        Ok(frame)
    }
}

/// Reads one frame body; `Ok(None)` on a clean end of stream.
pub fn read_frame_body<R: Read>(input: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = input.read(&mut len[got..])?;
        if n == 0 {
            return if got == 0 {
                Ok(None)
            } else {
                Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated length prefix"))
            };
        }
        got += n;
    }
    let n = u32::from_le_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {n} bytes exceeds limit")));
    }
    let mut body = vec![0u8; n];
    input.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn write_frame<W: Write>(out: &mut W, frame: &Frame) -> io::Result<()> {
    out.write_all(&frame.encode())?;
    out.flush()
}

fn points_payload(points: &PointSet, out: &mut Vec<f64>) {
    for p in points.iter() {
        out.extend_from_slice(&[p.x, p.y, p.z]);
    }
}

fn payload_points(values: &[f64]) -> PointSet {
    values.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect()
}

pub fn encode_request(request: &PredictorRequest) -> Frame {
    let counts: Vec<String> = request.views.iter().map(|v| v.observation.len().to_string()).collect();
    let (fov, range) = request
        .views
        .first()
        .map(|v| (v.viewpoint.fov_deg, v.viewpoint.max_range))
        .unwrap_or((60.0, 1.0));
    let mut payload = Vec::new();
    for v in &request.views {
        payload.extend_from_slice(&v.viewpoint.pose_row_major());
        points_payload(&v.observation, &mut payload);
    }
    Frame::new("predict")
        .with("version", PROTOCOL_VERSION)
        .with("scene", &request.scene)
        .with("views", request.views.len())
        .with("observations", counts.join(","))
        .with("m", request.m)
        .with("fov", format!("{fov:?}"))
        .with("range", format!("{range:?}"))
        .with_payload(payload)
}

pub fn decode_request(frame: &Frame) -> Result<PredictorRequest, BridgeError> {
    if frame.kind() != "predict" {
        return Err(malformed(format!("expected a predict frame, got '{}'", frame.kind())));
    }
    let views = frame.require_usize("views")?;
    let m = frame.require_usize("m")?;
    let fov = frame.require_f64("fov")?;
    let range = frame.require_f64("range")?;
    let obs = frame.require("observations")?;
    let counts: Vec<usize> = if obs.is_empty() {
        Vec::new()
    } else {
        obs.split(',')
            .map(|s| s.parse().map_err(|_| malformed(format!("bad observation count '{s}'"))))
            .collect::<Result<_, _>>()?
    };
    if counts.len() != views {
        return Err(malformed(format!("{views} views but {} observation counts", counts.len())));
    }
    let needed: usize = counts.iter().map(|n| 12 + 3 * n).sum();
    if needed != frame.payload.len() {
        return Err(malformed(format!("payload holds {} floats, layout needs {needed}", frame.payload.len())));
    }
    let mut at = 0;
    let mut records = Vec::with_capacity(views);
    for n in counts {
        let pose: [f64; 12] = frame.payload[at..at + 12].try_into().expect("12 floats");
        at += 12;
        let observation = payload_points(&frame.payload[at..at + 3 * n]);
        at += 3 * n;
        records.push(ViewRecord {
            viewpoint: Viewpoint::from_pose_row_major(&pose, fov, range),
            observation,
        });
    }
    Ok(PredictorRequest {
        scene: frame.require("scene")?.to_string(),
        views: records,
        m,
    })
}

pub fn encode_prediction(scene: &str, points: &PointSet) -> Frame {
    let mut payload = Vec::with_capacity(points.len() * 3);
    points_payload(points, &mut payload);
    Frame::new("prediction")
        .with("version", PROTOCOL_VERSION)
        .with("scene", scene)
        .with("points", points.len())
        .with_payload(payload)
}

pub fn decode_points(frame: &Frame) -> Result<PointSet, BridgeError> {
    let n = frame.require_usize("points")?;
    if frame.payload.len() != 3 * n {
        return Err(malformed(format!("{n} points declared, payload holds {} floats", frame.payload.len())));
    }
    Ok(payload_points(&frame.payload))
}

pub fn error_frame(kind: &str, message: &str) -> Frame {
    Frame::new("error")
        .with("kind", kind)
        .with("message", message.replace('\n', " "))
}

/// Serves requests from `input` until it closes. Malformed frames are
/// answered with an error frame and the loop keeps going.
pub fn serve<R, W, H>(input: R, mut output: W, mut handler: H) -> io::Result<()>
where
    R: Read,
    W: Write,
    H: FnMut(&PredictorRequest) -> Result<PointSet, String>,
{
    let mut input = BufReader::new(input);
    while let Some(body) = read_frame_body(&mut input)? {
        let reply = match Frame::decode_body(&body) {
            Err(e) => error_frame("malformed", &e.to_string()),
            Ok(frame) => match frame.kind() {
                "hello" => match frame.get("version") {
                    Some(PROTOCOL_VERSION) => Frame::new("hello").with("version", PROTOCOL_VERSION),
                    other => error_frame("version", &format!("unsupported protocol version {other:?}")),
                },
                "echo" => {
                    let mut f = Frame::new("echo");
                    f.header.extend(frame.header.iter().skip(1).cloned());
                    f.with_payload(frame.payload.clone())
                }
                "predict" => match decode_request(&frame) {
                    Err(e) => error_frame("malformed", &e.to_string()),
                    Ok(req) => match handler(&req) {
                        Ok(points) => encode_prediction(&req.scene, &points),
                        Err(msg) => error_frame("internal", &msg),
                    },
                },
                other => error_frame("unsupported", &format!("unknown frame type '{other}'")),
            },
        };
        write_frame(&mut output, &reply)?;
    }
    Ok(())
}

/// Scene id prefix that makes the echo stub misbehave on purpose.
pub const STUB_SHORT: &str = "stub/short";
pub const STUB_STALL: &str = "stub/stall";

/// Echo stub: the prediction is the union of the observations, exact
/// duplicates removed, in first-seen order. `stub/short` answers with one
/// point fewer; `stub/stall` waits two seconds first.
pub fn echo_handler(req: &PredictorRequest) -> Result<PointSet, String> {
    if req.scene == STUB_STALL {
        thread::sleep(Duration::from_secs(2));
    }
    let mut seen = HashSet::new();
    let mut out: Vec<Point3> = Vec::new();
    for v in &req.views {
        for p in v.observation.iter() {
            if seen.insert([p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]) {
                out.push(*p);
            }
        }
    }
    if req.scene == STUB_SHORT {
        out.pop();
    }
    Ok(PointSet::new(out))
}

type Incoming = io::Result<Option<Vec<u8>>>;

/// Client end of the bridge. A reader thread forwards frames through a
/// channel so that every request can be bounded by a timeout; after a
/// timeout the connection is considered out of sync and refuses further use.
pub struct BridgeClient {
    writer: Box<dyn Write + Send>,
    incoming: Receiver<Incoming>,
    timeout: Duration,
    child: Option<Child>,
    broken: bool,
}

impl std::fmt::Debug for BridgeClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeClient")
            .field("timeout", &self.timeout)
            .field("broken", &self.broken)
            .finish_non_exhaustive()
    }
}

impl BridgeClient {
    /// Connects over arbitrary streams and performs the handshake.
    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Result<Self, BridgeError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let item = read_frame_body(&mut reader);
                let done = !matches!(item, Ok(Some(_)));
                if tx.send(item).is_err() || done {
                    break;
                }
            }
        });
        let mut client = Self {
            writer: Box::new(writer),
            incoming: rx,
            timeout,
            child: None,
            broken: false,
        };
        client.handshake()?;
        Ok(client)
    }

    /// Spawns `command` with piped stdin/stdout and connects to it.
    pub fn spawn(command: &mut Command, timeout: Duration) -> Result<Self, BridgeError> {
        let mut child = command.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().ok_or(BridgeError::Closed)?;
        let stdout = child.stdout.take().ok_or(BridgeError::Closed)?;
        match Self::from_streams(stdout, stdin, timeout) {
            Ok(mut c) => {
                c.child = Some(child);
                Ok(c)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    fn handshake(&mut self) -> Result<(), BridgeError> {
        let reply = self
            .exchange(&Frame::new("hello").with("version", PROTOCOL_VERSION).encode())
            .map_err(|e| BridgeError::Handshake(e.to_string()))?;
        match (reply.kind(), reply.get("version")) {
            ("hello", Some(PROTOCOL_VERSION)) => Ok(()),
            (kind, version) => Err(BridgeError::Handshake(format!(
                "unexpected reply type '{kind}' version {version:?}"
            ))),
        }
    }

    /// Sends raw bytes and waits for one reply frame. Error frames become
    /// [`BridgeError::Remote`].
    pub fn exchange_raw(&mut self, bytes: &[u8]) -> Result<Frame, BridgeError> {
        let frame = self.exchange(bytes)?;
        if frame.kind() == "error" {
            return Err(BridgeError::Remote {
                kind: frame.get("kind").unwrap_or("").to_string(),
                message: frame.get("message").unwrap_or("").to_string(),
            });
        }
        Ok(frame)
    }

    fn exchange(&mut self, bytes: &[u8]) -> Result<Frame, BridgeError> {
        if self.broken {
            return Err(BridgeError::Closed);
        }
        if let Err(e) = self.writer.write_all(bytes).and_then(|_| self.writer.flush()) {
            self.broken = true;
            return Err(e.into());
        }
        match self.incoming.recv_timeout(self.timeout) {
            Ok(Ok(Some(body))) => Frame::decode_body(&body),
            Ok(Ok(None)) | Err(RecvTimeoutError::Disconnected) => {
                self.broken = true;
                Err(BridgeError::Closed)
            }
            Ok(Err(e)) => {
                self.broken = true;
                Err(e.into())
            }
            Err(RecvTimeoutError::Timeout) => {
                self.broken = true;
                Err(BridgeError::Timeout(self.timeout))
            }
        }
    }

    pub fn request(&mut self, frame: &Frame) -> Result<Frame, BridgeError> {
        self.exchange_raw(&frame.encode())
    }

    pub fn predict(&mut self, request: &PredictorRequest) -> Result<PointSet, BridgeError> {
        let reply = self.request(&encode_request(request))?;
        if reply.kind() != "prediction" {
            return Err(malformed(format!("expected a prediction frame, got '{}'", reply.kind())));
        }
        let points = decode_points(&reply)?;
        if points.len() != request.m {
            return Err(BridgeError::SizeMismatch {
                expected: request.m,
                got: points.len(),
            });
        }
        Ok(points)
    }

    /// Round-trips `points` through the server's echo verb.
    pub fn echo(&mut self, points: &PointSet) -> Result<PointSet, BridgeError> {
        let mut payload = Vec::new();
        points_payload(points, &mut payload);
        let reply = self.request(&Frame::new("echo").with("points", points.len()).with_payload(payload))?;
        if reply.kind() != "echo" {
            return Err(malformed(format!("expected an echo frame, got '{}'", reply.kind())));
        }
        decode_points(&reply)
    }
}

impl Drop for BridgeClient {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            // Closing stdin lets a well-behaved server exit on its own.
            self.writer = Box::new(io::sink());
            for _ in 0..20 {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConformanceCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Points exercising awkward float encodings.
pub fn awkward_points(n: usize) -> PointSet {
    let specials = [
        0.0,
        -0.0,
        f64::MIN_POSITIVE,
        5e-324,
        f64::MAX,
        -f64::MAX,
        1.0 / 3.0,
        std::f64::consts::PI,
        -1e-300,
        123456789.123456789,
    ];
    (0..n)
        .map(|i| {
            let f = |j: usize| {
                let v = specials[(i * 3 + j) % specials.len()];
                if i % 7 == 0 { v } else { v * (i as f64 + 0.5).sin() }
            };
            Point3::new(f(0), f(1), f(2))
        })
        .collect()
}

fn bits_equal(a: &PointSet, b: &PointSet) -> bool {
    a.len() == b.len()
        && a.iter().zip(b.iter()).all(|(p, q)| (0..3).all(|k| p[k].to_bits() == q[k].to_bits()))
}

fn sample_request(m: usize) -> PredictorRequest {
    let space = crate::geometry::ViewingSpace::new(Point3::origin(), 0.5).expect("valid space");
    let views = space
        .sample_viewpoints(2, 11)
        .expect("n >= 1")
        .into_iter()
        .enumerate()
        .map(|(i, viewpoint)| ViewRecord {
            viewpoint,
            observation: (0..5).map(|j| Point3::new(0.01 * j as f64, 0.02 * i as f64, 0.03)).collect(),
        })
        .collect();
    PredictorRequest {
        scene: "conformance".into(),
        views,
        m,
    }
}

/// Protocol conformance checks against a connected server.
pub fn conformance_suite(client: &mut BridgeClient) -> Vec<ConformanceCheck> {
    let mut out = Vec::new();
    let mut check = |name: &'static str, result: Result<(), String>| {
        out.push(ConformanceCheck {
            name,
            passed: result.is_ok(),
            detail: result.err().unwrap_or_default(),
        });
    };

    check(
        "handshake",
        client
            .request(&Frame::new("hello").with("version", PROTOCOL_VERSION))
            .map_err(|e| e.to_string())
            .and_then(|f| match f.get("version") {
                Some(PROTOCOL_VERSION) => Ok(()),
                v => Err(format!("server answered version {v:?}")),
            }),
    );

    let big = awkward_points(4096);
    check(
        "echo_4096_bit_exact",
        client.echo(&big).map_err(|e| e.to_string()).and_then(|back| {
            if bits_equal(&big, &back) {
                Ok(())
            } else {
                Err("echoed floats differ".into())
            }
        }),
    );

    let predict = |client: &mut BridgeClient| -> Result<(), String> {
        // m equals the observation count so the echo stub conforms too.
        let req = sample_request(10);
        let pts = client.predict(&req).map_err(|e| e.to_string())?;
        if pts.is_finite() {
            Ok(())
        } else {
            Err("prediction holds non-finite points".into())
        }
    };
    check("predict_sized_response", predict(client));

    let mut garbage = Vec::new();
    let body = b"not a header at all";
    garbage.extend_from_slice(&(body.len() as u32).to_le_bytes());
    garbage.extend_from_slice(body);
    check(
        "malformed_frame_rejected",
        match client.exchange_raw(&garbage) {
            Err(BridgeError::Remote { .. }) => Ok(()),
            Ok(f) => Err(format!("server accepted garbage with a '{}' frame", f.kind())),
            Err(e) => Err(e.to_string()),
        },
    );
    check("served_after_malformed", predict(client));

    let mut lying = Frame::new("echo").with("points", 1).with_payload(vec![1.0, 2.0, 3.0]).encode();
    // Drop the last float and fix up the length prefix: the header now
    // overstates the payload.
    lying.truncate(lying.len() - 8);
    let n = (lying.len() - 4) as u32;
    lying[..4].copy_from_slice(&n.to_le_bytes());
    check(
        "payload_length_mismatch_rejected",
        match client.exchange_raw(&lying) {
            Err(BridgeError::Remote { .. }) => Ok(()),
            Ok(f) => Err(format!("server accepted a short payload with a '{}' frame", f.kind())),
            Err(e) => Err(e.to_string()),
        },
    );
    check(
        "unknown_type_rejected",
        match client.request(&Frame::new("frobnicate")) {
            Err(BridgeError::Remote { .. }) => Ok(()),
            Ok(f) => Err(format!("server accepted an unknown type with a '{}' frame", f.kind())),
            Err(e) => Err(e.to_string()),
        },
    );
    check("served_at_end", predict(client));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn echo_client(timeout: Duration) -> BridgeClient {
        let (server_in, client_out) = io::pipe().unwrap();
        let (client_in, server_out) = io::pipe().unwrap();
        thread::spawn(move || serve(server_in, server_out, echo_handler));
        BridgeClient::from_streams(client_in, client_out, timeout).unwrap()
    }

    #[test]
    fn frame_layout_is_fixed() {
        let f = Frame::new("echo").with("points", 0).with_payload(vec![1.0]);
        let bytes = f.encode();
        let body = b"type=echo\npoints=0\nfloats=1\n\n";
        assert_eq!(&bytes[..4], &((body.len() + 8) as u32).to_le_bytes());
        assert_eq!(&bytes[4..4 + body.len()], body);
        assert_eq!(&bytes[4 + body.len()..], &1.0f64.to_le_bytes());
    }

    #[test]
    fn request_round_trip() {
        let req = sample_request(10);
        let back = decode_request(&Frame::decode_body(&encode_request(&req).encode_body()).unwrap()).unwrap();
        assert_eq!(back, req);
    }

    #[test]
    fn echo_stub_returns_union() {
        let mut c = echo_client(DEFAULT_TIMEOUT);
        let mut req = sample_request(0);
        // Repeat one point of view 0 in view 1; the union keeps it once.
        let dup = req.views[0].observation.points[0];
        req.views[1].observation.points.push(dup);
        let expected: Vec<Point3> = req.views[0]
            .observation
            .iter()
            .chain(req.views[1].observation.iter().take(5))
            .copied()
            .collect();
        req.m = expected.len();
        assert_eq!(c.predict(&req).unwrap().points, expected);
    }

    #[test]
    fn echo_1024_points_bit_exact() {
        let mut c = echo_client(DEFAULT_TIMEOUT);
        let pts = awkward_points(1024);
        assert!(bits_equal(&c.echo(&pts).unwrap(), &pts));
    }

    #[test]
    fn short_response_is_size_mismatch() {
        let mut c = echo_client(DEFAULT_TIMEOUT);
        let mut req = sample_request(10);
        req.scene = STUB_SHORT.into();
        let err = c.predict(&req).unwrap_err();
        assert!(matches!(err, BridgeError::SizeMismatch { expected: 10, got: 9 }), "{err}");
    }

    #[test]
    fn stall_times_out_and_poisons() {
        let mut c = echo_client(Duration::from_millis(200));
        let mut req = sample_request(10);
        req.scene = STUB_STALL.into();
        assert!(matches!(c.predict(&req), Err(BridgeError::Timeout(_))));
        assert!(matches!(c.predict(&sample_request(10)), Err(BridgeError::Closed)));
    }

    #[test]
    fn conformance_passes_against_stub() {
        let mut c = echo_client(DEFAULT_TIMEOUT);
        let checks = conformance_suite(&mut c);
        assert_eq!(checks.len(), 8);
        for ch in &checks {
            assert!(ch.passed, "{}: {}", ch.name, ch.detail);
        }
    }

    #[test]
    fn bad_handshake_is_reported() {
        let (server_in, client_out) = io::pipe().unwrap();
        let (client_in, mut server_out) = io::pipe().unwrap();
        thread::spawn(move || {
            let mut r = BufReader::new(server_in);
            let _ = read_frame_body(&mut r);
            let _ = write_frame(&mut server_out, &Frame::new("hello").with("version", "9"));
        });
        let err = BridgeClient::from_streams(client_in, client_out, DEFAULT_TIMEOUT).unwrap_err();
        assert!(matches!(err, BridgeError::Handshake(_)));
    }

    proptest! {
        #[test]
        fn point_frames_are_lossless(bits in proptest::collection::vec(any::<u64>(), 0..90)) {
            let vals: Vec<f64> = bits.iter().map(|b| f64::from_bits(*b)).filter(|v| v.is_finite()).collect();
            let ps = payload_points(&vals);
            let f = encode_prediction("s", &ps);
            let back = decode_points(&Frame::decode_body(&f.encode_body()).unwrap()).unwrap();
            prop_assert!(bits_equal(&ps, &back));
        }
    }
}
