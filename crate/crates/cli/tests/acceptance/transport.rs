//! Transport equivalence, decoder fuzzing and the privacy capture scan.

use std::io::{BufRead, BufReader, Cursor};
use std::net::TcpListener;
use std::panic::catch_unwind;
use std::process::{Child, Command, Stdio};
use std::thread;

use fcncp::federation::{
    decode_message, encode_message, read_frame, run_client, serve_tcp, ClientNode, Direction, FrameLog, Message,
    ModeBlock, RunConfig, ShutdownReason, TcpLink,
};
use fcncp::synth::build_simulation_pair;
use fcncp::Matrix;
use rand::Rng;

use crate::support::{arg, ensure, fcncp, rng, Check};

fn spawn(args: &[&str]) -> Child {
    Command::new(env!("CARGO_BIN_EXE_fcncp"))
        .args(args)
        .env("FCNCP_LOG", "error")
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .expect("spawn fcncp")
}

fn loopback_matches_in_process() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let config = data.join("sim.toml");
    ensure(fcncp(&["synth", "--out", arg(&data), "--seed", "3"]).status.success(), || "synth failed".into())?;
    let local = dir.path().join("local");
    let run = fcncp(&["fed", "run", "--config", arg(&config), "--out", arg(&local)]);
    ensure(run.status.success(), || format!("fed run exited {:?}", run.status.code()))?;

    let server_out = dir.path().join("server");
    let mut server = spawn(&["fed", "server", "--config", arg(&config), "--listen", "127.0.0.1:0", "--out", arg(&server_out)]);
    let mut line = String::new();
    let mut server_stdout = BufReader::new(server.stdout.take().unwrap());
    server_stdout.read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .ok_or_else(|| format!("unexpected server output {line:?}"))?
        .to_string();
    let clients: Vec<_> = (1..=2)
        .map(|k| {
            let out = dir.path().join(format!("tcp{k}"));
            let child = spawn(&[
                "fed", "client", "--config", arg(&config), "--client", &k.to_string(), "--connect", &addr, "--out", arg(&out),
            ]);
            (child, out)
        })
        .collect();
    let mut outs = Vec::new();
    for (mut child, out) in clients {
        let status = child.wait().unwrap();
        ensure(status.success(), || format!("client exited {:?}", status.code()))?;
        outs.push(out);
    }
    std::io::copy(&mut server_stdout, &mut std::io::sink()).unwrap();
    let status = server.wait().unwrap();
    ensure(status.success(), || format!("server exited {:?}", status.code()))?;
    let mut files = 0;
    for (k, out) in outs.iter().enumerate() {
        for m in 1..=3 {
            let a = std::fs::read(local.join(format!("client{}/mode_{m}.csv", k + 1))).unwrap();
            let b = std::fs::read(out.join(format!("mode_{m}.csv"))).unwrap();
            ensure(a == b, || format!("client {} mode {m} CSV differs between transports", k + 1))?;
            files += 1;
        }
    }
    Ok(format!("{files} factor CSVs byte-identical"))
}

fn sample_frames() -> Vec<Vec<u8>> {
    let block = |mode, rows, cols| ModeBlock::new(mode, Matrix::from_fn(rows, cols, |i, j| (i * cols + j) as f64 * 0.25));
    [
        Message::Hello { client: 1 },
        Message::Factors { blocks: vec![block(0, 4, 3), block(1, 5, 3)] },
        Message::Locations { indices: vec![2, 0] },
        Message::PublicUpload { round: 3, blocks: vec![block(0, 4, 2)] },
        Message::GlobalBcast { round: 4, blocks: vec![block(1, 5, 2)] },
        Message::RoundStatus { round: 4, rel_err: 0.125 },
        Message::Shutdown { reason: ShutdownReason::Converged },
    ]
    .iter()
    .map(|m| encode_message(m).unwrap())
    .collect()
}

fn fuzz_decoder() -> Result<String, String> {
    let seeds = sample_frames();
    let mut r = rng(7);
    let mut rejected = 0;
    for case in 0..1000 {
        let mut frame = seeds[case % seeds.len()].clone();
        match case % 4 {
            0 => {
                for _ in 0..r.random_range(1..6) {
                    let i = r.random_range(0..frame.len());
                    frame[i] ^= 1 << r.random_range(0..8);
                }
            }
            1 => frame.truncate(r.random_range(0..frame.len())),
            2 => {
                let i = r.random_range(0..frame.len());
                frame[i] = r.random();
                frame.extend((0..r.random_range(0..16)).map(|_| r.random::<u8>()));
            }
            _ => frame = (0..r.random_range(0..64)).map(|_| r.random()).collect(),
        }
        let outcome = catch_unwind(|| {
            let a = decode_message(&frame).is_err();
            let b = read_frame(&mut Cursor::new(&frame)).and_then(|f| decode_message(&f)).is_err();
            a || b
        });
        match outcome {
            Ok(err) => rejected += err as usize,
            Err(_) => return Err(format!("decoder panicked on fuzz case {case}")),
        }
    }
    Ok(format!("1000 fuzzed frames, {rejected} rejected, no panics"))
}

pub fn transport_equivalence() -> Check {
    let a = loopback_matches_in_process()?;
    let b = fuzz_decoder()?;
    Ok(format!("{a}; {b}"))
}

/// Full TCP run with every server-side frame captured, then scanned.
pub fn privacy_capture() -> Check {
    let pair = build_simulation_pair(11).map_err(|e| e.to_string())?;
    let config = RunConfig::new(vec![2, 2, 0], [3, 3], [21, 22]);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let log = FrameLog::new();
    let tensors = pair.tensors.clone();
    let outcome = thread::scope(|s| {
        let server_log = log.clone();
        let server = s.spawn(|| serve_tcp(&listener, config.server_settings(), Some(server_log)));
        let clients: Vec<_> = tensors
            .into_iter()
            .enumerate()
            .map(|(k, t)| {
                let settings = config.client_settings(k);
                let addr = addr.clone();
                s.spawn(move || {
                    let node = ClientNode::new(t, settings)?;
                    run_client(&mut TcpLink::connect(&addr)?, node)
                })
            })
            .collect();
        for c in clients {
            c.join().unwrap().map_err(|e| e.to_string())?;
        }
        server.join().unwrap().map_err(|e| e.to_string())
    })?;
    ensure(outcome.aborted.is_none(), || format!("run aborted: {:?}", outcome.aborted))?;

    let frames = log.frames();
    let tensor_dims: Vec<Vec<usize>> = pair.tensors.iter().map(|t| t.dims().to_vec()).collect();
    let tensor_len = pair.tensors.iter().map(|t| t.len()).min().unwrap();
    let uncoupled = 2;
    let forbidden_shapes: Vec<(usize, usize)> = (0..2).map(|k| (tensor_dims[k][uncoupled], config.clients[k].rank)).collect();
    let mut blocks = 0;
    let (mut sent, mut received) = (0, 0);
    for (dir, frame) in &frames {
        match dir {
            Direction::Sent => sent += 1,
            Direction::Received => received += 1,
        }
        ensure(frame.len() < 8 * tensor_len, || format!("frame of {} bytes could hold a full tensor", frame.len()))?;
        let msg = decode_message(frame).map_err(|e| e.to_string())?;
        for b in msg.blocks() {
            blocks += 1;
            ensure(b.mode != uncoupled, || format!("{:?} carries uncoupled mode {}", msg.kind(), b.mode + 1))?;
            let shape = b.columns.shape();
            ensure(!forbidden_shapes.contains(&shape), || format!("{:?} block shaped like an uncoupled factor {shape:?}", msg.kind()))?;
            ensure(
                !tensor_dims.iter().any(|d| d.iter().product::<usize>() == shape.0 * shape.1),
                || format!("{:?} block has as many entries as a full tensor", msg.kind()),
            )?;
        }
    }
    ensure(sent > 0 && received > 0, || "capture is empty".into())?;

    // a block of order 3 cannot be expressed on the wire
    let mut frame = encode_message(&Message::Factors { blocks: vec![ModeBlock::new(0, Matrix::zeros(2, 2))] }).unwrap();
    frame[6 + 4 + 4] = 3;
    ensure(decode_message(&frame).is_err(), || "decoder accepted an order-3 block".into())?;
    Ok(format!("{} frames ({sent} sent, {received} received), {blocks} blocks, none tensor- or uncoupled-shaped", frames.len()))
}
